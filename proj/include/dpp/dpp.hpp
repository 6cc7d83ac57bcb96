#pragma once

#include "dpp/cli.hpp"
#include "dpp/config.hpp"
#include "dpp/corrector.hpp"
#include "dpp/env.hpp"
#include "dpp/env_io.hpp"
#include "dpp/error.hpp"
#include "dpp/heatkernel.hpp"
#include "dpp/isoperimetry.hpp"
#include "dpp/lattice.hpp"
#include "dpp/network2d.hpp"
#include "dpp/parallel.hpp"
#include "dpp/rng.hpp"
#include "dpp/stats.hpp"
#include "dpp/walk.hpp"
