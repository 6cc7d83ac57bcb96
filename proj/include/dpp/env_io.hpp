#pragma once

#include <zlib.h>

#include <cstdint>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include "dpp/env.hpp"
#include "dpp/error.hpp"
#include "json.hpp"

namespace dpp {

// Binary layout:
//   "DPP1" | u8 d | d x u32 LE sides | u8 flags | u64 LE seed |
//   row-major occupancy bits (LSB first, byte padded) | u32 LE CRC-32 of the bits

namespace detail {

inline void put_le(std::vector<std::uint8_t>& out, std::uint64_t v, int bytes) {
  for (int i = 0; i < bytes; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

inline std::uint64_t get_le(const std::uint8_t* p, int bytes) {
  std::uint64_t v = 0;
  for (int i = 0; i < bytes; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  return v;
}

inline std::uint32_t crc32_of(const std::uint8_t* data, std::size_t n) {
  uLong crc = ::crc32(0L, Z_NULL, 0);
  while (n > 0) {
    auto chunk = static_cast<uInt>(n > (1u << 30) ? (1u << 30) : n);
    crc = ::crc32(crc, data, chunk);
    data += chunk;
    n -= chunk;
  }
  return static_cast<std::uint32_t>(crc);
}

}  // namespace detail

inline std::vector<std::uint8_t> save(const Environment& env) {
  const auto& w = env.window();
  std::vector<std::uint8_t> out = {'D', 'P', 'P', '1'};
  out.push_back(static_cast<std::uint8_t>(w.dim()));
  for (auto s : w.sides()) detail::put_le(out, s, 4);
  std::uint8_t flags = (env.origin_conditioned() ? 1 : 0) | (env.strict_validated() ? 2 : 0);
  out.push_back(flags);
  detail::put_le(out, env.seed(), 8);
  std::size_t start = out.size();
  std::size_t nbytes = static_cast<std::size_t>((w.volume() + 7) / 8);
  out.resize(start + nbytes, 0);
  const auto& occ = env.occupancy();
  for (std::uint64_t i = 0; i < w.volume(); ++i)
    if (occ[i]) out[start + i / 8] |= static_cast<std::uint8_t>(1u << (i % 8));
  detail::put_le(out, detail::crc32_of(out.data() + start, nbytes), 4);
  return out;
}

inline Environment load(const std::vector<std::uint8_t>& bytes, ValidationMode mode = ValidationMode::lenient) {
  const std::uint8_t* p = bytes.data();
  std::size_t n = bytes.size();
  require(n >= 4 && p[0] == 'D' && p[1] == 'P' && p[2] == 'P' && p[3] == '1', errc::bad_magic,
          "environment file does not start with DPP1");
  require(n >= 5, errc::truncated_payload, "missing dimension byte");
  int d = p[4];
  require(d >= 1 && d <= kMaxDim, errc::dimension_overflow, "dimension " + std::to_string(d) + " out of range");
  std::size_t pos = 5;
  require(n >= pos + 4 * static_cast<std::size_t>(d) + 9, errc::truncated_payload, "header truncated");
  std::vector<std::uint32_t> sides;
  std::uint64_t volume = 1;
  for (int i = 0; i < d; ++i) {
    auto s = static_cast<std::uint32_t>(detail::get_le(p + pos, 4));
    pos += 4;
    require(s >= 2, errc::dimension_overflow, "side length below 2");
    volume *= s;
    require(volume <= kMaxSites, errc::dimension_overflow, "window volume overflows");
    sides.push_back(s);
  }
  std::uint8_t flags = p[pos++];
  std::uint64_t seed = detail::get_le(p + pos, 8);
  pos += 8;
  auto nbytes = static_cast<std::size_t>((volume + 7) / 8);
  require(n >= pos + nbytes + 4, errc::truncated_payload, "occupancy payload truncated");
  std::uint32_t stored = static_cast<std::uint32_t>(detail::get_le(p + pos + nbytes, 4));
  require(stored == detail::crc32_of(p + pos, nbytes), errc::checksum_mismatch, "occupancy checksum mismatch");
  std::vector<std::uint8_t> occ(volume);
  for (std::uint64_t i = 0; i < volume; ++i) occ[i] = (p[pos + i / 8] >> (i % 8)) & 1u;
  Environment env(LatticeWindow(std::move(sides)), std::move(occ), (flags & 1) != 0, seed, "loaded");
  env.set_strict_validated((flags & 2) != 0);
  if (mode == ValidationMode::strict || env.strict_validated()) require_strict(env);
  return env;
}

inline void save_file(const Environment& env, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  require(static_cast<bool>(f), errc::io_error, "cannot open " + path + " for writing");
  auto bytes = save(env);
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  require(static_cast<bool>(f), errc::io_error, "write failed for " + path);
}

inline Environment load_file(const std::string& path, ValidationMode mode = ValidationMode::lenient) {
  std::ifstream f(path, std::ios::binary);
  require(static_cast<bool>(f), errc::io_error, "cannot open " + path);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return load(bytes, mode);
}

// ---------------------------------------------------------------------------
// ProcessSpec <-> JSON

inline nlohmann::json spec_to_json(const ProcessSpec& spec) {
  nlohmann::json j;
  j["kind"] = spec_kind(spec);
  if (auto* b = std::get_if<Bernoulli>(&spec)) j["p"] = b->p;
  if (auto* c = std::get_if<PercolationCluster>(&spec)) j["p"] = c->p;
  if (auto* db = std::get_if<DeletedBalls>(&spec)) {
    j["radii"] = db->radii;
    j["probs"] = db->probs;
  }
  if (auto* e = std::get_if<Explicit>(&spec)) j["sites"] = e->sites;
  return j;
}

inline ProcessSpec spec_from_json(const nlohmann::json& j) {
  try {
    std::string kind = j.at("kind").get<std::string>();
    if (kind == "bernoulli") return Bernoulli{j.at("p").get<double>()};
    if (kind == "percolation_cluster") return PercolationCluster{j.at("p").get<double>()};
    if (kind == "deleted_balls") {
      return DeletedBalls{j.at("radii").get<std::vector<double>>(), j.at("probs").get<std::vector<double>>()};
    }
    if (kind == "explicit") return Explicit{j.at("sites").get<std::vector<Point>>()};
    fail(errc::malformed_config, "unknown process kind '" + kind + "'");
  } catch (const nlohmann::json::exception& e) {
    fail(errc::malformed_config, std::string("bad process spec: ") + e.what());
  }
}

/// Parse either a JSON object or the shorthand "bernoulli:p=0.5",
/// "percolation_cluster:p=0.7", "deleted_balls:r=1,2;p=0.01,0.001".
inline ProcessSpec parse_spec(const std::string& text) {
  if (!text.empty() && text.front() == '{') {
    try {
      return spec_from_json(nlohmann::json::parse(text));
    } catch (const nlohmann::json::exception& e) {
      fail(errc::malformed_config, std::string("bad process spec json: ") + e.what());
    }
  }
  auto colon = text.find(':');
  std::string kind = text.substr(0, colon);
  std::string rest = colon == std::string::npos ? "" : text.substr(colon + 1);
  auto list = [](const std::string& s) {
    std::vector<double> v;
    std::size_t start = 0;
    while (start <= s.size()) {
      auto comma = s.find(',', start);
      std::string tok = s.substr(start, comma == std::string::npos ? std::string::npos : comma - start);
      if (!tok.empty()) v.push_back(std::stod(tok));
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
    return v;
  };
  auto field = [&](const std::string& key) -> std::string {
    std::size_t start = 0;
    while (start < rest.size()) {
      auto semi = rest.find(';', start);
      std::string part = rest.substr(start, semi == std::string::npos ? std::string::npos : semi - start);
      if (part.rfind(key + "=", 0) == 0) return part.substr(key.size() + 1);
      if (semi == std::string::npos) break;
      start = semi + 1;
    }
    fail(errc::malformed_config, "process spec '" + text + "' lacks field " + key);
  };
  try {
    if (kind == "bernoulli") return Bernoulli{std::stod(field("p"))};
    if (kind == "percolation_cluster") return PercolationCluster{std::stod(field("p"))};
    if (kind == "deleted_balls") return DeletedBalls{list(field("r")), list(field("p"))};
  } catch (const std::logic_error&) {
    fail(errc::malformed_config, "bad number in process spec '" + text + "'");
  }
  fail(errc::malformed_config, "unknown process spec '" + text + "'");
}

}  // namespace dpp
