#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace dpp {

/// Error categories. Each maps to a distinct CLI exit code (see cli.hpp).
enum class errc {
  invalid_argument,
  unsupported_dimension,
  bad_magic,
  dimension_overflow,
  truncated_payload,
  checksum_mismatch,
  validation_failed,
  rejection_budget_exhausted,
  window_limit,
  numerical_integrity,
  identity_violation,
  solver_not_converged,
  malformed_config,
  io_error,
};

inline std::string_view to_string(errc code) {
  switch (code) {
    case errc::invalid_argument: return "invalid_argument";
    case errc::unsupported_dimension: return "unsupported_dimension";
    case errc::bad_magic: return "bad_magic";
    case errc::dimension_overflow: return "dimension_overflow";
    case errc::truncated_payload: return "truncated_payload";
    case errc::checksum_mismatch: return "checksum_mismatch";
    case errc::validation_failed: return "validation_failed";
    case errc::rejection_budget_exhausted: return "rejection_budget_exhausted";
    case errc::window_limit: return "window_limit";
    case errc::numerical_integrity: return "numerical_integrity";
    case errc::identity_violation: return "identity_violation";
    case errc::solver_not_converged: return "solver_not_converged";
    case errc::malformed_config: return "malformed_config";
    case errc::io_error: return "io_error";
  }
  return "unknown";
}

class error : public std::runtime_error {
 public:
  error(errc code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  errc code() const noexcept { return code_; }

 private:
  errc code_;
};

[[noreturn]] inline void fail(errc code, const std::string& what) { throw error(code, what); }

inline void require(bool cond, errc code, const std::string& what) {
  if (!cond) fail(code, what);
}

}  // namespace dpp
