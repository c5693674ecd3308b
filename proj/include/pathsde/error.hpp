#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>

namespace pathsde {

enum class ErrorKind {
  parameter,
  non_finite_input,
  ordering,
  overflow,
  solver,
  unsupported_configuration,
  runaway,
  configuration,
  zero_step,
  degenerate_normalizer,
  experiment,
  io,
};

inline const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::parameter: return "parameter error";
    case ErrorKind::non_finite_input: return "non-finite input";
    case ErrorKind::ordering: return "ordering error";
    case ErrorKind::overflow: return "overflow";
    case ErrorKind::solver: return "solver error";
    case ErrorKind::unsupported_configuration: return "unsupported configuration";
    case ErrorKind::runaway: return "runaway integration";
    case ErrorKind::configuration: return "configuration error";
    case ErrorKind::zero_step: return "zero step";
    case ErrorKind::degenerate_normalizer: return "degenerate normalizer";
    case ErrorKind::experiment: return "experiment error";
    case ErrorKind::io: return "I/O error";
  }
  return "error";
}

/// Single exception type for the library; callers branch on kind().
class SdeError : public std::runtime_error {
 public:
  SdeError(ErrorKind kind, const std::string& what,
           std::optional<std::size_t> step_index = std::nullopt)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what),
        kind_(kind),
        step_index_(step_index) {}

  ErrorKind kind() const noexcept { return kind_; }
  std::optional<std::size_t> step_index() const noexcept { return step_index_; }

 private:
  ErrorKind kind_;
  std::optional<std::size_t> step_index_;
};

namespace detail {
[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) {
  throw SdeError(kind, what);
}
inline void require(bool ok, ErrorKind kind, const std::string& what) {
  if (!ok) fail(kind, what);
}
}  // namespace detail

}  // namespace pathsde
