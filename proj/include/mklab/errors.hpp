#pragma once

#include <stdexcept>
#include <string>

namespace mklab {

// Exit codes used by the CLI: 0 success, 2 hypothesis/precondition failure,
// 3 resolution failure, 4 acceptance-gate failure.
struct PreconditionError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct DomainError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct HypothesisError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ResolutionError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct StageRangeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct DiagnosticError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const ResolutionError*>(&e)) return 3;
  if (dynamic_cast<const PreconditionError*>(&e)) return 2;
  if (dynamic_cast<const DomainError*>(&e)) return 2;
  if (dynamic_cast<const HypothesisError*>(&e)) return 2;
  return 1;
}

}  // namespace mklab
