#pragma once

#include <stdexcept>

namespace invstab {

/// Base class for every error thrown by this library.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Malformed input file (bad JSON, unknown keys, wrong types).
struct ParseError : Error {
  using Error::Error;
};

/// Structurally valid input that violates a model invariant.
struct ValidationError : Error {
  using Error::Error;
};

/// Singular linear operator where a regular one is required, e.g. the
/// Laplacian of a disconnected graph.
struct SingularityError : Error {
  using Error::Error;
};

/// Iterative solve stalled or hit its iteration cap.
struct NonConvergence : Error {
  using Error::Error;
};

/// Newton Jacobian not invertible at the current iterate.
struct SingularJacobian : Error {
  using Error::Error;
};

/// NaN or infinity appeared in a state vector.
struct NonFinite : Error {
  using Error::Error;
};

/// Referenced line does not exist in the network.
struct UnknownLine : Error {
  using Error::Error;
};

/// Optimization problem has no feasible point.
struct Infeasible : Error {
  using Error::Error;
};

/// Optimizer terminated without reaching the requested tolerance.
struct NotConverged : Error {
  using Error::Error;
};

/// Stability region is empty, no target can be certified inside it.
struct EmptyRegion : Error {
  using Error::Error;
};

/// Plan construction exceeded the allowed number of stages.
struct StageLimitExceeded : Error {
  using Error::Error;
};

/// Neither the certificate nor the simulation fallback could validate the
/// first stage of a plan.
struct FirstStageUncertified : Error {
  using Error::Error;
};

/// A later plan stage failed both certificate and simulation checks.
struct StageUncertified : Error {
  using Error::Error;
};

/// A stage of plan execution did not meet the switch criterion in time.
struct StageTimeout : Error {
  using Error::Error;
};

}  // namespace invstab
