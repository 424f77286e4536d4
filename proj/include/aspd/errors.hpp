#pragma once

#include <stdexcept>
#include <string>

namespace aspd {

/// Channel estimation plus processing overhead no longer fits in the
/// coherence block (tau_csi + tau_pro >= T).
struct OverheadExceedsBlock : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Newton iteration inside the convex subproblem solver failed to make
/// progress; the message carries the residuals at the point of failure.
struct SolverStalled : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Training loss became non-finite.
struct DivergenceDetected : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Config file rejected; message carries file, line and key diagnostics.
struct ConfigInvalid : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// A learning-based method was requested without a model file.
struct MissingModel : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace aspd
