#pragma once

#include <stdexcept>
#include <string>

namespace opgp {

/// Gram matrix could not be factorized even at the maximum jitter level.
/// Usually means duplicated or linearly dependent observation functionals.
struct SingularGram : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// A new observation batch carries no information independent of the
/// already-assimilated ones (singular Schur complement).
struct RedundantBatch : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct DimensionMismatch : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// A derivative functional was applied to a function that does not expose
/// derivative evaluation.
struct MissingDerivative : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// The kernel family does not provide the requested derivative order.
struct UnsupportedDerivative : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// A functional site falls outside the hull of the discretization grid.
struct SiteOutOfGrid : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// An embedded consistency check of an experiment run exceeded its
/// configured tolerance.
struct ToleranceExceeded : std::runtime_error {
    using std::runtime_error::runtime_error;
};

} // namespace opgp
