#pragma once

#include <cmath>
#include <stdexcept>

namespace opgp {

/// Closed interval [lo, hi] used as the experiment domain and as the
/// support of integral functionals.
struct Interval {
    double lo = -1.0;
    double hi = 1.0;

    Interval() = default;
    Interval(double lo_, double hi_) : lo(lo_), hi(hi_) {
        if (!(lo < hi) || !std::isfinite(lo) || !std::isfinite(hi))
            throw std::invalid_argument("Interval: need finite lo < hi");
    }

    double width() const { return hi - lo; }
    double mid() const { return 0.5 * (lo + hi); }
    double half_width() const { return 0.5 * (hi - lo); }
    bool contains(double x) const { return x >= lo && x <= hi; }
    bool contains(const Interval& other) const {
        return other.lo >= lo && other.hi <= hi;
    }
};

} // namespace opgp
