#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "opgp/errors.hpp"

namespace opgp {

enum class KernelFamily { matern52, squared_exponential };

inline std::string to_string(KernelFamily f) {
    return f == KernelFamily::matern52 ? "matern52" : "squared_exponential";
}

/// Stationary covariance kernel on a 1-D domain with closed-form partial
/// derivatives up to order (1,1).
struct Kernel {
    KernelFamily family = KernelFamily::matern52;
    double lengthscale = 1.0;
    double variance = 1.0;

    Kernel() = default;
    Kernel(KernelFamily family_, double lengthscale_, double variance_ = 1.0)
        : family(family_), lengthscale(lengthscale_), variance(variance_) {
        if (!(lengthscale > 0.0) || !std::isfinite(lengthscale))
            throw std::invalid_argument("Kernel: lengthscale must be positive");
        if (!(variance > 0.0) || !std::isfinite(variance))
            throw std::invalid_argument("Kernel: variance must be positive");
    }

    static Kernel matern52(double lengthscale, double variance = 1.0) {
        return Kernel(KernelFamily::matern52, lengthscale, variance);
    }
    static Kernel squared_exponential(double lengthscale, double variance = 1.0) {
        return Kernel(KernelFamily::squared_exponential, lengthscale, variance);
    }
};

namespace detail {

inline void check_finite(double s, double t) {
    if (std::isnan(s) || std::isnan(t))
        throw std::invalid_argument("kernel: NaN input rejected");
}

} // namespace detail

inline double kernel_eval(const Kernel& k, double s, double t) {
    detail::check_finite(s, t);
    const double d = s - t;
    if (k.family == KernelFamily::matern52) {
        const double a = std::sqrt(5.0) / k.lengthscale;
        const double r = std::abs(d);
        return k.variance * (1.0 + a * r + a * a * r * r / 3.0) * std::exp(-a * r);
    }
    const double q = d / k.lengthscale;
    return k.variance * std::exp(-0.5 * q * q);
}

/// Partial derivative of the kernel, order_s/order_t in {0,1}, from the
/// closed-form expressions. The Matern 5/2 mixed derivative uses the
/// analytic limit at the diagonal; no finite differencing anywhere.
inline double kernel_deriv(const Kernel& k, double s, double t, int order_s, int order_t) {
    detail::check_finite(s, t);
    if (order_s < 0 || order_s > 1 || order_t < 0 || order_t > 1)
        throw UnsupportedDerivative("kernel_deriv: supported orders are componentwise <= 1, got (" +
                                    std::to_string(order_s) + "," + std::to_string(order_t) + ")");
    if (order_s == 0 && order_t == 0) return kernel_eval(k, s, t);

    const double d = s - t;
    if (k.family == KernelFamily::matern52) {
        const double a = std::sqrt(5.0) / k.lengthscale;
        const double ad = a * std::abs(d);
        const double e = std::exp(-ad);
        const double c = k.variance * a * a / 3.0;
        if (order_s == 1 && order_t == 1)
            return c * (1.0 + ad - a * a * d * d) * e;
        const double ds = -c * d * (1.0 + ad) * e; // d/ds k
        return order_s == 1 ? ds : -ds;
    }

    const double l2 = k.lengthscale * k.lengthscale;
    const double base = kernel_eval(k, s, t);
    if (order_s == 1 && order_t == 1)
        return base / l2 * (1.0 - d * d / l2);
    const double ds = -d / l2 * base;
    return order_s == 1 ? ds : -ds;
}

/// Prior mean function: zero, constant, or a tabulated curve with linear
/// interpolation (derivative = slope of the containing segment).
class MeanFunction {
  public:
    enum class Kind { zero, constant, tabulated };

    MeanFunction() = default;

    static MeanFunction zero() { return MeanFunction(); }

    static MeanFunction constant(double c) {
        MeanFunction m;
        m.kind_ = Kind::constant;
        m.value_ = c;
        return m;
    }

    static MeanFunction tabulated(std::vector<double> grid, std::vector<double> values) {
        if (grid.size() != values.size() || grid.size() < 2)
            throw std::invalid_argument("MeanFunction::tabulated: need >= 2 matching grid/value entries");
        for (std::size_t i = 0; i + 1 < grid.size(); ++i)
            if (!(grid[i] < grid[i + 1]))
                throw std::invalid_argument("MeanFunction::tabulated: grid must be strictly increasing");
        for (double v : values)
            if (!std::isfinite(v))
                throw std::invalid_argument("MeanFunction::tabulated: values must be finite");
        MeanFunction m;
        m.kind_ = Kind::tabulated;
        m.grid_ = std::move(grid);
        m.values_ = std::move(values);
        return m;
    }

    Kind kind() const { return kind_; }
    double constant_value() const { return value_; }

    double operator()(double s) const {
        switch (kind_) {
        case Kind::zero: return 0.0;
        case Kind::constant: return value_;
        case Kind::tabulated: {
            const auto seg = segment(s);
            const double t = (s - grid_[seg]) / (grid_[seg + 1] - grid_[seg]);
            return (1.0 - t) * values_[seg] + t * values_[seg + 1];
        }
        }
        return 0.0;
    }

    double deriv(double s) const {
        switch (kind_) {
        case Kind::zero:
        case Kind::constant: return 0.0;
        case Kind::tabulated: {
            const auto seg = segment(s);
            return (values_[seg + 1] - values_[seg]) / (grid_[seg + 1] - grid_[seg]);
        }
        }
        return 0.0;
    }

  private:
    std::size_t segment(double s) const {
        // clamp to the hull; extrapolation continues the boundary segment
        auto it = std::upper_bound(grid_.begin(), grid_.end(), s);
        std::size_t j = static_cast<std::size_t>(it - grid_.begin());
        if (j == 0) return 0;
        if (j >= grid_.size()) return grid_.size() - 2;
        return j - 1;
    }

    Kind kind_ = Kind::zero;
    double value_ = 0.0;
    std::vector<double> grid_, values_;
};

} // namespace opgp
