#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

#include "opgp/interval.hpp"

namespace opgp {

/// Gauss-Legendre quadrature rule mapped onto an interval. Nodes are found
/// by Newton iteration on the Legendre three-term recurrence; construction
/// self-checks exactness on monomials up to degree 5.
class QuadratureRule {
  public:
    explicit QuadratureRule(std::size_t order, Interval domain = Interval{})
        : order_(order), domain_(domain) {
        if (order < 2) throw std::invalid_argument("QuadratureRule: order must be >= 2");
        if (!(domain.lo < domain.hi))
            throw std::invalid_argument("QuadratureRule: window must have positive width");
        build();
        self_check();
    }

    std::size_t order() const { return order_; }
    const Interval& domain() const { return domain_; }
    const std::vector<double>& nodes() const { return nodes_; }
    const std::vector<double>& weights() const { return weights_; }

    template <class F>
    double integrate(F&& f) const {
        double acc = 0.0;
        for (std::size_t i = 0; i < order_; ++i) acc += weights_[i] * f(nodes_[i]);
        return acc;
    }

  private:
    // Legendre P_n(x) and P_n'(x) via the recurrence
    // (k+1) P_{k+1} = (2k+1) x P_k - k P_{k-1}.
    static void legendre(std::size_t n, double x, double& p, double& dp) {
        double p0 = 1.0, p1 = x;
        for (std::size_t k = 1; k < n; ++k) {
            const double p2 = ((2.0 * k + 1.0) * x * p1 - k * p0) / (k + 1.0);
            p0 = p1;
            p1 = p2;
        }
        p = p1;
        dp = n * (x * p1 - p0) / (x * x - 1.0);
    }

    void build() {
        const std::size_t n = order_;
        nodes_.assign(n, 0.0);
        weights_.assign(n, 0.0);
        const double c = domain_.mid();
        const double h = domain_.half_width();
        // roots come in +/- pairs; solve for the first half and mirror
        for (std::size_t i = 0; i < (n + 1) / 2; ++i) {
            // Tricomi-style initial guess
            double x = std::cos(M_PI * (static_cast<double>(i) + 0.75) / (static_cast<double>(n) + 0.5));
            double p = 0.0, dp = 1.0;
            for (int it = 0; it < 100; ++it) {
                legendre(n, x, p, dp);
                const double step = p / dp;
                x -= step;
                if (std::abs(step) < 1e-15) break;
            }
            // odd order: the middle root is exactly zero by symmetry, but Newton
            // leaves a ~1e-17 residue; snap so the mapped node hits the midpoint.
            if (2 * i + 1 == n) x = 0.0;
            legendre(n, x, p, dp);
            const double w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes_[i] = c - h * x; // x decreasing -> nodes increasing
            weights_[i] = h * w;
            nodes_[n - 1 - i] = c + h * x;
            weights_[n - 1 - i] = h * w;
        }
    }

    void self_check() const {
        const double a = domain_.lo, b = domain_.hi;
        double pa = a, pb = b;
        for (int deg = 0; deg <= 5; ++deg) {
            const double exact = (pb - pa) / (deg + 1.0); // int x^deg = (b^{d+1}-a^{d+1})/(d+1)
            double got = 0.0;
            for (std::size_t i = 0; i < order_; ++i) {
                double m = 1.0;
                for (int j = 0; j < deg; ++j) m *= nodes_[i];
                got += weights_[i] * m;
            }
            const double scale = std::max(1.0, std::abs(exact));
            if (std::abs(got - exact) > 1e-12 * scale)
                throw std::logic_error("QuadratureRule: exactness self-check failed at degree " +
                                       std::to_string(deg));
            pa *= a;
            pb *= b;
        }
    }

    std::size_t order_;
    Interval domain_;
    std::vector<double> nodes_, weights_;
};

} // namespace opgp
