#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "opgp/errors.hpp"
#include "opgp/interval.hpp"
#include "opgp/kernels.hpp"
#include "opgp/quadrature.hpp"

namespace opgp {

using Fn1 = std::function<double(double)>;

enum class FunctionalKind { point_eval, deriv_eval, integral };

/// A bounded linear functional on the sample space, stored in a uniform
/// node/coefficient expansion:
///
///   L f = sum_i coeff_i * f^{(deriv_order)}(node_i)
///
/// Point evaluations are a single unit node, derivative evaluations the same
/// with deriv_order 1, and weighted integrals carry quadrature nodes whose
/// coefficients already absorb the quadrature weights and the weight
/// function. Every downstream operation (applying to a function, to a kernel
/// section, or bilinearly to a kernel) is the same sum regardless of kind.
class LinearFunctional {
  public:
    static LinearFunctional point_eval(double site) {
        check_site(site);
        LinearFunctional L;
        L.kind_ = FunctionalKind::point_eval;
        L.nodes_ = {site};
        L.coeffs_ = {1.0};
        L.label_ = "point(" + fmt(site) + ")";
        return L;
    }

    static LinearFunctional deriv_eval(double site) {
        check_site(site);
        LinearFunctional L;
        L.kind_ = FunctionalKind::deriv_eval;
        L.nodes_ = {site};
        L.coeffs_ = {1.0};
        L.deriv_order_ = 1;
        L.label_ = "deriv(" + fmt(site) + ")";
        return L;
    }

    /// integral over `window` of weight(x) f(x) dx, via Gauss-Legendre.
    static LinearFunctional integral(Fn1 weight, Interval window, std::size_t quad_order = 200,
                                     std::string label = "") {
        if (!weight) throw std::invalid_argument("LinearFunctional::integral: null weight");
        QuadratureRule rule(quad_order, window);
        LinearFunctional L;
        L.kind_ = FunctionalKind::integral;
        L.nodes_ = rule.nodes();
        L.coeffs_.resize(quad_order);
        for (std::size_t i = 0; i < quad_order; ++i) {
            const double c = rule.weights()[i] * weight(L.nodes_[i]);
            if (!std::isfinite(c))
                throw std::invalid_argument("LinearFunctional::integral: weight function not finite on window");
            L.coeffs_[i] = c;
        }
        L.label_ = label.empty()
                       ? "integral[" + fmt(window.lo) + "," + fmt(window.hi) + "]"
                       : std::move(label);
        // retained so independent backends (e.g. the grid oracle) can
        // rediscretize the same Radon measure with their own rule
        L.weight_ = std::move(weight);
        L.window_ = window;
        return L;
    }

    FunctionalKind kind() const { return kind_; }
    const std::string& label() const { return label_; }
    const std::vector<double>& nodes() const { return nodes_; }
    const std::vector<double>& coeffs() const { return coeffs_; }
    int deriv_order() const { return deriv_order_; }

    /// Point/derivative site (those kinds have exactly one node).
    double site() const { return nodes_.front(); }
    /// Original weight density and window; integral kind only.
    const Fn1& weight() const { return weight_; }
    const Interval& window() const { return window_; }

  private:
    static void check_site(double site) {
        if (!std::isfinite(site))
            throw std::invalid_argument("LinearFunctional: site must be finite");
    }
    static std::string fmt(double x) {
        std::string s = std::to_string(x);
        // trim trailing zeros for readable labels
        while (s.size() > 1 && s.back() == '0') s.pop_back();
        if (!s.empty() && s.back() == '.') s.pop_back();
        return s;
    }

    FunctionalKind kind_ = FunctionalKind::point_eval;
    std::vector<double> nodes_;
    std::vector<double> coeffs_;
    int deriv_order_ = 0;
    std::string label_;
    Fn1 weight_;
    Interval window_;
};

/// Apply L to a function given by value and (optionally) derivative
/// callables. Derivative functionals require the derivative callable.
inline double apply(const LinearFunctional& L, const Fn1& f, const Fn1& df = nullptr) {
    const Fn1* use = &f;
    if (L.deriv_order() == 1) {
        if (!df)
            throw MissingDerivative("apply: functional '" + L.label() +
                                    "' needs a derivative, none was provided");
        use = &df;
    }
    double acc = 0.0;
    for (std::size_t i = 0; i < L.nodes().size(); ++i)
        acc += L.coeffs()[i] * (*use)(L.nodes()[i]);
    return acc;
}

inline double apply(const LinearFunctional& L, const MeanFunction& m) {
    double acc = 0.0;
    for (std::size_t i = 0; i < L.nodes().size(); ++i) {
        const double v = L.deriv_order() == 1 ? m.deriv(L.nodes()[i]) : m(L.nodes()[i]);
        acc += L.coeffs()[i] * v;
    }
    return acc;
}

/// L applied to t -> d^{order_s}/ds^{order_s} k(s, t); the covariance between
/// (a derivative of) the field at s and the observation L.
inline double apply_to_kernel_section(const LinearFunctional& L, const Kernel& k, double s,
                                      int order_s = 0) {
    double acc = 0.0;
    for (std::size_t i = 0; i < L.nodes().size(); ++i)
        acc += L.coeffs()[i] * kernel_deriv(k, s, L.nodes()[i], order_s, L.deriv_order());
    return acc;
}

/// (L1 x L2) k: the covariance between observations L1 f and L2 f. The pair
/// is put in a canonical order before summing, so the result is exactly
/// symmetric in its arguments (the nested summation order would otherwise
/// differ between the two call orders by an ulp).
inline double apply_bilinear(const LinearFunctional& L1, const LinearFunctional& L2,
                             const Kernel& k) {
    const auto key_less = [](const LinearFunctional& x, const LinearFunctional& y) {
        if (x.deriv_order() != y.deriv_order()) return x.deriv_order() < y.deriv_order();
        if (x.nodes().size() != y.nodes().size()) return x.nodes().size() < y.nodes().size();
        if (x.nodes() != y.nodes())
            return std::lexicographical_compare(x.nodes().begin(), x.nodes().end(),
                                                y.nodes().begin(), y.nodes().end());
        return std::lexicographical_compare(x.coeffs().begin(), x.coeffs().end(),
                                            y.coeffs().begin(), y.coeffs().end());
    };
    const LinearFunctional* a = &L1;
    const LinearFunctional* b = &L2;
    if (key_less(*b, *a)) std::swap(a, b);

    double acc = 0.0;
    for (std::size_t i = 0; i < a->nodes().size(); ++i) {
        const double ci = a->coeffs()[i];
        const double ni = a->nodes()[i];
        double row = 0.0;
        for (std::size_t j = 0; j < b->nodes().size(); ++j)
            row += b->coeffs()[j] *
                   kernel_deriv(k, ni, b->nodes()[j], a->deriv_order(), b->deriv_order());
        acc += ci * row;
    }
    return acc;
}

/// Single Fourier coefficient functional: the integral of f against
/// cos/sin(freq * pi * (x - mid) / half_width) over the domain.
inline LinearFunctional fourier_functional(std::size_t freq, bool cosine, Interval domain,
                                           std::size_t quad_order = 200) {
    if (freq < 1) throw std::invalid_argument("fourier_functional: frequency must be >= 1");
    const double mid = domain.mid();
    const double omega = M_PI * static_cast<double>(freq) / domain.half_width();
    Fn1 w = cosine ? Fn1([omega, mid](double x) { return std::cos(omega * (x - mid)); })
                   : Fn1([omega, mid](double x) { return std::sin(omega * (x - mid)); });
    const std::string label =
        (cosine ? "fourier_cos(" : "fourier_sin(") + std::to_string(freq) + ")";
    return LinearFunctional::integral(std::move(w), domain, quad_order, label);
}

/// First `count` Fourier coefficient functionals on `domain`, interleaved
/// cosine-first: cos(1), sin(1), cos(2), sin(2), ...
inline std::vector<LinearFunctional> fourier_functionals(std::size_t count, Interval domain,
                                                         std::size_t quad_order = 200) {
    std::vector<LinearFunctional> out;
    out.reserve(count);
    for (std::size_t i = 0; i < count; ++i)
        out.push_back(fourier_functional(i / 2 + 1, i % 2 == 0, domain, quad_order));
    return out;
}

} // namespace opgp
