#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <vector>

#include "opgp/errors.hpp"
#include "opgp/functionals.hpp"
#include "opgp/gram.hpp"
#include "opgp/kernels.hpp"

namespace opgp {

/// Batch-conditioned GP: prior (kernel, mean) plus the Gram system of the
/// observation functionals and the solved weights alpha = K_GG^{-1}(y - Gm).
/// With p = 0 observations this is the prior itself.
struct PosteriorGP {
    Kernel kernel;
    MeanFunction mean;
    GramSystem sys;
    Eigen::VectorXd values;
    Eigen::VectorXd alpha;
};

inline PosteriorGP condition(const Kernel& k, const MeanFunction& m,
                             const std::vector<LinearFunctional>& fs, const Eigen::VectorXd& y,
                             const std::vector<double>& noise = {}) {
    if (static_cast<std::size_t>(y.size()) != fs.size())
        throw DimensionMismatch("condition: " + std::to_string(fs.size()) + " functionals but " +
                                std::to_string(y.size()) + " observed values");
    PosteriorGP pg;
    pg.kernel = k;
    pg.mean = m;
    pg.sys = build_gram(k, m, fs, noise);
    pg.values = y;
    pg.alpha = pg.sys.solve((y - pg.sys.gm).eval());
    return pg;
}

/// m + K_sG K_GG^{-1} (y - Gm). The "+" sign is forced by the fiber
/// property G m_post = y; see docs/config.md for the sign discussion.
inline double posterior_mean(const PosteriorGP& pg, double s) {
    if (pg.sys.size() == 0) return pg.mean(s);
    return pg.mean(s) + cross_covariance(pg.sys, pg.kernel, s).dot(pg.alpha);
}

/// k(s1,s2) - K_{s1 G} K_GG^{-1} K_{s2 G}^T via two triangular solves.
inline double posterior_cov(const PosteriorGP& pg, double s1, double s2) {
    const double prior = kernel_eval(pg.kernel, s1, s2);
    if (pg.sys.size() == 0) return prior;
    const auto lower = pg.sys.chol.triangularView<Eigen::Lower>();
    const Eigen::VectorXd a = lower.solve(cross_covariance(pg.sys, pg.kernel, s1));
    const Eigen::VectorXd b = lower.solve(cross_covariance(pg.sys, pg.kernel, s2));
    return prior - a.dot(b);
}

inline double posterior_var(const PosteriorGP& pg, double s) { return posterior_cov(pg, s, s); }

inline double posterior_sd(const PosteriorGP& pg, double s) {
    return std::sqrt(std::max(0.0, posterior_var(pg, s)));
}

/// Mean via the explicit representing-sequence sum
///   m(s) + sum_i <y - Gm, y_i*> (K_sG y_i*),
/// with Y = representing_sequence(pg.sys) passed in (rows are y_i*).
/// Must agree with posterior_mean; the agreement is itself a library test.
inline double posterior_mean_via_representing(const PosteriorGP& pg, const Eigen::MatrixXd& Y,
                                              double s) {
    if (pg.sys.size() == 0) return pg.mean(s);
    const Eigen::VectorXd resid = pg.values - pg.sys.gm;
    const Eigen::VectorXd ksg = cross_covariance(pg.sys, pg.kernel, s);
    double acc = pg.mean(s);
    for (Eigen::Index i = 0; i < Y.rows(); ++i)
        acc += Y.row(i).dot(resid) * Y.row(i).dot(ksg);
    return acc;
}

/// Covariance via the representing sum k(s1,s2) - sum_i (K_{s1G} y_i*)(K_{s2G} y_i*).
inline double posterior_cov_via_representing(const PosteriorGP& pg, const Eigen::MatrixXd& Y,
                                             double s1, double s2) {
    const double prior = kernel_eval(pg.kernel, s1, s2);
    if (pg.sys.size() == 0) return prior;
    const Eigen::VectorXd k1 = cross_covariance(pg.sys, pg.kernel, s1);
    const Eigen::VectorXd k2 = cross_covariance(pg.sys, pg.kernel, s2);
    double acc = prior;
    for (Eigen::Index i = 0; i < Y.rows(); ++i)
        acc -= Y.row(i).dot(k1) * Y.row(i).dot(k2);
    return acc;
}

/// The posterior mean as value/derivative callables, from its analytic form
/// m(s) + sum_j alpha_j G_j k(., s). Used to re-apply observation
/// functionals through fresh quadrature in fiber_check.
struct MeanFn {
    Fn1 value;
    Fn1 deriv;
};

inline MeanFn conditional_mean_fn(const Kernel& k, const MeanFunction& m,
                                  const std::vector<LinearFunctional>& fs,
                                  const Eigen::VectorXd& alpha) {
    auto eval = [k, m, fs, alpha](double s, int order) {
        double acc = order == 0 ? m(s) : m.deriv(s);
        for (std::size_t j = 0; j < fs.size(); ++j)
            acc += alpha[static_cast<Eigen::Index>(j)] * apply_to_kernel_section(fs[j], k, s, order);
        return acc;
    };
    return MeanFn{[eval](double s) { return eval(s, 0); }, [eval](double s) { return eval(s, 1); }};
}

inline MeanFn posterior_mean_fn(const PosteriorGP& pg) {
    return conditional_mean_fn(pg.kernel, pg.mean, pg.sys.functionals, pg.alpha);
}

/// Residuals G_i[conditional mean] - y_i. For noiseless data these vanish
/// (the disintegration concentrates on the fiber G^{-1}(y)); each functional
/// is re-applied to the analytic posterior mean rather than read back from
/// the Gram matrix, so this genuinely closes the loop.
inline Eigen::VectorXd fiber_residuals(const Kernel& k, const MeanFunction& m,
                                       const std::vector<LinearFunctional>& fs,
                                       const Eigen::VectorXd& alpha, const Eigen::VectorXd& y) {
    const auto p = static_cast<Eigen::Index>(fs.size());
    Eigen::VectorXd resid(p);
    if (p == 0) return resid;
    const MeanFn mf = conditional_mean_fn(k, m, fs, alpha);
    for (Eigen::Index i = 0; i < p; ++i)
        resid[i] = apply(fs[static_cast<std::size_t>(i)], mf.value, mf.deriv) - y[i];
    return resid;
}

inline Eigen::VectorXd fiber_check(const PosteriorGP& pg) {
    return fiber_residuals(pg.kernel, pg.mean, pg.sys.functionals, pg.alpha, pg.values);
}

} // namespace opgp
