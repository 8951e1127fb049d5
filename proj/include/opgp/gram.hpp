#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "opgp/errors.hpp"
#include "opgp/functionals.hpp"
#include "opgp/kernels.hpp"

namespace opgp {

struct CholResult {
    Eigen::MatrixXd L; // lower factor of A + jitter*I
    double jitter = 0.0;
};

/// Cholesky with an escalating jitter ladder: delta = 0, then
/// 1e-12*trace/p scaled by powers of ten up to 1e-6*trace/p. A rung counts
/// as successful only if the factorization completes AND the smallest pivot
/// squared clears max(10*delta, 1e-13*trace/p). A rank-deficient matrix
/// under jitter delta has smallest pivot squared of at most ~2*delta, so the
/// 10*delta bar keeps duplicated or dependent observation sets from being
/// "rescued" by the jitter itself with a 5x margin; a genuinely positive
/// spectrum whose plain factorization trips on accumulated roundoff clears
/// the bar at whichever rung first falls an order of magnitude below it.
inline CholResult chol_with_jitter(const Eigen::MatrixXd& A) {
    const Eigen::Index p = A.rows();
    if (p == 0) return {Eigen::MatrixXd(0, 0), 0.0};
    const double scale = A.trace() / static_cast<double>(p);
    if (!(scale > 0.0) || !std::isfinite(scale))
        throw SingularGram("chol_with_jitter: matrix trace is not positive");

    const double floor_abs = 1e-13 * scale;
    std::vector<double> ladder = {0.0};
    for (double d = 1e-12 * scale; d < 1.5e-6 * scale; d *= 10.0) ladder.push_back(d);
    for (double delta : ladder) {
        Eigen::MatrixXd M = A;
        M.diagonal().array() += delta;
        Eigen::LLT<Eigen::MatrixXd> llt(M);
        if (llt.info() == Eigen::Success) {
            const double min_pivot = llt.matrixLLT().diagonal().minCoeff();
            if (min_pivot * min_pivot >= std::max(10.0 * delta, floor_abs))
                return {Eigen::MatrixXd(llt.matrixL()), delta};
        }
    }
    throw SingularGram("chol_with_jitter: factorization failed at maximum jitter (" +
                       std::to_string(1e-6 * scale) +
                       "); observations are likely duplicated or linearly dependent");
}

/// The finite-dimensional covariance structures induced by a functional list:
/// K_GG[i][j] = G_i G_j k, its (jittered) Cholesky factor, and Gm[i] = G_i m.
struct GramSystem {
    std::vector<LinearFunctional> functionals;
    Eigen::MatrixXd kgg;  // p x p, includes any per-observation noise on the diagonal
    Eigen::MatrixXd chol; // lower factor of kgg + jitter*I
    Eigen::VectorXd gm;
    double jitter = 0.0;

    Eigen::Index size() const { return kgg.rows(); }

    /// (kgg + jitter*I)^{-1} * rhs via the stored factor.
    template <class Rhs>
    typename Rhs::PlainObject solve(const Rhs& rhs) const {
        typename Rhs::PlainObject half = chol.template triangularView<Eigen::Lower>().solve(rhs);
        return chol.transpose().template triangularView<Eigen::Upper>().solve(half);
    }
};

inline GramSystem build_gram(const Kernel& k, const MeanFunction& m,
                             const std::vector<LinearFunctional>& fs,
                             const std::vector<double>& noise = {}) {
    const auto p = static_cast<Eigen::Index>(fs.size());
    if (!noise.empty() && noise.size() != fs.size())
        throw DimensionMismatch("build_gram: noise vector length must match functional count");

    GramSystem sys;
    sys.functionals = fs;
    sys.kgg.resize(p, p);
    sys.gm.resize(p);
    for (Eigen::Index i = 0; i < p; ++i) {
        const auto ii = static_cast<std::size_t>(i);
        sys.gm[i] = apply(fs[ii], m);
        for (Eigen::Index j = 0; j <= i; ++j) {
            const double v = apply_bilinear(fs[ii], fs[static_cast<std::size_t>(j)], k);
            sys.kgg(i, j) = v;
            sys.kgg(j, i) = v;
        }
        if (!noise.empty()) {
            if (!(noise[ii] >= 0.0))
                throw std::invalid_argument("build_gram: noise variances must be >= 0");
            sys.kgg(i, i) += noise[ii];
        }
    }
    auto cr = chol_with_jitter(sys.kgg);
    sys.chol = std::move(cr.L);
    sys.jitter = cr.jitter;
    return sys;
}

/// K_sG: covariance between the field at s and each observation functional.
inline Eigen::VectorXd cross_covariance(const GramSystem& sys, const Kernel& k, double s,
                                        int order_s = 0) {
    Eigen::VectorXd v(sys.size());
    for (Eigen::Index i = 0; i < sys.size(); ++i)
        v[i] = apply_to_kernel_section(sys.functionals[static_cast<std::size_t>(i)], k, s, order_s);
    return v;
}

/// M^{-1/2} for symmetric positive definite M, by symmetric
/// eigendecomposition with eigenvalues floored at 1e-12*lambda_max.
inline Eigen::MatrixXd inv_sqrt_spd(const Eigen::MatrixXd& M) {
    if (M.rows() == 0) return Eigen::MatrixXd(0, 0);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(M);
    if (es.info() != Eigen::Success)
        throw SingularGram("inv_sqrt_spd: eigendecomposition failed");
    const double lmax = es.eigenvalues().maxCoeff();
    if (!(lmax > 0.0))
        throw SingularGram("inv_sqrt_spd: matrix has no positive eigenvalue");
    Eigen::VectorXd inv_sqrt = es.eigenvalues();
    for (Eigen::Index i = 0; i < M.rows(); ++i)
        inv_sqrt[i] = 1.0 / std::sqrt(std::max(inv_sqrt[i], 1e-12 * lmax));
    return es.eigenvectors() * inv_sqrt.asDiagonal() * es.eigenvectors().transpose();
}

/// Representing sequence for K_GG: rows y_i* = K_GG^{-1/2} e_i. Satisfies
/// <K_GG y_i*, y_j*> = delta_ij and a Parseval identity.
inline Eigen::MatrixXd representing_sequence(const GramSystem& sys) {
    Eigen::MatrixXd M = sys.kgg;
    M.diagonal().array() += sys.jitter;
    return inv_sqrt_spd(M);
}

} // namespace opgp
