#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "opgp/errors.hpp"
#include "opgp/functionals.hpp"
#include "opgp/gram.hpp"
#include "opgp/interval.hpp"
#include "opgp/kernels.hpp"

namespace opgp {

/// Finite-dimensional surrogate for the Gaussian measure: the field
/// restricted to a uniform grid, as a plain Gaussian vector. Everything in
/// this header deliberately avoids the analytic machinery (Gauss-Legendre
/// nodes, closed-form kernel derivatives applied twice, block factors) so
/// that agreement with the operator-GP path is evidence, not tautology.
struct GridMeasure {
    Eigen::VectorXd grid;
    Eigen::VectorXd mean;
    Eigen::MatrixXd cov;

    Eigen::Index size() const { return grid.size(); }
    double spacing() const { return grid[1] - grid[0]; }
};

using FunctionalWeights = Eigen::VectorXd;

inline GridMeasure discretize(const Kernel& k, const MeanFunction& m, Eigen::Index n,
                              Interval domain) {
    if (n < 2) throw std::invalid_argument("discretize: need n >= 2 grid sites");
    GridMeasure gm;
    gm.grid = Eigen::VectorXd::LinSpaced(n, domain.lo, domain.hi);
    gm.mean.resize(n);
    gm.cov.resize(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        gm.mean[i] = m(gm.grid[i]);
        for (Eigen::Index j = 0; j <= i; ++j) {
            const double v = kernel_eval(k, gm.grid[i], gm.grid[j]);
            gm.cov(i, j) = v;
            gm.cov(j, i) = v;
        }
    }
    return gm;
}

/// Weight vector w with G(f) ~ sum_i w_i f(grid_i).
///   point_eval -> barycentric weights on the two bracketing sites;
///   integral   -> composite trapezoid (with cut end cells) times the weight
///                 density — NOT the Gauss-Legendre rule the main path uses;
///   deriv_eval -> 4th-order central stencil at the nearest site, downgraded
///                 to one-sided 2nd order near the boundary.
inline FunctionalWeights weights_for(const LinearFunctional& f, const Eigen::VectorXd& grid) {
    const Eigen::Index n = grid.size();
    const double a = grid[0], b = grid[n - 1];
    const double h = grid[1] - grid[0];
    Eigen::VectorXd w = Eigen::VectorXd::Zero(n);

    switch (f.kind()) {
    case FunctionalKind::point_eval: {
        const double s = f.site();
        if (s < a || s > b) throw SiteOutOfGrid("weights_for: point site outside grid hull");
        Eigen::Index j = static_cast<Eigen::Index>(std::floor((s - a) / h));
        j = std::min(std::max<Eigen::Index>(j, 0), n - 2);
        if (s == grid[j]) {
            w[j] = 1.0;
        } else if (s == grid[j + 1]) {
            w[j + 1] = 1.0;
        } else {
            const double lam = (grid[j + 1] - s) / (grid[j + 1] - grid[j]);
            w[j] = lam;
            w[j + 1] = 1.0 - lam;
        }
        return w;
    }
    case FunctionalKind::deriv_eval: {
        const double s = f.site();
        if (s < a || s > b) throw SiteOutOfGrid("weights_for: derivative site outside grid hull");
        Eigen::Index j = static_cast<Eigen::Index>(std::llround((s - a) / h));
        j = std::min(std::max<Eigen::Index>(j, 0), n - 1);
        if (j >= 2 && j <= n - 3) {
            w[j - 2] = 1.0 / (12.0 * h);
            w[j - 1] = -8.0 / (12.0 * h);
            w[j + 1] = 8.0 / (12.0 * h);
            w[j + 2] = -1.0 / (12.0 * h);
        } else if (j <= 1) {
            w[j] = -3.0 / (2.0 * h);
            w[j + 1] = 4.0 / (2.0 * h);
            w[j + 2] = -1.0 / (2.0 * h);
        } else {
            w[j] = 3.0 / (2.0 * h);
            w[j - 1] = -4.0 / (2.0 * h);
            w[j - 2] = 1.0 / (2.0 * h);
        }
        return w;
    }
    case FunctionalKind::integral: {
        const Interval win = f.window();
        const auto& density = f.weight();
        // per grid cell, trapezoid on the overlap with the window; function
        // values off-node are linearly interpolated, so each cut cell
        // spreads onto its two bracketing nodes
        for (Eigen::Index j = 0; j + 1 < n; ++j) {
            const double lo = std::max(grid[j], win.lo);
            const double hi = std::min(grid[j + 1], win.hi);
            if (!(lo < hi)) continue;
            const double cell = grid[j + 1] - grid[j];
            for (const double x : {lo, hi}) {
                const double coeff = (hi - lo) / 2.0 * density(x);
                const double lam = (grid[j + 1] - x) / cell;
                w[j] += coeff * lam;
                w[j + 1] += coeff * (1.0 - lam);
            }
        }
        return w;
    }
    }
    return w;
}

/// Stack weights_for rows for a functional list.
inline Eigen::MatrixXd weights_matrix(const std::vector<LinearFunctional>& fs,
                                      const Eigen::VectorXd& grid) {
    Eigen::MatrixXd W(static_cast<Eigen::Index>(fs.size()), grid.size());
    for (std::size_t i = 0; i < fs.size(); ++i)
        W.row(static_cast<Eigen::Index>(i)) = weights_for(fs[i], grid).transpose();
    return W;
}

/// Plain multivariate-Gaussian conditioning of the grid vector on W f = y:
///   mean' = mean + cov W^T (W cov W^T)^{-1} (y - W mean)
///   cov'  = cov  - cov W^T (W cov W^T)^{-1} W cov
/// with optional per-observation noise variances added to W cov W^T.
inline GridMeasure oracle_condition(const GridMeasure& gm, const Eigen::MatrixXd& W,
                                    const Eigen::VectorXd& y,
                                    const Eigen::VectorXd& noise = Eigen::VectorXd()) {
    if (W.cols() != gm.size() || W.rows() != y.size())
        throw DimensionMismatch("oracle_condition: weight matrix shape mismatch");
    if (noise.size() != 0 && noise.size() != y.size())
        throw DimensionMismatch("oracle_condition: noise length mismatch");
    const Eigen::MatrixXd WC = W * gm.cov; // p x n
    Eigen::MatrixXd G = WC * W.transpose();
    G = ((G + G.transpose()) / 2.0).eval();
    if (noise.size() != 0) G.diagonal() += noise;
    const CholResult cr = chol_with_jitter(G);
    const auto lower = cr.L.triangularView<Eigen::Lower>();

    GridMeasure out;
    out.grid = gm.grid;
    const Eigen::VectorXd half = lower.solve((y - W * gm.mean).eval());
    out.mean = gm.mean +
               WC.transpose() * cr.L.transpose().triangularView<Eigen::Upper>().solve(half);
    const Eigen::MatrixXd T = lower.solve(WC); // p x n
    out.cov = gm.cov - T.transpose() * T;
    out.cov = ((out.cov + out.cov.transpose()) / 2.0).eval();
    return out;
}

/// Draw sample paths (rows) via the eigendecomposition square root, with a
/// self-contained Box-Muller generator on top of mt19937_64 so draws are
/// bit-reproducible across standard libraries.
inline Eigen::MatrixXd sample(const GridMeasure& gm, Eigen::Index count, std::uint64_t seed) {
    if (count < 1) throw std::invalid_argument("sample: count must be >= 1");
    const Eigen::Index n = gm.size();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(gm.cov);
    Eigen::VectorXd lam = es.eigenvalues().cwiseMax(0.0);
    const Eigen::MatrixXd root = es.eigenvectors() * lam.cwiseSqrt().asDiagonal();

    std::mt19937_64 rng(seed);
    auto uniform = [&rng]() {
        // 53-bit mantissa draw in (0,1]
        return (static_cast<double>(rng() >> 11) + 1.0) * 0x1.0p-53;
    };
    double spare = 0.0;
    bool have_spare = false;
    auto normal = [&]() {
        if (have_spare) {
            have_spare = false;
            return spare;
        }
        const double u1 = uniform(), u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        spare = r * std::sin(2.0 * M_PI * u2);
        have_spare = true;
        return r * std::cos(2.0 * M_PI * u2);
    };

    Eigen::MatrixXd Z(n, count);
    for (Eigen::Index c = 0; c < count; ++c)
        for (Eigen::Index i = 0; i < n; ++i) Z(i, c) = normal();
    Eigen::MatrixXd draws = (root * Z).colwise() + gm.mean;
    return draws.transpose(); // count x n
}

} // namespace opgp
