#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "opgp/interval.hpp"
#include "opgp/kernels.hpp"

namespace opgp {

/// Truncated spectrum of the integral operator T_k f = int k(., s) f(s) dnu(s)
/// with nu = uniform Lebesgue on the domain, estimated by the Nystrom matrix
/// h * K on a midpoint grid. Eigenvalues descending, negatives clamped to 0.
struct MercerSpectrum {
    Eigen::VectorXd eigenvalues;
    Eigen::Index grid_size = 0;
    std::string measure;
};

inline MercerSpectrum mercer_spectrum(const Kernel& k, Eigen::Index n, Interval domain) {
    if (n < 16) throw std::invalid_argument("mercer_spectrum: need n >= 16");
    const double h = domain.width() / static_cast<double>(n);
    Eigen::VectorXd x(n);
    for (Eigen::Index i = 0; i < n; ++i) x[i] = domain.lo + (static_cast<double>(i) + 0.5) * h;
    Eigen::MatrixXd M(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j <= i; ++j) {
            const double v = h * kernel_eval(k, x[i], x[j]);
            M(i, j) = v;
            M(j, i) = v;
        }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(M, Eigen::EigenvaluesOnly);

    MercerSpectrum spec;
    spec.grid_size = n;
    spec.measure = "uniform[" + std::to_string(domain.lo) + "," + std::to_string(domain.hi) + "]";
    spec.eigenvalues = es.eigenvalues().reverse(); // descending
    spec.eigenvalues = spec.eigenvalues.cwiseMax(0.0);
    return spec;
}

enum class SummabilityVerdict { converging, inconclusive };

inline std::string to_string(SummabilityVerdict v) {
    return v == SummabilityVerdict::converging ? "converging" : "inconclusive";
}

struct PowerRkhsResult {
    double theta = 0.0;
    Eigen::VectorXd partial_sums; // partial sums of lambda_i^{1-theta}
    SummabilityVerdict verdict = SummabilityVerdict::inconclusive;
    double max_tail_ratio = 1.0;
};

/// Diagnostic for the sample-path condition sum_i lambda_i^{1-theta} < inf.
/// The verdict is a heuristic on a finite truncation: over the last quartile
/// of the "meaningful" prefix (eigenvalues above 1e-14 * lambda_1),
/// consecutive term ratios must all be <= 0.97 (geometric-or-faster decay)
/// with at least 4 tail terms; anything else — including theta = 1, where
/// every term is 1 — is reported as inconclusive, never as a refutation.
inline PowerRkhsResult power_rkhs_check(const MercerSpectrum& spec, double theta) {
    if (!(theta > 0.0) || !(theta <= 1.0))
        throw std::invalid_argument("power_rkhs_check: theta must lie in (0, 1]");
    const Eigen::Index n = spec.eigenvalues.size();
    PowerRkhsResult res;
    res.theta = theta;
    res.partial_sums.resize(n);
    Eigen::VectorXd terms(n);
    double acc = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        terms[i] = std::pow(spec.eigenvalues[i], 1.0 - theta); // pow(0,0) = 1 for theta = 1
        acc += terms[i];
        res.partial_sums[i] = acc;
    }
    if (n == 0) return res;

    const double lam1 = spec.eigenvalues[0];
    Eigen::Index prefix = 0;
    while (prefix < n && spec.eigenvalues[prefix] >= 1e-14 * lam1) ++prefix;
    const Eigen::Index tail_start = 3 * prefix / 4;
    const Eigen::Index tail_len = prefix - tail_start;
    double max_ratio = 1.0;
    if (tail_len >= 2) {
        max_ratio = 0.0;
        for (Eigen::Index i = tail_start + 1; i < prefix; ++i)
            max_ratio = std::max(max_ratio, terms[i] / terms[i - 1]);
    }
    res.max_tail_ratio = max_ratio;
    res.verdict = (tail_len >= 4 && max_ratio <= 0.97) ? SummabilityVerdict::converging
                                                       : SummabilityVerdict::inconclusive;
    return res;
}

} // namespace opgp
