#pragma once

#include <Eigen/Dense>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <system_error>
#include <vector>

#include <json.hpp>

#include "opgp/config.hpp"
#include "opgp/errors.hpp"
#include "opgp/functionals.hpp"
#include "opgp/gram.hpp"
#include "opgp/kernels.hpp"
#include "opgp/oracle.hpp"
#include "opgp/posterior.hpp"
#include "opgp/rkhs.hpp"
#include "opgp/sequential.hpp"

namespace opgp {

/// Shortest round-trip decimal representation (CSV determinism contract).
inline std::string format_double(double v) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

namespace detail {

inline std::ofstream open_output(const std::filesystem::path& path) {
    if (path.has_parent_path()) {
        std::error_code ec;
        std::filesystem::create_directories(path.parent_path(), ec);
    }
    std::ofstream out(path, std::ios::binary); // binary: LF line endings everywhere
    if (!out) throw std::runtime_error("cannot open output file: " + path.string());
    return out;
}

} // namespace detail

// ---------------------------------------------------------------------------
// run: sequential assimilation with per-batch checkpoint curves.
// ---------------------------------------------------------------------------

struct BatchCheckpoint {
    std::size_t index = 0; // 0 is the prior, batches count from 1
    std::vector<std::string> labels;
    Eigen::VectorXd mean, sd;
    double max_fiber_residual = 0.0;
    bool fiber_checked = false;
    double jitter = 0.0;
    double assimilate_seconds = 0.0;
    std::string csv_path;
};

struct RunReport {
    Eigen::VectorXd grid;
    std::vector<BatchCheckpoint> checkpoints;
    double seq_vs_batch_mean_sup = 0.0;
    double seq_vs_batch_var_sup = 0.0;
    bool equivalence_checked = false;
    bool passed = true;
    std::vector<std::string> failures;
    std::string report_path;
};

namespace detail {

inline void write_curve_csv(const std::filesystem::path& path, const Eigen::VectorXd& grid,
                            const Eigen::VectorXd& mean, const Eigen::VectorXd& sd,
                            const Eigen::VectorXd& prior_sd) {
    std::ofstream out = open_output(path);
    out << "s,mean,sd,prior_sd\n";
    for (Eigen::Index i = 0; i < grid.size(); ++i)
        out << format_double(grid[i]) << ',' << format_double(mean[i]) << ','
            << format_double(sd[i]) << ',' << format_double(prior_sd[i]) << '\n';
}

} // namespace detail

inline RunReport run_experiment(const ExperimentConfig& cfg, const std::string& out_dir) {
    namespace fs = std::filesystem;
    const fs::path dir(out_dir);

    RunReport report;
    report.grid = Eigen::VectorXd::LinSpaced(cfg.grid_n, cfg.domain.lo, cfg.domain.hi);
    const Eigen::Index n = report.grid.size();

    Eigen::VectorXd prior_mean(n), prior_sd(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        prior_mean[i] = cfg.mean(report.grid[i]);
        prior_sd[i] = std::sqrt(std::max(0.0, kernel_eval(cfg.kernel, report.grid[i], report.grid[i])));
    }

    {
        BatchCheckpoint prior;
        prior.index = 0;
        prior.mean = prior_mean;
        prior.sd = prior_sd;
        prior.csv_path = (dir / "posterior_batch0.csv").string();
        detail::write_curve_csv(prior.csv_path, report.grid, prior.mean, prior.sd, prior_sd);
        report.checkpoints.push_back(std::move(prior));
    }

    PosteriorState state(cfg.kernel, cfg.mean);
    std::vector<LinearFunctional> all_fs;
    std::vector<double> all_noise;
    Eigen::VectorXd all_y(0);
    bool any_noise = false;
    Eigen::VectorXd prev_var = prior_sd.array().square();

    for (std::size_t t = 0; t < cfg.batches.size(); ++t) {
        const auto& specs = cfg.batches[t];
        std::vector<LinearFunctional> fs;
        std::vector<double> noise;
        Eigen::VectorXd y(static_cast<Eigen::Index>(specs.size()));
        for (std::size_t i = 0; i < specs.size(); ++i) {
            fs.push_back(build_functional(specs[i], cfg));
            y[static_cast<Eigen::Index>(i)] = observed_value(specs[i], fs.back(), cfg);
            noise.push_back(specs[i].noise);
            any_noise = any_noise || specs[i].noise > 0.0;
        }

        const auto t0 = std::chrono::steady_clock::now();
        state = assimilate(state, fs, y, noise);
        const auto t1 = std::chrono::steady_clock::now();

        all_fs.insert(all_fs.end(), fs.begin(), fs.end());
        all_noise.insert(all_noise.end(), noise.begin(), noise.end());
        Eigen::VectorXd grown(all_y.size() + y.size());
        grown << all_y, y;
        all_y = std::move(grown);

        BatchCheckpoint cp;
        cp.index = t + 1;
        for (const auto& f : fs) cp.labels.push_back(f.label());
        cp.jitter = state.block_jitters.back();
        cp.assimilate_seconds = std::chrono::duration<double>(t1 - t0).count();
        cp.mean.resize(n);
        cp.sd.resize(n);
        Eigen::VectorXd var(n);
        for (Eigen::Index i = 0; i < n; ++i) {
            cp.mean[i] = seq_mean(state, report.grid[i]);
            var[i] = seq_var(state, report.grid[i]);
            cp.sd[i] = std::sqrt(std::max(0.0, var[i]));
        }
        for (Eigen::Index i = 0; i < n; ++i)
            if (var[i] > prev_var[i] + 1e-10) {
                report.failures.push_back("checkpoint " + std::to_string(cp.index) +
                                          ": posterior variance increased at s = " +
                                          format_double(report.grid[i]));
                break;
            }
        prev_var = var;

        if (!any_noise) {
            cp.fiber_checked = true;
            cp.max_fiber_residual = fiber_check(state).cwiseAbs().maxCoeff();
            if (cp.max_fiber_residual > cfg.fiber_tolerance)
                report.failures.push_back(
                    "checkpoint " + std::to_string(cp.index) + ": fiber residual " +
                    format_double(cp.max_fiber_residual) + " exceeds tolerance " +
                    format_double(cfg.fiber_tolerance));
        }

        cp.csv_path = (dir / ("posterior_batch" + std::to_string(cp.index) + ".csv")).string();
        detail::write_curve_csv(cp.csv_path, report.grid, cp.mean, cp.sd, prior_sd);
        report.checkpoints.push_back(std::move(cp));
    }

    if (!all_fs.empty()) {
        const PosteriorGP batch = condition(cfg.kernel, cfg.mean, all_fs, all_y, all_noise);
        double dmean = 0.0, dvar = 0.0;
        const auto& last = report.checkpoints.back();
        for (Eigen::Index i = 0; i < n; ++i) {
            dmean = std::max(dmean, std::abs(last.mean[i] - posterior_mean(batch, report.grid[i])));
            const double sv = last.sd[i] * last.sd[i];
            dvar = std::max(dvar, std::abs(sv - posterior_var(batch, report.grid[i])));
        }
        report.seq_vs_batch_mean_sup = dmean;
        report.seq_vs_batch_var_sup = dvar;
        report.equivalence_checked = true;
        if (dmean > 1e-8 || dvar > 1e-8)
            report.failures.push_back("sequential posterior deviates from one-shot conditioning "
                                      "(mean sup " +
                                      format_double(dmean) + ", var sup " + format_double(dvar) +
                                      ", tolerance 1e-08)");
    }

    report.passed = report.failures.empty();

    nlohmann::ordered_json j;
    j["experiment"] = {{"domain", {cfg.domain.lo, cfg.domain.hi}},
                       {"kernel",
                        {{"family", to_string(cfg.kernel.family)},
                         {"lengthscale", cfg.kernel.lengthscale},
                         {"variance", cfg.kernel.variance}}},
                       {"quad_order", cfg.quad_order},
                       {"grid_n", cfg.grid_n},
                       {"seed", cfg.seed},
                       {"fiber_tolerance", cfg.fiber_tolerance}};
    j["checkpoints"] = nlohmann::ordered_json::array();
    for (const auto& cp : report.checkpoints) {
        nlohmann::ordered_json c;
        c["index"] = cp.index;
        c["observations"] = cp.labels;
        c["csv"] = std::filesystem::path(cp.csv_path).filename().string();
        c["jitter"] = cp.jitter;
        if (cp.fiber_checked) c["max_fiber_residual"] = cp.max_fiber_residual;
        c["assimilate_seconds"] = cp.assimilate_seconds;
        j["checkpoints"].push_back(c);
    }
    if (report.equivalence_checked)
        j["sequential_vs_batch"] = {{"mean_sup", report.seq_vs_batch_mean_sup},
                                    {"var_sup", report.seq_vs_batch_var_sup},
                                    {"tolerance", 1e-8}};
    j["passed"] = report.passed;
    j["failures"] = report.failures;

    const fs::path rp = dir / "report.json";
    std::ofstream out = detail::open_output(rp);
    out << j.dump(2) << '\n';
    report.report_path = rp.string();
    return report;
}

// ---------------------------------------------------------------------------
// verify: the full property battery against the independent grid oracle.
// ---------------------------------------------------------------------------

struct CheckRow {
    std::string name;
    double measured = 0.0;
    double tolerance = 0.0;
    bool passed = true;
    bool skipped = false;
    std::string note;
};

struct VerifyReport {
    std::vector<CheckRow> checks;
    bool passed = true;
};

namespace detail {

inline void push_check(VerifyReport& rep, std::string name, double measured, double tolerance,
                       std::string note = "") {
    CheckRow row;
    row.name = std::move(name);
    row.measured = measured;
    row.tolerance = tolerance;
    row.passed = measured <= tolerance;
    row.note = std::move(note);
    rep.passed = rep.passed && row.passed;
    rep.checks.push_back(std::move(row));
}

inline void push_skip(VerifyReport& rep, std::string name, std::string note) {
    CheckRow row;
    row.name = std::move(name);
    row.skipped = true;
    row.note = std::move(note);
    rep.checks.push_back(std::move(row));
}

} // namespace detail

inline VerifyReport verify_experiment(const ExperimentConfig& cfg) {
    VerifyReport rep;

    std::vector<LinearFunctional> all_fs;
    std::vector<std::vector<LinearFunctional>> batch_fs;
    std::vector<Eigen::VectorXd> batch_y;
    std::vector<double> all_noise;
    bool any_noise = false, any_deriv = false;
    for (const auto& specs : cfg.batches) {
        std::vector<LinearFunctional> fs;
        Eigen::VectorXd y(static_cast<Eigen::Index>(specs.size()));
        for (std::size_t i = 0; i < specs.size(); ++i) {
            fs.push_back(build_functional(specs[i], cfg));
            y[static_cast<Eigen::Index>(i)] = observed_value(specs[i], fs.back(), cfg);
            all_noise.push_back(specs[i].noise);
            any_noise = any_noise || specs[i].noise > 0.0;
            any_deriv = any_deriv || specs[i].kind == "derivative";
        }
        all_fs.insert(all_fs.end(), fs.begin(), fs.end());
        batch_fs.push_back(std::move(fs));
        batch_y.push_back(std::move(y));
    }
    Eigen::VectorXd all_y(static_cast<Eigen::Index>(all_fs.size()));
    {
        Eigen::Index k = 0;
        for (const auto& y : batch_y)
            for (Eigen::Index i = 0; i < y.size(); ++i) all_y[k++] = y[i];
    }
    const auto P = static_cast<Eigen::Index>(all_fs.size());
    if (P == 0) {
        detail::push_skip(rep, "all", "config has no observations; nothing to verify");
        return rep;
    }

    const PosteriorGP pg = condition(cfg.kernel, cfg.mean, all_fs, all_y, all_noise);
    std::mt19937_64 rng(cfg.seed ^ 0x5eedf00dULL);
    std::uniform_real_distribution<double> site(cfg.domain.lo, cfg.domain.hi);

    // 1. fiber property
    if (!any_noise)
        detail::push_check(rep, "fiber_property", fiber_check(pg).cwiseAbs().maxCoeff(),
                           cfg.fiber_tolerance);
    else
        detail::push_skip(rep, "fiber_property", "observation noise present");

    // 2. representing-sequence axioms on K_GG
    {
        const Eigen::MatrixXd Y = representing_sequence(pg.sys);
        const Eigen::MatrixXd ortho = Y * pg.sys.kgg * Y.transpose();
        detail::push_check(rep, "representing_orthonormality",
                           (ortho - Eigen::MatrixXd::Identity(P, P)).cwiseAbs().maxCoeff(), 1e-10);
        double parseval = 0.0;
        std::normal_distribution<double> gauss(0.0, 1.0);
        for (int t = 0; t < 100; ++t) {
            Eigen::VectorXd x(P);
            for (Eigen::Index i = 0; i < P; ++i) x[i] = gauss(rng);
            const Eigen::VectorXd kx = pg.sys.kgg * x;
            double lhs = 0.0;
            for (Eigen::Index i = 0; i < P; ++i) {
                const double c = Y.row(i).dot(kx);
                lhs += c * c;
            }
            parseval = std::max(parseval, std::abs(lhs - x.dot(kx)) / x.squaredNorm());
        }
        detail::push_check(rep, "representing_parseval", parseval, 1e-9);

        // 3. representing-form vs direct-solve posterior on a 101-grid
        double dm = 0.0, dc = 0.0;
        const Eigen::VectorXd g101 = Eigen::VectorXd::LinSpaced(101, cfg.domain.lo, cfg.domain.hi);
        for (Eigen::Index i = 0; i < g101.size(); ++i) {
            dm = std::max(dm, std::abs(posterior_mean_via_representing(pg, Y, g101[i]) -
                                       posterior_mean(pg, g101[i])));
            const double s2 = g101[(i * 37) % 101];
            dc = std::max(dc, std::abs(posterior_cov_via_representing(pg, Y, g101[i], s2) -
                                       posterior_cov(pg, g101[i], s2)));
        }
        detail::push_check(rep, "representing_vs_direct", std::max(dm, dc), 1e-9);
    }

    // 4. grid-oracle agreement (independent discretized conditioning)
    {
        const GridMeasure prior = discretize(cfg.kernel, cfg.mean, cfg.oracle_n, cfg.domain);
        const Eigen::MatrixXd W = weights_matrix(all_fs, prior.grid);
        Eigen::VectorXd noise_diag = Eigen::VectorXd::Zero(P);
        for (Eigen::Index i = 0; i < P; ++i) noise_diag[i] = all_noise[static_cast<std::size_t>(i)];
        Eigen::MatrixXd oracle_kgg = W * prior.cov * W.transpose();
        oracle_kgg.diagonal() += noise_diag; // analytic kgg carries noise on its diagonal
        detail::push_check(rep, "oracle_gram_entrywise",
                           (oracle_kgg - pg.sys.kgg).cwiseAbs().maxCoeff(), 1e-6,
                           "n = " + std::to_string(cfg.oracle_n));

        const GridMeasure post = oracle_condition(prior, W, all_y, noise_diag);
        double dmean = 0.0, dsd = 0.0;
        for (Eigen::Index i = 0; i < post.size(); ++i) {
            dmean = std::max(dmean, std::abs(post.mean[i] - posterior_mean(pg, post.grid[i])));
            const double osd = std::sqrt(std::max(0.0, post.cov(i, i)));
            dsd = std::max(dsd, std::abs(osd - posterior_sd(pg, post.grid[i])));
        }
        const double tol = any_deriv ? 5e-5 : 1e-5;
        detail::push_check(rep, "oracle_posterior_mean_sup", dmean, tol);
        detail::push_check(rep, "oracle_posterior_sd_sup", dsd, tol);
    }

    // 5. transitivity: config batching and two random re-splits vs one shot
    {
        Eigen::VectorXd probes(20);
        for (Eigen::Index i = 0; i < probes.size(); ++i) probes[i] = site(rng);

        auto sweep = [&](const std::vector<std::vector<LinearFunctional>>& bfs,
                         const std::vector<Eigen::VectorXd>& bys, std::size_t noise_offset) {
            PosteriorState st(cfg.kernel, cfg.mean);
            std::size_t off = noise_offset;
            for (std::size_t t = 0; t < bfs.size(); ++t) {
                std::vector<double> nz(all_noise.begin() + static_cast<std::ptrdiff_t>(off),
                                       all_noise.begin() +
                                           static_cast<std::ptrdiff_t>(off + bfs[t].size()));
                st = assimilate(st, bfs[t], bys[t], nz);
                off += bfs[t].size();
            }
            double d = 0.0;
            for (Eigen::Index i = 0; i < probes.size(); ++i) {
                d = std::max(d, std::abs(seq_mean(st, probes[i]) - posterior_mean(pg, probes[i])));
                for (Eigen::Index j = 0; j < probes.size(); j += 5)
                    d = std::max(d, std::abs(seq_cov(st, probes[i], probes[j]) -
                                             posterior_cov(pg, probes[i], probes[j])));
            }
            return d;
        };

        double worst = sweep(batch_fs, batch_y, 0);
        std::uniform_int_distribution<int> nsplit(1, 4);
        for (int rep_i = 0; rep_i < 2; ++rep_i) {
            const int parts = std::min<int>(nsplit(rng), static_cast<int>(P));
            std::vector<Eigen::Index> cuts = {0, P};
            std::uniform_int_distribution<Eigen::Index> cut(1, P - 1);
            for (int c = 1; c < parts; ++c) cuts.push_back(cut(rng));
            std::sort(cuts.begin(), cuts.end());
            std::vector<std::vector<LinearFunctional>> bfs;
            std::vector<Eigen::VectorXd> bys;
            for (std::size_t c = 0; c + 1 < cuts.size(); ++c) {
                if (cuts[c + 1] == cuts[c]) continue;
                std::vector<LinearFunctional> fs(all_fs.begin() + cuts[c],
                                                 all_fs.begin() + cuts[c + 1]);
                bfs.push_back(std::move(fs));
                bys.push_back(all_y.segment(cuts[c], cuts[c + 1] - cuts[c]));
            }
            worst = std::max(worst, sweep(bfs, bys, 0));
        }
        detail::push_check(rep, "transitivity_sequential_vs_batch", worst, 1e-8);
    }

    // 6. expanded two-stage formulae vs direct posterior
    if (P >= 2 && !any_noise) {
        const Eigen::Index half = P / 2;
        const std::vector<LinearFunctional> b1(all_fs.begin(), all_fs.begin() + half);
        const std::vector<LinearFunctional> b2(all_fs.begin() + half, all_fs.end());
        const ExpandedTwoStage ex(cfg.kernel, cfg.mean, b1, all_y.head(half), b2,
                                  all_y.tail(P - half));
        double d = 0.0;
        for (int i = 0; i < 20; ++i) {
            const double s1 = site(rng), s2 = site(rng);
            d = std::max(d, std::abs(ex.mean(s1) - posterior_mean(pg, s1)));
            d = std::max(d, std::abs(ex.cov(s1, s2) - posterior_cov(pg, s1, s2)));
        }
        detail::push_check(rep, "expanded_two_stage_vs_direct", d, 1e-8);
    } else {
        detail::push_skip(rep, "expanded_two_stage_vs_direct",
                          any_noise ? "observation noise present" : "needs at least 2 observations");
    }

    // 7. variance reduction at random sites
    {
        double excess = 0.0;
        for (int i = 0; i < 200; ++i) {
            const double s = site(rng);
            excess = std::max(excess,
                              posterior_var(pg, s) - kernel_eval(cfg.kernel, s, s));
        }
        detail::push_check(rep, "variance_reduction", std::max(0.0, excess), 1e-10);
    }

    return rep;
}

// ---------------------------------------------------------------------------
// prior sampling and spectrum export
// ---------------------------------------------------------------------------

inline std::string sample_prior(const ExperimentConfig& cfg, Eigen::Index count,
                                const std::string& out_dir) {
    const GridMeasure prior =
        discretize(cfg.kernel, cfg.mean, cfg.grid_n, cfg.domain);
    const Eigen::MatrixXd draws = sample(prior, count, cfg.seed);
    const std::filesystem::path path = std::filesystem::path(out_dir) / "prior_samples.csv";
    std::ofstream out = detail::open_output(path);
    out << "s";
    for (Eigen::Index c = 0; c < count; ++c) out << ",sample_" << (c + 1);
    out << '\n';
    for (Eigen::Index i = 0; i < prior.size(); ++i) {
        out << format_double(prior.grid[i]);
        for (Eigen::Index c = 0; c < count; ++c) out << ',' << format_double(draws(c, i));
        out << '\n';
    }
    return path.string();
}

struct SpectrumRun {
    MercerSpectrum spectrum;
    PowerRkhsResult check;
    std::string csv_path;
};

inline SpectrumRun run_spectrum(const ExperimentConfig& cfg, const std::string& out_dir) {
    SpectrumRun res;
    res.spectrum = mercer_spectrum(cfg.kernel, cfg.spectrum_n, cfg.domain);
    res.check = power_rkhs_check(res.spectrum, cfg.theta);
    const std::filesystem::path path = std::filesystem::path(out_dir) / "spectrum.csv";
    std::ofstream out = detail::open_output(path);
    out << "index,eigenvalue,term,partial_sum\n";
    for (Eigen::Index i = 0; i < res.spectrum.eigenvalues.size(); ++i) {
        const double term = i == 0 ? res.check.partial_sums[0]
                                   : res.check.partial_sums[i] - res.check.partial_sums[i - 1];
        out << (i + 1) << ',' << format_double(res.spectrum.eigenvalues[i]) << ','
            << format_double(term) << ',' << format_double(res.check.partial_sums[i]) << '\n';
    }
    res.csv_path = path.string();
    return res;
}

} // namespace opgp
