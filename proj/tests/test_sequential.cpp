#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "corpus.hpp"
#include "opgp/posterior.hpp"
#include "opgp/sequential.hpp"

using opgp::assimilate;
using opgp::condition;
using opgp::ExpandedTwoStage;
using opgp::Kernel;
using opgp::kernel_eval;
using opgp::LinearFunctional;
using opgp::MeanFunction;
using opgp::posterior_cov;
using opgp::posterior_mean;
using opgp::PosteriorState;
using opgp::seq_cov;
using opgp::seq_mean;
using opgp::seq_var;
using opgp::timing_report;

namespace {

/// Assimilate system batches per `sizes` (must sum to the functional count).
PosteriorState run_lineage(const corpus::TestSystem& sys, const std::vector<Eigen::Index>& sizes) {
    PosteriorState st(sys.kernel, sys.mean);
    Eigen::Index at = 0;
    for (Eigen::Index sz : sizes) {
        const std::vector<LinearFunctional> fs(sys.fs.begin() + at, sys.fs.begin() + at + sz);
        st = assimilate(st, fs, sys.y.segment(at, sz));
        at += sz;
    }
    REQUIRE(at == static_cast<Eigen::Index>(sys.fs.size()));
    return st;
}

std::vector<double> probe_sites(std::mt19937_64& rng, int count) {
    std::uniform_real_distribution<double> site(-1.0, 1.0);
    std::vector<double> out(static_cast<std::size_t>(count));
    for (double& s : out) s = site(rng);
    return out;
}

} // namespace

TEST_CASE("the first batch is plain batch conditioning") {
    const auto sys = corpus::fig2_system();
    PosteriorState st(sys.kernel, sys.mean);
    st = assimilate(st, sys.fs, sys.y);
    const auto pg = condition(sys.kernel, sys.mean, sys.fs, sys.y);

    CHECK((st.kgg - pg.sys.kgg).cwiseAbs().maxCoeff() == 0.0);
    CHECK((st.alpha - pg.alpha).cwiseAbs().maxCoeff() <= 1e-12);
    std::mt19937_64 rng(101);
    for (double s : probe_sites(rng, 20)) {
        CHECK(seq_mean(st, s) == Catch::Approx(posterior_mean(pg, s)).margin(1e-12));
        CHECK(seq_cov(st, s, 0.1) == Catch::Approx(posterior_cov(pg, s, 0.1)).margin(1e-12));
    }
    CHECK(st.batch_count() == 1);
}

TEST_CASE("an empty state is the prior") {
    const Kernel k = Kernel::matern52(0.4, 1.0);
    const PosteriorState st(k, MeanFunction::constant(0.3));
    CHECK(seq_mean(st, 0.2) == 0.3);
    CHECK(seq_cov(st, 0.2, -0.5) == kernel_eval(k, 0.2, -0.5));
    CHECK(st.size() == 0);
    CHECK(st.batch_count() == 0);
}

TEST_CASE("zero-innovation batches leave the mean alone but still shrink variance") {
    const auto sys = corpus::fig2_system();
    PosteriorState st(sys.kernel, sys.mean);
    st = assimilate(st, {sys.fs[0], sys.fs[1], sys.fs[2]}, sys.y.head(3));

    // predict the next batch from the current posterior mean, then observe
    // exactly those predictions
    const opgp::MeanFn mf =
        opgp::conditional_mean_fn(st.kernel, st.mean, st.functionals, st.alpha);
    const std::vector<LinearFunctional> next(sys.fs.begin() + 3, sys.fs.end());
    Eigen::VectorXd y2(static_cast<Eigen::Index>(next.size()));
    for (std::size_t j = 0; j < next.size(); ++j)
        y2[static_cast<Eigen::Index>(j)] = opgp::apply(next[j], mf.value, mf.deriv);

    const PosteriorState st2 = assimilate(st, next, y2);
    std::mt19937_64 rng(111);
    for (double s : probe_sites(rng, 20)) {
        CHECK(seq_mean(st2, s) == Catch::Approx(seq_mean(st, s)).margin(1e-9));
        CHECK(seq_var(st2, s) <= seq_var(st, s) + 1e-10);
    }
}

TEST_CASE("assimilation does not mutate the input state") {
    const auto sys = corpus::fig2_system();
    PosteriorState st(sys.kernel, sys.mean);
    st = assimilate(st, {sys.fs[0], sys.fs[1], sys.fs[2]}, sys.y.head(3));
    const Eigen::MatrixXd chol_before = st.chol;
    const double mean_before = seq_mean(st, 0.37);

    const std::vector<LinearFunctional> next(sys.fs.begin() + 3, sys.fs.end());
    const PosteriorState st2 = assimilate(st, next, sys.y.tail(4));
    CHECK(st.size() == 3);
    CHECK(st2.size() == 7);
    CHECK((st.chol - chol_before).cwiseAbs().maxCoeff() == 0.0);
    CHECK(seq_mean(st, 0.37) == mean_before);
}

TEST_CASE("exactly observed points are interpolated mid-lineage") {
    const auto sys = corpus::fig2_system();
    PosteriorState st(sys.kernel, sys.mean);
    st = assimilate(st, {sys.fs[0], sys.fs[1], sys.fs[2]}, sys.y.head(3));
    for (int i = 0; i < 3; ++i) {
        const double site = sys.fs[static_cast<std::size_t>(i)].site();
        CHECK(seq_mean(st, site) == Catch::Approx(sys.y[i]).margin(1e-8));
        CHECK(seq_var(st, site) == Catch::Approx(0.0).margin(1e-10));
    }
}

TEST_CASE("adding the derivative observation sequentially equals one-shot conditioning") {
    const auto sys = corpus::fig2_system();
    PosteriorState st(sys.kernel, sys.mean);
    const std::vector<LinearFunctional> first6(sys.fs.begin(), sys.fs.begin() + 6);
    st = assimilate(st, first6, sys.y.head(6));
    st = assimilate(st, {sys.fs[6]}, sys.y.tail(1));

    const auto pg = condition(sys.kernel, sys.mean, sys.fs, sys.y);
    double worst_mean = 0.0, worst_cov = 0.0;
    for (int i = 0; i <= 400; ++i) {
        const double s = -1.0 + 0.005 * i;
        worst_mean = std::max(worst_mean, std::abs(seq_mean(st, s) - posterior_mean(pg, s)));
        worst_cov =
            std::max(worst_cov, std::abs(seq_cov(st, s, s) - posterior_cov(pg, s, s)));
    }
    INFO("sup mean gap " << worst_mean << ", sup var gap " << worst_cov);
    CHECK(worst_mean <= 1e-8);
    CHECK(worst_cov <= 1e-8);
}

TEST_CASE("every split of the worked example yields the same posterior") {
    const auto sys = corpus::fig2_system();
    const std::vector<std::vector<Eigen::Index>> splits = {
        {7}, {3, 1, 2, 1}, {1, 6}, {4, 3}, {2, 2, 2, 1}};
    std::vector<PosteriorState> states;
    for (const auto& sizes : splits) states.push_back(run_lineage(sys, sizes));

    std::mt19937_64 rng(121);
    const auto probes = probe_sites(rng, 20);
    for (std::size_t a = 0; a + 1 < states.size(); ++a)
        for (std::size_t b = a + 1; b < states.size(); ++b)
            for (double s : probes) {
                CHECK(seq_mean(states[a], s) ==
                      Catch::Approx(seq_mean(states[b], s)).margin(1e-8));
                CHECK(seq_cov(states[a], s, -s) ==
                      Catch::Approx(seq_cov(states[b], s, -s)).margin(1e-8));
            }
}

TEST_CASE("transitivity holds across random systems and random splits") {
    std::mt19937_64 rng(131);
    for (int rep = 0; rep < 10; ++rep) {
        const auto sys = corpus::random_system(rng);
        const auto p = static_cast<Eigen::Index>(sys.fs.size());
        const auto cuts = corpus::random_split(rng, p);
        std::vector<Eigen::Index> sizes;
        Eigen::Index prev = 0;
        for (Eigen::Index c : cuts) {
            sizes.push_back(c - prev);
            prev = c;
        }
        sizes.push_back(p - prev);

        const auto st = run_lineage(sys, sizes);
        const auto pg = condition(sys.kernel, sys.mean, sys.fs, sys.y);
        for (double s : probe_sites(rng, 20)) {
            CHECK(seq_mean(st, s) == Catch::Approx(posterior_mean(pg, s)).margin(1e-8));
            CHECK(seq_cov(st, s, 0.3) == Catch::Approx(posterior_cov(pg, s, 0.3)).margin(1e-8));
        }
    }
}

TEST_CASE("posterior variance is monotone along a lineage") {
    const auto sys = corpus::fig2_system();
    PosteriorState st(sys.kernel, sys.mean);
    Eigen::Index at = 0;
    for (Eigen::Index sz : corpus::fig2_batch_sizes()) {
        const std::vector<LinearFunctional> fs(sys.fs.begin() + at, sys.fs.begin() + at + sz);
        const PosteriorState next = assimilate(st, fs, sys.y.segment(at, sz));
        for (int i = 0; i <= 100; ++i) {
            const double s = -1.0 + 0.02 * i;
            CHECK(seq_var(next, s) <= seq_var(st, s) + 1e-10);
        }
        st = next;
        at += sz;
    }
}

TEST_CASE("batch order does not matter for the final posterior") {
    const auto sys = corpus::fig2_system();
    const auto sizes = corpus::fig2_batch_sizes();

    std::vector<std::pair<std::vector<LinearFunctional>, Eigen::VectorXd>> batches;
    Eigen::Index at = 0;
    for (Eigen::Index sz : sizes) {
        batches.emplace_back(
            std::vector<LinearFunctional>(sys.fs.begin() + at, sys.fs.begin() + at + sz),
            sys.y.segment(at, sz));
        at += sz;
    }

    PosteriorState fwd(sys.kernel, sys.mean), rev(sys.kernel, sys.mean);
    for (const auto& [fs, y] : batches) fwd = assimilate(fwd, fs, y);
    for (auto it = batches.rbegin(); it != batches.rend(); ++it)
        rev = assimilate(rev, it->first, it->second);

    std::mt19937_64 rng(141);
    for (double s : probe_sites(rng, 20)) {
        CHECK(seq_mean(fwd, s) == Catch::Approx(seq_mean(rev, s)).margin(1e-8));
        CHECK(seq_cov(fwd, s, 0.0) == Catch::Approx(seq_cov(rev, s, 0.0)).margin(1e-8));
    }
}

TEST_CASE("the accumulated factor reconstructs the accumulated Gram") {
    const auto sys = corpus::fig2_system();
    const auto st = run_lineage(sys, corpus::fig2_batch_sizes());
    Eigen::MatrixXd target = st.kgg;
    for (std::size_t b = 0; b < st.batch_count(); ++b) {
        const Eigen::Index start = st.batch_starts[b];
        const Eigen::Index stop =
            b + 1 < st.batch_count() ? st.batch_starts[b + 1] : st.size();
        for (Eigen::Index i = start; i < stop; ++i) target(i, i) += st.block_jitters[b];
    }
    const Eigen::MatrixXd recon = st.chol * st.chol.transpose();
    CHECK((recon - target).cwiseAbs().maxCoeff() <= 1e-9);
    // strictly lower-triangular factor
    for (Eigen::Index i = 0; i < st.size(); ++i)
        for (Eigen::Index j = i + 1; j < st.size(); ++j) CHECK(st.chol(i, j) == 0.0);
}

TEST_CASE("the sequential posterior stays on the observation fiber") {
    const auto sys = corpus::fig2_system();
    const auto st = run_lineage(sys, corpus::fig2_batch_sizes());
    const Eigen::VectorXd resid = opgp::fiber_check(st);
    REQUIRE(resid.size() == 7);
    CHECK(resid.cwiseAbs().maxCoeff() <= 1e-8);
}

TEST_CASE("redundant batches are rejected with the dedicated error") {
    const auto sys = corpus::fig2_system();
    PosteriorState st(sys.kernel, sys.mean);
    st = assimilate(st, {sys.fs[0], sys.fs[1]}, sys.y.head(2));
    // re-observing an already-assimilated functional noiselessly
    CHECK_THROWS_AS(assimilate(st, {sys.fs[0]}, sys.y.head(1)), opgp::RedundantBatch);
    // ... but a singular FIRST batch is a plain SingularGram, as in condition()
    PosteriorState fresh(sys.kernel, sys.mean);
    Eigen::VectorXd y2(2);
    y2 << 1.0, 1.0;
    CHECK_THROWS_AS(assimilate(fresh, {sys.fs[0], sys.fs[0]}, y2), opgp::SingularGram);
}

TEST_CASE("assimilate validates its inputs") {
    const auto sys = corpus::fig2_system();
    PosteriorState st(sys.kernel, sys.mean);
    CHECK_THROWS_AS(assimilate(st, {sys.fs[0]}, sys.y.head(2)), opgp::DimensionMismatch);
    CHECK_THROWS_AS(assimilate(st, {sys.fs[0]}, sys.y.head(1), {0.1, 0.1}),
                    opgp::DimensionMismatch);
}

TEST_CASE("per-batch noise accumulates like one-shot noisy conditioning") {
    const auto sys = corpus::fig2_system();
    PosteriorState st(sys.kernel, sys.mean);
    st = assimilate(st, {sys.fs[0], sys.fs[1], sys.fs[2]}, sys.y.head(3), {0.1, 0.1, 0.1});
    const std::vector<LinearFunctional> rest(sys.fs.begin() + 3, sys.fs.end());
    st = assimilate(st, rest, sys.y.tail(4), {0.2, 0.2, 0.2, 0.2});

    const auto pg = condition(sys.kernel, sys.mean, sys.fs, sys.y,
                              {0.1, 0.1, 0.1, 0.2, 0.2, 0.2, 0.2});
    std::mt19937_64 rng(151);
    for (double s : probe_sites(rng, 20)) {
        CHECK(seq_mean(st, s) == Catch::Approx(posterior_mean(pg, s)).margin(1e-10));
        CHECK(seq_cov(st, s, s) == Catch::Approx(posterior_cov(pg, s, s)).margin(1e-10));
    }
}

TEST_CASE("expanded two-stage formulas with an empty second batch are single-batch") {
    const auto sys = corpus::fig2_system();
    const std::vector<LinearFunctional> b1(sys.fs.begin(), sys.fs.begin() + 3);
    const ExpandedTwoStage ts(sys.kernel, sys.mean, b1, sys.y.head(3), {}, Eigen::VectorXd());
    const auto pg = condition(sys.kernel, sys.mean, b1, sys.y.head(3));
    for (double s : {-0.7, -0.1, 0.3, 0.9}) {
        CHECK(ts.mean(s) == Catch::Approx(posterior_mean(pg, s)).margin(1e-10));
        CHECK(ts.cov(s, -s) == Catch::Approx(posterior_cov(pg, s, -s)).margin(1e-10));
    }
}

TEST_CASE("expanded two-stage formulas match two-point textbook regression") {
    const Kernel k = Kernel::matern52(0.5, 1.5);
    const MeanFunction m = MeanFunction::constant(-0.2);
    const double s1 = -0.4, s2 = 0.35;
    Eigen::VectorXd y1(1), y2(1);
    y1 << 0.9;
    y2 << -1.1;
    const ExpandedTwoStage ts(k, m, {LinearFunctional::point_eval(s1)}, y1,
                              {LinearFunctional::point_eval(s2)}, y2);

    // direct 2x2 conditioning
    Eigen::MatrixXd K(2, 2);
    K << kernel_eval(k, s1, s1), kernel_eval(k, s1, s2), kernel_eval(k, s2, s1),
        kernel_eval(k, s2, s2);
    Eigen::VectorXd ym(2);
    ym << y1[0] - m(s1), y2[0] - m(s2);
    const Eigen::VectorXd alpha = K.llt().solve(ym);
    for (double s : {-0.8, -0.4, 0.0, 0.35, 0.6}) {
        Eigen::VectorXd ks(2);
        ks << kernel_eval(k, s, s1), kernel_eval(k, s, s2);
        const double want_mean = m(s) + ks.dot(alpha);
        const double want_var = kernel_eval(k, s, s) - ks.dot(K.llt().solve(ks));
        CHECK(ts.mean(s) == Catch::Approx(want_mean).margin(1e-10));
        CHECK(ts.cov(s, s) == Catch::Approx(want_var).margin(1e-10));
    }
}

TEST_CASE("expanded two-stage formulas agree with the incremental path on the worked example") {
    const auto sys = corpus::fig2_system();
    const std::vector<LinearFunctional> b1(sys.fs.begin(), sys.fs.begin() + 6);
    const std::vector<LinearFunctional> b2(sys.fs.begin() + 6, sys.fs.end());
    const ExpandedTwoStage ts(sys.kernel, sys.mean, b1, sys.y.head(6), b2, sys.y.tail(1));

    PosteriorState st(sys.kernel, sys.mean);
    st = assimilate(st, b1, sys.y.head(6));
    st = assimilate(st, b2, sys.y.tail(1));

    std::mt19937_64 rng(161);
    for (double s : probe_sites(rng, 20)) {
        CHECK(ts.mean(s) == Catch::Approx(seq_mean(st, s)).margin(1e-8));
        CHECK(ts.cov(s, 0.21) == Catch::Approx(seq_cov(st, s, 0.21)).margin(1e-8));
    }
}

TEST_CASE("timing report shapes follow the schedule") {
    const Kernel k = Kernel::matern52(0.4, 1.0);
    const MeanFunction m = MeanFunction::zero();

    const auto empty = timing_report(k, m, {}, opgp::Interval{-1.0, 1.0});
    CHECK(empty.rows.empty());
    CHECK(empty.incremental_total == 0.0);

    const auto one = timing_report(k, m, {1}, opgp::Interval{-1.0, 1.0});
    REQUIRE(one.rows.size() == 1);
    CHECK(one.rows[0].batch_size == 1);
    CHECK(one.rows[0].total_observations == 1);
    CHECK(one.rows[0].incremental_seconds >= 0.0);
    CHECK(one.rows[0].full_rebuild_seconds >= 0.0);
}

TEST_CASE("incremental assimilation beats full reconditioning at scale", "[timing]") {
    const Kernel k = Kernel::matern52(0.4, 1.0);
    const std::vector<std::size_t> schedule(64, 8);
    // timing_report itself throws ToleranceExceeded if the incremental path
    // loses at this size; reaching the checks below means it won
    const auto report = timing_report(k, MeanFunction::zero(), schedule, {-1.0, 1.0});
    REQUIRE(report.rows.size() == 64);
    CHECK(report.rows.back().total_observations == 512);
    CHECK(report.incremental_total < report.full_total);
}
