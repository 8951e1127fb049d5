// Experiment runner for GP inference under linear operator observations.
// Subcommands: run, verify, sample-prior, spectrum. Exit code 0 iff every
// embedded check passed.

#include <cstdio>
#include <cstdlib>
#include <exception>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "opgp/config.hpp"
#include "opgp/experiment.hpp"

namespace {

struct CommonArgs {
    std::string config_path;
    std::string out_dir;
    long long quad_order = -1;
    long long oracle_n = -1;
    double tolerance = -1.0;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
    cmd->add_option("config", args.config_path, "experiment config (.toml subset or .json)")
        ->required();
    const char* env_dir = std::getenv("OPGP_OUT_DIR");
    args.out_dir = env_dir ? env_dir : ".";
    cmd->add_option("--out-dir", args.out_dir, "directory for CSV/JSON outputs");
    cmd->add_option("--quad-order", args.quad_order,
                    "override quadrature order for integral functionals");
    cmd->add_option("--oracle-n", args.oracle_n, "override oracle grid size");
    cmd->add_option("--tolerance", args.tolerance, "override fiber residual tolerance");
}

opgp::ExperimentConfig load_with_overrides(const CommonArgs& args) {
    opgp::ExperimentConfig cfg = opgp::load_config(args.config_path);
    if (args.quad_order > 0) cfg.quad_order = static_cast<std::size_t>(args.quad_order);
    if (args.oracle_n > 0) cfg.oracle_n = args.oracle_n;
    if (args.tolerance > 0) cfg.fiber_tolerance = args.tolerance;
    return cfg;
}

int cmd_run(const CommonArgs& args) {
    const opgp::ExperimentConfig cfg = load_with_overrides(args);
    const opgp::RunReport report = opgp::run_experiment(cfg, args.out_dir);
    for (const auto& cp : report.checkpoints) {
        std::cout << "checkpoint " << cp.index << ": " << cp.csv_path;
        if (cp.fiber_checked)
            std::cout << "  max fiber residual " << opgp::format_double(cp.max_fiber_residual);
        std::cout << '\n';
    }
    if (report.equivalence_checked)
        std::cout << "sequential vs batch: mean sup "
                  << opgp::format_double(report.seq_vs_batch_mean_sup) << ", var sup "
                  << opgp::format_double(report.seq_vs_batch_var_sup) << '\n';
    for (const auto& f : report.failures) std::cout << "FAILED: " << f << '\n';
    std::cout << (report.passed ? "PASSED" : "FAILED") << "  (" << report.report_path << ")\n";
    return report.passed ? 0 : 1;
}

int cmd_verify(const CommonArgs& args) {
    const opgp::ExperimentConfig cfg = load_with_overrides(args);
    const opgp::VerifyReport rep = opgp::verify_experiment(cfg);
    for (const auto& c : rep.checks) {
        if (c.skipped) {
            std::cout << "[SKIP] " << c.name << " (" << c.note << ")\n";
            continue;
        }
        std::cout << (c.passed ? "[PASS] " : "[FAIL] ") << c.name
                  << "  measured=" << opgp::format_double(c.measured)
                  << " tolerance=" << opgp::format_double(c.tolerance);
        if (!c.note.empty()) std::cout << "  (" << c.note << ")";
        std::cout << '\n';
    }
    std::cout << (rep.passed ? "PASSED" : "FAILED") << '\n';
    return rep.passed ? 0 : 1;
}

int cmd_sample_prior(const CommonArgs& args, long long count, long long seed) {
    opgp::ExperimentConfig cfg = load_with_overrides(args);
    if (seed >= 0) cfg.seed = static_cast<std::uint64_t>(seed);
    const std::string path = opgp::sample_prior(cfg, count, args.out_dir);
    std::cout << count << " prior draws -> " << path << '\n';
    return 0;
}

int cmd_spectrum(const CommonArgs& args, double theta, long long n) {
    opgp::ExperimentConfig cfg = load_with_overrides(args);
    if (theta > 0) cfg.theta = theta;
    if (n > 0) cfg.spectrum_n = n;
    const opgp::SpectrumRun res = opgp::run_spectrum(cfg, args.out_dir);
    std::cout << "operator spectrum (" << res.spectrum.measure << ", n=" << res.spectrum.grid_size
              << ") -> " << res.csv_path << '\n';
    std::cout << "sum lambda^(1-theta) at theta=" << opgp::format_double(res.check.theta)
              << ": partial sum "
              << opgp::format_double(res.check.partial_sums[res.check.partial_sums.size() - 1])
              << ", tail ratio " << opgp::format_double(res.check.max_tail_ratio) << ", verdict "
              << opgp::to_string(res.check.verdict) << '\n';
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Gaussian process inference under linear operator observations"};
    app.require_subcommand(1);

    CommonArgs run_args, verify_args, sample_args, spectrum_args;
    long long count = 10, sample_seed = -1, spectrum_n = -1;
    double theta = -1.0;

    CLI::App* run_cmd = app.add_subcommand("run", "assimilate the configured observation batches");
    add_common(run_cmd, run_args);
    CLI::App* verify_cmd =
        app.add_subcommand("verify", "cross-check the posterior against the grid oracle");
    add_common(verify_cmd, verify_args);
    CLI::App* sample_cmd = app.add_subcommand("sample-prior", "draw prior sample paths");
    add_common(sample_cmd, sample_args);
    sample_cmd->add_option("--count", count, "number of sample paths")->check(CLI::PositiveNumber);
    sample_cmd->add_option("--seed", sample_seed, "override the config seed");
    CLI::App* spectrum_cmd =
        app.add_subcommand("spectrum", "Nystrom eigenvalues and the power-RKHS diagnostic");
    add_common(spectrum_cmd, spectrum_args);
    spectrum_cmd->add_option("--theta", theta, "RKHS power in (0,1]");
    spectrum_cmd->add_option("--spectrum-n", spectrum_n, "Nystrom grid size");

    CLI11_PARSE(app, argc, argv);

    try {
        if (run_cmd->parsed()) return cmd_run(run_args);
        if (verify_cmd->parsed()) return cmd_verify(verify_args);
        if (sample_cmd->parsed()) return cmd_sample_prior(sample_args, count, sample_seed);
        if (spectrum_cmd->parsed()) return cmd_spectrum(spectrum_args, theta, spectrum_n);
    } catch (const opgp::ConfigError& e) {
        std::cerr << "ConfigError: " << e.what() << '\n';
        return 2;
    } catch (const opgp::SingularGram& e) {
        std::cerr << "SingularGram: " << e.what() << '\n';
        return 3;
    } catch (const opgp::RedundantBatch& e) {
        std::cerr << "RedundantBatch: " << e.what() << '\n';
        return 3;
    } catch (const opgp::ToleranceExceeded& e) {
        std::cerr << "ToleranceExceeded: " << e.what() << '\n';
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
