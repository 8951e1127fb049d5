#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>
#include <vector>

#include <json.hpp>

namespace fs = std::filesystem;

namespace {

const std::string kCli = OPGP_CLI_PATH;
const std::string kConfigDir = OPGP_CONFIG_DIR;
const fs::path kScratch = OPGP_SCRATCH_DIR;

struct CliResult {
    int exit_code = -1;
    std::string out;
    std::string err;
};

std::string slurp(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    std::stringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

/// Run the CLI with stdout/stderr captured; `prefix` can set env vars.
CliResult run_cli(const std::string& args, const std::string& prefix = "") {
    static int counter = 0;
    fs::create_directories(kScratch);
    const fs::path out = kScratch / ("stdout_" + std::to_string(counter) + ".txt");
    const fs::path err = kScratch / ("stderr_" + std::to_string(counter) + ".txt");
    ++counter;
    const std::string cmd =
        prefix + " \"" + kCli + "\" " + args + " > " + out.string() + " 2> " + err.string();
    const int status = std::system(cmd.c_str());
    CliResult res;
    res.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    res.out = slurp(out);
    res.err = slurp(err);
    return res;
}

fs::path fresh_dir(const std::string& name) {
    const fs::path dir = kScratch / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

fs::path write_config(const std::string& name, const std::string& text) {
    fs::create_directories(kScratch);
    const fs::path path = kScratch / name;
    std::ofstream out(path, std::ios::binary);
    out << text;
    return path;
}

std::string fig2() { return kConfigDir + "/fig2.toml"; }

/// Column values of a curve CSV (header "s,mean,sd,prior_sd").
std::vector<std::string> csv_column(const fs::path& path, std::size_t col) {
    std::ifstream in(path);
    std::string line;
    std::vector<std::string> out;
    bool header = true;
    while (std::getline(in, line)) {
        if (header) {
            header = false;
            continue;
        }
        std::stringstream row(line);
        std::string cell;
        for (std::size_t c = 0; c <= col; ++c) std::getline(row, cell, ',');
        out.push_back(cell);
    }
    return out;
}

} // namespace

TEST_CASE("run emits one checkpoint curve per batch plus the prior") {
    const fs::path dir = fresh_dir("run_fig2");
    const CliResult res = run_cli("run " + fig2() + " --out-dir " + dir.string());
    INFO(res.out << res.err);
    REQUIRE(res.exit_code == 0);
    CHECK(res.out.find("PASSED") != std::string::npos);

    for (int t = 0; t <= 4; ++t)
        CHECK(fs::exists(dir / ("posterior_batch" + std::to_string(t) + ".csv")));
    REQUIRE(fs::exists(dir / "report.json"));

    const auto report = nlohmann::json::parse(slurp(dir / "report.json"));
    CHECK(report["passed"] == true);
    REQUIRE(report["checkpoints"].size() == 5);
    for (const auto& cp : report["checkpoints"])
        if (cp["index"] != 0) {
            REQUIRE(cp.contains("max_fiber_residual"));
            CHECK(cp["max_fiber_residual"].get<double>() <= 1e-8);
        }
    CHECK(report["sequential_vs_batch"]["mean_sup"].get<double>() <= 1e-8);
    CHECK(report["sequential_vs_batch"]["var_sup"].get<double>() <= 1e-8);

    // the prior checkpoint's sd column IS the prior sd column
    const auto sd = csv_column(dir / "posterior_batch0.csv", 2);
    const auto prior_sd = csv_column(dir / "posterior_batch0.csv", 3);
    REQUIRE(sd.size() == 401);
    CHECK(sd == prior_sd);
}

TEST_CASE("identical config and seed give byte-identical outputs") {
    const fs::path a = fresh_dir("determinism_a");
    const fs::path b = fresh_dir("determinism_b");
    REQUIRE(run_cli("run " + fig2() + " --out-dir " + a.string()).exit_code == 0);
    REQUIRE(run_cli("run " + fig2() + " --out-dir " + b.string()).exit_code == 0);
    for (int t = 0; t <= 4; ++t) {
        const std::string name = "posterior_batch" + std::to_string(t) + ".csv";
        CHECK(slurp(a / name) == slurp(b / name));
    }
}

TEST_CASE("an empty observation list reproduces the prior") {
    const fs::path cfg = write_config("empty_obs.toml", R"(
[domain]
lo = -1.0
hi = 1.0
[kernel]
family = "matern52"
lengthscale = 0.4
[output]
grid_n = 101
)");
    const fs::path dir = fresh_dir("run_empty");
    const CliResult res = run_cli("run " + cfg.string() + " --out-dir " + dir.string());
    INFO(res.out << res.err);
    REQUIRE(res.exit_code == 0);
    CHECK(fs::exists(dir / "posterior_batch0.csv"));
    CHECK_FALSE(fs::exists(dir / "posterior_batch1.csv"));
    const auto sd = csv_column(dir / "posterior_batch0.csv", 2);
    const auto prior_sd = csv_column(dir / "posterior_batch0.csv", 3);
    REQUIRE(sd.size() == 101);
    CHECK(sd == prior_sd);
    for (const auto& v : csv_column(dir / "posterior_batch0.csv", 1))
        CHECK(v == "0"); // zero prior mean
}

TEST_CASE("duplicated point observations abort with the singular-Gram exit code") {
    const fs::path cfg = write_config("duplicate_points.toml", R"(
[domain]
lo = -1.0
hi = 1.0
[kernel]
family = "matern52"
lengthscale = 0.4
[[observation]]
kind = "point"
site = 0.2
value = 1.0
[[observation]]
kind = "point"
site = 0.2
value = 2.0
)");
    const fs::path dir = fresh_dir("run_dup");
    const CliResult res = run_cli("run " + cfg.string() + " --out-dir " + dir.string());
    CHECK(res.exit_code == 3);
    CHECK(res.err.find("SingularGram") != std::string::npos);
}

TEST_CASE("schema violations exit with the config error code") {
    const fs::path cfg = write_config("bad_schema.toml", R"(
[domain]
lo = -1.0
hi = 1.0
[kernel]
family = "matern52"
lengthscale = 0.4
wiggliness = 3.0
)");
    const CliResult res = run_cli("run " + cfg.string());
    CHECK(res.exit_code == 2);
    CHECK(res.err.find("ConfigError") != std::string::npos);
    CHECK(res.err.find("wiggliness") != std::string::npos);

    const CliResult missing = run_cli("run /no/such/file.toml");
    CHECK(missing.exit_code == 2);
}

TEST_CASE("the usage contract requires a subcommand") {
    CHECK(run_cli("").exit_code != 0);
    CHECK(run_cli("frobnicate " + fig2()).exit_code != 0);
}

TEST_CASE("verify passes the property battery on the worked example") {
    const CliResult res = run_cli("verify " + fig2());
    INFO(res.out << res.err);
    REQUIRE(res.exit_code == 0);
    CHECK(res.out.find("[FAIL]") == std::string::npos);
    for (const char* name :
         {"fiber_property", "representing_orthonormality", "representing_parseval",
          "representing_vs_direct", "oracle_gram_entrywise", "oracle_posterior_mean_sup",
          "oracle_posterior_sd_sup", "transitivity_sequential_vs_batch",
          "expanded_two_stage_vs_direct", "variance_reduction"}) {
        INFO("missing check: " << name);
        CHECK(res.out.find(std::string("[PASS] ") + name) != std::string::npos);
    }
    CHECK(res.out.find("PASSED") != std::string::npos);
}

TEST_CASE("verify honours the tolerance override") {
    // an impossible fiber tolerance must flip the verdict
    const CliResult res = run_cli("verify " + fig2() + " --tolerance 1e-18");
    CHECK(res.exit_code == 1);
    CHECK(res.out.find("[FAIL] fiber_property") != std::string::npos);
    CHECK(res.out.find("FAILED") != std::string::npos);
}

TEST_CASE("verify skips gracefully when there is nothing to verify") {
    const fs::path cfg = write_config("verify_empty.toml", R"(
[domain]
lo = -1.0
hi = 1.0
[kernel]
family = "matern52"
lengthscale = 0.4
)");
    const CliResult res = run_cli("verify " + cfg.string());
    REQUIRE(res.exit_code == 0);
    CHECK(res.out.find("[SKIP]") != std::string::npos);
}

TEST_CASE("sample-prior writes seeded sample paths on the output grid") {
    const fs::path dir = fresh_dir("samples");
    const CliResult res =
        run_cli("sample-prior " + fig2() + " --count 3 --seed 5 --out-dir " + dir.string());
    INFO(res.out << res.err);
    REQUIRE(res.exit_code == 0);
    REQUIRE(fs::exists(dir / "prior_samples.csv"));
    const std::string text = slurp(dir / "prior_samples.csv");
    CHECK(text.rfind("s,sample_1,sample_2,sample_3\n", 0) == 0);
    CHECK(std::count(text.begin(), text.end(), '\n') == 402); // header + 401 grid rows

    const fs::path rerun = fresh_dir("samples_rerun");
    REQUIRE(run_cli("sample-prior " + fig2() + " --count 3 --seed 5 --out-dir " +
                    rerun.string())
                .exit_code == 0);
    CHECK(slurp(rerun / "prior_samples.csv") == text);

    const fs::path other = fresh_dir("samples_other");
    REQUIRE(run_cli("sample-prior " + fig2() + " --count 3 --seed 6 --out-dir " +
                    other.string())
                .exit_code == 0);
    CHECK(slurp(other / "prior_samples.csv") != text);
}

TEST_CASE("spectrum exports the eigenvalue table and the summability verdict") {
    const fs::path dir = fresh_dir("spectrum");
    const CliResult res =
        run_cli("spectrum " + fig2() + " --theta 0.5 --spectrum-n 64 --out-dir " + dir.string());
    INFO(res.out << res.err);
    REQUIRE(res.exit_code == 0);
    REQUIRE(fs::exists(dir / "spectrum.csv"));
    const std::string text = slurp(dir / "spectrum.csv");
    CHECK(text.rfind("index,eigenvalue,term,partial_sum\n", 0) == 0);
    CHECK(std::count(text.begin(), text.end(), '\n') == 65);
    CHECK(res.out.find("verdict") != std::string::npos);
}

TEST_CASE("the default output directory comes from the environment") {
    const fs::path dir = fresh_dir("env_outdir");
    const CliResult res =
        run_cli("sample-prior " + fig2() + " --count 2", "OPGP_OUT_DIR=" + dir.string());
    INFO(res.out << res.err);
    REQUIRE(res.exit_code == 0);
    CHECK(fs::exists(dir / "prior_samples.csv"));
}
