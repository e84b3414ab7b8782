#include "qftlab/config.hpp"
#include "qftlab/errors.hpp"

#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <sys/wait.h>

using namespace qftlab;
namespace fs = std::filesystem;

namespace {

const char* free_config = R"(seed: 3
model:
  kind: pphi2
  axes: [{half_length: 6.0, points: 40}]
  m_inf: 1.0
  modes: 5
  n_max: 2
analysis:
  - task: spectrum
    count: 8
)";

std::string slurp(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    std::ostringstream s;
    s << f.rdbuf();
    return s.str();
}

fs::path scratch(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("qftlab_test_cli_" + name);
    fs::remove_all(p);
    return p;
}

RunOptions to(const fs::path& dir) {
    RunOptions o;
    o.output_dir = dir;
    return o;
}

int line_of(const std::string& text, const char* needle) {
    const auto pos = text.find(needle);
    return 1 + static_cast<int>(std::count(text.begin(), text.begin() + static_cast<long>(pos), '\n'));
}

int run_binary(const std::string& args) {
    const int status = std::system((std::string(QFTLAB_CLI) + " " + args + " > /dev/null 2>&1").c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST(Config, MinimalFreeSpectrum) {
    const fs::path dir = scratch("minimal");
    const RunResult r = run_experiment(parse_config(free_config), to(dir));
    ASSERT_EQ(r.files.size(), 2u);
    const auto rep = nlohmann::json::parse(slurp(dir / "01_spectrum.json"));
    const auto& res = rep["result"];
    EXPECT_EQ(res["dim"].get<int>(), 21);
    EXPECT_EQ(res["eigenvalues"].size(), 8u);
    // V = 0: the lowest levels are 0, omega_1, omega_2, ...
    const auto& w = res["omega_modes"];
    EXPECT_NEAR(res["eigenvalues"][0].get<double>(), 0.0, 1e-12);
    EXPECT_NEAR(res["eigenvalues"][1].get<double>(), w[0].get<double>(), 1e-12);
    EXPECT_EQ(rep["config_hash"], sha256_hex(free_config));
    EXPECT_EQ(rep["seed"].get<int>(), 3);
    const auto manifest = nlohmann::json::parse(slurp(dir / "manifest.json"));
    EXPECT_EQ(manifest["files"].size(), 1u);
    EXPECT_EQ(manifest["tool_version"], tool_version);
}

TEST(Config, JsonSyntaxIsAccepted) {
    const std::string text = R"({"model": {"axes": [{"half_length": 5, "points": 30}], "modes": 3, "n_max": 2},
                                 "analysis": [{"task": "spectrum"}]})";
    const ExperimentConfig c = parse_config(text);
    EXPECT_EQ(c.model.params.modes, 3);
    ASSERT_EQ(c.tasks.size(), 1u);
    EXPECT_EQ(c.tasks[0].kind, "spectrum");
}

TEST(Config, SchemaErrorsAreLineAnchored) {
    std::string bad = free_config;
    bad.replace(bad.find("count: 8"), 8, "cuont: 8");
    try {
        parse_config(bad);
        FAIL() << "expected ConfigError";
    } catch (const ConfigError& e) {
        EXPECT_EQ(e.line(), line_of(bad, "cuont"));
        EXPECT_NE(std::string(e.what()).find("cuont"), std::string::npos);
        EXPECT_EQ(exit_code_for(e), 2);
    }
    std::string neg = free_config;
    neg.replace(neg.find("n_max: 2"), 8, "n_max: -1");
    try {
        parse_config(neg);
        FAIL() << "expected ConfigError";
    } catch (const ConfigError& e) {
        EXPECT_EQ(e.line(), line_of(neg, "n_max: -1"));
    }
}

TEST(Config, ParseErrorsCarryPosition) {
    try {
        parse_config("model: {axes: [\nanalysis: ]");
        FAIL() << "expected ConfigError";
    } catch (const ConfigError& e) {
        EXPECT_GT(e.line(), 0);
    }
}

TEST(Config, MissingModelSection) {
    EXPECT_THROW(parse_config("analysis:\n  - task: spectrum\n"), ConfigError);
}

TEST(Config, TaskPreconditionsAreStatic) {
    const std::string base = std::string(free_config);
    const auto with_task = [&](const std::string& task) { return base + task; };
    // T grid must start at 1 and increase.
    EXPECT_THROW(parse_config(with_task("  - task: propagation\n    estimate: maxvel\n    T_grid: [0.5, 2]\n"
                                        "    R_factor: 1.2\n    R_prime: 5\n")),
                 ConfigError);
    EXPECT_THROW(parse_config(with_task("  - task: propagation\n    estimate: phasespace_i\n    T_grid: [1, 2]\n"
                                        "    c0: 2\n    c1: 1\n")),
                 ConfigError);
    // minvel needs a bounded window and a threshold ladder.
    EXPECT_THROW(parse_config(with_task("  - task: propagation\n    estimate: minvel\n    T_grid: [1, 2]\n"
                                        "    epsilon: 0.1\n")),
                 ConfigError);
    EXPECT_THROW(parse_config(with_task("  - task: bogus\n")), ConfigError);
    EXPECT_THROW(parse_config(with_task("  - task: spectrum\n")), ConfigError);  // duplicate name
}

TEST(Config, ThresholdCandidatesAreExplicit) {
    const std::string base = std::string(free_config);
    EXPECT_THROW(parse_config(base + "  - task: thresholds\n    cap: 2\n"), ConfigError);
    EXPECT_THROW(parse_config(base + "  - task: thresholds\n    tau_omega: guess\n"), ConfigError);
    EXPECT_THROW(parse_config(base + "  - task: thresholds\n    tau_omega: [1, -1]\n"), ConfigError);

    auto cfg = parse_config(base + "  - task: thresholds\n    tau_omega: free_comparison\n    cap: 2\n");
    const auto model = build_pphi2(cfg.model.params);
    const auto preset = task_result(model, cfg.model, cfg.tasks.back());
    EXPECT_EQ(preset["tau_source"], "preset free_comparison");
    cfg = parse_config(base + "  - task: thresholds\n    tau_omega: [1.0]\n    cap: 2\n");
    const auto listed = task_result(model, cfg.model, cfg.tasks.back());
    EXPECT_EQ(listed["tau_source"], "explicit");
    EXPECT_EQ(listed["points"], preset["points"]);
}

TEST(Config, DecreasingTruncationsAreRejected) {
    EXPECT_THROW(parse_config(std::string(free_config) + "  - task: hvz\n    truncations: [{modes: 4, n_max: 2}]\n"),
                 ConfigError);
}

TEST(Config, VerifyPredictsCapacity) {
    const std::string big = R"(model:
  axes: [{half_length: 10.0, points: 64}]
  modes: 30
  n_max: 10
analysis:
  - task: spectrum
)";
    const ExperimentConfig c = parse_config(big);
    try {
        verify_experiment(c);
        FAIL() << "expected CapacityError";
    } catch (const CapacityError& e) {
        EXPECT_EQ(exit_code_for(e), 3);
    }
    const auto v = verify_experiment(parse_config(free_config));
    EXPECT_EQ(v["status"], "PASS");
    EXPECT_EQ(v["capacity"][0]["dim"].get<int>(), 21);
    EXPECT_GT(v["capacity"][0]["bytes"].get<double>(), 0.0);
}

TEST(Config, MaxvelBelowVelocityBoundFailsVerify) {
    const std::string text = std::string(free_config) +
                             "  - task: propagation\n    estimate: maxvel\n    T_grid: [1, 2]\n"
                             "    R: 0.01\n    R_prime: 5\n";
    const fs::path dir = scratch("maxvel");
    try {
        run_experiment(parse_config(text), to(dir));
        FAIL() << "expected PreconditionViolation";
    } catch (const PreconditionViolation& e) {
        EXPECT_EQ(exit_code_for(e), 4);
    }
    EXPECT_FALSE(fs::exists(dir));
}

TEST(Config, HypothesisViolationLeavesNoOutput) {
    std::string text = free_config;
    // A slowly decaying cutoff fails the weighted-decay precheck; the build itself is well defined.
    text.replace(text.find("  m_inf"), 0,
                 "  polynomial: {degree: 2, coefficients: {2: 0.1}, cutoff: {rational_decay: {mu: 0.5}}}\n");
    const fs::path dir = scratch("hyp");
    try {
        run_experiment(parse_config(text), to(dir));
        FAIL() << "expected HypothesisViolation";
    } catch (const HypothesisViolation& e) {
        EXPECT_EQ(exit_code_for(e), 4);
    }
    EXPECT_FALSE(fs::exists(dir));
    RunOptions forced = to(dir);
    forced.force_hypotheses = true;
    EXPECT_NO_THROW(run_experiment(parse_config(text), forced));
    EXPECT_TRUE(fs::exists(dir / "01_spectrum.json"));
}

TEST(Config, RunsAreDeterministic) {
    const fs::path a = scratch("det_a"), b = scratch("det_b");
    const std::string cfg = std::string(QFTLAB_CONFIG_DIR) + "/pphi2_pipeline.yaml";
    const RunResult ra = run_experiment(load_config(cfg), to(a));
    const RunResult rb = run_experiment(load_config(cfg), to(b));
    ASSERT_EQ(ra.files, rb.files);
    for (const auto& f : ra.files) {
        if (f == "manifest.json") continue;
        EXPECT_EQ(slurp(a / f), slurp(b / f)) << f;
    }
    auto ma = ra.manifest, mb = rb.manifest;
    ma.erase("created");
    mb.erase("created");
    EXPECT_EQ(ma, mb);
    // The pipeline exercises every task kind.
    EXPECT_EQ(ra.manifest["reports"].size(), 9u);
}

TEST(Config, SeedOverrideIsRecorded) {
    const fs::path dir = scratch("seed");
    RunOptions o = to(dir);
    o.seed = 99;
    run_experiment(parse_config(free_config), o);
    EXPECT_EQ(nlohmann::json::parse(slurp(dir / "manifest.json"))["seed"].get<int>(), 99);
}

TEST(Cli, ExitCodes) {
    const fs::path dir = scratch("cli");
    fs::create_directories(dir);
    std::ofstream(dir / "bad.yaml") << "model:\n  axes: [{half_length: 5, points: 20}]\n  modes: 2\n  n_max: 1\n"
                                       "analysis:\n  - task: nope\n";
    std::ofstream(dir / "ok.yaml") << free_config;
    EXPECT_EQ(run_binary("run " + (dir / "bad.yaml").string() + " --output-dir " + (dir / "out_bad").string()), 2);
    EXPECT_FALSE(fs::exists(dir / "out_bad"));
    EXPECT_EQ(run_binary("verify " + std::string(QFTLAB_CONFIG_DIR) + "/capacity_too_large.yaml"), 3);
    EXPECT_EQ(run_binary("verify " + (dir / "ok.yaml").string()), 0);
    EXPECT_EQ(run_binary("run " + (dir / "ok.yaml").string() + " --output-dir " + (dir / "out").string() +
                         " --seed 5"),
              0);
    EXPECT_TRUE(fs::exists(dir / "out" / "manifest.json"));
    EXPECT_NE(run_binary("frobnicate"), 0);
}
