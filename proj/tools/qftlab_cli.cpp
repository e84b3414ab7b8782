// qftlab - batch runner for experiment configs.
//
//   qftlab run <config> [--output-dir DIR] [--seed N] [--force-hypotheses]
//   qftlab verify <config> [--seed N] [--force-hypotheses]
//
// Exit codes: 0 success, 1 runtime failure, 2 schema, 3 capacity,
// 4 hypothesis or precondition violation. QFTLAB_THREADS sets the thread count.

#include "qftlab/config.hpp"

#include <CLI11.hpp>
#include <Eigen/Core>

#include <cstdlib>
#include <iostream>

int main(int argc, char** argv) {
    CLI::App app{"qftlab: truncated Fock-space spectral and scattering experiments"};
    app.require_subcommand(1);
    std::string config, output_dir;
    std::uint64_t seed = 0;
    bool force = false;

    auto* run = app.add_subcommand("run", "run every task and write the reports");
    run->add_option("config", config, "experiment config (YAML or JSON)")->required();
    run->add_option("--output-dir", output_dir, "override output.directory");
    auto* run_seed = run->add_option("--seed", seed, "override the config seed");
    run->add_flag("--force-hypotheses", force, "build models whose hypothesis prechecks fail");

    auto* verify = app.add_subcommand("verify", "validate the config and predict capacity without computing");
    verify->add_option("config", config, "experiment config (YAML or JSON)")->required();
    auto* verify_seed = verify->add_option("--seed", seed, "override the config seed");
    verify->add_flag("--force-hypotheses", force, "accept failed hypothesis prechecks");

    CLI11_PARSE(app, argc, argv);

    if (const char* t = std::getenv("QFTLAB_THREADS")) {
        const int n = std::atoi(t);
        if (n > 0) Eigen::setNbThreads(n);
    }

    qftlab::RunOptions opts;
    opts.force_hypotheses = force;
    try {
        const qftlab::ExperimentConfig cfg = qftlab::load_config(config);
        if (run->parsed()) {
            if (*run_seed) opts.seed = seed;
            if (!output_dir.empty()) opts.output_dir = output_dir;
            const auto res = qftlab::run_experiment(cfg, opts);
            std::cout << "wrote " << res.files.size() << " files to " << res.directory.string() << "\n";
        } else {
            if (*verify_seed) opts.seed = seed;
            std::cout << qftlab::verify_experiment(cfg, opts).dump(2) << "\n";
        }
    } catch (const std::exception& e) {
        const int code = qftlab::exit_code_for(e);
        std::cerr << "qftlab: " << e.what() << "\n";
        return code;
    }
    return 0;
}
