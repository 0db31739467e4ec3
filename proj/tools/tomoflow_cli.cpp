#include <omp.h>

#include <CLI11.hpp>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <string>

#include "tomoflow/error.hpp"
#include "tomoflow/pipeline.hpp"

namespace {

// TOMOFLOW_THREADS=<n> overrides the OpenMP thread count.
void apply_thread_override() {
    const char* env = std::getenv("TOMOFLOW_THREADS");
    if (!env || !*env) return;
    char* end = nullptr;
    const long n = std::strtol(env, &end, 10);
    if (*end != '\0' || n < 1) throw tomoflow::ConfigError(std::string("TOMOFLOW_THREADS must be a positive integer, got '") + env + "'");
    omp_set_num_threads(static_cast<int>(n));
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"tomoflow: joint reconstruction and motion estimation for gated tomography"};
    app.require_subcommand(1);

    std::string config_path;
    std::string method = "joint";
    std::string out_dir;
    bool verbose = false;

    auto add_common = [&](CLI::App* cmd) {
        cmd->add_option("--config", config_path, "experiment JSON file")->required();
        cmd->add_option("--out", out_dir, "output directory (overrides output.dir)");
    };
    CLI::App* phantom = app.add_subcommand("phantom", "render the ground-truth gate images");
    CLI::App* simulate = app.add_subcommand("simulate", "project the phantom and add noise");
    CLI::App* reconstruct = app.add_subcommand("reconstruct", "run a reconstruction");
    CLI::App* metrics = app.add_subcommand("metrics", "score reconstructions against the phantom");
    for (CLI::App* cmd : {phantom, simulate, reconstruct, metrics}) add_common(cmd);
    reconstruct->add_option("--method", method, "joint or static-tv")->check(CLI::IsMember({"joint", "static-tv"}));
    reconstruct->add_flag("-v,--verbose", verbose, "print the objective every 10 iterations");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        apply_thread_override();
        tomoflow::ExperimentConfig cfg = tomoflow::load_config(config_path);
        if (!out_dir.empty()) cfg.out_dir = out_dir;

        if (phantom->parsed()) {
            tomoflow::cmd_phantom(cfg);
        } else if (simulate->parsed()) {
            const auto m = tomoflow::cmd_simulate(cfg);
            std::cout << "achieved SNR: " << m.extra.value("achieved_snr_db", nlohmann::json("inf")).dump() << " dB\n";
        } else if (reconstruct->parsed()) {
            tomoflow::IterationObserver observer;
            if (verbose) {
                observer = [](const tomoflow::IterationLog& e) {
                    if (e.iteration % 10 == 0) {
                        std::printf("iter %4d  objective %.6e  (fidelity %.4e, motion %.3e, tv %.4e)\n", e.iteration,
                                    e.objective.total(), e.objective.fidelity, e.objective.motion, e.objective.tv);
                    }
                };
            }
            tomoflow::cmd_reconstruct(cfg, tomoflow::parse_method(method), observer);
        } else if (metrics->parsed()) {
            tomoflow::cmd_metrics(cfg);
            std::ifstream table(cfg.out_dir / "metrics" / "table.txt");
            std::cout << table.rdbuf();
        }
    } catch (const tomoflow::ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 2;
    } catch (const tomoflow::InputError& e) {
        std::cerr << "input error: " << e.what() << '\n';
        return 3;
    } catch (const tomoflow::NumericalError& e) {
        std::cerr << "numerical error: " << e.what() << '\n';
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
