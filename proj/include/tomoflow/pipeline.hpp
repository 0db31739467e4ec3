#pragma once

#include <filesystem>
#include <json.hpp>
#include <string>
#include <vector>

#include "tomoflow/metrics.hpp"
#include "tomoflow/radon.hpp"
#include "tomoflow/sim.hpp"
#include "tomoflow/solver.hpp"

namespace tomoflow {

namespace fs = std::filesystem;

/// Per-gate view sets: gate i sees `views_per_gate` angles evenly covering
/// [(i - 1) stagger, (i - 1) stagger + pi), with stagger = stagger_pi * pi.
struct GeometrySpec {
    int views_per_gate = 12;
    double stagger_pi = 1.0 / 36.0;
    int n_bins = 620;
    double s_min = -24.0;
    double s_max = 24.0;
};

/// One experiment, read from a single JSON file with sections grid, phantom,
/// geometry, noise, solver and output. Unknown keys are errors.
struct ExperimentConfig {
    Grid2 grid;
    PhantomSpec phantom;
    GeometrySpec geometry;
    NoiseSpec noise;
    RunConfig solver;
    fs::path out_dir = "out";
    fs::path base_dir;  ///< directory of the config file; relative input paths resolve against it
    nlohmann::json snapshot;  ///< normalized config with every default filled in

    GatedGeometry gated_geometry() const;
    /// Git-style hash of the normalized snapshot.
    std::string hash() const;
};

/// Throws ConfigError on malformed or unknown entries, InputError if the file is missing.
ExperimentConfig parse_config(const nlohmann::json& j, const fs::path& base_dir = {});
ExperimentConfig load_config(const fs::path& path);

enum class Method { joint, static_tv };
std::string method_name(Method m);
Method parse_method(const std::string& s);

/// Run record written next to each command's outputs. File paths are relative
/// to the output directory.
struct Manifest {
    std::string command;
    nlohmann::json config;
    std::string config_hash;
    std::vector<std::pair<std::string, std::string>> inputs;   ///< (path, git blob hash)
    std::vector<std::pair<std::string, std::string>> outputs;  ///< (path, git blob hash)
    nlohmann::json extra = nlohmann::json::object();           ///< seeds, achieved SNR, timings

    nlohmann::json to_json() const;
    static Manifest from_json(const nlohmann::json& j);
};

void write_manifest(const fs::path& path, const Manifest& m);
/// Loads a manifest and checks that every output it names exists with a matching
/// hash and that it was produced from the same config sections as `cfg`.
/// Throws InputError on any mismatch (missing, modified or stale inputs).
Manifest load_verified_manifest(const fs::path& path, const ExperimentConfig& cfg,
                                const std::vector<std::string>& sections);

fs::path phantom_manifest_path(const fs::path& out);
fs::path simulate_manifest_path(const fs::path& out);
fs::path reconstruct_manifest_path(const fs::path& out, Method m);
fs::path metrics_manifest_path(const fs::path& out);

/// phantom/gate_<i>.bin for i = 0..N plus phantom/manifest.json.
Manifest cmd_phantom(const ExperimentConfig& cfg);
/// simulate/clean_gate_<i>.bin and simulate/noisy_gate_<i>.bin for i = 1..N plus manifest.
Manifest cmd_simulate(const ExperimentConfig& cfg);
/// joint: reconstruct/joint/gate_<i>.bin, template.bin, velocity_<j>.bin, trace.csv;
/// static-tv: reconstruct/static-tv/image.bin. Every image also gets a PNG.
Manifest cmd_reconstruct(const ExperimentConfig& cfg, Method method, const IterationObserver& observer = {});
/// metrics/metrics.csv and metrics/table.txt for every method that has been reconstructed.
Manifest cmd_metrics(const ExperimentConfig& cfg);

/// iteration,fidelity,motion,tv,total,rel_change_template,rel_change_velocity,wall_seconds
std::string trace_csv(const std::vector<IterationLog>& log);

}  // namespace tomoflow
