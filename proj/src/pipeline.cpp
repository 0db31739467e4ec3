#include "tomoflow/pipeline.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numbers>
#include <set>
#include <sstream>

#include "tomoflow/error.hpp"
#include "tomoflow/io.hpp"

namespace tomoflow {

using nlohmann::json;

namespace {

// Reads one config section, remembering which keys were consumed so that
// leftovers (typos) can be reported.
class Section {
public:
    Section(const json& root, const std::string& name) : name_(name) {
        if (!root.contains(name)) {
            node_ = json::object();
        } else if (!root.at(name).is_object()) {
            throw ConfigError("config section '" + name + "' must be an object");
        } else {
            node_ = root.at(name);
        }
    }

    template <typename T>
    T get(const std::string& key, T fallback) {
        used_.insert(key);
        if (!node_.contains(key)) return fallback;
        try {
            return node_.at(key).get<T>();
        } catch (const json::exception&) {
            throw ConfigError("config key '" + name_ + "." + key + "' has the wrong type");
        }
    }

    const json& raw(const std::string& key) {
        used_.insert(key);
        return node_.contains(key) ? node_.at(key) : null_;
    }

    void finish() const {
        for (const auto& [key, value] : node_.items()) {
            if (!used_.count(key)) throw ConfigError("unknown config key '" + name_ + "." + key + "'");
        }
    }

private:
    std::string name_;
    json node_;
    json null_;
    std::set<std::string> used_;
};

template <typename E>
E parse_enum(const std::string& where, const std::string& value, std::initializer_list<std::pair<const char*, E>> options) {
    std::string allowed;
    for (const auto& [name, e] : options) {
        if (value == name) return e;
        allowed += std::string(allowed.empty() ? "" : ", ") + name;
    }
    throw ConfigError("config key '" + where + "' must be one of: " + allowed);
}

const char* kind_name(PhantomKind k) { return k == PhantomKind::stars ? "stars" : "heart"; }
const char* init_name(TemplateInit t) {
    switch (t) {
        case TemplateInit::zero: return "zero";
        case TemplateInit::backprojection: return "backprojection";
        case TemplateInit::file: return "file";
    }
    return "zero";
}
const char* rule_name(StepRule r) { return r == StepRule::endpoint ? "endpoint" : "trapezoid"; }
const char* transport_name(EtaTransport t) { return t == EtaTransport::adjoint ? "adjoint" : "linearized"; }

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InputError("cannot write " + path.string());
    out << text;
}

std::string read_text(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("missing file " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::string fmt17(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

// Records files relative to the output directory together with their hashes.
class FileLog {
public:
    explicit FileLog(fs::path root) : root_(std::move(root)) {}

    void add(const fs::path& abs) {
        entries_.emplace_back(fs::relative(abs, root_).generic_string(), git_blob_hash(abs));
    }
    void add_image(const fs::path& bin) {
        add(bin);
        add(sidecar_path(bin));
    }
    std::vector<std::pair<std::string, std::string>> take() { return std::move(entries_); }

private:
    fs::path root_;
    std::vector<std::pair<std::string, std::string>> entries_;
};

Manifest make_manifest(const std::string& command, const ExperimentConfig& cfg) {
    Manifest m;
    m.command = command;
    m.config = cfg.snapshot;
    m.config_hash = cfg.hash();
    return m;
}

fs::path gate_path(const fs::path& dir, const std::string& stem, int i) {
    return dir / (stem + "_" + std::to_string(i) + ".bin");
}

fs::path png_path(const fs::path& bin) {
    fs::path p = bin;
    return p.replace_extension(".png");
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::vector<Image> read_truth(const ExperimentConfig& cfg) {
    const fs::path dir = cfg.out_dir / "phantom";
    std::vector<Image> truth;
    for (int i = 1; i <= cfg.phantom.N; ++i) truth.push_back(read_image(gate_path(dir, "gate", i)));
    return truth;
}

GatedData read_noisy(const ExperimentConfig& cfg) {
    const fs::path dir = cfg.out_dir / "simulate";
    std::vector<Sinogram> gates;
    for (int i = 1; i <= cfg.phantom.N; ++i) gates.push_back(read_sinogram(gate_path(dir, "noisy_gate", i)));
    const GatedGeometry geom = cfg.gated_geometry();
    for (int i = 0; i < geom.n_gates(); ++i) {
        if (!(gates[i].geometry == geom.gates[i])) {
            throw InputError("simulated data for gate " + std::to_string(i + 1) + " does not match the configured geometry");
        }
    }
    return GatedData::make(geom, std::move(gates));
}

}  // namespace

GatedGeometry ExperimentConfig::gated_geometry() const {
    return staggered_gated_geometry(phantom.N, geometry.views_per_gate, geometry.stagger_pi * std::numbers::pi,
                                    geometry.n_bins, geometry.s_min, geometry.s_max);
}

std::string ExperimentConfig::hash() const { return git_blob_hash_of(snapshot.dump()); }

ExperimentConfig parse_config(const json& j, const fs::path& base_dir) {
    if (!j.is_object()) throw ConfigError("config must be a JSON object");
    const std::set<std::string> sections = {"grid", "phantom", "geometry", "noise", "solver", "output"};
    for (const auto& [key, value] : j.items()) {
        if (!sections.count(key)) throw ConfigError("unknown config section '" + key + "'");
    }

    ExperimentConfig cfg;
    cfg.base_dir = base_dir;

    Section grid(j, "grid");
    try {
        cfg.grid = Grid2::make(grid.get("nx", 64), grid.get("ny", 64), grid.get("x_min", -16.0),
                               grid.get("x_max", 16.0), grid.get("y_min", -16.0), grid.get("y_max", 16.0));
    } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("grid: ") + e.what());
    }
    grid.finish();

    Section ph(j, "phantom");
    PhantomSpec& p = cfg.phantom;
    p.grid = cfg.grid;
    p.kind = parse_enum<PhantomKind>("phantom.kind", ph.get<std::string>("kind", "stars"),
                                     {{"stars", PhantomKind::stars}, {"heart", PhantomKind::heart}});
    p.N = ph.get("N", p.N);
    p.seed = ph.get<std::uint64_t>("seed", p.seed);
    p.translation = ph.get("translation", p.translation);
    p.rotation = ph.get("rotation", p.rotation);
    p.scale = ph.get("scale", p.scale);
    p.contraction = ph.get("contraction", p.contraction);
    p.supersample = ph.get("supersample", p.supersample);
    ph.finish();
    p.validate();

    Section ge(j, "geometry");
    GeometrySpec& g = cfg.geometry;
    g.views_per_gate = ge.get("views_per_gate", g.views_per_gate);
    g.stagger_pi = ge.get("stagger_pi", g.stagger_pi);
    g.n_bins = ge.get("n_bins", g.n_bins);
    g.s_min = ge.get("s_min", g.s_min);
    g.s_max = ge.get("s_max", g.s_max);
    ge.finish();
    if (g.views_per_gate < 1) throw ConfigError("geometry.views_per_gate must be >= 1");
    try {
        (void)cfg.gated_geometry();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("geometry: ") + e.what());
    }

    Section no(j, "noise");
    const json& snr = no.raw("target_snr_db");
    if (snr.is_null() || (snr.is_string() && snr.get<std::string>() == "inf")) {
        cfg.noise.target_snr_db = std::numeric_limits<double>::infinity();
    } else if (snr.is_number()) {
        cfg.noise.target_snr_db = snr.get<double>();
    } else {
        throw ConfigError("noise.target_snr_db must be a number, \"inf\" or null");
    }
    cfg.noise.seed = no.get<std::uint64_t>("seed", 0);
    no.finish();
    if (!std::isfinite(cfg.noise.target_snr_db) && cfg.noise.target_snr_db < 0) {
        throw ConfigError("noise.target_snr_db must not be -inf");
    }

    Section so(j, "solver");
    RunConfig& r = cfg.solver;
    r.mu1 = so.get("mu1", r.mu1);
    r.mu2 = so.get("mu2", r.mu2);
    r.sigma = so.get("sigma", r.sigma);
    r.alpha = so.get("alpha", r.alpha);
    r.beta = so.get("beta", r.beta);
    r.M = so.get("M", r.M);
    r.N = p.N;
    r.K = so.get("K", r.K);
    r.K_template = so.get("K_template", r.K_template);
    r.K_velocity = so.get("K_velocity", r.K_velocity);
    r.eps_template = so.get("eps_template", r.eps_template);
    r.eps_velocity = so.get("eps_velocity", r.eps_velocity);
    r.tv_epsilon = so.get("tv_epsilon", r.tv_epsilon);
    r.init_template = parse_enum<TemplateInit>(
        "solver.init_template", so.get<std::string>("init_template", "zero"),
        {{"zero", TemplateInit::zero}, {"backprojection", TemplateInit::backprojection}, {"file", TemplateInit::file}});
    r.init_template_path = so.get<std::string>("init_template_path", "");
    r.step_rule = parse_enum<StepRule>("solver.step_rule", so.get<std::string>("step_rule", "trapezoid"),
                                       {{"trapezoid", StepRule::trapezoid}, {"endpoint", StepRule::endpoint}});
    r.eta_transport =
        parse_enum<EtaTransport>("solver.eta_transport", so.get<std::string>("eta_transport", "adjoint"),
                                 {{"adjoint", EtaTransport::adjoint}, {"linearized", EtaTransport::linearized}});
    r.seed = so.get<std::uint64_t>("seed", r.seed);
    so.finish();
    r.validate();

    Section out(j, "output");
    cfg.out_dir = out.get<std::string>("dir", "out");
    out.finish();

    cfg.snapshot = json{
        {"grid",
         {{"nx", cfg.grid.nx}, {"ny", cfg.grid.ny}, {"x_min", cfg.grid.x_min}, {"x_max", cfg.grid.x_max},
          {"y_min", cfg.grid.y_min}, {"y_max", cfg.grid.y_max}}},
        {"phantom",
         {{"kind", kind_name(p.kind)}, {"N", p.N}, {"seed", p.seed}, {"translation", p.translation},
          {"rotation", p.rotation}, {"scale", p.scale}, {"contraction", p.contraction},
          {"supersample", p.supersample}}},
        {"geometry",
         {{"views_per_gate", g.views_per_gate}, {"stagger_pi", g.stagger_pi}, {"n_bins", g.n_bins},
          {"s_min", g.s_min}, {"s_max", g.s_max}}},
        {"noise",
         {{"target_snr_db", std::isfinite(cfg.noise.target_snr_db) ? json(cfg.noise.target_snr_db) : json("inf")},
          {"seed", cfg.noise.seed}}},
        {"solver",
         {{"mu1", r.mu1}, {"mu2", r.mu2}, {"sigma", r.sigma}, {"alpha", r.alpha}, {"beta", r.beta}, {"M", r.M},
          {"K", r.K}, {"K_template", r.K_template}, {"K_velocity", r.K_velocity}, {"eps_template", r.eps_template},
          {"eps_velocity", r.eps_velocity}, {"tv_epsilon", r.tv_epsilon}, {"init_template", init_name(r.init_template)},
          {"init_template_path", r.init_template_path}, {"step_rule", rule_name(r.step_rule)},
          {"eta_transport", transport_name(r.eta_transport)}, {"seed", r.seed}}},
    };
    return cfg;
}

ExperimentConfig load_config(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw InputError("config file not found: " + path.string());
    json j;
    try {
        j = json::parse(in);
    } catch (const json::exception& e) {
        throw ConfigError("config " + path.string() + " is not valid JSON: " + e.what());
    }
    return parse_config(j, path.parent_path());
}

std::string method_name(Method m) { return m == Method::joint ? "joint" : "static-tv"; }

Method parse_method(const std::string& s) {
    if (s == "joint") return Method::joint;
    if (s == "static-tv") return Method::static_tv;
    throw ConfigError("unknown method '" + s + "' (expected joint or static-tv)");
}

json Manifest::to_json() const {
    auto files = [](const std::vector<std::pair<std::string, std::string>>& list) {
        json arr = json::array();
        for (const auto& [path, hash] : list) arr.push_back({{"path", path}, {"hash", hash}});
        return arr;
    };
    return json{{"command", command}, {"config", config},          {"config_hash", config_hash},
                {"inputs", files(inputs)}, {"outputs", files(outputs)}, {"extra", extra}};
}

Manifest Manifest::from_json(const json& j) {
    Manifest m;
    try {
        m.command = j.at("command").get<std::string>();
        m.config = j.at("config");
        m.config_hash = j.at("config_hash").get<std::string>();
        for (const auto& f : j.at("inputs")) m.inputs.emplace_back(f.at("path"), f.at("hash"));
        for (const auto& f : j.at("outputs")) m.outputs.emplace_back(f.at("path"), f.at("hash"));
        m.extra = j.value("extra", json::object());
    } catch (const json::exception& e) {
        throw InputError(std::string("malformed manifest: ") + e.what());
    }
    return m;
}

void write_manifest(const fs::path& path, const Manifest& m) { write_text(path, m.to_json().dump(2) + "\n"); }

Manifest load_verified_manifest(const fs::path& path, const ExperimentConfig& cfg,
                                const std::vector<std::string>& sections) {
    if (!fs::exists(path)) throw InputError("missing manifest " + path.string() + " (run the earlier step first)");
    json j;
    try {
        j = json::parse(read_text(path));
    } catch (const json::exception& e) {
        throw InputError("manifest " + path.string() + " is not valid JSON: " + e.what());
    }
    Manifest m = Manifest::from_json(j);
    for (const auto& section : sections) {
        if (m.config.value(section, json()) != cfg.snapshot.value(section, json())) {
            throw InputError("stale input: " + path.string() + " was produced with a different '" + section +
                             "' configuration");
        }
    }
    for (const auto& [rel, hash] : m.outputs) {
        const fs::path file = cfg.out_dir / rel;
        if (!fs::exists(file)) throw InputError("file named in " + path.string() + " is missing: " + file.string());
        if (git_blob_hash(file) != hash) throw InputError("file was modified after it was written: " + file.string());
    }
    return m;
}

fs::path phantom_manifest_path(const fs::path& out) { return out / "phantom" / "manifest.json"; }
fs::path simulate_manifest_path(const fs::path& out) { return out / "simulate" / "manifest.json"; }
fs::path reconstruct_manifest_path(const fs::path& out, Method m) {
    return out / "reconstruct" / method_name(m) / "manifest.json";
}
fs::path metrics_manifest_path(const fs::path& out) { return out / "metrics" / "manifest.json"; }

Manifest cmd_phantom(const ExperimentConfig& cfg) {
    const auto t0 = std::chrono::steady_clock::now();
    const fs::path dir = cfg.out_dir / "phantom";
    fs::create_directories(dir);
    const std::vector<Image> gates = make_phantom(cfg.phantom);

    Manifest m = make_manifest("phantom", cfg);
    FileLog files(cfg.out_dir);
    for (std::size_t i = 0; i < gates.size(); ++i) {
        const fs::path bin = gate_path(dir, "gate", static_cast<int>(i));
        write_image(bin, gates[i]);
        files.add_image(bin);
    }
    m.outputs = files.take();
    m.extra["phantom_seed"] = cfg.phantom.seed;
    m.extra["seconds"] = seconds_since(t0);
    write_manifest(phantom_manifest_path(cfg.out_dir), m);
    return m;
}

Manifest cmd_simulate(const ExperimentConfig& cfg) {
    const auto t0 = std::chrono::steady_clock::now();
    const Manifest upstream = load_verified_manifest(phantom_manifest_path(cfg.out_dir), cfg, {"grid", "phantom"});
    const std::vector<Image> truth = read_truth(cfg);
    const GatedGeometry geom = cfg.gated_geometry();
    const std::vector<Sinogram> clean = simulate_data(truth, geom);
    const NoisyData noisy = add_noise(clean, cfg.noise);

    const fs::path dir = cfg.out_dir / "simulate";
    fs::create_directories(dir);
    Manifest m = make_manifest("simulate", cfg);
    m.inputs = upstream.outputs;
    FileLog files(cfg.out_dir);
    for (int i = 1; i <= geom.n_gates(); ++i) {
        const fs::path c = gate_path(dir, "clean_gate", i);
        const fs::path n = gate_path(dir, "noisy_gate", i);
        write_sinogram(c, clean[i - 1]);
        write_sinogram(n, noisy.data[i - 1]);
        files.add_image(c);
        files.add_image(n);
    }
    m.outputs = files.take();
    m.extra["noise_seed"] = cfg.noise.seed;
    m.extra["target_snr_db"] = std::isfinite(cfg.noise.target_snr_db) ? json(cfg.noise.target_snr_db) : json("inf");
    m.extra["achieved_snr_db"] = std::isfinite(noisy.achieved_snr_db) ? json(noisy.achieved_snr_db) : json("inf");
    m.extra["seconds"] = seconds_since(t0);
    write_manifest(simulate_manifest_path(cfg.out_dir), m);
    return m;
}

std::string trace_csv(const std::vector<IterationLog>& log) {
    std::string out = "iteration,fidelity,motion,tv,total,rel_change_template,rel_change_velocity,wall_seconds\n";
    for (const auto& e : log) {
        out += std::to_string(e.iteration) + ',' + fmt17(e.objective.fidelity) + ',' + fmt17(e.objective.motion) +
               ',' + fmt17(e.objective.tv) + ',' + fmt17(e.objective.total()) + ',' + fmt17(e.rel_change_template) +
               ',' + fmt17(e.rel_change_velocity) + ',' + fmt17(e.wall_seconds) + '\n';
    }
    return out;
}

Manifest cmd_reconstruct(const ExperimentConfig& cfg, Method method, const IterationObserver& observer) {
    const auto t0 = std::chrono::steady_clock::now();
    const Manifest upstream =
        load_verified_manifest(simulate_manifest_path(cfg.out_dir), cfg, {"grid", "phantom", "geometry", "noise"});
    const GatedData data = read_noisy(cfg);

    std::optional<Image> init;
    if (cfg.solver.init_template == TemplateInit::file) {
        init = read_image(cfg.base_dir / cfg.solver.init_template_path);
    }

    const fs::path dir = cfg.out_dir / "reconstruct" / method_name(method);
    fs::create_directories(dir);
    Manifest m = make_manifest("reconstruct", cfg);
    m.extra["method"] = method_name(method);
    m.inputs = upstream.outputs;
    FileLog files(cfg.out_dir);
    auto emit_image = [&](const fs::path& bin, const Image& img) {
        write_image(bin, img);
        write_png(png_path(bin), img);
        files.add_image(bin);
        files.add(png_path(bin));
    };

    if (method == Method::joint) {
        const JointState state = alternate(data, cfg.grid, cfg.solver, init, observer);
        const std::vector<Image> gates = gate_images(state, cfg.solver);
        for (std::size_t i = 0; i < gates.size(); ++i) {
            emit_image(gate_path(dir, "gate", static_cast<int>(i + 1)), gates[i]);
        }
        emit_image(dir / "template.bin", state.template_image);
        for (std::size_t j = 0; j < state.nu.fields.size(); ++j) {
            const fs::path bin = gate_path(dir, "velocity", static_cast<int>(j));
            write_field(bin, state.nu.fields[j]);
            files.add_image(bin);
        }
        write_text(dir / "trace.csv", trace_csv(state.log));
        files.add(dir / "trace.csv");
        m.extra["iterations"] = state.iteration;
    } else {
        if (init) throw ConfigError("static-tv reconstruction does not support init_template = file");
        const int iterations = cfg.solver.K_template + cfg.solver.K;
        emit_image(dir / "image.bin", static_tv_reconstruct(data, cfg.grid, cfg.solver, iterations));
        m.extra["iterations"] = iterations;
    }
    m.outputs = files.take();
    m.extra["seconds"] = seconds_since(t0);
    write_manifest(reconstruct_manifest_path(cfg.out_dir, method), m);
    return m;
}

Manifest cmd_metrics(const ExperimentConfig& cfg) {
    const auto t0 = std::chrono::steady_clock::now();
    const Manifest phantom = load_verified_manifest(phantom_manifest_path(cfg.out_dir), cfg, {"grid", "phantom"});
    const std::vector<Image> truth = read_truth(cfg);
    const std::vector<std::string> all = {"grid", "phantom", "geometry", "noise", "solver"};

    Manifest m = make_manifest("metrics", cfg);
    m.inputs = phantom.outputs;
    MetricReport report;
    const std::string hash = cfg.hash();
    bool any = false;
    for (Method method : {Method::joint, Method::static_tv}) {
        const fs::path man = reconstruct_manifest_path(cfg.out_dir, method);
        if (!fs::exists(man)) continue;
        const Manifest recon = load_verified_manifest(man, cfg, all);
        m.inputs.insert(m.inputs.end(), recon.outputs.begin(), recon.outputs.end());
        any = true;
        const fs::path dir = man.parent_path();
        for (int i = 1; i <= cfg.phantom.N; ++i) {
            const Image img = method == Method::joint ? read_image(gate_path(dir, "gate", i)) : read_image(dir / "image.bin");
            const Image& ref = truth[i - 1];
            report.rows.push_back(MetricRow{method_name(method), i, ssim(img, ref), psnr(img, ref), hash});
        }
    }
    if (!any) throw InputError("no reconstructions found under " + (cfg.out_dir / "reconstruct").string());

    const fs::path dir = cfg.out_dir / "metrics";
    fs::create_directories(dir);
    write_text(dir / "metrics.csv", to_csv(report));
    write_text(dir / "table.txt", format_table(report));
    FileLog files(cfg.out_dir);
    files.add(dir / "metrics.csv");
    files.add(dir / "table.txt");
    m.outputs = files.take();
    m.extra["seconds"] = seconds_since(t0);
    write_manifest(metrics_manifest_path(cfg.out_dir), m);
    return m;
}

}  // namespace tomoflow
