#include "tomoflow/solver.hpp"

#include <chrono>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

#include "tomoflow/error.hpp"
#include "tomoflow/regtv.hpp"

namespace tomoflow {

void RunConfig::validate() const {
    auto require = [](bool ok, const char* what) {
        if (!ok) throw ConfigError(std::string("invalid solver configuration: ") + what);
    };
    require(mu1 >= 0.0 && std::isfinite(mu1), "mu1 must be >= 0");
    require(mu2 >= 0.0 && std::isfinite(mu2), "mu2 must be >= 0");
    require(sigma > 0.0 && std::isfinite(sigma), "sigma must be > 0");
    require(alpha > 0.0 && std::isfinite(alpha), "alpha must be > 0");
    require(beta > 0.0 && std::isfinite(beta), "beta must be > 0");
    require(M >= 1 && N >= 1, "M and N must be >= 1");
    require(K >= 0 && K_template >= 0 && K_velocity >= 0, "iteration counts must be >= 0");
    require(eps_template >= 0.0 && eps_velocity >= 0.0, "tolerances must be >= 0");
    require(tv_epsilon > 0.0, "tv_epsilon must be > 0");
    require(init_template != TemplateInit::file || !init_template_path.empty(),
            "init_template = file needs init_template_path");
}

GatedData GatedData::make(GatedGeometry geometry, std::vector<Sinogram> gates) {
    if (static_cast<int>(gates.size()) != geometry.n_gates()) {
        throw std::invalid_argument("GatedData: one sinogram per gate required");
    }
    for (std::size_t i = 0; i < gates.size(); ++i) {
        if (!(gates[i].geometry == geometry.gates[i])) {
            throw std::invalid_argument("GatedData: sinogram geometry differs from gate geometry");
        }
    }
    return GatedData{std::move(geometry), std::move(gates)};
}

GatedData GatedData::pooled() const {
    Sinogram all = tomoflow::pooled(std::span<const Sinogram>(gates));
    GatedGeometry g = GatedGeometry::make({all.geometry});
    return GatedData{std::move(g), {std::move(all)}};
}

JointState JointState::zero(const Grid2& grid, const TimeGrid& tg) {
    JointState s;
    s.template_image = Image(grid);
    s.nu = VelocityFieldSeries(tg, grid);
    return s;
}

double data_norm_sq(const Sinogram& r) {
    const double w = r.geometry.bin_width() * std::numbers::pi / r.geometry.n_angles();
    double acc = 0.0;
    for (double v : r.values) acc += v * v;
    return acc * w;
}

std::vector<double> motion_weights(const TimeGrid& tg, int gate, StepRule rule) {
    std::vector<double> w(static_cast<std::size_t>(tg.steps()) + 1, 0.0);
    const int top = tg.gate_step(gate);
    const double dt = tg.dt();
    if (rule == StepRule::endpoint) {
        for (int j = 0; j < top; ++j) w[j] = dt;  // left-endpoint Riemann sum
    } else if (top > 0) {
        for (int j = 0; j <= top; ++j) w[j] = (j == 0 || j == top) ? 0.5 * dt : dt;
    }
    return w;
}

namespace {

void check_problem(const JointState& state, const GatedData& data, const RunConfig& cfg) {
    if (data.n_gates() != cfg.N || state.nu.timegrid.N != cfg.N || state.nu.timegrid.M != cfg.M) {
        throw std::invalid_argument("gate count / time grid disagree between data, state and config");
    }
    if (!(state.template_image.grid() == state.nu.grid())) {
        throw std::invalid_argument("template and velocity live on different grids");
    }
}

// Weights of the full-interval quadrature, used to turn Euclidean derivatives
// with respect to velocity samples into L2([0,1] x Omega) gradients.
std::vector<double> normalizing_weights(const TimeGrid& tg, StepRule rule) {
    std::vector<double> w(static_cast<std::size_t>(tg.steps()) + 1, tg.dt());
    if (rule == StepRule::trapezoid) {
        w.front() *= 0.5;
        w.back() *= 0.5;
    }
    return w;
}

struct ForwardPass {
    WarpState warp;
    std::vector<Sinogram> residuals;
    std::vector<Image> seeds;  // A*_i r_i in the image L2 metric
    double fidelity = 0.0;
};

ForwardPass forward_pass(const Image& tmpl, const VelocityFieldSeries& nu, const GatedData& data, StepRule rule,
                         bool with_seeds) {
    ForwardPass fp;
    fp.warp = push_forward_template(tmpl, nu, rule);
    const int n = data.n_gates();
    fp.residuals.resize(n);
    if (with_seeds) fp.seeds.resize(n);
    const Grid2& grid = tmpl.grid();
#pragma omp parallel for schedule(dynamic)
    for (int i = 1; i <= n; ++i) {
        Sinogram r = radon_forward(fp.warp.at_gate(i), data.geometry.gates[i - 1]) - data.gates[i - 1];
        if (with_seeds) {
            const double w = r.geometry.bin_width() * std::numbers::pi / r.geometry.n_angles();
            Sinogram weighted = r;
            for (double& v : weighted.values) v *= w;
            Image bp = radon_adjoint(weighted, grid);
            bp *= 1.0 / grid.cell_area();
            fp.seeds[i - 1] = seed_eta(fp.warp.at_gate(i), bp);
        }
        fp.residuals[i - 1] = std::move(r);
    }
    for (const auto& r : fp.residuals) fp.fidelity += data_norm_sq(r);
    fp.fidelity /= n;
    return fp;
}

double motion_term(const VelocityFieldSeries& nu, const RunConfig& cfg) {
    const TimeGrid& tg = nu.timegrid;
    std::vector<double> sq(nu.fields.size());
    for (std::size_t j = 0; j < sq.size(); ++j) sq[j] = dot(nu.fields[j], nu.fields[j]) * nu.grid().cell_area();
    double acc = 0.0;
    for (int i = 1; i <= tg.N; ++i) {
        const auto w = motion_weights(tg, i, cfg.step_rule);
        for (std::size_t j = 0; j < w.size(); ++j) acc += w[j] * sq[j];
    }
    return cfg.mu2 * acc / tg.N;
}

// Data and motion parts of the L2 velocity gradient.
struct VelocityGradientParts {
    VelocityFieldSeries data;
    VelocityFieldSeries motion;
};

VelocityGradientParts velocity_gradient_parts(const JointState& state, const GatedData& data, const RunConfig& cfg) {
    check_problem(state, data, cfg);
    const TimeGrid& tg = state.nu.timegrid;
    const Grid2& grid = state.nu.grid();
    const int steps = tg.steps();
    const double dt = tg.dt();
    const StepRule rule = cfg.step_rule;

    ForwardPass fp = forward_pass(state.template_image, state.nu, data, rule, true);
    const EtaTable eta = build_eta_table(fp.seeds, state.nu, cfg.eta_transport, rule);
    const std::vector<double> wn = normalizing_weights(tg, rule);

    // Per fine step s: sensitivity of the objective to the step velocity v_s,
    // -(2/N) dt * sum_{i: iM >= s} h_{tau_s, t_i} * grad interp(warped_{s-1}) at x - dt v_s(x).
    std::vector<VectorField2> step_sens(static_cast<std::size_t>(steps) + 1, VectorField2(grid));
#pragma omp parallel for schedule(dynamic)
    for (int s = 1; s <= steps; ++s) {
        Image lambda(grid);
        for (int i = 1; i <= tg.N; ++i) {
            if (eta.has(s, i)) lambda += eta.eta(s, i);
        }
        const VectorField2 v = forward_step_velocity(state.nu, s, rule);
        const Image& prev = fp.warp.warped[s - 1];
        VectorField2& out = step_sens[s];
        const double sx = -dt / grid.hx();
        const double sy = -dt / grid.hy();
        const double c = -(2.0 / tg.N) * dt;
        for (int jy = 0; jy < grid.ny; ++jy) {
            for (int ix = 0; ix < grid.nx; ++ix) {
                const std::size_t k = grid.index(ix, jy);
                if (lambda[k] == 0.0) continue;
                const InterpJet jet = interp_bilinear_jet_at_index(prev, ix + sx * v.u[k], jy + sy * v.v[k]);
                out.u[k] = c * lambda[k] * jet.dx;
                out.v[k] = c * lambda[k] * jet.dy;
            }
        }
    }

    VelocityGradientParts parts{VelocityFieldSeries(tg, grid), VelocityFieldSeries(tg, grid)};
    for (int j = 0; j <= steps; ++j) {
        VectorField2& g = parts.data.fields[j];
        if (rule == StepRule::endpoint) {
            if (j >= 1) g.axpy(1.0, step_sens[j]);
        } else {
            if (j >= 1) g.axpy(0.5, step_sens[j]);
            if (j + 1 <= steps) g.axpy(0.5, step_sens[j + 1]);
        }
        g *= 1.0 / wn[j];
    }

    std::vector<double> motion_coeff(static_cast<std::size_t>(steps) + 1, 0.0);
    for (int i = 1; i <= tg.N; ++i) {
        const auto w = motion_weights(tg, i, rule);
        for (int j = 0; j <= steps; ++j) motion_coeff[j] += w[j];
    }
    for (int j = 0; j <= steps; ++j) {
        parts.motion.fields[j] = state.nu.fields[j];
        parts.motion.fields[j] *= 2.0 * cfg.mu2 * motion_coeff[j] / (tg.N * wn[j]);
    }
    return parts;
}

double relative_change(double diff_norm, double old_norm, double new_norm) {
    if (diff_norm == 0.0) return 0.0;
    const double ref = std::max(old_norm, new_norm);
    return ref > 0.0 ? diff_norm / ref : std::numeric_limits<double>::infinity();
}

double relative_change(const Image& next, const Image& prev) {
    return relative_change(norm(next - prev), norm(prev), norm(next));
}

double relative_change(const VelocityFieldSeries& next, const VelocityFieldSeries& prev) {
    VelocityFieldSeries d = next;
    d.axpy(-1.0, prev);
    return relative_change(norm(d), norm(prev), norm(next));
}

}  // namespace

ObjectiveTerms objective_joint(const JointState& state, const GatedData& data, const RunConfig& cfg) {
    check_problem(state, data, cfg);
    const ForwardPass fp = forward_pass(state.template_image, state.nu, data, cfg.step_rule, false);
    ObjectiveTerms t;
    t.fidelity = fp.fidelity;
    t.motion = motion_term(state.nu, cfg);
    t.tv = cfg.mu1 * tv_value(state.template_image, TvConfig{cfg.tv_epsilon, cfg.mu1});
    return t;
}

Image template_gradient(const JointState& state, const GatedData& data, const RunConfig& cfg) {
    check_problem(state, data, cfg);
    const TimeGrid& tg = state.nu.timegrid;
    const Grid2& grid = state.template_image.grid();
    ForwardPass fp = forward_pass(state.template_image, state.nu, data, cfg.step_rule, true);
    const EtaTable eta = build_eta_table(fp.seeds, state.nu, cfg.eta_transport, cfg.step_rule);
    Image grad(grid);
    for (int i = 1; i <= tg.N; ++i) grad.axpy(2.0 / tg.N, eta.eta(0, i));
    if (cfg.mu1 > 0.0) {
        grad.axpy(cfg.mu1 / grid.cell_area(), tv_gradient(state.template_image, TvConfig{cfg.tv_epsilon, cfg.mu1}));
    }
    return grad;
}

Image template_step(const JointState& state, const GatedData& data, const RunConfig& cfg) {
    Image next = state.template_image;
    next.axpy(-cfg.alpha, template_gradient(state, data, cfg));
    if (!next.all_finite()) {
        throw NumericalError("template update produced non-finite values (step size alpha = " +
                             std::to_string(cfg.alpha) + " too large?)");
    }
    return next;
}

VelocityFieldSeries velocity_gradient(const JointState& state, const GatedData& data, const RunConfig& cfg) {
    VelocityGradientParts parts = velocity_gradient_parts(state, data, cfg);
    parts.data.axpy(1.0, parts.motion);
    return parts.data;
}

VelocityFieldSeries velocity_descent_direction(const JointState& state, const GatedData& data, const RunConfig& cfg,
                                               const KernelOperator& kernel) {
    VelocityGradientParts parts = velocity_gradient_parts(state, data, cfg);
    const int n = static_cast<int>(parts.data.fields.size());
#pragma omp parallel for schedule(static)
    for (int j = 0; j < n; ++j) {
        parts.data.fields[j] = kernel.apply(parts.data.fields[j]);
    }
    parts.data.axpy(1.0, parts.motion);
    return parts.data;
}

VelocityFieldSeries velocity_step(const JointState& state, const GatedData& data, const RunConfig& cfg,
                                  const KernelOperator& kernel) {
    VelocityFieldSeries next = state.nu;
    next.axpy(-cfg.beta, velocity_descent_direction(state, data, cfg, kernel));
    if (!next.all_finite()) {
        throw NumericalError("velocity update produced non-finite values (step size beta = " +
                             std::to_string(cfg.beta) + " too large?)");
    }
    return next;
}

Image initial_template(const GatedData& data, const Grid2& grid, const RunConfig& cfg,
                       const std::optional<Image>& file_image) {
    switch (cfg.init_template) {
        case TemplateInit::zero:
            return Image(grid);
        case TemplateInit::file:
            if (!file_image) throw ConfigError("init_template = file but no image was supplied");
            if (!(file_image->grid() == grid)) throw ConfigError("initial template grid does not match");
            return *file_image;
        case TemplateInit::backprojection: {
            Image bp(grid);
            for (int i = 0; i < data.n_gates(); ++i) {
                Sinogram w = data.gates[i];
                const double wt = w.geometry.bin_width() * std::numbers::pi / w.geometry.n_angles();
                for (double& v : w.values) v *= wt;
                bp += radon_adjoint(w, grid);
            }
            // Least-squares scale so that the back-projection fits the data best.
            double num = 0.0;
            double den = 0.0;
            for (int i = 0; i < data.n_gates(); ++i) {
                const Sinogram p = radon_forward(bp, data.geometry.gates[i]);
                const double wt = p.geometry.bin_width() * std::numbers::pi / p.geometry.n_angles();
                num += dot(p, data.gates[i]) * wt;
                den += dot(p, p) * wt;
            }
            if (den > 0.0) bp *= num / den;
            return bp;
        }
    }
    return Image(grid);
}

Image reconstruct_template(JointState state, const GatedData& data, const RunConfig& cfg, int iterations) {
    for (int k = 0; k < iterations; ++k) {
        Image next = template_step(state, data, cfg);
        const double change = relative_change(next, state.template_image);
        state.template_image = std::move(next);
        if (change <= cfg.eps_template) break;
    }
    return state.template_image;
}

VelocityFieldSeries estimate_velocity(JointState state, const GatedData& data, const RunConfig& cfg) {
    const KernelOperator kernel(GaussianKernel::make(cfg.sigma), state.nu.grid());
    for (int k = 0; k < cfg.K_velocity; ++k) {
        VelocityFieldSeries next = velocity_step(state, data, cfg, kernel);
        const double change = relative_change(next, state.nu);
        state.nu = std::move(next);
        if (change <= cfg.eps_velocity) break;
    }
    return state.nu;
}

JointState alternate(const GatedData& data, const Grid2& grid, const RunConfig& cfg, const std::optional<Image>& init,
                     const IterationObserver& observer) {
    cfg.validate();
    const auto t0 = std::chrono::steady_clock::now();
    auto elapsed = [&] { return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count(); };

    JointState state = JointState::zero(grid, cfg.timegrid());
    state.template_image = initial_template(data, grid, cfg, init);
    state.template_image = reconstruct_template(state, data, cfg, cfg.K_template);

    auto record = [&](const IterationLog& entry) {
        if (!std::isfinite(entry.objective.total())) {
            std::ostringstream msg;
            msg << "objective became non-finite at iteration " << entry.iteration;
            throw NumericalError(msg.str());
        }
        state.log.push_back(entry);
        state.objective_trace.push_back(entry.objective.total());
        if (observer) observer(entry);
    };

    record(IterationLog{0, objective_joint(state, data, cfg), 0.0, 0.0, elapsed()});

    const KernelOperator kernel(GaussianKernel::make(cfg.sigma), grid);
    for (int k = 1; k <= cfg.K; ++k) {
        Image next_template = template_step(state, data, cfg);
        const double d_template = relative_change(next_template, state.template_image);
        state.template_image = std::move(next_template);

        VelocityFieldSeries next_nu = velocity_step(state, data, cfg, kernel);
        const double d_velocity = relative_change(next_nu, state.nu);
        state.nu = std::move(next_nu);
        state.iteration = k;

        record(IterationLog{k, objective_joint(state, data, cfg), d_template, d_velocity, elapsed()});
        if (d_template <= cfg.eps_template && d_velocity <= cfg.eps_velocity) break;
    }
    return state;
}

std::vector<Image> gate_images(const JointState& state, const RunConfig& cfg) {
    const WarpState ws = push_forward_template(state.template_image, state.nu, cfg.step_rule);
    std::vector<Image> out;
    for (int i = 1; i <= state.nu.timegrid.N; ++i) out.push_back(ws.at_gate(i));
    return out;
}

Image static_tv_reconstruct(const GatedData& data, const Grid2& grid, const RunConfig& cfg, int iterations) {
    const GatedData pooled_data = data.pooled();
    RunConfig single = cfg;
    single.N = 1;
    single.M = 1;
    single.validate();
    JointState state = JointState::zero(grid, single.timegrid());
    std::optional<Image> file_image;
    if (cfg.init_template == TemplateInit::file) {
        throw ConfigError("static-tv reconstruction does not support init_template = file");
    }
    state.template_image = initial_template(pooled_data, grid, single, file_image);
    return reconstruct_template(std::move(state), pooled_data, single, iterations);
}

}  // namespace tomoflow
