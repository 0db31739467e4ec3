#include "tomoflow/deform.hpp"

#include <stdexcept>

namespace tomoflow {

namespace {

void check_step(const VelocityFieldSeries& nu, int step) {
    if (step < 1 || step > nu.timegrid.steps()) throw std::out_of_range("step index outside 1..MN");
}

void check_gate(const VelocityFieldSeries& nu, int gate) {
    if (gate < 1 || gate > nu.timegrid.N) throw std::out_of_range("gate index outside 1..N");
}

VectorField2 average(const VectorField2& a, const VectorField2& b) {
    VectorField2 out(a.grid);
    for (std::size_t k = 0; k < out.u.size(); ++k) {
        out.u[k] = 0.5 * (a.u[k] + b.u[k]);
        out.v[k] = 0.5 * (a.v[k] + b.v[k]);
    }
    return out;
}

struct FieldSample {
    double u = 0.0;
    double v = 0.0;
};

FieldSample interp_field(const VectorField2& f, double x, double y) {
    const BilinearStencil st = bilinear_stencil(f.grid, x, y);
    FieldSample s;
    for (int c = 0; c < st.count; ++c) {
        s.u += st.weight[c] * f.u[st.index[c]];
        s.v += st.weight[c] * f.v[st.index[c]];
    }
    return s;
}

}  // namespace

VectorField2 forward_step_velocity(const VelocityFieldSeries& nu, int step, StepRule rule) {
    check_step(nu, step);
    if (rule == StepRule::endpoint) return nu.fields[step];
    return average(nu.fields[step - 1], nu.fields[step]);
}

VectorField2 backward_step_velocity(const VelocityFieldSeries& nu, int step, StepRule rule) {
    check_step(nu, step);
    if (rule == StepRule::endpoint) return nu.fields[step - 1];
    return average(nu.fields[step - 1], nu.fields[step]);
}

Image compose_shift(const Image& in, const VectorField2& v, double scale) {
    const Grid2& g = in.grid();
    if (!(v.grid == g)) throw std::invalid_argument("compose_shift: grid mismatch");
    Image out(g);
    const double sx = scale / g.hx();
    const double sy = scale / g.hy();
    for (int j = 0; j < g.ny; ++j) {
        for (int i = 0; i < g.nx; ++i) {
            const std::size_t k = g.index(i, j);
            const BilinearStencil st = bilinear_stencil_at_index(g, i + sx * v.u[k], j + sy * v.v[k]);
            double acc = 0.0;
            for (int c = 0; c < st.count; ++c) acc += st.weight[c] * in[st.index[c]];
            out[k] = acc;
        }
    }
    return out;
}

Image compose_shift_transpose(const Image& in, const VectorField2& v, double scale) {
    const Grid2& g = in.grid();
    if (!(v.grid == g)) throw std::invalid_argument("compose_shift_transpose: grid mismatch");
    Image out(g);
    const double sx = scale / g.hx();
    const double sy = scale / g.hy();
    for (int j = 0; j < g.ny; ++j) {
        for (int i = 0; i < g.nx; ++i) {
            const std::size_t k = g.index(i, j);
            const BilinearStencil st = bilinear_stencil_at_index(g, i + sx * v.u[k], j + sy * v.v[k]);
            for (int c = 0; c < st.count; ++c) out[st.index[c]] += st.weight[c] * in[k];
        }
    }
    return out;
}

WarpState push_forward_template(const Image& tmpl, const VelocityFieldSeries& nu, StepRule rule) {
    if (!(tmpl.grid() == nu.grid())) throw std::invalid_argument("push_forward_template: grid mismatch");
    const TimeGrid& tg = nu.timegrid;
    WarpState ws{tg, rule, {}};
    ws.warped.reserve(static_cast<std::size_t>(tg.steps()) + 1);
    ws.warped.push_back(tmpl);
    for (int s = 1; s <= tg.steps(); ++s) {
        ws.warped.push_back(compose_shift(ws.warped.back(), forward_step_velocity(nu, s, rule), -tg.dt()));
    }
    return ws;
}

Image seed_eta(const Image& template_warped_at_gate, const Image& gate_residual_backproj) {
    if (!(template_warped_at_gate.grid() == gate_residual_backproj.grid())) {
        throw std::invalid_argument("seed_eta: grid mismatch");
    }
    return gate_residual_backproj;
}

std::vector<Image> pull_back_eta(const Image& seed, const VelocityFieldSeries& nu, int gate, StepRule rule) {
    check_gate(nu, gate);
    const TimeGrid& tg = nu.timegrid;
    const int top = tg.gate_step(gate);
    std::vector<Image> eta(static_cast<std::size_t>(top) + 1);
    eta[top] = seed;
    for (int j = top - 1; j >= 0; --j) {
        const VectorField2 w = backward_step_velocity(nu, j + 1, rule);
        Image next = compose_shift(eta[j + 1], w, tg.dt());
        const Image div = divergence(w);
        for (std::size_t k = 0; k < next.size(); ++k) next[k] *= 1.0 + tg.dt() * div[k];
        eta[j] = std::move(next);
    }
    return eta;
}

std::vector<Image> pull_back_eta_adjoint(const Image& seed, const VelocityFieldSeries& nu, int gate, StepRule rule) {
    check_gate(nu, gate);
    const TimeGrid& tg = nu.timegrid;
    const int top = tg.gate_step(gate);
    std::vector<Image> eta(static_cast<std::size_t>(top) + 1);
    eta[top] = seed;
    for (int j = top - 1; j >= 0; --j) {
        eta[j] = compose_shift_transpose(eta[j + 1], forward_step_velocity(nu, j + 1, rule), -tg.dt());
    }
    return eta;
}

EtaTable::EtaTable(const TimeGrid& tg, std::vector<std::vector<Image>> per_gate)
    : timegrid_(tg), per_gate_(std::move(per_gate)) {
    if (static_cast<int>(per_gate_.size()) != tg.N) throw std::invalid_argument("EtaTable: need one entry per gate");
    for (int i = 1; i <= tg.N; ++i) {
        if (static_cast<int>(per_gate_[i - 1].size()) != tg.gate_step(i) + 1) {
            throw std::invalid_argument("EtaTable: gate entry has wrong length");
        }
    }
}

const Image& EtaTable::eta(int j, int gate) const {
    if (gate < 1 || gate > timegrid_.N || j < 0 || j > timegrid_.gate_step(gate)) {
        throw std::out_of_range("EtaTable: (j, gate) outside j <= iM");
    }
    return per_gate_[gate - 1][j];
}

Image EtaTable::h(int j, int gate) const {
    if (has(j, gate)) return eta(j, gate);
    return Image(per_gate_.front().front().grid());
}

EtaTable build_eta_table(std::span<const Image> seeds, const VelocityFieldSeries& nu, EtaTransport transport,
                         StepRule rule) {
    const TimeGrid& tg = nu.timegrid;
    if (static_cast<int>(seeds.size()) != tg.N) throw std::invalid_argument("build_eta_table: need N seeds");
    std::vector<std::vector<Image>> per_gate(seeds.size());
#pragma omp parallel for schedule(dynamic)
    for (int i = 1; i <= tg.N; ++i) {
        per_gate[i - 1] = transport == EtaTransport::adjoint ? pull_back_eta_adjoint(seeds[i - 1], nu, i, rule)
                                                             : pull_back_eta(seeds[i - 1], nu, i, rule);
    }
    return EtaTable(tg, std::move(per_gate));
}

VectorField2 integrate_flow_map(const VelocityFieldSeries& nu, int j_from, int j_to, StepRule rule) {
    const TimeGrid& tg = nu.timegrid;
    if (j_from < 0 || j_to < 0 || j_from > tg.steps() || j_to > tg.steps()) {
        throw std::out_of_range("integrate_flow_map: fine-time index outside 0..MN");
    }
    const Grid2& g = nu.grid();
    VectorField2 map(g);
    for (int j = 0; j < g.ny; ++j) {
        for (int i = 0; i < g.nx; ++i) {
            map.u[g.index(i, j)] = g.x(i);
            map.v[g.index(i, j)] = g.y(j);
        }
    }
    const double dt = tg.dt();
    auto advance = [&](const VectorField2& w, double sign) {
        for (std::size_t k = 0; k < map.u.size(); ++k) {
            const FieldSample s = interp_field(w, map.u[k], map.v[k]);
            map.u[k] += sign * dt * s.u;
            map.v[k] += sign * dt * s.v;
        }
    };
    // Forward in time, tau_j -> tau_{j+1}: Id + nu_j / MN. Backward, tau_j -> tau_{j-1}: Id - nu_j / MN.
    for (int j = j_from; j < j_to; ++j) advance(backward_step_velocity(nu, j + 1, rule), +1.0);
    for (int j = j_from; j > j_to; --j) advance(forward_step_velocity(nu, j, rule), -1.0);
    return map;
}

Image apply_map(const Image& in, const VectorField2& map) {
    const Grid2& g = in.grid();
    if (!(map.grid == g)) throw std::invalid_argument("apply_map: grid mismatch");
    Image out(g);
    for (std::size_t k = 0; k < out.size(); ++k) out[k] = interp_bilinear(in, map.u[k], map.v[k]);
    return out;
}

Image jacobian_determinant(const VectorField2& map) {
    Image mx(map.grid, map.u);
    Image my(map.grid, map.v);
    const VectorField2 gx = gradient_central(mx);
    const VectorField2 gy = gradient_central(my);
    Image det(map.grid);
    for (std::size_t k = 0; k < det.size(); ++k) det[k] = gx.u[k] * gy.v[k] - gx.v[k] * gy.u[k];
    return det;
}

}  // namespace tomoflow
