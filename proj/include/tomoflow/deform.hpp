#pragma once

#include <span>
#include <vector>

#include "tomoflow/grid.hpp"

namespace tomoflow {

/// Which velocity samples drive fine step s (the step between tau_{s-1} and tau_s).
///
/// `endpoint`: the forward warp uses nu(tau_s) and the backward eta transport uses
/// nu(tau_{s-1}), the index choices of the linearized recursions.
/// `trapezoid`: both directions use (nu(tau_{s-1}) + nu(tau_s)) / 2, so every
/// velocity sample, including both time endpoints, enters the discrete flow.
enum class StepRule { endpoint, trapezoid };

VectorField2 forward_step_velocity(const VelocityFieldSeries& nu, int step, StepRule rule);
VectorField2 backward_step_velocity(const VelocityFieldSeries& nu, int step, StepRule rule);

/// out(x) = in(x + scale * v(x)), bilinear with zero extension.
Image compose_shift(const Image& in, const VectorField2& v, double scale);
/// Exact transpose of compose_shift(., v, scale) as a linear map on pixel values.
Image compose_shift_transpose(const Image& in, const VectorField2& v, double scale);

/// Warped templates warped[j] = I o phi_{tau_j, 0}, j = 0..MN.
struct WarpState {
    TimeGrid timegrid;
    StepRule rule = StepRule::endpoint;
    std::vector<Image> warped;

    const Image& at_gate(int i) const { return warped[static_cast<std::size_t>(timegrid.gate_step(i))]; }
};

/// warped[0] = template; warped[j] = warped[j-1] o (Id - nu_j / MN).
WarpState push_forward_template(const Image& tmpl, const VelocityFieldSeries& nu, StepRule rule = StepRule::endpoint);

/// Seed of the eta recursion: the back-projected gate residual, returned unchanged.
Image seed_eta(const Image& template_warped_at_gate, const Image& gate_residual_backproj);

/// Linearized mass-preserving transport of a gate-i seed back to tau_0:
/// eta_j = (1 + div(nu_j) / MN) * eta_{j+1} o (Id + nu_j / MN), j = iM-1..0.
/// The result is indexed by j (size iM + 1) with result[iM] == seed.
std::vector<Image> pull_back_eta(const Image& seed, const VelocityFieldSeries& nu, int gate,
                                 StepRule rule = StepRule::endpoint);

/// Same indexing, but each step applies the exact transpose of the forward
/// warp step, so the chain is the discrete adjoint of push_forward_template.
std::vector<Image> pull_back_eta_adjoint(const Image& seed, const VelocityFieldSeries& nu, int gate,
                                         StepRule rule = StepRule::endpoint);

enum class EtaTransport { linearized, adjoint };

/// eta_{tau_j, t_i} for every gate i = 1..N and j <= iM.
class EtaTable {
public:
    EtaTable() = default;
    EtaTable(const TimeGrid& tg, std::vector<std::vector<Image>> per_gate);

    const TimeGrid& timegrid() const { return timegrid_; }
    /// Requires j <= iM.
    const Image& eta(int j, int gate) const;
    /// h_{tau_j, t_i}: eta for t_i >= tau_j, zero otherwise.
    Image h(int j, int gate) const;
    bool has(int j, int gate) const { return j <= timegrid_.gate_step(gate); }

private:
    TimeGrid timegrid_;
    std::vector<std::vector<Image>> per_gate_;
};

/// seeds[i - 1] is the gate-i residual back-projection.
EtaTable build_eta_table(std::span<const Image> seeds, const VelocityFieldSeries& nu, EtaTransport transport,
                         StepRule rule);

/// phi_{tau_from, tau_to} sampled at pixel centres, stored as target coordinates
/// (u = x, v = y). Built by composing the linearized steps Id +/- nu_j / MN along
/// Lagrangian trajectories.
VectorField2 integrate_flow_map(const VelocityFieldSeries& nu, int j_from, int j_to,
                                StepRule rule = StepRule::endpoint);

/// Applies a coordinate map: out(x) = in(map(x)).
Image apply_map(const Image& in, const VectorField2& map);

/// Jacobian determinant of a coordinate map by central differences.
Image jacobian_determinant(const VectorField2& map);

}  // namespace tomoflow
