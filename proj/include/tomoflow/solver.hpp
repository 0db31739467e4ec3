#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tomoflow/deform.hpp"
#include "tomoflow/grid.hpp"
#include "tomoflow/kernel.hpp"
#include "tomoflow/radon.hpp"

namespace tomoflow {

enum class TemplateInit { zero, backprojection, file };

/// Solver hyperparameters.
///
/// Objective, with every norm a discrete function-space L2 norm (pixel area on
/// images; bin width times pi / n_views on sinograms; fine-step quadrature in time):
///
///   (1/N) sum_i [ |A_i (I o phi_{t_i,0}) - g_i|^2 + mu2 int_0^{t_i} |nu|^2 ] + mu1 TV_eps(I)
struct RunConfig {
    double mu1 = 0.01;
    double mu2 = 1e-7;
    double sigma = 2.0;
    double alpha = 0.01;
    double beta = 0.05;
    int M = 2;
    int N = 5;
    int K = 200;           ///< alternating iterations
    int K_template = 50;   ///< warm-start template iterations with nu = 0
    int K_velocity = 1;    ///< iterations of a standalone velocity solve
    double eps_template = 1e-8;
    double eps_velocity = 1e-8;
    double tv_epsilon = 1e-12;
    TemplateInit init_template = TemplateInit::zero;
    std::string init_template_path;
    StepRule step_rule = StepRule::trapezoid;
    EtaTransport eta_transport = EtaTransport::adjoint;
    std::uint64_t seed = 0;

    /// Throws ConfigError on out-of-range values.
    void validate() const;
    TimeGrid timegrid() const { return TimeGrid::make(N, M); }
};

/// Gated measurements: data[i - 1] belongs to gate i and carries its geometry.
struct GatedData {
    GatedGeometry geometry;
    std::vector<Sinogram> gates;

    static GatedData make(GatedGeometry geometry, std::vector<Sinogram> gates);
    int n_gates() const { return geometry.n_gates(); }
    /// All views in one single-gate problem (gate order preserved).
    GatedData pooled() const;
};

struct ObjectiveTerms {
    double fidelity = 0.0;
    double motion = 0.0;
    double tv = 0.0;
    double total() const { return fidelity + motion + tv; }
};

struct IterationLog {
    int iteration = 0;
    ObjectiveTerms objective;
    double rel_change_template = 0.0;
    double rel_change_velocity = 0.0;
    double wall_seconds = 0.0;
};

struct JointState {
    Image template_image;
    VelocityFieldSeries nu;
    std::vector<double> objective_trace;
    std::vector<IterationLog> log;
    int iteration = 0;

    static JointState zero(const Grid2& grid, const TimeGrid& tg);
};

/// Squared data-space norm of one sinogram: sum r^2 * ds * pi / n_views.
double data_norm_sq(const Sinogram& r);

/// Time quadrature weights of int_0^{t_i} on the fine grid (entries j > iM are zero).
std::vector<double> motion_weights(const TimeGrid& tg, int gate, StepRule rule);

ObjectiveTerms objective_joint(const JointState& state, const GatedData& data, const RunConfig& cfg);

/// Template gradient in the image L2 metric: (2/N) sum_i eta_{0,t_i} + mu1 grad*(grad I / |grad I|_eps).
/// Pairing with a direction uses sum(g * d) hx hy.
Image template_gradient(const JointState& state, const GatedData& data, const RunConfig& cfg);

/// One Landweber-type update of the template with nu fixed.
Image template_step(const JointState& state, const GatedData& data, const RunConfig& cfg);

/// Gradient of the objective with respect to nu in the L2([0,1] x Omega)
/// metric of the fine grid (pairing: sum_j w_j sum(g_j . d_j) hx hy, w_j the
/// trapezoid weights, or 1/(MN) under the endpoint step rule).
VelocityFieldSeries velocity_gradient(const JointState& state, const GatedData& data, const RunConfig& cfg);

/// Descent direction actually used: data part smoothed by the kernel operator,
/// motion part 2 mu2 (...) nu left unsmoothed.
VelocityFieldSeries velocity_descent_direction(const JointState& state, const GatedData& data, const RunConfig& cfg,
                                               const KernelOperator& kernel);

VelocityFieldSeries velocity_step(const JointState& state, const GatedData& data, const RunConfig& cfg,
                                  const KernelOperator& kernel);

/// Initial template per cfg.init_template; `file_image` is used for TemplateInit::file.
Image initial_template(const GatedData& data, const Grid2& grid, const RunConfig& cfg,
                       const std::optional<Image>& file_image = std::nullopt);

/// Repeats template_step up to `iterations` times or until the relative change
/// drops below cfg.eps_template.
Image reconstruct_template(JointState state, const GatedData& data, const RunConfig& cfg, int iterations);

/// Repeats velocity_step up to cfg.K_velocity times or until the relative change
/// drops below cfg.eps_velocity.
VelocityFieldSeries estimate_velocity(JointState state, const GatedData& data, const RunConfig& cfg);

using IterationObserver = std::function<void(const IterationLog&)>;

/// Warm start (K_template template steps, nu = 0), then alternate one template
/// step and one velocity step until both relative changes are below tolerance
/// or K iterations ran. log[0] describes the state after the warm start.
JointState alternate(const GatedData& data, const Grid2& grid, const RunConfig& cfg,
                     const std::optional<Image>& init = std::nullopt, const IterationObserver& observer = {});

/// Gate images I o phi_{t_i, 0} for i = 1..N.
std::vector<Image> gate_images(const JointState& state, const RunConfig& cfg);

/// TV-regularized reconstruction from all views pooled into one gate with no
/// motion. Runs `iterations` template steps from the configured initial template.
Image static_tv_reconstruct(const GatedData& data, const Grid2& grid, const RunConfig& cfg, int iterations);

}  // namespace tomoflow
