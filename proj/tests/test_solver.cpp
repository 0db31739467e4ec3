#include <doctest.h>

#include <cmath>
#include <limits>
#include <numbers>

#include "support.hpp"
#include "tomoflow/error.hpp"
#include "tomoflow/regtv.hpp"
#include "tomoflow/sim.hpp"
#include "tomoflow/solver.hpp"

using namespace tomoflow;
using testing::random_field;
using testing::random_image;
using testing::rel_err;

namespace {

constexpr double pi = std::numbers::pi;

struct Problem {
    Grid2 grid;
    RunConfig cfg;
    GatedData data;
    JointState state;
};

// 16 x 16, N = 2, M = 1, 4 views per gate, random data and a random nonzero state.
Problem small_problem(std::uint64_t seed, StepRule rule = StepRule::trapezoid) {
    std::mt19937_64 rng(seed);
    Problem p;
    p.grid = Grid2::make(16, 16, -2, 2, -2, 2);
    p.cfg.N = 2;
    p.cfg.M = 1;
    p.cfg.mu1 = 0.01;
    p.cfg.mu2 = 0.05;
    p.cfg.step_rule = rule;
    const GatedGeometry geom = staggered_gated_geometry(2, 4, pi / 8, 24, -3, 3);
    std::vector<Sinogram> gates;
    for (const auto& g : geom.gates) gates.push_back(testing::random_sinogram(g, rng));
    p.data = GatedData::make(geom, std::move(gates));
    p.state = JointState::zero(p.grid, p.cfg.timegrid());
    p.state.template_image = random_image(p.grid, rng, 0.0, 1.0);
    for (auto& f : p.state.nu.fields) f = random_field(p.grid, rng, 0.2);
    return p;
}

double trapezoid_pairing(const VelocityFieldSeries& a, const VelocityFieldSeries& b, StepRule rule) {
    const TimeGrid& tg = a.timegrid;
    double acc = 0.0;
    for (int j = 0; j <= tg.steps(); ++j) {
        double w = tg.dt();
        if (rule == StepRule::trapezoid && (j == 0 || j == tg.steps())) w *= 0.5;
        acc += w * dot(a.fields[j], b.fields[j]);
    }
    return acc * a.grid().cell_area();
}

// Objective evaluated from its definition with the trapezoid rule, without the solver's helpers.
double direct_objective(const Problem& p) {
    const Grid2& g = p.grid;
    const TimeGrid tg = p.cfg.timegrid();
    const double dt = tg.dt();
    std::vector<Image> warped = {p.state.template_image};
    for (int s = 1; s <= tg.steps(); ++s) {
        Image next(g);
        for (int j = 0; j < g.ny; ++j) {
            for (int i = 0; i < g.nx; ++i) {
                const std::size_t k = g.index(i, j);
                const double vu = 0.5 * (p.state.nu.fields[s - 1].u[k] + p.state.nu.fields[s].u[k]);
                const double vv = 0.5 * (p.state.nu.fields[s - 1].v[k] + p.state.nu.fields[s].v[k]);
                next(i, j) = interp_bilinear(warped.back(), g.x(i) - dt * vu, g.y(j) - dt * vv);
            }
        }
        warped.push_back(next);
    }
    double fidelity = 0.0;
    double motion = 0.0;
    for (int i = 1; i <= tg.N; ++i) {
        const auto& geom = p.data.geometry.gates[i - 1];
        const Sinogram r = radon_forward(warped[i * tg.M], geom) - p.data.gates[i - 1];
        double sq = 0.0;
        for (double v : r.values) sq += v * v;
        fidelity += sq * geom.bin_width() * pi / geom.n_angles();
        for (int j = 0; j <= i * tg.M; ++j) {
            const double w = (j == 0 || j == i * tg.M) ? dt / 2 : dt;
            motion += w * dot(p.state.nu.fields[j], p.state.nu.fields[j]) * g.cell_area();
        }
    }
    double tv = 0.0;
    const Image& I = p.state.template_image;
    for (int j = 0; j < g.ny; ++j) {
        for (int i = 0; i < g.nx; ++i) {
            const double fx = i + 1 < g.nx ? (I(i + 1, j) - I(i, j)) / g.hx() : 0.0;
            const double fy = j + 1 < g.ny ? (I(i, j + 1) - I(i, j)) / g.hy() : 0.0;
            tv += std::sqrt(fx * fx + fy * fy + p.cfg.tv_epsilon) * g.cell_area();
        }
    }
    return fidelity / tg.N + p.cfg.mu2 * motion / tg.N + p.cfg.mu1 * tv;
}

}  // namespace

TEST_CASE("configuration validation") {
    RunConfig cfg;
    CHECK_NOTHROW(cfg.validate());
    for (auto mutate : std::vector<void (*)(RunConfig&)>{
             [](RunConfig& c) { c.alpha = 0.0; }, [](RunConfig& c) { c.beta = -1.0; },
             [](RunConfig& c) { c.sigma = 0.0; }, [](RunConfig& c) { c.mu1 = -0.1; },
             [](RunConfig& c) { c.M = 0; }, [](RunConfig& c) { c.K = -1; },
             [](RunConfig& c) { c.init_template = TemplateInit::file; }}) {
        RunConfig bad;
        mutate(bad);
        CHECK_THROWS_AS(bad.validate(), ConfigError);
    }
}

TEST_CASE("gated data must match its geometry") {
    const GatedGeometry geom = staggered_gated_geometry(2, 3, 0.1, 10, -1, 1);
    CHECK_THROWS(GatedData::make(geom, {Sinogram(geom.gates[0])}));
    CHECK_THROWS(GatedData::make(geom, {Sinogram(geom.gates[0]), Sinogram(geom.gates[0])}));
    CHECK_NOTHROW(GatedData::make(geom, {Sinogram(geom.gates[0]), Sinogram(geom.gates[1])}));
}

TEST_CASE("motion quadrature weights integrate up to the gate time") {
    const TimeGrid tg = TimeGrid::make(5, 2);
    for (StepRule rule : {StepRule::endpoint, StepRule::trapezoid}) {
        for (int i = 1; i <= 5; ++i) {
            const auto w = motion_weights(tg, i, rule);
            double sum = 0.0;
            for (double x : w) sum += x;
            CHECK(sum == doctest::Approx(tg.gate_time(i)).epsilon(1e-14));
            for (int j = tg.gate_step(i) + 1; j <= tg.steps(); ++j) CHECK(w[j] == 0.0);
        }
    }
}

TEST_CASE("objective of the all-zero problem is the TV floor") {
    const Grid2 g = Grid2::make(16, 16, -2, 2, -2, 2);
    RunConfig cfg;
    cfg.N = 2;
    cfg.M = 1;
    const GatedGeometry geom = staggered_gated_geometry(2, 4, pi / 8, 24, -3, 3);
    const GatedData data = GatedData::make(geom, {Sinogram(geom.gates[0]), Sinogram(geom.gates[1])});
    const ObjectiveTerms t = objective_joint(JointState::zero(g, cfg.timegrid()), data, cfg);
    CHECK(t.fidelity == 0.0);
    CHECK(t.motion == 0.0);
    CHECK(t.tv == doctest::Approx(cfg.mu1 * std::sqrt(cfg.tv_epsilon) * g.area()).epsilon(1e-12));
}

TEST_CASE("exact data for the true state has zero fidelity") {
    Problem p = small_problem(51);
    const std::vector<Image> gates = gate_images(p.state, p.cfg);
    p.data = GatedData::make(p.data.geometry, simulate_data(gates, p.data.geometry));
    CHECK(objective_joint(p.state, p.data, p.cfg).fidelity == 0.0);
}

TEST_CASE("objective matches a direct evaluation") {
    const Problem p = small_problem(52);
    CHECK(rel_err(objective_joint(p.state, p.data, p.cfg).total(), direct_objective(p)) <= 1e-10);
}

TEST_CASE("static motion-free objective equals the pooled single-gate objective") {
    Problem p = small_problem(53);
    for (auto& f : p.state.nu.fields) f = VectorField2(p.grid);
    RunConfig single = p.cfg;
    single.N = 1;
    single.M = 1;
    JointState s = JointState::zero(p.grid, single.timegrid());
    s.template_image = p.state.template_image;
    CHECK(rel_err(objective_joint(p.state, p.data, p.cfg).total(), objective_joint(s, p.data.pooled(), single).total()) <=
          1e-12);
}

TEST_CASE("template step without motion or TV is a Landweber step") {
    Problem p = small_problem(54);
    p.cfg.N = 1;
    p.cfg.mu1 = 0.0;
    p.data = p.data.pooled();
    p.state = JointState::zero(p.grid, p.cfg.timegrid());
    std::mt19937_64 rng(540);
    p.state.template_image = random_image(p.grid, rng);
    const Image next = template_step(p.state, p.data, p.cfg);

    const Sinogram& g = p.data.gates[0];
    Sinogram r = radon_forward(p.state.template_image, g.geometry) - g;
    for (double& v : r.values) v *= g.geometry.bin_width() * pi / g.geometry.n_angles();
    Image expect = p.state.template_image;
    expect.axpy(-p.cfg.alpha * 2.0 / p.grid.cell_area(), radon_adjoint(r, p.grid));
    for (std::size_t k = 0; k < next.size(); ++k) CHECK(std::abs(next[k] - expect[k]) <= 1e-12);
}

TEST_CASE("perfectly fitting data leaves template and velocity unchanged") {
    Problem p = small_problem(55);
    p.cfg.mu1 = 0.0;
    for (auto& f : p.state.nu.fields) f = VectorField2(p.grid);
    p.data = GatedData::make(p.data.geometry, simulate_data(gate_images(p.state, p.cfg), p.data.geometry));
    CHECK(template_step(p.state, p.data, p.cfg) == p.state.template_image);
    const KernelOperator kernel(GaussianKernel::make(p.cfg.sigma), p.grid);
    const VelocityFieldSeries g = velocity_gradient(p.state, p.data, p.cfg);
    CHECK(norm(g) == 0.0);
    CHECK(velocity_step(p.state, p.data, p.cfg, kernel) == p.state.nu);
}

TEST_CASE("template gradient matches central finite differences") {
    for (StepRule rule : {StepRule::trapezoid, StepRule::endpoint}) {
        Problem p = small_problem(56, rule);
        const Image grad = template_gradient(p.state, p.data, p.cfg);
        std::mt19937_64 rng(560);
        for (int t = 0; t < 10; ++t) {
            const Image d = random_image(p.grid, rng);
            const double h = 1e-6;
            JointState plus = p.state;
            plus.template_image.axpy(h, d);
            JointState minus = p.state;
            minus.template_image.axpy(-h, d);
            const double fd = (objective_joint(plus, p.data, p.cfg).total() - objective_joint(minus, p.data, p.cfg).total()) / (2 * h);
            const double an = dot(grad, d) * p.grid.cell_area();
            CHECK(rel_err(fd, an) <= 1e-4);
        }
    }
}

TEST_CASE("velocity gradient matches central finite differences") {
    for (StepRule rule : {StepRule::trapezoid, StepRule::endpoint}) {
        Problem p = small_problem(57, rule);
        const VelocityFieldSeries grad = velocity_gradient(p.state, p.data, p.cfg);
        std::mt19937_64 rng(570);
        for (int t = 0; t < 10; ++t) {
            VelocityFieldSeries d(p.state.nu.timegrid, p.grid);
            for (auto& f : d.fields) f = random_field(p.grid, rng);
            const double h = 1e-6;
            JointState plus = p.state;
            plus.nu.axpy(h, d);
            JointState minus = p.state;
            minus.nu.axpy(-h, d);
            const double fd = (objective_joint(plus, p.data, p.cfg).total() - objective_joint(minus, p.data, p.cfg).total()) / (2 * h);
            const double an = trapezoid_pairing(grad, d, rule);
            CHECK(rel_err(fd, an) <= 1e-3);
        }
    }
}

TEST_CASE("at the final time only the last gate contributes to the velocity gradient") {
    Problem p = small_problem(58);
    p.cfg.mu2 = 0.0;
    const TimeGrid tg = p.cfg.timegrid();
    const VelocityFieldSeries grad = velocity_gradient(p.state, p.data, p.cfg);

    // Direct: -(2/N) eta_{1,1} grad(I o phi_{tau_{MN-1},0})(x - dt v_MN), with eta_{1,1} the
    // back-projected last-gate residual.
    const std::vector<Image> warped = push_forward_template(p.state.template_image, p.state.nu, p.cfg.step_rule).warped;
    const auto& geom = p.data.geometry.gates[tg.N - 1];
    Sinogram r = radon_forward(warped.back(), geom) - p.data.gates[tg.N - 1];
    for (double& v : r.values) v *= geom.bin_width() * pi / geom.n_angles();
    Image seed = radon_adjoint(r, p.grid);
    seed *= 1.0 / p.grid.cell_area();
    const int s = tg.steps();
    const VectorField2& a = p.state.nu.fields[s - 1];
    const VectorField2& b = p.state.nu.fields[s];
    for (int j = 0; j < p.grid.ny; ++j) {
        for (int i = 0; i < p.grid.nx; ++i) {
            const std::size_t k = p.grid.index(i, j);
            const double x = p.grid.x(i) - tg.dt() * 0.5 * (a.u[k] + b.u[k]);
            const double y = p.grid.y(j) - tg.dt() * 0.5 * (a.v[k] + b.v[k]);
            const InterpJet jet = interp_bilinear_jet(warped[s - 1], x, y);
            CHECK(std::abs(grad.fields[s].u[k] - (-2.0 / tg.N) * seed[k] * jet.dx) <= 1e-9 * (1 + std::abs(grad.fields[s].u[k])));
            CHECK(std::abs(grad.fields[s].v[k] - (-2.0 / tg.N) * seed[k] * jet.dy) <= 1e-9 * (1 + std::abs(grad.fields[s].v[k])));
        }
    }
}

TEST_CASE("descent direction smooths the data part only") {
    Problem p = small_problem(59);
    const KernelOperator kernel(GaussianKernel::make(p.cfg.sigma), p.grid);
    RunConfig no_motion = p.cfg;
    no_motion.mu2 = 0.0;
    const VelocityFieldSeries data_part = velocity_gradient(p.state, p.data, no_motion);
    const VelocityFieldSeries full = velocity_descent_direction(p.state, p.data, p.cfg, kernel);
    const VelocityFieldSeries smooth = velocity_descent_direction(p.state, p.data, no_motion, kernel);
    for (std::size_t j = 0; j < full.fields.size(); ++j) {
        const VectorField2 kd = kernel.apply(data_part.fields[j]);
        for (std::size_t k = 0; k < kd.u.size(); ++k) CHECK(std::abs(smooth.fields[j].u[k] - kd.u[k]) <= 1e-12);
    }
    VelocityFieldSeries diff = full;
    diff.axpy(-1.0, smooth);
    // The remainder is 2 mu2 (time weight) nu, pointwise parallel to nu.
    for (std::size_t j = 0; j < diff.fields.size(); ++j) {
        const double c = dot(diff.fields[j], p.state.nu.fields[j]) / dot(p.state.nu.fields[j], p.state.nu.fields[j]);
        VectorField2 rest = diff.fields[j];
        rest.axpy(-c, p.state.nu.fields[j]);
        CHECK(norm(rest) <= 1e-10 * norm(diff.fields[j]));
        CHECK(c > 0.0);
    }
}

TEST_CASE("non-finite updates abort") {
    Problem p = small_problem(60);
    p.data.gates[0].values[12] = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS(template_step(p.state, p.data, p.cfg), NumericalError);
    const KernelOperator kernel(GaussianKernel::make(p.cfg.sigma), p.grid);
    CHECK_THROWS_AS(velocity_step(p.state, p.data, p.cfg, kernel), NumericalError);
}

TEST_CASE("zero data and zero initial state is a fixed point") {
    Problem p = small_problem(61);
    p.cfg.mu1 = 0.0;
    p.cfg.K = 5;
    p.cfg.K_template = 3;
    p.data = GatedData::make(p.data.geometry, {Sinogram(p.data.geometry.gates[0]), Sinogram(p.data.geometry.gates[1])});
    const JointState s = alternate(p.data, p.grid, p.cfg);
    CHECK(s.template_image == Image(p.grid));
    CHECK(s.nu == VelocityFieldSeries(p.cfg.timegrid(), p.grid));
    for (double v : s.objective_trace) CHECK(v == 0.0);
}

TEST_CASE("alternation is deterministic and logs every iteration") {
    Problem p = small_problem(62);
    p.cfg.K = 4;
    p.cfg.K_template = 2;
    p.cfg.eps_template = 0.0;
    p.cfg.eps_velocity = 0.0;
    std::vector<int> seen;
    const JointState a = alternate(p.data, p.grid, p.cfg, std::nullopt, [&](const IterationLog& l) { seen.push_back(l.iteration); });
    const JointState b = alternate(p.data, p.grid, p.cfg);
    CHECK(seen == std::vector<int>{0, 1, 2, 3, 4});
    CHECK(a.objective_trace == b.objective_trace);
    CHECK(a.template_image == b.template_image);
    CHECK(a.nu == b.nu);
    CHECK(a.iteration == 4);
    REQUIRE(a.log.size() == 5u);
    CHECK(a.log[0].rel_change_template == 0.0);
    CHECK(a.log[1].rel_change_velocity > 0.0);
}

TEST_CASE("tolerances stop the alternation early") {
    Problem p = small_problem(63);
    p.cfg.K = 50;
    p.cfg.K_template = 1;
    p.cfg.eps_template = 1e9;
    p.cfg.eps_velocity = 1e9;
    const JointState s = alternate(p.data, p.grid, p.cfg);
    CHECK(s.iteration == 1);
}

TEST_CASE("static TV reconstruction") {
    Problem p = small_problem(64);
    SUBCASE("zero data gives the zero image") {
        const GatedData zero = GatedData::make(p.data.geometry, {Sinogram(p.data.geometry.gates[0]), Sinogram(p.data.geometry.gates[1])});
        CHECK(norm(static_tv_reconstruct(zero, p.grid, p.cfg, 10)) == 0.0);
    }
    SUBCASE("matches plain smoothed-TV gradient descent on the pooled data") {
        const Image got = static_tv_reconstruct(p.data, p.grid, p.cfg, 7);
        const Sinogram all = pooled(std::span<const Sinogram>(p.data.gates));
        const double w = all.geometry.bin_width() * pi / all.geometry.n_angles();
        Image I(p.grid);
        for (int k = 0; k < 7; ++k) {
            Sinogram r = radon_forward(I, all.geometry) - all;
            for (double& v : r.values) v *= 2.0 * w / p.grid.cell_area();
            Image grad = radon_adjoint(r, p.grid);
            grad.axpy(p.cfg.mu1 / p.grid.cell_area(), tv_gradient(I, TvConfig{p.cfg.tv_epsilon, p.cfg.mu1}));
            I.axpy(-p.cfg.alpha, grad);
        }
        for (std::size_t k = 0; k < I.size(); ++k) CHECK(std::abs(got[k] - I[k]) <= 1e-12);
    }
}

TEST_CASE("back-projection start is the best multiple of the back-projection") {
    Problem p = small_problem(65);
    p.cfg.init_template = TemplateInit::backprojection;
    const Image b = initial_template(p.data, p.grid, p.cfg);
    JointState s = JointState::zero(p.grid, p.cfg.timegrid());
    RunConfig plain = p.cfg;
    plain.mu1 = 0.0;
    plain.mu2 = 0.0;
    auto fid = [&](double c) {
        s.template_image = b;
        s.template_image *= c;
        return objective_joint(s, p.data, plain).fidelity;
    };
    CHECK(fid(1.0) <= fid(1.01));
    CHECK(fid(1.0) <= fid(0.99));
    CHECK(fid(1.0) < fid(0.0));
}

TEST_CASE("desk star phantom from clean data") {
    const Grid2 g = Grid2::make(64, 64, -16, 16, -16, 16);
    PhantomSpec ps;
    ps.grid = g;
    ps.N = 5;
    ps.seed = 1;
    ps.translation = 0.25;
    const auto gates = make_phantom(ps);
    const std::vector<Image> truth(gates.begin() + 1, gates.end());
    const GatedGeometry geom = staggered_gated_geometry(5, 12, pi / 36, 620, -24, 24);
    const GatedData data = GatedData::make(geom, simulate_data(truth, geom));
    RunConfig cfg;
    cfg.K = 200;
    const JointState s = alternate(data, g, cfg);
    const double initial = objective_joint(JointState::zero(g, cfg.timegrid()), data, cfg).total();
    MESSAGE("initial objective ", initial, ", after warm start ", s.objective_trace.front(), ", final ",
            s.objective_trace.back());
    CHECK(s.objective_trace.back() < 0.2 * initial);
    CHECK(s.objective_trace.back() < s.objective_trace.front());
}
