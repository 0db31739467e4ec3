#include <doctest.h>

#include <cmath>

#include "support.hpp"
#include "tomoflow/regtv.hpp"

using namespace tomoflow;
using testing::random_field;
using testing::random_image;

namespace {
const Grid2 g8 = Grid2::make(8, 8, 0, 4, -2, 2);
}

TEST_CASE("config validation") {
    CHECK_THROWS(TvConfig::make(0.0, 1.0));
    CHECK_THROWS(TvConfig::make(1e-12, -1.0));
    CHECK(TvConfig::make(1e-12, 0.0).epsilon == 1e-12);
}

TEST_CASE("constant image") {
    const TvConfig cfg{1e-12, 1.0};
    const Image c(g8, 3.0);
    CHECK(tv_value(c, cfg) == doctest::Approx(std::sqrt(1e-12) * g8.area()).epsilon(1e-12));
    const Image grad = tv_gradient(c, cfg);
    for (double v : grad.data()) CHECK(v == 0.0);
}

TEST_CASE("linear ramp on a unit-spacing grid") {
    const Grid2 g = Grid2::make(10, 10, 0, 10, 0, 10);
    const TvConfig cfg{1e-12, 1.0};
    Image f(g);
    for (int j = 0; j < g.ny; ++j) {
        for (int i = 0; i < g.nx; ++i) f(i, j) = g.x(i);
    }
    // The last column has a zero Neumann difference.
    const double interior = 9 * 10 * std::sqrt(1 + 1e-12);
    const double border = 10 * std::sqrt(1e-12);
    CHECK(tv_value(f, cfg) == doctest::Approx(interior + border).epsilon(1e-12));
}

TEST_CASE("value equals direct evaluation of the formula") {
    std::mt19937_64 rng(41);
    const Image f = random_image(g8, rng);
    const TvConfig cfg{1e-6, 1.0};
    double acc = 0.0;
    for (int j = 0; j < g8.ny; ++j) {
        for (int i = 0; i < g8.nx; ++i) {
            const double fx = i + 1 < g8.nx ? (f(i + 1, j) - f(i, j)) / g8.hx() : 0.0;
            const double fy = j + 1 < g8.ny ? (f(i, j + 1) - f(i, j)) / g8.hy() : 0.0;
            acc += std::sqrt(fx * fx + fy * fy + 1e-6) * g8.cell_area();
        }
    }
    CHECK(tv_value(f, cfg) == doctest::Approx(acc).epsilon(1e-13));
    CHECK(tv_value(f, cfg) >= std::sqrt(1e-6) * g8.area());
}

TEST_CASE("gradient matches central finite differences") {
    std::mt19937_64 rng(42);
    const TvConfig cfg{1e-12, 1.0};
    for (int t = 0; t < 5; ++t) {
        const Image f = random_image(g8, rng);
        const Image d = random_image(g8, rng);
        const double h = 1e-5;
        Image fp = f;
        fp.axpy(h, d);
        Image fm = f;
        fm.axpy(-h, d);
        const double fd = (tv_value(fp, cfg) - tv_value(fm, cfg)) / (2 * h);
        const double an = dot(tv_gradient(f, cfg), d);
        CHECK(testing::rel_err(fd, an) <= 1e-6);
    }
}

TEST_CASE("forward gradient and its adjoint form an exact pair") {
    std::mt19937_64 rng(43);
    const Image f = random_image(g8, rng);
    const VectorField2 p = random_field(g8, rng);
    const double lhs = dot(forward_gradient(f), p);
    const double rhs = dot(f, forward_gradient_adjoint(p));
    CHECK(std::abs(lhs - rhs) <= 1e-12 * std::max(1.0, std::abs(lhs)));
}

TEST_CASE("shifting a compactly supported patch keeps the value") {
    const Grid2 g = Grid2::make(16, 16, 0, 16, 0, 16);
    std::mt19937_64 rng(44);
    const Image patch = random_image(Grid2::make(4, 4, 0, 4, 0, 4), rng);
    Image a(g);
    Image b(g);
    for (int j = 0; j < 4; ++j) {
        for (int i = 0; i < 4; ++i) {
            a(i + 3, j + 4) = patch(i, j);
            b(i + 9, j + 8) = patch(i, j);
        }
    }
    const TvConfig cfg{1e-12, 1.0};
    CHECK(tv_value(a, cfg) == doctest::Approx(tv_value(b, cfg)).epsilon(1e-13));
}
