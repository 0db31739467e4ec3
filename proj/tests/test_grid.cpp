#include <doctest.h>

#include <cmath>
#include <stdexcept>

#include "support.hpp"

using namespace tomoflow;
using testing::random_field;
using testing::random_image;

namespace {

const Grid2 g8 = Grid2::make(8, 8, -2.0, 2.0, -1.0, 3.0);

// Bilinear formula written out for a point strictly inside the hull of pixel centres.
double bilinear_oracle(const Image& img, double x, double y) {
    const Grid2& g = img.grid();
    const double fx = (x - g.x_min) / g.hx() - 0.5;
    const double fy = (y - g.y_min) / g.hy() - 0.5;
    const int i = static_cast<int>(std::floor(fx));
    const int j = static_cast<int>(std::floor(fy));
    const double a = fx - i;
    const double b = fy - j;
    return (1 - a) * (1 - b) * img(i, j) + a * (1 - b) * img(i + 1, j) + (1 - a) * b * img(i, j + 1) +
           a * b * img(i + 1, j + 1);
}

}  // namespace

TEST_CASE("grid construction validates its arguments") {
    CHECK_THROWS_AS(Grid2::make(1, 4, 0, 1, 0, 1), std::invalid_argument);
    CHECK_THROWS_AS(Grid2::make(4, 4, 1, 1, 0, 1), std::invalid_argument);
    CHECK_THROWS_AS(Grid2::make(4, 4, 0, 1, 2, 1), std::invalid_argument);
    const Grid2 g = Grid2::make(4, 2, 0.0, 4.0, -1.0, 1.0);
    CHECK(g.hx() == 1.0);
    CHECK(g.hy() == 1.0);
    CHECK(g.x(0) == 0.5);
    CHECK(g.y(1) == 0.5);
    CHECK(g.index(3, 1) == 7u);
}

TEST_CASE("time grid puts gate times on the fine grid exactly") {
    for (int N : {1, 2, 5, 7}) {
        for (int M : {1, 2, 3, 8}) {
            const TimeGrid tg = TimeGrid::make(N, M);
            for (int i = 0; i <= N; ++i) CHECK(tg.tau(tg.gate_step(i)) == tg.gate_time(i));
        }
    }
    CHECK_THROWS(TimeGrid::make(0, 1));
    CHECK_THROWS(TimeGrid::make(1, 0));
}

TEST_CASE("interp_bilinear on constants, pixel centres and cell midpoints") {
    const Image c(g8, 2.5);
    CHECK(interp_bilinear(c, 0.13, 1.7) == doctest::Approx(2.5).epsilon(1e-15));

    std::mt19937_64 rng(1);
    const Image r = random_image(g8, rng);
    for (int j = 0; j < g8.ny; ++j) {
        for (int i = 0; i < g8.nx; ++i) CHECK(interp_bilinear(r, g8.x(i), g8.y(j)) == r(i, j));
    }

    const Grid2 g4 = Grid2::make(4, 4, 0, 4, 0, 4);
    const Image s = random_image(g4, rng);
    for (int j = 0; j + 1 < 4; ++j) {
        for (int i = 0; i + 1 < 4; ++i) {
            const double mid = 0.25 * (s(i, j) + s(i + 1, j) + s(i, j + 1) + s(i + 1, j + 1));
            CHECK(std::abs(interp_bilinear(s, i + 1.0, j + 1.0) - mid) < 1e-15);
            CHECK(std::abs(interp_bilinear(s, i + 0.8, j + 1.3) - bilinear_oracle(s, i + 0.8, j + 1.3)) < 1e-15);
        }
    }
}

TEST_CASE("interp_bilinear is exact for affine images inside the hull") {
    Image a(g8);
    for (int j = 0; j < g8.ny; ++j) {
        for (int i = 0; i < g8.nx; ++i) a(i, j) = 0.3 + 1.7 * g8.x(i) - 0.4 * g8.y(j);
    }
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> ux(g8.x(0), g8.x(7));
    std::uniform_real_distribution<double> uy(g8.y(0), g8.y(7));
    for (int k = 0; k < 100; ++k) {
        const double x = ux(rng);
        const double y = uy(rng);
        CHECK(std::abs(interp_bilinear(a, x, y) - (0.3 + 1.7 * x - 0.4 * y)) < 1e-12);
    }
}

TEST_CASE("interp_bilinear extends by zero outside the grid") {
    const Image c(g8, 1.0);
    CHECK(interp_bilinear(c, -10.0, 0.0) == 0.0);
    CHECK(interp_bilinear(c, 0.0, 3.0 + g8.hy()) == 0.0);
    // Halfway between the last centre and its ghost neighbour the zero ghost pulls the value to 1/2.
    CHECK(interp_bilinear(c, 2.0, 1.0 + 0.5 * g8.hy()) == doctest::Approx(0.5));

    const std::vector<Point2> pts = {{0.1, 0.2}, {-5, 0}, {1.9, 2.9}};
    const auto vals = interp_bilinear(c, pts);
    REQUIRE(vals.size() == 3);
    for (std::size_t k = 0; k < pts.size(); ++k) CHECK(vals[k] == interp_bilinear(c, pts[k].x, pts[k].y));
}

TEST_CASE("interpolation jet matches difference quotients of the interpolant") {
    std::mt19937_64 rng(3);
    const Image r = random_image(g8, rng);
    const double x = 0.37;
    const double y = 1.21;
    const InterpJet jet = interp_bilinear_jet(r, x, y);
    const double h = 1e-6;
    CHECK(jet.value == doctest::Approx(interp_bilinear(r, x, y)).epsilon(1e-14));
    CHECK(jet.dx == doctest::Approx((interp_bilinear(r, x + h, y) - interp_bilinear(r, x - h, y)) / (2 * h)).epsilon(1e-7));
    CHECK(jet.dy == doctest::Approx((interp_bilinear(r, x, y + h) - interp_bilinear(r, x, y - h)) / (2 * h)).epsilon(1e-7));
}

TEST_CASE("gradient_central") {
    const VectorField2 z = gradient_central(Image(g8, 4.0));
    for (std::size_t k = 0; k < g8.size(); ++k) {
        CHECK(z.u[k] == 0.0);
        CHECK(z.v[k] == 0.0);
    }

    Image fx(g8);
    for (int j = 0; j < g8.ny; ++j) {
        for (int i = 0; i < g8.nx; ++i) fx(i, j) = g8.x(i);
    }
    const VectorField2 gx = gradient_central(fx);
    for (int j = 1; j + 1 < g8.ny; ++j) {
        for (int i = 1; i + 1 < g8.nx; ++i) {
            CHECK(gx.u[g8.index(i, j)] == doctest::Approx(1.0).epsilon(1e-12));
            CHECK(gx.v[g8.index(i, j)] == 0.0);
        }
    }

    std::mt19937_64 rng(4);
    const Image r = random_image(g8, rng);
    const VectorField2 gr = gradient_central(r);
    for (int j = 0; j < g8.ny; ++j) {
        for (int i = 0; i < g8.nx; ++i) {
            double du;
            if (i == 0) du = (r(1, j) - r(0, j)) / g8.hx();
            else if (i == g8.nx - 1) du = (r(i, j) - r(i - 1, j)) / g8.hx();
            else du = (r(i + 1, j) - r(i - 1, j)) / (2 * g8.hx());
            double dv;
            if (j == 0) dv = (r(i, 1) - r(i, 0)) / g8.hy();
            else if (j == g8.ny - 1) dv = (r(i, j) - r(i, j - 1)) / g8.hy();
            else dv = (r(i, j + 1) - r(i, j - 1)) / (2 * g8.hy());
            CHECK(gr.u[g8.index(i, j)] == doctest::Approx(du).epsilon(1e-13));
            CHECK(gr.v[g8.index(i, j)] == doctest::Approx(dv).epsilon(1e-13));
        }
    }
}

TEST_CASE("divergence") {
    const Image z = divergence(VectorField2(g8, 1.5, -2.0));
    for (double v : z.data()) CHECK(v == 0.0);

    VectorField2 id(g8);
    for (int j = 0; j < g8.ny; ++j) {
        for (int i = 0; i < g8.nx; ++i) {
            id.u[g8.index(i, j)] = g8.x(i);
            id.v[g8.index(i, j)] = g8.y(j);
        }
    }
    const Image d = divergence(id);
    for (int j = 1; j + 1 < g8.ny; ++j) {
        for (int i = 1; i + 1 < g8.nx; ++i) CHECK(d(i, j) == doctest::Approx(2.0).epsilon(1e-12));
    }

    std::mt19937_64 rng(5);
    const VectorField2 f = random_field(g8, rng);
    const Image df = divergence(f);
    const VectorField2 gu = gradient_central(Image(g8, f.u));
    const VectorField2 gv = gradient_central(Image(g8, f.v));
    for (std::size_t k = 0; k < g8.size(); ++k) CHECK(df[k] == doctest::Approx(gu.u[k] + gv.v[k]).epsilon(1e-13));
}

TEST_CASE("image and field arithmetic") {
    std::mt19937_64 rng(6);
    const Image a = random_image(g8, rng);
    const Image b = random_image(g8, rng);
    Image c = a;
    c.axpy(2.0, b);
    for (std::size_t k = 0; k < c.size(); ++k) CHECK(c[k] == a[k] + 2.0 * b[k]);
    CHECK(norm(a - a) == 0.0);
    CHECK(dot(a, b) == doctest::Approx(dot(b, a)));
    CHECK_THROWS(Image(g8, std::vector<double>(3)));
    Image bad = a;
    bad[0] = NAN;
    CHECK_FALSE(bad.all_finite());
    CHECK(a.all_finite());
}
