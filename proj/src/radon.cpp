#include "tomoflow/radon.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace tomoflow {

ParallelBeamGeometry ParallelBeamGeometry::make(std::vector<double> angles, int n_bins, double s_min, double s_max) {
    if (n_bins < 2) throw std::invalid_argument("ParallelBeamGeometry: n_bins must be >= 2");
    if (!(s_max > s_min)) throw std::invalid_argument("ParallelBeamGeometry: s_max must exceed s_min");
    for (double a : angles) {
        if (!std::isfinite(a)) throw std::invalid_argument("ParallelBeamGeometry: non-finite angle");
    }
    return ParallelBeamGeometry{std::move(angles), n_bins, s_min, s_max};
}

GatedGeometry GatedGeometry::make(std::vector<ParallelBeamGeometry> gates) {
    if (gates.empty()) throw std::invalid_argument("GatedGeometry: at least one gate required");
    for (const auto& g : gates) {
        if (g.n_bins != gates.front().n_bins || g.s_min != gates.front().s_min || g.s_max != gates.front().s_max) {
            throw std::invalid_argument("GatedGeometry: detector differs between gates");
        }
    }
    return GatedGeometry{std::move(gates)};
}

ParallelBeamGeometry half_turn_views(double offset, int n_views, int n_bins, double s_min, double s_max) {
    if (n_views < 1) throw std::invalid_argument("half_turn_views: n_views must be >= 1");
    std::vector<double> angles(n_views);
    for (int k = 0; k < n_views; ++k) angles[k] = offset + k * std::numbers::pi / n_views;
    return ParallelBeamGeometry::make(std::move(angles), n_bins, s_min, s_max);
}

GatedGeometry staggered_gated_geometry(int n_gates, int views_per_gate, double stagger, int n_bins, double s_min,
                                       double s_max) {
    std::vector<ParallelBeamGeometry> gates;
    gates.reserve(n_gates);
    for (int i = 1; i <= n_gates; ++i) {
        gates.push_back(half_turn_views((i - 1) * stagger, views_per_gate, n_bins, s_min, s_max));
    }
    return GatedGeometry::make(std::move(gates));
}

ParallelBeamGeometry pooled(const GatedGeometry& geom) {
    std::vector<double> angles;
    for (const auto& g : geom.gates) angles.insert(angles.end(), g.angles.begin(), g.angles.end());
    const auto& first = geom.gates.front();
    return ParallelBeamGeometry::make(std::move(angles), first.n_bins, first.s_min, first.s_max);
}

bool Sinogram::all_finite() const {
    return std::all_of(values.begin(), values.end(), [](double v) { return std::isfinite(v); });
}

double dot(const Sinogram& a, const Sinogram& b) {
    if (a.values.size() != b.values.size()) throw std::invalid_argument("dot: sinogram size mismatch");
    double acc = 0.0;
    for (std::size_t k = 0; k < a.values.size(); ++k) acc += a.values[k] * b.values[k];
    return acc;
}

double norm(const Sinogram& a) { return std::sqrt(dot(a, a)); }

Sinogram operator-(Sinogram a, const Sinogram& b) {
    if (a.values.size() != b.values.size()) throw std::invalid_argument("sinogram size mismatch");
    for (std::size_t k = 0; k < a.values.size(); ++k) a.values[k] -= b.values[k];
    return a;
}

Sinogram pooled(std::span<const Sinogram> gates) {
    if (gates.empty()) throw std::invalid_argument("pooled: no sinograms");
    std::vector<double> angles;
    std::vector<double> values;
    for (const auto& s : gates) {
        angles.insert(angles.end(), s.geometry.angles.begin(), s.geometry.angles.end());
        values.insert(values.end(), s.values.begin(), s.values.end());
    }
    const auto& g0 = gates.front().geometry;
    Sinogram out;
    out.geometry = ParallelBeamGeometry::make(std::move(angles), g0.n_bins, g0.s_min, g0.s_max);
    out.values = std::move(values);
    return out;
}

RaySampling RaySampling::for_grid(const Grid2& grid) {
    const double ex = std::max(std::abs(grid.x_min), std::abs(grid.x_max)) + grid.hx();
    const double ey = std::max(std::abs(grid.y_min), std::abs(grid.y_max)) + grid.hy();
    RaySampling rs;
    rs.half_length = std::hypot(ex, ey);
    const double max_step = 0.5 * std::min(grid.hx(), grid.hy());
    rs.n_samples = static_cast<int>(std::ceil(2.0 * rs.half_length / max_step));
    rs.step = 2.0 * rs.half_length / rs.n_samples;
    return rs;
}

namespace {

// Visits every ray sample of (angle a, bin k) that has a non-empty stencil.
// Forward and adjoint share this walk, which makes them an exact transpose pair.
template <typename Visit>
void walk_ray(const Grid2& grid, const RaySampling& rs, double theta, double s, Visit&& visit) {
    const double c = std::cos(theta);
    const double sn = std::sin(theta);
    // point(t) = s * (c, sn) + t * (-sn, c), in continuous pixel-index coordinates
    const double hx = grid.hx();
    const double hy = grid.hy();
    const double fx0 = (s * c - grid.x_min) / hx - 0.5;
    const double fy0 = (s * sn - grid.y_min) / hy - 0.5;
    const double dfx = -sn / hx;
    const double dfy = c / hy;

    // Clip the parameter range to where the stencil can be non-empty: -1 < f < n.
    double t_lo = -rs.half_length;
    double t_hi = rs.half_length;
    auto clip = [&](double f0, double df, double upper) {
        if (std::abs(df) < 1e-300) {
            if (!(f0 > -1.0 && f0 < upper)) {
                t_lo = 1.0;
                t_hi = -1.0;
            }
            return;
        }
        double a = (-1.0 - f0) / df;
        double b = (upper - f0) / df;
        if (a > b) std::swap(a, b);
        t_lo = std::max(t_lo, a);
        t_hi = std::min(t_hi, b);
    };
    clip(fx0, dfx, grid.nx);
    clip(fy0, dfy, grid.ny);
    if (t_lo > t_hi) return;

    const int m_lo = std::max(0, static_cast<int>(std::floor((t_lo + rs.half_length) / rs.step - 0.5)) - 1);
    const int m_hi = std::min(rs.n_samples - 1, static_cast<int>(std::ceil((t_hi + rs.half_length) / rs.step - 0.5)) + 1);
    for (int m = m_lo; m <= m_hi; ++m) {
        const double t = -rs.half_length + (m + 0.5) * rs.step;
        const BilinearStencil st = bilinear_stencil_at_index(grid, fx0 + t * dfx, fy0 + t * dfy);
        if (st.count > 0) visit(st);
    }
}

}  // namespace

Sinogram radon_forward(const Image& img, const ParallelBeamGeometry& geom) {
    const Grid2& grid = img.grid();
    const RaySampling rs = RaySampling::for_grid(grid);
    Sinogram out(geom);
    const int na = geom.n_angles();
#pragma omp parallel for schedule(static)
    for (int a = 0; a < na; ++a) {
        for (int k = 0; k < geom.n_bins; ++k) {
            double acc = 0.0;
            walk_ray(grid, rs, geom.angles[a], geom.bin_center(k), [&](const BilinearStencil& st) {
                for (int c = 0; c < st.count; ++c) acc += st.weight[c] * img[st.index[c]];
            });
            out.at(a, k) = acc * rs.step;
        }
    }
    return out;
}

Image radon_adjoint(const Sinogram& sino, const Grid2& grid) {
    const RaySampling rs = RaySampling::for_grid(grid);
    const auto& geom = sino.geometry;
    Image out(grid);
    for (int a = 0; a < geom.n_angles(); ++a) {
        for (int k = 0; k < geom.n_bins; ++k) {
            const double r = sino.at(a, k) * rs.step;
            if (r == 0.0) continue;
            walk_ray(grid, rs, geom.angles[a], geom.bin_center(k), [&](const BilinearStencil& st) {
                for (int c = 0; c < st.count; ++c) out[st.index[c]] += st.weight[c] * r;
            });
        }
    }
    return out;
}

}  // namespace tomoflow
