#pragma once

#include <span>
#include <vector>

#include "tomoflow/grid.hpp"

namespace tomoflow {

/// Parallel-beam view set. Angle theta has detector axis n = (cos, sin) and
/// ray direction d = (-sin, cos); bin k is centred at s_min + (k + 1/2) ds.
struct ParallelBeamGeometry {
    std::vector<double> angles;
    int n_bins = 0;
    double s_min = 0.0;
    double s_max = 0.0;

    static ParallelBeamGeometry make(std::vector<double> angles, int n_bins, double s_min, double s_max);

    int n_angles() const { return static_cast<int>(angles.size()); }
    double bin_width() const { return (s_max - s_min) / n_bins; }
    double bin_center(int k) const { return s_min + (k + 0.5) * bin_width(); }
    std::size_t size() const { return angles.size() * static_cast<std::size_t>(n_bins); }

    bool operator==(const ParallelBeamGeometry&) const = default;
};

/// One view set per gate i = 1..N, stored at gates[i - 1].
struct GatedGeometry {
    std::vector<ParallelBeamGeometry> gates;

    /// Throws std::invalid_argument if the gates disagree on the detector.
    static GatedGeometry make(std::vector<ParallelBeamGeometry> gates);

    int n_gates() const { return static_cast<int>(gates.size()); }
};

/// `n_views` angles evenly covering [offset, offset + pi).
ParallelBeamGeometry half_turn_views(double offset, int n_views, int n_bins, double s_min, double s_max);

/// Gate i (1-based) sees half_turn_views((i - 1) * stagger, ...).
GatedGeometry staggered_gated_geometry(int n_gates, int views_per_gate, double stagger, int n_bins, double s_min,
                                       double s_max);

/// Concatenates the view sets of all gates into one geometry.
ParallelBeamGeometry pooled(const GatedGeometry& geom);

/// Angle-major projection data: values[a * n_bins + k].
struct Sinogram {
    ParallelBeamGeometry geometry;
    std::vector<double> values;

    Sinogram() = default;
    explicit Sinogram(const ParallelBeamGeometry& g, double fill = 0.0) : geometry(g), values(g.size(), fill) {}

    double& at(int a, int k) { return values[static_cast<std::size_t>(a) * geometry.n_bins + k]; }
    double at(int a, int k) const { return values[static_cast<std::size_t>(a) * geometry.n_bins + k]; }
    bool all_finite() const;

    bool operator==(const Sinogram&) const = default;
};

double dot(const Sinogram& a, const Sinogram& b);
double norm(const Sinogram& a);
Sinogram operator-(Sinogram a, const Sinogram& b);

/// Concatenates per-gate sinograms in gate order, matching pooled().
Sinogram pooled(std::span<const Sinogram> gates);

/// Ray sampling used by both transforms. Samples sit at t_m = -L + (m + 1/2) step
/// along each ray, where L bounds the grid from the origin and step <= min(hx, hy) / 2.
struct RaySampling {
    double half_length = 0.0;
    double step = 0.0;
    int n_samples = 0;

    static RaySampling for_grid(const Grid2& grid);
};

/// Line integrals by bilinear sampling along each ray, times the step length.
Sinogram radon_forward(const Image& img, const ParallelBeamGeometry& geom);

/// Exact transpose of radon_forward: each ray sample spreads its weight onto
/// the four pixels it was interpolated from.
Image radon_adjoint(const Sinogram& sino, const Grid2& grid);

}  // namespace tomoflow
