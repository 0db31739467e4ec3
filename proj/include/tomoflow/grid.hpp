#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace tomoflow {

/// Uniform 2D pixel grid over a rectangle. Samples live at pixel centres,
/// x_min + (i + 1/2) hx, and values are stored row-major (index j * nx + i).
struct Grid2 {
    int nx = 0;
    int ny = 0;
    double x_min = 0.0;
    double x_max = 0.0;
    double y_min = 0.0;
    double y_max = 0.0;

    /// Throws std::invalid_argument unless nx, ny >= 2 and the extents are ordered.
    static Grid2 make(int nx, int ny, double x_min, double x_max, double y_min, double y_max);

    double hx() const { return (x_max - x_min) / nx; }
    double hy() const { return (y_max - y_min) / ny; }
    double cell_area() const { return hx() * hy(); }
    double area() const { return (x_max - x_min) * (y_max - y_min); }
    std::size_t size() const { return static_cast<std::size_t>(nx) * static_cast<std::size_t>(ny); }
    std::size_t index(int i, int j) const { return static_cast<std::size_t>(j) * nx + i; }
    double x(int i) const { return x_min + (i + 0.5) * hx(); }
    double y(int j) const { return y_min + (j + 0.5) * hy(); }

    bool operator==(const Grid2&) const = default;
};

struct Point2 {
    double x = 0.0;
    double y = 0.0;
};

class Image {
public:
    Image() = default;
    explicit Image(const Grid2& grid, double fill = 0.0) : grid_(grid), values_(grid.size(), fill) {}
    Image(const Grid2& grid, std::vector<double> values);

    const Grid2& grid() const { return grid_; }
    std::span<double> values() { return values_; }
    std::span<const double> values() const { return values_; }
    std::vector<double>& data() { return values_; }
    const std::vector<double>& data() const { return values_; }

    double& operator()(int i, int j) { return values_[grid_.index(i, j)]; }
    double operator()(int i, int j) const { return values_[grid_.index(i, j)]; }
    double& operator[](std::size_t k) { return values_[k]; }
    double operator[](std::size_t k) const { return values_[k]; }
    std::size_t size() const { return values_.size(); }

    bool all_finite() const;

    Image& operator+=(const Image& other);
    Image& operator-=(const Image& other);
    Image& operator*=(double s);
    /// this += s * other
    Image& axpy(double s, const Image& other);

    bool operator==(const Image&) const = default;

private:
    Grid2 grid_;
    std::vector<double> values_;
};

Image operator+(Image a, const Image& b);
Image operator-(Image a, const Image& b);
Image operator*(double s, Image a);

/// Euclidean (unweighted) inner product and norm over pixel values.
double dot(const Image& a, const Image& b);
double norm(const Image& a);

/// Displacement or velocity field sampled at pixel centres, physical units.
struct VectorField2 {
    Grid2 grid;
    std::vector<double> u;
    std::vector<double> v;

    VectorField2() = default;
    explicit VectorField2(const Grid2& g, double fu = 0.0, double fv = 0.0)
        : grid(g), u(g.size(), fu), v(g.size(), fv) {}

    bool all_finite() const;
    VectorField2& axpy(double s, const VectorField2& other);
    VectorField2& operator*=(double s);
    bool operator==(const VectorField2&) const = default;
};

double dot(const VectorField2& a, const VectorField2& b);
double norm(const VectorField2& a);

/// Gate times t_i = i/N (i = 0..N) refined into fine times tau_j = j/(MN).
struct TimeGrid {
    int N = 1;
    int M = 1;

    static TimeGrid make(int N, int M);

    int steps() const { return N * M; }
    double dt() const { return 1.0 / steps(); }
    double tau(int j) const { return static_cast<double>(j) / steps(); }
    double gate_time(int i) const { return static_cast<double>(i) / N; }
    int gate_step(int i) const { return i * M; }

    bool operator==(const TimeGrid&) const = default;
};

/// Velocity samples nu(tau_j, .) for j = 0..MN.
struct VelocityFieldSeries {
    TimeGrid timegrid;
    std::vector<VectorField2> fields;

    VelocityFieldSeries() = default;
    VelocityFieldSeries(const TimeGrid& tg, const Grid2& grid)
        : timegrid(tg), fields(static_cast<std::size_t>(tg.steps()) + 1, VectorField2(grid)) {}

    const Grid2& grid() const { return fields.front().grid; }
    bool all_finite() const;
    VelocityFieldSeries& axpy(double s, const VelocityFieldSeries& other);
    bool operator==(const VelocityFieldSeries&) const = default;
};

double dot(const VelocityFieldSeries& a, const VelocityFieldSeries& b);
double norm(const VelocityFieldSeries& a);

/// Bilinear weights of one sample point: up to four (pixel index, weight) pairs.
/// Pixels outside the grid are dropped, which is the zero extension.
struct BilinearStencil {
    std::size_t index[4];
    double weight[4];
    int count = 0;
};

/// Pixel-centre bilinear stencil at physical point (x, y). Beyond one cell
/// outside the hull of pixel centres the stencil is empty.
BilinearStencil bilinear_stencil(const Grid2& grid, double x, double y);
/// Same, in continuous pixel-index coordinates (pixel centre (i, j) is at (i, j)).
/// At an integral coordinate the pixel weight is exactly 1, so zero displacements are exact.
BilinearStencil bilinear_stencil_at_index(const Grid2& grid, double fx, double fy);

double interp_bilinear(const Image& img, double x, double y);
std::vector<double> interp_bilinear(const Image& img, std::span<const Point2> points);

/// Value and spatial gradient of the bilinear interpolant at (x, y).
struct InterpJet {
    double value = 0.0;
    double dx = 0.0;
    double dy = 0.0;
};
InterpJet interp_bilinear_jet(const Image& img, double x, double y);
/// Same, in continuous pixel-index coordinates; uses the cell bilinear_stencil_at_index picks.
InterpJet interp_bilinear_jet_at_index(const Image& img, double fx, double fy);

/// Central differences inside, one-sided at the border, scaled by 1/hx, 1/hy.
VectorField2 gradient_central(const Image& img);
/// Divergence with the same stencil as gradient_central.
Image divergence(const VectorField2& field);

}  // namespace tomoflow
