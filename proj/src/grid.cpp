#include "tomoflow/grid.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace tomoflow {

Grid2 Grid2::make(int nx, int ny, double x_min, double x_max, double y_min, double y_max) {
    if (nx < 2 || ny < 2) {
        throw std::invalid_argument("Grid2: nx and ny must be at least 2");
    }
    if (!(x_max > x_min) || !(y_max > y_min)) {
        throw std::invalid_argument("Grid2: extents must satisfy max > min");
    }
    return Grid2{nx, ny, x_min, x_max, y_min, y_max};
}

Image::Image(const Grid2& grid, std::vector<double> values) : grid_(grid), values_(std::move(values)) {
    if (values_.size() != grid_.size()) {
        throw std::invalid_argument("Image: value count does not match grid");
    }
}

bool Image::all_finite() const {
    return std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); });
}

Image& Image::operator+=(const Image& other) { return axpy(1.0, other); }
Image& Image::operator-=(const Image& other) { return axpy(-1.0, other); }

Image& Image::operator*=(double s) {
    for (double& v : values_) v *= s;
    return *this;
}

Image& Image::axpy(double s, const Image& other) {
    if (!(other.grid_ == grid_)) throw std::invalid_argument("Image: grid mismatch");
    for (std::size_t k = 0; k < values_.size(); ++k) values_[k] += s * other.values_[k];
    return *this;
}

Image operator+(Image a, const Image& b) { return a += b; }
Image operator-(Image a, const Image& b) { return a -= b; }
Image operator*(double s, Image a) { return a *= s; }

double dot(const Image& a, const Image& b) {
    if (!(a.grid() == b.grid())) throw std::invalid_argument("dot: grid mismatch");
    double acc = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) acc += a[k] * b[k];
    return acc;
}

double norm(const Image& a) { return std::sqrt(dot(a, a)); }

bool VectorField2::all_finite() const {
    auto fin = [](double x) { return std::isfinite(x); };
    return std::all_of(u.begin(), u.end(), fin) && std::all_of(v.begin(), v.end(), fin);
}

VectorField2& VectorField2::axpy(double s, const VectorField2& other) {
    if (!(other.grid == grid)) throw std::invalid_argument("VectorField2: grid mismatch");
    for (std::size_t k = 0; k < u.size(); ++k) {
        u[k] += s * other.u[k];
        v[k] += s * other.v[k];
    }
    return *this;
}

VectorField2& VectorField2::operator*=(double s) {
    for (double& x : u) x *= s;
    for (double& x : v) x *= s;
    return *this;
}

double dot(const VectorField2& a, const VectorField2& b) {
    if (!(a.grid == b.grid)) throw std::invalid_argument("dot: grid mismatch");
    double acc = 0.0;
    for (std::size_t k = 0; k < a.u.size(); ++k) acc += a.u[k] * b.u[k] + a.v[k] * b.v[k];
    return acc;
}

double norm(const VectorField2& a) { return std::sqrt(dot(a, a)); }

TimeGrid TimeGrid::make(int N, int M) {
    if (N < 1 || M < 1) throw std::invalid_argument("TimeGrid: N and M must be >= 1");
    return TimeGrid{N, M};
}

bool VelocityFieldSeries::all_finite() const {
    return std::all_of(fields.begin(), fields.end(), [](const VectorField2& f) { return f.all_finite(); });
}

VelocityFieldSeries& VelocityFieldSeries::axpy(double s, const VelocityFieldSeries& other) {
    if (other.fields.size() != fields.size()) throw std::invalid_argument("VelocityFieldSeries: length mismatch");
    for (std::size_t j = 0; j < fields.size(); ++j) fields[j].axpy(s, other.fields[j]);
    return *this;
}

double dot(const VelocityFieldSeries& a, const VelocityFieldSeries& b) {
    if (a.fields.size() != b.fields.size()) throw std::invalid_argument("dot: series length mismatch");
    double acc = 0.0;
    for (std::size_t j = 0; j < a.fields.size(); ++j) acc += dot(a.fields[j], b.fields[j]);
    return acc;
}

double norm(const VelocityFieldSeries& a) { return std::sqrt(dot(a, a)); }

namespace {

// fx, fy are continuous pixel-index coordinates (pixel centre i sits at fx = i).
BilinearStencil stencil_at_index(const Grid2& g, double fx, double fy) {
    BilinearStencil s;
    if (!(fx > -1.0 && fx < g.nx && fy > -1.0 && fy < g.ny)) return s;
    const double flx = std::floor(fx);
    const double fly = std::floor(fy);
    const int i0 = static_cast<int>(flx);
    const int j0 = static_cast<int>(fly);
    const double tx = fx - flx;
    const double ty = fy - fly;
    const int is[4] = {i0, i0 + 1, i0, i0 + 1};
    const int js[4] = {j0, j0, j0 + 1, j0 + 1};
    const double ws[4] = {(1.0 - tx) * (1.0 - ty), tx * (1.0 - ty), (1.0 - tx) * ty, tx * ty};
    for (int c = 0; c < 4; ++c) {
        if (is[c] < 0 || is[c] >= g.nx || js[c] < 0 || js[c] >= g.ny) continue;
        s.index[s.count] = g.index(is[c], js[c]);
        s.weight[s.count] = ws[c];
        ++s.count;
    }
    return s;
}

double pixel_or_zero(const Image& img, int i, int j) {
    const Grid2& g = img.grid();
    if (i < 0 || i >= g.nx || j < 0 || j >= g.ny) return 0.0;
    return img(i, j);
}

}  // namespace

BilinearStencil bilinear_stencil_at_index(const Grid2& grid, double fx, double fy) {
    return stencil_at_index(grid, fx, fy);
}

BilinearStencil bilinear_stencil(const Grid2& grid, double x, double y) {
    return stencil_at_index(grid, (x - grid.x_min) / grid.hx() - 0.5, (y - grid.y_min) / grid.hy() - 0.5);
}

double interp_bilinear(const Image& img, double x, double y) {
    const BilinearStencil s = bilinear_stencil(img.grid(), x, y);
    double acc = 0.0;
    for (int c = 0; c < s.count; ++c) acc += s.weight[c] * img[s.index[c]];
    return acc;
}

std::vector<double> interp_bilinear(const Image& img, std::span<const Point2> points) {
    std::vector<double> out(points.size());
    for (std::size_t k = 0; k < points.size(); ++k) out[k] = interp_bilinear(img, points[k].x, points[k].y);
    return out;
}

InterpJet interp_bilinear_jet_at_index(const Image& img, double fx, double fy) {
    const Grid2& g = img.grid();
    InterpJet jet;
    if (!(fx > -1.0 && fx < g.nx && fy > -1.0 && fy < g.ny)) return jet;
    const double flx = std::floor(fx);
    const double fly = std::floor(fy);
    const int i0 = static_cast<int>(flx);
    const int j0 = static_cast<int>(fly);
    const double tx = fx - flx;
    const double ty = fy - fly;
    const double p00 = pixel_or_zero(img, i0, j0);
    const double p10 = pixel_or_zero(img, i0 + 1, j0);
    const double p01 = pixel_or_zero(img, i0, j0 + 1);
    const double p11 = pixel_or_zero(img, i0 + 1, j0 + 1);
    jet.value = (1.0 - tx) * (1.0 - ty) * p00 + tx * (1.0 - ty) * p10 + (1.0 - tx) * ty * p01 + tx * ty * p11;
    jet.dx = ((1.0 - ty) * (p10 - p00) + ty * (p11 - p01)) / g.hx();
    jet.dy = ((1.0 - tx) * (p01 - p00) + tx * (p11 - p10)) / g.hy();
    return jet;
}

InterpJet interp_bilinear_jet(const Image& img, double x, double y) {
    const Grid2& g = img.grid();
    return interp_bilinear_jet_at_index(img, (x - g.x_min) / g.hx() - 0.5, (y - g.y_min) / g.hy() - 0.5);
}

VectorField2 gradient_central(const Image& img) {
    const Grid2& g = img.grid();
    VectorField2 out(g);
    const double hx = g.hx();
    const double hy = g.hy();
    for (int j = 0; j < g.ny; ++j) {
        for (int i = 0; i < g.nx; ++i) {
            const std::size_t k = g.index(i, j);
            if (i == 0) {
                out.u[k] = (img(1, j) - img(0, j)) / hx;
            } else if (i == g.nx - 1) {
                out.u[k] = (img(i, j) - img(i - 1, j)) / hx;
            } else {
                out.u[k] = (img(i + 1, j) - img(i - 1, j)) / (2.0 * hx);
            }
            if (j == 0) {
                out.v[k] = (img(i, 1) - img(i, 0)) / hy;
            } else if (j == g.ny - 1) {
                out.v[k] = (img(i, j) - img(i, j - 1)) / hy;
            } else {
                out.v[k] = (img(i, j + 1) - img(i, j - 1)) / (2.0 * hy);
            }
        }
    }
    return out;
}

Image divergence(const VectorField2& field) {
    const Grid2& g = field.grid;
    Image out(g);
    const double hx = g.hx();
    const double hy = g.hy();
    auto U = [&](int i, int j) { return field.u[g.index(i, j)]; };
    auto V = [&](int i, int j) { return field.v[g.index(i, j)]; };
    for (int j = 0; j < g.ny; ++j) {
        for (int i = 0; i < g.nx; ++i) {
            double du = 0.0;
            double dv = 0.0;
            if (i == 0) {
                du = (U(1, j) - U(0, j)) / hx;
            } else if (i == g.nx - 1) {
                du = (U(i, j) - U(i - 1, j)) / hx;
            } else {
                du = (U(i + 1, j) - U(i - 1, j)) / (2.0 * hx);
            }
            if (j == 0) {
                dv = (V(i, 1) - V(i, 0)) / hy;
            } else if (j == g.ny - 1) {
                dv = (V(i, j) - V(i, j - 1)) / hy;
            } else {
                dv = (V(i, j + 1) - V(i, j - 1)) / (2.0 * hy);
            }
            out(i, j) = du + dv;
        }
    }
    return out;
}

}  // namespace tomoflow
