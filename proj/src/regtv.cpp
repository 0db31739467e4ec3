#include "tomoflow/regtv.hpp"

#include <cmath>
#include <stdexcept>

namespace tomoflow {

TvConfig TvConfig::make(double epsilon, double mu1) {
    if (!(epsilon > 0.0)) throw std::invalid_argument("TvConfig: epsilon must be > 0");
    if (!(mu1 >= 0.0)) throw std::invalid_argument("TvConfig: mu1 must be >= 0");
    return TvConfig{epsilon, mu1};
}

VectorField2 forward_gradient(const Image& img) {
    const Grid2& g = img.grid();
    VectorField2 out(g);
    const double hx = g.hx();
    const double hy = g.hy();
    for (int j = 0; j < g.ny; ++j) {
        for (int i = 0; i < g.nx; ++i) {
            const std::size_t k = g.index(i, j);
            out.u[k] = i + 1 < g.nx ? (img(i + 1, j) - img(i, j)) / hx : 0.0;
            out.v[k] = j + 1 < g.ny ? (img(i, j + 1) - img(i, j)) / hy : 0.0;
        }
    }
    return out;
}

Image forward_gradient_adjoint(const VectorField2& field) {
    const Grid2& g = field.grid;
    Image out(g);
    const double hx = g.hx();
    const double hy = g.hy();
    for (int j = 0; j < g.ny; ++j) {
        for (int i = 0; i < g.nx; ++i) {
            const std::size_t k = g.index(i, j);
            double acc = 0.0;
            if (i + 1 < g.nx) acc -= field.u[k] / hx;
            if (i > 0) acc += field.u[g.index(i - 1, j)] / hx;
            if (j + 1 < g.ny) acc -= field.v[k] / hy;
            if (j > 0) acc += field.v[g.index(i, j - 1)] / hy;
            out[k] = acc;
        }
    }
    return out;
}

double tv_value(const Image& img, const TvConfig& cfg) {
    const VectorField2 grad = forward_gradient(img);
    double acc = 0.0;
    for (std::size_t k = 0; k < grad.u.size(); ++k) {
        acc += std::sqrt(grad.u[k] * grad.u[k] + grad.v[k] * grad.v[k] + cfg.epsilon);
    }
    return acc * img.grid().cell_area();
}

Image tv_gradient(const Image& img, const TvConfig& cfg) {
    VectorField2 grad = forward_gradient(img);
    const double area = img.grid().cell_area();
    for (std::size_t k = 0; k < grad.u.size(); ++k) {
        const double mag = std::sqrt(grad.u[k] * grad.u[k] + grad.v[k] * grad.v[k] + cfg.epsilon);
        grad.u[k] *= area / mag;
        grad.v[k] *= area / mag;
    }
    return forward_gradient_adjoint(grad);
}

}  // namespace tomoflow
