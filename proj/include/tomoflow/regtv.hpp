#pragma once

#include "tomoflow/grid.hpp"

namespace tomoflow {

struct TvConfig {
    double epsilon = 1e-12;
    double mu1 = 0.0;

    static TvConfig make(double epsilon, double mu1);
};

/// Forward differences with replicate (Neumann) boundary: the last column of
/// the x-difference and the last row of the y-difference are zero.
VectorField2 forward_gradient(const Image& img);
/// Exact transpose of forward_gradient (a negative divergence).
Image forward_gradient_adjoint(const VectorField2& field);

/// sum sqrt(fx^2 + fy^2 + eps) hx hy. The weight mu1 is not applied.
double tv_value(const Image& img, const TvConfig& cfg);
/// Derivative of tv_value with respect to the pixel values.
Image tv_gradient(const Image& img, const TvConfig& cfg);

}  // namespace tomoflow
