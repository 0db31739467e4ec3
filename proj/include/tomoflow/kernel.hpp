#pragma once

#include <memory>

#include "tomoflow/grid.hpp"

namespace tomoflow {

/// k(x, y) = exp(-|x - y|^2 / (2 sigma^2)) times the 2x2 identity.
struct GaussianKernel {
    double sigma = 1.0;

    static GaussianKernel make(double sigma);
    double operator()(double dx, double dy) const;
};

/// The smoothing operator (K f)(x_p) = sum_q k(x_p - x_q) f(x_q) hx hy on one
/// grid, applied per component by zero-padded (linear) FFT convolution. The
/// padded transform covers every pixel offset, so nothing wraps around.
///
/// Holds FFTW plans and the kernel spectrum; apply() is safe to call
/// concurrently on one instance.
class KernelOperator {
public:
    KernelOperator(const GaussianKernel& kernel, const Grid2& grid);
    ~KernelOperator();
    KernelOperator(KernelOperator&&) noexcept;
    KernelOperator& operator=(KernelOperator&&) noexcept;
    KernelOperator(const KernelOperator&) = delete;
    KernelOperator& operator=(const KernelOperator&) = delete;

    const Grid2& grid() const;
    const GaussianKernel& kernel() const;

    Image apply(const Image& img) const;
    VectorField2 apply(const VectorField2& field) const;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

VectorField2 apply_K(const GaussianKernel& kernel, const VectorField2& field);

/// Discrete L2 pairing sum (a.u b.u + a.v b.v) hx hy. The solver only needs L2
/// pairings because its gradient formulas already fold the kernel in.
double v_inner(const GaussianKernel& kernel, const VectorField2& a, const VectorField2& b);

}  // namespace tomoflow
