#include "tomoflow/kernel.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <memory>
#include <mutex>
#include <stdexcept>
#include <vector>

namespace tomoflow {

namespace {

// FFTW's planner is not thread-safe; execution of existing plans is.
std::mutex& planner_mutex() {
    static std::mutex m;
    return m;
}

// fftw_malloc'd storage; new-array execution needs the planner's alignment.
template <typename T>
struct FftwBuffer {
    struct Free {
        void operator()(T* p) const { fftw_free(p); }
    };
    std::unique_ptr<T[], Free> ptr;
    std::size_t n = 0;

    explicit FftwBuffer(std::size_t count) : ptr(static_cast<T*>(fftw_malloc(sizeof(T) * count))), n(count) {
        if (!ptr) throw std::bad_alloc();
        std::fill(ptr.get(), ptr.get() + n, T{});
    }
    T* data() { return ptr.get(); }
    T& operator[](std::size_t k) { return ptr[k]; }
    fftw_complex* as_fftw() { return reinterpret_cast<fftw_complex*>(ptr.get()); }
};

// Smallest 2^a 3^b 5^c 7^d >= n.
int good_fft_size(int n) {
    for (int m = n;; ++m) {
        int r = m;
        for (int p : {2, 3, 5, 7}) {
            while (r % p == 0) r /= p;
        }
        if (r == 1) return m;
    }
}

}  // namespace

GaussianKernel GaussianKernel::make(double sigma) {
    if (!(sigma > 0.0) || !std::isfinite(sigma)) throw std::invalid_argument("GaussianKernel: sigma must be > 0");
    return GaussianKernel{sigma};
}

double GaussianKernel::operator()(double dx, double dy) const {
    return std::exp(-(dx * dx + dy * dy) / (2.0 * sigma * sigma));
}

struct KernelOperator::Impl {
    GaussianKernel kernel;
    Grid2 grid;
    int px = 0;
    int py = 0;
    int cx = 0;  // complex width px/2 + 1
    std::vector<std::complex<double>> spectrum;
    fftw_plan forward = nullptr;
    fftw_plan backward = nullptr;

    ~Impl() {
        std::lock_guard lock(planner_mutex());
        if (forward) fftw_destroy_plan(forward);
        if (backward) fftw_destroy_plan(backward);
    }
};

KernelOperator::KernelOperator(const GaussianKernel& kernel, const Grid2& grid) : impl_(std::make_unique<Impl>()) {
    Impl& im = *impl_;
    im.kernel = GaussianKernel::make(kernel.sigma);
    im.grid = grid;
    im.px = good_fft_size(2 * grid.nx);
    im.py = good_fft_size(2 * grid.ny);
    im.cx = im.px / 2 + 1;

    const std::size_t real_size = static_cast<std::size_t>(im.px) * im.py;
    const std::size_t cplx_size = static_cast<std::size_t>(im.cx) * im.py;
    FftwBuffer<double> real(real_size);
    FftwBuffer<std::complex<double>> spec(cplx_size);

    {
        std::lock_guard lock(planner_mutex());
        // Planning with FFTW_ESTIMATE keeps the chosen algorithm, and so the
        // rounding, identical between runs.
        im.forward = fftw_plan_dft_r2c_2d(im.py, im.px, real.data(), spec.as_fftw(), FFTW_ESTIMATE);
        im.backward = fftw_plan_dft_c2r_2d(im.py, im.px, spec.as_fftw(), real.data(), FFTW_ESTIMATE);
    }
    if (!im.forward || !im.backward) throw std::runtime_error("KernelOperator: FFTW planning failed");

    // Kernel sampled at every offset (di, dj) in [-(n-1), n-1], wrapped into the padded array.
    const double hx = grid.hx();
    const double hy = grid.hy();
    for (int dj = -(grid.ny - 1); dj <= grid.ny - 1; ++dj) {
        for (int di = -(grid.nx - 1); di <= grid.nx - 1; ++di) {
            const int ii = (di + im.px) % im.px;
            const int jj = (dj + im.py) % im.py;
            real[static_cast<std::size_t>(jj) * im.px + ii] = im.kernel(di * hx, dj * hy) * hx * hy;
        }
    }
    fftw_execute_dft_r2c(im.forward, real.data(), spec.as_fftw());
    const double norm = 1.0 / static_cast<double>(real_size);
    im.spectrum.assign(spec.data(), spec.data() + cplx_size);
    for (auto& c : im.spectrum) c *= norm;
}

KernelOperator::~KernelOperator() = default;
KernelOperator::KernelOperator(KernelOperator&&) noexcept = default;
KernelOperator& KernelOperator::operator=(KernelOperator&&) noexcept = default;

const Grid2& KernelOperator::grid() const { return impl_->grid; }
const GaussianKernel& KernelOperator::kernel() const { return impl_->kernel; }

Image KernelOperator::apply(const Image& img) const {
    const Impl& im = *impl_;
    if (!(img.grid() == im.grid)) throw std::invalid_argument("KernelOperator: grid mismatch");
    const Grid2& g = im.grid;
    FftwBuffer<double> real(static_cast<std::size_t>(im.px) * im.py);
    FftwBuffer<std::complex<double>> spec(im.spectrum.size());
    for (int j = 0; j < g.ny; ++j) {
        for (int i = 0; i < g.nx; ++i) real[static_cast<std::size_t>(j) * im.px + i] = img(i, j);
    }
    fftw_execute_dft_r2c(im.forward, real.data(), spec.as_fftw());
    for (std::size_t k = 0; k < im.spectrum.size(); ++k) spec[k] *= im.spectrum[k];
    fftw_execute_dft_c2r(im.backward, spec.as_fftw(), real.data());
    Image out(g);
    for (int j = 0; j < g.ny; ++j) {
        for (int i = 0; i < g.nx; ++i) out(i, j) = real[static_cast<std::size_t>(j) * im.px + i];
    }
    return out;
}

VectorField2 KernelOperator::apply(const VectorField2& field) const {
    const Grid2& g = impl_->grid;
    if (!(field.grid == g)) throw std::invalid_argument("KernelOperator: grid mismatch");
    VectorField2 out(g);
    out.u = apply(Image(g, field.u)).data();
    out.v = apply(Image(g, field.v)).data();
    return out;
}

VectorField2 apply_K(const GaussianKernel& kernel, const VectorField2& field) {
    return KernelOperator(kernel, field.grid).apply(field);
}

double v_inner(const GaussianKernel& kernel, const VectorField2& a, const VectorField2& b) {
    GaussianKernel::make(kernel.sigma);
    return dot(a, b) * a.grid.cell_area();
}

}  // namespace tomoflow
