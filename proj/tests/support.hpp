#pragma once

#include <random>

#include "tomoflow/grid.hpp"
#include "tomoflow/radon.hpp"

namespace testing {

using namespace tomoflow;

inline Image random_image(const Grid2& g, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
    std::uniform_real_distribution<double> d(lo, hi);
    Image img(g);
    for (auto& v : img.data()) v = d(rng);
    return img;
}

inline VectorField2 random_field(const Grid2& g, std::mt19937_64& rng, double amp = 1.0) {
    std::uniform_real_distribution<double> d(-amp, amp);
    VectorField2 f(g);
    for (auto& v : f.u) v = d(rng);
    for (auto& v : f.v) v = d(rng);
    return f;
}

inline Sinogram random_sinogram(const ParallelBeamGeometry& geom, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> d(-1.0, 1.0);
    Sinogram s(geom);
    for (auto& v : s.values) v = d(rng);
    return s;
}

inline double rel_err(double a, double b) {
    const double scale = std::max(std::abs(a), std::abs(b));
    return scale == 0.0 ? 0.0 : std::abs(a - b) / scale;
}

}  // namespace testing
