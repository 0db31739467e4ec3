#include "tomoflow/sim.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <stdexcept>

#include "tomoflow/error.hpp"

namespace tomoflow {

namespace {

constexpr double pi = std::numbers::pi;

double half_extent(const Grid2& g) {
    return 0.5 * std::min(g.x_max - g.x_min, g.y_max - g.y_min);
}

bool inside_star(const StarObject& s, double t, double x, double y) {
    const double cx = s.cx + t * s.dx;
    const double cy = s.cy + t * s.dy;
    const double scale = 1.0 + t * s.grow;
    const double px = x - cx;
    const double py = y - cy;
    const double r = std::hypot(px, py);
    if (r > s.radius * scale * (1.0 + s.depth)) return false;
    const double phi = std::atan2(py, px) - t * s.turn;
    return r <= s.radius * scale * (1.0 + s.depth * std::cos(s.points * (phi - s.phase)));
}

// Mean over a supersample x supersample sub-pixel lattice of value(x, y).
template <typename F>
Image rasterize(const Grid2& grid, int supersample, F&& value) {
    Image img(grid);
    const double hx = grid.hx();
    const double hy = grid.hy();
    const double w = 1.0 / (supersample * supersample);
#pragma omp parallel for schedule(static)
    for (int j = 0; j < grid.ny; ++j) {
        for (int i = 0; i < grid.nx; ++i) {
            double acc = 0.0;
            for (int b = 0; b < supersample; ++b) {
                const double y = grid.y_min + (j + (b + 0.5) / supersample) * hy;
                for (int a = 0; a < supersample; ++a) {
                    const double x = grid.x_min + (i + (a + 0.5) / supersample) * hx;
                    acc += value(x, y);
                }
            }
            img(i, j) = std::clamp(acc * w, 0.0, 1.0);
        }
    }
    return img;
}

Image render_heart(const PhantomSpec& spec, double t) {
    const Grid2& g = spec.grid;
    const double R = half_extent(g);
    const double xc = 0.5 * (g.x_min + g.x_max);
    const double yc = 0.5 * (g.y_min + g.y_max);
    // Contraction peaks mid-cycle and the wall keeps its area.
    const double squeeze = 1.0 - spec.contraction * std::sin(pi * t);
    const double r_in0 = 0.30 * R;
    const double r_out0 = 0.48 * R;
    const double r_in = r_in0 * squeeze;
    const double r_out = std::sqrt(r_out0 * r_out0 - r_in0 * r_in0 + r_in * r_in);
    const double hx0 = xc + 0.12 * R;
    const double hy0 = yc + 0.05 * R;
    return rasterize(g, spec.supersample, [&](double x, double y) {
        const double bx = (x - xc) / (0.85 * R);
        const double by = (y - yc) / (0.70 * R);
        double v = bx * bx + by * by <= 1.0 ? 0.15 : 0.0;
        // Slightly elliptical ventricle.
        const double ex = (x - hx0) / 1.1;
        const double ey = (y - hy0) / 0.9;
        const double r = std::hypot(ex, ey);
        if (r <= r_in) {
            v = 0.5;
        } else if (r <= r_out) {
            v = 1.0;
        }
        // Static spine-like block below the heart.
        if (std::abs(x - xc) <= 0.08 * R && std::abs(y - (yc - 0.55 * R)) <= 0.08 * R) v = 0.8;
        return v;
    });
}

}  // namespace

void PhantomSpec::validate() const {
    if (N < 1) throw ConfigError("phantom: N must be >= 1");
    if (supersample < 1) throw ConfigError("phantom: supersample must be >= 1");
    if (!(translation >= 0.0) || !(rotation >= 0.0) || !(scale >= 0.0) || scale >= 1.0)
        throw ConfigError("phantom: motion amplitudes must be >= 0 (scale < 1)");
    if (!(contraction >= 0.0) || contraction >= 1.0) throw ConfigError("phantom: contraction must be in [0, 1)");
    if (grid.nx < 2 || grid.ny < 2) throw ConfigError("phantom: grid must be at least 2x2");
}

std::vector<StarObject> star_objects(const PhantomSpec& spec) {
    const Grid2& g = spec.grid;
    const double R = half_extent(g);
    const double xc = 0.5 * (g.x_min + g.x_max);
    const double yc = 0.5 * (g.y_min + g.y_max);
    std::mt19937_64 rng(spec.seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    std::vector<StarObject> out;
    const double ring_offset = 2.0 * pi * unit(rng);
    for (int k = 0; k < 6; ++k) {
        StarObject s;
        // Five objects on a ring and one in the middle.
        const double ang = ring_offset + 2.0 * pi * k / 5.0;
        const double ring = k < 5 ? 0.52 * R : 0.0;
        s.cx = xc + ring * std::cos(ang);
        s.cy = yc + ring * std::sin(ang);
        s.radius = (0.11 + 0.05 * unit(rng)) * R;
        s.depth = 0.2 + 0.2 * unit(rng);
        s.points = 3 + static_cast<int>(unit(rng) * 4.0);
        s.phase = 2.0 * pi * unit(rng);
        s.value = 0.5 + 0.5 * unit(rng);
        const double dir = 2.0 * pi * unit(rng);
        const double mag = spec.translation * R * (0.5 + 0.5 * unit(rng));
        s.dx = mag * std::cos(dir);
        s.dy = mag * std::sin(dir);
        s.turn = spec.rotation * (2.0 * unit(rng) - 1.0);
        s.grow = spec.scale * (2.0 * unit(rng) - 1.0);
        out.push_back(s);
    }
    return out;
}

Image render_stars(std::span<const StarObject> objects, const Grid2& grid, double t, int supersample) {
    return rasterize(grid, supersample, [&](double x, double y) {
        double v = 0.0;
        for (const auto& s : objects) {
            if (s.value > v && inside_star(s, t, x, y)) v = s.value;
        }
        return v;
    });
}

std::vector<Image> make_phantom(const PhantomSpec& spec) {
    spec.validate();
    std::vector<Image> gates;
    const auto objects = spec.kind == PhantomKind::stars ? star_objects(spec) : std::vector<StarObject>{};
    for (int i = 0; i <= spec.N; ++i) {
        const double t = static_cast<double>(i) / spec.N;
        gates.push_back(spec.kind == PhantomKind::stars ? render_stars(objects, spec.grid, t, spec.supersample)
                                                        : render_heart(spec, t));
    }
    return gates;
}

std::vector<Sinogram> simulate_data(std::span<const Image> images, const GatedGeometry& geom) {
    if (static_cast<int>(images.size()) != geom.n_gates()) {
        throw std::invalid_argument("simulate_data: one image per gate required");
    }
    std::vector<Sinogram> out(images.size());
    for (std::size_t i = 0; i < images.size(); ++i) out[i] = radon_forward(images[i], geom.gates[i]);
    return out;
}

double snr_db(std::span<const Sinogram> clean, std::span<const Sinogram> noisy) {
    if (clean.size() != noisy.size()) throw std::invalid_argument("snr_db: gate count mismatch");
    double sum = 0.0;
    std::size_t count = 0;
    for (const auto& s : clean) {
        for (double v : s.values) sum += v;
        count += s.values.size();
    }
    const double mean = count ? sum / count : 0.0;
    double signal = 0.0;
    double noise = 0.0;
    for (std::size_t i = 0; i < clean.size(); ++i) {
        if (clean[i].values.size() != noisy[i].values.size()) throw std::invalid_argument("snr_db: shape mismatch");
        for (std::size_t k = 0; k < clean[i].values.size(); ++k) {
            const double c = clean[i].values[k];
            const double e = noisy[i].values[k] - c;
            signal += (c - mean) * (c - mean);
            noise += e * e;
        }
    }
    if (noise == 0.0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(signal / noise);
}

NoisyData add_noise(std::span<const Sinogram> data, const NoiseSpec& spec) {
    NoisyData out;
    out.data.assign(data.begin(), data.end());
    if (std::isinf(spec.target_snr_db) && spec.target_snr_db > 0) return out;
    if (!std::isfinite(spec.target_snr_db)) throw ConfigError("noise: target SNR must be finite or +inf");

    std::mt19937_64 rng(spec.seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::vector<std::vector<double>> draws(data.size());
    double sum = 0.0;
    std::size_t count = 0;
    double noise_power = 0.0;
    for (std::size_t i = 0; i < data.size(); ++i) {
        draws[i].resize(data[i].values.size());
        for (double& d : draws[i]) {
            d = gauss(rng);
            noise_power += d * d;
        }
        for (double v : data[i].values) sum += v;
        count += data[i].values.size();
    }
    const double mean = count ? sum / count : 0.0;
    double signal = 0.0;
    for (const auto& s : data) {
        for (double v : s.values) signal += (v - mean) * (v - mean);
    }
    if (!(signal > 0.0)) throw InputError("cannot calibrate noise: the data has no variance (all zero?)");

    const double scale = std::sqrt(signal / (noise_power * std::pow(10.0, spec.target_snr_db / 10.0)));
    for (std::size_t i = 0; i < data.size(); ++i) {
        for (std::size_t k = 0; k < draws[i].size(); ++k) out.data[i].values[k] += scale * draws[i][k];
    }
    out.achieved_snr_db = snr_db(data, out.data);
    return out;
}

}  // namespace tomoflow
