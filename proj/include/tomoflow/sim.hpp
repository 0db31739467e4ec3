#pragma once

#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include "tomoflow/grid.hpp"
#include "tomoflow/radon.hpp"

namespace tomoflow {

enum class PhantomKind { stars, heart };

/// Phantom description. Geometric parameters are fractions of the half-extent
/// of the grid, so one spec renders the same picture at any resolution.
///
/// Stars: six star-shaped objects on a ring, each following its own affine
/// path over t in [0, 1] (translation up to `translation`, rotation up to
/// `rotation` radians, isotropic scaling up to `scale`).
/// Heart: a static body ellipse with a ventricle whose wall contracts and
/// expands radially by up to `contraction`.
struct PhantomSpec {
    PhantomKind kind = PhantomKind::stars;
    Grid2 grid;
    int N = 5;
    std::uint64_t seed = 0;
    double translation = 0.12;
    double rotation = 0.3;
    double scale = 0.1;
    double contraction = 0.25;
    int supersample = 4;

    void validate() const;
};

/// One star object: boundary radius r(phi) = radius * (1 + depth cos(points (phi - phase))).
struct StarObject {
    double cx = 0.0;
    double cy = 0.0;
    double radius = 0.0;
    double depth = 0.0;
    int points = 5;
    double phase = 0.0;
    double value = 1.0;
    double dx = 0.0;  ///< displacement at t = 1
    double dy = 0.0;
    double turn = 0.0;  ///< rotation at t = 1
    double grow = 0.0;  ///< relative scale change at t = 1
};

/// The star objects of a spec, in physical units.
std::vector<StarObject> star_objects(const PhantomSpec& spec);

/// Renders the given objects at time t (pixel-averaged indicator, max over objects).
Image render_stars(std::span<const StarObject> objects, const Grid2& grid, double t, int supersample);

/// Gate images for t_i = i / N, i = 0..N. Values lie in [0, 1].
std::vector<Image> make_phantom(const PhantomSpec& spec);

/// Per-gate forward projection: images[i - 1] is gate i.
std::vector<Sinogram> simulate_data(std::span<const Image> images, const GatedGeometry& geom);

struct NoiseSpec {
    double target_snr_db = std::numeric_limits<double>::infinity();
    std::uint64_t seed = 0;
};

struct NoisyData {
    std::vector<Sinogram> data;
    double achieved_snr_db = std::numeric_limits<double>::infinity();
};

/// 10 log10(|g - mean(g)|^2 / |noise|^2) over all gates together.
double snr_db(std::span<const Sinogram> clean, std::span<const Sinogram> noisy);

/// Adds white Gaussian noise scaled so the SNR hits the target exactly for the
/// drawn noise vector. An infinite target returns the data unchanged. Throws
/// InputError for a finite target on data without variance.
NoisyData add_noise(std::span<const Sinogram> data, const NoiseSpec& spec);

}  // namespace tomoflow
