#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "tomoflow/grid.hpp"

namespace tomoflow {

/// PSNR reported for identical images.
inline constexpr double kPsnrCapDb = 99.0;

/// 10 log10(peak^2 / MSE), capped at kPsnrCapDb. Throws std::invalid_argument on grid mismatch.
double psnr(const Image& x, const Image& ref, double peak = 1.0);

struct SsimParams {
    double window_sigma = 1.5;
    int window_radius = 5;  ///< 11 x 11 window
    double k1 = 0.01;
    double k2 = 0.03;
    double peak = 1.0;
};

/// Mean local SSIM with a Gaussian window. Near the border the window is cut to
/// the grid and renormalized, so every pixel contributes.
double ssim(const Image& x, const Image& ref, const SsimParams& params = {});

struct MetricRow {
    std::string method;
    int gate = 0;
    double ssim = 0.0;
    double psnr_db = 0.0;
    std::string manifest_hash;

    bool operator==(const MetricRow&) const = default;
};

struct MetricReport {
    std::vector<MetricRow> rows;

    double mean_ssim(const std::string& method) const;
    double mean_psnr(const std::string& method) const;
    bool operator==(const MetricReport&) const = default;
};

/// CSV with header method,gate,ssim,psnr_db,manifest_hash. Numbers use 17
/// significant digits so parsing gives back the same doubles.
std::string to_csv(const MetricReport& report);
MetricReport parse_csv(const std::string& text);

/// Plain-text table with one row per method and one column per gate (SSIM above PSNR).
std::string format_table(const MetricReport& report);

}  // namespace tomoflow
