#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "tomoflow/grid.hpp"
#include "tomoflow/radon.hpp"

namespace tomoflow {

namespace fs = std::filesystem;

/// Every array is stored as `<stem>.bin` (little-endian float64, row-major)
/// next to `<stem>.json` describing its shape. Paths passed here name the .bin
/// file; the sidecar path is derived from it.
fs::path sidecar_path(const fs::path& bin_path);

void write_f64(const fs::path& path, std::span<const double> values);
/// Throws InputError if the file is missing or does not hold `expected` values.
std::vector<double> read_f64(const fs::path& path, std::size_t expected);

void write_image(const fs::path& bin_path, const Image& img);
Image read_image(const fs::path& bin_path);

/// u then v in one .bin; the sidecar lists the components.
void write_field(const fs::path& bin_path, const VectorField2& field);
VectorField2 read_field(const fs::path& bin_path);

void write_sinogram(const fs::path& bin_path, const Sinogram& sino);
Sinogram read_sinogram(const fs::path& bin_path);

/// 8-bit grayscale PNG, min-max normalized (a constant image maps to 0).
void write_png(const fs::path& path, const Image& img);

/// Git-style blob hash: sha1("blob <size>\0" + bytes), lowercase hex.
std::string git_blob_hash(const fs::path& path);
/// Same hash of an in-memory byte string.
std::string git_blob_hash_of(std::string_view bytes);

}  // namespace tomoflow
