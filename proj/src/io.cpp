#include "tomoflow/io.hpp"

#include <openssl/evp.h>
#include <png.h>

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iterator>
#include <json.hpp>
#include <memory>

#include "tomoflow/error.hpp"

namespace tomoflow {

using nlohmann::json;

namespace {

std::uint64_t to_little(std::uint64_t v) {
    if constexpr (std::endian::native == std::endian::big) {
        std::uint64_t r = 0;
        for (int b = 0; b < 8; ++b) r |= ((v >> (8 * b)) & 0xffu) << (8 * (7 - b));
        return r;
    }
    return v;
}

void write_json(const fs::path& path, const json& j) {
    std::ofstream out(path);
    if (!out) throw InputError("cannot write " + path.string());
    out << j.dump(2) << '\n';
}

json read_json(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw InputError("missing file " + path.string());
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw InputError("malformed JSON in " + path.string() + ": " + e.what());
    }
}

json grid_json(const Grid2& g) {
    return json{{"nx", g.nx}, {"ny", g.ny}, {"x_min", g.x_min}, {"x_max", g.x_max}, {"y_min", g.y_min},
                {"y_max", g.y_max}};
}

Grid2 grid_from_json(const json& j, const fs::path& where) {
    try {
        return Grid2::make(j.at("nx").get<int>(), j.at("ny").get<int>(), j.at("x_min").get<double>(),
                           j.at("x_max").get<double>(), j.at("y_min").get<double>(), j.at("y_max").get<double>());
    } catch (const std::exception& e) {
        throw InputError("bad grid description in " + where.string() + ": " + e.what());
    }
}

}  // namespace

fs::path sidecar_path(const fs::path& bin_path) {
    fs::path p = bin_path;
    return p.replace_extension(".json");
}

void write_f64(const fs::path& path, std::span<const double> values) {
    std::vector<std::uint64_t> raw(values.size());
    for (std::size_t k = 0; k < values.size(); ++k) raw[k] = to_little(std::bit_cast<std::uint64_t>(values[k]));
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InputError("cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size() * 8));
    if (!out) throw InputError("write failed for " + path.string());
}

std::vector<double> read_f64(const fs::path& path, std::size_t expected) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("missing file " + path.string());
    std::vector<std::uint64_t> raw(expected);
    in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(expected * 8));
    if (in.gcount() != static_cast<std::streamsize>(expected * 8) || in.peek() != std::char_traits<char>::eof()) {
        throw InputError(path.string() + " does not hold " + std::to_string(expected) + " float64 values");
    }
    std::vector<double> out(expected);
    for (std::size_t k = 0; k < expected; ++k) out[k] = std::bit_cast<double>(to_little(raw[k]));
    return out;
}

void write_image(const fs::path& bin_path, const Image& img) {
    write_f64(bin_path, img.values());
    write_json(sidecar_path(bin_path), grid_json(img.grid()));
}

Image read_image(const fs::path& bin_path) {
    const Grid2 g = grid_from_json(read_json(sidecar_path(bin_path)), sidecar_path(bin_path));
    return Image(g, read_f64(bin_path, g.size()));
}

void write_field(const fs::path& bin_path, const VectorField2& field) {
    std::vector<double> both(field.u);
    both.insert(both.end(), field.v.begin(), field.v.end());
    write_f64(bin_path, both);
    json j = grid_json(field.grid);
    j["components"] = {"u", "v"};
    write_json(sidecar_path(bin_path), j);
}

VectorField2 read_field(const fs::path& bin_path) {
    const json j = read_json(sidecar_path(bin_path));
    const Grid2 g = grid_from_json(j, sidecar_path(bin_path));
    const std::vector<double> both = read_f64(bin_path, 2 * g.size());
    VectorField2 f(g);
    std::copy(both.begin(), both.begin() + g.size(), f.u.begin());
    std::copy(both.begin() + g.size(), both.end(), f.v.begin());
    return f;
}

void write_sinogram(const fs::path& bin_path, const Sinogram& sino) {
    write_f64(bin_path, sino.values);
    const auto& g = sino.geometry;
    write_json(sidecar_path(bin_path),
               json{{"angles", g.angles}, {"n_bins", g.n_bins}, {"s_min", g.s_min}, {"s_max", g.s_max}});
}

Sinogram read_sinogram(const fs::path& bin_path) {
    const json j = read_json(sidecar_path(bin_path));
    ParallelBeamGeometry g;
    try {
        g = ParallelBeamGeometry::make(j.at("angles").get<std::vector<double>>(), j.at("n_bins").get<int>(),
                                       j.at("s_min").get<double>(), j.at("s_max").get<double>());
    } catch (const std::exception& e) {
        throw InputError("bad sinogram description in " + sidecar_path(bin_path).string() + ": " + e.what());
    }
    Sinogram s(g);
    s.values = read_f64(bin_path, g.size());
    return s;
}

void write_png(const fs::path& path, const Image& img) {
    const Grid2& g = img.grid();
    const auto [lo, hi] = std::minmax_element(img.data().begin(), img.data().end());
    const double range = *hi - *lo;
    // Row 0 of the PNG is the top of the picture, i.e. the largest y.
    std::vector<png_byte> pixels(g.size());
    for (int j = 0; j < g.ny; ++j) {
        for (int i = 0; i < g.nx; ++i) {
            const double t = range > 0.0 ? (img(i, j) - *lo) / range : 0.0;
            pixels[static_cast<std::size_t>(g.ny - 1 - j) * g.nx + i] =
                static_cast<png_byte>(std::clamp(std::lround(t * 255.0), 0L, 255L));
        }
    }

    std::unique_ptr<FILE, int (*)(FILE*)> fp(std::fopen(path.c_str(), "wb"), &std::fclose);
    if (!fp) throw InputError("cannot write " + path.string());
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_write_struct(&png, &info);
        throw InputError("libpng initialisation failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw InputError("PNG encoding failed for " + path.string());
    }
    png_init_io(png, fp.get());
    png_set_IHDR(png, info, g.nx, g.ny, 8, PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
                 PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    for (int r = 0; r < g.ny; ++r) png_write_row(png, pixels.data() + static_cast<std::size_t>(r) * g.nx);
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

std::string git_blob_hash(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("missing file " + path.string());
    const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return git_blob_hash_of(bytes);
}

std::string git_blob_hash_of(std::string_view bytes) {
    const std::string header = "blob " + std::to_string(bytes.size()) + '\0';
    std::unique_ptr<EVP_MD_CTX, void (*)(EVP_MD_CTX*)> ctx(EVP_MD_CTX_new(), &EVP_MD_CTX_free);
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha1(), nullptr) != 1 ||
        EVP_DigestUpdate(ctx.get(), header.data(), header.size()) != 1 ||
        EVP_DigestUpdate(ctx.get(), bytes.data(), bytes.size()) != 1 ||
        EVP_DigestFinal_ex(ctx.get(), digest, &len) != 1) {
        throw std::runtime_error("SHA-1 computation failed");
    }
    static const char* hex = "0123456789abcdef";
    std::string out;
    for (unsigned int k = 0; k < len; ++k) {
        const unsigned char c = digest[k];
        out += hex[c >> 4];
        out += hex[c & 15];
    }
    return out;
}

}  // namespace tomoflow
