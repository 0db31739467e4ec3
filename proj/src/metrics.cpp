#include "tomoflow/metrics.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <map>
#include <sstream>
#include <stdexcept>

#include "tomoflow/error.hpp"

namespace tomoflow {

namespace {

void require_same_grid(const Image& a, const Image& b) {
    if (!(a.grid() == b.grid())) throw std::invalid_argument("metrics: images are on different grids");
}

std::string fmt17(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

double parse_double(const std::string& s) {
    try {
        std::size_t used = 0;
        const double v = std::stod(s, &used);
        if (used != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        if (s == "inf") return INFINITY;
        throw InputError("metrics CSV: bad number '" + s + "'");
    }
}

std::vector<std::string> split(const std::string& line) {
    std::vector<std::string> out;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) out.push_back(cell);
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

}  // namespace

double psnr(const Image& x, const Image& ref, double peak) {
    require_same_grid(x, ref);
    if (!(peak > 0.0)) throw std::invalid_argument("psnr: peak must be > 0");
    double se = 0.0;
    for (std::size_t k = 0; k < x.size(); ++k) {
        const double d = x[k] - ref[k];
        se += d * d;
    }
    const double mse = se / static_cast<double>(x.size());
    if (mse == 0.0) return kPsnrCapDb;
    return std::min(kPsnrCapDb, 10.0 * std::log10(peak * peak / mse));
}

double ssim(const Image& x, const Image& ref, const SsimParams& p) {
    require_same_grid(x, ref);
    const Grid2& g = x.grid();
    const int r = p.window_radius;
    std::vector<double> w1(2 * r + 1);
    for (int a = -r; a <= r; ++a) w1[a + r] = std::exp(-(a * a) / (2.0 * p.window_sigma * p.window_sigma));
    const double c1 = (p.k1 * p.peak) * (p.k1 * p.peak);
    const double c2 = (p.k2 * p.peak) * (p.k2 * p.peak);

    double total = 0.0;
    for (int j = 0; j < g.ny; ++j) {
        for (int i = 0; i < g.nx; ++i) {
            double wsum = 0.0, mx = 0.0, my = 0.0, sxx = 0.0, syy = 0.0, sxy = 0.0;
            for (int b = std::max(-r, -j); b <= std::min(r, g.ny - 1 - j); ++b) {
                for (int a = std::max(-r, -i); a <= std::min(r, g.nx - 1 - i); ++a) {
                    const double w = w1[a + r] * w1[b + r];
                    const double xv = x(i + a, j + b);
                    const double yv = ref(i + a, j + b);
                    wsum += w;
                    mx += w * xv;
                    my += w * yv;
                    sxx += w * xv * xv;
                    syy += w * yv * yv;
                    sxy += w * xv * yv;
                }
            }
            mx /= wsum;
            my /= wsum;
            const double vx = sxx / wsum - mx * mx;
            const double vy = syy / wsum - my * my;
            const double cov = sxy / wsum - mx * my;
            total += ((2.0 * mx * my + c1) * (2.0 * cov + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
        }
    }
    return total / static_cast<double>(g.size());
}

double MetricReport::mean_ssim(const std::string& method) const {
    double acc = 0.0;
    int n = 0;
    for (const auto& row : rows) {
        if (row.method == method) {
            acc += row.ssim;
            ++n;
        }
    }
    return n ? acc / n : NAN;
}

double MetricReport::mean_psnr(const std::string& method) const {
    double acc = 0.0;
    int n = 0;
    for (const auto& row : rows) {
        if (row.method == method) {
            acc += row.psnr_db;
            ++n;
        }
    }
    return n ? acc / n : NAN;
}

std::string to_csv(const MetricReport& report) {
    std::string out = "method,gate,ssim,psnr_db,manifest_hash\n";
    for (const auto& row : report.rows) {
        out += row.method + ',' + std::to_string(row.gate) + ',' + fmt17(row.ssim) + ',' + fmt17(row.psnr_db) + ',' +
               row.manifest_hash + '\n';
    }
    return out;
}

MetricReport parse_csv(const std::string& text) {
    std::stringstream in(text);
    std::string line;
    if (!std::getline(in, line) || line != "method,gate,ssim,psnr_db,manifest_hash") {
        throw InputError("metrics CSV: unexpected header");
    }
    MetricReport report;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto cells = split(line);
        if (cells.size() != 5) throw InputError("metrics CSV: expected 5 columns in '" + line + "'");
        MetricRow row;
        row.method = cells[0];
        const auto [ptr, ec] = std::from_chars(cells[1].data(), cells[1].data() + cells[1].size(), row.gate);
        if (ec != std::errc() || ptr != cells[1].data() + cells[1].size()) {
            throw InputError("metrics CSV: bad gate '" + cells[1] + "'");
        }
        row.ssim = parse_double(cells[2]);
        row.psnr_db = parse_double(cells[3]);
        row.manifest_hash = cells[4];
        report.rows.push_back(std::move(row));
    }
    return report;
}

std::string format_table(const MetricReport& report) {
    std::map<std::string, std::map<int, const MetricRow*>> by_method;
    std::map<int, bool> gates;
    std::vector<std::string> order;
    for (const auto& row : report.rows) {
        if (!by_method.count(row.method)) order.push_back(row.method);
        by_method[row.method][row.gate] = &row;
        gates[row.gate] = true;
    }
    std::ostringstream out;
    char buf[64];
    out << "method      metric";
    for (const auto& [gate, unused] : gates) {
        std::snprintf(buf, sizeof buf, "  %9s", ("gate " + std::to_string(gate)).c_str());
        out << buf;
    }
    out << '\n';
    for (const auto& method : order) {
        for (int which = 0; which < 2; ++which) {
            std::snprintf(buf, sizeof buf, "%-11s %-6s", which == 0 ? method.c_str() : "", which == 0 ? "SSIM" : "PSNR");
            out << buf;
            for (const auto& [gate, unused] : gates) {
                const auto it = by_method[method].find(gate);
                if (it == by_method[method].end()) {
                    std::snprintf(buf, sizeof buf, "  %9s", "-");
                } else {
                    std::snprintf(buf, sizeof buf, which == 0 ? "  %9.4f" : "  %9.2f",
                                  which == 0 ? it->second->ssim : it->second->psnr_db);
                }
                out << buf;
            }
            out << '\n';
        }
    }
    return out.str();
}

}  // namespace tomoflow
