#include "conelab/io.hpp"

#include "json.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace conelab {

namespace {

std::ofstream open_out(const std::string& path, std::ios::openmode mode = std::ios::out) {
    std::ofstream os(path, mode);
    if (!os) throw std::runtime_error("cannot open " + path + " for writing");
    return os;
}

std::string num(double v) {
    std::ostringstream os;
    os << std::setprecision(17) << v;
    return os.str();
}

std::string xml(const std::string& s) {
    std::string out;
    for (char c : s) {
        if (c == '<') out += "&lt;";
        else if (c == '>') out += "&gt;";
        else if (c == '&') out += "&amp;";
        else out += c;
    }
    return out;
}

}  // namespace

void write_csv(const std::string& path, const std::vector<std::string>& header,
               const std::vector<std::vector<double>>& columns) {
    if (header.size() != columns.size()) throw std::invalid_argument("csv: header and column count differ");
    const std::size_t rows = columns.empty() ? 0 : columns[0].size();
    for (const auto& c : columns)
        if (c.size() != rows) throw std::invalid_argument("csv: ragged columns");
    auto os = open_out(path);
    for (std::size_t j = 0; j < header.size(); ++j) os << (j ? "," : "") << header[j];
    os << '\n';
    for (std::size_t i = 0; i < rows; ++i) {
        for (std::size_t j = 0; j < columns.size(); ++j) os << (j ? "," : "") << num(columns[j][i]);
        os << '\n';
    }
}

std::vector<std::string> write_grid_binary(const std::string& dir, const std::string& base, const GridField& field,
                                           const std::string& domain) {
    const Grid3& g = field.grid;
    if (field.values.size() != g.size()) throw std::invalid_argument("grid field size mismatch");
    const std::string bin = base + ".bin", head = base + ".json";
    {
        auto os = open_out((std::filesystem::path(dir) / bin).string(), std::ios::out | std::ios::binary);
        for (double v : field.values) {
            std::uint64_t bits = std::bit_cast<std::uint64_t>(v);
            if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap64(bits);
            char bytes[8];
            std::memcpy(bytes, &bits, 8);
            os.write(bytes, 8);
        }
    }
    nlohmann::ordered_json h;
    h["field"] = field.name;
    h["domain"] = domain;
    h["shape"] = {g.nx, g.ny, g.nz};
    h["origin"] = {g.lo[0], g.lo[1], g.lo[2]};
    h["spacing"] = g.h;
    h["dtype"] = "float64";
    h["byte_order"] = "little";
    h["order"] = "x fastest, then y, then z";
    h["outside"] = "NaN";
    h["data"] = bin;
    open_out((std::filesystem::path(dir) / head).string()) << h.dump(2) << '\n';
    return {head, bin};
}

GridField read_grid_binary(const std::string& dir, const std::string& base) {
    std::ifstream hs(std::filesystem::path(dir) / (base + ".json"));
    if (!hs) throw std::runtime_error("cannot open header " + base + ".json");
    const auto h = nlohmann::json::parse(hs);
    GridField f;
    f.name = h.at("field").get<std::string>();
    f.grid.nx = h.at("shape")[0];
    f.grid.ny = h.at("shape")[1];
    f.grid.nz = h.at("shape")[2];
    for (int i = 0; i < 3; ++i) f.grid.lo[i] = h.at("origin")[i];
    f.grid.h = h.at("spacing");
    std::ifstream bs(std::filesystem::path(dir) / h.at("data").get<std::string>(), std::ios::binary);
    if (!bs) throw std::runtime_error("cannot open grid data for " + base);
    f.values.resize(f.grid.size());
    for (double& v : f.values) {
        char bytes[8];
        if (!bs.read(bytes, 8)) throw std::runtime_error("grid data truncated for " + base);
        std::uint64_t bits;
        std::memcpy(&bits, bytes, 8);
        if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap64(bits);
        v = std::bit_cast<double>(bits);
    }
    return f;
}

void write_vtk(const std::string& path, const GridField& field, const std::string& title) {
    const Grid3& g = field.grid;
    auto os = open_out(path);
    os << "# vtk DataFile Version 3.0\n" << title << "\nASCII\nDATASET STRUCTURED_POINTS\n";
    os << "DIMENSIONS " << g.nx << ' ' << g.ny << ' ' << g.nz << '\n';
    os << "ORIGIN " << num(g.lo[0]) << ' ' << num(g.lo[1]) << ' ' << num(g.lo[2]) << '\n';
    os << "SPACING " << num(g.h) << ' ' << num(g.h) << ' ' << num(g.h) << '\n';
    os << "POINT_DATA " << g.size() << '\n';
    os << "SCALARS " << (field.name.empty() ? "u" : field.name) << " double 1\nLOOKUP_TABLE default\n";
    for (double v : field.values) os << num(std::isfinite(v) ? v : 0.0) << '\n';
    os << "SCALARS inside int 1\nLOOKUP_TABLE default\n";
    for (double v : field.values) os << (std::isfinite(v) ? 1 : 0) << '\n';
}

void write_svg(const std::string& path, const SvgPlot& plot) {
    const double W = 640, H = 420, L = 70, R = 170, T = 40, B = 50;
    auto tx = [&](double x) { return plot.logx ? std::log10(x) : x; };
    double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;
    for (const auto& s : plot.series)
        for (std::size_t i = 0; i < std::min(s.x.size(), s.y.size()); ++i) {
            const double x = tx(s.x[i]), y = s.y[i];
            if (!std::isfinite(x) || !std::isfinite(y)) continue;
            x0 = std::min(x0, x), x1 = std::max(x1, x), y0 = std::min(y0, y), y1 = std::max(y1, y);
        }
    if (!(x1 > x0)) x0 -= 0.5, x1 += 0.5;
    if (!(y1 > y0)) y0 -= 0.5, y1 += 0.5;
    auto px = [&](double x) { return L + (tx(x) - x0) / (x1 - x0) * (W - L - R); };
    auto py = [&](double y) { return H - B - (y - y0) / (y1 - y0) * (H - T - B); };
    auto os = open_out(path);
    os << std::setprecision(6);
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\" viewBox=\"0 0 " << W
       << ' ' << H << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
    os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    os << "<text x=\"" << W / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">" << xml(plot.title) << "</text>\n";
    os << "<rect x=\"" << L << "\" y=\"" << T << "\" width=\"" << W - L - R << "\" height=\"" << H - T - B
       << "\" fill=\"none\" stroke=\"black\"/>\n";
    const std::string xl = plot.logx ? "log10 " + plot.xlabel : plot.xlabel;
    os << "<text x=\"" << (L + W - R) / 2 << "\" y=\"" << H - 12 << "\" text-anchor=\"middle\">" << xml(xl) << "</text>\n";
    os << "<text x=\"16\" y=\"" << (T + H - B) / 2 << "\" text-anchor=\"middle\" transform=\"rotate(-90 16 "
       << (T + H - B) / 2 << ")\">" << xml(plot.ylabel) << "</text>\n";
    os << "<text x=\"" << L << "\" y=\"" << H - B + 16 << "\" text-anchor=\"start\">" << x0 << "</text>\n";
    os << "<text x=\"" << W - R << "\" y=\"" << H - B + 16 << "\" text-anchor=\"end\">" << x1 << "</text>\n";
    os << "<text x=\"" << L - 6 << "\" y=\"" << H - B << "\" text-anchor=\"end\">" << y0 << "</text>\n";
    os << "<text x=\"" << L - 6 << "\" y=\"" << T + 10 << "\" text-anchor=\"end\">" << y1 << "</text>\n";
    double ly = T + 10;
    for (const auto& s : plot.series) {
        os << "<polyline fill=\"none\" stroke=\"" << s.color << "\" stroke-width=\"1.5\""
           << (s.dashed ? " stroke-dasharray=\"6 4\"" : "") << " points=\"";
        for (std::size_t i = 0; i < std::min(s.x.size(), s.y.size()); ++i) {
            if (!std::isfinite(tx(s.x[i])) || !std::isfinite(s.y[i])) continue;
            os << px(s.x[i]) << ',' << py(s.y[i]) << ' ';
        }
        os << "\"/>\n";
        os << "<line x1=\"" << W - R + 10 << "\" y1=\"" << ly << "\" x2=\"" << W - R + 34 << "\" y2=\"" << ly
           << "\" stroke=\"" << s.color << "\"" << (s.dashed ? " stroke-dasharray=\"6 4\"" : "") << "/>\n";
        os << "<text x=\"" << W - R + 40 << "\" y=\"" << ly + 4 << "\">" << xml(s.label) << "</text>\n";
        ly += 18;
    }
    os << "</svg>\n";
}

}  // namespace conelab
