#pragma once

#include "conelab/geometry.hpp"

#include <string>
#include <vector>

namespace conelab {

/// Columns of equal length, written with 17 significant digits.
void write_csv(const std::string& path, const std::vector<std::string>& header,
               const std::vector<std::vector<double>>& columns);

/// Flat binary layout: `<base>.bin` holds nx*ny*nz little-endian float64 values, x fastest, NaN outside
/// the domain; `<base>.json` is the header {field, domain, shape, origin, spacing, dtype, byte_order, order}.
/// Returns the two file names (without directory).
std::vector<std::string> write_grid_binary(const std::string& dir, const std::string& base, const GridField& field,
                                           const std::string& domain);
GridField read_grid_binary(const std::string& dir, const std::string& base);

/// Legacy VTK ASCII STRUCTURED_POINTS with two point scalars: the field (0 outside) and `inside` (1/0).
void write_vtk(const std::string& path, const GridField& field, const std::string& title);

struct SvgSeries {
    std::string label;
    std::vector<double> x, y;
    std::string color = "#1f77b4";
    bool dashed = false;
};

struct SvgPlot {
    std::string title, xlabel, ylabel;
    std::vector<SvgSeries> series;
    bool logx = false;
};

/// Polylines in a framed box with min/max tick labels and a legend. Non-finite points are skipped.
void write_svg(const std::string& path, const SvgPlot& plot);

}  // namespace conelab
