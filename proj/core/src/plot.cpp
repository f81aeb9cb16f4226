#include "mpreuse/plot.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <string>

namespace mpreuse {
namespace {

constexpr double kCanvas = 600.0;

// Class 0..4 follow green, orange, red, blue, purple.
constexpr std::array<const char*, 12> kPalette = {"#2ca02c", "#ff7f0e", "#d62728", "#1f77b4", "#9467bd", "#8c564b",
                                                  "#e377c2", "#7f7f7f", "#bcbd22", "#17becf", "#393b79", "#637939"};

const char* class_color(ClassLabel k) { return kPalette[static_cast<std::size_t>(k) % kPalette.size()]; }

std::string viridis(double t) {
  static constexpr std::array<std::array<double, 3>, 5> stops = {
      {{68, 1, 84}, {59, 82, 139}, {33, 145, 140}, {94, 201, 98}, {253, 231, 37}}};
  t = std::clamp(t, 0.0, 1.0) * (stops.size() - 1);
  const auto lo = std::min(static_cast<std::size_t>(t), stops.size() - 2);
  const double f = t - static_cast<double>(lo);
  char buf[8];
  std::array<int, 3> rgb{};
  for (std::size_t c = 0; c < 3; ++c) {
    rgb[c] = static_cast<int>(std::lround(stops[lo][c] + f * (stops[lo + 1][c] - stops[lo][c])));
  }
  std::snprintf(buf, sizeof(buf), "#%02x%02x%02x", rgb[0], rgb[1], rgb[2]);
  return buf;
}

void check_region(const Region& r, std::size_t resolution) {
  if (!(r.x_max > r.x_min) || !(r.y_max > r.y_min)) throw InvalidArgument("plot region must have positive extent");
  if (resolution == 0) throw InvalidArgument("plot resolution must be at least 1");
}

std::ofstream open_svg(const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw InvalidArgument("cannot open " + path.string() + " for writing");
  out << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
      << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kCanvas << "\" height=\"" << kCanvas
      << "\" viewBox=\"0 0 " << kCanvas << ' ' << kCanvas << "\" shape-rendering=\"crispEdges\">\n";
  return out;
}

// Emits horizontal runs of equal-colour cells as single rects.
template <typename T, typename ColorFn>
void write_cells(std::ofstream& out, const Grid<T>& grid, ColorFn color) {
  const double cell = kCanvas / static_cast<double>(grid.resolution);
  for (std::size_t r = 0; r < grid.resolution; ++r) {
    std::size_t c = 0;
    while (c < grid.resolution) {
      const std::string fill = color(grid.at(r, c));
      std::size_t end = c + 1;
      while (end < grid.resolution && color(grid.at(r, end)) == fill) ++end;
      out << "<rect x=\"" << c * cell << "\" y=\"" << r * cell << "\" width=\"" << (end - c) * cell
          << "\" height=\"" << cell << "\" fill=\"" << fill << "\"/>\n";
      c = end;
    }
  }
}

}  // namespace

Region bounding_region(const LocalDataset& ds, double margin) {
  if (ds.empty() || ds.dim() != 2) throw InvalidArgument("bounding_region needs nonempty 2D data");
  Region r{ds[0].features[0], ds[0].features[0], ds[0].features[1], ds[0].features[1]};
  for (const auto& s : ds.samples()) {
    r.x_min = std::min(r.x_min, s.features[0]);
    r.x_max = std::max(r.x_max, s.features[0]);
    r.y_min = std::min(r.y_min, s.features[1]);
    r.y_max = std::max(r.y_max, s.features[1]);
  }
  r.x_min -= margin;
  r.x_max += margin;
  r.y_min -= margin;
  r.y_max += margin;
  return r;
}

Vector cell_center(const Region& region, std::size_t resolution, std::size_t row, std::size_t col) {
  const double n = static_cast<double>(resolution);
  Vector x(2);
  x[0] = region.x_min + (static_cast<double>(col) + 0.5) * (region.x_max - region.x_min) / n;
  x[1] = region.y_max - (static_cast<double>(row) + 0.5) * (region.y_max - region.y_min) / n;
  return x;
}

Grid<ClassLabel> rasterize_decisions(const EnsembleModel& ens, const Region& region, std::size_t resolution) {
  check_region(region, resolution);
  if (ens.input_dim() != 2) throw InvalidArgument("decision boundary plots need 2D features");
  std::vector<Vector> queries;
  queries.reserve(resolution * resolution);
  for (std::size_t r = 0; r < resolution; ++r) {
    for (std::size_t c = 0; c < resolution; ++c) queries.push_back(cell_center(region, resolution, r, c));
  }
  return {resolution, decide(ens, queries)};
}

Grid<double> rasterize_log_density(const DensityEstimator& est, const Region& region, std::size_t resolution) {
  check_region(region, resolution);
  if (est.dim() != 2) throw InvalidArgument("density plots need 2D features");
  Grid<double> grid{resolution, std::vector<double>(resolution * resolution)};
  for (std::size_t r = 0; r < resolution; ++r) {
    for (std::size_t c = 0; c < resolution; ++c) grid.cells[r * resolution + c] = est.log_density(cell_center(region, resolution, r, c));
  }
  return grid;
}

Grid<ClassLabel> plot_decision_boundary(const EnsembleModel& ens, const Region& region, std::size_t resolution,
                                        const std::filesystem::path& path, const LocalDataset* points) {
  if (points && !points->empty() && points->dim() != 2) throw InvalidArgument("overlay points must be 2D");
  auto grid = rasterize_decisions(ens, region, resolution);
  auto out = open_svg(path);
  out << "<g opacity=\"0.45\">\n";
  write_cells(out, grid, [](ClassLabel k) { return std::string(class_color(k)); });
  out << "</g>\n";
  if (points) {
    out << "<g stroke=\"#000000\" stroke-width=\"0.4\">\n";
    for (const auto& s : points->samples()) {
      const double px = (s.features[0] - region.x_min) / (region.x_max - region.x_min) * kCanvas;
      const double py = (region.y_max - s.features[1]) / (region.y_max - region.y_min) * kCanvas;
      out << "<circle cx=\"" << px << "\" cy=\"" << py << "\" r=\"2.5\" fill=\"" << class_color(s.label) << "\"/>\n";
    }
    out << "</g>\n";
  }
  out << "</svg>\n";
  return grid;
}

Grid<double> plot_density(const DensityEstimator& est, const Region& region, std::size_t resolution,
                          const std::filesystem::path& path) {
  auto grid = rasterize_log_density(est, region, resolution);
  // Colour scale spans the non-floor values only.
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  for (double v : grid.cells) {
    if (v <= kLogDensityFloor) continue;
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  const double span = hi - lo;
  auto out = open_svg(path);
  write_cells(out, grid, [&](double v) {
    if (v <= kLogDensityFloor || !(span > 0.0)) return viridis(0.0);
    return viridis((v - lo) / span);
  });
  out << "</svg>\n";
  return grid;
}

}  // namespace mpreuse
