#pragma once

#include <filesystem>
#include <vector>

#include "mpreuse/data.hpp"
#include "mpreuse/density.hpp"
#include "mpreuse/ensemble.hpp"

namespace mpreuse {

struct Region {
  double x_min = -1.0;
  double x_max = 1.0;
  double y_min = -1.0;
  double y_max = 1.0;
};

// Bounding box of the samples, padded by margin on every side.
Region bounding_region(const LocalDataset& ds, double margin = 1.0);

// Centre of grid cell (row, col); row 0 is the top edge (y_max).
Vector cell_center(const Region& region, std::size_t resolution, std::size_t row, std::size_t col);

/// resolution x resolution grid, row-major.
template <typename T>
struct Grid {
  std::size_t resolution = 0;
  std::vector<T> cells;

  const T& at(std::size_t row, std::size_t col) const { return cells[row * resolution + col]; }
};

Grid<ClassLabel> rasterize_decisions(const EnsembleModel& ens, const Region& region, std::size_t resolution);
Grid<double> rasterize_log_density(const DensityEstimator& est, const Region& region, std::size_t resolution);

/// Writes an SVG with one colour per predicted class; test points, when given,
/// are drawn on top in their true-class colour. Returns the label grid.
/// Throws InvalidArgument unless the features are two-dimensional.
Grid<ClassLabel> plot_decision_boundary(const EnsembleModel& ens, const Region& region, std::size_t resolution,
                                        const std::filesystem::path& path, const LocalDataset* points = nullptr);

/// Heatmap of log-density; cells at the floor get the lowest colour.
Grid<double> plot_density(const DensityEstimator& est, const Region& region, std::size_t resolution,
                          const std::filesystem::path& path);

}  // namespace mpreuse
