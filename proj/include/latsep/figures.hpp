#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "latsep/linalg.hpp"

namespace latsep {

struct Histogram {
  double lo = -3.0;
  double hi = 3.0;
  std::vector<std::size_t> counts;
  std::size_t below = 0;  // values < lo, not drawn
  std::size_t above = 0;  // values >= hi, not drawn
};

/// Equal-width bins over [lo, hi); non-finite values are ignored.
Histogram histogram(std::span<const double> values, double lo = -3.0, double hi = 3.0, int bins = 60);

struct ScatterStyle {
  std::string title;
  int size = 480;
};

/// Scatter plot, poison points red over clean points blue. Rows with a
/// non-finite coordinate are skipped.
std::string scatter_svg(const Matrix& coords, std::span<const int> poison, const ScatterStyle& style = {});

/// Overlaid clean (blue) and poison (red) histograms of signed distances with
/// X fixed to [-3, 3] and Y to [0, y_max]; taller bars are cut at y_max.
std::string histogram_svg(std::span<const double> clean, std::span<const double> poison, const std::string& title,
                          double y_max = 75.0);

void write_scatter_png(const std::filesystem::path& path, const Matrix& coords, std::span<const int> poison,
                       int size = 480);
void write_histogram_png(const std::filesystem::path& path, std::span<const double> clean,
                         std::span<const double> poison, double y_max = 75.0);

}  // namespace latsep
