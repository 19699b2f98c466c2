#pragma once

// Static SVG figures.

#include <filesystem>
#include <string>
#include <vector>

namespace covert {

struct Series {
  std::string name;
  std::vector<double> x, y;
};

void write_line_plot(const std::filesystem::path& path, const std::string& title,
                     const std::string& x_label, const std::string& y_label,
                     const std::vector<Series>& series);

/// values[row][col] in [0, 1], drawn on a white-to-blue scale.
void write_heatmap(const std::filesystem::path& path, const std::string& title,
                   const std::vector<std::string>& row_labels,
                   const std::vector<std::string>& col_labels,
                   const std::vector<std::vector<double>>& values);

}  // namespace covert
