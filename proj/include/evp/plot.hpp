#pragma once

#include <string>
#include <vector>

namespace evp {

struct Series {
  std::string name;
  std::vector<double> x;
  std::vector<double> y;
  /// Optional error bars (same length as y, or empty).
  std::vector<double> err;
};

struct PlotLabels {
  std::string title;
  std::string x_label = "K";
  std::string y_label = "AUC-ROC";
};

/// Self-contained SVG line chart with labelled axes, ticks and a legend.
std::string line_plot_svg(const std::vector<Series>& series, const PlotLabels& labels, int width = 640,
                          int height = 420);

}  // namespace evp
