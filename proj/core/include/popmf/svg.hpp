#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace popmf {

struct PlotSeries {
  std::string name;
  std::vector<double> x;
  std::vector<double> y;
  std::string color = "#1f77b4";
  bool dashed = false;
  /// Draw a dot at every point in addition to the line.
  bool markers = false;
};

/// Shaded region between lo and hi.
struct PlotBand {
  std::vector<double> x;
  std::vector<double> lo;
  std::vector<double> hi;
  std::string color = "#1f77b4";
};

struct Plot {
  std::string title;
  std::string x_label;
  std::string y_label;
  std::vector<PlotBand> bands;
  std::vector<PlotSeries> series;
};

/// Self-contained SVG line chart with axes, ticks and a legend. Non-finite
/// points are skipped.
void write_svg(std::ostream& out, const Plot& plot);

}  // namespace popmf
