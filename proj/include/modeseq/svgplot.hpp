#pragma once

#include <string>
#include <vector>

namespace modeseq {

struct PlotSeries {
  std::string label;
  std::vector<double> x, y;
};

// Self-contained SVG with one panel per series group (shared x axis).
void write_line_plot_svg(const std::string& path, const std::string& title,
                         const std::string& x_label,
                         const std::vector<std::vector<PlotSeries>>& panels);

}  // namespace modeseq
