#include "modeseq/svgplot.hpp"

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>

namespace modeseq {

namespace {

const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};

std::string fmt(double v) {
  std::ostringstream os;
  os << std::setprecision(6) << v;
  return os.str();
}

}  // namespace

void write_line_plot_svg(const std::string& path, const std::string& title,
                         const std::string& x_label,
                         const std::vector<std::vector<PlotSeries>>& panels) {
  const double width = 640.0, panel_h = 240.0, margin_l = 70.0, margin_r = 20.0,
               margin_t = 40.0, margin_b = 45.0;
  double height = margin_t + panels.size() * panel_h + 10.0;

  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
      << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  out << "<text x=\"" << width / 2 << "\" y=\"20\" text-anchor=\"middle\" font-size=\"15\">"
      << title << "</text>\n";

  for (size_t pi = 0; pi < panels.size(); ++pi) {
    const auto& series = panels[pi];
    double top = margin_t + static_cast<double>(pi) * panel_h;
    double plot_w = width - margin_l - margin_r;
    double plot_h = panel_h - margin_b;

    double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
    for (const PlotSeries& s : series) {
      for (double v : s.x) {
        xmin = std::min(xmin, v);
        xmax = std::max(xmax, v);
      }
      for (double v : s.y) {
        ymin = std::min(ymin, v);
        ymax = std::max(ymax, v);
      }
    }
    if (xmin > xmax) {
      xmin = 0;
      xmax = 1;
    }
    if (ymin > ymax) {
      ymin = 0;
      ymax = 1;
    }
    if (xmax == xmin) xmax = xmin + 1.0;
    if (ymax == ymin) {
      ymax += 0.5;
      ymin -= 0.5;
    }
    double ypad = 0.05 * (ymax - ymin);
    ymin -= ypad;
    ymax += ypad;

    auto sx = [&](double v) { return margin_l + (v - xmin) / (xmax - xmin) * plot_w; };
    auto sy = [&](double v) { return top + plot_h - (v - ymin) / (ymax - ymin) * plot_h; };

    out << "<rect x=\"" << margin_l << "\" y=\"" << top << "\" width=\"" << plot_w
        << "\" height=\"" << plot_h << "\" fill=\"none\" stroke=\"#444\"/>\n";
    for (int tick = 0; tick <= 4; ++tick) {
      double fy = ymin + (ymax - ymin) * tick / 4.0;
      double fx = xmin + (xmax - xmin) * tick / 4.0;
      out << "<line x1=\"" << margin_l << "\" y1=\"" << sy(fy) << "\" x2=\"" << width - margin_r
          << "\" y2=\"" << sy(fy) << "\" stroke=\"#ddd\"/>\n";
      out << "<text x=\"" << margin_l - 8 << "\" y=\"" << sy(fy) + 4
          << "\" text-anchor=\"end\">" << fmt(fy) << "</text>\n";
      out << "<text x=\"" << sx(fx) << "\" y=\"" << top + plot_h + 16
          << "\" text-anchor=\"middle\">" << fmt(fx) << "</text>\n";
    }
    out << "<text x=\"" << width / 2 << "\" y=\"" << top + plot_h + 34
        << "\" text-anchor=\"middle\">" << x_label << "</text>\n";

    for (size_t si = 0; si < series.size(); ++si) {
      const PlotSeries& s = series[si];
      const char* color = kColors[si % 6];
      out << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.8\" points=\"";
      for (size_t i = 0; i < s.x.size(); ++i)
        out << sx(s.x[i]) << "," << sy(s.y[i]) << " ";
      out << "\"/>\n";
      for (size_t i = 0; i < s.x.size(); ++i)
        out << "<circle cx=\"" << sx(s.x[i]) << "\" cy=\"" << sy(s.y[i])
            << "\" r=\"2.5\" fill=\"" << color << "\"/>\n";
      out << "<text x=\"" << margin_l + 10 + 120.0 * static_cast<double>(si) << "\" y=\""
          << top + 14 << "\" fill=\"" << color << "\">" << s.label << "</text>\n";
    }
  }
  out << "</svg>\n";
}

}  // namespace modeseq
