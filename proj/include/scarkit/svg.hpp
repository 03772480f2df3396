#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <string>
#include <vector>

#include "scarkit/errors.hpp"

namespace scarkit {

/// Minimal static SVG scatter/line plot.
struct SvgSeries {
  std::vector<double> x, y;
  std::string color{"#1f77b4"};
  bool line{false};
  double radius{2.5};
  std::string label;
};

struct SvgPlot {
  std::string title, xlabel, ylabel;
  std::vector<SvgSeries> series;
  bool logy{false};
  int width{640}, height{440};

  std::string render() const {
    const double ml = 70, mr = 20, mt = 36, mb = 50;
    double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;
    auto ty = [&](double v) { return logy ? std::log10(v) : v; };
    for (const auto& s : series)
      for (std::size_t k = 0; k < s.x.size(); ++k) {
        if (logy && !(s.y[k] > 0.0)) continue;
        x0 = std::min(x0, s.x[k]);
        x1 = std::max(x1, s.x[k]);
        y0 = std::min(y0, ty(s.y[k]));
        y1 = std::max(y1, ty(s.y[k]));
      }
    if (!std::isfinite(x0)) x0 = 0, x1 = 1, y0 = 0, y1 = 1;
    if (x1 == x0) x1 = x0 + 1;
    if (y1 == y0) y1 = y0 + 1;
    const double pw = width - ml - mr, ph = height - mt - mb;
    auto px = [&](double v) { return ml + (v - x0) / (x1 - x0) * pw; };
    auto py = [&](double v) { return mt + ph - (ty(v) - y0) / (y1 - y0) * ph; };
    std::string out;
    char buf[256];
    std::snprintf(buf, sizeof buf,
                  "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"%d\" height=\"%d\" font-family=\"sans-serif\" font-size=\"12\">\n",
                  width, height);
    out += buf;
    out += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    std::snprintf(buf, sizeof buf, "<rect x=\"%g\" y=\"%g\" width=\"%g\" height=\"%g\" fill=\"none\" stroke=\"black\"/>\n", ml, mt, pw, ph);
    out += buf;
    for (int k = 0; k <= 4; ++k) {
      const double fx = x0 + (x1 - x0) * k / 4.0, fy = y0 + (y1 - y0) * k / 4.0;
      std::snprintf(buf, sizeof buf, "<text x=\"%g\" y=\"%g\" text-anchor=\"middle\">%.3g</text>\n", ml + pw * k / 4.0, mt + ph + 16, fx);
      out += buf;
      std::snprintf(buf, sizeof buf, "<text x=\"%g\" y=\"%g\" text-anchor=\"end\">%s%.3g</text>\n", ml - 6, mt + ph - ph * k / 4.0 + 4,
                    logy ? "1e" : "", fy);
      out += buf;
    }
    out += "<text x=\"" + std::to_string(ml + pw / 2) + "\" y=\"20\" text-anchor=\"middle\">" + escape(title) + "</text>\n";
    out += "<text x=\"" + std::to_string(ml + pw / 2) + "\" y=\"" + std::to_string(height - 10) + "\" text-anchor=\"middle\">" +
           escape(xlabel) + "</text>\n";
    out += "<text x=\"16\" y=\"" + std::to_string(mt + ph / 2) + "\" text-anchor=\"middle\" transform=\"rotate(-90 16 " +
           std::to_string(mt + ph / 2) + ")\">" + escape(ylabel) + "</text>\n";
    int legend = 0;
    for (const auto& s : series) {
      if (s.line) {
        std::string pts;
        for (std::size_t k = 0; k < s.x.size(); ++k) {
          if (logy && !(s.y[k] > 0.0)) continue;
          std::snprintf(buf, sizeof buf, "%.2f,%.2f ", px(s.x[k]), py(s.y[k]));
          pts += buf;
        }
        out += "<polyline fill=\"none\" stroke=\"" + s.color + "\" stroke-width=\"1.5\" points=\"" + pts + "\"/>\n";
      } else {
        for (std::size_t k = 0; k < s.x.size(); ++k) {
          if (logy && !(s.y[k] > 0.0)) continue;
          std::snprintf(buf, sizeof buf, "<circle cx=\"%.2f\" cy=\"%.2f\" r=\"%g\" fill=\"%s\"/>\n", px(s.x[k]), py(s.y[k]), s.radius,
                        s.color.c_str());
          out += buf;
        }
      }
      if (!s.label.empty()) {
        std::snprintf(buf, sizeof buf, "<text x=\"%g\" y=\"%g\" fill=\"%s\">%s</text>\n", ml + pw - 150, mt + 16 + 14.0 * legend++,
                      s.color.c_str(), escape(s.label).c_str());
        out += buf;
      }
    }
    out += "</svg>\n";
    return out;
  }

  void write(const std::string& path) const {
    std::ofstream os(path);
    if (!os) throw IoError("cannot write " + path);
    os << render();
  }

 private:
  static std::string escape(const std::string& s) {
    std::string o;
    for (char ch : s) {
      if (ch == '<') o += "&lt;";
      else if (ch == '>') o += "&gt;";
      else if (ch == '&') o += "&amp;";
      else o += ch;
    }
    return o;
  }
};

}  // namespace scarkit
