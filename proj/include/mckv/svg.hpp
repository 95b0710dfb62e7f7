#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

namespace mckv::svg {

struct Series {
  std::vector<double> x, y;
  std::string label;
  std::string color = "#1f77b4";
  bool markers = false;  // scatter instead of polyline
  bool dashed = false;
};

struct Plot {
  std::string title, xlabel, ylabel;
  std::vector<Series> series;
  double width = 640, height = 420;
};

namespace detail {

inline std::string escape(const std::string& s) {
  std::string o;
  for (char c : s) {
    if (c == '<') o += "&lt;";
    else if (c == '>') o += "&gt;";
    else if (c == '&') o += "&amp;";
    else o += c;
  }
  return o;
}

inline std::string num(double v) {
  std::ostringstream os;
  os.imbue(std::locale::classic());
  os.setf(std::ios::fixed);
  os.precision(2);
  os << v;
  return os.str();
}

inline std::string tick(double v) {
  std::ostringstream os;
  os.imbue(std::locale::classic());
  os.precision(4);
  os << v;
  return os.str();
}

}  // namespace detail

/// Renders a plain line/scatter chart with linear axes and five ticks per axis. Non-finite
/// points are skipped.
inline std::string render(const Plot& p) {
  const double ml = 80, mr = 20, mt = 40, mb = 55;
  const double pw = p.width - ml - mr, ph = p.height - mt - mb;
  double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;
  for (const auto& s : p.series)
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
      x0 = std::min(x0, s.x[i]), x1 = std::max(x1, s.x[i]);
      y0 = std::min(y0, s.y[i]), y1 = std::max(y1, s.y[i]);
    }
  if (!(x0 <= x1)) x0 = 0, x1 = 1, y0 = 0, y1 = 1;
  if (x1 - x0 <= 0) x0 -= 0.5, x1 += 0.5;
  if (y1 - y0 <= 0) {
    const double pad = std::max(std::abs(y0) * 1e-3, 1e-12);
    y0 -= pad, y1 += pad;
  }
  const double ypad = 0.05 * (y1 - y0);
  y0 -= ypad, y1 += ypad;
  const auto sx = [&](double x) { return ml + (x - x0) / (x1 - x0) * pw; };
  const auto sy = [&](double y) { return mt + (y1 - y) / (y1 - y0) * ph; };

  std::ostringstream o;
  o.imbue(std::locale::classic());
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << detail::num(p.width) << "\" height=\""
    << detail::num(p.height) << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  o << "<text x=\"" << detail::num(p.width / 2) << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">"
    << detail::escape(p.title) << "</text>\n";
  o << "<rect x=\"" << detail::num(ml) << "\" y=\"" << detail::num(mt) << "\" width=\"" << detail::num(pw)
    << "\" height=\"" << detail::num(ph) << "\" fill=\"none\" stroke=\"black\"/>\n";
  for (int t = 0; t <= 4; ++t) {
    const double xv = x0 + (x1 - x0) * t / 4.0, yv = y0 + (y1 - y0) * t / 4.0;
    o << "<text x=\"" << detail::num(sx(xv)) << "\" y=\"" << detail::num(mt + ph + 18)
      << "\" text-anchor=\"middle\">" << detail::tick(xv) << "</text>\n";
    o << "<text x=\"" << detail::num(ml - 6) << "\" y=\"" << detail::num(sy(yv) + 4) << "\" text-anchor=\"end\">"
      << detail::tick(yv) << "</text>\n";
  }
  o << "<text x=\"" << detail::num(ml + pw / 2) << "\" y=\"" << detail::num(p.height - 12)
    << "\" text-anchor=\"middle\">" << detail::escape(p.xlabel) << "</text>\n";
  o << "<text transform=\"translate(16," << detail::num(mt + ph / 2) << ") rotate(-90)\" text-anchor=\"middle\">"
    << detail::escape(p.ylabel) << "</text>\n";

  double ly = mt + 16;
  for (const auto& s : p.series) {
    if (s.markers) {
      for (std::size_t i = 0; i < s.x.size(); ++i) {
        if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
        o << "<circle cx=\"" << detail::num(sx(s.x[i])) << "\" cy=\"" << detail::num(sy(s.y[i]))
          << "\" r=\"3.5\" fill=\"" << s.color << "\"/>\n";
      }
    } else {
      o << "<polyline fill=\"none\" stroke=\"" << s.color << "\" stroke-width=\"1.5\""
        << (s.dashed ? " stroke-dasharray=\"6,4\"" : "") << " points=\"";
      bool first = true;
      for (std::size_t i = 0; i < s.x.size(); ++i) {
        if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
        o << (first ? "" : " ") << detail::num(sx(s.x[i])) << ',' << detail::num(sy(s.y[i]));
        first = false;
      }
      o << "\"/>\n";
    }
    if (!s.label.empty()) {
      o << "<text x=\"" << detail::num(ml + pw - 8) << "\" y=\"" << detail::num(ly) << "\" text-anchor=\"end\" fill=\""
        << s.color << "\">" << detail::escape(s.label) << "</text>\n";
      ly += 16;
    }
  }
  o << "</svg>\n";
  return o.str();
}

}  // namespace mckv::svg
