#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "stark/error.hpp"

namespace stark::svg {

struct Series {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
  bool markers = false; ///< draw points instead of a polyline
};

struct Plot {
  std::string title;
  std::string x_label;
  std::string y_label;
  bool log_x = false;
  bool log_y = false;
  std::vector<Series> series;
  int width = 640;
  int height = 440;
};

namespace detail {

inline std::string fixed(double v, int digits = 2) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::fixed, digits);
  if (ec != std::errc())
    return "0";
  return std::string(buf, ptr);
}

inline std::string tick_label(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, 4);
  return ec == std::errc() ? std::string(buf, ptr) : "?";
}

inline std::string escape(const std::string &text) {
  std::string out;
  for (char c : text) {
    switch (c) {
    case '&':
      out += "&amp;";
      break;
    case '<':
      out += "&lt;";
      break;
    case '>':
      out += "&gt;";
      break;
    case '"':
      out += "&quot;";
      break;
    default:
      out += c;
    }
  }
  return out;
}

struct Axis {
  bool log = false;
  double lo = 0.0; // in transformed units
  double hi = 1.0;

  [[nodiscard]] double map(double v) const { return log ? std::log10(v) : v; }
  [[nodiscard]] bool usable(double v) const { return std::isfinite(v) && (!log || v > 0.0); }

  void fit(const std::vector<double> &values) {
    double a = std::numeric_limits<double>::infinity(), b = -a;
    for (double v : values)
      if (usable(v)) {
        a = std::min(a, map(v));
        b = std::max(b, map(v));
      }
    if (!std::isfinite(a))
      throw InvalidArgument("plot axis has no usable values");
    if (b - a < 1e-12 * std::max(1.0, std::abs(a))) {
      a -= 0.5;
      b += 0.5;
    } else {
      const double pad = 0.03 * (b - a);
      a -= pad;
      b += pad;
    }
    lo = a;
    hi = b;
  }

  /// Tick positions in transformed units and their labels.
  [[nodiscard]] std::vector<std::pair<double, std::string>> ticks() const {
    std::vector<std::pair<double, std::string>> out;
    if (log) {
      const int first = static_cast<int>(std::ceil(lo));
      const int last = static_cast<int>(std::floor(hi));
      const int stride = std::max(1, (last - first + 1 + 7) / 8);
      for (int d = first; d <= last; d += stride)
        out.emplace_back(d, "1e" + std::to_string(d));
      return out;
    }
    const double raw = (hi - lo) / 6.0;
    const double mag = std::pow(10.0, std::floor(std::log10(raw)));
    double step = mag;
    for (double m : {1.0, 2.0, 5.0, 10.0})
      if (m * mag >= raw) {
        step = m * mag;
        break;
      }
    for (double t = std::ceil(lo / step) * step; t <= hi + 1e-9 * step; t += step)
      out.emplace_back(t, tick_label(std::abs(t) < 1e-12 * step ? 0.0 : t));
    return out;
  }
};

inline const char *colour(std::size_t i) {
  static const char *palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                                  "#ff7f0e", "#8c564b", "#e377c2", "#17becf"};
  return palette[i % 8];
}

} // namespace detail

/// Standalone SVG document. Output depends only on the plot contents.
inline std::string render(const Plot &plot) {
  if (plot.series.empty())
    throw InvalidArgument("plot has no series");
  std::vector<double> xs, ys;
  for (const auto &s : plot.series) {
    if (s.x.size() != s.y.size())
      throw InvalidArgument("series '" + s.label + "' has mismatched x/y lengths");
    xs.insert(xs.end(), s.x.begin(), s.x.end());
    ys.insert(ys.end(), s.y.begin(), s.y.end());
  }
  detail::Axis ax{plot.log_x}, ay{plot.log_y};
  ax.fit(xs);
  ay.fit(ys);

  const double left = 80, right = 170, top = 40, bottom = 60;
  const double pw = plot.width - left - right;
  const double ph = plot.height - top - bottom;
  auto px = [&](double v) { return left + (ax.map(v) - ax.lo) / (ax.hi - ax.lo) * pw; };
  auto py = [&](double v) { return top + (ay.hi - ay.map(v)) / (ay.hi - ay.lo) * ph; };
  using detail::fixed;

  std::string o;
  o += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + std::to_string(plot.width) +
       "\" height=\"" + std::to_string(plot.height) + "\" viewBox=\"0 0 " +
       std::to_string(plot.width) + " " + std::to_string(plot.height) +
       "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  o += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  if (!plot.title.empty())
    o += "<text x=\"" + fixed(left + pw / 2) + "\" y=\"22\" text-anchor=\"middle\" "
         "font-size=\"14\">" + detail::escape(plot.title) + "</text>\n";

  o += "<g stroke=\"#dddddd\" stroke-width=\"1\">\n";
  for (const auto &[t, _] : ax.ticks()) {
    const double x = left + (t - ax.lo) / (ax.hi - ax.lo) * pw;
    o += "<line x1=\"" + fixed(x) + "\" y1=\"" + fixed(top) + "\" x2=\"" + fixed(x) +
         "\" y2=\"" + fixed(top + ph) + "\"/>\n";
  }
  for (const auto &[t, _] : ay.ticks()) {
    const double y = top + (ay.hi - t) / (ay.hi - ay.lo) * ph;
    o += "<line x1=\"" + fixed(left) + "\" y1=\"" + fixed(y) + "\" x2=\"" + fixed(left + pw) +
         "\" y2=\"" + fixed(y) + "\"/>\n";
  }
  o += "</g>\n";
  o += "<rect x=\"" + fixed(left) + "\" y=\"" + fixed(top) + "\" width=\"" + fixed(pw) +
       "\" height=\"" + fixed(ph) + "\" fill=\"none\" stroke=\"black\"/>\n";

  for (const auto &[t, label] : ax.ticks()) {
    const double x = left + (t - ax.lo) / (ax.hi - ax.lo) * pw;
    o += "<text x=\"" + fixed(x) + "\" y=\"" + fixed(top + ph + 16) +
         "\" text-anchor=\"middle\">" + label + "</text>\n";
  }
  for (const auto &[t, label] : ay.ticks()) {
    const double y = top + (ay.hi - t) / (ay.hi - ay.lo) * ph;
    o += "<text x=\"" + fixed(left - 6) + "\" y=\"" + fixed(y + 4) +
         "\" text-anchor=\"end\">" + label + "</text>\n";
  }
  o += "<text x=\"" + fixed(left + pw / 2) + "\" y=\"" + fixed(plot.height - 16.0) +
       "\" text-anchor=\"middle\">" + detail::escape(plot.x_label) + "</text>\n";
  o += "<text x=\"18\" y=\"" + fixed(top + ph / 2) + "\" text-anchor=\"middle\" " +
       "transform=\"rotate(-90 18 " + fixed(top + ph / 2) + ")\">" +
       detail::escape(plot.y_label) + "</text>\n";

  for (std::size_t i = 0; i < plot.series.size(); ++i) {
    const auto &s = plot.series[i];
    std::vector<std::pair<double, double>> pts;
    for (std::size_t k = 0; k < s.x.size(); ++k)
      if (ax.usable(s.x[k]) && ay.usable(s.y[k]))
        pts.emplace_back(px(s.x[k]), py(s.y[k]));
    if (s.markers) {
      o += "<g fill=\"" + std::string(detail::colour(i)) + "\">\n";
      for (const auto &[x, y] : pts)
        o += "<circle cx=\"" + fixed(x) + "\" cy=\"" + fixed(y) + "\" r=\"3\"/>\n";
      o += "</g>\n";
    } else {
      o += "<polyline fill=\"none\" stroke=\"" + std::string(detail::colour(i)) +
           "\" stroke-width=\"1.5\" points=\"";
      for (std::size_t k = 0; k < pts.size(); ++k)
        o += (k ? " " : "") + fixed(pts[k].first) + "," + fixed(pts[k].second);
      o += "\"/>\n";
    }
    const double ly = top + 10 + 18.0 * static_cast<double>(i);
    const double lx = left + pw + 14;
    o += "<line x1=\"" + fixed(lx) + "\" y1=\"" + fixed(ly) + "\" x2=\"" + fixed(lx + 24) +
         "\" y2=\"" + fixed(ly) + "\" stroke=\"" + detail::colour(i) +
         "\" stroke-width=\"2\"/>\n";
    o += "<text x=\"" + fixed(lx + 30) + "\" y=\"" + fixed(ly + 4) + "\">" +
         detail::escape(s.label) + "</text>\n";
  }
  o += "</svg>\n";
  return o;
}

} // namespace stark::svg
