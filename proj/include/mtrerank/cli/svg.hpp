#pragma once

// Minimal standalone SVG line charts for the sweep series.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <string>
#include <vector>

namespace mtrerank::cli {

struct Series {
  std::string name;
  std::vector<double> y;  // NaN marks a missing point
};

namespace detail {

inline std::string fixed(double v, int digits = 2) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

inline std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      default: out += c;
    }
  }
  return out;
}

}  // namespace detail

/// Line chart with one polyline per series. The x axis is log2-scaled when
/// every x is positive.
inline std::string line_chart(const std::string& title, const std::string& xlabel, const std::string& ylabel,
                              const std::vector<double>& xs, const std::vector<Series>& series) {
  constexpr double W = 640, H = 420, L = 70, R = 150, T = 40, B = 60;
  static const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#7f7f7f", "#9467bd", "#ff7f0e"};
  const bool logx = !xs.empty() && std::all_of(xs.begin(), xs.end(), [](double x) { return x > 0; });
  auto tx = [&](double x) { return logx ? std::log2(x) : x; };

  double xmin = 0, xmax = 1, ymin = 0, ymax = 1;
  if (!xs.empty()) {
    xmin = tx(*std::min_element(xs.begin(), xs.end()));
    xmax = tx(*std::max_element(xs.begin(), xs.end()));
  }
  if (xmax == xmin) {
    xmin -= 1;
    xmax += 1;
  }
  bool any = false;
  for (const auto& s : series) {
    for (double y : s.y) {
      if (std::isnan(y)) continue;
      if (!any) ymin = ymax = y;
      ymin = std::min(ymin, y);
      ymax = std::max(ymax, y);
      any = true;
    }
  }
  const double pad = ymax > ymin ? 0.08 * (ymax - ymin) : 0.05;
  ymin -= pad;
  ymax += pad;

  auto px = [&](double x) { return L + (tx(x) - xmin) / (xmax - xmin) * (W - L - R); };
  auto py = [&](double y) { return H - B - (y - ymin) / (ymax - ymin) * (H - T - B); };

  std::ostringstream o;
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  o << "<text x=\"" << W / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">" << detail::escape(title) << "</text>\n";
  o << "<line x1=\"" << L << "\" y1=\"" << H - B << "\" x2=\"" << W - R << "\" y2=\"" << H - B << "\" stroke=\"black\"/>\n";
  o << "<line x1=\"" << L << "\" y1=\"" << T << "\" x2=\"" << L << "\" y2=\"" << H - B << "\" stroke=\"black\"/>\n";
  for (double x : xs) {
    o << "<line x1=\"" << detail::fixed(px(x)) << "\" y1=\"" << H - B << "\" x2=\"" << detail::fixed(px(x)) << "\" y2=\""
      << H - B + 5 << "\" stroke=\"black\"/>\n";
    o << "<text x=\"" << detail::fixed(px(x)) << "\" y=\"" << H - B + 18 << "\" text-anchor=\"middle\">" << detail::fixed(x, 0)
      << "</text>\n";
  }
  for (int i = 0; i <= 4; ++i) {
    const double y = ymin + (ymax - ymin) * i / 4.0;
    o << "<line x1=\"" << L - 5 << "\" y1=\"" << detail::fixed(py(y)) << "\" x2=\"" << L << "\" y2=\"" << detail::fixed(py(y))
      << "\" stroke=\"black\"/>\n";
    o << "<text x=\"" << L - 8 << "\" y=\"" << detail::fixed(py(y) + 4) << "\" text-anchor=\"end\">" << detail::fixed(y, 3)
      << "</text>\n";
  }
  o << "<text x=\"" << (L + W - R) / 2 << "\" y=\"" << H - 15 << "\" text-anchor=\"middle\">" << detail::escape(xlabel)
    << "</text>\n";
  o << "<text x=\"18\" y=\"" << (T + H - B) / 2 << "\" text-anchor=\"middle\" transform=\"rotate(-90 18 " << (T + H - B) / 2
    << ")\">" << detail::escape(ylabel) << "</text>\n";

  for (std::size_t s = 0; s < series.size(); ++s) {
    const char* color = kColors[s % (sizeof kColors / sizeof *kColors)];
    std::string points;
    for (std::size_t i = 0; i < xs.size() && i < series[s].y.size(); ++i) {
      const double y = series[s].y[i];
      if (std::isnan(y)) continue;
      points += detail::fixed(px(xs[i])) + "," + detail::fixed(py(y)) + " ";
      o << "<circle cx=\"" << detail::fixed(px(xs[i])) << "\" cy=\"" << detail::fixed(py(y)) << "\" r=\"3\" fill=\"" << color
        << "\"/>\n";
    }
    if (!points.empty()) {
      points.pop_back();
      o << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"" << points << "\"/>\n";
    }
    const double ly = T + 10 + 20.0 * static_cast<double>(s);
    o << "<line x1=\"" << W - R + 15 << "\" y1=\"" << ly << "\" x2=\"" << W - R + 40 << "\" y2=\"" << ly << "\" stroke=\""
      << color << "\" stroke-width=\"2\"/>\n";
    o << "<text x=\"" << W - R + 46 << "\" y=\"" << ly + 4 << "\">" << detail::escape(series[s].name) << "</text>\n";
  }
  o << "</svg>\n";
  return o.str();
}

}  // namespace mtrerank::cli
