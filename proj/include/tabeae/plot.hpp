#pragma once

// Minimal SVG bar charts for the analysis outputs.

#include <algorithm>
#include <cstdio>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "tabeae/corpus.hpp"
#include "tabeae/eval.hpp"

namespace tabeae {

struct Bar {
  std::string label;
  double value = 0.0;
};

namespace detail {

inline std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

inline std::string fmt(double v, const char* spec = "%.1f") {
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

}  // namespace detail

inline std::string bar_chart_svg(const std::string& title, const std::vector<Bar>& bars, double y_max = 0.0) {
  const double bw = 56.0, gap = 12.0, left = 48.0, top = 36.0, h = 220.0, bottom = 48.0;
  const double width = left + static_cast<double>(bars.size()) * (bw + gap) + gap;
  double hi = y_max;
  for (const auto& b : bars) hi = std::max(hi, b.value);
  if (hi <= 0.0) hi = 1.0;
  std::string s = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + detail::fmt(width, "%.0f") + "\" height=\"" +
                  detail::fmt(top + h + bottom, "%.0f") + "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  s += "<text x=\"" + detail::fmt(left, "%.0f") + "\" y=\"20\" font-size=\"14\">" + detail::xml_escape(title) + "</text>\n";
  s += "<line x1=\"" + detail::fmt(left) + "\" y1=\"" + detail::fmt(top + h) + "\" x2=\"" + detail::fmt(width) +
       "\" y2=\"" + detail::fmt(top + h) + "\" stroke=\"black\"/>\n";
  s += "<text x=\"4\" y=\"" + detail::fmt(top + 4) + "\">" + detail::fmt(hi, "%.2f") + "</text>\n";
  for (std::size_t i = 0; i < bars.size(); ++i) {
    const double x = left + gap + static_cast<double>(i) * (bw + gap);
    const double bh = h * std::max(0.0, bars[i].value) / hi;
    s += "<rect x=\"" + detail::fmt(x) + "\" y=\"" + detail::fmt(top + h - bh) + "\" width=\"" + detail::fmt(bw) +
         "\" height=\"" + detail::fmt(bh) + "\" fill=\"#4c72b0\"/>\n";
    s += "<text x=\"" + detail::fmt(x + bw / 2) + "\" y=\"" + detail::fmt(top + h - bh - 4) +
         "\" text-anchor=\"middle\">" + detail::fmt(bars[i].value, "%.3g") + "</text>\n";
    s += "<text x=\"" + detail::fmt(x + bw / 2) + "\" y=\"" + detail::fmt(top + h + 16) +
         "\" text-anchor=\"middle\">" + detail::xml_escape(bars[i].label) + "</text>\n";
  }
  s += "</svg>\n";
  return s;
}

// Arg-C F1 per bucket.
inline std::string bucket_chart_svg(const std::string& title, const std::vector<BucketScore>& buckets) {
  std::vector<Bar> bars;
  for (const auto& b : buckets) bars.push_back({b.label, b.arg_c.f1 * 100.0});
  return bar_chart_svg(title, bars, 100.0);
}

// Number of instances per event count.
inline std::vector<Bar> event_count_histogram(const std::vector<EAEInstance>& corpus) {
  std::map<std::size_t, long> counts;
  for (const auto& inst : corpus) ++counts[inst.events.size()];
  std::vector<Bar> out;
  for (const auto& [n, c] : counts) out.push_back({std::to_string(n), static_cast<double>(c)});
  return out;
}

}  // namespace tabeae
