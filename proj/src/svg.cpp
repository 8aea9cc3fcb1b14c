// Copyright (c) 2026, poslab authors
// SPDX-License-Identifier: Apache-2.0

#include "svg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

namespace poslab::svg {
namespace {

constexpr double kWidth = 720, kHeight = 420;
constexpr double kLeft = 70, kRight = 170, kTop = 40, kBottom = 55;
constexpr const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                                    "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f"};

const char* color(std::size_t i) { return kPalette[i % std::size(kPalette)]; }

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string tick_text(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

struct Range {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();

  void add(double v) {
    if (!std::isfinite(v)) return;
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  void finish(bool from_zero) {
    if (!std::isfinite(lo)) lo = 0, hi = 1;
    if (from_zero) lo = std::min(lo, 0.0);
    if (hi - lo < 1e-12) hi = lo + 1;
    const double pad = 0.05 * (hi - lo);
    if (!(from_zero && lo == 0.0)) lo -= pad;
    hi += pad;
  }
};

struct Frame {
  Range xr, yr;
  double px(double x) const { return kLeft + (x - xr.lo) / (xr.hi - xr.lo) * (kWidth - kLeft - kRight); }
  double py(double y) const {
    return kHeight - kBottom - (y - yr.lo) / (yr.hi - yr.lo) * (kHeight - kTop - kBottom);
  }
};

std::string header(const std::string& title) {
  std::string s = "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  s += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + num(kWidth) + "\" height=\"" +
       num(kHeight) + "\" viewBox=\"0 0 " + num(kWidth) + " " + num(kHeight) +
       "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  s += "<rect x=\"0\" y=\"0\" width=\"" + num(kWidth) + "\" height=\"" + num(kHeight) +
       "\" fill=\"white\"/>\n";
  s += "<text x=\"" + num(kWidth / 2) + "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">" +
       escape(title) + "</text>\n";
  return s;
}

std::string axes(const Frame& f, const std::string& x_label, const std::string& y_label,
                 bool numeric_x) {
  const double x0 = kLeft, x1 = kWidth - kRight, y0 = kHeight - kBottom, y1 = kTop;
  std::string s = "<g stroke=\"black\" fill=\"none\">\n";
  s += "<line x1=\"" + num(x0) + "\" y1=\"" + num(y0) + "\" x2=\"" + num(x1) + "\" y2=\"" + num(y0) + "\"/>\n";
  s += "<line x1=\"" + num(x0) + "\" y1=\"" + num(y0) + "\" x2=\"" + num(x0) + "\" y2=\"" + num(y1) + "\"/>\n";
  s += "</g>\n";
  for (int i = 0; i <= 4; ++i) {
    const double v = f.yr.lo + (f.yr.hi - f.yr.lo) * i / 4.0;
    s += "<text x=\"" + num(x0 - 6) + "\" y=\"" + num(f.py(v) + 4) + "\" text-anchor=\"end\">" +
         tick_text(v) + "</text>\n";
    if (numeric_x) {
      const double u = f.xr.lo + (f.xr.hi - f.xr.lo) * i / 4.0;
      s += "<text x=\"" + num(f.px(u)) + "\" y=\"" + num(y0 + 16) + "\" text-anchor=\"middle\">" +
           tick_text(u) + "</text>\n";
    }
  }
  s += "<text x=\"" + num((x0 + x1) / 2) + "\" y=\"" + num(kHeight - 12) +
       "\" text-anchor=\"middle\">" + escape(x_label) + "</text>\n";
  s += "<text x=\"16\" y=\"" + num((y0 + y1) / 2) + "\" text-anchor=\"middle\" transform=\"rotate(-90 16 " +
       num((y0 + y1) / 2) + ")\">" + escape(y_label) + "</text>\n";
  return s;
}

std::string legend_entry(std::size_t i, const std::string& name, const char* stroke, bool dashed) {
  const double y = kTop + 10 + 18 * static_cast<double>(i), x = kWidth - kRight + 15;
  std::string s = "<line x1=\"" + num(x) + "\" y1=\"" + num(y) + "\" x2=\"" + num(x + 20) + "\" y2=\"" +
                  num(y) + "\" stroke=\"" + stroke + "\" stroke-width=\"2\"";
  if (dashed) s += " stroke-dasharray=\"5,4\"";
  s += "/>\n<text x=\"" + num(x + 26) + "\" y=\"" + num(y + 4) + "\">" + escape(name) + "</text>\n";
  return s;
}

}  // namespace

std::string escape(std::string_view text) {
  std::string out;
  for (char c : text) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      case '\'': out += "&apos;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string line_chart(const std::string& title, const std::string& x_label,
                       const std::string& y_label, std::span<const Series> series,
                       const std::optional<Rule>& rule) {
  Frame f;
  for (const auto& s : series) {
    for (double x : s.x) f.xr.add(x);
    for (double y : s.y) f.yr.add(y);
  }
  if (rule) f.yr.add(rule->y);
  f.xr.finish(false);
  f.yr.finish(true);
  std::string out = header(title) + axes(f, x_label, y_label, true);
  std::size_t entry = 0;
  for (std::size_t k = 0; k < series.size(); ++k) {
    const Series& s = series[k];
    std::string points;
    for (std::size_t i = 0; i < std::min(s.x.size(), s.y.size()); ++i) {
      if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
      if (!points.empty()) points += ' ';
      points += num(f.px(s.x[i])) + "," + num(f.py(s.y[i]));
      out += "<circle cx=\"" + num(f.px(s.x[i])) + "\" cy=\"" + num(f.py(s.y[i])) +
             "\" r=\"3\" fill=\"" + color(k) + "\"/>\n";
    }
    out += "<polyline fill=\"none\" stroke=\"" + std::string(color(k)) +
           "\" stroke-width=\"2\" points=\"" + points + "\"/>\n";
    out += legend_entry(entry++, s.name, color(k), false);
  }
  if (rule) {
    out += "<line x1=\"" + num(kLeft) + "\" y1=\"" + num(f.py(rule->y)) + "\" x2=\"" +
           num(kWidth - kRight) + "\" y2=\"" + num(f.py(rule->y)) +
           "\" stroke=\"#444444\" stroke-width=\"1.5\" stroke-dasharray=\"5,4\"/>\n";
    out += legend_entry(entry++, rule->label, "#444444", true);
  }
  return out + "</svg>\n";
}

std::string bar_chart(const std::string& title, const std::string& x_label,
                      const std::string& y_label, std::span<const std::string> categories,
                      std::span<const Series> series) {
  Frame f;
  f.xr.lo = 0;
  f.xr.hi = static_cast<double>(std::max<std::size_t>(categories.size(), 1));
  for (const auto& s : series) {
    for (double y : s.y) f.yr.add(y);
  }
  f.yr.finish(true);
  std::string out = header(title) + axes(f, x_label, y_label, false);
  const double slot = f.px(1) - f.px(0);
  const double bar = 0.8 * slot / static_cast<double>(std::max<std::size_t>(series.size(), 1));
  for (std::size_t i = 0; i < categories.size(); ++i) {
    out += "<text x=\"" + num(f.px(i + 0.5)) + "\" y=\"" + num(kHeight - kBottom + 16) +
           "\" text-anchor=\"middle\">" + escape(categories[i]) + "</text>\n";
  }
  for (std::size_t k = 0; k < series.size(); ++k) {
    for (std::size_t i = 0; i < std::min(categories.size(), series[k].y.size()); ++i) {
      const double v = series[k].y[i];
      if (!std::isfinite(v)) continue;
      const double x = f.px(static_cast<double>(i)) + 0.1 * slot + bar * static_cast<double>(k);
      const double top = f.py(std::max(v, f.yr.lo)), base = f.py(f.yr.lo);
      out += "<rect x=\"" + num(x) + "\" y=\"" + num(std::min(top, base)) + "\" width=\"" + num(bar) +
             "\" height=\"" + num(std::abs(base - top)) + "\" fill=\"" + color(k) + "\"/>\n";
    }
    out += legend_entry(k, series[k].name, color(k), false);
  }
  return out + "</svg>\n";
}

std::string scatter_chart(const std::string& title, const std::string& x_label,
                          const std::string& y_label, const Series& points, bool diagonal) {
  Frame f;
  for (double x : points.x) f.xr.add(x), f.yr.add(x);
  for (double y : points.y) f.xr.add(y), f.yr.add(y);
  f.xr.finish(true);
  f.yr.finish(true);
  std::string out = header(title) + axes(f, x_label, y_label, true);
  if (diagonal) {
    const double lo = std::max(f.xr.lo, f.yr.lo), hi = std::min(f.xr.hi, f.yr.hi);
    out += "<line x1=\"" + num(f.px(lo)) + "\" y1=\"" + num(f.py(lo)) + "\" x2=\"" + num(f.px(hi)) +
           "\" y2=\"" + num(f.py(hi)) + "\" stroke=\"#444444\" stroke-dasharray=\"5,4\"/>\n";
    out += legend_entry(1, "y = x", "#444444", true);
  }
  for (std::size_t i = 0; i < std::min(points.x.size(), points.y.size()); ++i) {
    if (!std::isfinite(points.x[i]) || !std::isfinite(points.y[i])) continue;
    out += "<circle cx=\"" + num(f.px(points.x[i])) + "\" cy=\"" + num(f.py(points.y[i])) +
           "\" r=\"2.5\" fill=\"" + color(0) + "\" fill-opacity=\"0.6\"/>\n";
  }
  out += legend_entry(0, points.name, color(0), false);
  return out + "</svg>\n";
}

}  // namespace poslab::svg
