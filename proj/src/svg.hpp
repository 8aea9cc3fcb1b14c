// Copyright (c) 2026, poslab authors
// SPDX-License-Identifier: Apache-2.0
//
// Minimal self-contained SVG charts for reports. Coordinates are printed with
// fixed precision so identical data gives identical bytes.

#pragma once

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace poslab::svg {

struct Series {
  std::string name;
  std::vector<double> x, y;
};

struct Rule {
  std::string label;
  double y = 0.0;
};

std::string escape(std::string_view text);

std::string line_chart(const std::string& title, const std::string& x_label,
                       const std::string& y_label, std::span<const Series> series,
                       const std::optional<Rule>& rule = std::nullopt);

/// Grouped bars: series[k].y[i] is the bar of series k in category i.
std::string bar_chart(const std::string& title, const std::string& x_label,
                      const std::string& y_label, std::span<const std::string> categories,
                      std::span<const Series> series);

/// Points (x[i], y[i]) with an optional y = x reference line.
std::string scatter_chart(const std::string& title, const std::string& x_label,
                          const std::string& y_label, const Series& points, bool diagonal);

}  // namespace poslab::svg
