#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace pnl {

struct Series {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
};

struct Bar {
  std::string label;
  double value = 0.0;
};

/// Minimal static SVG charts.
std::string line_chart_svg(const std::string& title, const std::string& x_label, const std::string& y_label,
                           const std::vector<Series>& series);
std::string bar_chart_svg(const std::string& title, const std::string& y_label, const std::vector<Bar>& bars);

void write_text_file(const std::filesystem::path& path, const std::string& text);

}  // namespace pnl
