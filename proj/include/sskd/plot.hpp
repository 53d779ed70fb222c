#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <torch/torch.h>

// Minimal SVG charts; no external plotting dependency.
namespace sskd::plot {

struct Series {
  std::string name;
  std::vector<double> y;
  std::vector<double> err;  // optional error bars, same length as y
};

struct Chart {
  std::string title;
  std::string x_label;
  std::string y_label;
  std::vector<std::string> categories;  // x tick labels
  std::vector<Series> series;
};

void bar_chart(const Chart& chart, const std::filesystem::path& file);
void line_chart(const Chart& chart, const std::filesystem::path& file);
// Row-major (R, C) matrix; color scale from 0 to the matrix maximum.
void heatmap(const torch::Tensor& matrix, const std::string& title, const std::filesystem::path& file);

}  // namespace sskd::plot
