#include "sskd/plot.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "sskd/errors.hpp"

namespace sskd::plot {

namespace {

constexpr double kW = 640, kH = 400, kLeft = 70, kRight = 150, kTop = 40, kBottom = 60;
const char* kColors[] = {"#4c72b0", "#dd8452", "#55a868", "#c44e52", "#8172b3", "#937860", "#da8bc3"};

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      default: out += c;
    }
  }
  return out;
}

struct Range {
  double lo, hi;
};

Range value_range(const Chart& chart, bool from_zero) {
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (const auto& s : chart.series) {
    for (std::size_t i = 0; i < s.y.size(); ++i) {
      const double e = i < s.err.size() ? s.err[i] : 0.0;
      lo = std::min(lo, s.y[i] - e);
      hi = std::max(hi, s.y[i] + e);
    }
  }
  if (!std::isfinite(lo)) return {0.0, 1.0};
  if (from_zero) lo = std::min(lo, 0.0);
  if (hi - lo < 1e-9) hi = lo + 1.0;
  const double pad = 0.05 * (hi - lo);
  return {from_zero && lo >= 0.0 ? lo : lo - pad, hi + pad};
}

void frame(std::ostringstream& os, const Chart& chart, Range r) {
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kW << "\" height=\"" << kH
     << "\" font-family=\"sans-serif\" font-size=\"12\">\n"
     << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
     << "<text x=\"" << kW / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">" << escape(chart.title)
     << "</text>\n";
  const double x0 = kLeft, x1 = kW - kRight, y0 = kH - kBottom, y1 = kTop;
  os << "<line x1=\"" << x0 << "\" y1=\"" << y0 << "\" x2=\"" << x1 << "\" y2=\"" << y0 << "\" stroke=\"black\"/>\n"
     << "<line x1=\"" << x0 << "\" y1=\"" << y0 << "\" x2=\"" << x0 << "\" y2=\"" << y1 << "\" stroke=\"black\"/>\n";
  for (int t = 0; t <= 5; ++t) {
    const double v = r.lo + (r.hi - r.lo) * t / 5.0;
    const double y = y0 - (y0 - y1) * t / 5.0;
    os << "<line x1=\"" << x0 - 4 << "\" y1=\"" << y << "\" x2=\"" << x1 << "\" y2=\"" << y
       << "\" stroke=\"#ddd\"/>\n<text x=\"" << x0 - 8 << "\" y=\"" << y + 4 << "\" text-anchor=\"end\">"
       << std::round(v * 100.0) / 100.0 << "</text>\n";
  }
  os << "<text x=\"" << (x0 + x1) / 2 << "\" y=\"" << kH - 15 << "\" text-anchor=\"middle\">" << escape(chart.x_label)
     << "</text>\n<text transform=\"translate(18," << (y0 + y1) / 2 << ") rotate(-90)\" text-anchor=\"middle\">"
     << escape(chart.y_label) << "</text>\n";
  for (std::size_t s = 0; s < chart.series.size(); ++s) {
    const double y = kTop + 10 + 20.0 * s;
    os << "<rect x=\"" << x1 + 15 << "\" y=\"" << y - 9 << "\" width=\"12\" height=\"12\" fill=\""
       << kColors[s % 7] << "\"/>\n<text x=\"" << x1 + 32 << "\" y=\"" << y + 2 << "\">"
       << escape(chart.series[s].name) << "</text>\n";
  }
}

void save(const std::ostringstream& os, const std::filesystem::path& file) {
  std::ofstream out(file);
  if (!out) throw IoError("cannot write plot " + file.string());
  out << os.str() << "</svg>\n";
}

}  // namespace

void bar_chart(const Chart& chart, const std::filesystem::path& file) {
  const Range r = value_range(chart, false);
  std::ostringstream os;
  frame(os, chart, r);
  const double x0 = kLeft, x1 = kW - kRight, y0 = kH - kBottom, y1 = kTop;
  const std::size_t groups = std::max<std::size_t>(1, chart.categories.size());
  const double gw = (x1 - x0) / groups;
  const double bw = 0.8 * gw / std::max<std::size_t>(1, chart.series.size());
  auto ypos = [&](double v) { return y0 - (v - r.lo) / (r.hi - r.lo) * (y0 - y1); };
  for (std::size_t g = 0; g < groups; ++g) {
    if (g < chart.categories.size()) {
      os << "<text x=\"" << x0 + gw * (g + 0.5) << "\" y=\"" << y0 + 18 << "\" text-anchor=\"middle\">"
         << escape(chart.categories[g]) << "</text>\n";
    }
    for (std::size_t s = 0; s < chart.series.size(); ++s) {
      const auto& series = chart.series[s];
      if (g >= series.y.size()) continue;
      const double x = x0 + gw * g + 0.1 * gw + bw * s;
      const double top = ypos(series.y[g]);
      os << "<rect x=\"" << x << "\" y=\"" << top << "\" width=\"" << bw << "\" height=\"" << y0 - top
         << "\" fill=\"" << kColors[s % 7] << "\"/>\n";
      if (g < series.err.size() && series.err[g] > 0) {
        const double cx = x + bw / 2;
        os << "<line x1=\"" << cx << "\" y1=\"" << ypos(series.y[g] - series.err[g]) << "\" x2=\"" << cx
           << "\" y2=\"" << ypos(series.y[g] + series.err[g]) << "\" stroke=\"black\"/>\n";
      }
    }
  }
  save(os, file);
}

void line_chart(const Chart& chart, const std::filesystem::path& file) {
  const Range r = value_range(chart, false);
  std::ostringstream os;
  frame(os, chart, r);
  const double x0 = kLeft, x1 = kW - kRight, y0 = kH - kBottom, y1 = kTop;
  std::size_t points = chart.categories.size();
  for (const auto& s : chart.series) points = std::max(points, s.y.size());
  const double step = points > 1 ? (x1 - x0 - 40) / (points - 1) : 0.0;
  auto xpos = [&](std::size_t i) { return x0 + 20 + step * i; };
  auto ypos = [&](double v) { return y0 - (v - r.lo) / (r.hi - r.lo) * (y0 - y1); };
  for (std::size_t i = 0; i < chart.categories.size(); ++i) {
    os << "<text x=\"" << xpos(i) << "\" y=\"" << y0 + 18 << "\" text-anchor=\"middle\">"
       << escape(chart.categories[i]) << "</text>\n";
  }
  for (std::size_t s = 0; s < chart.series.size(); ++s) {
    const auto& series = chart.series[s];
    os << "<polyline fill=\"none\" stroke-width=\"2\" stroke=\"" << kColors[s % 7] << "\" points=\"";
    for (std::size_t i = 0; i < series.y.size(); ++i) os << xpos(i) << ',' << ypos(series.y[i]) << ' ';
    os << "\"/>\n";
    for (std::size_t i = 0; i < series.y.size(); ++i) {
      os << "<circle cx=\"" << xpos(i) << "\" cy=\"" << ypos(series.y[i]) << "\" r=\"3\" fill=\""
         << kColors[s % 7] << "\"/>\n";
      if (i < series.err.size() && series.err[i] > 0) {
        os << "<line x1=\"" << xpos(i) << "\" y1=\"" << ypos(series.y[i] - series.err[i]) << "\" x2=\""
           << xpos(i) << "\" y2=\"" << ypos(series.y[i] + series.err[i]) << "\" stroke=\"" << kColors[s % 7]
           << "\"/>\n";
      }
    }
  }
  save(os, file);
}

void heatmap(const torch::Tensor& matrix, const std::string& title, const std::filesystem::path& file) {
  if (matrix.dim() != 2) throw DimensionError("heatmap expects a matrix");
  auto m = matrix.detach().to(torch::kFloat64).contiguous();
  const std::int64_t rows = m.size(0), cols = m.size(1);
  const double hi = std::max(m.numel() ? m.max().item<double>() : 0.0, 1e-12);
  const double cell = std::max(2.0, std::min(24.0, 480.0 / std::max(rows, cols)));
  const double w = cols * cell + 80, h = rows * cell + 90;
  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h
     << "\" font-family=\"sans-serif\" font-size=\"12\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
     << "<text x=\"" << w / 2 << "\" y=\"20\" text-anchor=\"middle\">" << escape(title) << "</text>\n";
  const double* p = m.data_ptr<double>();
  for (std::int64_t i = 0; i < rows; ++i) {
    for (std::int64_t j = 0; j < cols; ++j) {
      const double v = std::clamp(p[i * cols + j] / hi, 0.0, 1.0);
      const int shade = static_cast<int>(std::lround(255 * (1.0 - v)));
      os << "<rect x=\"" << 40 + j * cell << "\" y=\"" << 35 + i * cell << "\" width=\"" << cell << "\" height=\""
         << cell << "\" fill=\"rgb(255," << shade << ',' << shade << ")\"/>\n";
    }
  }
  os << "<text x=\"40\" y=\"" << h - 20 << "\">scale: white = 0, red = " << hi << "</text>\n";
  save(os, file);
}

}  // namespace sskd::plot
