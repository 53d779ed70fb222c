#include "sskd/synthetic.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>

#include "sskd/errors.hpp"

namespace sskd::data {

namespace {

struct Rgb {
  double r, g, b;
};

Rgb hsv_to_rgb(double h, double s, double v) {
  h = h - std::floor(h);
  const double hh = h * 6.0;
  const int sector = static_cast<int>(hh) % 6;
  const double f = hh - std::floor(hh);
  const double p = v * (1 - s), q = v * (1 - s * f), t = v * (1 - s * (1 - f));
  switch (sector) {
    case 0: return {v, t, p};
    case 1: return {q, v, p};
    case 2: return {p, v, t};
    case 3: return {p, q, v};
    case 4: return {t, p, v};
    default: return {v, p, q};
  }
}

struct Shape {
  int kind;
  double cx, cy, radius, angle;
};

// Inside test in the shape's rotated frame.
bool inside(const Shape& s, double px, double py) {
  const double dx = px - s.cx, dy = py - s.cy;
  const double c = std::cos(s.angle), sn = std::sin(s.angle);
  const double u = c * dx + sn * dy;
  const double v = -sn * dx + c * dy;
  const double r = s.radius;
  const double d = std::hypot(u, v);
  const double box = std::max(std::abs(u), std::abs(v));
  switch (s.kind) {
    case 0: return d < r;
    case 1: return d < r && d > 0.55 * r;
    case 2: return box < 0.8 * r;
    case 3: return box < 0.8 * r && box > 0.45 * r;
    case 4: {
      // Upward triangle with circumradius r.
      const double h = 1.5 * r;
      const double top = -r, bottom = 0.5 * r;
      if (v < top || v > bottom) return false;
      const double half = (v - top) / h * (std::sqrt(3.0) * r / 2.0);
      return std::abs(u) < half;
    }
    case 5: return std::abs(u) + std::abs(v) < r;
    case 6: {
      const double arm = 0.28 * r;
      return (std::abs(u) < arm && std::abs(v) < r) || (std::abs(v) < arm && std::abs(u) < r);
    }
    case 7: {
      const double k = std::numbers::sqrt2 / 2.0;
      const double a = k * (u + v), b = k * (u - v);
      const double arm = 0.28 * r;
      return (std::abs(a) < arm && std::abs(b) < r) || (std::abs(b) < arm && std::abs(a) < r);
    }
    case 8: return box < 0.85 * r && std::sin(v * 1.25) > 0.0;
    case 9:
      return box < 0.85 * r && (std::sin(u * 1.25) > 0.0) != (std::sin(v * 1.25) > 0.0);
    default: return false;
  }
}

double coverage(const Shape& s, int x, int y) {
  constexpr int kSub = 3;
  int hits = 0;
  for (int a = 0; a < kSub; ++a) {
    for (int b = 0; b < kSub; ++b) {
      if (inside(s, x + (a + 0.5) / kSub, y + (b + 0.5) / kSub)) ++hits;
    }
  }
  return hits / static_cast<double>(kSub * kSub);
}

void render(int label, int side, Rng& rng, std::uint8_t* out) {
  const Rgb bg0{rng.uniform(0.1, 0.9), rng.uniform(0.1, 0.9), rng.uniform(0.1, 0.9)};
  const Rgb bg1{rng.uniform(0.1, 0.9), rng.uniform(0.1, 0.9), rng.uniform(0.1, 0.9)};
  const double dir = rng.uniform(0.0, 2.0 * std::numbers::pi);
  std::array<double, 6> waves{};
  for (double& w : waves) w = rng.uniform(0.0, 2.0 * std::numbers::pi);

  const double family = static_cast<double>(label / 2) / 5.0;
  const double hue = rng.bernoulli(0.3) ? rng.uniform() : family + rng.normal(0.0, 0.08);
  const Rgb fg = hsv_to_rgb(hue, rng.uniform(0.45, 1.0), rng.uniform(0.45, 1.0));

  const double centre = side / 2.0;
  const double scale = side / 32.0;
  Shape shape{label, centre + rng.uniform(-6, 6) * scale, centre + rng.uniform(-6, 6) * scale,
              rng.uniform(6.0, 11.0) * scale, rng.uniform(-0.35, 0.35)};

  const bool distractor = rng.bernoulli(0.5);
  Shape blob{0, rng.uniform(0, side), rng.uniform(0, side), rng.uniform(2.0, 3.5) * scale, 0.0};
  const Rgb blob_rgb{rng.uniform(), rng.uniform(), rng.uniform()};
  const double noise = rng.uniform(0.02, 0.08);

  for (int y = 0; y < side; ++y) {
    for (int x = 0; x < side; ++x) {
      const double t = 0.5 + ((x - centre) * std::cos(dir) + (y - centre) * std::sin(dir)) / side;
      const double ripple = 0.06 * std::sin(0.3 * x + waves[0]) * std::sin(0.25 * y + waves[1]);
      std::array<double, 3> px = {bg0.r + (bg1.r - bg0.r) * t + ripple,
                                  bg0.g + (bg1.g - bg0.g) * t + ripple,
                                  bg0.b + (bg1.b - bg0.b) * t + ripple};
      const double alpha = coverage(shape, x, y);
      px[0] = px[0] * (1 - alpha) + fg.r * alpha;
      px[1] = px[1] * (1 - alpha) + fg.g * alpha;
      px[2] = px[2] * (1 - alpha) + fg.b * alpha;
      if (distractor) {
        const double beta = coverage(blob, x, y);
        px[0] = px[0] * (1 - beta) + blob_rgb.r * beta;
        px[1] = px[1] * (1 - beta) + blob_rgb.g * beta;
        px[2] = px[2] * (1 - beta) + blob_rgb.b * beta;
      }
      for (int c = 0; c < 3; ++c) {
        const double v = std::clamp(px[c] + rng.normal(0.0, noise), 0.0, 1.0);
        out[(static_cast<std::size_t>(y) * side + x) * 3 + c] =
            static_cast<std::uint8_t>(std::lround(v * 255.0));
      }
    }
  }
}

}  // namespace

Dataset generate_synthetic(const DatasetSpec& spec, Split split) {
  if (spec.num_classes != kSyntheticClasses || spec.channels != 3) {
    throw ConfigError("synthetic dataset has 10 classes and 3 channels");
  }
  const std::int64_t n = split == Split::Train ? spec.train_size : spec.test_size;
  if (n <= 0) throw ConfigError("synthetic split size must be positive");
  const int side = spec.image_size;
  const std::size_t per = static_cast<std::size_t>(side) * side * 3;
  std::vector<std::uint8_t> pixels(per * static_cast<std::size_t>(n));
  std::vector<std::int64_t> labels(n), indices(n);
  const char* stream = split == Split::Train ? "synthetic-train" : "synthetic-test";
  for (std::int64_t i = 0; i < n; ++i) {
    Rng rng(derive_seed(spec.generator_seed, stream, {static_cast<std::uint64_t>(i)}));
    labels[i] = i % kSyntheticClasses;
    indices[i] = i;
    render(static_cast<int>(labels[i]), side, rng, pixels.data() + per * static_cast<std::size_t>(i));
  }
  return Dataset(spec, side, side, 3, std::move(pixels), std::move(labels), std::move(indices));
}

}  // namespace sskd::data
