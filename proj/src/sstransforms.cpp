#include "sskd/sstransforms.hpp"

#include <algorithm>
#include <cmath>

#include "sskd/errors.hpp"

namespace sskd::ss {

namespace {

constexpr double kMinArea = 0.08;
constexpr double kMaxArea = 1.0;
constexpr double kMinAspect = 3.0 / 4.0;
constexpr double kMaxAspect = 4.0 / 3.0;
constexpr double kMinFactor = 0.6;
constexpr double kMaxFactor = 1.4;
constexpr double kMaxHue = 0.1;
constexpr std::array<int, 3> kRotations = {90, -90, 180};

void require_rgb(const data::Image& image) {
  if (image.channels != 3) {
    throw DimensionError("colour transforms need 3 channels, got " + std::to_string(image.channels));
  }
}

float clamp01(double v) { return static_cast<float>(std::clamp(v, 0.0, 1.0)); }

void rgb_to_hsv(double r, double g, double b, double& h, double& s, double& v) {
  const double mx = std::max({r, g, b});
  const double mn = std::min({r, g, b});
  const double d = mx - mn;
  v = mx;
  s = mx > 0.0 ? d / mx : 0.0;
  if (d <= 0.0) {
    h = 0.0;
    return;
  }
  if (mx == r) {
    h = (g - b) / d;
  } else if (mx == g) {
    h = 2.0 + (b - r) / d;
  } else {
    h = 4.0 + (r - g) / d;
  }
  h /= 6.0;
  h -= std::floor(h);
}

void hsv_to_rgb(double h, double s, double v, double& r, double& g, double& b) {
  h -= std::floor(h);
  const double hh = h * 6.0;
  const int sector = static_cast<int>(hh) % 6;
  const double f = hh - std::floor(hh);
  const double p = v * (1 - s), q = v * (1 - s * f), t = v * (1 - s * (1 - f));
  switch (sector) {
    case 0: r = v, g = t, b = p; break;
    case 1: r = q, g = v, b = p; break;
    case 2: r = p, g = v, b = t; break;
    case 3: r = p, g = q, b = v; break;
    case 4: r = t, g = p, b = v; break;
    default: r = v, g = p, b = q; break;
  }
}

double gray(const data::Image& img, int y, int x, const std::array<double, 3>& luma) {
  return luma[0] * img.at(y, x, 0) + luma[1] * img.at(y, x, 1) + luma[2] * img.at(y, x, 2);
}

data::Image color_drop(const data::Image& image, const std::array<double, 3>& luma) {
  require_rgb(image);
  data::Image out(image.height, image.width, 3);
  for (int y = 0; y < image.height; ++y) {
    for (int x = 0; x < image.width; ++x) {
      const float l = clamp01(gray(image, y, x, luma));
      out.at(y, x, 0) = out.at(y, x, 1) = out.at(y, x, 2) = l;
    }
  }
  return out;
}

data::Image crop_resize(const data::Image& image, const CropResize& p) {
  const double total = static_cast<double>(image.height) * image.width;
  const double target = p.area * total;
  int w = static_cast<int>(std::lround(std::sqrt(target * p.aspect)));
  int h = static_cast<int>(std::lround(std::sqrt(target / p.aspect)));
  w = std::clamp(w, 1, image.width);
  h = std::clamp(h, 1, image.height);
  const int y0 = std::min(image.height - h, static_cast<int>(std::floor(p.offset_y * (image.height - h + 1))));
  const int x0 = std::min(image.width - w, static_cast<int>(std::floor(p.offset_x * (image.width - w + 1))));
  data::Image crop(h, w, image.channels);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      for (int c = 0; c < image.channels; ++c) crop.at(y, x, c) = image.at(y0 + y, x0 + x, c);
    }
  }
  return resize_bilinear(crop, image.height, image.width);
}

data::Image color_jitter(const data::Image& image, const ColorJitter& p,
                         const std::array<double, 3>& luma) {
  require_rgb(image);
  data::Image out = image;
  for (float& v : out.pixels) v = clamp01(v * p.brightness);

  double mean = 0.0;
  for (int y = 0; y < out.height; ++y) {
    for (int x = 0; x < out.width; ++x) mean += gray(out, y, x, luma);
  }
  mean /= static_cast<double>(out.height) * out.width;
  for (float& v : out.pixels) v = clamp01((v - mean) * p.contrast + mean);

  for (int y = 0; y < out.height; ++y) {
    for (int x = 0; x < out.width; ++x) {
      const double g = gray(out, y, x, luma);
      for (int c = 0; c < 3; ++c) out.at(y, x, c) = clamp01(g + (out.at(y, x, c) - g) * p.saturation);
    }
  }

  if (p.hue != 0.0) {
    for (int y = 0; y < out.height; ++y) {
      for (int x = 0; x < out.width; ++x) {
        double h, s, v, r, g, b;
        rgb_to_hsv(out.at(y, x, 0), out.at(y, x, 1), out.at(y, x, 2), h, s, v);
        hsv_to_rgb(h + p.hue, s, v, r, g, b);
        out.at(y, x, 0) = clamp01(r);
        out.at(y, x, 1) = clamp01(g);
        out.at(y, x, 2) = clamp01(b);
      }
    }
  }
  return out;
}

}  // namespace

std::string to_string(TransformTag tag) {
  switch (tag) {
    case TransformTag::ColorDrop: return "color_drop";
    case TransformTag::Rotate: return "rotate";
    case TransformTag::CropResize: return "crop_resize";
    case TransformTag::ColorJitter: return "color_jitter";
  }
  return "unknown";
}

TransformTag parse_transform_tag(const std::string& name) {
  for (TransformTag t : kAllTransformTags) {
    if (to_string(t) == name) return t;
  }
  throw ConfigError("unknown ss_transforms entry '" + name + "'");
}

TransformTag tag_of(const TransformKind& kind) {
  return static_cast<TransformTag>(kind.index());
}

void validate(const TransformKind& kind) {
  auto in = [](double v, double lo, double hi) { return v >= lo && v <= hi; };
  if (const auto* r = std::get_if<Rotate>(&kind)) {
    if (std::find(kRotations.begin(), kRotations.end(), r->degrees) == kRotations.end()) {
      throw DomainError("rotation angle must be one of +90, -90, 180");
    }
  } else if (const auto* c = std::get_if<CropResize>(&kind)) {
    if (!in(c->area, kMinArea, kMaxArea) || !in(c->aspect, kMinAspect, kMaxAspect) ||
        !in(c->offset_x, 0.0, 1.0) || !in(c->offset_y, 0.0, 1.0)) {
      throw DomainError("crop parameters out of range");
    }
  } else if (const auto* j = std::get_if<ColorJitter>(&kind)) {
    if (!in(j->brightness, kMinFactor, kMaxFactor) || !in(j->contrast, kMinFactor, kMaxFactor) ||
        !in(j->saturation, kMinFactor, kMaxFactor) || !in(j->hue, -kMaxHue, kMaxHue)) {
      throw DomainError("colour jitter parameters out of range");
    }
  }
}

std::array<double, 3> TransformPool::luma() const {
  return {luma_standard ? 0.299 : 0.229, 0.587, 0.114};
}

void TransformPool::validate() const {
  if (enabled.empty()) throw ConfigError("ss_transforms must enable at least one transform");
}

TransformKind sample_transform(Rng& rng, const TransformPool& pool) {
  pool.validate();
  const auto pick = rng.uniform_int(0, static_cast<std::int64_t>(pool.enabled.size()) - 1);
  switch (pool.enabled[static_cast<std::size_t>(pick)]) {
    case TransformTag::ColorDrop: return ColorDrop{};
    case TransformTag::Rotate: return Rotate{kRotations[static_cast<std::size_t>(rng.uniform_int(0, 2))]};
    case TransformTag::CropResize: {
      CropResize c;
      c.area = rng.uniform(kMinArea, kMaxArea);
      c.aspect = rng.uniform(kMinAspect, kMaxAspect);
      c.offset_y = rng.uniform();
      c.offset_x = rng.uniform();
      return c;
    }
    case TransformTag::ColorJitter: {
      ColorJitter j;
      j.brightness = rng.uniform(kMinFactor, kMaxFactor);
      j.contrast = rng.uniform(kMinFactor, kMaxFactor);
      j.saturation = rng.uniform(kMinFactor, kMaxFactor);
      j.hue = rng.uniform(-kMaxHue, kMaxHue);
      return j;
    }
  }
  throw ConfigError("unreachable transform tag");
}

data::Image resize_bilinear(const data::Image& image, int height, int width) {
  data::Image out(height, width, image.channels);
  const double sy = static_cast<double>(image.height) / height;
  const double sx = static_cast<double>(image.width) / width;
  for (int y = 0; y < height; ++y) {
    const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, image.height - 1.0);
    const int y0 = static_cast<int>(std::floor(fy));
    const int y1 = std::min(y0 + 1, image.height - 1);
    const double wy = fy - y0;
    for (int x = 0; x < width; ++x) {
      const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, image.width - 1.0);
      const int x0 = static_cast<int>(std::floor(fx));
      const int x1 = std::min(x0 + 1, image.width - 1);
      const double wx = fx - x0;
      for (int c = 0; c < image.channels; ++c) {
        const double top = image.at(y0, x0, c) * (1 - wx) + image.at(y0, x1, c) * wx;
        const double bot = image.at(y1, x0, c) * (1 - wx) + image.at(y1, x1, c) * wx;
        out.at(y, x, c) = static_cast<float>(top * (1 - wy) + bot * wy);
      }
    }
  }
  return out;
}

data::Image rotate_quarter_turns(const data::Image& image, int quarter_turns) {
  const int k = ((quarter_turns % 4) + 4) % 4;
  if (k == 0) return image;
  const int h = image.height, w = image.width;
  data::Image out = (k == 2) ? data::Image(h, w, image.channels) : data::Image(w, h, image.channels);
  for (int y = 0; y < out.height; ++y) {
    for (int x = 0; x < out.width; ++x) {
      int sy = 0, sx = 0;
      if (k == 1) {  // counter-clockwise
        sy = x;
        sx = w - 1 - y;
      } else if (k == 2) {
        sy = h - 1 - y;
        sx = w - 1 - x;
      } else {  // clockwise
        sy = h - 1 - x;
        sx = y;
      }
      for (int c = 0; c < image.channels; ++c) out.at(y, x, c) = image.at(sy, sx, c);
    }
  }
  return out;
}

data::Image apply_transform(const data::Image& image, const TransformKind& kind,
                            const TransformPool& pool) {
  validate(kind);
  return std::visit(
      [&](const auto& p) -> data::Image {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, ColorDrop>) {
          return color_drop(image, pool.luma());
        } else if constexpr (std::is_same_v<T, Rotate>) {
          data::Image rotated = rotate_quarter_turns(image, p.degrees / 90);
          if (!rotated.same_shape(image)) return resize_bilinear(rotated, image.height, image.width);
          return rotated;
        } else if constexpr (std::is_same_v<T, CropResize>) {
          return crop_resize(image, p);
        } else {
          return color_jitter(image, p, pool.luma());
        }
      },
      kind);
}

TransformedBatch make_transformed_batch(std::span<const data::Image> raw_images,
                                        const data::DatasetSpec& spec, Rng& rng,
                                        const TransformPool& pool) {
  if (raw_images.size() < 2) {
    throw DimensionError("transformed batch needs N >= 2, got " + std::to_string(raw_images.size()));
  }
  TransformedBatch out;
  std::vector<data::Image> normalized;
  normalized.reserve(raw_images.size());
  for (std::size_t i = 0; i < raw_images.size(); ++i) {
    TransformKind kind = sample_transform(rng, pool);
    normalized.push_back(data::normalize(apply_transform(raw_images[i], kind, pool), spec));
    out.kinds.push_back(kind);
    out.source_index.push_back(static_cast<std::int64_t>(i));
  }
  out.images = data::to_tensor(normalized);
  return out;
}

}  // namespace sskd::ss
