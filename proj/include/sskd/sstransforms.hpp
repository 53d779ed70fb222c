#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include <torch/torch.h>

#include "sskd/data.hpp"
#include "sskd/rng.hpp"

namespace sskd::ss {

enum class TransformTag { ColorDrop, Rotate, CropResize, ColorJitter };

inline constexpr std::array<TransformTag, 4> kAllTransformTags = {
    TransformTag::ColorDrop, TransformTag::Rotate, TransformTag::CropResize,
    TransformTag::ColorJitter};

std::string to_string(TransformTag tag);
// Accepts "color_drop", "rotate", "crop_resize", "color_jitter".
TransformTag parse_transform_tag(const std::string& name);

struct ColorDrop {};

struct Rotate {
  int degrees = 180;  // one of +90, -90, 180 (counter-clockwise positive)
};

struct CropResize {
  double area = 1.0;    // crop area as a fraction of the image, [0.08, 1]
  double aspect = 1.0;  // crop width / height, [3/4, 4/3]
  double offset_y = 0.0;  // position of the crop within the free slack, [0, 1]
  double offset_x = 0.0;
};

struct ColorJitter {
  double brightness = 1.0;  // [0.6, 1.4]
  double contrast = 1.0;    // [0.6, 1.4]
  double saturation = 1.0;  // [0.6, 1.4]
  double hue = 0.0;         // [-0.1, 0.1], fraction of a full hue turn
};

using TransformKind = std::variant<ColorDrop, Rotate, CropResize, ColorJitter>;

TransformTag tag_of(const TransformKind& kind);
// Throws DomainError when a parameter lies outside its closed range.
void validate(const TransformKind& kind);

struct TransformPool {
  std::vector<TransformTag> enabled{kAllTransformTags.begin(), kAllTransformTags.end()};
  // false: gray = 0.229 R + 0.587 G + 0.114 B (literal coefficients);
  // true:  gray = 0.299 R + 0.587 G + 0.114 B (ITU-R 601).
  bool luma_standard = false;

  std::array<double, 3> luma() const;
  void validate() const;
};

// Uniform over the enabled kinds, parameters uniform within their ranges.
TransformKind sample_transform(Rng& rng, const TransformPool& pool = {});

// Pure function of (image, kind). Expects a raw [0, 1] RGB image; the result
// stays in [0, 1] and has the input's size.
data::Image apply_transform(const data::Image& image, const TransformKind& kind,
                            const TransformPool& pool = {});

// Bilinear resize with half-pixel centres (edge-clamped).
data::Image resize_bilinear(const data::Image& image, int height, int width);
// Lossless rotation by a multiple of 90 degrees (counter-clockwise positive).
data::Image rotate_quarter_turns(const data::Image& image, int quarter_turns);

struct TransformedBatch {
  torch::Tensor images;                     // float32 (N, C, H, W), normalized
  std::vector<std::int64_t> source_index;   // source_index[i] == i
  std::vector<TransformKind> kinds;

  std::int64_t size() const { return static_cast<std::int64_t>(source_index.size()); }
};

// One independently drawn transform per raw (already standard-augmented)
// image, followed by normalization. Throws DimensionError when N < 2.
TransformedBatch make_transformed_batch(std::span<const data::Image> raw_images,
                                        const data::DatasetSpec& spec, Rng& rng,
                                        const TransformPool& pool = {});

}  // namespace sskd::ss
