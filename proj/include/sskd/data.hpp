#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <torch/torch.h>

#include "sskd/rng.hpp"

namespace sskd::data {

struct DatasetSpec {
  // "cifar10", "cifar100" or "synthetic".
  std::string name = "synthetic";
  std::filesystem::path root;
  int num_classes = 10;
  int image_size = 32;
  int channels = 3;
  // Expected split sizes. For the synthetic generator these are the sizes
  // produced; for file-backed datasets 0 means "whatever the files hold".
  std::int64_t train_size = 5000;
  std::int64_t test_size = 2000;
  // Seed of the synthetic generator; ignored by file-backed datasets.
  std::uint64_t generator_seed = 20200707;
  std::vector<double> channel_mean = {0.4914, 0.4822, 0.4465};
  std::vector<double> channel_std = {0.2470, 0.2435, 0.2616};

  // Throws ConfigError when mean/std do not match the channel count or a std
  // entry is not strictly positive.
  void validate() const;

  static DatasetSpec cifar10(std::filesystem::path root);
  static DatasetSpec cifar100(std::filesystem::path root);
  static DatasetSpec synthetic(std::int64_t train_size, std::int64_t test_size,
                               std::uint64_t seed = 20200707);
};

enum class Split { Train, Test };

// Single image, interleaved HWC float storage. Raw images hold values in
// [0, 1]; normalize() produces the per-channel standardized version.
struct Image {
  int height = 0;
  int width = 0;
  int channels = 0;
  std::vector<float> pixels;

  Image() = default;
  Image(int h, int w, int c, float fill = 0.0f)
      : height(h), width(w), channels(c), pixels(static_cast<std::size_t>(h) * w * c, fill) {}

  float& at(int y, int x, int c) {
    return pixels[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
  float at(int y, int x, int c) const {
    return pixels[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
  bool same_shape(const Image& other) const {
    return height == other.height && width == other.width && channels == other.channels;
  }
};

// Immutable image collection. Pixels are kept as bytes (HWC per image).
class Dataset {
 public:
  Dataset() = default;
  Dataset(DatasetSpec spec, int height, int width, int channels, std::vector<std::uint8_t> pixels,
          std::vector<std::int64_t> labels, std::vector<std::int64_t> indices);

  const DatasetSpec& spec() const { return spec_; }
  std::size_t size() const { return labels_.size(); }
  int height() const { return height_; }
  int width() const { return width_; }
  int channels() const { return channels_; }
  std::int64_t num_classes() const { return spec_.num_classes; }

  std::int64_t label(std::size_t i) const { return labels_[i]; }
  // Position of item i in the original (uncorrupted, unsampled) split.
  std::int64_t index(std::size_t i) const { return indices_[i]; }
  const std::vector<std::int64_t>& labels() const { return labels_; }
  const std::vector<std::int64_t>& indices() const { return indices_; }
  std::span<const std::uint8_t> raw_pixels(std::size_t i) const;
  // Raw image scaled to [0, 1].
  Image image(std::size_t i) const;

  // Subset by item position (not dataset index), preserving order.
  Dataset subset(std::span<const std::size_t> positions) const;
  Dataset with_labels(std::vector<std::int64_t> labels) const;

 private:
  DatasetSpec spec_;
  int height_ = 0;
  int width_ = 0;
  int channels_ = 0;
  std::vector<std::uint8_t> pixels_;
  std::vector<std::int64_t> labels_;
  std::vector<std::int64_t> indices_;
};

// Loads a split; items are ordered by dataset index. Throws LoadError naming
// the offending path when files are missing, truncated or carry bad labels.
Dataset load_dataset(const DatasetSpec& spec, Split split);

// Writes a dataset in the CIFAR-10 binary record layout (label byte followed
// by the R, G and B planes). Used to materialize the synthetic set on disk.
void write_cifar10_binary(const Dataset& dataset, const std::filesystem::path& file);

// Per-channel mean and std over a whole dataset, in [0, 1] pixel units.
std::pair<std::vector<double>, std::vector<double>> channel_statistics(const Dataset& dataset);

// Pad by 4 with zeros, random crop back to the original size, horizontal flip
// with probability 0.5. Draw order: crop row offset, crop column offset, flip.
Image augment_raw(const Image& image, Rng& rng);
Image normalize(const Image& image, const DatasetSpec& spec);
// augment_raw followed by normalize.
Image standard_augment(const Image& image, const DatasetSpec& spec, Rng& rng);

struct CorruptionSpec {
  double few_shot_fraction = 1.0;
  double noise_fraction = 0.0;
  std::uint64_t seed = 0;

  void validate() const;
};

// Per-class stratified sample of floor(fraction * class_count) items (at
// least one per non-empty class). Order by dataset index is preserved.
Dataset make_few_shot(const Dataset& train, double fraction, Rng& rng);

struct LabelCorruption {
  Dataset data;
  // (dataset index, new label) for every corrupted item, sorted by index.
  std::vector<std::pair<std::int64_t, std::int64_t>> audit;
};

// Relabels exactly floor(fraction * N) items chosen without replacement; each
// new label is uniform over the other C - 1 classes.
LabelCorruption perturb_labels(const Dataset& train, double fraction, Rng& rng);

// Two-column text file: "index new_label" per line.
void write_corruption_audit(const std::filesystem::path& file,
                            const std::vector<std::pair<std::int64_t, std::int64_t>>& audit);

// Applies few-shot sampling then label noise, each from its own stream of
// spec.seed.
LabelCorruption apply_corruption(const Dataset& train, const CorruptionSpec& spec);

// Batch of normalized images in NCHW layout.
struct ImageBatch {
  torch::Tensor images;  // float32 (N, C, H, W)
  torch::Tensor labels;  // int64 (N)
  std::vector<std::int64_t> indices;

  std::int64_t size() const { return labels.defined() ? labels.size(0) : 0; }
  // Throws DimensionError / DomainError / NumericError on a broken invariant.
  void validate(std::int64_t num_classes) const;
};

// Stacks HWC images into an NCHW float tensor.
torch::Tensor to_tensor(std::span<const Image> images);

}  // namespace sskd::data
