#include "sskd/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

#include "sskd/errors.hpp"
#include "sskd/synthetic.hpp"

namespace sskd::data {

namespace {

constexpr int kCifarSide = 32;
constexpr std::size_t kCifarImageBytes = 3 * kCifarSide * kCifarSide;
constexpr int kPad = 4;

struct RawSplit {
  std::vector<std::uint8_t> pixels;
  std::vector<std::int64_t> labels;
};

// CIFAR records store planar RGB; convert to interleaved HWC while reading.
void read_cifar_file(const std::filesystem::path& file, std::size_t label_bytes,
                     std::size_t label_offset, int num_classes, RawSplit& out) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw LoadError("cannot open dataset file: " + file.string());
  const std::size_t record = label_bytes + kCifarImageBytes;
  std::vector<std::uint8_t> buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (buf.empty() || buf.size() % record != 0) {
    throw LoadError("corrupt dataset file (size " + std::to_string(buf.size()) +
                    " is not a multiple of " + std::to_string(record) + "): " + file.string());
  }
  const std::size_t n = buf.size() / record;
  const std::size_t plane = kCifarSide * kCifarSide;
  for (std::size_t r = 0; r < n; ++r) {
    const std::uint8_t* rec = buf.data() + r * record;
    const int label = rec[label_offset];
    if (label >= num_classes) {
      throw LoadError("label " + std::to_string(label) + " out of range in " + file.string());
    }
    out.labels.push_back(label);
    const std::uint8_t* img = rec + label_bytes;
    for (std::size_t p = 0; p < plane; ++p) {
      for (std::size_t c = 0; c < 3; ++c) out.pixels.push_back(img[c * plane + p]);
    }
  }
}

Dataset make_dataset(const DatasetSpec& spec, RawSplit raw) {
  std::vector<std::int64_t> indices(raw.labels.size());
  std::iota(indices.begin(), indices.end(), 0);
  return Dataset(spec, spec.image_size, spec.image_size, spec.channels, std::move(raw.pixels),
                 std::move(raw.labels), std::move(indices));
}

void check_expected_size(const DatasetSpec& spec, Split split, std::size_t got,
                         const std::filesystem::path& where) {
  const std::int64_t expected = split == Split::Train ? spec.train_size : spec.test_size;
  if (expected > 0 && static_cast<std::int64_t>(got) != expected) {
    throw LoadError("expected " + std::to_string(expected) + " items but found " +
                    std::to_string(got) + " under " + where.string());
  }
}

}  // namespace

void DatasetSpec::validate() const {
  if (num_classes < 2) throw ConfigError("dataset.num_classes must be >= 2");
  if (image_size < 2) throw ConfigError("dataset.image_size must be >= 2");
  if (channels < 1) throw ConfigError("dataset.channels must be >= 1");
  if (static_cast<int>(channel_mean.size()) != channels ||
      static_cast<int>(channel_std.size()) != channels) {
    throw ConfigError("dataset.channel_mean/channel_std must have one entry per channel");
  }
  for (double s : channel_std) {
    if (!(s > 0.0)) throw ConfigError("dataset.channel_std entries must be strictly positive");
  }
}

DatasetSpec DatasetSpec::cifar10(std::filesystem::path root) {
  DatasetSpec s;
  s.name = "cifar10";
  s.root = std::move(root);
  s.num_classes = 10;
  s.train_size = 50000;
  s.test_size = 10000;
  return s;
}

DatasetSpec DatasetSpec::cifar100(std::filesystem::path root) {
  DatasetSpec s;
  s.name = "cifar100";
  s.root = std::move(root);
  s.num_classes = 100;
  s.train_size = 50000;
  s.test_size = 10000;
  s.channel_mean = {0.5071, 0.4865, 0.4409};
  s.channel_std = {0.2673, 0.2564, 0.2762};
  return s;
}

DatasetSpec DatasetSpec::synthetic(std::int64_t train_size, std::int64_t test_size,
                                   std::uint64_t seed) {
  DatasetSpec s;
  s.name = "synthetic";
  s.num_classes = kSyntheticClasses;
  s.train_size = train_size;
  s.test_size = test_size;
  s.generator_seed = seed;
  s.channel_mean = kSyntheticMean;
  s.channel_std = kSyntheticStd;
  return s;
}

Dataset::Dataset(DatasetSpec spec, int height, int width, int channels,
                 std::vector<std::uint8_t> pixels, std::vector<std::int64_t> labels,
                 std::vector<std::int64_t> indices)
    : spec_(std::move(spec)),
      height_(height),
      width_(width),
      channels_(channels),
      pixels_(std::move(pixels)),
      labels_(std::move(labels)),
      indices_(std::move(indices)) {
  const std::size_t per = static_cast<std::size_t>(height_) * width_ * channels_;
  if (pixels_.size() != per * labels_.size() || indices_.size() != labels_.size()) {
    throw DimensionError("dataset storage does not match its item count");
  }
}

std::span<const std::uint8_t> Dataset::raw_pixels(std::size_t i) const {
  const std::size_t per = static_cast<std::size_t>(height_) * width_ * channels_;
  return {pixels_.data() + i * per, per};
}

Image Dataset::image(std::size_t i) const {
  Image img(height_, width_, channels_);
  auto raw = raw_pixels(i);
  for (std::size_t k = 0; k < raw.size(); ++k) img.pixels[k] = raw[k] / 255.0f;
  return img;
}

Dataset Dataset::subset(std::span<const std::size_t> positions) const {
  const std::size_t per = static_cast<std::size_t>(height_) * width_ * channels_;
  std::vector<std::uint8_t> px;
  px.reserve(per * positions.size());
  std::vector<std::int64_t> labels, indices;
  labels.reserve(positions.size());
  indices.reserve(positions.size());
  for (std::size_t p : positions) {
    auto raw = raw_pixels(p);
    px.insert(px.end(), raw.begin(), raw.end());
    labels.push_back(labels_[p]);
    indices.push_back(indices_[p]);
  }
  return Dataset(spec_, height_, width_, channels_, std::move(px), std::move(labels),
                 std::move(indices));
}

Dataset Dataset::with_labels(std::vector<std::int64_t> labels) const {
  return Dataset(spec_, height_, width_, channels_, pixels_, std::move(labels), indices_);
}

Dataset load_dataset(const DatasetSpec& spec, Split split) {
  spec.validate();
  if (spec.name == "synthetic") return generate_synthetic(spec, split);

  if (spec.root.empty()) throw LoadError("dataset root path is empty for '" + spec.name + "'");
  if (!std::filesystem::is_directory(spec.root)) {
    throw LoadError("dataset root is not a directory: " + spec.root.string());
  }
  if (spec.image_size != kCifarSide || spec.channels != 3) {
    throw ConfigError("CIFAR datasets are 32x32 RGB");
  }

  RawSplit raw;
  if (spec.name == "cifar10") {
    if (split == Split::Train) {
      for (int b = 1; b <= 5; ++b) {
        read_cifar_file(spec.root / ("data_batch_" + std::to_string(b) + ".bin"), 1, 0,
                        spec.num_classes, raw);
      }
    } else {
      read_cifar_file(spec.root / "test_batch.bin", 1, 0, spec.num_classes, raw);
    }
  } else if (spec.name == "cifar100") {
    // Record: coarse label, fine label, pixels. Fine labels are used.
    read_cifar_file(spec.root / (split == Split::Train ? "train.bin" : "test.bin"), 2, 1,
                    spec.num_classes, raw);
  } else {
    throw ConfigError("unknown dataset name '" + spec.name + "'");
  }
  check_expected_size(spec, split, raw.labels.size(), spec.root);
  return make_dataset(spec, std::move(raw));
}

void write_cifar10_binary(const Dataset& dataset, const std::filesystem::path& file) {
  if (dataset.height() != kCifarSide || dataset.width() != kCifarSide || dataset.channels() != 3) {
    throw ConfigError("CIFAR-10 binary layout needs 32x32 RGB images");
  }
  std::ofstream out(file, std::ios::binary);
  if (!out) throw IoError("cannot write " + file.string());
  const std::size_t plane = kCifarSide * kCifarSide;
  std::vector<char> rec(1 + kCifarImageBytes);
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    rec[0] = static_cast<char>(dataset.label(i));
    auto px = dataset.raw_pixels(i);
    for (std::size_t p = 0; p < plane; ++p) {
      for (std::size_t c = 0; c < 3; ++c) rec[1 + c * plane + p] = static_cast<char>(px[p * 3 + c]);
    }
    out.write(rec.data(), static_cast<std::streamsize>(rec.size()));
  }
  if (!out) throw IoError("write failed: " + file.string());
}

std::pair<std::vector<double>, std::vector<double>> channel_statistics(const Dataset& dataset) {
  const int c = dataset.channels();
  std::vector<double> sum(c, 0.0), sq(c, 0.0);
  std::size_t count = 0;
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    auto px = dataset.raw_pixels(i);
    for (std::size_t k = 0; k < px.size(); ++k) {
      const double v = px[k] / 255.0;
      sum[k % c] += v;
      sq[k % c] += v * v;
    }
    count += px.size() / c;
  }
  std::vector<double> mean(c), stdev(c);
  for (int ch = 0; ch < c; ++ch) {
    mean[ch] = sum[ch] / static_cast<double>(count);
    stdev[ch] = std::sqrt(std::max(0.0, sq[ch] / static_cast<double>(count) - mean[ch] * mean[ch]));
  }
  return {mean, stdev};
}

Image augment_raw(const Image& image, Rng& rng) {
  const std::int64_t dy = rng.uniform_int(0, 2 * kPad);
  const std::int64_t dx = rng.uniform_int(0, 2 * kPad);
  const bool flip = rng.uniform() < 0.5;
  Image out(image.height, image.width, image.channels);
  for (int y = 0; y < image.height; ++y) {
    const int sy = y + static_cast<int>(dy) - kPad;
    if (sy < 0 || sy >= image.height) continue;
    for (int x = 0; x < image.width; ++x) {
      const int cx = flip ? image.width - 1 - x : x;
      const int sx = cx + static_cast<int>(dx) - kPad;
      if (sx < 0 || sx >= image.width) continue;
      for (int c = 0; c < image.channels; ++c) out.at(y, x, c) = image.at(sy, sx, c);
    }
  }
  return out;
}

Image normalize(const Image& image, const DatasetSpec& spec) {
  if (static_cast<int>(spec.channel_mean.size()) != image.channels) {
    throw DimensionError("normalize: spec has " + std::to_string(spec.channel_mean.size()) +
                         " channels, image has " + std::to_string(image.channels));
  }
  Image out = image;
  for (std::size_t k = 0; k < out.pixels.size(); ++k) {
    const std::size_t c = k % image.channels;
    out.pixels[k] = static_cast<float>((image.pixels[k] - spec.channel_mean[c]) / spec.channel_std[c]);
  }
  return out;
}

Image standard_augment(const Image& image, const DatasetSpec& spec, Rng& rng) {
  return normalize(augment_raw(image, rng), spec);
}

void CorruptionSpec::validate() const {
  if (!(few_shot_fraction > 0.0 && few_shot_fraction <= 1.0)) {
    throw ConfigError("corruption.few_shot_fraction must lie in (0, 1]");
  }
  if (!(noise_fraction >= 0.0 && noise_fraction <= 1.0)) {
    throw ConfigError("corruption.noise_fraction must lie in [0, 1]");
  }
}

Dataset make_few_shot(const Dataset& train, double fraction, Rng& rng) {
  if (!(fraction > 0.0 && fraction <= 1.0)) {
    throw ConfigError("few-shot fraction must lie in (0, 1], got " + std::to_string(fraction));
  }
  if (fraction == 1.0) return train;
  std::map<std::int64_t, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < train.size(); ++i) by_class[train.label(i)].push_back(i);
  std::vector<std::size_t> keep;
  for (auto& [label, members] : by_class) {
    const auto want = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::floor(fraction * static_cast<double>(members.size()))));
    std::shuffle(members.begin(), members.end(), rng.engine());
    keep.insert(keep.end(), members.begin(), members.begin() + static_cast<std::ptrdiff_t>(want));
  }
  std::sort(keep.begin(), keep.end());
  return train.subset(keep);
}

LabelCorruption perturb_labels(const Dataset& train, double fraction, Rng& rng) {
  if (!(fraction >= 0.0 && fraction <= 1.0)) {
    throw ConfigError("label-noise fraction must lie in [0, 1], got " + std::to_string(fraction));
  }
  const std::size_t n = train.size();
  const auto count = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(n)));
  LabelCorruption result{train, {}};
  if (count == 0) return result;

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng.engine());
  order.resize(count);
  std::sort(order.begin(), order.end());

  std::vector<std::int64_t> labels = train.labels();
  const std::int64_t classes = train.num_classes();
  for (std::size_t pos : order) {
    // Uniform over the C - 1 other classes: draw in [0, C-2] and skip the original.
    std::int64_t draw = rng.uniform_int(0, classes - 2);
    if (draw >= labels[pos]) ++draw;
    labels[pos] = draw;
    result.audit.emplace_back(train.index(pos), draw);
  }
  result.data = train.with_labels(std::move(labels));
  return result;
}

void write_corruption_audit(const std::filesystem::path& file,
                            const std::vector<std::pair<std::int64_t, std::int64_t>>& audit) {
  std::ofstream out(file);
  if (!out) throw IoError("cannot write corruption audit: " + file.string());
  for (const auto& [index, label] : audit) out << index << ' ' << label << '\n';
  if (!out) throw IoError("write failed: " + file.string());
}

LabelCorruption apply_corruption(const Dataset& train, const CorruptionSpec& spec) {
  spec.validate();
  Rng few_rng(derive_seed(spec.seed, "few-shot"));
  Dataset subset = make_few_shot(train, spec.few_shot_fraction, few_rng);
  Rng noise_rng(derive_seed(spec.seed, "label-noise"));
  return perturb_labels(subset, spec.noise_fraction, noise_rng);
}

void ImageBatch::validate(std::int64_t num_classes) const {
  if (!images.defined() || images.dim() != 4) throw DimensionError("ImageBatch images must be NCHW");
  if (size() < 2) throw DimensionError("ImageBatch needs at least 2 items, got " + std::to_string(size()));
  if (images.size(0) != size() || static_cast<std::int64_t>(indices.size()) != size()) {
    throw DimensionError("ImageBatch images/labels/indices disagree on batch size");
  }
  if (labels.min().item<std::int64_t>() < 0 || labels.max().item<std::int64_t>() >= num_classes) {
    throw DomainError("ImageBatch labels outside [0, " + std::to_string(num_classes) + ")");
  }
  if (!torch::isfinite(images).all().item<bool>()) throw NumericError("ImageBatch images not finite");
}

torch::Tensor to_tensor(std::span<const Image> images) {
  if (images.empty()) throw DimensionError("to_tensor: empty image list");
  const Image& first = images.front();
  auto out = torch::empty({static_cast<std::int64_t>(images.size()), first.channels, first.height,
                           first.width},
                          torch::kFloat32);
  float* dst = out.data_ptr<float>();
  const std::size_t plane = static_cast<std::size_t>(first.height) * first.width;
  for (std::size_t n = 0; n < images.size(); ++n) {
    const Image& img = images[n];
    if (!img.same_shape(first)) throw DimensionError("to_tensor: images differ in shape");
    float* base = dst + n * plane * first.channels;
    for (std::size_t p = 0; p < plane; ++p) {
      for (int c = 0; c < first.channels; ++c) base[c * plane + p] = img.pixels[p * first.channels + c];
    }
  }
  return out;
}

}  // namespace sskd::data
