#include "sskd/pretext.hpp"

#include <algorithm>
#include <vector>

#include "sskd/errors.hpp"
#include "sskd/losses.hpp"

namespace sskd::pretext {

namespace {

constexpr std::array<std::int64_t, 4> kFactorial = {1, 1, 2, 6};

data::Image pad_to_even(const data::Image& image) {
  const int h = image.height + (image.height % 2);
  const int w = image.width + (image.width % 2);
  if (h == image.height && w == image.width) return image;
  data::Image out(h, w, image.channels);
  for (int y = 0; y < image.height; ++y) {
    for (int x = 0; x < image.width; ++x) {
      for (int c = 0; c < image.channels; ++c) out.at(y, x, c) = image.at(y, x, c);
    }
  }
  return out;
}

// Copies grid cell `from` of src into grid cell `to` of dst (2x2 grid).
void copy_cell(const data::Image& src, int from, data::Image& dst, int to) {
  const int ph = src.height / 2, pw = src.width / 2;
  const int sy = (from / 2) * ph, sx = (from % 2) * pw;
  const int dy = (to / 2) * ph, dx = (to % 2) * pw;
  for (int y = 0; y < ph; ++y) {
    for (int x = 0; x < pw; ++x) {
      for (int c = 0; c < src.channels; ++c) dst.at(dy + y, dx + x, c) = src.at(sy + y, sx + x, c);
    }
  }
}

data::Image crop_to(const data::Image& image, int height, int width) {
  if (image.height == height && image.width == width) return image;
  data::Image out(height, width, image.channels);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      for (int c = 0; c < image.channels; ++c) out.at(y, x, c) = image.at(y, x, c);
    }
  }
  return out;
}

}  // namespace

PretextKind parse_pretext(const std::string& name) {
  if (name == "contrastive") return PretextKind::Contrastive;
  if (name == "exemplar") return PretextKind::Exemplar;
  if (name == "jigsaw") return PretextKind::Jigsaw;
  if (name == "rotation") return PretextKind::Rotation;
  throw ConfigError("pretext must be contrastive|exemplar|jigsaw|rotation, got '" + name + "'");
}

std::string to_string(PretextKind kind) {
  switch (kind) {
    case PretextKind::Contrastive: return "contrastive";
    case PretextKind::Exemplar: return "exemplar";
    case PretextKind::Jigsaw: return "jigsaw";
    case PretextKind::Rotation: return "rotation";
  }
  return "unknown";
}

PretextTask PretextTask::make(PretextKind kind, std::int64_t latent_dim, std::int64_t exemplar_classes) {
  PretextTask t;
  t.kind = kind;
  switch (kind) {
    case PretextKind::Contrastive:
      t.head_arity = latent_dim;
      t.payload = TransferPayload::ProbabilityMatrix;
      break;
    case PretextKind::Exemplar:
      t.head_arity = exemplar_classes;
      t.payload = TransferPayload::Logits;
      break;
    case PretextKind::Jigsaw:
      t.head_arity = kJigsawClasses;
      t.payload = TransferPayload::Logits;
      break;
    case PretextKind::Rotation:
      t.head_arity = kRotationClasses;
      t.payload = TransferPayload::Logits;
      break;
  }
  t.validate();
  return t;
}

void PretextTask::validate() const {
  if (head_arity < 1) throw ConfigError("pretext head arity must be positive");
  if (kind == PretextKind::Jigsaw && head_arity != kJigsawClasses) {
    throw ConfigError("jigsaw head must have exactly 24 outputs");
  }
  if (kind == PretextKind::Rotation && head_arity != kRotationClasses) {
    throw ConfigError("rotation head must have exactly 4 outputs");
  }
  if (kind == PretextKind::Exemplar && head_arity < 2) {
    throw ConfigError("exemplar head needs at least 2 classes");
  }
}

std::array<int, 4> permutation_from_index(std::int64_t index) {
  if (index < 0 || index >= kJigsawClasses) {
    throw DomainError("permutation index must lie in [0, 24), got " + std::to_string(index));
  }
  std::vector<int> pool = {0, 1, 2, 3};
  std::array<int, 4> perm{};
  for (int pos = 0; pos < 4; ++pos) {
    const std::int64_t f = kFactorial[3 - pos];
    const auto digit = static_cast<std::size_t>(index / f);
    index %= f;
    perm[pos] = pool[digit];
    pool.erase(pool.begin() + static_cast<std::ptrdiff_t>(digit));
  }
  return perm;
}

std::int64_t permutation_index(const std::array<int, 4>& permutation) {
  std::int64_t index = 0;
  for (int pos = 0; pos < 4; ++pos) {
    if (permutation[pos] < 0 || permutation[pos] > 3) throw DomainError("not a permutation of {0,1,2,3}");
    int smaller_after = 0;
    for (int j = pos + 1; j < 4; ++j) {
      if (permutation[j] == permutation[pos]) throw DomainError("not a permutation of {0,1,2,3}");
      if (permutation[j] < permutation[pos]) ++smaller_after;
    }
    index += smaller_after * kFactorial[3 - pos];
  }
  return index;
}

data::Image jigsaw(const data::Image& image, std::int64_t permutation) {
  const auto perm = permutation_from_index(permutation);
  const data::Image padded = pad_to_even(image);
  data::Image out(padded.height, padded.width, padded.channels);
  for (int cell = 0; cell < 4; ++cell) copy_cell(padded, perm[cell], out, cell);
  return crop_to(out, image.height, image.width);
}

data::Image jigsaw_inverse(const data::Image& image, std::int64_t permutation) {
  if (image.height % 2 || image.width % 2) throw DimensionError("jigsaw_inverse needs even sides");
  const auto perm = permutation_from_index(permutation);
  data::Image out(image.height, image.width, image.channels);
  for (int cell = 0; cell < 4; ++cell) copy_cell(image, cell, out, perm[cell]);
  return out;
}

data::Image make_pretext_input(const data::Image& raw, std::int64_t dataset_index, PretextKind kind,
                               Rng& rng, const ss::TransformPool& pool, std::int64_t exemplar_classes,
                               std::int64_t& label) {
  switch (kind) {
    case PretextKind::Rotation: {
      label = rng.uniform_int(0, kRotationClasses - 1);
      data::Image rotated = ss::rotate_quarter_turns(raw, static_cast<int>(label));
      if (!rotated.same_shape(raw)) rotated = ss::resize_bilinear(rotated, raw.height, raw.width);
      return rotated;
    }
    case PretextKind::Jigsaw:
      label = rng.uniform_int(0, kJigsawClasses - 1);
      return jigsaw(raw, label);
    case PretextKind::Exemplar: {
      if (exemplar_classes < 2) throw ConfigError("exemplar_classes must be >= 2");
      label = dataset_index % exemplar_classes;
      return ss::apply_transform(raw, ss::sample_transform(rng, pool), pool);
    }
    case PretextKind::Contrastive: break;
  }
  throw ConfigError("contrastive inputs are built by make_transformed_batch");
}

PretextBatch make_pretext_batch(std::span<const data::Image> raw_images,
                                std::span<const std::int64_t> dataset_indices, PretextKind kind,
                                const data::DatasetSpec& spec, Rng& rng, const ss::TransformPool& pool,
                                std::int64_t exemplar_classes) {
  if (kind == PretextKind::Contrastive) {
    throw ConfigError("contrastive inputs are built by make_transformed_batch");
  }
  if (raw_images.size() != dataset_indices.size()) {
    throw DimensionError("make_pretext_batch: images and indices differ in length");
  }
  std::vector<data::Image> inputs;
  inputs.reserve(raw_images.size());
  auto labels = torch::empty({static_cast<std::int64_t>(raw_images.size())}, torch::kInt64);
  for (std::size_t i = 0; i < raw_images.size(); ++i) {
    std::int64_t label = 0;
    inputs.push_back(data::normalize(
        make_pretext_input(raw_images[i], dataset_indices[i], kind, rng, pool, exemplar_classes, label), spec));
    labels[static_cast<std::int64_t>(i)] = label;
  }
  return {data::to_tensor(inputs), labels};
}

torch::Tensor pretext_distill_loss(const torch::Tensor& teacher_logits,
                                   const torch::Tensor& student_logits, double tau) {
  return losses::kd_loss(teacher_logits, student_logits, tau);
}

}  // namespace sskd::pretext
