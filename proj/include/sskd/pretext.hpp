#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>

#include <torch/torch.h>

#include "sskd/data.hpp"
#include "sskd/rng.hpp"
#include "sskd/sstransforms.hpp"

namespace sskd::pretext {

enum class PretextKind { Contrastive, Exemplar, Jigsaw, Rotation };
enum class TransferPayload { ProbabilityMatrix, Logits };

inline constexpr std::int64_t kJigsawClasses = 24;  // 4! orderings of a 2x2 grid
inline constexpr std::int64_t kRotationClasses = 4;

PretextKind parse_pretext(const std::string& name);
std::string to_string(PretextKind kind);

struct PretextTask {
  PretextKind kind = PretextKind::Contrastive;
  std::int64_t head_arity = 128;
  TransferPayload payload = TransferPayload::ProbabilityMatrix;

  // latent_dim is used by Contrastive, exemplar_classes by Exemplar.
  static PretextTask make(PretextKind kind, std::int64_t latent_dim, std::int64_t exemplar_classes);
  void validate() const;
};

// Lehmer-code bijection between [0, 24) and permutations of {0, 1, 2, 3}.
std::array<int, 4> permutation_from_index(std::int64_t index);
std::int64_t permutation_index(const std::array<int, 4>& permutation);

// Splits the image into a 2x2 grid and writes patch permutation[k] into grid
// cell k (cells in row-major order). Odd sides are zero-padded to even before
// splitting and cropped back afterwards.
data::Image jigsaw(const data::Image& image, std::int64_t permutation);
// Undoes jigsaw() for even-sided images.
data::Image jigsaw_inverse(const data::Image& image, std::int64_t permutation);

// Builds one pretext input from a raw standard-augmented image; returns the
// input (raw, unnormalized) and writes its pretext label.
data::Image make_pretext_input(const data::Image& raw, std::int64_t dataset_index, PretextKind kind,
                               Rng& rng, const ss::TransformPool& pool, std::int64_t exemplar_classes,
                               std::int64_t& label);

struct PretextBatch {
  torch::Tensor inputs;  // float32 (N, C, H, W), normalized
  torch::Tensor labels;  // int64 (N)
};

// Throws ConfigError for PretextKind::Contrastive (built by the ss module).
PretextBatch make_pretext_batch(std::span<const data::Image> raw_images,
                                std::span<const std::int64_t> dataset_indices, PretextKind kind,
                                const data::DatasetSpec& spec, Rng& rng,
                                const ss::TransformPool& pool = {},
                                std::int64_t exemplar_classes = 1024);

// kd_loss form applied to self-supervision head logits.
torch::Tensor pretext_distill_loss(const torch::Tensor& teacher_logits,
                                   const torch::Tensor& student_logits, double tau);

}  // namespace sskd::pretext
