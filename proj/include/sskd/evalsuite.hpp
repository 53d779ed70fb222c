#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "sskd/data.hpp"
#include "sskd/models.hpp"

namespace sskd::eval {

// Percentage of rows whose label is among the k largest logits. A class
// outranks the label when its logit is larger, or equal with a smaller index.
double top_k_accuracy(const torch::Tensor& logits, const torch::Tensor& labels, std::int64_t k);

// Normalized, unaugmented images of a dataset as one NCHW tensor.
torch::Tensor dataset_tensor(const data::Dataset& dataset);
torch::Tensor dataset_labels(const data::Dataset& dataset);

// Inference-mode passes in chunks; parameters are never touched.
torch::Tensor predict_logits(models::NetworkTriad& net, const torch::Tensor& images, std::int64_t chunk = 256);
torch::Tensor extract_features(models::NetworkTriad& net, const torch::Tensor& images, std::int64_t chunk = 256);

struct ProbeSchedule {
  int epochs = 100;
  double lr = 0.1;
  std::vector<int> decay_points = {60, 80};
  double decay_factor = 0.1;
  int batch_size = 128;
  double momentum = 0.9;
  double weight_decay = 0.0;
  std::uint64_t seed = 1;
};

struct ProbeResult {
  double accuracy = 0.0;
  std::string source;
  std::string target;
  std::uint64_t backbone_checksum = 0;
};

// Trains one linear layer (zero-initialised) on frozen backbone features.
// Throws InvariantViolation if the backbone checksum drifts.
ProbeResult linear_probe(models::NetworkTriad& net, const data::Dataset& train, const data::Dataset& test,
                         const ProbeSchedule& schedule, const std::string& source = "");

// mean_n KL(softmax(t_n) || softmax(s_n)) at temperature 1.
double teacher_student_kl(const torch::Tensor& teacher_logits, const torch::Tensor& student_logits);
double teacher_student_kl(models::NetworkTriad& teacher, models::NetworkTriad& student,
                          const data::Dataset& dataset);

// Linear CKA of two (M, D) feature matrices, computed in double precision.
double cka_similarity(const torch::Tensor& x, const torch::Tensor& y);

struct SimilarityReport {
  double kl_divergence = 0.0;
  double cka = 0.0;
  double kl_temperature = 1.0;
  std::string dataset;
  std::string feature_layer = "penultimate";
};

SimilarityReport similarity_report(models::NetworkTriad& teacher, models::NetworkTriad& student,
                                   const data::Dataset& dataset);

// Cosine correlation of the rows of a (C, D) weight matrix.
torch::Tensor weight_correlation(const torch::Tensor& weights);

struct CorrelationDifference {
  torch::Tensor difference;  // (C, C), float64, |corr_t - corr_s|
  double summary = 0.0;      // mean absolute difference
};

CorrelationDifference weight_correlation_difference(const torch::Tensor& teacher_weights,
                                                    const torch::Tensor& student_weights);

// Binary layout (little-endian):
//   char[8]  "SSKDFEAT"
//   uint32   version (1)
//   uint32   reserved (0)
//   uint64   M, uint64 D
//   float32  features[M * D], row-major
//   int64    labels[M]
inline constexpr char kFeatureMagic[8] = {'S', 'S', 'K', 'D', 'F', 'E', 'A', 'T'};
inline constexpr std::uint32_t kFeatureVersion = 1;

struct FeatureFile {
  torch::Tensor features;  // float32 (M, D)
  torch::Tensor labels;    // int64 (M)
};

void write_features(const std::filesystem::path& path, const torch::Tensor& features, const torch::Tensor& labels);
FeatureFile read_features(const std::filesystem::path& path);
void export_features(models::NetworkTriad& net, const data::Dataset& dataset, const std::filesystem::path& path);

// Structured text report: one "key=value" per line, and a two-column CSV.
using ReportEntries = std::vector<std::pair<std::string, std::string>>;
void write_report(const std::filesystem::path& stem, const ReportEntries& entries);

}  // namespace sskd::eval
