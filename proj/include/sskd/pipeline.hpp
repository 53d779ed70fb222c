#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "sskd/data.hpp"
#include "sskd/losses.hpp"
#include "sskd/models.hpp"
#include "sskd/pretext.hpp"
#include "sskd/sstransforms.hpp"

namespace sskd::pipeline {

struct TrainSchedule {
  int epochs = 240;
  double lr_init = 0.05;
  // 0-based epoch indices at which the learning rate is multiplied by the factor.
  std::vector<int> lr_decay_points = {150, 180, 210};
  double lr_decay_factor = 0.1;
  int batch_size = 64;
  double weight_decay = 5e-4;
  double momentum = 0.9;
  std::uint64_t seed = 1;

  void validate() const;
  // lr_init * factor^(number of decay points <= epoch).
  double lr_at(int epoch) const;
};

struct EpochMetrics {
  int epoch = 0;
  double lr = 0.0;
  double l_ce = 0.0;
  double l_kd = 0.0;
  double l_ss = 0.0;
  double l_t = 0.0;
  double total = 0.0;
  double test_acc = 0.0;
};

struct RunRecord {
  std::string method;
  std::vector<EpochMetrics> epochs;
  std::vector<std::string> checkpoints;
  double wall_seconds = 0.0;
  // Held-out self-supervision top-1 accuracy (%), teacher stage 2 only.
  double ss_accuracy = -1.0;

  double final_accuracy() const { return epochs.empty() ? 0.0 : epochs.back().test_acc; }
};

inline constexpr const char* kRecordHeader = "epoch,lr,l_ce,l_kd,l_ss,l_t,total,test_acc";

std::string to_csv_row(const EpochMetrics& m);
void write_record_csv(const RunRecord& record, const std::filesystem::path& file);
std::vector<EpochMetrics> read_record_csv(const std::filesystem::path& file);

struct StepLog {
  std::int64_t step = 0;
  int epoch = 0;
  double lr = 0.0;
  double l_ce = 0.0;
  double l_kd = 0.0;
  double l_ss = 0.0;
  double l_t = 0.0;
  double total = 0.0;
  std::size_t batch = 0;
  std::size_t selected = 0;  // rows kept by the transfer mask
};

using StepObserver = std::function<void(const StepLog&)>;

struct TrainOptions {
  // Empty: nothing is written to disk.
  std::filesystem::path run_dir;
  int ckpt_every = 0;
  // Continue from run_dir/resume.json when present.
  bool resume = false;
  int loader_workers = 1;
  ss::TransformPool pool;
  StepObserver on_step;
  // Stop after this many optimizer steps (0 = run the whole schedule).
  std::int64_t max_steps = 0;
  bool evaluate = true;
  bool verbose = false;
};

// Train/test splits plus a cached normalized copy of the test images.
class DataBundle {
 public:
  DataBundle(data::Dataset train, data::Dataset test);

  const data::Dataset& train() const { return train_; }
  const data::Dataset& test() const { return test_; }
  const torch::Tensor& test_images() const { return test_images_; }
  const torch::Tensor& test_labels() const { return test_labels_; }
  std::int64_t num_classes() const { return train_.num_classes(); }

 private:
  data::Dataset train_;
  data::Dataset test_;
  torch::Tensor test_images_;
  torch::Tensor test_labels_;
};

// Everything one optimizer step consumes.
struct StepViews {
  data::ImageBatch normal;
  torch::Tensor transformed;  // empty unless requested
  std::vector<ss::TransformKind> kinds;
  pretext::PretextBatch pretext;  // empty unless requested
};

struct ViewRequest {
  bool augment = true;
  bool transformed = false;
  pretext::PretextKind pretext = pretext::PretextKind::Contrastive;  // Contrastive = none
  std::int64_t exemplar_classes = 1024;
};

// Deterministic mini-batch producer. Every random draw for a sample comes
// from a stream keyed by (seed, epoch, dataset index), so the output does
// not depend on the number of loader workers.
class BatchSource {
 public:
  BatchSource(const data::Dataset& dataset, std::uint64_t seed, int batch_size, int workers = 1,
              ss::TransformPool pool = {});

  // Shuffled positions split into batches; a trailing batch smaller than 2 is dropped.
  std::vector<std::vector<std::size_t>> epoch_batches(int epoch) const;
  StepViews make(int epoch, const std::vector<std::size_t>& positions, const ViewRequest& request) const;

 private:
  const data::Dataset& dataset_;
  std::uint64_t seed_;
  int batch_size_;
  int workers_;
  ss::TransformPool pool_;
};

// Only backbone and classifier are updated; cross-entropy on normal data only.
RunRecord train_teacher_stage1(models::NetworkTriad& net, const DataBundle& data,
                               const TrainSchedule& schedule, const TrainOptions& options = {});

struct Stage2Config {
  pretext::PretextKind pretext = pretext::PretextKind::Contrastive;
  double tau = 0.5;
  std::int64_t exemplar_classes = 1024;
};

// Freezes backbone and classifier and fits the self-supervision head. Throws
// InvariantViolation if any backbone/classifier parameter moved.
RunRecord train_teacher_stage2(models::NetworkTriad& net, const DataBundle& data,
                               const TrainSchedule& schedule, const Stage2Config& config = {},
                               const TrainOptions& options = {});

// Held-out self-supervision top-1 accuracy (%) of a network's head.
double self_supervision_accuracy(models::NetworkTriad& net, const data::Dataset& dataset,
                                 const Stage2Config& config, int batch_size, std::uint64_t seed,
                                 const ss::TransformPool& pool = {});

struct StudentConfig {
  losses::LossWeights weights;
  losses::Temperatures temps;
  double k_percent = 75.0;
  bool select_on_lt = false;
  pretext::PretextKind pretext = pretext::PretextKind::Contrastive;
  std::int64_t exemplar_classes = 1024;
  std::string method = "sskd";

  void validate() const;
};

// Student training with the four-term objective. When both ss and t weights
// are zero the transformed branch is skipped entirely.
RunRecord train_student(models::NetworkTriad& student, models::NetworkTriad& teacher,
                        const DataBundle& data, const TrainSchedule& schedule,
                        const StudentConfig& config, const TrainOptions& options = {});

// Conventional distillation: weights.ce * L_ce + weights.kd * L_kd on normal
// data only, written without any self-supervision code path.
RunRecord distill_baseline_kd(models::NetworkTriad& student, models::NetworkTriad& teacher,
                              const DataBundle& data, const TrainSchedule& schedule,
                              const losses::LossWeights& weights, double tau,
                              const TrainOptions& options = {});

// Top-1 accuracy (%) on the cached test split, evaluated in inference mode.
double test_accuracy(models::NetworkTriad& net, const DataBundle& data);

// Seeds torch and constructs the network, so initial weights are a function
// of (spec, seed).
models::NetworkTriad make_triad(const models::TriadSpec& spec, std::uint64_t seed);

}  // namespace sskd::pipeline
