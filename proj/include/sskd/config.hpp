#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "sskd/data.hpp"
#include "sskd/evalsuite.hpp"
#include "sskd/losses.hpp"
#include "sskd/models.hpp"
#include "sskd/pipeline.hpp"
#include "sskd/pretext.hpp"
#include "sskd/sstransforms.hpp"

namespace sskd::config {

inline constexpr const char* kRecipes[] = {"teacher-s1",   "teacher-s2",    "student-sskd", "student-kd",
                                           "eval",         "ablate-k",      "fewshot-sweep", "noise-sweep"};

struct NetworkConfig {
  std::string backbone;
  int head_hidden = 0;
  int head_out = 128;
  // Teacher only: stage-1 weights consumed by teacher-s2, and the finished
  // two-stage teacher consumed by student recipes. Empty = <output_dir>/teacher_s1.pt
  // and <output_dir>/teacher.pt respectively.
  std::filesystem::path stage1_checkpoint;
  std::filesystem::path checkpoint;
};

inline NetworkConfig network(std::string backbone) {
  NetworkConfig n;
  n.backbone = std::move(backbone);
  return n;
}

struct SweepConfig {
  std::vector<double> k_values = {0, 25, 50, 75, 100};
  std::vector<double> fractions = {0.25, 0.5, 0.75, 1.0};
  std::vector<double> noise = {0.0, 0.1, 0.3, 0.5};
  std::vector<std::uint64_t> seeds = {1};
  // Methods compared by the robustness sweeps.
  std::vector<std::string> methods = {"kd", "sskd"};
  // >1 runs that many sweep members as parallel child processes.
  int jobs = 1;
  // Where member runs live; empty = output_dir. Sweeps sharing this directory
  // reuse each other's identical members.
  std::filesystem::path member_dir;
};

struct EvalConfig {
  std::filesystem::path student_checkpoint;
  // Linear probe target; empty name = skip the probe.
  std::string probe_dataset;
  std::filesystem::path probe_root;
  eval::ProbeSchedule probe;
  bool export_features = true;
};

struct RuntimeConfig {
  int loader_workers = 1;
  int threads = 0;  // 0 = libtorch default
  int ckpt_every = 0;
  bool resume = false;
  bool verbose = false;
  bool evaluate_every_epoch = true;
};

struct ExperimentConfig {
  std::string recipe = "student-sskd";
  std::uint64_t seed = 1;
  std::filesystem::path output_dir = "runs/default";
  data::DatasetSpec dataset = data::DatasetSpec::cifar100("data/cifar-100-binary");
  data::CorruptionSpec corruption;
  NetworkConfig teacher = network("vgg:13");
  NetworkConfig student = network("vgg:8");
  pipeline::TrainSchedule teacher_schedule;
  pipeline::TrainSchedule stage2_schedule = default_stage2();
  pipeline::TrainSchedule student_schedule;
  losses::LossWeights weights;
  losses::Temperatures temps;
  double k_percent = 75.0;
  bool select_on_lt = false;
  pretext::PretextKind pretext = pretext::PretextKind::Contrastive;
  std::int64_t exemplar_classes = 1024;
  ss::TransformPool transforms;
  SweepConfig sweep;
  EvalConfig evaluation;
  RuntimeConfig runtime;

  static pipeline::TrainSchedule default_stage2();

  // Every nested invariant; messages name the offending field.
  void validate() const;
  models::TriadSpec teacher_spec() const;
  models::TriadSpec student_spec() const;
  std::filesystem::path teacher_stage1_path() const;
  std::filesystem::path teacher_path() const;
  pipeline::StudentConfig student_config() const;
};

nlohmann::json to_json(const ExperimentConfig& config);
// Unknown keys and wrong types raise ConfigError naming the field.
ExperimentConfig from_json(const nlohmann::json& j);
ExperimentConfig load_config(const std::filesystem::path& file);
void save_config(const ExperimentConfig& config, const std::filesystem::path& file);

// Applies "a.b.c=value" to a JSON document. The value is parsed as JSON when
// possible and taken as a plain string otherwise.
void apply_override(nlohmann::json& j, const std::string& assignment);

// Label for a weight setting: "kd", "kd+lt", "kd+ss", "sskd" or "ss-only".
std::string method_label(const losses::LossWeights& weights);

}  // namespace sskd::config
