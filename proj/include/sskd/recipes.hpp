#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "sskd/config.hpp"
#include "sskd/pipeline.hpp"

namespace sskd::recipes {

// Train/test splits with the configured corruption applied to the training
// split. The corruption audit is written to <output_dir>/corruption_audit.txt.
pipeline::DataBundle load_bundle(const config::ExperimentConfig& cfg);

pipeline::RunRecord teacher_stage1(const config::ExperimentConfig& cfg);
pipeline::RunRecord teacher_stage2(const config::ExperimentConfig& cfg);
// Runs the student recipe named by cfg.recipe ("student-sskd" or "student-kd").
// Throws DependencyError when the teacher checkpoint is missing.
pipeline::RunRecord student(const config::ExperimentConfig& cfg);
void evaluate(const config::ExperimentConfig& cfg);

struct SweepRun {
  double x = 0.0;  // k, fraction or noise level
  std::string method;
  std::uint64_t seed = 0;
  double accuracy = 0.0;
  std::filesystem::path dir;
};

struct SweepRow {
  double x = 0.0;
  std::string method;
  std::size_t runs = 0;
  double mean = 0.0;
  double std = 0.0;
};

struct SweepResult {
  std::vector<SweepRun> runs;
  std::vector<SweepRow> rows;
  std::string trend;  // ablate-k only
};

// Members whose run.json records the identical resolved config are reused.
SweepResult ablate_k(const config::ExperimentConfig& cfg);
SweepResult fewshot_sweep(const config::ExperimentConfig& cfg);
SweepResult noise_sweep(const config::ExperimentConfig& cfg);

// Dispatches on cfg.recipe; echoes the resolved config into the output directory.
void run(const config::ExperimentConfig& cfg);

// Sweeps with sweep.jobs > 1 launch "<exe> run --config <member.json>".
void set_worker_executable(std::filesystem::path exe);

// Describes a sequence of (x, y) points ordered by x, e.g.
// "rise-and-fall (peak at k=50)".
std::string trend_summary(std::vector<std::pair<double, double>> points, const std::string& x_name);

struct ComparisonRow {
  std::string group;
  std::size_t runs = 0;
  double mean = 0.0;
  double std = 0.0;
};

struct Comparison {
  std::vector<ComparisonRow> rows;
  std::string trend;
};

// Reads completed run directories and writes comparison.{csv,md,svg} under
// `output`. Throws ComparisonError for fewer than two runs or mismatched
// dataset/test-split fields.
Comparison compare(const std::vector<std::filesystem::path>& run_dirs, const std::filesystem::path& output);

// Learning curves of one run, or the summary plot of a sweep directory.
void plot(const std::filesystem::path& dir, const std::filesystem::path& output);

}  // namespace sskd::recipes
