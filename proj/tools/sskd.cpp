#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "sskd/config.hpp"
#include "sskd/errors.hpp"
#include "sskd/recipes.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace sskd;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitRuntime = 3;

struct Common {
  std::string config_file;
  std::vector<std::string> overrides;
  std::string output;
  std::string data_root;
  long long seed = -1;
  int threads = 0;
  bool verbose = false;
};

json base_document(const Common& c) {
  json j = json::object();
  if (!c.config_file.empty()) {
    std::ifstream in(c.config_file);
    if (!in) throw ConfigError("cannot open config file " + c.config_file);
    try {
      j = json::parse(in);
    } catch (const json::parse_error& e) {
      throw ConfigError(c.config_file + ": " + e.what());
    }
  }
  if (!c.output.empty()) j["output_dir"] = c.output;
  if (c.seed >= 0) j["seed"] = c.seed;
  if (c.threads > 0) j["runtime"]["threads"] = c.threads;
  if (c.verbose) j["runtime"]["verbose"] = true;
  if (!c.data_root.empty()) {
    j["dataset"]["root"] = c.data_root;
  } else if (const char* env = std::getenv("SSKD_DATA_ROOT"); env && *env) {
    if (!j.contains("dataset") || !j["dataset"].contains("root")) j["dataset"]["root"] = env;
  }
  for (const auto& o : c.overrides) config::apply_override(j, o);
  return j;
}

config::ExperimentConfig resolve(const Common& c, const std::string& recipe, const std::vector<std::string>& extra = {}) {
  json j = base_document(c);
  if (!recipe.empty()) j["recipe"] = recipe;
  for (const auto& o : extra) config::apply_override(j, o);
  auto cfg = config::from_json(j);
  cfg.validate();
  return cfg;
}

void add_common(CLI::App& app, Common& c) {
  app.add_option("-c,--config", c.config_file, "JSON experiment config");
  app.add_option("--set", c.overrides, "override a config key, e.g. --set weights.ss=0")->take_all();
  app.add_option("-o,--output", c.output, "output directory");
  app.add_option("--data-root", c.data_root, "dataset root (default: $SSKD_DATA_ROOT)");
  app.add_option("--seed", c.seed, "root seed");
  app.add_option("--threads", c.threads, "intra-op threads");
  app.add_flag("-v,--verbose", c.verbose, "per-epoch progress on stderr");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Self-supervised knowledge distillation experiments"};
  app.require_subcommand(1);
  recipes::set_worker_executable(fs::absolute(argv[0]));

  Common common;
  std::string stage = "both";
  std::string method = "sskd";
  std::string sweep_kind;
  std::string recipe;
  std::vector<std::string> run_dirs;
  std::string compare_out = "comparison";
  std::string plot_dir, plot_out;

  auto* teacher = app.add_subcommand("teacher", "train the teacher (stage 1, stage 2 or both)");
  add_common(*teacher, common);
  teacher->add_option("--stage", stage, "1, 2 or both")->check(CLI::IsMember({"1", "2", "both"}));

  auto* student = app.add_subcommand("student", "train a student from a finished teacher");
  add_common(*student, common);
  student->add_option("--method", method, "sskd, kd or kd+lt")->check(CLI::IsMember({"sskd", "kd", "kd+lt"}));

  auto* evaluate = app.add_subcommand("eval", "metrics, linear probe and feature export");
  add_common(*evaluate, common);

  auto* sweep = app.add_subcommand("sweep", "run a sweep of student trainings");
  add_common(*sweep, common);
  sweep->add_option("--kind", sweep_kind, "ablate-k, fewshot or noise")
      ->required()
      ->check(CLI::IsMember({"ablate-k", "fewshot", "noise"}));

  auto* run = app.add_subcommand("run", "run the recipe named in the config");
  add_common(*run, common);
  run->add_option("--recipe", recipe, "override the config's recipe");

  auto* compare = app.add_subcommand("compare", "compare completed runs");
  compare->add_option("runs", run_dirs, "run directories")->required();
  compare->add_option("-o,--output", compare_out, "output directory");

  auto* plot = app.add_subcommand("plot", "plot a run's curves or a sweep summary");
  plot->add_option("dir", plot_dir, "run or sweep directory")->required();
  plot->add_option("-o,--output", plot_out, "output directory (default: the input directory)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    if (teacher->parsed()) {
      if (stage == "1" || stage == "both") recipes::run(resolve(common, "teacher-s1"));
      if (stage == "2" || stage == "both") {
        const auto cfg = resolve(common, "teacher-s2");
        recipes::run(cfg);
      }
    } else if (student->parsed()) {
      std::vector<std::string> extra;
      if (method == "kd+lt") extra.push_back("weights.ss=0");
      recipes::run(resolve(common, method == "kd" ? "student-kd" : "student-sskd", extra));
    } else if (evaluate->parsed()) {
      recipes::run(resolve(common, "eval"));
    } else if (sweep->parsed()) {
      const std::string name = sweep_kind == "ablate-k" ? "ablate-k" : sweep_kind + "-sweep";
      recipes::run(resolve(common, name));
    } else if (run->parsed()) {
      recipes::run(resolve(common, recipe));
    } else if (compare->parsed()) {
      std::vector<fs::path> dirs(run_dirs.begin(), run_dirs.end());
      const auto result = recipes::compare(dirs, compare_out);
      for (const auto& row : result.rows) {
        std::cout << row.group << ": " << row.mean << " +- " << row.std << " (" << row.runs << " runs)\n";
      }
      if (!result.trend.empty()) std::cout << result.trend << '\n';
    } else if (plot->parsed()) {
      recipes::plot(plot_dir, plot_out.empty() ? plot_dir : plot_out);
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return 0;
}
