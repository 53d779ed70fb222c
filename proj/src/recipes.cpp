#include "sskd/recipes.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <future>
#include <iomanip>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include "sskd/errors.hpp"
#include "sskd/evalsuite.hpp"
#include "sskd/plot.hpp"

namespace sskd::recipes {

namespace fs = std::filesystem;
using config::ExperimentConfig;
using nlohmann::json;

namespace {

fs::path g_worker_exe;

void apply_runtime(const ExperimentConfig& cfg) {
  if (cfg.runtime.threads > 0) torch::set_num_threads(cfg.runtime.threads);
}

pipeline::TrainOptions options_for(const ExperimentConfig& cfg, const fs::path& dir) {
  pipeline::TrainOptions o;
  o.run_dir = dir;
  o.ckpt_every = cfg.runtime.ckpt_every;
  o.resume = cfg.runtime.resume;
  o.loader_workers = cfg.runtime.loader_workers;
  o.pool = cfg.transforms;
  o.evaluate = cfg.runtime.evaluate_every_epoch;
  o.verbose = cfg.runtime.verbose;
  return o;
}

pipeline::TrainSchedule seeded(pipeline::TrainSchedule s, std::uint64_t root, const char* stream) {
  s.seed = derive_seed(root, stream);
  return s;
}

json dataset_identity(const data::DatasetSpec& d) {
  return {{"name", d.name},
          {"root", d.name == "synthetic" ? std::string() : d.root.string()},
          {"num_classes", d.num_classes},
          {"test_size", d.test_size},
          {"generator_seed", d.name == "synthetic" ? d.generator_seed : 0}};
}

void write_run_json(const ExperimentConfig& cfg, const pipeline::RunRecord& record, const fs::path& dir) {
  json j = {{"complete", true},
            {"recipe", cfg.recipe},
            {"method", record.method},
            {"seed", cfg.seed},
            {"k_percent", cfg.k_percent},
            {"few_shot_fraction", cfg.corruption.few_shot_fraction},
            {"noise_fraction", cfg.corruption.noise_fraction},
            {"final_test_acc", record.final_accuracy()},
            {"ss_accuracy", record.ss_accuracy},
            {"wall_seconds", record.wall_seconds},
            {"epochs", record.epochs.size()},
            {"checkpoints", record.checkpoints},
            {"dataset", dataset_identity(cfg.dataset)},
            {"config", config::to_json(cfg)}};
  std::ofstream(dir / "run.json") << j.dump(2) << '\n';
}

void echo_config(const ExperimentConfig& cfg) {
  fs::create_directories(cfg.output_dir);
  config::save_config(cfg, cfg.output_dir / "config.resolved.json");
}

std::string fmt(double v, int precision = 2) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(precision) << v;
  return os.str();
}

std::pair<double, double> mean_std(const std::vector<double>& v) {
  if (v.empty()) return {0.0, 0.0};
  double m = 0.0;
  for (double x : v) m += x;
  m /= static_cast<double>(v.size());
  if (v.size() < 2) return {m, 0.0};
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return {m, std::sqrt(s / static_cast<double>(v.size() - 1))};
}

}  // namespace

void set_worker_executable(fs::path exe) { g_worker_exe = std::move(exe); }

pipeline::DataBundle load_bundle(const ExperimentConfig& cfg) {
  auto train = data::load_dataset(cfg.dataset, data::Split::Train);
  auto test = data::load_dataset(cfg.dataset, data::Split::Test);
  data::CorruptionSpec corruption = cfg.corruption;
  corruption.seed = derive_seed(cfg.seed, "corruption");
  auto corrupted = data::apply_corruption(train, corruption);
  if (corruption.noise_fraction > 0.0) {
    fs::create_directories(cfg.output_dir);
    data::write_corruption_audit(cfg.output_dir / "corruption_audit.txt", corrupted.audit);
  }
  return pipeline::DataBundle(std::move(corrupted.data), std::move(test));
}

pipeline::RunRecord teacher_stage1(const ExperimentConfig& cfg) {
  apply_runtime(cfg);
  echo_config(cfg);
  auto bundle = load_bundle(cfg);
  auto net = pipeline::make_triad(cfg.teacher_spec(), derive_seed(cfg.seed, "teacher-init"));
  const fs::path dir = cfg.output_dir / "teacher_s1";
  auto record = pipeline::train_teacher_stage1(net, bundle, seeded(cfg.teacher_schedule, cfg.seed, "teacher"),
                                               options_for(cfg, dir));
  models::save_checkpoint(net, cfg.teacher_stage1_path());
  write_run_json(cfg, record, dir);
  return record;
}

pipeline::RunRecord teacher_stage2(const ExperimentConfig& cfg) {
  apply_runtime(cfg);
  const fs::path stage1 = cfg.teacher_stage1_path();
  if (!fs::exists(stage1)) throw DependencyError("stage-1 teacher checkpoint not found: " + stage1.string());
  echo_config(cfg);
  auto bundle = load_bundle(cfg);
  auto net = models::load_checkpoint(stage1, cfg.teacher_spec());
  const fs::path dir = cfg.output_dir / "teacher_s2";
  pipeline::Stage2Config s2{cfg.pretext, cfg.temps.tau_ss, cfg.exemplar_classes};
  auto record = pipeline::train_teacher_stage2(net, bundle, seeded(cfg.stage2_schedule, cfg.seed, "stage2"), s2,
                                               options_for(cfg, dir));
  models::save_checkpoint(net, cfg.teacher_path());
  write_run_json(cfg, record, dir);
  return record;
}

pipeline::RunRecord student(const ExperimentConfig& cfg) {
  apply_runtime(cfg);
  const fs::path teacher_file = cfg.teacher_path();
  if (!fs::exists(teacher_file)) throw DependencyError("teacher checkpoint not found: " + teacher_file.string());
  echo_config(cfg);
  auto bundle = load_bundle(cfg);
  auto teacher = models::load_checkpoint(teacher_file, cfg.teacher_spec());
  auto net = pipeline::make_triad(cfg.student_spec(), derive_seed(cfg.seed, "student-init"));
  const auto schedule = seeded(cfg.student_schedule, cfg.seed, "student");
  const auto options = options_for(cfg, cfg.output_dir);
  pipeline::RunRecord record;
  if (cfg.recipe == "student-kd") {
    record = pipeline::distill_baseline_kd(net, teacher, bundle, schedule, cfg.weights, cfg.temps.tau_kd, options);
  } else if (cfg.recipe == "student-sskd") {
    record = pipeline::train_student(net, teacher, bundle, schedule, cfg.student_config(), options);
  } else {
    throw ConfigError("recipe: '" + cfg.recipe + "' is not a student recipe");
  }
  write_run_json(cfg, record, cfg.output_dir);
  return record;
}

void evaluate(const ExperimentConfig& cfg) {
  apply_runtime(cfg);
  const fs::path teacher_file = cfg.teacher_path();
  const fs::path student_file =
      cfg.evaluation.student_checkpoint.empty() ? cfg.output_dir / "final.pt" : cfg.evaluation.student_checkpoint;
  if (!fs::exists(teacher_file)) throw DependencyError("teacher checkpoint not found: " + teacher_file.string());
  if (!fs::exists(student_file)) throw DependencyError("student checkpoint not found: " + student_file.string());
  echo_config(cfg);
  auto teacher = models::load_checkpoint(teacher_file, cfg.teacher_spec());
  auto student = models::load_checkpoint(student_file, cfg.student_spec());
  auto test = data::load_dataset(cfg.dataset, data::Split::Test);
  const auto x = eval::dataset_tensor(test);
  const auto y = eval::dataset_labels(test);
  const auto s_logits = eval::predict_logits(student, x);
  const auto t_logits = eval::predict_logits(teacher, x);

  eval::ReportEntries report;
  report.emplace_back("dataset", test.spec().name);
  report.emplace_back("samples", std::to_string(test.size()));
  report.emplace_back("student_top1", fmt(eval::top_k_accuracy(s_logits, y, 1), 4));
  report.emplace_back("teacher_top1", fmt(eval::top_k_accuracy(t_logits, y, 1), 4));
  if (test.num_classes() >= 5) {
    report.emplace_back("student_top5", fmt(eval::top_k_accuracy(s_logits, y, 5), 4));
    report.emplace_back("teacher_top5", fmt(eval::top_k_accuracy(t_logits, y, 5), 4));
  }
  report.emplace_back("kl_divergence", fmt(eval::teacher_student_kl(t_logits, s_logits), 6));
  report.emplace_back("kl_temperature", "1");
  report.emplace_back("cka", fmt(eval::cka_similarity(eval::extract_features(teacher, x),
                                                      eval::extract_features(student, x)), 6));
  report.emplace_back("cka_features", "penultimate");
  const auto diff = eval::weight_correlation_difference(teacher->classifier()->weight, student->classifier()->weight);
  report.emplace_back("correlation_difference_mean", fmt(diff.summary, 6));
  plot::heatmap(diff.difference, "|corr(teacher) - corr(student)|", cfg.output_dir / "correlation_difference.svg");

  if (!cfg.evaluation.probe_dataset.empty()) {
    data::DatasetSpec probe_spec;
    if (cfg.evaluation.probe_dataset == "cifar10") {
      probe_spec = data::DatasetSpec::cifar10(cfg.evaluation.probe_root);
    } else if (cfg.evaluation.probe_dataset == "cifar100") {
      probe_spec = data::DatasetSpec::cifar100(cfg.evaluation.probe_root);
    } else {
      probe_spec = cfg.dataset;
    }
    auto probe_train = data::load_dataset(probe_spec, data::Split::Train);
    auto probe_test = data::load_dataset(probe_spec, data::Split::Test);
    auto schedule = cfg.evaluation.probe;
    schedule.seed = derive_seed(cfg.seed, "probe");
    const auto result = eval::linear_probe(student, probe_train, probe_test, schedule, cfg.dataset.name);
    report.emplace_back("probe_source", result.source);
    report.emplace_back("probe_target", result.target);
    report.emplace_back("probe_accuracy", fmt(result.accuracy, 4));
    report.emplace_back("probe_backbone_checksum", std::to_string(result.backbone_checksum));
  }
  if (cfg.evaluation.export_features) {
    eval::export_features(student, test, cfg.output_dir / "student_features.bin");
    eval::export_features(teacher, test, cfg.output_dir / "teacher_features.bin");
    report.emplace_back("features", "student_features.bin,teacher_features.bin");
  }
  eval::write_report(cfg.output_dir / "report", report);
  for (const auto& [k, v] : report) std::cout << k << '=' << v << '\n';
}

std::string trend_summary(std::vector<std::pair<double, double>> points, const std::string& x_name) {
  if (points.size() < 2) return "trend: too few points";
  std::sort(points.begin(), points.end());
  const auto peak = std::max_element(points.begin(), points.end(),
                                     [](const auto& a, const auto& b) { return a.second < b.second; });
  bool up = true, down = true;
  for (std::size_t i = 1; i < points.size(); ++i) {
    if (points[i].second < points[i - 1].second) up = false;
    if (points[i].second > points[i - 1].second) down = false;
  }
  std::ostringstream os;
  os << "trend: ";
  const std::string at = " (peak at " + x_name + "=" + fmt(peak->first, 0) + ", " + fmt(peak->second) + ")";
  if (up) {
    os << "monotone non-decreasing" << at;
  } else if (down) {
    os << "monotone non-increasing" << at;
  } else {
    bool unimodal = true;
    const auto p = static_cast<std::size_t>(peak - points.begin());
    for (std::size_t i = 1; i <= p; ++i) unimodal &= points[i].second >= points[i - 1].second;
    for (std::size_t i = p + 1; i < points.size(); ++i) unimodal &= points[i].second <= points[i - 1].second;
    os << (unimodal ? "rise-and-fall" : "mixed") << at;
  }
  return os.str();
}

namespace {

struct Member {
  ExperimentConfig cfg;
  double x;
  std::string method;
};

bool completed_with(const Member& m) {
  const fs::path file = m.cfg.output_dir / "run.json";
  if (!fs::exists(file)) return false;
  try {
    std::ifstream in(file);
    const auto j = json::parse(in);
    return j.value("complete", false) && j.at("config") == config::to_json(m.cfg);
  } catch (const std::exception&) {
    return false;
  }
}

double read_final_accuracy(const fs::path& dir) {
  std::ifstream in(dir / "run.json");
  if (!in) throw LoadError("missing " + (dir / "run.json").string());
  return json::parse(in).at("final_test_acc").get<double>();
}

std::string pct(double f) { return std::to_string(static_cast<int>(std::lround(f * 100.0))); }

// A member is a single student run: its name and config depend only on what
// it trains, so equal members of different sweeps resolve to one directory.
Member make_member(const ExperimentConfig& base, const std::string& method, double x, std::uint64_t seed,
                   double k, double fraction, double noise) {
  Member m{base, x, method};
  m.cfg.sweep = config::SweepConfig{};
  m.cfg.k_percent = k;
  m.cfg.corruption.few_shot_fraction = fraction;
  m.cfg.corruption.noise_fraction = noise;
  m.cfg.seed = seed;
  m.cfg.teacher.checkpoint = fs::absolute(base.teacher_path());
  m.cfg.teacher.stage1_checkpoint.clear();
  std::string label = method;
  if (method == "kd") {
    m.cfg.recipe = "student-kd";
    m.cfg.weights.ss = 0.0;
    m.cfg.weights.t = 0.0;
  } else {
    m.cfg.recipe = "student-sskd";
    if (method == "kd+lt") {
      m.cfg.weights.ss = 0.0;
      label = "kd-lt";
    }
  }
  std::string name = label;
  if (method != "kd") name += "_k" + fmt(k, 0);
  if (noise > 0.0) name += "_noise" + pct(noise);
  if (fraction < 1.0) name += "_frac" + pct(fraction);
  name += "_s" + std::to_string(seed);
  const fs::path root = base.sweep.member_dir.empty() ? base.output_dir : base.sweep.member_dir;
  m.cfg.output_dir = root / name;
  m.cfg.runtime.resume = false;
  return m;
}

SweepResult run_members(const ExperimentConfig& base, std::vector<Member> members) {
  apply_runtime(base);
  echo_config(base);
  if (!fs::exists(base.teacher_path())) {
    throw DependencyError("teacher checkpoint not found: " + base.teacher_path().string());
  }
  std::vector<Member> pending;
  for (const auto& m : members) {
    if (!completed_with(m)) pending.push_back(m);
  }
  if (base.sweep.jobs > 1 && !g_worker_exe.empty()) {
    std::vector<std::future<int>> running;
    auto launch = [](const Member& m) {
      fs::create_directories(m.cfg.output_dir);
      const fs::path file = m.cfg.output_dir / "member.json";
      config::save_config(m.cfg, file);
      const std::string cmd = "\"" + g_worker_exe.string() + "\" run --config \"" + file.string() + "\" > \"" +
                              (m.cfg.output_dir / "log.txt").string() + "\" 2>&1";
      return std::system(cmd.c_str());
    };
    for (std::size_t i = 0; i < pending.size(); ++i) {
      if (running.size() == static_cast<std::size_t>(base.sweep.jobs)) {
        running.front().get();
        running.erase(running.begin());
      }
      running.push_back(std::async(std::launch::async, launch, pending[i]));
    }
    for (auto& f : running) f.get();
    for (const auto& m : pending) {
      if (!completed_with(m)) throw Error("sweep member failed, see " + (m.cfg.output_dir / "log.txt").string());
    }
  } else {
    for (const auto& m : pending) {
      if (base.runtime.verbose) std::cerr << "sweep member " << m.cfg.output_dir << '\n';
      student(m.cfg);
    }
  }

  SweepResult result;
  std::map<std::pair<double, std::string>, std::vector<double>> groups;
  for (const auto& m : members) {
    SweepRun r{m.x, m.method, m.cfg.seed, read_final_accuracy(m.cfg.output_dir), m.cfg.output_dir};
    groups[{m.x, m.method}].push_back(r.accuracy);
    result.runs.push_back(r);
  }
  for (const auto& [key, accs] : groups) {
    const auto [mean, sd] = mean_std(accs);
    result.rows.push_back({key.first, key.second, accs.size(), mean, sd});
  }
  std::ofstream runs(base.output_dir / "sweep_runs.csv");
  runs << "x,method,seed,accuracy,dir\n";
  for (const auto& r : result.runs) {
    runs << r.x << ',' << r.method << ',' << r.seed << ',' << r.accuracy << ',' << r.dir.string() << '\n';
  }
  return result;
}

void write_summary(const ExperimentConfig& base, const SweepResult& result, const std::string& x_name,
                   const std::string& title, bool percent, bool line) {
  std::ofstream csv(base.output_dir / "summary.csv");
  csv << x_name << ",method,runs,mean_acc,std_acc\n";
  std::ofstream md(base.output_dir / "summary.md");
  md << "| " << x_name << " | method | runs | accuracy (%) |\n|---|---|---|---|\n";
  for (const auto& r : result.rows) {
    csv << r.x << ',' << r.method << ',' << r.runs << ',' << r.mean << ',' << r.std << '\n';
    md << "| " << (percent ? pct(r.x) + "%" : fmt(r.x, 0)) << " | " << r.method << " | " << r.runs << " | "
       << fmt(r.mean) << " ± " << fmt(r.std) << " |\n";
  }
  if (!result.trend.empty()) md << '\n' << result.trend << '\n';

  plot::Chart chart;
  chart.title = title;
  chart.x_label = x_name;
  chart.y_label = "test accuracy (%)";
  std::vector<double> xs;
  std::vector<std::string> methods;
  for (const auto& r : result.rows) {
    if (std::find(xs.begin(), xs.end(), r.x) == xs.end()) xs.push_back(r.x);
    if (std::find(methods.begin(), methods.end(), r.method) == methods.end()) methods.push_back(r.method);
  }
  std::sort(xs.begin(), xs.end());
  for (double x : xs) chart.categories.push_back(percent ? pct(x) + "%" : fmt(x, 0));
  for (const auto& m : methods) {
    plot::Series s{m, {}, {}};
    for (double x : xs) {
      auto it = std::find_if(result.rows.begin(), result.rows.end(),
                             [&](const SweepRow& r) { return r.x == x && r.method == m; });
      s.y.push_back(it == result.rows.end() ? 0.0 : it->mean);
      s.err.push_back(it == result.rows.end() ? 0.0 : it->std);
    }
    chart.series.push_back(std::move(s));
  }
  const fs::path file = base.output_dir / "summary.svg";
  if (line) {
    plot::line_chart(chart, file);
  } else {
    plot::bar_chart(chart, file);
  }
}

}  // namespace

SweepResult ablate_k(const ExperimentConfig& cfg) {
  std::vector<Member> members;
  for (double k : cfg.sweep.k_values) {
    for (auto seed : cfg.sweep.seeds) {
      members.push_back(make_member(cfg, "sskd", k, seed, k, cfg.corruption.few_shot_fraction,
                                    cfg.corruption.noise_fraction));
    }
  }
  auto result = run_members(cfg, std::move(members));
  std::vector<std::pair<double, double>> points;
  for (const auto& r : result.rows) points.emplace_back(r.x, r.mean);
  result.trend = trend_summary(points, "k");
  write_summary(cfg, result, "k", "accuracy vs k (selective transfer)", false, true);
  std::cout << result.trend << '\n';
  return result;
}

SweepResult fewshot_sweep(const ExperimentConfig& cfg) {
  std::vector<Member> members;
  for (double f : cfg.sweep.fractions) {
    for (const auto& method : cfg.sweep.methods) {
      for (auto seed : cfg.sweep.seeds) {
        members.push_back(make_member(cfg, method, f, seed, cfg.k_percent, f, cfg.corruption.noise_fraction));
      }
    }
  }
  auto result = run_members(cfg, std::move(members));
  write_summary(cfg, result, "fraction", "few-shot: accuracy vs retained training fraction", true, false);
  return result;
}

SweepResult noise_sweep(const ExperimentConfig& cfg) {
  std::vector<Member> members;
  for (double f : cfg.sweep.noise) {
    for (const auto& method : cfg.sweep.methods) {
      for (auto seed : cfg.sweep.seeds) {
        members.push_back(make_member(cfg, method, f, seed, cfg.k_percent, cfg.corruption.few_shot_fraction, f));
      }
    }
  }
  auto result = run_members(cfg, std::move(members));
  write_summary(cfg, result, "noise", "noisy labels: accuracy vs corrupted fraction", true, false);
  return result;
}

void run(const ExperimentConfig& cfg) {
  cfg.validate();
  const auto& r = cfg.recipe;
  if (r == "teacher-s1") {
    teacher_stage1(cfg);
  } else if (r == "teacher-s2") {
    teacher_stage2(cfg);
  } else if (r == "student-sskd" || r == "student-kd") {
    student(cfg);
  } else if (r == "eval") {
    evaluate(cfg);
  } else if (r == "ablate-k") {
    ablate_k(cfg);
  } else if (r == "fewshot-sweep") {
    fewshot_sweep(cfg);
  } else if (r == "noise-sweep") {
    noise_sweep(cfg);
  } else {
    throw ConfigError("recipe: unknown recipe '" + r + "'");
  }
}

Comparison compare(const std::vector<fs::path>& run_dirs, const fs::path& output) {
  if (run_dirs.size() < 2) throw ComparisonError("compare needs at least two runs");
  struct Loaded {
    fs::path dir;
    json meta;
  };
  std::vector<Loaded> runs;
  for (const auto& d : run_dirs) {
    std::ifstream in(d / "run.json");
    if (!in) throw ComparisonError(d.string() + " is not a completed run (no run.json)");
    runs.push_back({d, json::parse(in)});
    if (!runs.back().meta.value("complete", false)) throw ComparisonError(d.string() + " did not complete");
  }
  const json& ref = runs.front().meta.at("dataset");
  std::vector<std::string> mismatched;
  for (const auto& r : runs) {
    for (const auto& item : ref.items()) {
      if (r.meta.at("dataset").value(item.key(), json()) != item.value()) {
        mismatched.push_back(r.dir.string() + ": dataset." + item.key() + " = " +
                             r.meta.at("dataset").value(item.key(), json()).dump() + " (expected " +
                             item.value().dump() + ")");
      }
    }
  }
  if (!mismatched.empty()) {
    std::string msg = "incompatible runs:";
    for (const auto& m : mismatched) msg += "\n  " + m;
    throw ComparisonError(msg);
  }

  auto varies = [&](const char* key) {
    std::set<std::string> values;
    for (const auto& r : runs) values.insert(r.meta.value(key, json()).dump());
    return values.size() > 1;
  };
  const bool by_k = varies("k_percent"), by_noise = varies("noise_fraction"), by_frac = varies("few_shot_fraction");
  std::map<std::string, std::vector<double>> groups;
  std::vector<std::string> order;
  std::map<double, std::vector<double>> by_k_values;
  for (const auto& r : runs) {
    std::string key = r.meta.at("method").get<std::string>();
    if (by_k) key += " k=" + fmt(r.meta.at("k_percent").get<double>(), 0);
    if (by_noise) key += " noise=" + pct(r.meta.at("noise_fraction").get<double>()) + "%";
    if (by_frac) key += " data=" + pct(r.meta.at("few_shot_fraction").get<double>()) + "%";
    if (!groups.contains(key)) order.push_back(key);
    const double acc = r.meta.at("final_test_acc").get<double>();
    groups[key].push_back(acc);
    if (by_k) by_k_values[r.meta.at("k_percent").get<double>()].push_back(acc);
  }

  Comparison out;
  for (const auto& key : order) {
    const auto [mean, sd] = mean_std(groups[key]);
    out.rows.push_back({key, groups[key].size(), mean, sd});
  }
  if (by_k) {
    std::vector<std::pair<double, double>> points;
    for (const auto& [k, accs] : by_k_values) points.emplace_back(k, mean_std(accs).first);
    out.trend = trend_summary(points, "k");
  }

  fs::create_directories(output);
  std::ofstream csv(output / "comparison.csv");
  csv << "group,runs,mean_acc,std_acc\n";
  std::ofstream md(output / "comparison.md");
  md << "| group | runs | accuracy (%) |\n|---|---|---|\n";
  plot::Chart chart;
  chart.title = "final test accuracy";
  chart.y_label = "test accuracy (%)";
  chart.categories = {""};
  for (const auto& row : out.rows) {
    csv << row.group << ',' << row.runs << ',' << row.mean << ',' << row.std << '\n';
    md << "| " << row.group << " | " << row.runs << " | " << fmt(row.mean) << " ± " << fmt(row.std) << " |\n";
    chart.series.push_back({row.group, {row.mean}, {row.std}});
  }
  if (!out.trend.empty()) md << '\n' << out.trend << '\n';
  plot::bar_chart(chart, output / "comparison.svg");
  return out;
}

void plot(const fs::path& dir, const fs::path& output) {
  fs::create_directories(output);
  if (fs::exists(dir / "summary.csv")) {
    std::ifstream in(dir / "summary.csv");
    std::string header, line;
    std::getline(in, header);
    const std::string x_name = header.substr(0, header.find(','));
    SweepResult result;
    while (std::getline(in, line)) {
      std::replace(line.begin(), line.end(), ',', ' ');
      std::istringstream is(line);
      SweepRow r;
      is >> r.x >> r.method >> r.runs >> r.mean >> r.std;
      if (is) result.rows.push_back(r);
    }
    ExperimentConfig target;
    target.output_dir = output;
    const bool percent = x_name != "k";
    write_summary(target, result, x_name, x_name == "k" ? "accuracy vs k" : "accuracy vs " + x_name, percent, !percent);
    return;
  }
  const auto rows = pipeline::read_record_csv(dir / "record.csv");
  plot::Chart losses, acc;
  losses.title = "training losses";
  losses.x_label = "epoch";
  losses.y_label = "loss";
  acc.title = "test accuracy";
  acc.x_label = "epoch";
  acc.y_label = "accuracy (%)";
  plot::Series ce{"l_ce", {}, {}}, kd{"l_kd", {}, {}}, ss{"l_ss", {}, {}}, t{"l_t", {}, {}}, total{"total", {}, {}},
      test{"test_acc", {}, {}};
  for (const auto& m : rows) {
    const std::string label = std::to_string(m.epoch);
    losses.categories.push_back(label);
    acc.categories.push_back(label);
    ce.y.push_back(m.l_ce);
    kd.y.push_back(m.l_kd);
    ss.y.push_back(m.l_ss);
    t.y.push_back(m.l_t);
    total.y.push_back(m.total);
    test.y.push_back(m.test_acc);
  }
  losses.series = {ce, kd, ss, t, total};
  acc.series = {test};
  plot::line_chart(losses, output / "losses.svg");
  plot::line_chart(acc, output / "accuracy.svg");
}

}  // namespace sskd::recipes
