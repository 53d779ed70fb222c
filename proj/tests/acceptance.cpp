// Acceptance gate: one PASS/FAIL line per criterion, nonzero exit on any FAIL.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <sstream>

#include <CLI11.hpp>

#include "suites.hpp"
#include "sskd/config.hpp"
#include "sskd/errors.hpp"
#include "sskd/evalsuite.hpp"
#include "sskd/pipeline.hpp"
#include "sskd/recipes.hpp"

namespace fs = std::filesystem;
using namespace sskd;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string num(double v, int precision = 3) {
  std::ostringstream os;
  os.precision(precision);
  os << v;
  return os.str();
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::map<int, Outcome> g_results;

void report(int id, bool pass, const std::string& detail) {
  g_results[id] = {pass, detail};
  std::cout << "criterion " << id << ": " << (pass ? "PASS" : "FAIL") << "  " << detail << std::endl;
}

// ---- 1-3: oracle suites ----

void criterion1() {
  const auto t0 = Clock::now();
  const auto w = suites::loss_oracles(60, 2024);
  const double secs = seconds_since(t0);
  report(1, w.error < 1e-6 && w.instances >= 50 && secs < 60.0,
         std::to_string(w.instances) + " instances x 7 losses, worst rel err " + num(w.error) + " (" + w.where +
             "), " + num(secs, 2) + " s");
}

void criterion2() {
  const auto t0 = Clock::now();
  const auto w = suites::gradient_checks(24, 4048);
  const double secs = seconds_since(t0);
  report(2, w.error < 1e-4 && w.instances >= 20 && secs < 120.0,
         std::to_string(w.instances) + " instances, worst grad rel err " + num(w.error) + " (" + w.where + "), " +
             num(secs, 2) + " s");
}

void criterion3() {
  const auto t0 = Clock::now();
  std::int64_t cases = 0;
  const auto bad = suites::selector_exhaustive(cases);
  const auto mono = suites::selector_monotonicity(1000, 77);
  const double secs = seconds_since(t0);
  report(3, bad == 0 && mono == 0 && secs < 60.0,
         std::to_string(cases) + " exhaustive cases with " + std::to_string(bad) +
             " mismatches, monotonicity violations " + std::to_string(mono) + "/1000, " + num(secs, 2) + " s");
}

// ---- 4-5: contracts on a small task ----

const pipeline::DataBundle& small_bundle() {
  static const pipeline::DataBundle b = [] {
    const auto spec = data::DatasetSpec::synthetic(500, 200);
    return pipeline::DataBundle(data::load_dataset(spec, data::Split::Train),
                                data::load_dataset(spec, data::Split::Test));
  }();
  return b;
}

models::TriadSpec tiny_spec(const char* backbone, models::Role role) {
  models::TriadSpec s;
  s.backbone = models::BackboneSpec::parse(backbone);
  s.role = role;
  return s;
}

pipeline::TrainSchedule small_schedule(int epochs) {
  pipeline::TrainSchedule s;
  s.epochs = epochs;
  s.lr_decay_points = {epochs - 1};
  return s;
}

void criterion4() {
  pipeline::TrainOptions quiet;
  quiet.evaluate = false;
  auto teacher = pipeline::make_triad(tiny_spec("tiny-cnn:16-32", models::Role::Teacher), 1);
  pipeline::train_teacher_stage1(teacher, small_bundle(), small_schedule(5), quiet);
  const auto backbone = models::snapshot(*teacher, models::Part::Backbone);
  const auto classifier = models::snapshot(*teacher, models::Part::Classifier);
  const auto r2 = pipeline::train_teacher_stage2(teacher, small_bundle(), small_schedule(5), {}, quiet);
  const double d_backbone = models::max_abs_delta(backbone, models::snapshot(*teacher, models::Part::Backbone));
  const double d_classifier =
      models::max_abs_delta(classifier, models::snapshot(*teacher, models::Part::Classifier));

  const auto before = models::parameter_checksum(*teacher);
  auto student = pipeline::make_triad(tiny_spec("tiny-cnn:8-16", models::Role::Student), 2);
  bool threw = false;
  try {
    pipeline::train_student(student, teacher, small_bundle(), small_schedule(3), pipeline::StudentConfig{}, quiet);
  } catch (const InvariantViolation&) {
    threw = true;
  }
  const auto after = models::parameter_checksum(*teacher);
  report(4, d_backbone == 0.0 && d_classifier == 0.0 && before == after && !threw,
         "stage-2 max |delta| backbone " + num(d_backbone) + ", classifier " + num(d_classifier) +
             "; teacher checksum " + (before == after ? "unchanged" : "CHANGED") + " over a 3-epoch student run");
  (void)r2;
}

void criterion5() {
  auto teacher = pipeline::make_triad(tiny_spec("tiny-cnn:16-32", models::Role::Teacher), 3);
  std::vector<double> sskd_totals, kd_totals;
  pipeline::TrainOptions opts;
  opts.evaluate = false;
  opts.max_steps = 100;
  const auto schedule = small_schedule(15);

  auto a = pipeline::make_triad(tiny_spec("tiny-cnn:8-16", models::Role::Student), 4);
  pipeline::StudentConfig cfg;
  cfg.weights.ss = 0.0;
  cfg.weights.t = 0.0;
  opts.on_step = [&](const pipeline::StepLog& l) { sskd_totals.push_back(l.total); };
  pipeline::train_student(a, teacher, small_bundle(), schedule, cfg, opts);

  auto b = pipeline::make_triad(tiny_spec("tiny-cnn:8-16", models::Role::Student), 4);
  opts.on_step = [&](const pipeline::StepLog& l) { kd_totals.push_back(l.total); };
  pipeline::distill_baseline_kd(b, teacher, small_bundle(), schedule, cfg.weights, cfg.temps.tau_kd, opts);

  std::size_t mismatches = 0;
  for (std::size_t i = 0; i < std::min(sskd_totals.size(), kd_totals.size()); ++i) {
    if (sskd_totals[i] != kd_totals[i]) ++mismatches;
  }
  const bool same_weights = models::parameter_checksum(*a) == models::parameter_checksum(*b);
  report(5, sskd_totals.size() == 100 && kd_totals.size() == 100 && mismatches == 0 && same_weights,
         std::to_string(sskd_totals.size()) + " steps compared, " + std::to_string(mismatches) +
             " bitwise mismatches, final weights " + (same_weights ? "identical" : "differ"));
}

// ---- 6-8, 10: desk-scale task ----

// Desk-scale loss weights: L_T scaled down from 10 and L_ss up from 2.7, see README.
constexpr losses::LossWeights kDeskWeights{0.1, 0.9, 10.0, 1.8};
const std::vector<std::uint64_t> kDeskSeeds = {2, 3, 4};

config::ExperimentConfig desk_config(const fs::path& root) {
  config::ExperimentConfig c;
  c.teacher = config::network("tiny-cnn:32-64-128");
  c.student = config::network("tiny-cnn:16-32-64");
  c.output_dir = root / "teacher";
  c.teacher.stage1_checkpoint = root / "teacher" / "teacher_s1.pt";
  c.teacher.checkpoint = root / "teacher" / "teacher.pt";
  c.seed = 1;
  c.dataset = data::DatasetSpec::synthetic(2000, 2000);
  auto sched = [](int epochs) {
    pipeline::TrainSchedule s;
    s.epochs = epochs;
    s.lr_decay_points = {epochs * 5 / 8, epochs * 3 / 4, epochs * 7 / 8};
    return s;
  };
  c.teacher_schedule = sched(40);
  c.student_schedule = sched(40);
  c.weights = kDeskWeights;
  c.runtime.evaluate_every_epoch = false;
  c.runtime.threads = 1;
  c.evaluation.export_features = false;
  c.sweep.member_dir = root / "members";
  c.sweep.seeds = kDeskSeeds;
  return c;
}

struct Desk {
  fs::path root;
  config::ExperimentConfig base;
  double ss_accuracy = -1.0;
  int ss_batch = 64;
};

double mean_of(const recipes::SweepResult& r, double x, const std::string& method) {
  for (const auto& row : r.rows) {
    if (row.x == x && row.method == method) return row.mean;
  }
  throw Error("missing sweep row " + method + " at " + num(x));
}

std::string runs_of(const recipes::SweepResult& r, double x, const std::string& method) {
  std::string out;
  for (const auto& run : r.runs) {
    if (run.x == x && run.method == method) out += (out.empty() ? "" : "/") + num(run.accuracy, 4);
  }
  return out;
}

Desk prepare_desk(const fs::path& root) {
  Desk d{root, desk_config(root)};
  const auto t0 = Clock::now();
  auto s1 = d.base;
  s1.recipe = "teacher-s1";
  const auto r1 = recipes::teacher_stage1(s1);
  auto s2 = d.base;
  s2.recipe = "teacher-s2";
  const auto r2 = recipes::teacher_stage2(s2);
  d.ss_accuracy = r2.ss_accuracy;
  d.ss_batch = s2.stage2_schedule.batch_size;
  std::cout << "  desk teacher: top-1 " << num(r1.final_accuracy(), 4) << "%, stage-2 ss accuracy "
            << num(r2.ss_accuracy, 4) << "%, " << num(seconds_since(t0), 4) << " s" << std::endl;
  return d;
}

void criterion6(const Desk& d) {
  const auto t0 = Clock::now();
  auto c = d.base;
  c.recipe = "noise-sweep";
  c.output_dir = d.root / "methods";
  c.sweep.noise = {0.0};
  c.sweep.methods = {"kd", "kd+lt", "sskd"};
  const auto r = recipes::noise_sweep(c);
  const double kd = mean_of(r, 0.0, "kd"), lt = mean_of(r, 0.0, "kd+lt"), sskd = mean_of(r, 0.0, "sskd");
  report(6, sskd > lt && lt > kd && sskd - kd >= 0.3,
         "3-seed means: SSKD " + num(sskd, 4) + " (" + runs_of(r, 0.0, "sskd") + "), KD+L_T " + num(lt, 4) + " (" +
             runs_of(r, 0.0, "kd+lt") + "), KD " + num(kd, 4) + " (" + runs_of(r, 0.0, "kd") + "); SSKD-KD " +
             num(sskd - kd, 3) + ", " + num(seconds_since(t0), 4) + " s");
}

void criterion7(const Desk& d) {
  const auto t0 = Clock::now();
  auto c = d.base;
  c.recipe = "ablate-k";
  c.output_dir = d.root / "ablate_k";
  c.sweep.k_values = {0, 50, 75};
  const auto r = recipes::ablate_k(c);
  const double k0 = mean_of(r, 0, "sskd"), k50 = mean_of(r, 50, "sskd"), k75 = mean_of(r, 75, "sskd");
  report(7, k0 <= std::max(k50, k75),
         "3-seed means: k=0 " + num(k0, 4) + ", k=50 " + num(k50, 4) + ", k=75 " + num(k75, 4) + "; " + r.trend +
             ", " + num(seconds_since(t0), 4) + " s");
}

void criterion8(const Desk& d) {
  const double chance = 100.0 / d.ss_batch;
  report(8, d.ss_accuracy > chance && d.ss_accuracy < 95.0,
         "stage-2 contrastive top-1 " + num(d.ss_accuracy, 4) + "% vs chance " + num(chance, 3) + "% and ceiling 95%");
}

void criterion10(const Desk& d) {
  const auto t0 = Clock::now();
  bool complete = true;
  std::string missing;

  auto noise = d.base;
  noise.recipe = "noise-sweep";
  noise.output_dir = d.root / "noise_sweep";
  noise.sweep.noise = {0.0, 0.1, 0.3, 0.5};
  noise.sweep.seeds = {kDeskSeeds.front()};
  const auto rn = recipes::noise_sweep(noise);

  auto fewshot = d.base;
  fewshot.recipe = "fewshot-sweep";
  fewshot.output_dir = d.root / "fewshot_sweep";
  fewshot.sweep.fractions = {0.25, 0.5, 0.75, 1.0};
  fewshot.sweep.seeds = {kDeskSeeds.front()};
  const auto rf = recipes::fewshot_sweep(fewshot);

  for (const auto& dir : {noise.output_dir, fewshot.output_dir}) {
    for (const char* f : {"summary.svg", "summary.csv", "summary.md"}) {
      if (!fs::exists(dir / f)) {
        complete = false;
        missing += " " + (dir / f).string();
      }
    }
  }
  complete = complete && rn.rows.size() == 8 && rf.rows.size() == 8;

  auto half = d.base;
  half.recipe = "noise-sweep";
  half.output_dir = d.root / "noise50";
  half.sweep.noise = {0.5};
  const auto r50 = recipes::noise_sweep(half);
  const double kd = mean_of(r50, 0.5, "kd"), sskd = mean_of(r50, 0.5, "sskd");
  report(10, complete && sskd >= kd,
         std::string("noise and few-shot sweeps ") + (complete ? "complete with plots" : "INCOMPLETE:" + missing) +
             "; at 50% noise 3-seed means SSKD " + num(sskd, 4) + " (" + runs_of(r50, 0.5, "sskd") + ") vs KD " +
             num(kd, 4) + " (" + runs_of(r50, 0.5, "kd") + "), " + num(seconds_since(t0), 4) + " s");
}

// ---- 9: metric properties ----

void criterion9() {
  std::mt19937_64 gen(9);
  double worst_cka = 0;
  for (int trial = 0; trial < 20; ++trial) {
    const auto x = oracle::random_matrix(gen, 64, 12, 1.0);
    auto [q, r] = torch::linalg_qr(oracle::random_matrix(gen, 12, 12, 1.0));
    worst_cka = std::max(worst_cka, std::fabs(eval::cka_similarity(x, x.matmul(q)) - 1.0));
  }
  auto net = pipeline::make_triad(tiny_spec("tiny-cnn:8-16", models::Role::Student), 5);
  const double kl = eval::teacher_student_kl(net, net, small_bundle().test());
  const auto w = net->classifier()->weight.detach();
  const auto diff = eval::weight_correlation_difference(w, w.clone());
  const bool zero = torch::equal(diff.difference, torch::zeros_like(diff.difference));
  report(9, worst_cka <= 1e-6 && kl == 0.0 && zero,
         "max |CKA(X, XR) - 1| " + num(worst_cka) + " over 20 orthogonal R; KL(net, net) " + num(kl) +
             "; correlation difference of identical weights " + (zero ? "all zero" : "NONZERO"));
}

template <typename F>
void guarded(int id, F&& f) {
  try {
    f();
  } catch (const std::exception& e) {
    report(id, false, std::string("threw: ") + e.what());
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance criteria"};
  std::string workdir = "acceptance_runs";
  bool reuse = false;
  std::vector<int> only;
  app.add_option("--workdir", workdir, "directory for desk-scale runs");
  app.add_flag("--reuse", reuse, "keep completed runs from a previous invocation");
  app.add_option("--only", only, "criteria to run (default: all)");
  CLI11_PARSE(app, argc, argv);

  torch::set_num_threads(1);
  const fs::path root = fs::absolute(workdir);
  if (!reuse) fs::remove_all(root);
  fs::create_directories(root);
  const std::set<int> selected(only.begin(), only.end());
  auto want = [&](int id) { return selected.empty() || selected.contains(id); };
  const auto t0 = Clock::now();

  if (want(1)) guarded(1, criterion1);
  if (want(2)) guarded(2, criterion2);
  if (want(3)) guarded(3, criterion3);
  if (want(4)) guarded(4, criterion4);
  if (want(5)) guarded(5, criterion5);
  if (want(9)) guarded(9, criterion9);

  if (want(6) || want(7) || want(8) || want(10)) {
    std::optional<Desk> desk;
    try {
      desk = prepare_desk(root / "desk");
    } catch (const std::exception& e) {
      for (int id : {6, 7, 8, 10}) {
        if (want(id)) report(id, false, std::string("desk teacher failed: ") + e.what());
      }
    }
    if (desk) {
      if (want(8)) guarded(8, [&] { criterion8(*desk); });
      if (want(6)) guarded(6, [&] { criterion6(*desk); });
      if (want(7)) guarded(7, [&] { criterion7(*desk); });
      if (want(10)) guarded(10, [&] { criterion10(*desk); });
    }
  }

  int failed = 0;
  std::cout << "\nsummary (" << num(seconds_since(t0), 5) << " s):\n";
  for (const auto& [id, o] : g_results) {
    std::cout << "  criterion " << id << ": " << (o.pass ? "PASS" : "FAIL") << '\n';
    failed += !o.pass;
  }
  return failed == 0 ? 0 : 1;
}
