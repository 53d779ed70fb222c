#include "sskd/config.hpp"

#include <algorithm>
#include <fstream>
#include <set>

#include "sskd/errors.hpp"

namespace sskd::config {

namespace fs = std::filesystem;
using nlohmann::json;

pipeline::TrainSchedule ExperimentConfig::default_stage2() {
  pipeline::TrainSchedule s;
  s.epochs = 30;
  s.lr_decay_points = {20, 25};
  return s;
}

namespace {

std::int64_t head_width(pretext::PretextKind kind, int latent, std::int64_t exemplar_classes) {
  return pretext::PretextTask::make(kind, latent, exemplar_classes).head_arity;
}

template <typename Fn>
void prefixed(const std::string& field, Fn fn) {
  try {
    fn();
  } catch (const ConfigError& e) {
    throw ConfigError(field + ": " + e.what());
  } catch (const Error& e) {
    throw ConfigError(field + ": " + e.what());
  }
}

}  // namespace

void ExperimentConfig::validate() const {
  if (std::find(std::begin(kRecipes), std::end(kRecipes), recipe) == std::end(kRecipes)) {
    throw ConfigError("recipe: unknown recipe '" + recipe + "'");
  }
  if (output_dir.empty()) throw ConfigError("output_dir: must not be empty");
  prefixed("dataset", [&] { dataset.validate(); });
  prefixed("corruption", [&] { corruption.validate(); });
  prefixed("teacher", [&] { teacher_spec().validate(); });
  prefixed("student", [&] { student_spec().validate(); });
  prefixed("teacher_schedule", [&] { teacher_schedule.validate(); });
  prefixed("stage2_schedule", [&] { stage2_schedule.validate(); });
  prefixed("student_schedule", [&] { student_schedule.validate(); });
  prefixed("weights", [&] { weights.validate(); });
  prefixed("temperatures", [&] { temps.validate(); });
  if (!(k_percent >= 0.0 && k_percent <= 100.0)) throw ConfigError("select_k_percent: must lie in [0, 100]");
  if (exemplar_classes < 2) throw ConfigError("exemplar_classes: must be >= 2");
  prefixed("ss_transforms", [&] { transforms.validate(); });
  for (double k : sweep.k_values) {
    if (!(k >= 0.0 && k <= 100.0)) throw ConfigError("sweep.k_values: entries must lie in [0, 100]");
  }
  for (double f : sweep.fractions) {
    if (!(f > 0.0 && f <= 1.0)) throw ConfigError("sweep.fractions: entries must lie in (0, 1]");
  }
  for (double f : sweep.noise) {
    if (!(f >= 0.0 && f <= 1.0)) throw ConfigError("sweep.noise: entries must lie in [0, 1]");
  }
  if (sweep.seeds.empty()) throw ConfigError("sweep.seeds: at least one seed is required");
  for (const auto& m : sweep.methods) {
    if (m != "kd" && m != "kd+lt" && m != "sskd") {
      throw ConfigError("sweep.methods: unknown method '" + m + "' (kd, kd+lt, sskd)");
    }
  }
  if (sweep.jobs < 1) throw ConfigError("sweep.jobs: must be >= 1");
  if (evaluation.probe_dataset != "" && evaluation.probe_dataset != "cifar10" &&
      evaluation.probe_dataset != "cifar100" && evaluation.probe_dataset != "synthetic") {
    throw ConfigError("eval.probe_dataset: unknown dataset '" + evaluation.probe_dataset + "'");
  }
  if (evaluation.probe.epochs < 0) throw ConfigError("eval.probe.epochs: must be >= 0");
  if (runtime.loader_workers < 1) throw ConfigError("runtime.loader_workers: must be >= 1");
  if (runtime.threads < 0) throw ConfigError("runtime.threads: must be >= 0");
  if (runtime.ckpt_every < 0) throw ConfigError("runtime.ckpt_every: must be >= 0");
}

models::TriadSpec ExperimentConfig::teacher_spec() const {
  models::TriadSpec s = student_spec();
  s.backbone = models::BackboneSpec::parse(teacher.backbone);
  s.head_hidden = teacher.head_hidden;
  s.head_out = static_cast<int>(head_width(pretext, teacher.head_out, exemplar_classes));
  s.role = models::Role::Teacher;
  return s;
}

models::TriadSpec ExperimentConfig::student_spec() const {
  models::TriadSpec s;
  s.backbone = models::BackboneSpec::parse(student.backbone);
  s.num_classes = dataset.num_classes;
  s.image_size = dataset.image_size;
  s.channels = dataset.channels;
  s.head_hidden = student.head_hidden;
  s.head_out = static_cast<int>(head_width(pretext, student.head_out, exemplar_classes));
  s.role = models::Role::Student;
  return s;
}

fs::path ExperimentConfig::teacher_stage1_path() const {
  return teacher.stage1_checkpoint.empty() ? output_dir / "teacher_s1.pt" : teacher.stage1_checkpoint;
}

fs::path ExperimentConfig::teacher_path() const {
  return teacher.checkpoint.empty() ? output_dir / "teacher.pt" : teacher.checkpoint;
}

pipeline::StudentConfig ExperimentConfig::student_config() const {
  pipeline::StudentConfig c;
  c.weights = weights;
  c.temps = temps;
  c.k_percent = k_percent;
  c.select_on_lt = select_on_lt;
  c.pretext = pretext;
  c.exemplar_classes = exemplar_classes;
  c.method = method_label(weights);
  return c;
}

std::string method_label(const losses::LossWeights& w) {
  if (w.ce == 0.0 && w.kd == 0.0 && w.t == 0.0) return "ss-only";
  if (w.ss > 0.0 && w.t > 0.0) return "sskd";
  if (w.t > 0.0) return "kd+lt";
  if (w.ss > 0.0) return "kd+ss";
  return "kd";
}

namespace {

json schedule_json(const pipeline::TrainSchedule& s) {
  return {{"epochs", s.epochs},
          {"lr_init", s.lr_init},
          {"lr_decay_points", s.lr_decay_points},
          {"lr_decay_factor", s.lr_decay_factor},
          {"batch_size", s.batch_size},
          {"weight_decay", s.weight_decay},
          {"momentum", s.momentum}};
}

// Reads the keys of one JSON object into fields, rejecting unknown keys.
class Reader {
 public:
  Reader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(where("") + "expected an object");
  }

  bool has(const std::string& key) const { return j_.contains(key); }

  template <typename T>
  void get(const std::string& key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception& e) {
      throw ConfigError(where(key) + "wrong type (" + e.what() + ")");
    }
  }

  void get_path(const std::string& key, fs::path& out) {
    std::string s = out.string();
    get(key, s);
    out = s;
  }

  const json& child(const std::string& key) {
    seen_.insert(key);
    return j_.contains(key) ? j_.at(key) : empty();
  }

  std::string sub(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  void finish() const {
    for (const auto& item : j_.items()) {
      if (!seen_.contains(item.key())) throw ConfigError(sub(item.key()) + ": unknown field");
    }
  }

 private:
  static const json& empty() {
    static const json e = json::object();
    return e;
  }
  std::string where(const std::string& key) const { return (key.empty() ? path_ : sub(key)) + ": "; }

  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

void read_schedule(const json& j, const std::string& path, pipeline::TrainSchedule& s) {
  Reader r(j, path);
  r.get("epochs", s.epochs);
  r.get("lr_init", s.lr_init);
  r.get("lr_decay_points", s.lr_decay_points);
  r.get("lr_decay_factor", s.lr_decay_factor);
  r.get("batch_size", s.batch_size);
  r.get("weight_decay", s.weight_decay);
  r.get("momentum", s.momentum);
  r.finish();
}

void read_network(const json& j, const std::string& path, NetworkConfig& n, bool teacher) {
  Reader r(j, path);
  r.get("backbone", n.backbone);
  r.get("head_hidden", n.head_hidden);
  r.get("head_out", n.head_out);
  if (teacher) {
    r.get_path("stage1_checkpoint", n.stage1_checkpoint);
    r.get_path("checkpoint", n.checkpoint);
  }
  r.finish();
}

data::DatasetSpec dataset_defaults(const std::string& name) {
  if (name == "cifar10") return data::DatasetSpec::cifar10("data/cifar-10-batches-bin");
  if (name == "cifar100") return data::DatasetSpec::cifar100("data/cifar-100-binary");
  if (name == "synthetic") return data::DatasetSpec::synthetic(5000, 2000);
  throw ConfigError("dataset.name: unknown dataset '" + name + "' (cifar10, cifar100, synthetic)");
}

}  // namespace

json to_json(const ExperimentConfig& c) {
  std::vector<std::string> enabled;
  for (auto t : c.transforms.enabled) enabled.push_back(ss::to_string(t));
  return {
      {"recipe", c.recipe},
      {"seed", c.seed},
      {"output_dir", c.output_dir.string()},
      {"dataset",
       {{"name", c.dataset.name},
        {"root", c.dataset.root.string()},
        {"num_classes", c.dataset.num_classes},
        {"image_size", c.dataset.image_size},
        {"channels", c.dataset.channels},
        {"train_size", c.dataset.train_size},
        {"test_size", c.dataset.test_size},
        {"generator_seed", c.dataset.generator_seed},
        {"channel_mean", c.dataset.channel_mean},
        {"channel_std", c.dataset.channel_std}}},
      {"corruption",
       {{"few_shot_fraction", c.corruption.few_shot_fraction}, {"noise_fraction", c.corruption.noise_fraction}}},
      {"teacher",
       {{"backbone", c.teacher.backbone},
        {"head_hidden", c.teacher.head_hidden},
        {"head_out", c.teacher.head_out},
        {"stage1_checkpoint", c.teacher.stage1_checkpoint.string()},
        {"checkpoint", c.teacher.checkpoint.string()}}},
      {"student",
       {{"backbone", c.student.backbone}, {"head_hidden", c.student.head_hidden}, {"head_out", c.student.head_out}}},
      {"teacher_schedule", schedule_json(c.teacher_schedule)},
      {"stage2_schedule", schedule_json(c.stage2_schedule)},
      {"student_schedule", schedule_json(c.student_schedule)},
      {"weights", {{"ce", c.weights.ce}, {"kd", c.weights.kd}, {"ss", c.weights.ss}, {"t", c.weights.t}}},
      {"temperatures", {{"kd", c.temps.tau_kd}, {"ss", c.temps.tau_ss}}},
      {"select_k_percent", c.k_percent},
      {"select_on_lt", c.select_on_lt},
      {"pretext", pretext::to_string(c.pretext)},
      {"exemplar_classes", c.exemplar_classes},
      {"ss_transforms", {{"enabled", enabled}, {"luma_standard", c.transforms.luma_standard}}},
      {"sweep",
       {{"k_values", c.sweep.k_values},
        {"fractions", c.sweep.fractions},
        {"noise", c.sweep.noise},
        {"seeds", c.sweep.seeds},
        {"methods", c.sweep.methods},
        {"jobs", c.sweep.jobs},
        {"member_dir", c.sweep.member_dir.string()}}},
      {"eval",
       {{"student_checkpoint", c.evaluation.student_checkpoint.string()},
        {"probe_dataset", c.evaluation.probe_dataset},
        {"probe_root", c.evaluation.probe_root.string()},
        {"probe",
         {{"epochs", c.evaluation.probe.epochs},
          {"lr", c.evaluation.probe.lr},
          {"decay_points", c.evaluation.probe.decay_points},
          {"decay_factor", c.evaluation.probe.decay_factor},
          {"batch_size", c.evaluation.probe.batch_size},
          {"momentum", c.evaluation.probe.momentum},
          {"weight_decay", c.evaluation.probe.weight_decay}}},
        {"export_features", c.evaluation.export_features}}},
      {"runtime",
       {{"loader_workers", c.runtime.loader_workers},
        {"threads", c.runtime.threads},
        {"ckpt_every", c.runtime.ckpt_every},
        {"resume", c.runtime.resume},
        {"verbose", c.runtime.verbose},
        {"evaluate_every_epoch", c.runtime.evaluate_every_epoch}}},
  };
}

ExperimentConfig from_json(const json& j) {
  ExperimentConfig c;
  Reader r(j, "");
  r.get("recipe", c.recipe);
  r.get("seed", c.seed);
  r.get_path("output_dir", c.output_dir);
  {
    const json& d = r.child("dataset");
    std::string name = c.dataset.name;
    if (d.contains("name")) {
      if (!d.at("name").is_string()) throw ConfigError("dataset.name: wrong type");
      name = d.at("name").get<std::string>();
    }
    c.dataset = dataset_defaults(name);
    Reader dr(d, "dataset");
    dr.get("name", c.dataset.name);
    dr.get_path("root", c.dataset.root);
    dr.get("num_classes", c.dataset.num_classes);
    dr.get("image_size", c.dataset.image_size);
    dr.get("channels", c.dataset.channels);
    dr.get("train_size", c.dataset.train_size);
    dr.get("test_size", c.dataset.test_size);
    dr.get("generator_seed", c.dataset.generator_seed);
    dr.get("channel_mean", c.dataset.channel_mean);
    dr.get("channel_std", c.dataset.channel_std);
    dr.finish();
  }
  {
    Reader cr(r.child("corruption"), "corruption");
    cr.get("few_shot_fraction", c.corruption.few_shot_fraction);
    cr.get("noise_fraction", c.corruption.noise_fraction);
    cr.finish();
  }
  read_network(r.child("teacher"), "teacher", c.teacher, true);
  read_network(r.child("student"), "student", c.student, false);
  read_schedule(r.child("teacher_schedule"), "teacher_schedule", c.teacher_schedule);
  read_schedule(r.child("stage2_schedule"), "stage2_schedule", c.stage2_schedule);
  read_schedule(r.child("student_schedule"), "student_schedule", c.student_schedule);
  {
    Reader wr(r.child("weights"), "weights");
    wr.get("ce", c.weights.ce);
    wr.get("kd", c.weights.kd);
    wr.get("ss", c.weights.ss);
    wr.get("t", c.weights.t);
    wr.finish();
  }
  {
    Reader tr(r.child("temperatures"), "temperatures");
    tr.get("kd", c.temps.tau_kd);
    tr.get("ss", c.temps.tau_ss);
    tr.finish();
  }
  r.get("select_k_percent", c.k_percent);
  r.get("select_on_lt", c.select_on_lt);
  {
    std::string name = pretext::to_string(c.pretext);
    r.get("pretext", name);
    prefixed("pretext", [&] { c.pretext = pretext::parse_pretext(name); });
  }
  r.get("exemplar_classes", c.exemplar_classes);
  {
    Reader tr(r.child("ss_transforms"), "ss_transforms");
    std::vector<std::string> names;
    tr.get("enabled", names);
    if (tr.has("enabled")) {
      c.transforms.enabled.clear();
      for (const auto& n : names) {
        prefixed("ss_transforms.enabled", [&] { c.transforms.enabled.push_back(ss::parse_transform_tag(n)); });
      }
    }
    tr.get("luma_standard", c.transforms.luma_standard);
    tr.finish();
  }
  {
    Reader sr(r.child("sweep"), "sweep");
    sr.get("k_values", c.sweep.k_values);
    sr.get("fractions", c.sweep.fractions);
    sr.get("noise", c.sweep.noise);
    sr.get("seeds", c.sweep.seeds);
    sr.get("methods", c.sweep.methods);
    sr.get("jobs", c.sweep.jobs);
    sr.get_path("member_dir", c.sweep.member_dir);
    sr.finish();
  }
  {
    Reader er(r.child("eval"), "eval");
    er.get_path("student_checkpoint", c.evaluation.student_checkpoint);
    er.get("probe_dataset", c.evaluation.probe_dataset);
    er.get_path("probe_root", c.evaluation.probe_root);
    {
      auto& p = c.evaluation.probe;
      Reader pr(er.child("probe"), "eval.probe");
      pr.get("epochs", p.epochs);
      pr.get("lr", p.lr);
      pr.get("decay_points", p.decay_points);
      pr.get("decay_factor", p.decay_factor);
      pr.get("batch_size", p.batch_size);
      pr.get("momentum", p.momentum);
      pr.get("weight_decay", p.weight_decay);
      pr.finish();
    }
    er.get("export_features", c.evaluation.export_features);
    er.finish();
  }
  {
    Reader rr(r.child("runtime"), "runtime");
    rr.get("loader_workers", c.runtime.loader_workers);
    rr.get("threads", c.runtime.threads);
    rr.get("ckpt_every", c.runtime.ckpt_every);
    rr.get("resume", c.runtime.resume);
    rr.get("verbose", c.runtime.verbose);
    rr.get("evaluate_every_epoch", c.runtime.evaluate_every_epoch);
    rr.finish();
  }
  r.finish();
  return c;
}

ExperimentConfig load_config(const fs::path& file) {
  std::ifstream in(file);
  if (!in) throw ConfigError("cannot open config file " + file.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(file.string() + ": " + e.what());
  }
  return from_json(j);
}

void save_config(const ExperimentConfig& config, const fs::path& file) {
  std::ofstream out(file);
  if (!out) throw IoError("cannot write " + file.string());
  out << to_json(config).dump(2) << '\n';
}

void apply_override(json& j, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw ConfigError("override '" + assignment + "' is not of the form key=value");
  }
  const std::string key = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  json value = json::parse(text, nullptr, false);
  if (value.is_discarded()) value = text;
  std::string pointer;
  std::size_t start = 0;
  while (true) {
    const auto dot = key.find('.', start);
    const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (part.empty()) throw ConfigError("override '" + assignment + "' has an empty key segment");
    pointer += "/" + part;
    if (dot == std::string::npos) break;
    start = dot + 1;
  }
  j[json::json_pointer(pointer)] = value;
}

}  // namespace sskd::config
