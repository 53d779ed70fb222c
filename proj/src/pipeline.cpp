#include "sskd/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <thread>

#include <nlohmann/json.hpp>

#include "sskd/errors.hpp"
#include "sskd/selector.hpp"

namespace sskd::pipeline {

namespace fs = std::filesystem;
using models::NetworkTriad;
using models::Part;

void TrainSchedule::validate() const {
  if (epochs < 1) throw ConfigError("schedule.epochs must be >= 1, got " + std::to_string(epochs));
  if (batch_size < 2) {
    throw ConfigError("schedule.batch_size must be >= 2, got " + std::to_string(batch_size));
  }
  if (!(lr_init > 0.0) || !std::isfinite(lr_init)) throw ConfigError("schedule.lr_init must be > 0");
  if (!(lr_decay_factor > 0.0) || !std::isfinite(lr_decay_factor)) {
    throw ConfigError("schedule.lr_decay_factor must be > 0");
  }
  if (weight_decay < 0.0) throw ConfigError("schedule.weight_decay must be >= 0");
  if (momentum < 0.0 || momentum >= 1.0) throw ConfigError("schedule.momentum must lie in [0, 1)");
  for (std::size_t i = 0; i < lr_decay_points.size(); ++i) {
    const int p = lr_decay_points[i];
    if (p < 0 || p >= epochs) {
      throw ConfigError("schedule.lr_decay_points: " + std::to_string(p) + " is outside [0, " +
                        std::to_string(epochs) + ")");
    }
    if (i > 0 && p <= lr_decay_points[i - 1]) {
      throw ConfigError("schedule.lr_decay_points must be strictly increasing");
    }
  }
}

double TrainSchedule::lr_at(int epoch) const {
  const auto passed = std::count_if(lr_decay_points.begin(), lr_decay_points.end(),
                                    [epoch](int p) { return p <= epoch; });
  return lr_init * std::pow(lr_decay_factor, static_cast<double>(passed));
}

std::string to_csv_row(const EpochMetrics& m) {
  std::ostringstream os;
  os << std::setprecision(17) << m.epoch << ',' << m.lr << ',' << m.l_ce << ',' << m.l_kd << ','
     << m.l_ss << ',' << m.l_t << ',' << m.total << ',' << m.test_acc;
  return os.str();
}

void write_record_csv(const RunRecord& record, const fs::path& file) {
  std::ofstream out(file);
  if (!out) throw IoError("cannot write " + file.string());
  out << kRecordHeader << '\n';
  for (const auto& m : record.epochs) out << to_csv_row(m) << '\n';
}

std::vector<EpochMetrics> read_record_csv(const fs::path& file) {
  std::ifstream in(file);
  if (!in) throw LoadError("cannot read run record " + file.string());
  std::string line;
  if (!std::getline(in, line) || line != kRecordHeader) {
    throw LoadError(file.string() + ": unexpected header");
  }
  std::vector<EpochMetrics> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream is(line);
    EpochMetrics m;
    if (!(is >> m.epoch >> m.lr >> m.l_ce >> m.l_kd >> m.l_ss >> m.l_t >> m.total >> m.test_acc)) {
      throw LoadError(file.string() + ": malformed row");
    }
    if (!rows.empty() && m.epoch <= rows.back().epoch) {
      throw LoadError(file.string() + ": epoch indices are not increasing");
    }
    rows.push_back(m);
  }
  return rows;
}

namespace {

torch::Tensor normalized_tensor(const data::Dataset& ds) {
  std::vector<data::Image> images;
  images.reserve(ds.size());
  for (std::size_t i = 0; i < ds.size(); ++i) images.push_back(data::normalize(ds.image(i), ds.spec()));
  return data::to_tensor(images);
}

}  // namespace

DataBundle::DataBundle(data::Dataset train, data::Dataset test)
    : train_(std::move(train)), test_(std::move(test)) {
  if (train_.size() < 2) throw DegenerateInputError("training split holds fewer than 2 images");
  if (test_.size() == 0) throw DegenerateInputError("test split is empty");
  if (train_.num_classes() != test_.num_classes()) {
    throw ConfigError("train and test splits disagree on the class count");
  }
  test_images_ = normalized_tensor(test_);
  test_labels_ = torch::tensor(test_.labels(), torch::kInt64);
}

BatchSource::BatchSource(const data::Dataset& dataset, std::uint64_t seed, int batch_size, int workers,
                         ss::TransformPool pool)
    : dataset_(dataset), seed_(seed), batch_size_(batch_size), workers_(std::max(1, workers)),
      pool_(std::move(pool)) {
  if (batch_size_ < 2) throw ConfigError("batch_size must be >= 2");
  pool_.validate();
}

std::vector<std::vector<std::size_t>> BatchSource::epoch_batches(int epoch) const {
  std::vector<std::size_t> order(dataset_.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(derive_seed(seed_, "order", {static_cast<std::uint64_t>(epoch)}));
  std::shuffle(order.begin(), order.end(), rng.engine());
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t start = 0; start < order.size(); start += batch_size_) {
    const std::size_t end = std::min(order.size(), start + batch_size_);
    if (end - start < 2) break;
    batches.emplace_back(order.begin() + start, order.begin() + end);
  }
  return batches;
}

StepViews BatchSource::make(int epoch, const std::vector<std::size_t>& positions,
                            const ViewRequest& request) const {
  const std::size_t n = positions.size();
  const bool want_pretext = request.pretext != pretext::PretextKind::Contrastive;
  std::vector<data::Image> normal(n), transformed(request.transformed ? n : 0),
      pre(want_pretext ? n : 0);
  std::vector<ss::TransformKind> kinds(request.transformed ? n : 0);
  std::vector<std::int64_t> labels(n), indices(n), pre_labels(want_pretext ? n : 0);
  const auto& spec = dataset_.spec();
  const auto e = static_cast<std::uint64_t>(epoch);

  auto work = [&](std::size_t lo, std::size_t hi) {
    for (std::size_t i = lo; i < hi; ++i) {
      const std::size_t p = positions[i];
      const auto idx = static_cast<std::uint64_t>(dataset_.index(p));
      labels[i] = dataset_.label(p);
      indices[i] = dataset_.index(p);
      data::Image raw = dataset_.image(p);
      if (request.augment) {
        Rng rng(derive_seed(seed_, "augment", {e, idx}));
        raw = data::augment_raw(raw, rng);
      }
      normal[i] = data::normalize(raw, spec);
      if (request.transformed) {
        Rng rng(derive_seed(seed_, "ss-transform", {e, idx}));
        kinds[i] = ss::sample_transform(rng, pool_);
        transformed[i] = data::normalize(ss::apply_transform(raw, kinds[i], pool_), spec);
      }
      if (want_pretext) {
        Rng rng(derive_seed(seed_, "pretext", {e, idx}));
        pre[i] = data::normalize(
            pretext::make_pretext_input(raw, indices[i], request.pretext, rng, pool_,
                                        request.exemplar_classes, pre_labels[i]),
            spec);
      }
    }
  };

  const std::size_t workers = std::min<std::size_t>(static_cast<std::size_t>(workers_), n);
  if (workers <= 1) {
    work(0, n);
  } else {
    std::vector<std::jthread> threads;
    const std::size_t chunk = (n + workers - 1) / workers;
    for (std::size_t lo = 0; lo < n; lo += chunk) threads.emplace_back(work, lo, std::min(n, lo + chunk));
  }

  StepViews views;
  views.normal.images = data::to_tensor(normal);
  views.normal.labels = torch::tensor(labels, torch::kInt64);
  views.normal.indices = std::move(indices);
  if (request.transformed) {
    views.transformed = data::to_tensor(transformed);
    views.kinds = std::move(kinds);
  }
  if (want_pretext) {
    views.pretext.inputs = data::to_tensor(pre);
    views.pretext.labels = torch::tensor(pre_labels, torch::kInt64);
  }
  return views;
}

models::NetworkTriad make_triad(const models::TriadSpec& spec, std::uint64_t seed) {
  spec.validate();
  torch::manual_seed(derive_seed(seed, "init") & 0x7fffffffffffffffULL);
  return NetworkTriad(spec);
}

double test_accuracy(NetworkTriad& net, const DataBundle& data) {
  torch::NoGradGuard guard;
  const bool was_training = net->is_training();
  net->eval();
  const auto& images = data.test_images();
  const std::int64_t n = images.size(0);
  std::int64_t hits = 0;
  for (std::int64_t start = 0; start < n; start += 256) {
    const std::int64_t end = std::min(n, start + 256);
    auto logits = net->forward_logits(images.slice(0, start, end));
    hits += logits.argmax(1).eq(data.test_labels().slice(0, start, end)).sum().item<std::int64_t>();
  }
  net->train(was_training);
  return 100.0 * static_cast<double>(hits) / static_cast<double>(n);
}

namespace {

struct StepLosses {
  double ce = 0.0, kd = 0.0, ss = 0.0, t = 0.0, total = 0.0;
  std::size_t selected = 0;
};

// SGD with momentum; the projection head's biases are exempt from weight decay.
std::unique_ptr<torch::optim::SGD> make_optimizer(NetworkTriad& net, const TrainSchedule& schedule) {
  std::vector<torch::Tensor> decayed, plain;
  for (const auto& item : net->named_parameters()) {
    if (!item.value().requires_grad()) continue;
    const bool head_bias = item.key().rfind("head.", 0) == 0 &&
                           item.key().size() >= 4 &&
                           item.key().compare(item.key().size() - 4, 4, "bias") == 0;
    (head_bias ? plain : decayed).push_back(item.value());
  }
  if (decayed.empty() && plain.empty()) throw ConfigError("network has no trainable parameters");
  auto options = [&](double wd) {
    return std::make_unique<torch::optim::SGDOptions>(
        torch::optim::SGDOptions(schedule.lr_init).momentum(schedule.momentum).weight_decay(wd));
  };
  std::vector<torch::optim::OptimizerParamGroup> groups;
  if (!decayed.empty()) groups.emplace_back(decayed, options(schedule.weight_decay));
  if (!plain.empty()) groups.emplace_back(plain, options(0.0));
  return std::make_unique<torch::optim::SGD>(groups, torch::optim::SGDOptions(schedule.lr_init));
}

void set_lr(torch::optim::SGD& opt, double lr) {
  for (auto& group : opt.param_groups()) static_cast<torch::optim::SGDOptions&>(group.options()).lr(lr);
}

std::vector<std::pair<std::string, torch::Tensor>> state_copy(NetworkTriad& net) {
  std::vector<std::pair<std::string, torch::Tensor>> out;
  for (const auto& p : net->named_parameters()) out.emplace_back(p.key(), p.value().detach().clone());
  for (const auto& b : net->named_buffers()) out.emplace_back(b.key(), b.value().detach().clone());
  return out;
}

void restore(NetworkTriad& net, const std::vector<std::pair<std::string, torch::Tensor>>& state) {
  torch::NoGradGuard guard;
  auto params = net->named_parameters();
  auto buffers = net->named_buffers();
  for (const auto& [name, value] : state) {
    if (auto* p = params.find(name)) {
      p->copy_(value);
    } else if (auto* b = buffers.find(name)) {
      b->copy_(value);
    }
  }
}

void ensure_finite(const torch::Tensor& t, const char* what) {
  if (!std::isfinite(t.item<double>())) throw NumericError(std::string(what) + " is not finite");
}

using StepFn = std::function<StepLosses(int epoch, const std::vector<std::size_t>& positions)>;
using EvalFn = std::function<double()>;

// Shared epoch loop: schedule, logging, checkpoints, resume and divergence.
RunRecord run_loop(NetworkTriad& net, torch::optim::SGD& opt, const BatchSource& source,
                   const TrainSchedule& schedule, const TrainOptions& options,
                   const std::string& method, const StepFn& step, const EvalFn& eval) {
  const auto t0 = std::chrono::steady_clock::now();
  RunRecord record;
  record.method = method;
  int first_epoch = 0;
  const bool to_disk = !options.run_dir.empty();
  const fs::path csv = options.run_dir / "record.csv";
  if (to_disk) fs::create_directories(options.run_dir);

  if (to_disk && options.resume && fs::exists(options.run_dir / "resume.json")) {
    std::ifstream in(options.run_dir / "resume.json");
    const auto state = nlohmann::json::parse(in);
    const int done = state.at("epochs_done").get<int>();
    models::load_weights(net, options.run_dir / state.at("checkpoint").get<std::string>());
    torch::load(opt, (options.run_dir / state.at("optimizer").get<std::string>()).string());
    for (const auto& m : read_record_csv(csv)) {
      if (m.epoch < done) record.epochs.push_back(m);
    }
    record.checkpoints = state.value("checkpoints", std::vector<std::string>{});
    first_epoch = done;
    write_record_csv(record, csv);
  } else if (to_disk) {
    write_record_csv(record, csv);
  }

  auto save_state = [&](int epochs_done, const std::string& stem) {
    const std::string model_file = stem + ".pt";
    const std::string optim_file = stem + ".optim.pt";
    models::save_checkpoint(net, options.run_dir / model_file);
    torch::save(opt, (options.run_dir / optim_file).string());
    record.checkpoints.push_back((options.run_dir / model_file).string());
    nlohmann::json state = {{"epochs_done", epochs_done},
                            {"checkpoint", model_file},
                            {"optimizer", optim_file},
                            {"checkpoints", record.checkpoints}};
    std::ofstream(options.run_dir / "resume.json") << state.dump(2) << '\n';
  };

  std::int64_t global_step = 0;
  for (int epoch = first_epoch; epoch < schedule.epochs; ++epoch) {
    const double lr = schedule.lr_at(epoch);
    set_lr(opt, lr);
    const auto last_good = state_copy(net);
    EpochMetrics m;
    m.epoch = epoch;
    m.lr = lr;
    std::size_t steps = 0;
    bool stop = false;
    for (const auto& positions : source.epoch_batches(epoch)) {
      StepLosses l;
      try {
        l = step(epoch, positions);
      } catch (const NumericError& e) {
        restore(net, last_good);
        std::string where;
        if (to_disk) {
          models::save_checkpoint(net, options.run_dir / "last_good.pt");
          where = "; last good weights in " + (options.run_dir / "last_good.pt").string();
        }
        throw DivergenceError("training diverged at epoch " + std::to_string(epoch) + ": " + e.what() +
                              where);
      }
      m.l_ce += l.ce;
      m.l_kd += l.kd;
      m.l_ss += l.ss;
      m.l_t += l.t;
      m.total += l.total;
      ++steps;
      ++global_step;
      if (options.on_step) {
        options.on_step(StepLog{global_step, epoch, lr, l.ce, l.kd, l.ss, l.t, l.total,
                                positions.size(), l.selected});
      }
      if (options.max_steps > 0 && global_step >= options.max_steps) {
        stop = true;
        break;
      }
    }
    if (steps > 0) {
      const double s = static_cast<double>(steps);
      m.l_ce /= s;
      m.l_kd /= s;
      m.l_ss /= s;
      m.l_t /= s;
      m.total /= s;
    }
    const bool last = stop || epoch + 1 == schedule.epochs;
    m.test_acc = (options.evaluate || last) ? eval() : 0.0;
    record.epochs.push_back(m);
    if (options.verbose) {
      std::cerr << method << " epoch " << epoch << " lr " << lr << " total " << m.total << " acc "
                << m.test_acc << '\n';
    }
    if (to_disk) {
      std::ofstream(csv, std::ios::app) << to_csv_row(m) << '\n';
      if (options.ckpt_every > 0 && (epoch + 1) % options.ckpt_every == 0 && !last) {
        save_state(epoch + 1, "ckpt_e" + std::to_string(epoch + 1));
      }
    }
    if (stop) break;
  }
  if (to_disk) save_state(static_cast<int>(record.epochs.empty() ? 0 : record.epochs.back().epoch + 1), "final");
  record.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return record;
}

void check_teacher_ready(NetworkTriad& student, NetworkTriad& teacher) {
  if (student->spec().num_classes != teacher->spec().num_classes) {
    throw ConfigError("teacher has " + std::to_string(teacher->spec().num_classes) +
                      " classes but student has " + std::to_string(student->spec().num_classes));
  }
}

}  // namespace

RunRecord train_teacher_stage1(NetworkTriad& net, const DataBundle& data, const TrainSchedule& schedule,
                               const TrainOptions& options) {
  schedule.validate();
  if (net->spec().role != models::Role::Teacher) throw ConfigError("stage 1 expects a teacher network");
  if (net->spec().num_classes != data.num_classes()) {
    throw ConfigError("network and dataset disagree on the class count");
  }
  net->unfreeze_all();
  net->freeze({Part::ProjectionHead});
  net->train();
  auto opt = make_optimizer(net, schedule);
  BatchSource source(data.train(), schedule.seed, schedule.batch_size, options.loader_workers, options.pool);

  auto step = [&](int epoch, const std::vector<std::size_t>& positions) {
    auto views = source.make(epoch, positions, ViewRequest{});
    auto logits = net->forward_logits(views.normal.images);
    auto ce = torch::nn::functional::cross_entropy(logits, views.normal.labels);
    ensure_finite(ce, "cross-entropy");
    opt->zero_grad();
    ce.backward();
    opt->step();
    StepLosses l;
    l.ce = l.total = ce.item<double>();
    return l;
  };
  auto eval = [&] { return test_accuracy(net, data); };
  auto record = run_loop(net, *opt, source, schedule, options, "teacher-s1", step, eval);
  net->unfreeze_all();
  return record;
}

namespace {

ViewRequest stage2_request(const Stage2Config& config, bool augment) {
  ViewRequest r;
  r.augment = augment;
  r.transformed = config.pretext == pretext::PretextKind::Contrastive;
  r.pretext = config.pretext;
  r.exemplar_classes = config.exemplar_classes;
  return r;
}

}  // namespace

double self_supervision_accuracy(NetworkTriad& net, const data::Dataset& dataset, const Stage2Config& config,
                                 int batch_size, std::uint64_t seed, const ss::TransformPool& pool) {
  torch::NoGradGuard guard;
  const bool was_training = net->is_training();
  net->eval();
  BatchSource source(dataset, derive_seed(seed, "ss-eval"), batch_size, 1, pool);
  const auto request = stage2_request(config, false);
  std::int64_t hits = 0, total = 0;
  std::vector<std::size_t> positions;
  auto flush = [&] {
    if (positions.size() < 2) return;
    auto views = source.make(0, positions, request);
    if (config.pretext == pretext::PretextKind::Contrastive) {
      const auto n = static_cast<std::int64_t>(positions.size());
      auto z = net->project(net->forward_features(torch::cat({views.normal.images, views.transformed})));
      auto a = losses::similarity_matrix(z.slice(0, n, 2 * n), z.slice(0, 0, n));
      for (auto r : selector::error_levels(a)) hits += (r == 1);
      total += n;
    } else {
      auto logits = net->project(net->forward_features(views.pretext.inputs));
      hits += logits.argmax(1).eq(views.pretext.labels).sum().item<std::int64_t>();
      total += views.pretext.labels.size(0);
    }
  };
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    positions.push_back(i);
    if (positions.size() == static_cast<std::size_t>(batch_size)) {
      flush();
      positions.clear();
    }
  }
  flush();
  net->train(was_training);
  if (total == 0) throw DegenerateInputError("self-supervision accuracy needs at least 2 images");
  return 100.0 * static_cast<double>(hits) / static_cast<double>(total);
}

RunRecord train_teacher_stage2(NetworkTriad& net, const DataBundle& data, const TrainSchedule& schedule,
                               const Stage2Config& config, const TrainOptions& options) {
  schedule.validate();
  if (!(config.tau > 0.0)) throw DomainError("stage 2 temperature must be > 0");
  if (net->spec().role != models::Role::Teacher) throw ConfigError("stage 2 expects a teacher network");
  const auto task = pretext::PretextTask::make(config.pretext, net->spec().head_out, config.exemplar_classes);
  if (task.head_arity != net->spec().head_out) {
    throw ConfigError("pretext " + pretext::to_string(config.pretext) + " needs a head of width " +
                      std::to_string(task.head_arity) + ", network has " +
                      std::to_string(net->spec().head_out));
  }
  net->unfreeze_all();
  net->freeze({Part::Backbone, Part::Classifier});
  net->train();
  const auto backbone_before = models::snapshot(*net, Part::Backbone);
  const auto classifier_before = models::snapshot(*net, Part::Classifier);
  const auto frozen_sum = models::parameter_checksum(*net, Part::Backbone) ^
                          mix64(models::parameter_checksum(*net, Part::Classifier));
  auto verify_frozen = [&] {
    const double d = std::max(models::max_abs_delta(backbone_before, models::snapshot(*net, Part::Backbone)),
                              models::max_abs_delta(classifier_before, models::snapshot(*net, Part::Classifier)));
    const auto sum = models::parameter_checksum(*net, Part::Backbone) ^
                     mix64(models::parameter_checksum(*net, Part::Classifier));
    if (d != 0.0 || sum != frozen_sum) {
      throw InvariantViolation("stage 2 changed frozen backbone/classifier parameters (max delta " +
                               std::to_string(d) + ")");
    }
  };

  auto opt = make_optimizer(net, schedule);
  BatchSource source(data.train(), schedule.seed, schedule.batch_size, options.loader_workers, options.pool);
  const auto request = stage2_request(config, true);

  auto step = [&](int epoch, const std::vector<std::size_t>& positions) {
    auto views = source.make(epoch, positions, request);
    torch::Tensor loss;
    if (config.pretext == pretext::PretextKind::Contrastive) {
      const auto n = static_cast<std::int64_t>(positions.size());
      torch::Tensor features;
      {
        torch::NoGradGuard guard;
        features = net->forward_features(torch::cat({views.normal.images, views.transformed}));
      }
      auto z = net->project(features);
      auto a = losses::similarity_matrix(z.slice(0, n, 2 * n), z.slice(0, 0, n));
      loss = losses::contrastive_loss(a, config.tau) / static_cast<double>(n);
    } else {
      torch::Tensor features;
      {
        torch::NoGradGuard guard;
        features = net->forward_features(views.pretext.inputs);
      }
      loss = torch::nn::functional::cross_entropy(net->project(features), views.pretext.labels);
    }
    ensure_finite(loss, "self-supervision loss");
    opt->zero_grad();
    loss.backward();
    opt->step();
    StepLosses l;
    l.ss = l.total = loss.item<double>();
    return l;
  };
  auto eval = [&] {
    verify_frozen();
    return self_supervision_accuracy(net, data.test(), config, schedule.batch_size, schedule.seed,
                                     options.pool);
  };
  auto record = run_loop(net, *opt, source, schedule, options, "teacher-s2", step, eval);
  verify_frozen();
  record.ss_accuracy = record.final_accuracy();
  net->unfreeze_all();
  return record;
}

void StudentConfig::validate() const {
  weights.validate();
  temps.validate();
  if (!(k_percent >= 0.0 && k_percent <= 100.0)) {
    throw ConfigError("k_percent must lie in [0, 100], got " + std::to_string(k_percent));
  }
  if (exemplar_classes < 2) throw ConfigError("exemplar_classes must be >= 2");
}

RunRecord train_student(NetworkTriad& student, NetworkTriad& teacher, const DataBundle& data,
                        const TrainSchedule& schedule, const StudentConfig& config,
                        const TrainOptions& options) {
  schedule.validate();
  config.validate();
  check_teacher_ready(student, teacher);
  if (student->spec().num_classes != data.num_classes()) {
    throw ConfigError("student and dataset disagree on the class count");
  }
  const bool ss_branch = config.weights.ss > 0.0 || config.weights.t > 0.0;
  const bool contrastive = config.pretext == pretext::PretextKind::Contrastive;
  const bool pretext_path = !contrastive && config.weights.ss > 0.0;
  if (pretext_path) {
    const auto task = pretext::PretextTask::make(config.pretext, 128, config.exemplar_classes);
    if (teacher->spec().head_out != task.head_arity || student->spec().head_out != task.head_arity) {
      throw ConfigError("pretext " + pretext::to_string(config.pretext) + " needs heads of width " +
                        std::to_string(task.head_arity));
    }
  }

  teacher->unfreeze_all();
  teacher->eval();
  const auto teacher_sum = models::parameter_checksum(*teacher);
  student->unfreeze_all();
  student->train();
  auto opt = make_optimizer(student, schedule);
  BatchSource source(data.train(), schedule.seed, schedule.batch_size, options.loader_workers, options.pool);
  ViewRequest request;
  request.transformed = ss_branch;
  request.pretext = pretext_path ? config.pretext : pretext::PretextKind::Contrastive;
  request.exemplar_classes = config.exemplar_classes;
  const auto& w = config.weights;
  const auto& tau = config.temps;

  auto step = [&](int epoch, const std::vector<std::size_t>& positions) {
    auto views = source.make(epoch, positions, request);
    const auto n = static_cast<std::int64_t>(positions.size());
    const auto input = ss_branch ? torch::cat({views.normal.images, views.transformed}) : views.normal.images;

    torch::Tensor t_logits, t_prob, t_pre;
    std::optional<torch::Tensor> mask;
    std::size_t selected = static_cast<std::size_t>(n);
    {
      torch::NoGradGuard guard;
      auto ft = teacher->forward_features(input);
      t_logits = teacher->classify(ft);
      if (ss_branch && contrastive) {
        auto zt = teacher->project(ft);
        auto at = losses::similarity_matrix(zt.slice(0, n, 2 * n), zt.slice(0, 0, n));
        auto m = selector::build_mask(selector::error_levels(at), config.k_percent);
        selected = m.count();
        mask = losses::mask_tensor(m.selected);
        if (w.ss > 0.0) t_prob = losses::probability_matrix(at, tau.tau_ss);
      }
      if (pretext_path) t_pre = teacher->project(teacher->forward_features(views.pretext.inputs));
    }

    auto fs_ = student->forward_features(input);
    auto s_logits = student->classify(fs_);
    losses::LossTerms terms;
    terms.ce = torch::nn::functional::cross_entropy(s_logits.slice(0, 0, n), views.normal.labels);
    terms.kd = losses::kd_loss(t_logits.slice(0, 0, n), s_logits.slice(0, 0, n), tau.tau_kd);
    if (w.ss > 0.0) {
      if (contrastive) {
        auto zs = student->project(fs_);
        auto as = losses::similarity_matrix(zs.slice(0, n, 2 * n), zs.slice(0, 0, n));
        terms.ss = losses::ss_loss(t_prob, losses::probability_matrix(as, tau.tau_ss), tau.tau_ss, mask);
      } else {
        auto s_pre = student->project(student->forward_features(views.pretext.inputs));
        terms.ss = pretext::pretext_distill_loss(t_pre, s_pre, tau.tau_kd);
      }
    }
    if (w.t > 0.0) {
      terms.t = losses::transformed_kd_loss(t_logits.slice(0, n, 2 * n), s_logits.slice(0, n, 2 * n),
                                            tau.tau_kd,
                                            (config.select_on_lt && contrastive) ? mask : std::nullopt);
    }
    auto total = losses::total_student_loss(terms, w);
    opt->zero_grad();
    total.backward();
    opt->step();

    StepLosses l;
    l.ce = terms.ce.item<double>();
    l.kd = terms.kd.item<double>();
    l.ss = terms.ss.defined() ? terms.ss.item<double>() : 0.0;
    l.t = terms.t.defined() ? terms.t.item<double>() : 0.0;
    l.total = total.item<double>();
    l.selected = selected;
    return l;
  };
  auto eval = [&] { return test_accuracy(student, data); };
  auto record = run_loop(student, *opt, source, schedule, options, config.method, step, eval);
  if (models::parameter_checksum(*teacher) != teacher_sum) {
    throw InvariantViolation("teacher parameters changed during student training");
  }
  return record;
}

RunRecord distill_baseline_kd(NetworkTriad& student, NetworkTriad& teacher, const DataBundle& data,
                              const TrainSchedule& schedule, const losses::LossWeights& weights,
                              double tau, const TrainOptions& options) {
  schedule.validate();
  losses::LossWeights w{weights.ce, weights.kd, 0.0, 0.0};
  w.validate();
  losses::Temperatures{tau, 0.5}.validate();
  check_teacher_ready(student, teacher);
  if (student->spec().num_classes != data.num_classes()) {
    throw ConfigError("student and dataset disagree on the class count");
  }
  teacher->unfreeze_all();
  teacher->eval();
  const auto teacher_sum = models::parameter_checksum(*teacher);
  student->unfreeze_all();
  student->train();
  auto opt = make_optimizer(student, schedule);
  BatchSource source(data.train(), schedule.seed, schedule.batch_size, options.loader_workers, options.pool);

  auto step = [&](int epoch, const std::vector<std::size_t>& positions) {
    auto views = source.make(epoch, positions, ViewRequest{});
    torch::Tensor t_logits;
    {
      torch::NoGradGuard guard;
      t_logits = teacher->classify(teacher->forward_features(views.normal.images));
    }
    auto s_logits = student->classify(student->forward_features(views.normal.images));
    losses::LossTerms terms;
    terms.ce = torch::nn::functional::cross_entropy(s_logits, views.normal.labels);
    terms.kd = losses::kd_loss(t_logits, s_logits, tau);
    auto total = losses::total_student_loss(terms, w);
    opt->zero_grad();
    total.backward();
    opt->step();
    StepLosses l;
    l.ce = terms.ce.item<double>();
    l.kd = terms.kd.item<double>();
    l.total = total.item<double>();
    l.selected = 0;
    return l;
  };
  auto eval = [&] { return test_accuracy(student, data); };
  auto record = run_loop(student, *opt, source, schedule, options, "kd", step, eval);
  if (models::parameter_checksum(*teacher) != teacher_sum) {
    throw InvariantViolation("teacher parameters changed during distillation");
  }
  return record;
}

}  // namespace sskd::pipeline
