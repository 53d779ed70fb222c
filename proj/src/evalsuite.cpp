#include "sskd/evalsuite.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "sskd/errors.hpp"
#include "sskd/rng.hpp"

namespace sskd::eval {

namespace fs = std::filesystem;
using models::NetworkTriad;

static_assert(std::endian::native == std::endian::little, "feature files assume a little-endian host");

double top_k_accuracy(const torch::Tensor& logits, const torch::Tensor& labels, std::int64_t k) {
  if (logits.dim() != 2) throw DimensionError("top_k_accuracy: logits must be (N, C)");
  if (labels.dim() != 1 || labels.size(0) != logits.size(0)) {
    throw DimensionError("top_k_accuracy: labels must be (N) matching the logits");
  }
  const std::int64_t n = logits.size(0), c = logits.size(1);
  if (k < 1 || k > c) throw ConfigError("top_k_accuracy: k=" + std::to_string(k) + " outside [1, " + std::to_string(c) + "]");
  if (n == 0) throw DegenerateInputError("top_k_accuracy: empty batch");
  auto l = logits.detach().to(torch::kFloat64).contiguous();
  auto y = labels.to(torch::kInt64).contiguous();
  const double* p = l.data_ptr<double>();
  const std::int64_t* t = y.data_ptr<std::int64_t>();
  std::int64_t hits = 0;
  for (std::int64_t i = 0; i < n; ++i) {
    const std::int64_t label = t[i];
    if (label < 0 || label >= c) throw DomainError("top_k_accuracy: label out of range");
    const double v = p[i * c + label];
    std::int64_t above = 0;
    for (std::int64_t j = 0; j < c; ++j) {
      const double u = p[i * c + j];
      if (u > v || (u == v && j < label)) ++above;
    }
    if (above < k) ++hits;
  }
  return 100.0 * static_cast<double>(hits) / static_cast<double>(n);
}

torch::Tensor dataset_tensor(const data::Dataset& dataset) {
  std::vector<data::Image> images;
  images.reserve(dataset.size());
  for (std::size_t i = 0; i < dataset.size(); ++i) images.push_back(data::normalize(dataset.image(i), dataset.spec()));
  return data::to_tensor(images);
}

torch::Tensor dataset_labels(const data::Dataset& dataset) {
  return torch::tensor(dataset.labels(), torch::kInt64);
}

namespace {

template <typename Fn>
torch::Tensor chunked(NetworkTriad& net, const torch::Tensor& images, std::int64_t chunk, Fn fn) {
  torch::NoGradGuard guard;
  const bool was_training = net->is_training();
  net->eval();
  std::vector<torch::Tensor> parts;
  for (std::int64_t s = 0; s < images.size(0); s += chunk) {
    parts.push_back(fn(images.slice(0, s, std::min(images.size(0), s + chunk))));
  }
  net->train(was_training);
  return torch::cat(parts);
}

}  // namespace

torch::Tensor predict_logits(NetworkTriad& net, const torch::Tensor& images, std::int64_t chunk) {
  return chunked(net, images, chunk, [&](const torch::Tensor& x) { return net->forward_logits(x); });
}

torch::Tensor extract_features(NetworkTriad& net, const torch::Tensor& images, std::int64_t chunk) {
  return chunked(net, images, chunk, [&](const torch::Tensor& x) { return net->forward_features(x); });
}

ProbeResult linear_probe(NetworkTriad& net, const data::Dataset& train, const data::Dataset& test,
                         const ProbeSchedule& schedule, const std::string& source) {
  if (schedule.epochs < 0) throw ConfigError("probe epochs must be >= 0");
  if (schedule.batch_size < 1) throw ConfigError("probe batch size must be >= 1");
  if (train.num_classes() != test.num_classes()) throw ConfigError("probe splits disagree on class count");
  const std::uint64_t before = models::parameter_checksum(net->backbone());

  const auto x_train = extract_features(net, dataset_tensor(train));
  const auto y_train = dataset_labels(train);
  const auto x_test = extract_features(net, dataset_tensor(test));
  const auto y_test = dataset_labels(test);

  const std::int64_t d = x_train.size(1), c = train.num_classes(), n = x_train.size(0);
  torch::nn::Linear probe(torch::nn::LinearOptions(d, c));
  {
    torch::NoGradGuard guard;
    probe->weight.zero_();
    probe->bias.zero_();
  }
  torch::optim::SGD opt(probe->parameters(), torch::optim::SGDOptions(schedule.lr)
                                                 .momentum(schedule.momentum)
                                                 .weight_decay(schedule.weight_decay));
  for (int epoch = 0; epoch < schedule.epochs; ++epoch) {
    double lr = schedule.lr;
    for (int p : schedule.decay_points) {
      if (p <= epoch) lr *= schedule.decay_factor;
    }
    for (auto& g : opt.param_groups()) static_cast<torch::optim::SGDOptions&>(g.options()).lr(lr);
    std::vector<std::int64_t> order(n);
    for (std::int64_t i = 0; i < n; ++i) order[i] = i;
    Rng rng(derive_seed(schedule.seed, "probe-order", {static_cast<std::uint64_t>(epoch)}));
    std::shuffle(order.begin(), order.end(), rng.engine());
    const auto perm = torch::tensor(order, torch::kInt64);
    for (std::int64_t s = 0; s < n; s += schedule.batch_size) {
      const auto idx = perm.slice(0, s, std::min(n, s + schedule.batch_size));
      auto loss = torch::nn::functional::cross_entropy(probe->forward(x_train.index_select(0, idx)),
                                                       y_train.index_select(0, idx));
      opt.zero_grad();
      loss.backward();
      opt.step();
    }
  }

  ProbeResult result;
  {
    torch::NoGradGuard guard;
    result.accuracy = top_k_accuracy(probe->forward(x_test), y_test, 1);
  }
  result.source = source;
  result.target = test.spec().name;
  result.backbone_checksum = models::parameter_checksum(net->backbone());
  if (result.backbone_checksum != before) throw InvariantViolation("linear probe modified the backbone");
  return result;
}

double teacher_student_kl(const torch::Tensor& teacher_logits, const torch::Tensor& student_logits) {
  if (teacher_logits.dim() != 2 || !teacher_logits.sizes().equals(student_logits.sizes())) {
    throw ConfigError("teacher_student_kl: logits must share shape (N, C)");
  }
  if (teacher_logits.size(0) == 0) throw DegenerateInputError("teacher_student_kl: empty input");
  auto lt = torch::log_softmax(teacher_logits.detach().to(torch::kFloat64), 1);
  auto ls = torch::log_softmax(student_logits.detach().to(torch::kFloat64), 1);
  auto kl = (lt.exp() * (lt - ls)).sum(1).mean().item<double>();
  return std::max(0.0, kl);
}

double teacher_student_kl(NetworkTriad& teacher, NetworkTriad& student, const data::Dataset& dataset) {
  if (teacher->spec().num_classes != student->spec().num_classes) {
    throw ConfigError("teacher_student_kl: class counts differ");
  }
  const auto x = dataset_tensor(dataset);
  return teacher_student_kl(predict_logits(teacher, x), predict_logits(student, x));
}

double cka_similarity(const torch::Tensor& x, const torch::Tensor& y) {
  if (x.dim() != 2 || y.dim() != 2 || x.size(0) != y.size(0)) {
    throw DimensionError("cka_similarity: expects (M, D1) and (M, D2)");
  }
  if (x.size(0) < 2) throw DegenerateInputError("cka_similarity: needs M >= 2");
  auto xc = x.detach().to(torch::kFloat64);
  auto yc = y.detach().to(torch::kFloat64);
  xc = xc - xc.mean(0, true);
  yc = yc - yc.mean(0, true);
  const double nx = torch::matmul(xc.t(), xc).norm().item<double>();
  const double ny = torch::matmul(yc.t(), yc).norm().item<double>();
  if (!(nx > 0.0) || !(ny > 0.0)) throw DegenerateInputError("cka_similarity: zero-variance features");
  const double cross = torch::matmul(yc.t(), xc).pow(2).sum().item<double>();
  return cross / (nx * ny);
}

SimilarityReport similarity_report(NetworkTriad& teacher, NetworkTriad& student, const data::Dataset& dataset) {
  if (teacher->spec().num_classes != student->spec().num_classes) {
    throw ConfigError("similarity_report: class counts differ");
  }
  const auto x = dataset_tensor(dataset);
  SimilarityReport r;
  r.dataset = dataset.spec().name;
  r.kl_divergence = teacher_student_kl(predict_logits(teacher, x), predict_logits(student, x));
  r.cka = cka_similarity(extract_features(teacher, x), extract_features(student, x));
  return r;
}

torch::Tensor weight_correlation(const torch::Tensor& weights) {
  if (weights.dim() != 2) throw DimensionError("weight_correlation: expects (C, D)");
  auto w = weights.detach().to(torch::kFloat64);
  auto norms = w.norm(2, 1, true);
  if ((norms <= 1e-12).any().item<bool>()) throw DegenerateInputError("weight_correlation: zero weight row");
  auto wn = w / norms;
  return torch::matmul(wn, wn.t());
}

CorrelationDifference weight_correlation_difference(const torch::Tensor& teacher_weights,
                                                    const torch::Tensor& student_weights) {
  if (teacher_weights.dim() != 2 || student_weights.dim() != 2) {
    throw DimensionError("weight_correlation_difference: expects (C, D) matrices");
  }
  if (teacher_weights.size(0) != student_weights.size(0)) {
    throw ConfigError("weight_correlation_difference: teacher has " + std::to_string(teacher_weights.size(0)) +
                      " classes, student " + std::to_string(student_weights.size(0)));
  }
  CorrelationDifference out;
  out.difference = (weight_correlation(teacher_weights) - weight_correlation(student_weights)).abs();
  out.summary = out.difference.mean().item<double>();
  return out;
}

void write_features(const fs::path& path, const torch::Tensor& features, const torch::Tensor& labels) {
  if (features.dim() != 2 || labels.dim() != 1 || labels.size(0) != features.size(0)) {
    throw DimensionError("write_features: expects (M, D) features and (M) labels");
  }
  const auto f = features.detach().to(torch::kFloat32).contiguous();
  const auto l = labels.to(torch::kInt64).contiguous();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write feature file " + path.string());
  const std::uint32_t version = kFeatureVersion, reserved = 0;
  const std::uint64_t m = f.size(0), d = f.size(1);
  out.write(kFeatureMagic, sizeof kFeatureMagic);
  out.write(reinterpret_cast<const char*>(&version), sizeof version);
  out.write(reinterpret_cast<const char*>(&reserved), sizeof reserved);
  out.write(reinterpret_cast<const char*>(&m), sizeof m);
  out.write(reinterpret_cast<const char*>(&d), sizeof d);
  out.write(static_cast<const char*>(f.data_ptr()), static_cast<std::streamsize>(m * d * sizeof(float)));
  out.write(static_cast<const char*>(l.data_ptr()), static_cast<std::streamsize>(m * sizeof(std::int64_t)));
  if (!out) throw IoError("short write to " + path.string());
}

FeatureFile read_features(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError("cannot open feature file " + path.string());
  char magic[8];
  std::uint32_t version = 0, reserved = 0;
  std::uint64_t m = 0, d = 0;
  in.read(magic, sizeof magic);
  in.read(reinterpret_cast<char*>(&version), sizeof version);
  in.read(reinterpret_cast<char*>(&reserved), sizeof reserved);
  in.read(reinterpret_cast<char*>(&m), sizeof m);
  in.read(reinterpret_cast<char*>(&d), sizeof d);
  if (!in || std::memcmp(magic, kFeatureMagic, sizeof magic) != 0 || version != kFeatureVersion) {
    throw LoadError(path.string() + " is not a feature file");
  }
  FeatureFile out;
  out.features = torch::empty({static_cast<std::int64_t>(m), static_cast<std::int64_t>(d)}, torch::kFloat32);
  out.labels = torch::empty({static_cast<std::int64_t>(m)}, torch::kInt64);
  in.read(static_cast<char*>(out.features.data_ptr()), static_cast<std::streamsize>(m * d * sizeof(float)));
  in.read(static_cast<char*>(out.labels.data_ptr()), static_cast<std::streamsize>(m * sizeof(std::int64_t)));
  if (!in) throw LoadError(path.string() + " is truncated");
  return out;
}

void export_features(NetworkTriad& net, const data::Dataset& dataset, const fs::path& path) {
  write_features(path, extract_features(net, dataset_tensor(dataset)), dataset_labels(dataset));
}

void write_report(const fs::path& stem, const ReportEntries& entries) {
  fs::path txt = stem, csv = stem;
  txt += ".txt";
  csv += ".csv";
  std::ofstream a(txt), b(csv);
  if (!a || !b) throw IoError("cannot write report " + stem.string());
  b << "key,value\n";
  for (const auto& [k, v] : entries) {
    a << k << '=' << v << '\n';
    b << k << ',' << v << '\n';
  }
}

}  // namespace sskd::eval
