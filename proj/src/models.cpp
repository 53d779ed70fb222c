#include "sskd/models.hpp"

#include <algorithm>
#include <charconv>
#include <sstream>

#include "sskd/errors.hpp"

namespace sskd::models {

namespace {

int to_int(const std::string& s, const std::string& context) {
  int v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw ConfigError("bad integer '" + s + "' in backbone spec '" + context + "'");
  }
  return v;
}

double to_double(const std::string& s, const std::string& context) {
  double v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw ConfigError("bad number '" + s + "' in backbone spec '" + context + "'");
  }
  return v;
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, sep)) out.push_back(item);
  return out;
}

void require_dims(const torch::Tensor& t, std::int64_t dims, const std::string& what) {
  if (t.dim() != dims) {
    throw DimensionError(what + ": expected " + std::to_string(dims) + "-d input, got " +
                         std::to_string(t.dim()) + "-d");
  }
}

}  // namespace

BackboneSpec BackboneSpec::parse(const std::string& text) {
  const auto colon = text.find(':');
  const std::string family = text.substr(0, colon);
  const std::string arg = colon == std::string::npos ? "" : text.substr(colon + 1);
  BackboneSpec s;
  if (family == "tiny-cnn") {
    s.family = BackboneFamily::TinyCnn;
    s.channels.clear();
    for (const auto& w : split(arg, '-')) s.channels.push_back(to_int(w, text));
  } else if (family == "cifar-resnet") {
    s.family = BackboneFamily::CifarResNet;
    const auto x = arg.find('x');
    s.depth = to_int(arg.substr(0, x), text);
    s.width = x == std::string::npos ? 1 : to_int(arg.substr(x + 1), text);
  } else if (family == "wide-resnet") {
    s.family = BackboneFamily::WideResNet;
    const auto parts = split(arg, '-');
    if (parts.size() != 2) throw ConfigError("wide-resnet spec is wide-resnet:<depth>-<widen>");
    s.depth = to_int(parts[0], text);
    s.width = to_int(parts[1], text);
  } else if (family == "vgg") {
    s.family = BackboneFamily::Vgg;
    s.depth = to_int(arg, text);
  } else if (family == "mobilenet") {
    s.family = BackboneFamily::MobileNet;
    s.width_mult = arg.empty() ? 0.5 : to_double(arg, text);
  } else if (family == "shufflenet-v1") {
    s.family = BackboneFamily::ShuffleNetV1;
  } else if (family == "shufflenet-v2") {
    s.family = BackboneFamily::ShuffleNetV2;
  } else {
    throw ConfigError("unknown backbone family '" + family + "'");
  }
  s.validate();
  return s;
}

std::string BackboneSpec::to_string() const {
  switch (family) {
    case BackboneFamily::TinyCnn: {
      std::string out = "tiny-cnn:";
      for (std::size_t i = 0; i < channels.size(); ++i) out += (i ? "-" : "") + std::to_string(channels[i]);
      return out;
    }
    case BackboneFamily::CifarResNet:
      return "cifar-resnet:" + std::to_string(depth) + (width == 1 ? "" : "x" + std::to_string(width));
    case BackboneFamily::WideResNet:
      return "wide-resnet:" + std::to_string(depth) + "-" + std::to_string(width);
    case BackboneFamily::Vgg: return "vgg:" + std::to_string(depth);
    case BackboneFamily::MobileNet: {
      std::ostringstream os;
      os << "mobilenet:" << width_mult;
      return os.str();
    }
    case BackboneFamily::ShuffleNetV1: return "shufflenet-v1";
    case BackboneFamily::ShuffleNetV2: return "shufflenet-v2";
  }
  return "unknown";
}

void BackboneSpec::validate() const {
  switch (family) {
    case BackboneFamily::TinyCnn:
      if (channels.empty() || std::any_of(channels.begin(), channels.end(), [](int c) { return c < 1; })) {
        throw ConfigError("tiny-cnn needs at least one positive stage width");
      }
      break;
    case BackboneFamily::CifarResNet:
      if (depth < 8 || (depth - 2) % 6 != 0 || width < 1) {
        throw ConfigError("cifar-resnet depth must be 6n+2 (n >= 1) and width >= 1");
      }
      break;
    case BackboneFamily::WideResNet:
      if (depth < 10 || (depth - 4) % 6 != 0 || width < 1) {
        throw ConfigError("wide-resnet depth must be 6n+4 (n >= 1) and widen factor >= 1");
      }
      break;
    case BackboneFamily::Vgg:
      if (depth != 8 && depth != 11 && depth != 13 && depth != 16 && depth != 19) {
        throw ConfigError("vgg depth must be one of 8, 11, 13, 16, 19");
      }
      break;
    case BackboneFamily::MobileNet:
      if (!(width_mult > 0.0)) throw ConfigError("mobilenet width multiplier must be > 0");
      break;
    case BackboneFamily::ShuffleNetV1:
    case BackboneFamily::ShuffleNetV2: break;
  }
}

Part parse_part(const std::string& name) {
  if (name == "backbone") return Part::Backbone;
  if (name == "classifier") return Part::Classifier;
  if (name == "projection_head") return Part::ProjectionHead;
  throw ConfigError("unknown network part '" + name + "'");
}

std::string to_string(Part part) {
  switch (part) {
    case Part::Backbone: return "backbone";
    case Part::Classifier: return "classifier";
    case Part::ProjectionHead: return "projection_head";
  }
  return "unknown";
}

std::string to_string(Role role) { return role == Role::Teacher ? "teacher" : "student"; }

void TriadSpec::validate() const {
  backbone.validate();
  if (num_classes < 2) throw ConfigError("num_classes must be >= 2");
  if (image_size < 8) throw ConfigError("image_size must be >= 8");
  if (channels < 1) throw ConfigError("channels must be >= 1");
  if (head_hidden < 0 || head_out < 1) throw ConfigError("projection head widths must be positive");
}

std::string TriadSpec::describe() const {
  std::ostringstream os;
  os << "backbone=" << backbone.to_string() << ";classes=" << num_classes << ";image=" << image_size
     << ";channels=" << channels << ";head_hidden=" << head_hidden << ";head_out=" << head_out;
  return os.str();
}

NetworkTriadImpl::NetworkTriadImpl(TriadSpec spec) : spec_(std::move(spec)) {
  spec_.validate();
  backbone_ = register_module("backbone", make_backbone(spec_.backbone, spec_.channels));
  const auto dim = backbone_->feature_dim();
  classifier_ = register_module("classifier", torch::nn::Linear(dim, spec_.num_classes));
  const auto hidden = spec_.head_hidden > 0 ? spec_.head_hidden : dim;
  head_ = register_module("head", torch::nn::Sequential(torch::nn::Linear(dim, hidden), torch::nn::ReLU(),
                                                        torch::nn::Linear(hidden, spec_.head_out)));
}

torch::Tensor NetworkTriadImpl::forward_features(const torch::Tensor& images) {
  require_dims(images, 4, "forward_features");
  if (images.size(1) != spec_.channels || images.size(2) != spec_.image_size ||
      images.size(3) != spec_.image_size) {
    throw DimensionError("forward_features: expected (N, " + std::to_string(spec_.channels) + ", " +
                         std::to_string(spec_.image_size) + ", " + std::to_string(spec_.image_size) +
                         ") images, got (N, " + std::to_string(images.size(1)) + ", " +
                         std::to_string(images.size(2)) + ", " + std::to_string(images.size(3)) + ")");
  }
  if (!torch::isfinite(images).all().item<bool>()) {
    throw NumericError("forward_features: non-finite input images");
  }
  return backbone_->forward(images);
}

torch::Tensor NetworkTriadImpl::classify(const torch::Tensor& features) {
  require_dims(features, 2, "classify");
  if (features.size(1) != feature_dim()) {
    throw DimensionError("classify: expected width " + std::to_string(feature_dim()) + ", got " +
                         std::to_string(features.size(1)));
  }
  return classifier_->forward(features);
}

torch::Tensor NetworkTriadImpl::forward_logits(const torch::Tensor& images) {
  return classify(forward_features(images));
}

torch::Tensor NetworkTriadImpl::project(const torch::Tensor& features) {
  require_dims(features, 2, "project");
  if (features.size(1) != feature_dim()) {
    throw DimensionError("project: expected width " + std::to_string(feature_dim()) + ", got " +
                         std::to_string(features.size(1)));
  }
  return head_->forward(features);
}

std::shared_ptr<torch::nn::Module> NetworkTriadImpl::module_of(Part part) const {
  switch (part) {
    case Part::Backbone: return backbone_;
    case Part::Classifier: return classifier_.ptr();
    case Part::ProjectionHead: return head_.ptr();
  }
  return nullptr;
}

void NetworkTriadImpl::freeze(const std::set<Part>& parts) {
  if (parts.empty()) throw ConfigError("freeze: the set of parts must not be empty");
  for (Part p : parts) {
    for (auto& t : module_of(p)->parameters()) t.set_requires_grad(false);
    frozen_.insert(p);
  }
  train(is_training());
}

void NetworkTriadImpl::unfreeze_all() {
  for (auto& t : parameters()) t.set_requires_grad(true);
  frozen_.clear();
  train(is_training());
}

std::int64_t NetworkTriadImpl::trainable_parameter_count() const {
  std::int64_t n = 0;
  for (const auto& t : parameters()) {
    if (t.requires_grad()) n += t.numel();
  }
  return n;
}

std::vector<torch::Tensor> NetworkTriadImpl::part_parameters(Part part) const {
  return module_of(part)->parameters();
}

std::vector<torch::Tensor> NetworkTriadImpl::trainable_parameters() const {
  std::vector<torch::Tensor> out;
  for (const auto& t : parameters()) {
    if (t.requires_grad()) out.push_back(t);
  }
  return out;
}

void NetworkTriadImpl::train(bool on) {
  torch::nn::Module::train(on);
  for (Part p : frozen_) module_of(p)->eval();
}

void save_checkpoint(NetworkTriad& net, const std::filesystem::path& path) {
  torch::serialize::OutputArchive archive;
  archive.write("format", c10::IValue(std::string(kCheckpointFormat)));
  archive.write("spec", c10::IValue(net->spec().describe()));
  torch::serialize::OutputArchive weights;
  net->save(weights);
  archive.write("model", weights);
  try {
    archive.save_to(path.string());
  } catch (const c10::Error& e) {
    throw IoError("cannot write checkpoint " + path.string() + ": " + e.what_without_backtrace());
  }
}

namespace {

torch::serialize::InputArchive open_checkpoint(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw LoadError("checkpoint not found: " + path.string());
  torch::serialize::InputArchive archive;
  try {
    archive.load_from(path.string());
  } catch (const c10::Error& e) {
    throw LoadError("cannot read checkpoint " + path.string() + ": " + e.what_without_backtrace());
  }
  c10::IValue format;
  if (!archive.try_read("format", format) || !format.isString() ||
      format.toStringRef() != kCheckpointFormat) {
    throw LoadError("checkpoint " + path.string() + " lacks format tag " + kCheckpointFormat);
  }
  return archive;
}

}  // namespace

std::string read_checkpoint_spec(const std::filesystem::path& path) {
  auto archive = open_checkpoint(path);
  c10::IValue spec;
  if (!archive.try_read("spec", spec) || !spec.isString()) {
    throw LoadError("checkpoint " + path.string() + " has no spec");
  }
  return spec.toStringRef();
}

void load_weights(NetworkTriad& net, const std::filesystem::path& path) {
  auto archive = open_checkpoint(path);
  c10::IValue spec;
  if (!archive.try_read("spec", spec) || !spec.isString()) {
    throw LoadError("checkpoint " + path.string() + " has no spec");
  }
  const std::string expected = net->spec().describe();
  if (spec.toStringRef() != expected) {
    throw ConfigError("checkpoint " + path.string() + " holds '" + spec.toStringRef() +
                      "' but '" + expected + "' was requested");
  }
  torch::serialize::InputArchive weights;
  archive.read("model", weights);
  net->load(weights);
}

NetworkTriad load_checkpoint(const std::filesystem::path& path, const TriadSpec& expected) {
  NetworkTriad net(expected);
  load_weights(net, path);
  return net;
}

namespace {

void hash_tensor(std::uint64_t& h, const torch::Tensor& t) {
  const auto c = t.detach().to(torch::kCPU).contiguous();
  const auto* bytes = static_cast<const unsigned char*>(c.data_ptr());
  const std::size_t n = c.numel() * c.element_size();
  for (std::size_t i = 0; i < n; ++i) {
    h ^= bytes[i];
    h *= 0x100000001b3ULL;
  }
}

}  // namespace

std::uint64_t parameter_checksum(const torch::nn::Module& module) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& item : module.named_parameters()) hash_tensor(h, item.value());
  for (const auto& item : module.named_buffers()) hash_tensor(h, item.value());
  return h;
}

std::uint64_t parameter_checksum(const NetworkTriadImpl& net, Part part) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& t : net.part_parameters(part)) hash_tensor(h, t);
  return h;
}

std::vector<torch::Tensor> snapshot(const NetworkTriadImpl& net, Part part) {
  std::vector<torch::Tensor> out;
  for (const auto& t : net.part_parameters(part)) out.push_back(t.detach().clone());
  return out;
}

double max_abs_delta(const std::vector<torch::Tensor>& before, const std::vector<torch::Tensor>& after) {
  if (before.size() != after.size()) throw DimensionError("max_abs_delta: parameter lists differ");
  double worst = 0.0;
  for (std::size_t i = 0; i < before.size(); ++i) {
    worst = std::max(worst, (before[i] - after[i].detach()).abs().max().item<double>());
  }
  return worst;
}

std::int64_t parameter_count(const torch::nn::Module& module) {
  std::int64_t n = 0;
  for (const auto& t : module.parameters()) n += t.numel();
  return n;
}

}  // namespace sskd::models
