#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <set>
#include <string>
#include <vector>

#include <torch/torch.h>

namespace sskd::models {

enum class BackboneFamily {
  CifarResNet,
  WideResNet,
  Vgg,
  ShuffleNetV1,
  ShuffleNetV2,
  MobileNet,
  TinyCnn,
};

// Textual forms:
//   tiny-cnn:16-32-64     stage widths (conv-bn-relu, 2x2 max-pool between stages)
//   cifar-resnet:20       resnet-d, depth = 6n + 2
//   cifar-resnet:8x4      4x wider resnet8
//   wide-resnet:40-2      wrn-depth-widen
//   vgg:13                one of 8, 11, 13, 16, 19
//   mobilenet:0.5         MobileNetV2 with a width multiplier
//   shufflenet-v1 / shufflenet-v2
struct BackboneSpec {
  BackboneFamily family = BackboneFamily::TinyCnn;
  int depth = 0;
  int width = 1;
  double width_mult = 0.5;
  std::vector<int> channels = {16, 32, 64};

  static BackboneSpec parse(const std::string& text);
  std::string to_string() const;
  // Throws ConfigError when the spec does not describe a buildable network.
  void validate() const;

  bool operator==(const BackboneSpec& other) const { return to_string() == other.to_string(); }
};

class Backbone : public torch::nn::Module {
 public:
  virtual torch::Tensor forward(const torch::Tensor& x) = 0;
  virtual std::int64_t feature_dim() const = 0;
};

std::shared_ptr<Backbone> make_backbone(const BackboneSpec& spec, int in_channels = 3);

enum class Role { Teacher, Student };
enum class Part { Backbone, Classifier, ProjectionHead };

Part parse_part(const std::string& name);
std::string to_string(Part part);
std::string to_string(Role role);

struct TriadSpec {
  BackboneSpec backbone;
  int num_classes = 10;
  int image_size = 32;
  int channels = 3;
  // Hidden width of the 2-layer head; 0 means "equal to the feature width".
  int head_hidden = 0;
  // Head output width: latent size for contrastive prediction, class count
  // for the classification pretext tasks.
  int head_out = 128;
  Role role = Role::Student;

  void validate() const;
  // Canonical description stored in checkpoints (role excluded).
  std::string describe() const;
};

// Backbone f, classifier p and self-supervision head (linear, ReLU, linear).
class NetworkTriadImpl : public torch::nn::Module {
 public:
  explicit NetworkTriadImpl(TriadSpec spec);

  const TriadSpec& spec() const { return spec_; }
  std::int64_t feature_dim() const { return backbone_->feature_dim(); }

  // (N, C, H, W) -> (N, D). Throws DimensionError on a shape mismatch and
  // NumericError on non-finite input.
  torch::Tensor forward_features(const torch::Tensor& images);
  torch::Tensor classify(const torch::Tensor& features);
  torch::Tensor forward_logits(const torch::Tensor& images);
  // (N, D) -> (N, head_out).
  torch::Tensor project(const torch::Tensor& features);

  // Frozen parts stop requiring gradients and stay in inference mode
  // (normalization statistics included). Throws ConfigError for an empty set.
  void freeze(const std::set<Part>& parts);
  void unfreeze_all();
  bool is_frozen(Part part) const { return frozen_.contains(part); }
  std::int64_t trainable_parameter_count() const;
  std::vector<torch::Tensor> part_parameters(Part part) const;
  std::vector<torch::Tensor> trainable_parameters() const;

  void train(bool on = true) override;

  Backbone& backbone() { return *backbone_; }
  torch::nn::Linear& classifier() { return classifier_; }
  torch::nn::Sequential& head() { return head_; }

 private:
  std::shared_ptr<torch::nn::Module> module_of(Part part) const;

  TriadSpec spec_;
  std::shared_ptr<Backbone> backbone_;
  torch::nn::Linear classifier_{nullptr};
  torch::nn::Sequential head_{nullptr};
  std::set<Part> frozen_;
};
TORCH_MODULE(NetworkTriad);

inline constexpr const char* kCheckpointFormat = "sskd-triad-v1";

void save_checkpoint(NetworkTriad& net, const std::filesystem::path& path);
// Rejects files whose format tag or TriadSpec differ from `expected`.
NetworkTriad load_checkpoint(const std::filesystem::path& path, const TriadSpec& expected);
// Same check against net's own spec, loading into the existing module.
void load_weights(NetworkTriad& net, const std::filesystem::path& path);
// Reads only the stored spec description.
std::string read_checkpoint_spec(const std::filesystem::path& path);

// FNV-1a over every parameter and buffer (or just one part's parameters).
std::uint64_t parameter_checksum(const torch::nn::Module& module);
std::uint64_t parameter_checksum(const NetworkTriadImpl& net, Part part);

// Deep copies of a part's parameters, and the largest absolute change since.
std::vector<torch::Tensor> snapshot(const NetworkTriadImpl& net, Part part);
double max_abs_delta(const std::vector<torch::Tensor>& before, const std::vector<torch::Tensor>& after);

std::int64_t parameter_count(const torch::nn::Module& module);

}  // namespace sskd::models
