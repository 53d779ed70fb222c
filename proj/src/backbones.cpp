// CIFAR-resolution backbone families. Layouts follow the common CIFAR
// adaptations of each architecture; exact parameter parity with any
// particular reference implementation is not a goal.

#include <cmath>

#include "sskd/errors.hpp"
#include "sskd/models.hpp"

namespace sskd::models {

namespace nn = torch::nn;

namespace {

nn::Conv2d conv(int in, int out, int k, int stride = 1, int groups = 1) {
  return nn::Conv2d(nn::Conv2dOptions(in, out, k).stride(stride).padding(k / 2).groups(groups).bias(false));
}

nn::BatchNorm2d bn(int c) { return nn::BatchNorm2d(c); }

torch::Tensor channel_shuffle(const torch::Tensor& x, int groups) {
  const auto n = x.size(0), c = x.size(1), h = x.size(2), w = x.size(3);
  return x.view({n, groups, c / groups, h, w}).transpose(1, 2).reshape({n, c, h, w});
}

nn::Functional relu6() {
  return nn::Functional([](torch::Tensor x) { return torch::clamp(x, 0.0, 6.0); });
}

torch::Tensor global_pool(const torch::Tensor& x) {
  return torch::adaptive_avg_pool2d(x, {1, 1}).flatten(1);
}

// ---------------------------------------------------------------- tiny-cnn

class TinyCnn : public Backbone {
 public:
  TinyCnn(const std::vector<int>& widths, int in_channels) : dim_(widths.back()) {
    int in = in_channels;
    for (std::size_t i = 0; i < widths.size(); ++i) {
      convs_.push_back(register_module("conv" + std::to_string(i), conv(in, widths[i], 3)));
      norms_.push_back(register_module("bn" + std::to_string(i), bn(widths[i])));
      in = widths[i];
    }
  }
  torch::Tensor forward(const torch::Tensor& input) override {
    auto x = input;
    for (std::size_t i = 0; i < convs_.size(); ++i) {
      x = torch::relu(norms_[i]->forward(convs_[i]->forward(x)));
      if (i + 1 < convs_.size()) x = torch::max_pool2d(x, 2);
    }
    return global_pool(x);
  }
  std::int64_t feature_dim() const override { return dim_; }

 private:
  std::int64_t dim_;
  std::vector<nn::Conv2d> convs_;
  std::vector<nn::BatchNorm2d> norms_;
};

// ------------------------------------------------------------ cifar resnet

class BasicBlock : public nn::Module {
 public:
  BasicBlock(int in, int out, int stride)
      : conv1_(register_module("conv1", conv(in, out, 3, stride))),
        bn1_(register_module("bn1", bn(out))),
        conv2_(register_module("conv2", conv(out, out, 3))),
        bn2_(register_module("bn2", bn(out))) {
    if (stride != 1 || in != out) {
      shortcut_ = register_module("shortcut", nn::Sequential(conv(in, out, 1, stride), bn(out)));
    }
  }
  torch::Tensor forward(const torch::Tensor& x) {
    auto y = torch::relu(bn1_->forward(conv1_->forward(x)));
    y = bn2_->forward(conv2_->forward(y));
    return torch::relu(y + (shortcut_ ? shortcut_->forward(x) : x));
  }

 private:
  nn::Conv2d conv1_;
  nn::BatchNorm2d bn1_;
  nn::Conv2d conv2_;
  nn::BatchNorm2d bn2_;
  nn::Sequential shortcut_{nullptr};
};

class CifarResNet : public Backbone {
 public:
  CifarResNet(int depth, int width, int in_channels) : dim_(64 * width) {
    const int n = (depth - 2) / 6;
    const int stem = 16 * width;
    stem_ = register_module("stem", conv(in_channels, stem, 3));
    stem_bn_ = register_module("stem_bn", bn(stem));
    int in = stem;
    const int widths[] = {16 * width, 32 * width, 64 * width};
    for (int g = 0; g < 3; ++g) {
      for (int b = 0; b < n; ++b) {
        const int stride = (g > 0 && b == 0) ? 2 : 1;
        blocks_.push_back(register_module("layer" + std::to_string(g) + "_" + std::to_string(b),
                                          std::make_shared<BasicBlock>(in, widths[g], stride)));
        in = widths[g];
      }
    }
  }
  torch::Tensor forward(const torch::Tensor& input) override {
    auto x = torch::relu(stem_bn_->forward(stem_->forward(input)));
    for (auto& b : blocks_) x = b->forward(x);
    return global_pool(x);
  }
  std::int64_t feature_dim() const override { return dim_; }

 private:
  std::int64_t dim_;
  nn::Conv2d stem_{nullptr};
  nn::BatchNorm2d stem_bn_{nullptr};
  std::vector<std::shared_ptr<BasicBlock>> blocks_;
};

// ------------------------------------------------------------- wide resnet

class WideBlock : public nn::Module {
 public:
  WideBlock(int in, int out, int stride)
      : bn1_(register_module("bn1", bn(in))),
        conv1_(register_module("conv1", conv(in, out, 3, stride))),
        bn2_(register_module("bn2", bn(out))),
        conv2_(register_module("conv2", conv(out, out, 3))) {
    if (stride != 1 || in != out) shortcut_ = register_module("shortcut", conv(in, out, 1, stride));
  }
  torch::Tensor forward(const torch::Tensor& x) {
    auto pre = torch::relu(bn1_->forward(x));
    auto y = conv1_->forward(pre);
    y = conv2_->forward(torch::relu(bn2_->forward(y)));
    return y + (shortcut_ ? shortcut_->forward(pre) : x);
  }

 private:
  nn::BatchNorm2d bn1_;
  nn::Conv2d conv1_;
  nn::BatchNorm2d bn2_;
  nn::Conv2d conv2_;
  nn::Conv2d shortcut_{nullptr};
};

class WideResNet : public Backbone {
 public:
  WideResNet(int depth, int widen, int in_channels) : dim_(64 * widen) {
    const int n = (depth - 4) / 6;
    stem_ = register_module("stem", conv(in_channels, 16, 3));
    int in = 16;
    const int widths[] = {16 * widen, 32 * widen, 64 * widen};
    for (int g = 0; g < 3; ++g) {
      for (int b = 0; b < n; ++b) {
        const int stride = (g > 0 && b == 0) ? 2 : 1;
        blocks_.push_back(register_module("block" + std::to_string(g) + "_" + std::to_string(b),
                                          std::make_shared<WideBlock>(in, widths[g], stride)));
        in = widths[g];
      }
    }
    final_bn_ = register_module("final_bn", bn(in));
  }
  torch::Tensor forward(const torch::Tensor& input) override {
    auto x = stem_->forward(input);
    for (auto& b : blocks_) x = b->forward(x);
    return global_pool(torch::relu(final_bn_->forward(x)));
  }
  std::int64_t feature_dim() const override { return dim_; }

 private:
  std::int64_t dim_;
  nn::Conv2d stem_{nullptr};
  std::vector<std::shared_ptr<WideBlock>> blocks_;
  nn::BatchNorm2d final_bn_{nullptr};
};

// --------------------------------------------------------------------- vgg

std::vector<std::vector<int>> vgg_config(int depth) {
  switch (depth) {
    case 8: return {{64}, {128}, {256}, {512}, {512}};
    case 11: return {{64}, {128}, {256, 256}, {512, 512}, {512, 512}};
    case 13: return {{64, 64}, {128, 128}, {256, 256}, {512, 512}, {512, 512}};
    case 16: return {{64, 64}, {128, 128}, {256, 256, 256}, {512, 512, 512}, {512, 512, 512}};
    case 19:
      return {{64, 64}, {128, 128}, {256, 256, 256, 256}, {512, 512, 512, 512}, {512, 512, 512, 512}};
    default: throw ConfigError("vgg depth must be one of 8, 11, 13, 16, 19");
  }
}

class Vgg : public Backbone {
 public:
  Vgg(int depth, int in_channels) {
    int in = in_channels;
    int g = 0;
    for (const auto& group : vgg_config(depth)) {
      nn::Sequential seq;
      for (int out : group) {
        seq->push_back(conv(in, out, 3));
        seq->push_back(bn(out));
        seq->push_back(nn::ReLU());
        in = out;
      }
      groups_.push_back(register_module("group" + std::to_string(g++), seq));
    }
  }
  torch::Tensor forward(const torch::Tensor& input) override {
    auto x = input;
    for (std::size_t g = 0; g < groups_.size(); ++g) {
      x = groups_[g]->forward(x);
      if (g + 1 < groups_.size() && x.size(2) > 1) x = torch::max_pool2d(x, 2);
    }
    return global_pool(x);
  }
  std::int64_t feature_dim() const override { return 512; }

 private:
  std::vector<nn::Sequential> groups_;
};

// ------------------------------------------------------------ mobilenet v2

class InvertedResidual : public nn::Module {
 public:
  InvertedResidual(int in, int out, int stride, int expand) : residual_(stride == 1 && in == out) {
    const int hidden = in * expand;
    if (expand != 1) {
      body_->push_back(conv(in, hidden, 1));
      body_->push_back(bn(hidden));
      body_->push_back(relu6());
    }
    body_->push_back(conv(hidden, hidden, 3, stride, hidden));
    body_->push_back(bn(hidden));
    body_->push_back(relu6());
    body_->push_back(conv(hidden, out, 1));
    body_->push_back(bn(out));
    register_module("body", body_);
  }
  torch::Tensor forward(const torch::Tensor& x) {
    auto y = body_->forward(x);
    return residual_ ? x + y : y;
  }

 private:
  bool residual_;
  nn::Sequential body_;
};

class MobileNetV2 : public Backbone {
 public:
  MobileNetV2(double width_mult, int in_channels) {
    struct Stage {
      int expand, channels, repeats, stride;
    };
    const Stage stages[] = {{1, 16, 1, 1}, {6, 24, 2, 1}, {6, 32, 3, 2}, {6, 64, 4, 2},
                            {6, 96, 3, 1}, {6, 160, 3, 2}, {6, 320, 1, 1}};
    auto scaled = [&](int c) { return std::max(8, static_cast<int>(c * width_mult)); };
    int in = scaled(32);
    stem_ = register_module("stem", nn::Sequential(conv(in_channels, in, 3), bn(in),
                                                   relu6()));
    int idx = 0;
    for (const Stage& s : stages) {
      const int out = scaled(s.channels);
      for (int r = 0; r < s.repeats; ++r) {
        blocks_.push_back(register_module("block" + std::to_string(idx++),
                                          std::make_shared<InvertedResidual>(in, out, r == 0 ? s.stride : 1, s.expand)));
        in = out;
      }
    }
    dim_ = width_mult > 1.0 ? static_cast<int>(1280 * width_mult) : 1280;
    head_ = register_module("head", nn::Sequential(conv(in, static_cast<int>(dim_), 1), bn(static_cast<int>(dim_)),
                                                   relu6()));
  }
  torch::Tensor forward(const torch::Tensor& input) override {
    auto x = stem_->forward(input);
    for (auto& b : blocks_) x = b->forward(x);
    return global_pool(head_->forward(x));
  }
  std::int64_t feature_dim() const override { return dim_; }

 private:
  std::int64_t dim_ = 1280;
  nn::Sequential stem_{nullptr};
  std::vector<std::shared_ptr<InvertedResidual>> blocks_;
  nn::Sequential head_{nullptr};
};

// ----------------------------------------------------------- shufflenet v1

class ShuffleV1Block : public nn::Module {
 public:
  ShuffleV1Block(int in, int out, int stride, int groups)
      : stride_(stride), groups_(in == 24 ? 1 : groups) {
    const int mid = out / 4;
    conv1_ = register_module("conv1", conv(in, mid, 1, 1, groups_));
    bn1_ = register_module("bn1", bn(mid));
    conv2_ = register_module("conv2", conv(mid, mid, 3, stride, mid));
    bn2_ = register_module("bn2", bn(mid));
    conv3_ = register_module("conv3", conv(mid, out, 1, 1, groups));
    bn3_ = register_module("bn3", bn(out));
  }
  torch::Tensor forward(const torch::Tensor& x) {
    auto y = torch::relu(bn1_->forward(conv1_->forward(x)));
    y = channel_shuffle(y, groups_);
    y = bn2_->forward(conv2_->forward(y));
    y = bn3_->forward(conv3_->forward(y));
    if (stride_ == 2) {
      auto res = torch::avg_pool2d(x, 3, 2, 1);
      return torch::relu(torch::cat({y, res}, 1));
    }
    return torch::relu(y + x);
  }

 private:
  int stride_;
  int groups_;
  nn::Conv2d conv1_{nullptr}, conv2_{nullptr}, conv3_{nullptr};
  nn::BatchNorm2d bn1_{nullptr}, bn2_{nullptr}, bn3_{nullptr};
};

class ShuffleNetV1 : public Backbone {
 public:
  explicit ShuffleNetV1(int in_channels) {
    constexpr int groups = 3;
    const int out_planes[] = {240, 480, 960};
    const int repeats[] = {4, 8, 4};
    stem_ = register_module("stem", nn::Sequential(conv(in_channels, 24, 1), bn(24), nn::ReLU()));
    int in = 24, idx = 0;
    for (int s = 0; s < 3; ++s) {
      for (int r = 0; r < repeats[s]; ++r) {
        const int stride = r == 0 ? 2 : 1;
        const int concat = r == 0 ? in : 0;
        blocks_.push_back(register_module("block" + std::to_string(idx++),
                                          std::make_shared<ShuffleV1Block>(in, out_planes[s] - concat, stride, groups)));
        in = out_planes[s];
      }
    }
  }
  torch::Tensor forward(const torch::Tensor& input) override {
    auto x = stem_->forward(input);
    for (auto& b : blocks_) x = b->forward(x);
    return global_pool(x);
  }
  std::int64_t feature_dim() const override { return 960; }

 private:
  nn::Sequential stem_{nullptr};
  std::vector<std::shared_ptr<ShuffleV1Block>> blocks_;
};

// ----------------------------------------------------------- shufflenet v2

class ShuffleV2Block : public nn::Module {
 public:
  explicit ShuffleV2Block(int channels) : half_(channels / 2) {
    branch_ = register_module("branch", nn::Sequential(conv(half_, half_, 1), bn(half_), nn::ReLU(),
                                                       conv(half_, half_, 3, 1, half_), bn(half_),
                                                       conv(half_, half_, 1), bn(half_), nn::ReLU()));
  }
  torch::Tensor forward(const torch::Tensor& x) {
    auto parts = x.split(half_, 1);
    return channel_shuffle(torch::cat({parts[0], branch_->forward(parts[1])}, 1), 2);
  }

 private:
  int half_;
  nn::Sequential branch_{nullptr};
};

class ShuffleV2Down : public nn::Module {
 public:
  ShuffleV2Down(int in, int out) {
    const int mid = out / 2;
    left_ = register_module("left", nn::Sequential(conv(in, in, 3, 2, in), bn(in), conv(in, mid, 1), bn(mid), nn::ReLU()));
    right_ = register_module("right", nn::Sequential(conv(in, mid, 1), bn(mid), nn::ReLU(),
                                                     conv(mid, mid, 3, 2, mid), bn(mid),
                                                     conv(mid, mid, 1), bn(mid), nn::ReLU()));
  }
  torch::Tensor forward(const torch::Tensor& x) {
    return channel_shuffle(torch::cat({left_->forward(x), right_->forward(x)}, 1), 2);
  }

 private:
  nn::Sequential left_{nullptr}, right_{nullptr};
};

class ShuffleNetV2 : public Backbone {
 public:
  explicit ShuffleNetV2(int in_channels) {
    const int outs[] = {116, 232, 464};
    const int repeats[] = {3, 7, 3};
    stem_ = register_module("stem", nn::Sequential(conv(in_channels, 24, 3), bn(24), nn::ReLU()));
    int in = 24, idx = 0;
    for (int s = 0; s < 3; ++s) {
      downs_.push_back(register_module("down" + std::to_string(s), std::make_shared<ShuffleV2Down>(in, outs[s])));
      for (int r = 0; r < repeats[s]; ++r) {
        blocks_.push_back(register_module("block" + std::to_string(idx++), std::make_shared<ShuffleV2Block>(outs[s])));
      }
      stage_ends_.push_back(static_cast<int>(blocks_.size()));
      in = outs[s];
    }
    head_ = register_module("head", nn::Sequential(conv(in, 1024, 1), bn(1024), nn::ReLU()));
  }
  torch::Tensor forward(const torch::Tensor& input) override {
    auto x = stem_->forward(input);
    int b = 0;
    for (std::size_t s = 0; s < downs_.size(); ++s) {
      x = downs_[s]->forward(x);
      for (; b < stage_ends_[s]; ++b) x = blocks_[b]->forward(x);
    }
    return global_pool(head_->forward(x));
  }
  std::int64_t feature_dim() const override { return 1024; }

 private:
  nn::Sequential stem_{nullptr};
  std::vector<std::shared_ptr<ShuffleV2Down>> downs_;
  std::vector<std::shared_ptr<ShuffleV2Block>> blocks_;
  std::vector<int> stage_ends_;
  nn::Sequential head_{nullptr};
};

}  // namespace

std::shared_ptr<Backbone> make_backbone(const BackboneSpec& spec, int in_channels) {
  spec.validate();
  switch (spec.family) {
    case BackboneFamily::TinyCnn: return std::make_shared<TinyCnn>(spec.channels, in_channels);
    case BackboneFamily::CifarResNet: return std::make_shared<CifarResNet>(spec.depth, spec.width, in_channels);
    case BackboneFamily::WideResNet: return std::make_shared<WideResNet>(spec.depth, spec.width, in_channels);
    case BackboneFamily::Vgg: return std::make_shared<Vgg>(spec.depth, in_channels);
    case BackboneFamily::MobileNet: return std::make_shared<MobileNetV2>(spec.width_mult, in_channels);
    case BackboneFamily::ShuffleNetV1: return std::make_shared<ShuffleNetV1>(in_channels);
    case BackboneFamily::ShuffleNetV2: return std::make_shared<ShuffleNetV2>(in_channels);
  }
  throw ConfigError("unknown backbone family");
}

}  // namespace sskd::models
