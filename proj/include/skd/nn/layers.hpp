// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "skd/nn/tensor.hpp"
#include "skd/random.hpp"

namespace skd::nn {

enum class Mode { train, eval };

/// A named view onto one parameter or buffer of a layer. `grad` is null for
/// buffers such as batch-norm running statistics.
struct ParamRef {
  std::string name;
  Tensor* value = nullptr;
  Tensor* grad = nullptr;
  bool decay = true;

  bool trainable() const { return grad != nullptr; }
};
using ParamList = std::vector<ParamRef>;

/// Layers cache what they need during a train-mode forward; `backward`
/// consumes that cache and accumulates parameter gradients.
class Layer {
 public:
  virtual ~Layer() = default;

  virtual Tensor forward(Tensor x, Mode mode) = 0;
  virtual Tensor backward(const Tensor& grad_out) = 0;

  virtual void collect(const std::string& prefix, ParamList& out);
  virtual void layer_list(const std::string& prefix, std::vector<std::string>& out) const;
  virtual std::string describe() const = 0;
  virtual void init(Rng& rng);

  /// When false the layer skips computing the input gradient (first layer).
  void set_input_grad(bool on) { input_grad_ = on; }

 protected:
  bool input_grad_ = true;
};

using LayerPtr = std::unique_ptr<Layer>;

void he_uniform(Tensor& w, std::int64_t fan_in, Rng& rng);

using Triple = std::array<int, 3>;

struct Conv3dOptions {
  int in_channels = 0;
  int out_channels = 0;
  Triple kernel{3, 3, 3};
  Triple stride{1, 1, 1};
  Triple padding{1, 1, 1};
  bool bias = false;
};

class Conv3d final : public Layer {
 public:
  explicit Conv3d(Conv3dOptions opt);

  Tensor forward(Tensor x, Mode mode) override;
  Tensor backward(const Tensor& grad_out) override;
  void collect(const std::string& prefix, ParamList& out) override;
  std::string describe() const override;
  void init(Rng& rng) override;

  Shape output_shape(const Shape& in) const;
  Tensor& weight() { return weight_; }

 private:
  Conv3dOptions opt_;
  Tensor weight_, weight_grad_;
  Tensor bias_, bias_grad_;
  Tensor input_;
};

/// Batch normalization over dim 1 of an (N, C, ...) tensor.
class BatchNorm final : public Layer {
 public:
  explicit BatchNorm(int channels, float eps = 1e-5f, float momentum = 0.1f);

  Tensor forward(Tensor x, Mode mode) override;
  Tensor backward(const Tensor& grad_out) override;
  void collect(const std::string& prefix, ParamList& out) override;
  std::string describe() const override;
  void init(Rng& rng) override;

 private:
  int channels_;
  float eps_, momentum_;
  Tensor gamma_, beta_, gamma_grad_, beta_grad_;
  Tensor running_mean_, running_var_;
  Tensor xhat_;
  std::vector<float> inv_std_;
};

class ReLU final : public Layer {
 public:
  Tensor forward(Tensor x, Mode mode) override;
  Tensor backward(const Tensor& grad_out) override;
  std::string describe() const override { return "ReLU"; }

 private:
  Tensor output_;
};

class MaxPool3d final : public Layer {
 public:
  MaxPool3d(Triple kernel, Triple stride, Triple padding);

  Tensor forward(Tensor x, Mode mode) override;
  Tensor backward(const Tensor& grad_out) override;
  std::string describe() const override;

 private:
  Triple kernel_, stride_, padding_;
  Shape in_shape_;
  std::vector<std::int64_t> argmax_;
};

/// (N, C, ...) -> (N, C) mean over all trailing dims.
class GlobalAvgPool final : public Layer {
 public:
  Tensor forward(Tensor x, Mode mode) override;
  Tensor backward(const Tensor& grad_out) override;
  std::string describe() const override { return "GlobalAvgPool"; }

 private:
  Shape in_shape_;
};

/// y = x W^T + b on (N, in) inputs.
class Linear final : public Layer {
 public:
  Linear(int in_features, int out_features, bool bias = true);

  Tensor forward(Tensor x, Mode mode) override;
  Tensor backward(const Tensor& grad_out) override;
  void collect(const std::string& prefix, ParamList& out) override;
  std::string describe() const override;
  void init(Rng& rng) override;

  int in_features() const { return in_; }
  int out_features() const { return out_; }
  Tensor& weight() { return weight_; }
  Tensor& bias() { return bias_; }

 private:
  int in_, out_;
  bool has_bias_;
  Tensor weight_, weight_grad_, bias_, bias_grad_;
  Tensor input_;
};

class Sequential : public Layer {
 public:
  Sequential() = default;

  Sequential& add(std::string name, LayerPtr layer);
  template <class L, class... Args>
  L& emplace(std::string name, Args&&... args) {
    auto p = std::make_unique<L>(std::forward<Args>(args)...);
    L& ref = *p;
    add(std::move(name), std::move(p));
    return ref;
  }

  Tensor forward(Tensor x, Mode mode) override;
  Tensor backward(const Tensor& grad_out) override;
  void collect(const std::string& prefix, ParamList& out) override;
  void layer_list(const std::string& prefix, std::vector<std::string>& out) const override;
  std::string describe() const override { return "Sequential"; }
  void init(Rng& rng) override;

  std::size_t size() const { return layers_.size(); }
  Layer& at(std::size_t i) { return *layers_.at(i).second; }

 private:
  std::vector<std::pair<std::string, LayerPtr>> layers_;
};

std::string join_name(const std::string& prefix, const std::string& name);

}  // namespace skd::nn
