// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <memory>
#include <string>

#include "skd/nn/layers.hpp"

namespace skd::nn {

/// Residual unit: relu(main(x) + shortcut(x)). A null shortcut is identity.
class ResidualBlock final : public Layer {
 public:
  ResidualBlock(std::unique_ptr<Sequential> main, LayerPtr shortcut, std::string kind);

  Tensor forward(Tensor x, Mode mode) override;
  Tensor backward(const Tensor& grad_out) override;
  void collect(const std::string& prefix, ParamList& out) override;
  void layer_list(const std::string& prefix, std::vector<std::string>& out) const override;
  std::string describe() const override { return kind_; }
  void init(Rng& rng) override;

 private:
  std::unique_ptr<Sequential> main_;
  LayerPtr shortcut_;
  ReLU relu_;
  std::string kind_;
};

/// Parameter-free "type A" shortcut: strided subsampling followed by zero
/// padding of the extra output channels.
class ZeroPadShortcut final : public Layer {
 public:
  ZeroPadShortcut(int in_channels, int out_channels, int stride);

  Tensor forward(Tensor x, Mode mode) override;
  Tensor backward(const Tensor& grad_out) override;
  std::string describe() const override;

 private:
  int in_, out_, stride_;
  Shape in_shape_;
};

struct Encoder {
  std::unique_ptr<Sequential> net;
  int out_dim = 0;
};

/// Four conv-BN-ReLU stages with spatio-temporal downsampling and a global
/// average pool. Stage widths are out_dim/8, /4, /2, /1.
Encoder make_toy3d(int out_dim);

/// 3D ResNet of depth 18 (basic blocks, zero-pad shortcuts) or 50
/// (bottleneck blocks, projection shortcuts). The classifier is not included.
Encoder make_resnet3d(int depth);

}  // namespace skd::nn
