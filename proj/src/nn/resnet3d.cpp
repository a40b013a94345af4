// SPDX-License-Identifier: Apache-2.0
#include "skd/nn/resnet3d.hpp"

#include <array>
#include <stdexcept>

namespace skd::nn {

ResidualBlock::ResidualBlock(std::unique_ptr<Sequential> main, LayerPtr shortcut, std::string kind)
    : main_(std::move(main)), shortcut_(std::move(shortcut)), kind_(std::move(kind)) {}

Tensor ResidualBlock::forward(Tensor x, Mode mode) {
  Tensor skip = shortcut_ ? shortcut_->forward(x, mode) : x;
  Tensor y = main_->forward(std::move(x), mode);
  if (y.shape() != skip.shape())
    throw std::logic_error("residual shapes differ: " + shape_str(y.shape()) + " vs " + shape_str(skip.shape()));
  y.add_(skip);
  return relu_.forward(std::move(y), mode);
}

Tensor ResidualBlock::backward(const Tensor& grad_out) {
  Tensor g = relu_.backward(grad_out);
  Tensor dx = main_->backward(g);
  if (shortcut_)
    dx.add_(shortcut_->backward(g));
  else
    dx.add_(g);
  return dx;
}

void ResidualBlock::collect(const std::string& prefix, ParamList& out) {
  main_->collect(prefix, out);
  if (shortcut_) shortcut_->collect(join_name(prefix, "downsample"), out);
}

void ResidualBlock::layer_list(const std::string& prefix, std::vector<std::string>& out) const {
  out.push_back(prefix + ": " + kind_);
  main_->layer_list(prefix, out);
  if (shortcut_) shortcut_->layer_list(join_name(prefix, "downsample"), out);
}

void ResidualBlock::init(Rng& rng) {
  main_->init(rng);
  if (shortcut_) shortcut_->init(rng);
}

ZeroPadShortcut::ZeroPadShortcut(int in_channels, int out_channels, int stride)
    : in_(in_channels), out_(out_channels), stride_(stride) {
  if (out_ < in_ || stride_ < 1) throw std::invalid_argument("ZeroPadShortcut: bad geometry");
}

Tensor ZeroPadShortcut::forward(Tensor x, Mode mode) {
  if (x.rank() != 5 || x.dim(1) != in_) throw std::invalid_argument("ZeroPadShortcut: bad input");
  const std::int64_t n = x.dim(0), T = x.dim(2), H = x.dim(3), W = x.dim(4);
  const std::int64_t t = (T - 1) / stride_ + 1, h = (H - 1) / stride_ + 1, w = (W - 1) / stride_ + 1;
  Tensor y({n, out_, t, h, w});
  for (std::int64_t i = 0; i < n; ++i)
    for (std::int64_t c = 0; c < in_; ++c) {
      const float* src = x.data() + (i * in_ + c) * T * H * W;
      float* dst = y.data() + (i * out_ + c) * t * h * w;
      for (std::int64_t a = 0; a < t; ++a)
        for (std::int64_t b = 0; b < h; ++b)
          for (std::int64_t d = 0; d < w; ++d)
            dst[(a * h + b) * w + d] = src[((a * stride_) * H + b * stride_) * W + d * stride_];
    }
  in_shape_ = mode == Mode::train ? x.shape() : Shape{};
  return y;
}

Tensor ZeroPadShortcut::backward(const Tensor& grad_out) {
  if (in_shape_.empty()) throw std::logic_error("ZeroPadShortcut: backward without forward");
  Tensor dx(in_shape_);
  const std::int64_t n = in_shape_[0], T = in_shape_[2], H = in_shape_[3], W = in_shape_[4];
  const std::int64_t t = grad_out.dim(2), h = grad_out.dim(3), w = grad_out.dim(4);
  for (std::int64_t i = 0; i < n; ++i)
    for (std::int64_t c = 0; c < in_; ++c) {
      const float* src = grad_out.data() + (i * out_ + c) * t * h * w;
      float* dst = dx.data() + (i * in_ + c) * T * H * W;
      for (std::int64_t a = 0; a < t; ++a)
        for (std::int64_t b = 0; b < h; ++b)
          for (std::int64_t d = 0; d < w; ++d)
            dst[((a * stride_) * H + b * stride_) * W + d * stride_] = src[(a * h + b) * w + d];
    }
  in_shape_.clear();
  return dx;
}

std::string ZeroPadShortcut::describe() const {
  return "ZeroPadShortcut(" + std::to_string(in_) + "->" + std::to_string(out_) + ", s=" + std::to_string(stride_) +
         ")";
}

namespace {

Conv3dOptions conv(int in, int out, int k, Triple stride) {
  const int p = k / 2;
  return {in, out, {k, k, k}, stride, {p, p, p}, false};
}

LayerPtr basic_block(int in, int planes, int stride) {
  auto main = std::make_unique<Sequential>();
  main->emplace<Conv3d>("conv1", conv(in, planes, 3, {stride, stride, stride}));
  main->emplace<BatchNorm>("bn1", planes);
  main->emplace<ReLU>("relu");
  main->emplace<Conv3d>("conv2", conv(planes, planes, 3, {1, 1, 1}));
  main->emplace<BatchNorm>("bn2", planes);
  LayerPtr shortcut;
  if (stride != 1 || in != planes) shortcut = std::make_unique<ZeroPadShortcut>(in, planes, stride);
  return std::make_unique<ResidualBlock>(std::move(main), std::move(shortcut), "BasicBlock");
}

LayerPtr bottleneck_block(int in, int planes, int stride) {
  constexpr int expansion = 4;
  auto main = std::make_unique<Sequential>();
  main->emplace<Conv3d>("conv1", conv(in, planes, 1, {1, 1, 1}));
  main->emplace<BatchNorm>("bn1", planes);
  main->emplace<ReLU>("relu1");
  main->emplace<Conv3d>("conv2", conv(planes, planes, 3, {stride, stride, stride}));
  main->emplace<BatchNorm>("bn2", planes);
  main->emplace<ReLU>("relu2");
  main->emplace<Conv3d>("conv3", conv(planes, planes * expansion, 1, {1, 1, 1}));
  main->emplace<BatchNorm>("bn3", planes * expansion);
  LayerPtr shortcut;
  if (stride != 1 || in != planes * expansion) {
    auto proj = std::make_unique<Sequential>();
    proj->emplace<Conv3d>("0", conv(in, planes * expansion, 1, {stride, stride, stride}));
    proj->emplace<BatchNorm>("1", planes * expansion);
    shortcut = std::move(proj);
  }
  return std::make_unique<ResidualBlock>(std::move(main), std::move(shortcut), "Bottleneck");
}

}  // namespace

Encoder make_toy3d(int out_dim) {
  if (out_dim < 8 || out_dim % 8 != 0) throw std::invalid_argument("toy3d width must be a positive multiple of 8");
  const std::array<int, 4> width{out_dim / 8, out_dim / 4, out_dim / 2, out_dim};
  const std::array<Conv3dOptions, 4> stages{{
      {3, width[0], {3, 4, 4}, {2, 4, 4}, {1, 0, 0}, false},
      {width[0], width[1], {3, 3, 3}, {2, 2, 2}, {1, 1, 1}, false},
      {width[1], width[2], {3, 3, 3}, {2, 2, 2}, {1, 1, 1}, false},
      {width[2], width[3], {3, 3, 3}, {1, 2, 2}, {1, 1, 1}, false},
  }};
  Encoder e{std::make_unique<Sequential>(), out_dim};
  for (std::size_t i = 0; i < stages.size(); ++i) {
    auto stage = std::make_unique<Sequential>();
    stage->emplace<Conv3d>("conv", stages[i]);
    stage->emplace<BatchNorm>("bn", stages[i].out_channels);
    stage->emplace<ReLU>("relu");
    e.net->add("stage" + std::to_string(i + 1), std::move(stage));
  }
  e.net->emplace<GlobalAvgPool>("pool");
  return e;
}

Encoder make_resnet3d(int depth) {
  std::array<int, 4> blocks{};
  bool bottleneck = false;
  switch (depth) {
    case 18: blocks = {2, 2, 2, 2}; break;
    case 50: blocks = {3, 4, 6, 3}; bottleneck = true; break;
    default: throw std::invalid_argument("unsupported 3D ResNet depth " + std::to_string(depth));
  }
  const int expansion = bottleneck ? 4 : 1;
  Encoder e{std::make_unique<Sequential>(), 512 * expansion};
  e.net->emplace<Conv3d>("conv1", Conv3dOptions{3, 64, {7, 7, 7}, {1, 2, 2}, {3, 3, 3}, false});
  e.net->emplace<BatchNorm>("bn1", 64);
  e.net->emplace<ReLU>("relu");
  e.net->emplace<MaxPool3d>("maxpool", Triple{3, 3, 3}, Triple{2, 2, 2}, Triple{1, 1, 1});
  int in = 64;
  const std::array<int, 4> planes{64, 128, 256, 512};
  for (int l = 0; l < 4; ++l) {
    auto layer = std::make_unique<Sequential>();
    for (int b = 0; b < blocks[l]; ++b) {
      const int stride = (l > 0 && b == 0) ? 2 : 1;
      layer->add(std::to_string(b), bottleneck ? bottleneck_block(in, planes[l], stride)
                                               : basic_block(in, planes[l], stride));
      in = planes[l] * expansion;
    }
    e.net->add("layer" + std::to_string(l + 1), std::move(layer));
  }
  e.net->emplace<GlobalAvgPool>("avgpool");
  return e;
}

}  // namespace skd::nn
