// SPDX-License-Identifier: Apache-2.0
#include "skd/nn/layers.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace skd::nn {
namespace {

using RowMat = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using ConstMatMap = Eigen::Map<const RowMat>;

std::string triple_str(const Triple& t) {
  std::ostringstream os;
  os << t[0] << 'x' << t[1] << 'x' << t[2];
  return os.str();
}

void require_cache(bool ok, const char* layer) {
  if (!ok) throw std::logic_error(std::string(layer) + ": backward without a train-mode forward");
}

struct ConvGeom {
  int c, t, h, w;
  int to, ho, wo;
};

// Output columns [lo, hi) whose input column ow*stride - pad + offset lies
// inside [0, in).
std::pair<int, int> valid_range(int out, int in, int stride, int pad, int offset) {
  int lo = 0;
  while (lo < out && lo * stride - pad + offset < 0) ++lo;
  int hi = out;
  while (hi > lo && (hi - 1) * stride - pad + offset >= in) --hi;
  return {lo, hi};
}

void im2col(const float* x, const Conv3dOptions& o, const ConvGeom& g, float* col) {
  const std::int64_t plane = static_cast<std::int64_t>(g.to) * g.ho * g.wo;
  const auto [kt, kh, kw] = o.kernel;
  const auto [st, sh, sw] = o.stride;
  const auto [pt, ph, pw] = o.padding;
  std::int64_t row = 0;
  for (int c = 0; c < g.c; ++c) {
    const float* xc = x + static_cast<std::int64_t>(c) * g.t * g.h * g.w;
    for (int a = 0; a < kt; ++a)
      for (int b = 0; b < kh; ++b)
        for (int d = 0; d < kw; ++d, ++row) {
          float* out = col + row * plane;
          for (int ot = 0; ot < g.to; ++ot) {
            const int it = ot * st - pt + a;
            for (int oh = 0; oh < g.ho; ++oh) {
              const int ih = oh * sh - ph + b;
              float* dst = out + (static_cast<std::int64_t>(ot) * g.ho + oh) * g.wo;
              if (it < 0 || it >= g.t || ih < 0 || ih >= g.h) {
                std::fill(dst, dst + g.wo, 0.0f);
                continue;
              }
              const float* src = xc + (static_cast<std::int64_t>(it) * g.h + ih) * g.w - pw + d;
              const auto [lo, hi] = valid_range(g.wo, g.w, sw, pw, d);
              std::fill(dst, dst + lo, 0.0f);
              if (sw == 1) {
                std::copy(src + lo, src + hi, dst + lo);
              } else {
                for (int ow = lo; ow < hi; ++ow) dst[ow] = src[ow * sw];
              }
              std::fill(dst + hi, dst + g.wo, 0.0f);
            }
          }
        }
  }
}

void col2im(const float* col, const Conv3dOptions& o, const ConvGeom& g, float* x) {
  const std::int64_t plane = static_cast<std::int64_t>(g.to) * g.ho * g.wo;
  const auto [kt, kh, kw] = o.kernel;
  const auto [st, sh, sw] = o.stride;
  const auto [pt, ph, pw] = o.padding;
  std::int64_t row = 0;
  for (int c = 0; c < g.c; ++c) {
    float* xc = x + static_cast<std::int64_t>(c) * g.t * g.h * g.w;
    for (int a = 0; a < kt; ++a)
      for (int b = 0; b < kh; ++b)
        for (int d = 0; d < kw; ++d, ++row) {
          const float* in = col + row * plane;
          for (int ot = 0; ot < g.to; ++ot) {
            const int it = ot * st - pt + a;
            if (it < 0 || it >= g.t) continue;
            for (int oh = 0; oh < g.ho; ++oh) {
              const int ih = oh * sh - ph + b;
              if (ih < 0 || ih >= g.h) continue;
              const float* src = in + (static_cast<std::int64_t>(ot) * g.ho + oh) * g.wo;
              float* dst = xc + (static_cast<std::int64_t>(it) * g.h + ih) * g.w - pw + d;
              const auto [lo, hi] = valid_range(g.wo, g.w, sw, pw, d);
              for (int ow = lo; ow < hi; ++ow) dst[ow * sw] += src[ow];
            }
          }
        }
  }
}

bool is_pointwise(const Conv3dOptions& o) {
  return o.kernel == Triple{1, 1, 1} && o.stride == Triple{1, 1, 1} && o.padding == Triple{0, 0, 0};
}

}  // namespace

std::string join_name(const std::string& prefix, const std::string& name) {
  return prefix.empty() ? name : prefix + "." + name;
}

void Layer::collect(const std::string&, ParamList&) {}

void Layer::layer_list(const std::string& prefix, std::vector<std::string>& out) const {
  out.push_back(prefix + ": " + describe());
}

void Layer::init(Rng&) {}

void he_uniform(Tensor& w, std::int64_t fan_in, Rng& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
  for (float& v : w.vec()) v = static_cast<float>(rng.uniform(-bound, bound));
}

// ---------------------------------------------------------------- Conv3d

Conv3d::Conv3d(Conv3dOptions opt) : opt_(opt) {
  if (opt_.in_channels <= 0 || opt_.out_channels <= 0) throw std::invalid_argument("Conv3d: bad channel count");
  Shape ws{opt_.out_channels, opt_.in_channels, opt_.kernel[0], opt_.kernel[1], opt_.kernel[2]};
  weight_ = Tensor(ws);
  weight_grad_ = Tensor(ws);
  if (opt_.bias) {
    bias_ = Tensor({opt_.out_channels});
    bias_grad_ = Tensor({opt_.out_channels});
  }
}

Shape Conv3d::output_shape(const Shape& in) const {
  if (in.size() != 5 || in[1] != opt_.in_channels)
    throw std::invalid_argument("Conv3d expects (N," + std::to_string(opt_.in_channels) + ",T,H,W), got " +
                                shape_str(in));
  Shape out{in[0], opt_.out_channels, 0, 0, 0};
  for (int i = 0; i < 3; ++i) {
    out[2 + i] = (in[2 + i] + 2 * opt_.padding[i] - opt_.kernel[i]) / opt_.stride[i] + 1;
    if (out[2 + i] <= 0) throw std::invalid_argument("Conv3d: input too small " + shape_str(in));
  }
  return out;
}

Tensor Conv3d::forward(Tensor x, Mode mode) {
  const Shape os = output_shape(x.shape());
  const ConvGeom g{static_cast<int>(x.dim(1)), static_cast<int>(x.dim(2)), static_cast<int>(x.dim(3)),
                   static_cast<int>(x.dim(4)), static_cast<int>(os[2]), static_cast<int>(os[3]),
                   static_cast<int>(os[4])};
  const std::int64_t n = x.dim(0);
  const std::int64_t kc = weight_.size() / opt_.out_channels;
  const std::int64_t plane = os[2] * os[3] * os[4];
  const std::int64_t in_stride = x.size() / std::max<std::int64_t>(n, 1);

  Tensor y(os);
  ConstMatMap w(weight_.data(), opt_.out_channels, kc);
  const bool pointwise = is_pointwise(opt_);
  std::vector<float> col(pointwise ? 0 : static_cast<std::size_t>(kc * plane));
  for (std::int64_t i = 0; i < n; ++i) {
    const float* xi = x.data() + i * in_stride;
    if (!pointwise) im2col(xi, opt_, g, col.data());
    ConstMatMap c(pointwise ? xi : col.data(), kc, plane);
    MatMap out(y.data() + i * opt_.out_channels * plane, opt_.out_channels, plane);
    out.noalias() = w * c;
    if (opt_.bias)
      for (int o = 0; o < opt_.out_channels; ++o) out.row(o).array() += bias_[o];
  }
  if (mode == Mode::train)
    input_ = std::move(x);
  else
    input_ = Tensor();
  return y;
}

Tensor Conv3d::backward(const Tensor& grad_out) {
  require_cache(!input_.empty(), "Conv3d");
  const Shape os = output_shape(input_.shape());
  if (grad_out.shape() != os) throw std::invalid_argument("Conv3d::backward: gradient shape mismatch");
  const ConvGeom g{static_cast<int>(input_.dim(1)), static_cast<int>(input_.dim(2)), static_cast<int>(input_.dim(3)),
                   static_cast<int>(input_.dim(4)), static_cast<int>(os[2]), static_cast<int>(os[3]),
                   static_cast<int>(os[4])};
  const std::int64_t n = input_.dim(0);
  const std::int64_t kc = weight_.size() / opt_.out_channels;
  const std::int64_t plane = os[2] * os[3] * os[4];
  const std::int64_t in_stride = input_.size() / std::max<std::int64_t>(n, 1);
  const bool pointwise = is_pointwise(opt_);

  ConstMatMap w(weight_.data(), opt_.out_channels, kc);
  MatMap dw(weight_grad_.data(), opt_.out_channels, kc);
  Tensor dx = input_grad_ ? Tensor(input_.shape()) : Tensor();
  std::vector<float> col(pointwise ? 0 : static_cast<std::size_t>(kc * plane));
  std::vector<float> dcol(pointwise || !input_grad_ ? 0 : static_cast<std::size_t>(kc * plane));
  for (std::int64_t i = 0; i < n; ++i) {
    const float* xi = input_.data() + i * in_stride;
    if (!pointwise) im2col(xi, opt_, g, col.data());
    ConstMatMap c(pointwise ? xi : col.data(), kc, plane);
    ConstMatMap dout(grad_out.data() + i * opt_.out_channels * plane, opt_.out_channels, plane);
    dw.noalias() += dout * c.transpose();
    if (opt_.bias)
      for (int o = 0; o < opt_.out_channels; ++o) bias_grad_[o] += dout.row(o).sum();
    if (input_grad_) {
      if (pointwise) {
        MatMap dxi(dx.data() + i * in_stride, kc, plane);
        dxi.noalias() = w.transpose() * dout;
      } else {
        MatMap dc(dcol.data(), kc, plane);
        dc.noalias() = w.transpose() * dout;
        col2im(dcol.data(), opt_, g, dx.data() + i * in_stride);
      }
    }
  }
  input_ = Tensor();
  return dx;
}

void Conv3d::collect(const std::string& prefix, ParamList& out) {
  out.push_back({join_name(prefix, "weight"), &weight_, &weight_grad_, true});
  if (opt_.bias) out.push_back({join_name(prefix, "bias"), &bias_, &bias_grad_, true});
}

std::string Conv3d::describe() const {
  std::ostringstream os;
  os << "Conv3d(" << opt_.in_channels << "->" << opt_.out_channels << ", k=" << triple_str(opt_.kernel)
     << ", s=" << triple_str(opt_.stride) << ", p=" << triple_str(opt_.padding) << ")";
  return os.str();
}

void Conv3d::init(Rng& rng) {
  he_uniform(weight_, weight_.size() / opt_.out_channels, rng);
  if (opt_.bias) bias_.fill(0.0f);
}

// ------------------------------------------------------------- BatchNorm

BatchNorm::BatchNorm(int channels, float eps, float momentum)
    : channels_(channels),
      eps_(eps),
      momentum_(momentum),
      gamma_({channels}, 1.0f),
      beta_({channels}),
      gamma_grad_({channels}),
      beta_grad_({channels}),
      running_mean_({channels}),
      running_var_({channels}, 1.0f) {}

Tensor BatchNorm::forward(Tensor x, Mode mode) {
  if (x.rank() < 2 || x.dim(1) != channels_)
    throw std::invalid_argument("BatchNorm(" + std::to_string(channels_) + ") got " + shape_str(x.shape()));
  const std::int64_t n = x.dim(0);
  const std::int64_t inner = x.size() / std::max<std::int64_t>(n * channels_, 1);
  const std::int64_t count = n * inner;

  if (mode == Mode::eval) {
    for (int c = 0; c < channels_; ++c) {
      const float inv = 1.0f / std::sqrt(running_var_[c] + eps_);
      const float scale = gamma_[c] * inv;
      const float shift = beta_[c] - running_mean_[c] * scale;
      for (std::int64_t i = 0; i < n; ++i) {
        float* p = x.data() + (i * channels_ + c) * inner;
        for (std::int64_t k = 0; k < inner; ++k) p[k] = p[k] * scale + shift;
      }
    }
    xhat_ = Tensor();
    return x;
  }

  if (count == 0) throw std::invalid_argument("BatchNorm: empty batch in train mode");
  inv_std_.assign(channels_, 0.0f);
  xhat_ = Tensor(x.shape());
  for (int c = 0; c < channels_; ++c) {
    double sum = 0.0, sq = 0.0;
    for (std::int64_t i = 0; i < n; ++i) {
      const float* p = x.data() + (i * channels_ + c) * inner;
      for (std::int64_t k = 0; k < inner; ++k) sum += p[k];
    }
    const double mean = sum / static_cast<double>(count);
    for (std::int64_t i = 0; i < n; ++i) {
      const float* p = x.data() + (i * channels_ + c) * inner;
      for (std::int64_t k = 0; k < inner; ++k) {
        const double d = p[k] - mean;
        sq += d * d;
      }
    }
    const double var = sq / static_cast<double>(count);
    const float inv = static_cast<float>(1.0 / std::sqrt(var + eps_));
    inv_std_[c] = inv;
    const double unbiased = count > 1 ? sq / static_cast<double>(count - 1) : var;
    running_mean_[c] = static_cast<float>((1.0 - momentum_) * running_mean_[c] + momentum_ * mean);
    running_var_[c] = static_cast<float>((1.0 - momentum_) * running_var_[c] + momentum_ * unbiased);
    const float m = static_cast<float>(mean);
    for (std::int64_t i = 0; i < n; ++i) {
      const std::int64_t off = (i * channels_ + c) * inner;
      float* p = x.data() + off;
      float* h = xhat_.data() + off;
      for (std::int64_t k = 0; k < inner; ++k) {
        h[k] = (p[k] - m) * inv;
        p[k] = gamma_[c] * h[k] + beta_[c];
      }
    }
  }
  return x;
}

Tensor BatchNorm::backward(const Tensor& grad_out) {
  require_cache(!xhat_.empty(), "BatchNorm");
  const std::int64_t n = xhat_.dim(0);
  const std::int64_t inner = xhat_.size() / (n * channels_);
  const double count = static_cast<double>(n * inner);
  Tensor dx(xhat_.shape());
  for (int c = 0; c < channels_; ++c) {
    double dg = 0.0, db = 0.0;
    for (std::int64_t i = 0; i < n; ++i) {
      const std::int64_t off = (i * channels_ + c) * inner;
      for (std::int64_t k = 0; k < inner; ++k) {
        dg += static_cast<double>(grad_out[off + k]) * xhat_[off + k];
        db += grad_out[off + k];
      }
    }
    gamma_grad_[c] += static_cast<float>(dg);
    beta_grad_[c] += static_cast<float>(db);
    if (!input_grad_) continue;
    const double scale = gamma_[c] * inv_std_[c] / count;
    for (std::int64_t i = 0; i < n; ++i) {
      const std::int64_t off = (i * channels_ + c) * inner;
      for (std::int64_t k = 0; k < inner; ++k)
        dx[off + k] = static_cast<float>(scale * (count * grad_out[off + k] - db - xhat_[off + k] * dg));
    }
  }
  xhat_ = Tensor();
  return dx;
}

void BatchNorm::collect(const std::string& prefix, ParamList& out) {
  out.push_back({join_name(prefix, "weight"), &gamma_, &gamma_grad_, false});
  out.push_back({join_name(prefix, "bias"), &beta_, &beta_grad_, false});
  out.push_back({join_name(prefix, "running_mean"), &running_mean_, nullptr, false});
  out.push_back({join_name(prefix, "running_var"), &running_var_, nullptr, false});
}

std::string BatchNorm::describe() const { return "BatchNorm(" + std::to_string(channels_) + ")"; }

void BatchNorm::init(Rng&) {
  gamma_.fill(1.0f);
  beta_.fill(0.0f);
  running_mean_.fill(0.0f);
  running_var_.fill(1.0f);
}

// ------------------------------------------------------------------ ReLU

Tensor ReLU::forward(Tensor x, Mode mode) {
  for (float& v : x.vec()) v = v > 0.0f ? v : 0.0f;
  if (mode == Mode::train)
    output_ = x;
  else
    output_ = Tensor();
  return x;
}

Tensor ReLU::backward(const Tensor& grad_out) {
  require_cache(!output_.empty(), "ReLU");
  Tensor dx = grad_out;
  for (std::int64_t i = 0; i < dx.size(); ++i)
    if (output_[i] <= 0.0f) dx[i] = 0.0f;
  output_ = Tensor();
  return dx;
}

// ------------------------------------------------------------- MaxPool3d

MaxPool3d::MaxPool3d(Triple kernel, Triple stride, Triple padding)
    : kernel_(kernel), stride_(stride), padding_(padding) {}

Tensor MaxPool3d::forward(Tensor x, Mode mode) {
  if (x.rank() != 5) throw std::invalid_argument("MaxPool3d expects rank-5 input");
  Shape os{x.dim(0), x.dim(1), 0, 0, 0};
  for (int i = 0; i < 3; ++i) os[2 + i] = (x.dim(2 + i) + 2 * padding_[i] - kernel_[i]) / stride_[i] + 1;
  Tensor y(os);
  const bool keep = mode == Mode::train;
  if (keep) argmax_.assign(static_cast<std::size_t>(y.size()), -1);
  const std::int64_t T = x.dim(2), H = x.dim(3), W = x.dim(4);
  const std::int64_t planes = x.dim(0) * x.dim(1);
  std::int64_t o = 0;
  for (std::int64_t p = 0; p < planes; ++p) {
    const float* src = x.data() + p * T * H * W;
    for (std::int64_t t = 0; t < os[2]; ++t)
      for (std::int64_t h = 0; h < os[3]; ++h)
        for (std::int64_t w = 0; w < os[4]; ++w, ++o) {
          float best = -std::numeric_limits<float>::infinity();
          std::int64_t arg = -1;
          for (int a = 0; a < kernel_[0]; ++a) {
            const std::int64_t it = t * stride_[0] - padding_[0] + a;
            if (it < 0 || it >= T) continue;
            for (int b = 0; b < kernel_[1]; ++b) {
              const std::int64_t ih = h * stride_[1] - padding_[1] + b;
              if (ih < 0 || ih >= H) continue;
              for (int c = 0; c < kernel_[2]; ++c) {
                const std::int64_t iw = w * stride_[2] - padding_[2] + c;
                if (iw < 0 || iw >= W) continue;
                const std::int64_t idx = (it * H + ih) * W + iw;
                if (src[idx] > best) {
                  best = src[idx];
                  arg = idx;
                }
              }
            }
          }
          y[o] = best;
          if (keep) argmax_[static_cast<std::size_t>(o)] = p * T * H * W + arg;
        }
  }
  in_shape_ = keep ? x.shape() : Shape{};
  return y;
}

Tensor MaxPool3d::backward(const Tensor& grad_out) {
  require_cache(!in_shape_.empty(), "MaxPool3d");
  Tensor dx(in_shape_);
  for (std::int64_t i = 0; i < grad_out.size(); ++i) dx[argmax_[static_cast<std::size_t>(i)]] += grad_out[i];
  in_shape_.clear();
  return dx;
}

std::string MaxPool3d::describe() const {
  return "MaxPool3d(k=" + triple_str(kernel_) + ", s=" + triple_str(stride_) + ", p=" + triple_str(padding_) + ")";
}

// --------------------------------------------------------- GlobalAvgPool

Tensor GlobalAvgPool::forward(Tensor x, Mode mode) {
  if (x.rank() < 2) throw std::invalid_argument("GlobalAvgPool expects (N, C, ...)");
  const std::int64_t n = x.dim(0), c = x.dim(1);
  const std::int64_t inner = x.size() / std::max<std::int64_t>(n * c, 1);
  Tensor y({n, c});
  for (std::int64_t i = 0; i < n * c; ++i) {
    double s = 0.0;
    for (std::int64_t k = 0; k < inner; ++k) s += x[i * inner + k];
    y[i] = static_cast<float>(s / static_cast<double>(inner));
  }
  in_shape_ = mode == Mode::train ? x.shape() : Shape{};
  return y;
}

Tensor GlobalAvgPool::backward(const Tensor& grad_out) {
  require_cache(!in_shape_.empty(), "GlobalAvgPool");
  Tensor dx(in_shape_);
  const std::int64_t rows = in_shape_[0] * in_shape_[1];
  const std::int64_t inner = dx.size() / std::max<std::int64_t>(rows, 1);
  const float scale = 1.0f / static_cast<float>(inner);
  for (std::int64_t i = 0; i < rows; ++i) std::fill_n(dx.data() + i * inner, inner, grad_out[i] * scale);
  in_shape_.clear();
  return dx;
}

// ---------------------------------------------------------------- Linear

Linear::Linear(int in_features, int out_features, bool bias)
    : in_(in_features),
      out_(out_features),
      has_bias_(bias),
      weight_({out_features, in_features}),
      weight_grad_({out_features, in_features}) {
  if (has_bias_) {
    bias_ = Tensor({out_features});
    bias_grad_ = Tensor({out_features});
  }
}

Tensor Linear::forward(Tensor x, Mode mode) {
  if (x.rank() != 2 || x.dim(1) != in_)
    throw std::invalid_argument("Linear(" + std::to_string(in_) + "->" + std::to_string(out_) + ") got " +
                                shape_str(x.shape()));
  const std::int64_t n = x.dim(0);
  Tensor y({n, out_});
  ConstMatMap xm(x.data(), n, in_);
  ConstMatMap w(weight_.data(), out_, in_);
  MatMap ym(y.data(), n, out_);
  ym.noalias() = xm * w.transpose();
  if (has_bias_)
    for (std::int64_t i = 0; i < n; ++i)
      for (int o = 0; o < out_; ++o) ym(i, o) += bias_[o];
  if (mode == Mode::train)
    input_ = std::move(x);
  else
    input_ = Tensor();
  return y;
}

Tensor Linear::backward(const Tensor& grad_out) {
  require_cache(input_.rank() == 2, "Linear");
  const std::int64_t n = input_.dim(0);
  if (grad_out.shape() != Shape{n, out_}) throw std::invalid_argument("Linear::backward: gradient shape mismatch");
  ConstMatMap dy(grad_out.data(), n, out_);
  ConstMatMap xm(input_.data(), n, in_);
  MatMap dw(weight_grad_.data(), out_, in_);
  dw.noalias() += dy.transpose() * xm;
  if (has_bias_)
    for (int o = 0; o < out_; ++o) bias_grad_[o] += dy.col(o).sum();
  Tensor dx;
  if (input_grad_) {
    dx = Tensor({n, in_});
    ConstMatMap w(weight_.data(), out_, in_);
    MatMap dxm(dx.data(), n, in_);
    dxm.noalias() = dy * w;
  }
  input_ = Tensor();
  return dx;
}

void Linear::collect(const std::string& prefix, ParamList& out) {
  out.push_back({join_name(prefix, "weight"), &weight_, &weight_grad_, true});
  if (has_bias_) out.push_back({join_name(prefix, "bias"), &bias_, &bias_grad_, true});
}

std::string Linear::describe() const {
  return "Linear(" + std::to_string(in_) + "->" + std::to_string(out_) + (has_bias_ ? "" : ", no bias") + ")";
}

void Linear::init(Rng& rng) {
  he_uniform(weight_, in_, rng);
  if (has_bias_) bias_.fill(0.0f);
}

// ------------------------------------------------------------ Sequential

Sequential& Sequential::add(std::string name, LayerPtr layer) {
  layers_.emplace_back(std::move(name), std::move(layer));
  return *this;
}

Tensor Sequential::forward(Tensor x, Mode mode) {
  for (auto& [name, layer] : layers_) x = layer->forward(std::move(x), mode);
  return x;
}

Tensor Sequential::backward(const Tensor& grad_out) {
  Tensor g = grad_out;
  for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) {
    const bool first = std::next(it) == layers_.rend();
    if (first) it->second->set_input_grad(input_grad_);
    g = it->second->backward(g);
  }
  return g;
}

void Sequential::collect(const std::string& prefix, ParamList& out) {
  for (auto& [name, layer] : layers_) layer->collect(join_name(prefix, name), out);
}

void Sequential::layer_list(const std::string& prefix, std::vector<std::string>& out) const {
  for (const auto& [name, layer] : layers_) layer->layer_list(join_name(prefix, name), out);
}

void Sequential::init(Rng& rng) {
  for (auto& [name, layer] : layers_) layer->init(rng);
}

}  // namespace skd::nn
