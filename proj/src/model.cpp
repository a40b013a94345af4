// SPDX-License-Identifier: Apache-2.0
#include "skd/model.hpp"

#include "skd/errors.hpp"
#include "skd/nn/resnet3d.hpp"

namespace skd {

std::string to_string(EncoderArch arch) {
  switch (arch) {
    case EncoderArch::toy3d: return "toy3d";
    case EncoderArch::resnet3d_18: return "resnet3d-18";
    case EncoderArch::resnet3d_50: return "resnet3d-50";
  }
  return "?";
}

EncoderArch parse_encoder_arch(const std::string& tag) {
  if (tag == "toy3d") return EncoderArch::toy3d;
  if (tag == "resnet3d-18") return EncoderArch::resnet3d_18;
  if (tag == "resnet3d-50") return EncoderArch::resnet3d_50;
  throw InvalidInput("unsupported encoder architecture '" + tag + "'");
}

ModelSpec ModelSpec::defaults(EncoderArch arch, int num_classes) {
  switch (arch) {
    case EncoderArch::toy3d: return {arch, num_classes, 128, 128, 32};
    case EncoderArch::resnet3d_18: return {arch, num_classes, 512, 2048, 512};
    case EncoderArch::resnet3d_50: return {arch, num_classes, 2048, 2048, 512};
  }
  throw InvalidInput("unsupported encoder architecture");
}

void ModelSpec::validate() const {
  if (num_classes < 2) throw ConfigError("model.num_classes", "must be at least 2");
  if (proj_dim < 1) throw ConfigError("model.proj_dim", "must be positive");
  if (pred_hidden < 1 || pred_hidden >= proj_dim)
    throw ConfigError("model.pred_hidden", "must be positive and smaller than proj_dim");
  switch (arch) {
    case EncoderArch::toy3d:
      if (repr_dim < 8 || repr_dim % 8 != 0) throw ConfigError("model.repr_dim", "toy3d needs a multiple of 8");
      break;
    case EncoderArch::resnet3d_18:
      if (repr_dim != 512) throw ConfigError("model.repr_dim", "resnet3d-18 produces 512 features");
      break;
    case EncoderArch::resnet3d_50:
      if (repr_dim != 2048) throw ConfigError("model.repr_dim", "resnet3d-50 produces 2048 features");
      break;
  }
}

SiameseModel::SiameseModel(ModelSpec spec) : spec_(spec) {
  spec_.validate();
  nn::Encoder enc;
  switch (spec_.arch) {
    case EncoderArch::toy3d: enc = nn::make_toy3d(spec_.repr_dim); break;
    case EncoderArch::resnet3d_18: enc = nn::make_resnet3d(18); break;
    case EncoderArch::resnet3d_50: enc = nn::make_resnet3d(50); break;
  }
  encoder_ = std::move(enc.net);
  encoder_->set_input_grad(false);
  fc_ = std::make_unique<nn::Linear>(spec_.repr_dim, spec_.num_classes);
  projector_ = std::make_unique<nn::Linear>(spec_.repr_dim, spec_.proj_dim);
  predictor_ = std::make_unique<nn::Sequential>();
  predictor_->emplace<nn::Linear>("fc1", spec_.proj_dim, spec_.pred_hidden);
  predictor_->emplace<nn::BatchNorm>("bn1", spec_.pred_hidden);
  predictor_->emplace<nn::ReLU>("relu");
  predictor_->emplace<nn::Linear>("fc2", spec_.pred_hidden, spec_.proj_dim);
}

void SiameseModel::init(std::uint64_t seed) {
  Rng rng(seed);
  encoder_->init(rng);
  fc_->init(rng);
  projector_->init(rng);
  predictor_->init(rng);
}

namespace {

void check_dims(const Tensor& t, std::int64_t n, std::int64_t d, const char* what) {
  if (t.rank() != 2 || t.dim(0) != n || t.dim(1) != d)
    throw ShapeError(std::string(what) + " has shape " + shape_str(t.shape()));
}

}  // namespace

Tensor SiameseModel::encode(Tensor clips, nn::Mode mode) {
  if (clips.rank() != 5 || clips.dim(1) != 3) throw ShapeError("encoder input must be (N, 3, T, H, W)");
  const std::int64_t n = clips.dim(0);
  Tensor r = encoder_->forward(std::move(clips), mode);
  check_dims(r, n, spec_.repr_dim, "representation");
  return r;
}

Tensor SiameseModel::classify(Tensor r, nn::Mode mode) {
  if (r.rank() != 2 || r.dim(1) != spec_.repr_dim) throw ShapeError("classifier input has wrong width");
  return fc_->forward(std::move(r), mode);
}

Tensor SiameseModel::project(Tensor r, nn::Mode mode) {
  if (r.rank() != 2 || r.dim(1) != spec_.repr_dim) throw ShapeError("projector input has wrong width");
  return projector_->forward(std::move(r), mode);
}

Tensor SiameseModel::predict(Tensor z, nn::Mode mode) {
  if (z.rank() != 2 || z.dim(1) != spec_.proj_dim) throw ShapeError("predictor input has wrong width");
  return predictor_->forward(std::move(z), mode);
}

ForwardResult SiameseModel::forward(Tensor clips, nn::Mode mode, bool heads) {
  const std::int64_t n = clips.dim(0);
  ForwardResult out;
  out.r = encode(std::move(clips), mode);
  out.p = classify(out.r, mode);
  check_dims(out.p, n, spec_.num_classes, "logits");
  if (heads) {
    out.z = project(out.r, mode);
    out.v = predict(out.z, mode);
    check_dims(out.z, n, spec_.proj_dim, "projection");
    check_dims(out.v, n, spec_.proj_dim, "prediction");
  }
  heads_cached_ = heads && mode == nn::Mode::train;
  return out;
}

void SiameseModel::backward(const Tensor& dp, const Tensor& dz, const Tensor& dv) {
  Tensor dr = fc_->backward(dp);
  if (heads_cached_) {
    Tensor dzt = predictor_->backward(dv.empty() ? Tensor({dp.dim(0), spec_.proj_dim}) : dv);
    if (!dz.empty()) dzt.add_(dz);
    dr.add_(projector_->backward(dzt));
  } else if (!dv.empty() || !dz.empty()) {
    throw std::logic_error("backward: gradient for heads that were not run");
  }
  heads_cached_ = false;
  encoder_->backward(dr);
}

std::vector<double> row(const Tensor& m, std::int64_t i) {
  const std::int64_t d = m.dim(1);
  return std::vector<double>(m.data() + i * d, m.data() + (i + 1) * d);
}

std::vector<BranchOutputs> split_branches(const ForwardResult& fwd, std::int64_t n) {
  if (fwd.r.dim(0) != 2 * n) throw ShapeError("split_branches: expected a stacked two-view batch");
  std::vector<BranchOutputs> out(static_cast<std::size_t>(n));
  const bool heads = !fwd.z.empty();
  for (std::int64_t i = 0; i < n; ++i) {
    BranchOutputs& b = out[static_cast<std::size_t>(i)];
    b.r1 = row(fwd.r, i);
    b.r2 = row(fwd.r, n + i);
    b.p1 = row(fwd.p, i);
    b.p2 = row(fwd.p, n + i);
    if (heads) {
      b.z1 = row(fwd.z, i);
      b.z2 = row(fwd.z, n + i);
      b.v1 = row(fwd.v, i);
      b.v2 = row(fwd.v, n + i);
    }
  }
  return out;
}

std::vector<BranchOutputs> SiameseModel::siamese_forward(const Tensor& x1, const Tensor& x2, nn::Mode mode) {
  if (x1.shape() != x2.shape()) throw ShapeError("the two view batches must have the same shape");
  const std::int64_t n = x1.dim(0);
  return split_branches(forward(Tensor::concat_rows(x1, x2), mode, true), n);
}

nn::ParamList SiameseModel::params() {
  nn::ParamList out;
  encoder_->collect("encoder", out);
  fc_->collect("fc", out);
  projector_->collect("projector", out);
  predictor_->collect("predictor", out);
  return out;
}

void SiameseModel::zero_grad() {
  for (auto& p : params())
    if (p.grad) p.grad->fill(0.0f);
}

std::int64_t SiameseModel::parameter_count() {
  std::int64_t n = 0;
  for (auto& p : params())
    if (p.trainable()) n += p.value->size();
  return n;
}

std::vector<std::string> SiameseModel::layer_list() const {
  std::vector<std::string> out;
  encoder_->layer_list("encoder", out);
  fc_->layer_list("fc", out);
  projector_->layer_list("projector", out);
  predictor_->layer_list("predictor", out);
  return out;
}

SiameseModel build_model(const ModelSpec& spec, std::uint64_t seed) {
  SiameseModel m(spec);
  m.init(seed);
  return m;
}

}  // namespace skd
