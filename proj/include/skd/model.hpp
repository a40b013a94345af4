// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "skd/augment.hpp"
#include "skd/losses.hpp"
#include "skd/nn/layers.hpp"

namespace skd {

enum class EncoderArch { toy3d, resnet3d_18, resnet3d_50 };

std::string to_string(EncoderArch arch);
/// Accepts "toy3d", "resnet3d-18", "resnet3d-50"; throws InvalidInput otherwise.
EncoderArch parse_encoder_arch(const std::string& tag);

struct ModelSpec {
  EncoderArch arch = EncoderArch::toy3d;
  int num_classes = 4;
  int repr_dim = 128;
  int proj_dim = 128;
  int pred_hidden = 32;

  /// toy3d: 128/128/32; resnet3d-18: 512/2048/512; resnet3d-50: 2048/2048/512.
  static ModelSpec defaults(EncoderArch arch, int num_classes);
  void validate() const;
  bool operator==(const ModelSpec&) const = default;
};

/// Row-major (N, dim) outputs of one forward over a stacked batch.
struct ForwardResult {
  Tensor r, p, z, v;  // z and v are empty when heads were skipped
};

/// Shared-weight encoder f, classifier FC, projector g and predictor q.
/// The two views of a batch are stacked along the batch axis and pushed
/// through a single set of parameters, so batch-norm statistics in train
/// mode are computed over both views together.
class SiameseModel {
 public:
  explicit SiameseModel(ModelSpec spec);
  SiameseModel(const SiameseModel&) = delete;
  SiameseModel& operator=(const SiameseModel&) = delete;
  SiameseModel(SiameseModel&&) noexcept = default;
  SiameseModel& operator=(SiameseModel&&) noexcept = default;

  const ModelSpec& spec() const { return spec_; }

  void init(std::uint64_t seed);

  /// (N, 3, T, H, W) -> (N, D)
  Tensor encode(Tensor clips, nn::Mode mode);
  Tensor classify(Tensor r, nn::Mode mode);
  Tensor project(Tensor r, nn::Mode mode);
  Tensor predict(Tensor z, nn::Mode mode);

  /// Encoder then FC; with `heads` also projector and predictor.
  ForwardResult forward(Tensor clips, nn::Mode mode, bool heads);

  /// Back-propagates from the last train-mode `forward`. `dv` and `dz` may
  /// be empty when heads were skipped; `dz` is the direct gradient on z (zero
  /// under stop-gradient), to which the predictor's input gradient is added.
  void backward(const Tensor& dp, const Tensor& dz, const Tensor& dv);

  /// Per-sample branch outputs for two aligned view batches.
  std::vector<BranchOutputs> siamese_forward(const Tensor& x1, const Tensor& x2, nn::Mode mode);

  nn::ParamList params();
  void zero_grad();
  std::int64_t parameter_count();
  std::vector<std::string> layer_list() const;

 private:
  ModelSpec spec_;
  std::unique_ptr<nn::Sequential> encoder_;
  std::unique_ptr<nn::Linear> fc_;
  std::unique_ptr<nn::Linear> projector_;
  std::unique_ptr<nn::Sequential> predictor_;
  bool heads_cached_ = false;
};

SiameseModel build_model(const ModelSpec& spec, std::uint64_t seed);

/// Splits stacked (2n, dim) forward results into per-sample branch outputs.
std::vector<BranchOutputs> split_branches(const ForwardResult& fwd, std::int64_t n);

std::vector<double> row(const Tensor& m, std::int64_t i);

}  // namespace skd
