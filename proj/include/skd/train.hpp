// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "skd/augment.hpp"
#include "skd/checkpoint.hpp"
#include "skd/data.hpp"
#include "skd/losses.hpp"
#include "skd/model.hpp"

namespace skd {

enum class MechanismKind { baseline, baseline_augment, kd, self_kd, skd_srl };

std::string to_string(MechanismKind kind);
MechanismKind parse_mechanism(const std::string& tag);

/// Loss weights a mechanism actually trains with.
HyperParams effective_hp(MechanismKind kind, const HyperParams& hp);

struct TrainConfig {
  double lr = 0.01;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  int batch_size = 32;
  int max_epochs = 200;
  int plateau_patience = 10;
  double plateau_factor = 0.1;
  double min_lr = 1e-6;
  HyperParams hp;
  std::uint64_t seed = 0;
  std::filesystem::path checkpoint_dir;  // empty: no checkpoints
  std::filesystem::path metrics_path;    // empty: metrics only returned
  int workers = 1;
  bool keep_checkpoints = false;  // also keep epoch_NNNN.ckpt next to last.ckpt
  bool record_time = true;        // false writes seconds = 0 for byte-stable metrics

  void validate() const;
};

struct OptimizerState {
  std::map<std::string, Tensor> velocity;
  double current_lr = 0.01;
  int epochs_since_improvement = 0;
  std::optional<double> best_val_acc;
};

OptimizerState init_optimizer(const TrainConfig& cfg);

/// One momentum-SGD update over n scalars, in the precision of the storage:
///   v = m * v + (g + wd * w); w = w - lr * v
template <class T>
void sgd_update(T* w, const T* g, T* v, std::size_t n, double lr, double momentum, double weight_decay) {
  for (std::size_t i = 0; i < n; ++i) {
    const double gi = static_cast<double>(g[i]) + weight_decay * static_cast<double>(w[i]);
    v[i] = static_cast<T>(momentum * static_cast<double>(v[i]) + gi);
    w[i] = static_cast<T>(static_cast<double>(w[i]) - lr * static_cast<double>(v[i]));
  }
}

/// Classic momentum with additive L2:
///   g' = g + wd * w (only for parameters with decay), v = m * v + g', w -= lr * v.
/// All gradients are checked before any parameter changes; a non-finite one
/// throws TrainingDivergence.
void sgd_step(nn::ParamList& params, OptimizerState& state, const TrainConfig& cfg);

/// Returns true when the learning rate was reduced.
bool plateau_update(OptimizerState& state, double val_acc, const TrainConfig& cfg);

struct MetricsRecord {
  int epoch = 0;  // 1-based
  double loss_total = 0.0;
  double loss_ce = 0.0;
  double loss_kl = 0.0;
  double loss_sim = 0.0;
  double val_top1 = 0.0;
  double lr = 0.0;  // rate used during the epoch
  double seconds = 0.0;

  bool operator==(const MetricsRecord&) const = default;
};

nlohmann::json to_json(const MetricsRecord& m);
MetricsRecord metrics_from_json(const nlohmann::json& j);
std::string metrics_line(const MetricsRecord& m);
std::vector<MetricsRecord> read_metrics(const std::filesystem::path& path);

/// Everything a run needs besides the dataset.
struct RunSetup {
  ModelSpec model;
  TrainConfig train;
  AugmentConfig augment;
  MechanismKind mechanism = MechanismKind::skd_srl;
  SiameseModel* teacher = nullptr;  // required for kd
};

/// Loss of one batch under the mechanism, with gradients accumulated into the
/// model. The caller zeroes gradients and steps the optimizer.
losses::LossTerms train_step(SiameseModel& model, const Batch& batch, const RunSetup& setup);

/// The forward half of `train_step` without back-propagation.
losses::LossTerms batch_loss(SiameseModel& model, const Batch& batch, const RunSetup& setup);

ViewMode view_mode(MechanismKind kind);

struct TrainState {
  SiameseModel model;
  OptimizerState optimizer;
  int epoch = 0;  // completed epochs
  std::vector<MetricsRecord> metrics;
};

struct TrainResult {
  SiameseModel model;
  std::vector<MetricsRecord> metrics;
};

/// Per-epoch callback, invoked after metrics and checkpoint are written.
using EpochHook = std::function<void(const MetricsRecord&)>;

/// The training loop shared by all mechanisms. With `resume`, training
/// continues from the checkpointed epoch; the returned metrics include the
/// epochs already recorded in the checkpoint.
TrainResult train(const RunSetup& setup, const DatasetSplit& split, std::optional<TrainState> resume = std::nullopt,
                  const EpochHook& hook = {});

/// The full self-distillation objective.
TrainResult train_skd_srl(const ModelSpec& spec, const DatasetSplit& split, const TrainConfig& cfg,
                          const AugmentConfig& augment = {});

/// Canonical arrays (encoder.*, fc.*, projector.*, predictor.*) plus spec and
/// seed metadata.
Checkpoint model_checkpoint(SiameseModel& model, std::uint64_t seed);
SiameseModel load_model(const Checkpoint& ckpt);

/// Clip geometry used for evaluation, stored as meta "eval_view" so a
/// checkpoint can be scored without its run config.
void set_eval_view(Checkpoint& ckpt, const AugmentConfig& cfg);
/// Defaults for anything the checkpoint does not record.
AugmentConfig eval_view(const Checkpoint& ckpt);

/// Adds optimizer velocity, epoch, schedule state, run settings and metrics.
void save_checkpoint(const std::filesystem::path& path, SiameseModel& model, const OptimizerState& opt, int epoch,
                     const RunSetup& setup, const std::vector<MetricsRecord>& metrics);
/// Fully validates the file before returning; nothing is modified on failure.
TrainState load_checkpoint(const std::filesystem::path& path);

nlohmann::json to_json(const ModelSpec& spec);
ModelSpec model_spec_from_json(const nlohmann::json& j);

}  // namespace skd
