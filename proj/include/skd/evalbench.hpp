// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "skd/train.hpp"

namespace skd {

struct MechanismSpec {
  MechanismKind kind = MechanismKind::skd_srl;
  std::optional<ModelSpec> teacher_spec;  // present exactly for kd

  void validate() const;
};

/// Larger toy encoder used as the frozen teacher of the kd comparator.
ModelSpec default_teacher_spec(int num_classes);

/// Comparison rows in presentation order.
inline constexpr std::array<MechanismKind, 5> kMechanismOrder{MechanismKind::baseline, MechanismKind::baseline_augment,
                                                              MechanismKind::kd, MechanismKind::self_kd,
                                                              MechanismKind::skd_srl};

/// Published UCF101 top-1 (%) of each mechanism with a ResNet-18 encoder.
/// Reported next to our numbers for orientation only; never reproduced here.
double published_ucf101_top1(MechanismKind kind);

/// Single centered view per video, eval-mode forward, argmax of the logits.
double top1_accuracy(SiameseModel& model, const std::vector<LabeledVideo>& videos, const AugmentConfig& cfg,
                     std::size_t batch_size = 16);
std::vector<int> predict_labels(SiameseModel& model, const std::vector<LabeledVideo>& videos,
                                const AugmentConfig& cfg, std::size_t batch_size = 16);
double top1_from_predictions(std::span<const int> predicted, std::span<const int> labels);

struct RunRecord {
  MechanismKind kind = MechanismKind::baseline;
  std::uint64_t seed = 0;
  double val_top1 = 0.0;
  double test_top1 = 0.0;
  double seconds = 0.0;

  bool operator==(const RunRecord&) const = default;
};

struct RunResult {
  RunRecord record;
  std::vector<MetricsRecord> metrics;
};

/// Trains the teacher of the kd comparator: two augmented views, CE only.
SiameseModel train_teacher(const ModelSpec& teacher_spec, const DatasetSplit& split, TrainConfig cfg,
                           const AugmentConfig& augment);

/// Trains `model_spec` under the mechanism with `cfg.seed` replaced by `seed`.
/// For kd a teacher is trained first unless one is supplied.
RunResult run_mechanism(const MechanismSpec& mech, const ModelSpec& model_spec, const DatasetSplit& split,
                        TrainConfig cfg, const AugmentConfig& augment, std::uint64_t seed,
                        SiameseModel* teacher = nullptr);

struct MechanismSummary {
  MechanismKind kind = MechanismKind::baseline;
  std::vector<std::uint64_t> seeds;
  double val_mean = 0.0, val_std = 0.0;
  double test_mean = 0.0, test_std = 0.0;
  double seconds = 0.0;  // summed over seeds
};

struct ComparisonResult {
  std::vector<RunRecord> runs;

  /// One row per mechanism present, in kMechanismOrder; std is the sample
  /// standard deviation over seeds (0 for a single seed).
  std::vector<MechanismSummary> summary() const;
  bool operator==(const ComparisonResult&) const = default;
};

using RunHook = std::function<void(const RunResult&)>;

/// Every (mechanism, seed) pair; the kd teacher is trained once, with the
/// first seed, and shared by all kd runs.
ComparisonResult compare_mechanisms(std::span<const MechanismKind> kinds, std::span<const std::uint64_t> seeds,
                                    const ModelSpec& model_spec, const ModelSpec& teacher_spec,
                                    const DatasetSplit& split, const TrainConfig& cfg, const AugmentConfig& augment,
                                    const RunHook& hook = {});

/// Writes out_dir/report.csv, out_dir/summary.txt and out_dir/summary.json.
void compare_report(const ComparisonResult& result, const std::filesystem::path& out_dir);
std::string summary_table(const ComparisonResult& result);
nlohmann::json summary_json(const ComparisonResult& result);
ComparisonResult read_report_csv(const std::filesystem::path& path);

}  // namespace skd
