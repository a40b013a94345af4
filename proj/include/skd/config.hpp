// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>

#include <json.hpp>

#include "skd/augment.hpp"
#include "skd/data.hpp"
#include "skd/evalbench.hpp"
#include "skd/model.hpp"
#include "skd/train.hpp"

namespace skd {

/// Everything a CLI run is configured with, as one JSON document:
///   {"synthetic": {...}, "augment": {...}, "model": {...},
///    "train": {..., "hp": {"tau", "alpha", "beta"}},
///    "mechanism": {"kind": "...", "teacher": {model fields}}}
/// Every section and key is optional; unknown keys are errors.
struct RunConfig {
  SyntheticConfig synthetic;
  AugmentConfig augment;
  ModelSpec model;
  TrainConfig train;
  MechanismKind mechanism = MechanismKind::skd_srl;
  ModelSpec teacher = default_teacher_spec(4);

  /// The teacher is attached only for kd.
  MechanismSpec mechanism_spec() const;
  /// Throws ConfigError naming the offending key.
  void validate() const;
};

/// Defaults are filled in (model dimensions follow the chosen architecture
/// and class count) and the result is validated.
RunConfig parse_run_config(const nlohmann::json& j);
RunConfig load_run_config(const std::filesystem::path& path);

/// Fully resolved config; parse_run_config(to_json(c)) reproduces c.
nlohmann::json to_json(const RunConfig& c);
void write_resolved_config(const RunConfig& c, const std::filesystem::path& path);

}  // namespace skd
