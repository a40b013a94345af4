// SPDX-License-Identifier: Apache-2.0
#include "skd/evalbench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "skd/errors.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace skd {

void MechanismSpec::validate() const {
  if ((kind == MechanismKind::kd) != teacher_spec.has_value())
    throw ConfigError("mechanism.teacher", "a teacher spec is required for kd and only for kd");
  if (teacher_spec) teacher_spec->validate();
}

ModelSpec default_teacher_spec(int num_classes) {
  ModelSpec s = ModelSpec::defaults(EncoderArch::toy3d, num_classes);
  s.repr_dim = 256;
  return s;
}

double published_ucf101_top1(MechanismKind kind) {
  switch (kind) {
    case MechanismKind::baseline: return 46.5;
    case MechanismKind::baseline_augment: return 55.6;
    case MechanismKind::kd: return 61.4;
    case MechanismKind::self_kd: return 66.7;
    case MechanismKind::skd_srl: return 69.8;
  }
  return 0.0;
}

std::vector<int> predict_labels(SiameseModel& model, const std::vector<LabeledVideo>& videos,
                                const AugmentConfig& cfg, std::size_t batch_size) {
  std::vector<int> out;
  out.reserve(videos.size());
  for (std::size_t b = 0; b < videos.size(); b += batch_size) {
    const std::size_t e = std::min(videos.size(), b + batch_size);
    std::vector<Clip> clips;
    for (std::size_t i = b; i < e; ++i) clips.push_back(center_clip(videos[i].video, cfg));
    std::vector<const Clip*> ptrs;
    for (const auto& c : clips) ptrs.push_back(&c);
    const Tensor logits = model.forward(clips_to_tensor(ptrs), nn::Mode::eval, false).p;
    const std::int64_t k = logits.dim(1);
    for (std::int64_t i = 0; i < logits.dim(0); ++i) {
      const float* r = logits.data() + i * k;
      out.push_back(static_cast<int>(std::max_element(r, r + k) - r));
    }
  }
  return out;
}

double top1_from_predictions(std::span<const int> predicted, std::span<const int> labels) {
  if (predicted.size() != labels.size()) throw ShapeError("prediction/label count mismatch");
  if (predicted.empty()) throw InvalidInput("top-1 of an empty split");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < predicted.size(); ++i) hits += predicted[i] == labels[i];
  return static_cast<double>(hits) / static_cast<double>(predicted.size());
}

double top1_accuracy(SiameseModel& model, const std::vector<LabeledVideo>& videos, const AugmentConfig& cfg,
                     std::size_t batch_size) {
  if (videos.empty()) throw InvalidInput("top-1 of an empty split");
  const std::vector<int> pred = predict_labels(model, videos, cfg, batch_size);
  std::vector<int> labels;
  for (const auto& v : videos) labels.push_back(v.label);
  return top1_from_predictions(pred, labels);
}

SiameseModel train_teacher(const ModelSpec& teacher_spec, const DatasetSplit& split, TrainConfig cfg,
                           const AugmentConfig& augment) {
  cfg.checkpoint_dir.clear();
  cfg.metrics_path.clear();
  return train({teacher_spec, cfg, augment, MechanismKind::baseline_augment, nullptr}, split).model;
}

RunResult run_mechanism(const MechanismSpec& mech, const ModelSpec& model_spec, const DatasetSplit& split,
                        TrainConfig cfg, const AugmentConfig& augment, std::uint64_t seed, SiameseModel* teacher) {
  mech.validate();
  if (split.test.empty()) throw InvalidInput("test split is empty");
  cfg.seed = seed;
  const auto t0 = std::chrono::steady_clock::now();
  std::optional<SiameseModel> own_teacher;
  if (mech.kind == MechanismKind::kd && !teacher) {
    own_teacher.emplace(train_teacher(*mech.teacher_spec, split, cfg, augment));
    teacher = &*own_teacher;
  }
  TrainResult tr = train({model_spec, cfg, augment, mech.kind, teacher}, split);
  RunResult out;
  out.record.kind = mech.kind;
  out.record.seed = seed;
  out.record.val_top1 = top1_accuracy(tr.model, split.val, augment);
  out.record.test_top1 = top1_accuracy(tr.model, split.test, augment);
  out.record.seconds =
      cfg.record_time ? std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count() : 0.0;
  out.metrics = std::move(tr.metrics);
  return out;
}

namespace {

void mean_std(const std::vector<double>& xs, double& mean, double& sd) {
  mean = 0.0;
  for (double x : xs) mean += x;
  mean /= static_cast<double>(xs.size());
  sd = 0.0;
  if (xs.size() < 2) return;
  for (double x : xs) sd += (x - mean) * (x - mean);
  sd = std::sqrt(sd / static_cast<double>(xs.size() - 1));
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

}  // namespace

std::vector<MechanismSummary> ComparisonResult::summary() const {
  std::vector<MechanismSummary> rows;
  for (MechanismKind k : kMechanismOrder) {
    std::vector<double> val, test;
    MechanismSummary s;
    s.kind = k;
    for (const auto& r : runs)
      if (r.kind == k) {
        s.seeds.push_back(r.seed);
        val.push_back(r.val_top1);
        test.push_back(r.test_top1);
        s.seconds += r.seconds;
      }
    if (s.seeds.empty()) continue;
    mean_std(val, s.val_mean, s.val_std);
    mean_std(test, s.test_mean, s.test_std);
    rows.push_back(std::move(s));
  }
  return rows;
}

ComparisonResult compare_mechanisms(std::span<const MechanismKind> kinds, std::span<const std::uint64_t> seeds,
                                    const ModelSpec& model_spec, const ModelSpec& teacher_spec,
                                    const DatasetSplit& split, const TrainConfig& cfg, const AugmentConfig& augment,
                                    const RunHook& hook) {
  if (kinds.empty() || seeds.empty()) throw InvalidInput("compare needs at least one mechanism and one seed");
  std::vector<MechanismKind> ordered;
  for (MechanismKind k : kMechanismOrder)
    if (std::find(kinds.begin(), kinds.end(), k) != kinds.end()) ordered.push_back(k);

  std::optional<SiameseModel> teacher;
  ComparisonResult result;
  for (MechanismKind k : ordered) {
    MechanismSpec mech{k, std::nullopt};
    if (k == MechanismKind::kd) {
      mech.teacher_spec = teacher_spec;
      if (!teacher) {
        TrainConfig tc = cfg;
        tc.seed = derive_seed(seeds.front(), {0x7eac});
        teacher.emplace(train_teacher(teacher_spec, split, tc, augment));
      }
    }
    for (std::uint64_t seed : seeds) {
      TrainConfig rc = cfg;
      rc.checkpoint_dir.clear();
      rc.metrics_path.clear();
      RunResult r = run_mechanism(mech, model_spec, split, rc, augment, seed, teacher ? &*teacher : nullptr);
      if (hook) hook(r);
      result.runs.push_back(r.record);
    }
  }
  return result;
}

std::string summary_table(const ComparisonResult& result) {
  std::ostringstream os;
  char line[256];
  std::snprintf(line, sizeof line, "%-18s %5s %16s %16s %10s %22s\n", "mechanism", "seeds", "val top-1 (%)",
                "test top-1 (%)", "seconds", "UCF101 ref. (%)*");
  os << line;
  for (const auto& s : result.summary()) {
    const std::string val = fmt("%.1f", 100 * s.val_mean) + " +- " + fmt("%.1f", 100 * s.val_std);
    const std::string test = fmt("%.1f", 100 * s.test_mean) + " +- " + fmt("%.1f", 100 * s.test_std);
    std::snprintf(line, sizeof line, "%-18s %5zu %16s %16s %10.1f %22.1f\n", to_string(s.kind).c_str(),
                  s.seeds.size(), val.c_str(), test.c_str(), s.seconds, published_ucf101_top1(s.kind));
    os << line;
  }
  os << "* published ResNet-18 UCF101 numbers, shown for reference; not reproduced by this run\n";
  return os.str();
}

json summary_json(const ComparisonResult& result) {
  json rows = json::array();
  for (const auto& s : result.summary())
    rows.push_back({{"mechanism", to_string(s.kind)},
                    {"seeds", s.seeds},
                    {"val_top1_mean", s.val_mean},
                    {"val_top1_std", s.val_std},
                    {"test_top1_mean", s.test_mean},
                    {"test_top1_std", s.test_std},
                    {"seconds", s.seconds},
                    {"reference_ucf101_top1_not_reproduced", published_ucf101_top1(s.kind)}});
  return {{"rows", rows}};
}

void compare_report(const ComparisonResult& result, const fs::path& out_dir) {
  if (result.runs.empty()) throw InvalidInput("empty comparison result");
  fs::create_directories(out_dir);
  auto open = [&](const char* name) {
    std::ofstream os(out_dir / name, std::ios::trunc);
    if (!os) throw Error("cannot write " + (out_dir / name).string());
    return os;
  };
  {
    std::ofstream os = open("report.csv");
    os << "mechanism,seed,val_top1,test_top1,seconds\n";
    std::vector<RunRecord> runs = result.runs;
    std::stable_sort(runs.begin(), runs.end(), [](const RunRecord& a, const RunRecord& b) {
      return static_cast<int>(a.kind) < static_cast<int>(b.kind);
    });
    for (const auto& r : runs)
      os << to_string(r.kind) << ',' << r.seed << ',' << fmt("%.17g", r.val_top1) << ','
         << fmt("%.17g", r.test_top1) << ',' << fmt("%.17g", r.seconds) << '\n';
  }
  open("summary.txt") << summary_table(result);
  open("summary.json") << summary_json(result).dump(2) << '\n';
}

ComparisonResult read_report_csv(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw NotFound("cannot open " + path.string());
  std::string line;
  if (!std::getline(is, line) || line != "mechanism,seed,val_top1,test_top1,seconds")
    throw CorruptData(path.string() + ":1: unexpected header");
  ComparisonResult out;
  int lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    for (std::string cell; std::getline(ss, cell, ',');) f.push_back(cell);
    const std::string where = path.string() + ":" + std::to_string(lineno) + ": ";
    if (f.size() != 5) throw CorruptData(where + "expected 5 fields");
    try {
      RunRecord r;
      r.kind = parse_mechanism(f[0]);
      r.seed = std::stoull(f[1]);
      r.val_top1 = std::stod(f[2]);
      r.test_top1 = std::stod(f[3]);
      r.seconds = std::stod(f[4]);
      out.runs.push_back(r);
    } catch (const std::exception& e) {
      throw CorruptData(where + e.what());
    }
  }
  return out;
}

}  // namespace skd
