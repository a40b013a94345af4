// SPDX-License-Identifier: Apache-2.0
#include "skd/train.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "skd/errors.hpp"
#include "skd/evalbench.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace skd {

std::string to_string(MechanismKind kind) {
  switch (kind) {
    case MechanismKind::baseline: return "baseline";
    case MechanismKind::baseline_augment: return "baseline_augment";
    case MechanismKind::kd: return "kd";
    case MechanismKind::self_kd: return "self_kd";
    case MechanismKind::skd_srl: return "skd_srl";
  }
  return "?";
}

MechanismKind parse_mechanism(const std::string& tag) {
  for (auto k : {MechanismKind::baseline, MechanismKind::baseline_augment, MechanismKind::kd, MechanismKind::self_kd,
                 MechanismKind::skd_srl})
    if (to_string(k) == tag) return k;
  throw InvalidInput("unknown mechanism '" + tag + "'");
}

HyperParams effective_hp(MechanismKind kind, const HyperParams& hp) {
  switch (kind) {
    case MechanismKind::baseline:
    case MechanismKind::baseline_augment: return {hp.tau, 0.0, 0.0};
    case MechanismKind::kd:
    case MechanismKind::self_kd: return {hp.tau, hp.alpha, 0.0};
    case MechanismKind::skd_srl: return hp;
  }
  return hp;
}

ViewMode view_mode(MechanismKind kind) {
  return kind == MechanismKind::baseline ? ViewMode::center : ViewMode::two_views;
}

void TrainConfig::validate() const {
  if (!(lr > 0.0) || !std::isfinite(lr)) throw ConfigError("train.lr", "must be positive");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("train.momentum", "must be in [0, 1)");
  if (!(weight_decay >= 0.0) || !std::isfinite(weight_decay))
    throw ConfigError("train.weight_decay", "must be non-negative");
  if (batch_size < 1) throw ConfigError("train.batch_size", "must be positive");
  if (max_epochs < 0) throw ConfigError("train.max_epochs", "must be non-negative");
  if (plateau_patience < 1) throw ConfigError("train.plateau_patience", "must be positive");
  if (!(plateau_factor > 0.0 && plateau_factor < 1.0)) throw ConfigError("train.plateau_factor", "must be in (0, 1)");
  if (!(min_lr > 0.0 && min_lr <= lr)) throw ConfigError("train.min_lr", "must be in (0, lr]");
  if (workers < 1) throw ConfigError("train.workers", "must be positive");
  if (!(hp.tau > 0.0) || !std::isfinite(hp.tau)) throw ConfigError("train.hp.tau", "must be positive");
  if (!(hp.alpha >= 0.0) || !std::isfinite(hp.alpha)) throw ConfigError("train.hp.alpha", "must be non-negative");
  if (!(hp.beta >= 0.0) || !std::isfinite(hp.beta)) throw ConfigError("train.hp.beta", "must be non-negative");
}

OptimizerState init_optimizer(const TrainConfig& cfg) {
  OptimizerState s;
  s.current_lr = cfg.lr;
  return s;
}

void sgd_step(nn::ParamList& params, OptimizerState& state, const TrainConfig& cfg) {
  for (const auto& p : params) {
    if (!p.trainable()) continue;
    if (p.grad->shape() != p.value->shape()) throw ShapeError("gradient shape mismatch for " + p.name);
    for (float g : p.grad->span())
      if (!std::isfinite(g)) throw TrainingDivergence("non-finite gradient in " + p.name);
  }
  const double lr = state.current_lr, m = cfg.momentum;
  for (auto& p : params) {
    if (!p.trainable()) continue;
    auto it = state.velocity.try_emplace(p.name, p.value->shape()).first;
    Tensor& v = it->second;
    if (v.shape() != p.value->shape()) throw ShapeError("velocity shape mismatch for " + p.name);
    sgd_update(p.value->data(), p.grad->data(), v.data(), static_cast<std::size_t>(v.size()), lr, m,
               p.decay ? cfg.weight_decay : 0.0);
  }
}

bool plateau_update(OptimizerState& state, double val_acc, const TrainConfig& cfg) {
  if (!(val_acc >= 0.0 && val_acc <= 1.0)) throw DomainError("validation accuracy must be in [0, 1]");
  if (!state.best_val_acc || val_acc > *state.best_val_acc + 1e-6) {
    state.best_val_acc = val_acc;
    state.epochs_since_improvement = 0;
    return false;
  }
  if (++state.epochs_since_improvement < cfg.plateau_patience) return false;
  state.epochs_since_improvement = 0;
  const double next = std::max(state.current_lr * cfg.plateau_factor, cfg.min_lr);
  const bool dropped = next < state.current_lr;
  state.current_lr = next;
  return dropped;
}

json to_json(const MetricsRecord& m) {
  return json{{"epoch", m.epoch},     {"loss_total", m.loss_total}, {"loss_ce", m.loss_ce},
              {"loss_kl", m.loss_kl}, {"loss_sim", m.loss_sim},     {"val_top1", m.val_top1},
              {"lr", m.lr},           {"seconds", m.seconds}};
}

MetricsRecord metrics_from_json(const json& j) {
  MetricsRecord m;
  m.epoch = j.at("epoch").get<int>();
  m.loss_total = j.at("loss_total").get<double>();
  m.loss_ce = j.at("loss_ce").get<double>();
  m.loss_kl = j.at("loss_kl").get<double>();
  m.loss_sim = j.at("loss_sim").get<double>();
  m.val_top1 = j.at("val_top1").get<double>();
  m.lr = j.at("lr").get<double>();
  m.seconds = j.at("seconds").get<double>();
  return m;
}

std::string metrics_line(const MetricsRecord& m) { return to_json(m).dump(); }

std::vector<MetricsRecord> read_metrics(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw NotFound("cannot open metrics file " + path.string());
  std::vector<MetricsRecord> out;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      out.push_back(metrics_from_json(json::parse(line)));
    } catch (const json::exception& e) {
      throw CorruptData(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

namespace {

Tensor grads_to_tensor(const std::vector<losses::Vec>& first, const std::vector<losses::Vec>& second) {
  const auto n = static_cast<std::int64_t>(first.size() + second.size());
  const auto d = static_cast<std::int64_t>(first.front().size());
  Tensor t({n, d});
  std::int64_t r = 0;
  for (const auto* part : {&first, &second})
    for (const auto& g : *part) {
      for (std::int64_t j = 0; j < d; ++j) t[r * d + j] = static_cast<float>(g[static_cast<std::size_t>(j)]);
      ++r;
    }
  return t;
}

losses::LossTerms run_step(SiameseModel& model, const Batch& batch, const RunSetup& setup, bool backprop) {
  const std::size_t n = batch.pairs.size();
  if (n == 0) throw InvalidInput("empty batch");
  const HyperParams hp = effective_hp(setup.mechanism, setup.train.hp);

  if (setup.mechanism == MechanismKind::baseline) {
    std::vector<const Clip*> clips;
    for (const auto& p : batch.pairs) clips.push_back(&p.x1);
    ForwardResult fwd = model.forward(clips_to_tensor(clips), nn::Mode::train, false);
    std::vector<losses::Vec> logits, labels, d_logits;
    for (std::size_t i = 0; i < n; ++i) {
      logits.push_back(row(fwd.p, static_cast<std::int64_t>(i)));
      labels.push_back(batch.pairs[i].label);
    }
    losses::LossTerms t = losses::single_view_loss(logits, labels, backprop ? &d_logits : nullptr);
    if (!std::isfinite(t.total)) throw TrainingDivergence("non-finite loss");
    if (backprop) model.backward(grads_to_tensor(d_logits, {}), {}, {});
    return t;
  }

  std::vector<const Clip*> clips;
  for (const auto& p : batch.pairs) clips.push_back(&p.x1);
  for (const auto& p : batch.pairs) clips.push_back(&p.x2);
  Tensor x = clips_to_tensor(clips);
  const auto sn = static_cast<std::int64_t>(n);

  std::vector<losses::Vec> t1, t2;
  if (setup.mechanism == MechanismKind::kd) {
    if (!setup.teacher) throw InvalidInput("kd mechanism requires a teacher model");
    ForwardResult tf = setup.teacher->forward(x, nn::Mode::eval, false);
    for (std::int64_t i = 0; i < sn; ++i) {
      t1.push_back(row(tf.p, i));
      t2.push_back(row(tf.p, sn + i));
    }
  }

  const bool heads = hp.beta != 0.0;
  ForwardResult fwd = model.forward(std::move(x), nn::Mode::train, heads);
  std::vector<BranchOutputs> outs = split_branches(fwd, sn);
  std::vector<LabeledBranches> lb(n);
  for (std::size_t i = 0; i < n; ++i) lb[i] = {std::move(outs[i]), batch.pairs[i].label};

  std::vector<losses::BranchGrads> grads;
  losses::LossTerms t = setup.mechanism == MechanismKind::kd
                            ? losses::teacher_kd_loss(lb, t1, t2, hp, backprop ? &grads : nullptr)
                            : losses::total_loss(lb, hp, backprop ? &grads : nullptr);
  if (!std::isfinite(t.total)) throw TrainingDivergence("non-finite loss");
  if (!backprop) return t;

  std::vector<losses::Vec> dp1, dp2, dv1, dv2;
  for (auto& g : grads) {
    dp1.push_back(std::move(g.p1));
    dp2.push_back(std::move(g.p2));
    if (heads) {
      dv1.push_back(std::move(g.v1));
      dv2.push_back(std::move(g.v2));
    }
  }
  model.backward(grads_to_tensor(dp1, dp2), {}, heads ? grads_to_tensor(dv1, dv2) : Tensor{});
  return t;
}

void write_metrics_file(const fs::path& path, const std::vector<MetricsRecord>& metrics) {
  if (path.empty()) return;
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw Error("cannot write metrics file " + path.string());
  for (const auto& m : metrics) os << metrics_line(m) << '\n';
}

void append_metrics(const fs::path& path, const MetricsRecord& m) {
  if (path.empty()) return;
  std::ofstream os(path, std::ios::app);
  if (!os) throw Error("cannot append to metrics file " + path.string());
  os << metrics_line(m) << '\n';
}

std::uint64_t model_seed(std::uint64_t seed) { return derive_seed(seed, {0x30de1}); }
std::uint64_t data_seed(const RunSetup& s) { return derive_seed(s.train.seed, {0xda7a, s.augment.seed}); }

}  // namespace

losses::LossTerms train_step(SiameseModel& model, const Batch& batch, const RunSetup& setup) {
  return run_step(model, batch, setup, true);
}

losses::LossTerms batch_loss(SiameseModel& model, const Batch& batch, const RunSetup& setup) {
  return run_step(model, batch, setup, false);
}

TrainResult train(const RunSetup& setup, const DatasetSplit& split, std::optional<TrainState> resume,
                  const EpochHook& hook) {
  const TrainConfig& cfg = setup.train;
  cfg.validate();
  setup.augment.validate();
  setup.model.validate();
  if (split.train.empty()) throw InvalidInput("train split is empty");
  if (split.val.empty()) throw InvalidInput("val split is empty");
  if (split.num_classes() != setup.model.num_classes)
    throw ConfigError("model.num_classes", "dataset has " + std::to_string(split.num_classes()) + " classes");
  if (setup.mechanism == MechanismKind::kd && !setup.teacher)
    throw InvalidInput("kd mechanism requires a teacher model");

  TrainState st = resume ? std::move(*resume)
                         : TrainState{build_model(setup.model, model_seed(cfg.seed)), init_optimizer(cfg), 0, {}};
  if (!(st.model.spec() == setup.model)) throw IncompatibleCheckpoint("checkpoint model spec differs from config");
  write_metrics_file(cfg.metrics_path, st.metrics);

  nn::ParamList params = st.model.params();
  const std::uint64_t dseed = data_seed(setup);
  for (int epoch = st.epoch; epoch < cfg.max_epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    BatchIterator it(split.train, split.num_classes(), static_cast<std::size_t>(cfg.batch_size), setup.augment, dseed,
                     static_cast<std::uint64_t>(epoch), view_mode(setup.mechanism), cfg.workers);
    losses::LossTerms sum;
    std::size_t seen = 0;
    const double lr_used = st.optimizer.current_lr;
    while (auto batch = it.next()) {
      st.model.zero_grad();
      const losses::LossTerms t = train_step(st.model, *batch, setup);
      sgd_step(params, st.optimizer, cfg);
      const auto bs = static_cast<double>(batch->pairs.size());
      sum.total += t.total * bs;
      sum.ce += t.ce * bs;
      sum.kl += t.kl * bs;
      sum.sim += t.sim * bs;
      seen += batch->pairs.size();
    }
    MetricsRecord m;
    m.epoch = epoch + 1;
    m.loss_total = sum.total / static_cast<double>(seen);
    m.loss_ce = sum.ce / static_cast<double>(seen);
    m.loss_kl = sum.kl / static_cast<double>(seen);
    m.loss_sim = sum.sim / static_cast<double>(seen);
    m.val_top1 = top1_accuracy(st.model, split.val, setup.augment);
    m.lr = lr_used;
    plateau_update(st.optimizer, m.val_top1, cfg);
    if (cfg.record_time)
      m.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    st.metrics.push_back(m);
    st.epoch = epoch + 1;
    append_metrics(cfg.metrics_path, m);
    if (!cfg.checkpoint_dir.empty()) {
      save_checkpoint(cfg.checkpoint_dir / "last.ckpt", st.model, st.optimizer, st.epoch, setup, st.metrics);
      if (cfg.keep_checkpoints) {
        char name[32];
        std::snprintf(name, sizeof name, "epoch_%04d.ckpt", st.epoch);
        fs::copy_file(cfg.checkpoint_dir / "last.ckpt", cfg.checkpoint_dir / name,
                      fs::copy_options::overwrite_existing);
      }
    }
    if (hook) hook(m);
  }
  return {std::move(st.model), std::move(st.metrics)};
}

TrainResult train_skd_srl(const ModelSpec& spec, const DatasetSplit& split, const TrainConfig& cfg,
                          const AugmentConfig& augment) {
  return train({spec, cfg, augment, MechanismKind::skd_srl, nullptr}, split);
}

json to_json(const ModelSpec& spec) {
  return json{{"arch", to_string(spec.arch)},
              {"num_classes", spec.num_classes},
              {"repr_dim", spec.repr_dim},
              {"proj_dim", spec.proj_dim},
              {"pred_hidden", spec.pred_hidden}};
}

ModelSpec model_spec_from_json(const json& j) {
  ModelSpec s;
  s.arch = parse_encoder_arch(j.at("arch").get<std::string>());
  s.num_classes = j.at("num_classes").get<int>();
  s.repr_dim = j.at("repr_dim").get<int>();
  s.proj_dim = j.at("proj_dim").get<int>();
  s.pred_hidden = j.at("pred_hidden").get<int>();
  return s;
}

Checkpoint model_checkpoint(SiameseModel& model, std::uint64_t seed) {
  Checkpoint c;
  c.meta["kind"] = "model";
  c.meta["spec"] = to_json(model.spec());
  c.meta["seed"] = seed;
  for (const auto& p : model.params()) c.arrays.emplace_back(p.name, *p.value);
  return c;
}

namespace {

SiameseModel model_from(const Checkpoint& ckpt, const std::string& where) {
  ModelSpec spec;
  try {
    spec = model_spec_from_json(ckpt.meta.at("spec"));
  } catch (const std::exception& e) {
    throw IncompatibleCheckpoint(where + ": bad model spec: " + e.what());
  }
  SiameseModel m(spec);
  auto params = m.params();
  std::vector<const Tensor*> sources;
  for (const auto& p : params) {
    const Tensor* t = ckpt.find(p.name);
    if (!t) throw IncompatibleCheckpoint(where + ": missing array " + p.name);
    if (t->shape() != p.value->shape())
      throw IncompatibleCheckpoint(where + ": array " + p.name + " has shape " + shape_str(t->shape()) +
                                   ", expected " + shape_str(p.value->shape()));
    sources.push_back(t);
  }
  for (std::size_t i = 0; i < params.size(); ++i) *params[i].value = *sources[i];
  return m;
}

}  // namespace

SiameseModel load_model(const Checkpoint& ckpt) { return model_from(ckpt, "checkpoint"); }

void set_eval_view(Checkpoint& ckpt, const AugmentConfig& cfg) {
  ckpt.meta["eval_view"] = {
      {"clip_len", cfg.clip_len}, {"scale_short_edge", cfg.scale_short_edge}, {"crop_size", cfg.crop_size}};
}

AugmentConfig eval_view(const Checkpoint& ckpt) {
  AugmentConfig cfg;
  if (auto it = ckpt.meta.find("eval_view"); it != ckpt.meta.end()) {
    try {
      cfg.clip_len = it->value("clip_len", cfg.clip_len);
      cfg.scale_short_edge = it->value("scale_short_edge", cfg.scale_short_edge);
      cfg.crop_size = it->value("crop_size", cfg.crop_size);
    } catch (const json::exception& e) {
      throw IncompatibleCheckpoint(std::string("bad eval_view metadata: ") + e.what());
    }
  }
  return cfg;
}

void save_checkpoint(const fs::path& path, SiameseModel& model, const OptimizerState& opt, int epoch,
                     const RunSetup& setup, const std::vector<MetricsRecord>& metrics) {
  Checkpoint c = model_checkpoint(model, setup.train.seed);
  c.meta["kind"] = "training";
  set_eval_view(c, setup.augment);
  c.meta["epoch"] = epoch;
  c.meta["mechanism"] = to_string(setup.mechanism);
  c.meta["optimizer"] = {{"current_lr", opt.current_lr},
                         {"epochs_since_improvement", opt.epochs_since_improvement},
                         {"best_val_acc", opt.best_val_acc ? json(*opt.best_val_acc) : json(nullptr)}};
  // Data order and augmentation are derived from (seed, epoch), so the seeds
  // and the next epoch index are the whole random state.
  c.meta["rng"] = {{"train_seed", setup.train.seed}, {"augment_seed", setup.augment.seed}, {"next_epoch", epoch}};
  json ms = json::array();
  for (const auto& m : metrics) ms.push_back(to_json(m));
  c.meta["metrics"] = std::move(ms);
  for (const auto& [name, v] : opt.velocity) c.arrays.emplace_back("optimizer.velocity." + name, v);
  write_checkpoint(path, c);
}

TrainState load_checkpoint(const fs::path& path) {
  const Checkpoint c = read_checkpoint(path);
  const std::string where = "checkpoint " + path.string();
  if (c.meta.value("kind", "") != "training") throw IncompatibleCheckpoint(where + ": not a training checkpoint");
  SiameseModel model = model_from(c, where);
  TrainState st{std::move(model), {}, 0, {}};
  try {
    st.epoch = c.meta.at("epoch").get<int>();
    const json& o = c.meta.at("optimizer");
    st.optimizer.current_lr = o.at("current_lr").get<double>();
    st.optimizer.epochs_since_improvement = o.at("epochs_since_improvement").get<int>();
    if (!o.at("best_val_acc").is_null()) st.optimizer.best_val_acc = o.at("best_val_acc").get<double>();
    for (const auto& m : c.meta.at("metrics")) st.metrics.push_back(metrics_from_json(m));
  } catch (const json::exception& e) {
    throw IncompatibleCheckpoint(where + ": malformed metadata: " + e.what());
  }
  const std::string prefix = "optimizer.velocity.";
  for (const auto& p : st.model.params()) {
    if (!p.trainable()) continue;
    if (const Tensor* v = c.find(prefix + p.name)) {
      if (v->shape() != p.value->shape()) throw IncompatibleCheckpoint(where + ": velocity shape for " + p.name);
      st.optimizer.velocity.emplace(p.name, *v);
    }
  }
  if (!(st.optimizer.current_lr > 0.0)) throw IncompatibleCheckpoint(where + ": non-positive learning rate");
  return st;
}

}  // namespace skd
