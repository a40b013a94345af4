// SPDX-License-Identifier: Apache-2.0
#include "skd/config.hpp"

#include <fstream>
#include <set>

#include "skd/errors.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace skd {
namespace {

/// Reads the keys of one JSON object and rejects any it was not asked for.
class Section {
 public:
  Section(const json* j, std::string path) : j_(j), path_(std::move(path)) {
    if (j_ && !j_->is_object()) throw ConfigError(path_, "expected an object");
  }

  std::string key(const std::string& k) const { return path_.empty() ? k : path_ + "." + k; }

  const json* find(const std::string& k) {
    known_.insert(k);
    if (!j_) return nullptr;
    auto it = j_->find(k);
    return it == j_->end() ? nullptr : &*it;
  }

  Section sub(const std::string& k) { return Section(find(k), key(k)); }

  void get(const std::string& k, double& out) {
    if (const json* v = find(k)) {
      if (!v->is_number()) throw ConfigError(key(k), "expected a number");
      out = v->get<double>();
    }
  }
  void get(const std::string& k, int& out) {
    if (const json* v = find(k)) {
      if (!v->is_number_integer()) throw ConfigError(key(k), "expected an integer");
      const auto x = v->get<std::int64_t>();
      if (x < INT32_MIN || x > INT32_MAX) throw ConfigError(key(k), "out of range");
      out = static_cast<int>(x);
    }
  }
  void get(const std::string& k, std::uint64_t& out) {
    if (const json* v = find(k)) {
      if (!v->is_number_unsigned()) throw ConfigError(key(k), "expected a non-negative integer");
      out = v->get<std::uint64_t>();
    }
  }
  void get(const std::string& k, bool& out) {
    if (const json* v = find(k)) {
      if (!v->is_boolean()) throw ConfigError(key(k), "expected true or false");
      out = v->get<bool>();
    }
  }
  void get(const std::string& k, std::string& out) {
    if (const json* v = find(k)) {
      if (!v->is_string()) throw ConfigError(key(k), "expected a string");
      out = v->get<std::string>();
    }
  }

  void finish() const {
    if (!j_) return;
    for (const auto& [k, v] : j_->items())
      if (!known_.count(k)) throw ConfigError(key(k), "unknown key");
  }

 private:
  const json* j_;
  std::string path_;
  std::set<std::string> known_;
};

ModelSpec read_model(Section s, int num_classes, const ModelSpec& fallback) {
  std::string arch = to_string(fallback.arch);
  s.get("arch", arch);
  int k = num_classes;
  s.get("num_classes", k);
  ModelSpec m = fallback;
  try {
    if (arch != to_string(fallback.arch)) m = ModelSpec::defaults(parse_encoder_arch(arch), k);
  } catch (const InvalidInput& e) {
    throw ConfigError(s.key("arch"), e.what());
  }
  m.num_classes = k;
  s.get("repr_dim", m.repr_dim);
  s.get("proj_dim", m.proj_dim);
  s.get("pred_hidden", m.pred_hidden);
  s.finish();
  return m;
}

void rekey(const ModelSpec& m, const std::string& prefix) {
  try {
    m.validate();
  } catch (const ConfigError& e) {
    const std::string field = e.key_path.substr(e.key_path.find('.') + 1);
    const std::string msg = e.what();
    throw ConfigError(prefix + "." + field, msg.substr(msg.find(": ") + 2));
  }
}

}  // namespace

MechanismSpec RunConfig::mechanism_spec() const {
  MechanismSpec m{mechanism, std::nullopt};
  if (mechanism == MechanismKind::kd) m.teacher_spec = teacher;
  return m;
}

void RunConfig::validate() const {
  augment.validate();
  synthetic.validate(augment.clip_len);
  rekey(model, "model");
  rekey(teacher, "mechanism.teacher");
  if (model.num_classes != synthetic.num_classes)
    throw ConfigError("model.num_classes", "must equal synthetic.num_classes");
  if (teacher.num_classes != model.num_classes)
    throw ConfigError("mechanism.teacher.num_classes", "must equal model.num_classes");
  train.validate();
}

RunConfig parse_run_config(const json& j) {
  RunConfig c;
  Section root(&j, "");

  Section syn = root.sub("synthetic");
  syn.get("num_classes", c.synthetic.num_classes);
  syn.get("videos_per_class", c.synthetic.videos_per_class);
  syn.get("frames", c.synthetic.frames);
  syn.get("height", c.synthetic.height);
  syn.get("width", c.synthetic.width);
  syn.get("noise_std", c.synthetic.noise_std);
  syn.get("distractors", c.synthetic.distractors);
  syn.get("seed", c.synthetic.seed);
  syn.finish();

  Section aug = root.sub("augment");
  aug.get("clip_len", c.augment.clip_len);
  aug.get("scale_short_edge", c.augment.scale_short_edge);
  aug.get("crop_size", c.augment.crop_size);
  aug.get("op_probability", c.augment.op_probability);
  aug.get("brightness_max", c.augment.brightness_max);
  aug.get("contrast_min", c.augment.contrast_min);
  aug.get("contrast_max", c.augment.contrast_max);
  aug.get("hue_max", c.augment.hue_max);
  aug.get("blur_sigma_min", c.augment.blur_sigma_min);
  aug.get("blur_sigma_max", c.augment.blur_sigma_max);
  aug.get("seed", c.augment.seed);
  aug.finish();

  const int k = c.synthetic.num_classes;
  c.model = read_model(root.sub("model"), k, ModelSpec::defaults(EncoderArch::toy3d, k));

  Section tr = root.sub("train");
  tr.get("lr", c.train.lr);
  tr.get("momentum", c.train.momentum);
  tr.get("weight_decay", c.train.weight_decay);
  tr.get("batch_size", c.train.batch_size);
  tr.get("max_epochs", c.train.max_epochs);
  tr.get("plateau_patience", c.train.plateau_patience);
  tr.get("plateau_factor", c.train.plateau_factor);
  tr.get("min_lr", c.train.min_lr);
  tr.get("seed", c.train.seed);
  tr.get("workers", c.train.workers);
  tr.get("keep_checkpoints", c.train.keep_checkpoints);
  Section hp = tr.sub("hp");
  hp.get("tau", c.train.hp.tau);
  hp.get("alpha", c.train.hp.alpha);
  hp.get("beta", c.train.hp.beta);
  hp.finish();
  tr.finish();

  Section mech = root.sub("mechanism");
  std::string kind = to_string(c.mechanism);
  mech.get("kind", kind);
  try {
    c.mechanism = parse_mechanism(kind);
  } catch (const InvalidInput& e) {
    throw ConfigError("mechanism.kind", e.what());
  }
  c.teacher = read_model(mech.sub("teacher"), c.model.num_classes, default_teacher_spec(c.model.num_classes));
  mech.finish();

  root.finish();
  c.validate();
  return c;
}

RunConfig load_run_config(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw NotFound("cannot open config " + path.string());
  json j;
  try {
    j = json::parse(is);
  } catch (const json::parse_error& e) {
    throw ConfigError("<root>", std::string("invalid JSON: ") + e.what());
  }
  return parse_run_config(j);
}

json to_json(const RunConfig& c) {
  const auto& s = c.synthetic;
  const auto& a = c.augment;
  const auto& t = c.train;
  return json{
      {"synthetic",
       {{"num_classes", s.num_classes},
        {"videos_per_class", s.videos_per_class},
        {"frames", s.frames},
        {"height", s.height},
        {"width", s.width},
        {"noise_std", s.noise_std},
        {"distractors", s.distractors},
        {"seed", s.seed}}},
      {"augment",
       {{"clip_len", a.clip_len},
        {"scale_short_edge", a.scale_short_edge},
        {"crop_size", a.crop_size},
        {"op_probability", a.op_probability},
        {"brightness_max", a.brightness_max},
        {"contrast_min", a.contrast_min},
        {"contrast_max", a.contrast_max},
        {"hue_max", a.hue_max},
        {"blur_sigma_min", a.blur_sigma_min},
        {"blur_sigma_max", a.blur_sigma_max},
        {"seed", a.seed}}},
      {"model", to_json(c.model)},
      {"train",
       {{"lr", t.lr},
        {"momentum", t.momentum},
        {"weight_decay", t.weight_decay},
        {"batch_size", t.batch_size},
        {"max_epochs", t.max_epochs},
        {"plateau_patience", t.plateau_patience},
        {"plateau_factor", t.plateau_factor},
        {"min_lr", t.min_lr},
        {"seed", t.seed},
        {"workers", t.workers},
        {"keep_checkpoints", t.keep_checkpoints},
        {"hp", {{"tau", t.hp.tau}, {"alpha", t.hp.alpha}, {"beta", t.hp.beta}}}}},
      {"mechanism", {{"kind", to_string(c.mechanism)}, {"teacher", to_json(c.teacher)}}}};
}

void write_resolved_config(const RunConfig& c, const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw Error("cannot write " + path.string());
  os << to_json(c).dump(2) << '\n';
}

}  // namespace skd
