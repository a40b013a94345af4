#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "skd/errors.hpp"
#include "skd/evalbench.hpp"
#include "skd/selfcheck.hpp"
#include "skd/train.hpp"

using namespace skd;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("skd_train_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

// A small clip geometry keeps whole training runs to a few seconds.
RunSetup tiny_setup(MechanismKind kind = MechanismKind::skd_srl) {
  RunSetup s;
  s.model = ModelSpec::defaults(EncoderArch::toy3d, 4);
  s.augment.clip_len = 8;
  s.augment.scale_short_edge = 40;
  s.augment.crop_size = 32;
  s.train.batch_size = 4;
  s.train.max_epochs = 3;
  s.train.seed = 5;
  s.train.record_time = false;
  s.mechanism = kind;
  return s;
}

const DatasetSplit& tiny_split() {
  static const DatasetSplit split = [] {
    SyntheticConfig cfg;
    cfg.videos_per_class = 5;
    cfg.frames = 10;
    cfg.height = 64;
    cfg.width = 64;
    cfg.seed = 2;
    return generate_synthetic(cfg);
  }();
  return split;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

bool same_parameters(SiameseModel& a, SiameseModel& b) {
  auto pa = a.params(), pb = b.params();
  if (pa.size() != pb.size()) return false;
  for (std::size_t i = 0; i < pa.size(); ++i)
    if (pa[i].name != pb[i].name || !(*pa[i].value == *pb[i].value)) return false;
  return true;
}

struct ScalarParam {
  Tensor w, g;
  ScalarParam(float w0, float g0) : w({1}, w0), g({1}, g0) {}
  nn::ParamList list(bool decay = true) { return {nn::ParamRef{"p", &w, &g, decay}}; }
};

}  // namespace

TEST_CASE("sgd worked examples") {
  double w = 1.0, g = 0.1, v = 0.0;
  sgd_update(&w, &g, &v, 1, 0.01, 0.0, 0.0);
  CHECK(w == doctest::Approx(0.999).epsilon(1e-14));

  w = 1.0, v = 0.0;
  sgd_update(&w, &g, &v, 1, 0.01, 0.0, 5e-4);
  CHECK(std::abs(w - 0.998995) < 1e-12);

  w = 1.0, v = 0.0;
  sgd_update(&w, &g, &v, 1, 0.01, 0.9, 0.0);
  sgd_update(&w, &g, &v, 1, 0.01, 0.9, 0.0);
  CHECK(std::abs(w - 0.9971) < 1e-12);

  TrainConfig cfg;
  cfg.momentum = 0.0;
  cfg.weight_decay = 0.0;
  ScalarParam p(1.0f, 0.1f);
  auto params = p.list();
  OptimizerState st = init_optimizer(cfg);
  sgd_step(params, st, cfg);
  CHECK(p.w[0] == doctest::Approx(0.999).epsilon(1e-7));
}

TEST_CASE("sgd recurrence suite") {
  const auto r = selfcheck::sgd_recurrence();
  INFO(r.detail);
  CHECK(r.passed);
}

TEST_CASE("weight decay skips batch-norm parameters") {
  SiameseModel m = build_model(ModelSpec::defaults(EncoderArch::toy3d, 4), 1);
  auto params = m.params();
  int bn = 0;
  for (const auto& p : params) {
    const bool is_bn = p.name.find(".bn") != std::string::npos;
    if (!p.trainable()) continue;
    INFO(p.name);
    CHECK(p.decay == !is_bn);
    bn += is_bn;
  }
  CHECK(bn == 10);  // gamma and beta of five batch-norm layers

  // With zero gradients only decayed parameters move.
  std::map<std::string, Tensor> before;
  for (const auto& p : params) before[p.name] = *p.value;
  m.zero_grad();
  TrainConfig cfg;
  auto st = init_optimizer(cfg);
  sgd_step(params, st, cfg);
  for (const auto& p : params) {
    if (!p.trainable()) continue;
    const bool moved = !(*p.value == before[p.name]);
    const bool nonzero = std::any_of(before[p.name].span().begin(), before[p.name].span().end(),
                                     [](float x) { return x != 0.0f; });
    INFO(p.name);
    if (!p.decay) CHECK(!moved);
    if (p.decay && nonzero) CHECK(moved);
  }
}

TEST_CASE("non-finite gradient aborts before any update") {
  TrainConfig cfg;
  ScalarParam a(1.0f, 0.1f), b(2.0f, NAN);
  nn::ParamList params{{"a", &a.w, &a.g, true}, {"b", &b.w, &b.g, true}};
  auto st = init_optimizer(cfg);
  CHECK_THROWS_AS(sgd_step(params, st, cfg), TrainingDivergence);
  CHECK(a.w[0] == 1.0f);
  CHECK(b.w[0] == 2.0f);
  CHECK(st.velocity.empty());
}

TEST_CASE("plateau schedule") {
  TrainConfig cfg;
  SUBCASE("improving stream keeps the rate") {
    auto st = init_optimizer(cfg);
    for (int i = 0; i < 30; ++i) CHECK(!plateau_update(st, 0.01 * i, cfg));
    CHECK(st.current_lr == 0.01);
  }
  SUBCASE("ten flat epochs drop the rate once") {
    auto st = init_optimizer(cfg);
    plateau_update(st, 0.5, cfg);
    for (int i = 0; i < 9; ++i) CHECK(!plateau_update(st, 0.5, cfg));
    CHECK(plateau_update(st, 0.5, cfg));
    CHECK(st.current_lr == doctest::Approx(0.001));
  }
  SUBCASE("twenty-five flat epochs drop twice") {
    auto st = init_optimizer(cfg);
    plateau_update(st, 0.5, cfg);
    int drops = 0;
    for (int i = 0; i < 25; ++i) drops += plateau_update(st, 0.5 + 1e-7, cfg);
    CHECK(drops == 2);
    CHECK(st.current_lr == doctest::Approx(1e-4));
    CHECK(st.epochs_since_improvement == 5);
  }
  SUBCASE("rate is floored") {
    cfg.plateau_patience = 1;
    auto st = init_optimizer(cfg);
    plateau_update(st, 0.5, cfg);
    for (int i = 0; i < 10; ++i) plateau_update(st, 0.1, cfg);
    CHECK(st.current_lr == doctest::Approx(1e-6));
  }
  const auto r = selfcheck::plateau_schedule();
  INFO(r.detail);
  CHECK(r.passed);
}

TEST_CASE("train config validation names the key") {
  TrainConfig cfg;
  auto expect_key = [&](const std::string& key) {
    try {
      cfg.validate();
      FAIL("expected ConfigError for " << key);
    } catch (const ConfigError& e) {
      CHECK(e.key_path == key);
    }
    cfg = TrainConfig{};
  };
  cfg.lr = 0.0;
  expect_key("train.lr");
  cfg.momentum = 1.0;
  expect_key("train.momentum");
  cfg.batch_size = 0;
  expect_key("train.batch_size");
  cfg.hp.tau = 0.0;
  expect_key("train.hp.tau");
  cfg.hp.beta = -1.0;
  expect_key("train.hp.beta");
}

TEST_CASE("metrics records serialize with the fixed field names") {
  MetricsRecord m{3, 1.5, 1.25, 0.125, -0.5, 0.75, 0.01, 2.0};
  const auto j = to_json(m);
  for (const char* k : {"epoch", "loss_total", "loss_ce", "loss_kl", "loss_sim", "val_top1", "lr", "seconds"})
    CHECK(j.contains(k));
  CHECK(j.size() == 8);
  CHECK(metrics_from_json(nlohmann::json::parse(metrics_line(m))) == m);
}

TEST_CASE("mechanism reduction identities on a real batch") {
  const auto& split = tiny_split();
  RunSetup s = tiny_setup();
  SiameseModel model = build_model(s.model, 3);
  BatchIterator it(split.train, 4, 4, s.augment, 1, 0, ViewMode::two_views);
  const Batch batch = *it.next();

  RunSetup zero = s;
  zero.train.hp = {10.0, 0.0, 0.0};
  RunSetup aug = s;
  aug.mechanism = MechanismKind::baseline_augment;
  CHECK(batch_loss(model, batch, zero).total == batch_loss(model, batch, aug).total);

  RunSetup nobeta = s;
  nobeta.train.hp.beta = 0.0;
  RunSetup self = s;
  self.mechanism = MechanismKind::self_kd;
  CHECK(batch_loss(model, batch, nobeta).total == batch_loss(model, batch, self).total);

  const auto r = selfcheck::reduction_identities();
  INFO(r.detail);
  CHECK(r.passed);
}

TEST_CASE("teacher distillation with identical logits has zero KL") {
  std::vector<LabeledBranches> student(3);
  std::vector<losses::Vec> t1, t2;
  Rng rng(4);
  for (auto& s : student) {
    for (auto* p : {&s.out.p1, &s.out.p2}) {
      p->resize(5);
      for (double& x : *p) x = 3.0 * rng.normal();
    }
    s.label = one_hot(static_cast<int>(rng.below(5)), 5);
    t1.push_back(s.out.p1);
    t2.push_back(s.out.p2);
  }
  std::vector<losses::BranchGrads> g;
  const auto t = losses::teacher_kd_loss(student, t1, t2, {10.0, 0.1, 0.0}, &g);
  CHECK(t.kl == doctest::Approx(0.0).epsilon(1e-15));
}

TEST_CASE("max_epochs = 0 returns the initialized model and no metrics") {
  const fs::path dir = fresh_dir("zero");
  RunSetup s = tiny_setup();
  s.train.max_epochs = 0;
  s.train.metrics_path = dir / "metrics.jsonl";
  auto r = train(s, tiny_split());
  CHECK(r.metrics.empty());
  CHECK(fs::exists(s.train.metrics_path));
  CHECK(fs::file_size(s.train.metrics_path) == 0);
  SiameseModel fresh = build_model(s.model, derive_seed(s.train.seed, {0x30de1}));
  CHECK(same_parameters(r.model, fresh));
  fs::remove_all(dir);
}

TEST_CASE("training is deterministic and resumable") {
  const fs::path dir = fresh_dir("resume");
  RunSetup s = tiny_setup();
  s.train.max_epochs = 4;
  s.train.checkpoint_dir = dir / "a";
  s.train.metrics_path = dir / "a.jsonl";
  s.train.keep_checkpoints = true;
  fs::create_directories(s.train.checkpoint_dir);
  auto straight = train(s, tiny_split());
  REQUIRE(straight.metrics.size() == 4);
  for (std::size_t i = 1; i < straight.metrics.size(); ++i)
    CHECK(straight.metrics[i].lr <= straight.metrics[i - 1].lr);
  for (const auto& m : straight.metrics) {
    CHECK(std::isfinite(m.loss_total));
    CHECK(m.seconds == 0.0);
  }

  RunSetup again = s;
  again.train.checkpoint_dir.clear();
  again.train.metrics_path = dir / "b.jsonl";
  auto second = train(again, tiny_split());
  CHECK(slurp(dir / "a.jsonl") == slurp(dir / "b.jsonl"));
  CHECK(same_parameters(straight.model, second.model));

  SUBCASE("save and load are bit-exact") {
    TrainState st = load_checkpoint(s.train.checkpoint_dir / "last.ckpt");
    CHECK(st.epoch == 4);
    CHECK(st.metrics == straight.metrics);
    CHECK(same_parameters(st.model, straight.model));
  }

  SUBCASE("resume from epoch 2 matches the uninterrupted run") {
    RunSetup r = s;
    r.train.checkpoint_dir = dir / "c";
    r.train.metrics_path = dir / "c.jsonl";
    fs::create_directories(r.train.checkpoint_dir);
    auto resumed = train(r, tiny_split(), load_checkpoint(s.train.checkpoint_dir / "epoch_0002.ckpt"));
    CHECK(resumed.metrics == straight.metrics);
    CHECK(slurp(dir / "c.jsonl") == slurp(dir / "a.jsonl"));
    CHECK(same_parameters(resumed.model, straight.model));
  }

  SUBCASE("damaged checkpoints are rejected") {
    const fs::path good = s.train.checkpoint_dir / "last.ckpt";
    const std::string bytes = slurp(good);
    auto write = [&](const std::string& name, const std::string& data) {
      std::ofstream(dir / name, std::ios::binary) << data;
      return dir / name;
    };
    CHECK_THROWS_AS(load_checkpoint(write("trunc.ckpt", bytes.substr(0, bytes.size() - 7))), IncompatibleCheckpoint);
    CHECK_THROWS_AS(load_checkpoint(write("head.ckpt", bytes.substr(0, 12))), IncompatibleCheckpoint);
    CHECK_THROWS_AS(load_checkpoint(write("tail.ckpt", bytes + "x")), IncompatibleCheckpoint);
    std::string magic = bytes;
    magic[0] = 'X';
    CHECK_THROWS_AS(load_checkpoint(write("magic.ckpt", magic)), IncompatibleCheckpoint);
    std::string version = bytes;
    version[8] = 2;
    CHECK_THROWS_AS(load_checkpoint(write("version.ckpt", version)), IncompatibleCheckpoint);
    CHECK_THROWS_AS(load_checkpoint(dir / "missing.ckpt"), NotFound);
    CHECK(slurp(good) == bytes);
  }
  fs::remove_all(dir);
}

TEST_CASE("every mechanism trains on the shared loop") {
  const auto& split = tiny_split();
  RunSetup base = tiny_setup();
  base.train.max_epochs = 1;
  SiameseModel teacher = build_model(default_teacher_spec(4), 9);
  for (auto kind : kMechanismOrder) {
    RunSetup s = base;
    s.mechanism = kind;
    if (kind == MechanismKind::kd) s.teacher = &teacher;
    const auto r = train(s, split);
    REQUIRE(r.metrics.size() == 1);
    const auto& m = r.metrics[0];
    INFO(to_string(kind));
    CHECK(std::isfinite(m.loss_total));
    CHECK((m.val_top1 >= 0.0 && m.val_top1 <= 1.0));
    const bool has_kl = kind == MechanismKind::kd || kind == MechanismKind::self_kd || kind == MechanismKind::skd_srl;
    CHECK((m.loss_kl != 0.0) == has_kl);
    CHECK((m.loss_sim != 0.0) == (kind == MechanismKind::skd_srl));
  }
  RunSetup kd = base;
  kd.mechanism = MechanismKind::kd;
  CHECK_THROWS_AS(train(kd, split), InvalidInput);
}

TEST_CASE("training lowers the loss on a small set") {
  RunSetup s = tiny_setup(MechanismKind::baseline_augment);
  s.train.max_epochs = 12;
  s.train.lr = 0.05;
  const auto r = train(s, tiny_split());
  CHECK(r.metrics.back().loss_total < r.metrics.front().loss_total);
}
