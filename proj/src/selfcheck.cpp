// SPDX-License-Identifier: Apache-2.0
#include "skd/selfcheck.hpp"

#include <chrono>
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>

#include "skd/data.hpp"
#include "skd/losses.hpp"
#include "skd/random.hpp"
#include "skd/reference.hpp"
#include "skd/train.hpp"

namespace skd::selfcheck {
namespace {

using reference::Vec;

struct Failure {
  std::string what;
};

/// Tracks the worst error seen against a tolerance.
struct Worst {
  const char* label;
  double tol;
  double value = 0.0;

  void see(double err, const std::string& where) {
    if (!(err <= tol)) {
      char buf[160];
      std::snprintf(buf, sizeof buf, "%s: error %.3g > %.0e at %s", label, err, tol, where.c_str());
      throw Failure{buf};
    }
    value = std::max(value, err);
  }
  std::string str() const {
    char buf[96];
    std::snprintf(buf, sizeof buf, "%s %.2e", label, value);
    return buf;
  }
};

void require(bool ok, const std::string& what) {
  if (!ok) throw Failure{what};
}

template <class F>
SuiteResult run(const char* name, F&& body) {
  SuiteResult r;
  r.name = name;
  const auto t0 = std::chrono::steady_clock::now();
  try {
    r.detail = body();
    r.passed = true;
  } catch (const Failure& f) {
    r.detail = f.what;
  } catch (const std::exception& e) {
    r.detail = std::string("exception: ") + e.what();
  }
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return r;
}

Vec gaussian(Rng& rng, std::size_t n, double scale) {
  Vec v(n);
  for (double& x : v) x = scale * rng.normal();
  return v;
}

Vec random_one_hot(Rng& rng, std::size_t k) {
  Vec y(k, 0.0);
  y[rng.below(k)] = 1.0;
  return y;
}

reference::Sample random_sample(Rng& rng, std::size_t k, std::size_t d) {
  const double s = rng.uniform(0.5, 5.0);
  return {gaussian(rng, k, s), gaussian(rng, k, s), gaussian(rng, d, 1.0), gaussian(rng, d, 1.0),
          gaussian(rng, d, 1.0), gaussian(rng, d, 1.0), random_one_hot(rng, k)};
}

std::vector<reference::Sample> random_batch(Rng& rng) {
  const std::size_t n = 1 + rng.below(6), k = 2 + rng.below(11), d = 2 + rng.below(63);
  std::vector<reference::Sample> b;
  for (std::size_t i = 0; i < n; ++i) b.push_back(random_sample(rng, k, d));
  return b;
}

std::vector<LabeledBranches> to_branches(const std::vector<reference::Sample>& batch) {
  std::vector<LabeledBranches> out;
  for (const auto& s : batch) {
    LabeledBranches lb;
    lb.out.p1 = s.p1;
    lb.out.p2 = s.p2;
    lb.out.z1 = s.z1;
    lb.out.z2 = s.z2;
    lb.out.v1 = s.v1;
    lb.out.v2 = s.v2;
    lb.label = s.y;
    out.push_back(std::move(lb));
  }
  return out;
}

HyperParams random_hp(Rng& rng) { return {rng.uniform(0.5, 20.0), rng.uniform(0.0, 2.0), rng.uniform(0.0, 2.0)}; }

double max_abs_diff(const Vec& a, const Vec& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

std::string at(int i) { return "instance " + std::to_string(i); }

}  // namespace

SuiteResult loss_oracles(int instances, std::uint64_t seed) {
  return run("loss oracles", [&] {
    Rng rng(seed);
    Worst w{"max abs diff", 1e-6};
    for (int i = 0; i < instances; ++i) {
      const auto batch = random_batch(rng);
      const auto& s = batch.front();
      const double tau = rng.uniform(0.5, 20.0);
      w.see(max_abs_diff(losses::softened_softmax(s.p1, tau), reference::softmax(s.p1, tau)), at(i));
      const Vec q = reference::softmax(s.p1, 1.0);
      w.see(std::abs(losses::cross_entropy(q, s.y) - reference::cross_entropy(q, s.y)), at(i));
      w.see(std::abs(losses::cross_entropy_logits(s.p1, s.y) - reference::cross_entropy(q, s.y)), at(i));
      w.see(std::abs(losses::kd_kl_loss(s.p1, s.p2, tau) - reference::kd_kl(s.p1, s.p2, tau)), at(i));
      w.see(std::abs(losses::neg_cosine(s.v1, s.z2) - reference::neg_cosine(s.v1, s.z2)), at(i));
      w.see(std::abs(losses::sim_loss(s.z1, s.z2, s.v1, s.v2) - reference::sim(s.z1, s.z2, s.v1, s.v2)), at(i));
      const HyperParams hp = random_hp(rng);
      const auto lb = to_branches(batch);
      w.see(std::abs(losses::total_loss(lb, hp).total - reference::total(batch, hp.tau, hp.alpha, hp.beta)), at(i));
    }
    return w.str();
  });
}

SuiteResult gradients(int instances, std::uint64_t seed) {
  return run("gradients", [&] {
    Rng rng(seed);
    Worst w{"max relative error", 1e-4};
    for (int i = 0; i < instances; ++i) {
      const auto batch = random_batch(rng);
      const auto& s = batch.front();
      const double tau = rng.uniform(0.5, 20.0);

      Vec g(s.p1.size());
      losses::cross_entropy_logits(s.p1, s.y, g);
      auto ce = [&](const Vec& x) { return reference::cross_entropy(reference::softmax(x, 1.0), s.y); };
      w.see(reference::relative_error(g, reference::central_difference(ce, s.p1)), "cross_entropy " + at(i));

      Vec sum(s.p1.size());
      for (std::size_t k = 0; k < sum.size(); ++k) sum[k] = s.p1[k] + s.p2[k];
      const Vec target = reference::softmax(sum, tau);
      const auto kd = losses::kd_kl_loss_grad(s.p1, s.p2, tau);
      auto kl_student = [&](const Vec& x) { return reference::kl(target, reference::softmax(x, tau)); };
      w.see(reference::relative_error(kd.d_p1, reference::central_difference(kl_student, s.p1)), "kd_kl p1 " + at(i));
      w.see(reference::relative_error(kd.d_p2, reference::central_difference(kl_student, s.p2)), "kd_kl p2 " + at(i));

      const auto cos = losses::neg_cosine_grad(s.v1, s.z1);
      w.see(reference::relative_error(
                cos.d_v, reference::central_difference([&](const Vec& x) { return reference::neg_cosine(x, s.z1); }, s.v1)),
            "neg_cosine v " + at(i));
      w.see(reference::relative_error(
                cos.d_z, reference::central_difference([&](const Vec& x) { return reference::neg_cosine(s.v1, x); }, s.z1)),
            "neg_cosine z " + at(i));

      const auto sg = losses::sim_loss_grad(s.z1, s.z2, s.v1, s.v2);
      w.see(reference::relative_error(sg.d_v1, reference::central_difference(
                                                   [&](const Vec& x) { return reference::sim(s.z1, s.z2, x, s.v2); }, s.v1)),
            "sim v1 " + at(i));
      w.see(reference::relative_error(sg.d_v2, reference::central_difference(
                                                   [&](const Vec& x) { return reference::sim(s.z1, s.z2, s.v1, x); }, s.v2)),
            "sim v2 " + at(i));

      const HyperParams hp = random_hp(rng);
      std::vector<losses::BranchGrads> grads;
      losses::total_loss(to_branches(batch), hp, &grads);
      const double inv_n = 1.0 / static_cast<double>(batch.size());
      for (std::size_t b = 0; b < batch.size(); ++b) {
        const reference::Sample& x = batch[b];
        Vec fused(x.p1.size());
        for (std::size_t k = 0; k < fused.size(); ++k) fused[k] = x.p1[k] + x.p2[k];
        const Vec frozen = reference::softmax(fused, hp.tau);
        auto vary = [&](Vec reference::Sample::* field, const Vec& analytic, const char* label) {
          auto f = [&](const Vec& v) {
            reference::Sample probe = x;
            probe.*field = v;
            return inv_n * reference::frozen_sample_objective(probe, frozen, hp.tau, hp.alpha, hp.beta);
          };
          w.see(reference::relative_error(analytic, reference::central_difference(f, x.*field)),
                std::string("total_loss ") + label + " " + at(i));
        };
        vary(&reference::Sample::p1, grads[b].p1, "p1");
        vary(&reference::Sample::p2, grads[b].p2, "p2");
        if (hp.beta > 0.0) {
          vary(&reference::Sample::v1, grads[b].v1, "v1");
          vary(&reference::Sample::v2, grads[b].v2, "v2");
        }
      }
    }
    return w.str();
  });
}

SuiteResult stop_gradient(int instances, std::uint64_t seed) {
  return run("stop-gradient isolation", [&] {
    Rng rng(seed);
    for (int i = 0; i < instances; ++i) {
      const auto batch = random_batch(rng);
      const auto& s = batch.front();
      const auto g = losses::sim_loss_grad(s.z1, s.z2, s.v1, s.v2);
      for (const Vec* dz : {&g.d_z1, &g.d_z2})
        for (double x : *dz) require(x == 0.0, "nonzero sim_loss gradient w.r.t. z at " + at(i));
      double nv1 = 0.0, nv2 = 0.0;
      for (std::size_t k = 0; k < g.d_v1.size(); ++k) {
        nv1 += std::abs(g.d_v1[k]);
        nv2 += std::abs(g.d_v2[k]);
      }
      require(nv1 > 0.0 && nv2 > 0.0, "zero sim_loss gradient w.r.t. v at " + at(i));

      std::vector<losses::BranchGrads> tg;
      losses::total_loss(to_branches(batch), {10.0, 0.1, 1.0}, &tg);
      for (const auto& bg : tg)
        for (const Vec* dz : {&bg.z1, &bg.z2})
          for (double x : *dz) require(x == 0.0, "nonzero total_loss gradient w.r.t. z at " + at(i));
    }
    return std::to_string(instances) + " instances, all z-gradients exactly 0";
  });
}

SuiteResult reduction_identities(int instances, std::uint64_t seed) {
  return run("reduction identities", [&] {
    Rng rng(seed);
    Worst w{"max abs diff", 1e-9};
    for (int i = 0; i < instances; ++i) {
      const auto batch = random_batch(rng);
      const auto lb = to_branches(batch);
      const HyperParams hp = random_hp(rng);

      // Two-view CE, computed independently of total_loss.
      double ce = 0.0;
      for (const auto& s : batch)
        ce += reference::cross_entropy(reference::softmax(s.p1, 1.0), s.y) +
              reference::cross_entropy(reference::softmax(s.p2, 1.0), s.y);
      ce /= static_cast<double>(batch.size());
      const auto plain = losses::total_loss(lb, {hp.tau, 0.0, 0.0});
      w.see(std::abs(plain.total - ce), "skd_srl(0,0) vs two-view CE " + at(i));
      w.see(std::abs(losses::total_loss(lb, effective_hp(MechanismKind::baseline_augment, hp)).total - plain.total),
            "baseline_augment " + at(i));
      const auto self_kd = losses::total_loss(lb, effective_hp(MechanismKind::self_kd, hp));
      w.see(std::abs(self_kd.total - reference::total(batch, hp.tau, hp.alpha, 0.0)), "self_kd " + at(i));
      w.see(std::abs(self_kd.total - losses::total_loss(lb, {hp.tau, hp.alpha, 0.0}).total), "self_kd " + at(i));
    }

    // The same identities through the model on one real augmented batch.
    SyntheticConfig sc;
    sc.height = sc.width = 64;
    sc.frames = 12;
    sc.videos_per_class = 2;
    AugmentConfig ac;
    ac.clip_len = 8;
    ac.scale_short_edge = 64;
    ac.crop_size = 48;
    std::vector<LabeledVideo> videos;
    for (int c = 0; c < sc.num_classes; ++c)
      videos.push_back({"v" + std::to_string(c), render_synthetic_video(sc, c, 0), c});
    BatchIterator it(videos, sc.num_classes, videos.size(), ac, seed, 0, ViewMode::two_views);
    const Batch b = *it.next();
    ModelSpec spec = ModelSpec::defaults(EncoderArch::toy3d, sc.num_classes);
    spec.repr_dim = 32;
    spec.proj_dim = 32;
    spec.pred_hidden = 8;
    const HyperParams hp{10.0, 0.1, 1.0};
    auto loss = [&](MechanismKind kind, HyperParams h) {
      SiameseModel m = build_model(spec, 7);
      TrainConfig tc;
      tc.hp = h;
      return batch_loss(m, b, {spec, tc, ac, kind, nullptr});
    };
    w.see(std::abs(loss(MechanismKind::skd_srl, {hp.tau, 0.0, 0.0}).total -
                   loss(MechanismKind::baseline_augment, hp).total),
          "model batch skd_srl(0,0) vs baseline_augment");
    w.see(std::abs(loss(MechanismKind::self_kd, hp).total - loss(MechanismKind::skd_srl, {hp.tau, hp.alpha, 0.0}).total),
          "model batch self_kd vs skd_srl(beta=0)");
    return w.str();
  });
}

SuiteResult view_swap_symmetry(int instances, std::uint64_t seed) {
  return run("view-swap symmetry", [&] {
    Rng rng(seed);
    Worst w{"max abs diff", 1e-9};
    for (int i = 0; i < instances; ++i) {
      const auto lb = to_branches(random_batch(rng));
      std::vector<LabeledBranches> swapped = lb;
      for (auto& x : swapped) x.out = x.out.swapped();
      const HyperParams hp = random_hp(rng);
      const auto a = losses::total_loss(lb, hp), b = losses::total_loss(swapped, hp);
      w.see(std::abs(a.total - b.total), at(i));
      w.see(std::abs(a.kl - b.kl), at(i));
      w.see(std::abs(a.sim - b.sim), at(i));
    }
    return w.str();
  });
}

SuiteResult augmentation_contracts(int views, std::uint64_t seed) {
  return run("augmentation contracts", [&] {
    SyntheticConfig sc;
    std::vector<RawVideo> videos;
    for (auto [f, h, w] : {std::array{24, 160, 160}, std::array{20, 120, 170}, std::array{18, 150, 128},
                           std::array{10, 128, 140}}) {
      sc.frames = f;
      sc.height = h;
      sc.width = w;
      videos.push_back(render_synthetic_video(sc, static_cast<int>(videos.size()) % sc.num_classes, 0));
    }
    const AugmentConfig cfg;
    const int T = cfg.clip_len, S = cfg.crop_size;
    Worst err{"max crop-content error", 1e-5};
    Rng pick(seed);
    int checked = 0;
    for (int i = 0; checked < views; ++i) {
      const RawVideo& v = videos[static_cast<std::size_t>(i) % videos.size()];
      const std::uint64_t s = derive_seed(seed, {static_cast<std::uint64_t>(i)});
      const std::string where = "view pair " + std::to_string(i);
      Rng r1(s), r2(s), r3(s);
      const ViewPair a = two_views(v, {1.0}, cfg, r1);
      const ViewPair b = two_views(v, {1.0}, cfg, r2);
      require(a.x1.data == b.x1.data && a.x2.data == b.x2.data, "same seed gave different views at " + where);

      const auto [sh, sw] = scaled_size(v.height, v.width, cfg.scale_short_edge);
      for (const Clip* c : {&a.x1, &a.x2}) {
        require(c->frames == T && c->size == S && c->data.size() == static_cast<std::size_t>(T) * S * S * 3,
                "bad view shape at " + where);
        require(c->range == ValueRange::normalized, "view not normalized at " + where);
        const bool in_range = std::all_of(c->data.begin(), c->data.end(), [](float x) { return x >= -1.0f && x <= 1.0f; });
        require(in_range, "value out of range at " + where);
        require(c->frame_crops.size() == static_cast<std::size_t>(T) && c->source_frames.size() == c->frame_crops.size(),
                "missing crop bookkeeping at " + where);
        for (int t = 0; t < T; ++t) {
          const CropWindow cw = c->frame_crops[static_cast<std::size_t>(t)];
          require(cw == c->frame_crops[0], "crop offset changes within a clip at " + where);
          require(cw.y >= 0 && cw.x >= 0 && cw.y + S <= sh && cw.x + S <= sw, "crop outside frame at " + where);
          const int expect = v.frames >= T ? c->source_frames[0] + t : t % v.frames;
          require(c->source_frames[static_cast<std::size_t>(t)] == expect, "non-contiguous frames at " + where);
        }
        require(c->source_frames[0] >= 0 && c->source_frames[0] + std::min(T, v.frames) <= v.frames,
                "temporal window outside video at " + where);

        Clip flipped = *c;
        flip_horizontal(flipped);
        for (int q = 0; q < 16; ++q) {
          const int t = static_cast<int>(pick.below(T)), y = static_cast<int>(pick.below(S)),
                    x = static_cast<int>(pick.below(S)), ch = static_cast<int>(pick.below(3));
          require(flipped.at(t, y, S - 1 - x, ch) == c->at(t, y, x, ch), "flip does not mirror at " + where);
        }
        flip_horizontal(flipped);
        require(flipped.data == c->data, "flip is not an involution at " + where);
        ++checked;
      }

      // Replaying the stream without photometric ops gives the bare crop of
      // the first view: same offsets, and content equal to a bilinear
      // resample at the recorded window.
      const std::vector<int> frames = trim_clip(v, T, r3);
      Clip bare = scale_and_crop(v, frames, cfg, r3);
      normalize(bare);
      require(bare.frame_crops == a.x1.frame_crops && bare.source_frames == a.x1.source_frames,
              "crop offsets do not match the replayed stream at " + where);
      const Clip* p = &bare;
      const CropWindow cw = p->frame_crops[0];
      for (int q = 0; q < 32; ++q) {
        const int t = static_cast<int>(pick.below(T)), y = static_cast<int>(pick.below(S)),
                  x = static_cast<int>(pick.below(S)), ch = static_cast<int>(pick.below(3));
        const double want =
            2.0 * reference::bilinear_sample(v, p->source_frames[t], ch, sh, sw, cw.y + y, cw.x + x) - 1.0;
        err.see(std::abs(p->at(t, y, x, ch) - want), where);
      }
    }
    return std::to_string(checked) + " views, " + err.str();
  });
}

SuiteResult plateau_schedule() {
  return run("plateau schedule", [] {
    TrainConfig cfg;
    auto simulate = [&](const std::vector<double>& accs) {
      OptimizerState s = init_optimizer(cfg);
      std::vector<double> lrs;
      for (double a : accs) {
        plateau_update(s, a, cfg);
        lrs.push_back(s.current_lr);
      }
      return lrs;
    };
    auto same = [](double a, double b) { return std::abs(a - b) <= 1e-12 * std::max(std::abs(a), std::abs(b)); };
    auto expect = [&](const char* name, const std::vector<double>& accs, const std::vector<double>& lrs) {
      const auto got = simulate(accs);
      for (std::size_t e = 0; e < lrs.size(); ++e)
        require(same(got[e], lrs[e]), std::string(name) + ": lr after epoch " + std::to_string(e + 1) + " is " +
                                          std::to_string(got[e]) + ", expected " + std::to_string(lrs[e]));
    };

    std::vector<double> rising, lr_rising;
    for (int e = 0; e < 40; ++e) {
      rising.push_back(0.1 + 0.02 * e);
      lr_rising.push_back(0.01);
    }
    expect("strictly improving", rising, lr_rising);

    // First epoch sets the best; the k-th epoch after it is the k-th miss.
    auto flat = [](int misses) { return std::vector<double>(static_cast<std::size_t>(misses) + 1, 0.5); };
    std::vector<double> lr11(11, 0.01);
    lr11[10] = 0.001;
    expect("ten misses", flat(10), lr11);
    std::vector<double> lr26(26, 0.01);
    for (int e = 10; e < 20; ++e) lr26[static_cast<std::size_t>(e)] = 0.001;
    for (int e = 20; e < 26; ++e) lr26[static_cast<std::size_t>(e)] = 1e-4;
    expect("twenty-five misses", flat(25), lr26);

    // Gains within the 1e-6 tolerance are misses; a real gain resets the count.
    std::vector<double> acc = {0.5};
    for (int e = 1; e <= 9; ++e) acc.push_back(0.5 + 5e-7);
    acc.push_back(0.6);
    for (int e = 0; e < 10; ++e) acc.push_back(0.6);
    std::vector<double> want(acc.size(), 0.01);
    want.back() = 0.001;
    expect("tolerance and reset", acc, want);

    // Repeated drops stop at the floor.
    auto many = simulate(flat(100));
    require(same(many.back(), 1e-6), "lr does not stop at the 1e-6 floor");
    for (std::size_t e = 1; e < many.size(); ++e) require(many[e] <= many[e - 1], "lr increased");
    return std::string("drop after 10 misses, double drop after 20, floor 1e-6");
  });
}

SuiteResult sgd_recurrence() {
  return run("sgd recurrence", [] {
    Worst w{"max abs diff", 1e-12};
    auto step = [](double& wv, double g, double& v, double lr, double m, double wd) {
      sgd_update(&wv, &g, &v, 1, lr, m, wd);
    };
    double wv = 1.0, v = 0.0;
    step(wv, 0.1, v, 0.01, 0.0, 0.0);
    w.see(std::abs(wv - 0.999), "plain step");
    wv = 1.0, v = 0.0;
    step(wv, 0.1, v, 0.01, 0.0, 5e-4);
    w.see(std::abs(wv - 0.998995), "weight decay step");
    wv = 1.0, v = 0.0;
    step(wv, 0.1, v, 0.01, 0.9, 0.0);
    step(wv, 0.1, v, 0.01, 0.9, 0.0);
    w.see(std::abs(wv - 0.9971), "two momentum steps");

    // Unrolled recurrence with decay over many steps.
    Rng rng(9);
    double ws = 0.7, vs = 0.0, wo = 0.7, vo = 0.0;
    for (int i = 0; i < 50; ++i) {
      const double g = rng.normal();
      step(ws, g, vs, 0.01, 0.9, 5e-4);
      vo = 0.9 * vo + (g + 5e-4 * wo);
      wo -= 0.01 * vo;
      w.see(std::abs(ws - wo), "step " + std::to_string(i));
    }
    return w.str();
  });
}

std::vector<SuiteResult> run_all() {
  return {loss_oracles(),       gradients(),      stop_gradient(),   reduction_identities(),
          view_swap_symmetry(), augmentation_contracts(), plateau_schedule(), sgd_recurrence()};
}

bool report(const std::vector<SuiteResult>& results, std::ostream& os) {
  bool ok = true;
  for (const auto& r : results) {
    char head[96];
    std::snprintf(head, sizeof head, "%s  %-26s %7.2fs  ", r.passed ? "PASS" : "FAIL", r.name.c_str(), r.seconds);
    os << head << r.detail << '\n';
    ok = ok && r.passed;
  }
  return ok;
}

}  // namespace skd::selfcheck
