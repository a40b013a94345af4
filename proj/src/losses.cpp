// SPDX-License-Identifier: Apache-2.0
#include "skd/losses.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "skd/errors.hpp"

namespace skd {

void HyperParams::validate() const {
  if (!(tau > 0.0) || !std::isfinite(tau)) throw DomainError("tau must be positive, got " + std::to_string(tau));
  if (!(alpha >= 0.0) || !std::isfinite(alpha)) throw DomainError("alpha must be non-negative");
  if (!(beta >= 0.0) || !std::isfinite(beta)) throw DomainError("beta must be non-negative");
}

BranchOutputs BranchOutputs::swapped() const { return {r2, r1, p2, p1, z2, z1, v2, v1}; }

}  // namespace skd

namespace skd::losses {
namespace {

void require_finite(CSpan v, const char* what) {
  for (double x : v)
    if (!std::isfinite(x)) throw InvalidInput(std::string(what) + " contains a non-finite value");
}

void require_same_size(CSpan a, CSpan b, const char* what) {
  if (a.size() != b.size())
    throw ShapeError(std::string(what) + ": length " + std::to_string(a.size()) + " vs " + std::to_string(b.size()));
  if (a.empty()) throw ShapeError(std::string(what) + ": empty vector");
}

void require_tau(double tau) {
  if (!(tau > 0.0) || !std::isfinite(tau)) throw DomainError("temperature must be positive");
}

// log softmax(logits / tau)
Vec log_softmax(CSpan logits, double tau) {
  const double m = *std::max_element(logits.begin(), logits.end()) / tau;
  double s = 0.0;
  for (double x : logits) s += std::exp(x / tau - m);
  const double lse = m + std::log(s);
  Vec out(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) out[i] = logits[i] / tau - lse;
  return out;
}

const double kLogFloorLn = std::log(kLogFloor);

// -sum_k t_k max(ln s_k, ln floor) and its logit gradient. Entries whose
// log is clamped contribute no gradient.
double clamped_cross_term(CSpan target, const Vec& log_s, double tau, std::span<double> grad) {
  double value = 0.0;
  double unclamped_mass = 0.0;
  for (std::size_t k = 0; k < target.size(); ++k) {
    if (log_s[k] > kLogFloorLn) {
      value -= target[k] * log_s[k];
      unclamped_mass += target[k];
    } else {
      value -= target[k] * kLogFloorLn;
    }
  }
  if (!grad.empty()) {
    for (std::size_t j = 0; j < target.size(); ++j) {
      const double own = log_s[j] > kLogFloorLn ? target[j] : 0.0;
      grad[j] = (std::exp(log_s[j]) * unclamped_mass - own) / tau;
    }
  }
  return value;
}

double entropy_term(CSpan target) {
  double v = 0.0;
  for (double t : target)
    if (t > 0.0) v += t * std::log(std::max(t, kLogFloor));
  return v;
}

}  // namespace

Vec softened_softmax(CSpan logits, double tau) {
  require_tau(tau);
  if (logits.empty()) throw ShapeError("softened_softmax: empty logits");
  require_finite(logits, "logits");
  Vec out = log_softmax(logits, tau);
  double s = 0.0;
  for (double& v : out) s += (v = std::exp(v));
  for (double& v : out) v /= s;
  return out;
}

double cross_entropy(CSpan probs, CSpan one_hot) {
  require_same_size(probs, one_hot, "cross_entropy");
  double v = 0.0;
  for (std::size_t k = 0; k < probs.size(); ++k)
    if (one_hot[k] != 0.0) v -= one_hot[k] * std::log(std::max(probs[k], kLogFloor));
  return v;
}

double cross_entropy_logits(CSpan logits, CSpan one_hot, std::span<double> d_logits) {
  require_same_size(logits, one_hot, "cross_entropy");
  require_finite(logits, "logits");
  if (!d_logits.empty() && d_logits.size() != logits.size()) throw ShapeError("cross_entropy: gradient buffer size");
  return clamped_cross_term(one_hot, log_softmax(logits, 1.0), 1.0, d_logits);
}

double kl_to_target(CSpan target, CSpan logits, double tau, std::span<double> d_logits) {
  require_tau(tau);
  require_same_size(target, logits, "kl_to_target");
  require_finite(logits, "logits");
  if (!d_logits.empty() && d_logits.size() != logits.size()) throw ShapeError("kl_to_target: gradient buffer size");
  return entropy_term(target) + clamped_cross_term(target, log_softmax(logits, tau), tau, d_logits);
}

KdKlResult kd_kl_loss_grad(CSpan p1, CSpan p2, double tau) {
  require_tau(tau);
  require_same_size(p1, p2, "kd_kl_loss");
  require_finite(p1, "p1");
  require_finite(p2, "p2");
  Vec fused(p1.size());
  for (std::size_t k = 0; k < p1.size(); ++k) fused[k] = p1[k] + p2[k];
  const Vec target = softened_softmax(fused, tau);
  KdKlResult r;
  r.d_p1.resize(p1.size());
  r.d_p2.resize(p2.size());
  r.value = kl_to_target(target, p1, tau, r.d_p1) + kl_to_target(target, p2, tau, r.d_p2);
  // KL is non-negative; rounding can produce a tiny negative value.
  r.value = std::max(r.value, 0.0);
  return r;
}

double kd_kl_loss(CSpan p1, CSpan p2, double tau) { return kd_kl_loss_grad(p1, p2, tau).value; }

CosineResult neg_cosine_grad(CSpan v, CSpan z) {
  require_same_size(v, z, "neg_cosine");
  double vv = 0.0, zz = 0.0, vz = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    vv += v[i] * v[i];
    zz += z[i] * z[i];
    vz += v[i] * z[i];
  }
  const double nv = std::sqrt(vv), nz = std::sqrt(zz);
  if (!(nv > kNormEpsilon) || !(nz > kNormEpsilon) || !std::isfinite(nv) || !std::isfinite(nz))
    throw DegenerateVector("neg_cosine: vector norm below 1e-12 or non-finite");
  CosineResult r;
  const double cos = vz / (nv * nz);
  r.value = -std::clamp(cos, -1.0, 1.0);
  r.d_v.resize(v.size());
  r.d_z.resize(z.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    r.d_v[i] = -(z[i] / (nv * nz) - cos * v[i] / vv);
    r.d_z[i] = -(v[i] / (nv * nz) - cos * z[i] / zz);
  }
  return r;
}

double neg_cosine(CSpan v, CSpan z) { return neg_cosine_grad(v, z).value; }

SimResult sim_loss_grad(CSpan z1, CSpan z2, CSpan v1, CSpan v2) {
  require_same_size(z1, z2, "sim_loss");
  require_same_size(z1, v1, "sim_loss");
  require_same_size(z1, v2, "sim_loss");
  const CosineResult a = neg_cosine_grad(v1, z2);
  const CosineResult b = neg_cosine_grad(v2, z1);
  SimResult r;
  r.value = 0.5 * a.value + 0.5 * b.value;
  r.d_z1.assign(z1.size(), 0.0);
  r.d_z2.assign(z2.size(), 0.0);
  r.d_v1.resize(v1.size());
  r.d_v2.resize(v2.size());
  for (std::size_t i = 0; i < v1.size(); ++i) {
    r.d_v1[i] = 0.5 * a.d_v[i];
    r.d_v2[i] = 0.5 * b.d_v[i];
  }
  return r;
}

double sim_loss(CSpan z1, CSpan z2, CSpan v1, CSpan v2) { return sim_loss_grad(z1, z2, v1, v2).value; }

LossTerms total_loss(std::span<const LabeledBranches> batch, const HyperParams& hp, std::vector<BranchGrads>* grads) {
  hp.validate();
  if (batch.empty()) throw InvalidInput("total_loss: empty batch");
  const double inv_n = 1.0 / static_cast<double>(batch.size());
  if (grads) grads->assign(batch.size(), {});
  const bool need_kl = hp.alpha != 0.0;
  const bool need_sim = hp.beta != 0.0;

  LossTerms t;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const BranchOutputs& o = batch[i].out;
    const Vec& y = batch[i].label;
    const std::size_t k = y.size();
    Vec ce1(k), ce2(k);
    const double ce = cross_entropy_logits(o.p1, y, ce1) + cross_entropy_logits(o.p2, y, ce2);
    KdKlResult kl{0.0, Vec(k, 0.0), Vec(k, 0.0)};
    if (need_kl) kl = kd_kl_loss_grad(o.p1, o.p2, hp.tau);
    SimResult sim;
    if (need_sim) sim = sim_loss_grad(o.z1, o.z2, o.v1, o.v2);

    t.ce += ce * inv_n;
    t.kl += kl.value * inv_n;
    t.sim += sim.value * inv_n;
    t.total += (ce + hp.alpha * kl.value + hp.beta * sim.value) * inv_n;

    if (grads) {
      BranchGrads& g = (*grads)[i];
      g.p1.resize(k);
      g.p2.resize(k);
      for (std::size_t j = 0; j < k; ++j) {
        g.p1[j] = (ce1[j] + hp.alpha * kl.d_p1[j]) * inv_n;
        g.p2[j] = (ce2[j] + hp.alpha * kl.d_p2[j]) * inv_n;
      }
      const std::size_t d = o.v1.size();
      g.z1.assign(o.z1.size(), 0.0);
      g.z2.assign(o.z2.size(), 0.0);
      g.v1.assign(d, 0.0);
      g.v2.assign(d, 0.0);
      if (need_sim)
        for (std::size_t j = 0; j < d; ++j) {
          g.v1[j] = hp.beta * sim.d_v1[j] * inv_n;
          g.v2[j] = hp.beta * sim.d_v2[j] * inv_n;
        }
    }
  }
  return t;
}

LossTerms single_view_loss(std::span<const Vec> logits, std::span<const Vec> labels, std::vector<Vec>* d_logits) {
  if (logits.empty()) throw InvalidInput("single_view_loss: empty batch");
  if (logits.size() != labels.size()) throw ShapeError("single_view_loss: batch/label count mismatch");
  const double inv_n = 1.0 / static_cast<double>(logits.size());
  if (d_logits) d_logits->assign(logits.size(), {});
  LossTerms t;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    Vec g(logits[i].size());
    const double ce = cross_entropy_logits(logits[i], labels[i], g);
    t.ce += ce * inv_n;
    if (d_logits) {
      for (double& x : g) x *= inv_n;
      (*d_logits)[i] = std::move(g);
    }
  }
  t.total = t.ce;
  return t;
}

LossTerms teacher_kd_loss(std::span<const LabeledBranches> student, std::span<const Vec> teacher1,
                          std::span<const Vec> teacher2, const HyperParams& hp, std::vector<BranchGrads>* grads) {
  hp.validate();
  if (student.empty()) throw InvalidInput("teacher_kd_loss: empty batch");
  if (teacher1.size() != student.size() || teacher2.size() != student.size())
    throw ShapeError("teacher_kd_loss: teacher batch size mismatch");
  const double inv_n = 1.0 / static_cast<double>(student.size());
  if (grads) grads->assign(student.size(), {});
  LossTerms t;
  for (std::size_t i = 0; i < student.size(); ++i) {
    const BranchOutputs& o = student[i].out;
    const Vec& y = student[i].label;
    const std::size_t k = y.size();
    Vec ce1(k), ce2(k), kl1(k), kl2(k);
    const double ce = cross_entropy_logits(o.p1, y, ce1) + cross_entropy_logits(o.p2, y, ce2);
    const double kl = kl_to_target(softened_softmax(teacher1[i], hp.tau), o.p1, hp.tau, kl1) +
                      kl_to_target(softened_softmax(teacher2[i], hp.tau), o.p2, hp.tau, kl2);
    t.ce += ce * inv_n;
    t.kl += kl * inv_n;
    t.total += (ce + hp.alpha * kl) * inv_n;
    if (grads) {
      BranchGrads& g = (*grads)[i];
      g.p1.resize(k);
      g.p2.resize(k);
      for (std::size_t j = 0; j < k; ++j) {
        g.p1[j] = (ce1[j] + hp.alpha * kl1[j]) * inv_n;
        g.p2[j] = (ce2[j] + hp.alpha * kl2[j]) * inv_n;
      }
      g.z1.assign(o.z1.size(), 0.0);
      g.z2.assign(o.z2.size(), 0.0);
      g.v1.assign(o.v1.size(), 0.0);
      g.v2.assign(o.v2.size(), 0.0);
    }
  }
  return t;
}

}  // namespace skd::losses
