// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <span>
#include <vector>

namespace skd {

/// Loss weights and temperature of the self-distillation objective.
struct HyperParams {
  double tau = 10.0;
  double alpha = 0.1;
  double beta = 1.0;

  void validate() const;
  bool operator==(const HyperParams&) const = default;
};

/// Per-sample outputs of the two-view forward pass: representations r,
/// logits p, projections z and predictions v for each view.
struct BranchOutputs {
  std::vector<double> r1, r2;
  std::vector<double> p1, p2;
  std::vector<double> z1, z2;
  std::vector<double> v1, v2;

  /// The same sample with the two views exchanged.
  BranchOutputs swapped() const;
};

struct LabeledBranches {
  BranchOutputs out;
  std::vector<double> label;  // one-hot, length K
};

}  // namespace skd

namespace skd::losses {

using Vec = std::vector<double>;
using CSpan = std::span<const double>;

inline constexpr double kLogFloor = 1e-12;
inline constexpr double kNormEpsilon = 1e-12;

/// softmax(p / tau) with max subtraction.
Vec softened_softmax(CSpan logits, double tau);

/// -sum_k y_k ln(max(q_k, 1e-12)).
double cross_entropy(CSpan probs, CSpan one_hot);

/// Cross-entropy of softmax(logits) against a one-hot label. When `d_logits`
/// is non-empty it receives the gradient with respect to the logits.
double cross_entropy_logits(CSpan logits, CSpan one_hot, std::span<double> d_logits = {});

/// D_KL(target || softmax(logits / tau)) with the target held constant.
/// When `d_logits` is non-empty it receives the gradient w.r.t. the logits.
double kl_to_target(CSpan target, CSpan logits, double tau, std::span<double> d_logits = {});

/// Soft-label distillation between two views. The target is the softened
/// distribution of the summed logits p1 + p2 and is treated as a constant:
///   KL(softmax(p/tau) || softmax(p1/tau)) + KL(softmax(p/tau) || softmax(p2/tau)).
double kd_kl_loss(CSpan p1, CSpan p2, double tau);

struct KdKlResult {
  double value = 0.0;
  Vec d_p1, d_p2;  // student paths only
};
KdKlResult kd_kl_loss_grad(CSpan p1, CSpan p2, double tau);

/// -(v/|v|) . (z/|z|). Throws DegenerateVector if either norm is below 1e-12.
double neg_cosine(CSpan v, CSpan z);

struct CosineResult {
  double value = 0.0;
  Vec d_v, d_z;
};
CosineResult neg_cosine_grad(CSpan v, CSpan z);

/// 0.5 * D(v1, stopgrad(z2)) + 0.5 * D(v2, stopgrad(z1)).
double sim_loss(CSpan z1, CSpan z2, CSpan v1, CSpan v2);

struct SimResult {
  double value = 0.0;
  Vec d_z1, d_z2;  // always exactly zero: z enters only through stop-gradient
  Vec d_v1, d_v2;
};
SimResult sim_loss_grad(CSpan z1, CSpan z2, CSpan v1, CSpan v2);

/// Batch means of the loss components. `ce` is the mean of the summed
/// cross-entropies of all views in use; `kl` and `sim` are unweighted, and
/// reported as 0 when their weight is 0 (the term is not evaluated).
struct LossTerms {
  double total = 0.0;
  double ce = 0.0;
  double kl = 0.0;
  double sim = 0.0;
};

struct BranchGrads {
  Vec p1, p2, z1, z2, v1, v2;
};

/// Batch mean of CE(y, softmax(p1)) + CE(y, softmax(p2)) + alpha * kd_kl_loss
/// + beta * sim_loss. If `grads` is given it is resized to the batch and
/// filled with gradients of the returned total.
LossTerms total_loss(std::span<const LabeledBranches> batch, const HyperParams& hp,
                     std::vector<BranchGrads>* grads = nullptr);

/// Batch mean of CE(y, softmax(p)) over single-view logits (rows of `logits`).
LossTerms single_view_loss(std::span<const Vec> logits, std::span<const Vec> labels, std::vector<Vec>* d_logits);

/// Teacher-student distillation over two views: batch mean of
///   sum_views CE(y, softmax(s)) + alpha * KL(softmax(t/tau) || softmax(s/tau)).
/// Teacher logits are constants.
LossTerms teacher_kd_loss(std::span<const LabeledBranches> student, std::span<const Vec> teacher1,
                          std::span<const Vec> teacher2, const HyperParams& hp, std::vector<BranchGrads>* grads);

}  // namespace skd::losses
