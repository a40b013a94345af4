// SPDX-License-Identifier: Apache-2.0
#pragma once

// Plain scalar-loop versions of the losses and helpers for numerical
// gradient checks. Deliberately written without sharing code with the
// library implementations they are compared against.

#include <functional>
#include <vector>

#include "skd/augment.hpp"
#include "skd/losses.hpp"

namespace skd::reference {

using Vec = std::vector<double>;

Vec softmax(const Vec& logits, double tau);
double cross_entropy(const Vec& probs, const Vec& one_hot);
double kl(const Vec& p, const Vec& q);
/// KL(t || softmax(p1/tau)) + KL(t || softmax(p2/tau)), t = softmax((p1+p2)/tau).
double kd_kl(const Vec& p1, const Vec& p2, double tau);
double neg_cosine(const Vec& v, const Vec& z);
double sim(const Vec& z1, const Vec& z2, const Vec& v1, const Vec& v2);

struct Sample {
  Vec p1, p2, z1, z2, v1, v2, y;
};
double total(const std::vector<Sample>& batch, double tau, double alpha, double beta);

/// Per-sample objective with the distillation target and both projections
/// frozen at the supplied values; its gradient in (p1, p2, v1, v2) is what
/// the analytic total-loss gradient should equal.
double frozen_sample_objective(const Sample& s, const Vec& frozen_target, double tau, double alpha, double beta);

/// Central differences of f at x, one coordinate at a time.
Vec central_difference(const std::function<double(const Vec&)>& f, const Vec& x, double h = 1e-5);

/// ||a - b|| / max(||a||, ||b||, floor)
double relative_error(const Vec& a, const Vec& b, double floor = 1e-10);

/// Bilinear sample of channel c of frame f at row/column `sy`, `sx` of the
/// frame rescaled to (scaled_h, scaled_w), using half-pixel centres.
double bilinear_sample(const RawVideo& video, int f, int c, int scaled_h, int scaled_w, int sy, int sx);

}  // namespace skd::reference
