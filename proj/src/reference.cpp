// SPDX-License-Identifier: Apache-2.0
#include "skd/reference.hpp"

#include <algorithm>
#include <cmath>

namespace skd::reference {

Vec softmax(const Vec& logits, double tau) {
  double top = logits[0];
  for (double x : logits) top = std::max(top, x);
  Vec e(logits.size());
  double z = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    e[i] = std::exp((logits[i] - top) / tau);
    z += e[i];
  }
  for (double& x : e) x /= z;
  return e;
}

double cross_entropy(const Vec& probs, const Vec& one_hot) {
  double s = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) s += one_hot[i] * std::log(std::max(probs[i], 1e-12));
  return -s;
}

double kl(const Vec& p, const Vec& q) {
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i)
    if (p[i] > 0.0) s += p[i] * (std::log(p[i]) - std::log(std::max(q[i], 1e-12)));
  return s;
}

double kd_kl(const Vec& p1, const Vec& p2, double tau) {
  Vec sum(p1.size());
  for (std::size_t i = 0; i < p1.size(); ++i) sum[i] = p1[i] + p2[i];
  const Vec t = softmax(sum, tau);
  return kl(t, softmax(p1, tau)) + kl(t, softmax(p2, tau));
}

double neg_cosine(const Vec& v, const Vec& z) {
  double dot = 0.0, nv = 0.0, nz = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    dot += v[i] * z[i];
    nv += v[i] * v[i];
    nz += z[i] * z[i];
  }
  return -dot / (std::sqrt(nv) * std::sqrt(nz));
}

double sim(const Vec& z1, const Vec& z2, const Vec& v1, const Vec& v2) {
  return 0.5 * neg_cosine(v1, z2) + 0.5 * neg_cosine(v2, z1);
}

double total(const std::vector<Sample>& batch, double tau, double alpha, double beta) {
  double s = 0.0;
  for (const Sample& x : batch) {
    const double ce = cross_entropy(softmax(x.p1, 1.0), x.y) + cross_entropy(softmax(x.p2, 1.0), x.y);
    s += ce + alpha * kd_kl(x.p1, x.p2, tau) + beta * sim(x.z1, x.z2, x.v1, x.v2);
  }
  return s / static_cast<double>(batch.size());
}

double frozen_sample_objective(const Sample& s, const Vec& frozen_target, double tau, double alpha, double beta) {
  const double ce = cross_entropy(softmax(s.p1, 1.0), s.y) + cross_entropy(softmax(s.p2, 1.0), s.y);
  const double k = kl(frozen_target, softmax(s.p1, tau)) + kl(frozen_target, softmax(s.p2, tau));
  return ce + alpha * k + beta * sim(s.z1, s.z2, s.v1, s.v2);
}

Vec central_difference(const std::function<double(const Vec&)>& f, const Vec& x, double h) {
  Vec g(x.size());
  Vec probe = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    probe[i] = x[i] + h;
    const double up = f(probe);
    probe[i] = x[i] - h;
    const double down = f(probe);
    probe[i] = x[i];
    g[i] = (up - down) / (2.0 * h);
  }
  return g;
}

double relative_error(const Vec& a, const Vec& b, double floor) {
  double d = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    d += (a[i] - b[i]) * (a[i] - b[i]);
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  return std::sqrt(d) / std::max({std::sqrt(na), std::sqrt(nb), floor});
}

double bilinear_sample(const RawVideo& video, int f, int c, int scaled_h, int scaled_w, int sy, int sx) {
  auto coord = [](int dst, int in, int out) {
    const double s = (dst + 0.5) * in / static_cast<double>(out) - 0.5;
    return std::min(std::max(s, 0.0), static_cast<double>(in - 1));
  };
  const double y = coord(sy, video.height, scaled_h);
  const double x = coord(sx, video.width, scaled_w);
  const int y0 = static_cast<int>(y), x0 = static_cast<int>(x);
  const int y1 = std::min(y0 + 1, video.height - 1), x1 = std::min(x0 + 1, video.width - 1);
  const double wy = y - y0, wx = x - x0;
  auto px = [&](int yy, int xx) { return video.pixels[video.index(f, yy, xx, c)] / 255.0; };
  return (1 - wy) * ((1 - wx) * px(y0, x0) + wx * px(y0, x1)) + wy * ((1 - wx) * px(y1, x0) + wx * px(y1, x1));
}

}  // namespace skd::reference
