// SPDX-License-Identifier: Apache-2.0
#include "skd/augment.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "skd/errors.hpp"

namespace skd {

void RawVideo::validate() const {
  if (frames < 1 || height < 1 || width < 1) throw InvalidInput("video must have at least one frame and pixel");
  if (pixels.size() != static_cast<std::size_t>(frames) * height * width * 3)
    throw InvalidInput("video pixel buffer does not match its dimensions");
}

void AugmentConfig::validate() const {
  if (clip_len < 1) throw ConfigError("augment.clip_len", "must be positive");
  if (scale_short_edge < 1) throw ConfigError("augment.scale_short_edge", "must be positive");
  if (crop_size < 1) throw ConfigError("augment.crop_size", "must be positive");
  if (crop_size > scale_short_edge) throw ConfigError("augment.crop_size", "must not exceed scale_short_edge");
  if (!(op_probability >= 0.0 && op_probability <= 1.0))
    throw ConfigError("augment.op_probability", "must be in [0, 1]");
  if (!(brightness_max >= 0.0)) throw ConfigError("augment.brightness_max", "must be non-negative");
  if (!(contrast_min > 0.0 && contrast_min <= contrast_max))
    throw ConfigError("augment.contrast_min", "need 0 < contrast_min <= contrast_max");
  if (!(hue_max >= 0.0 && hue_max <= 0.5)) throw ConfigError("augment.hue_max", "must be in [0, 0.5]");
  if (!(blur_sigma_min > 0.0 && blur_sigma_min <= blur_sigma_max))
    throw ConfigError("augment.blur_sigma_min", "need 0 < blur_sigma_min <= blur_sigma_max");
}

std::vector<int> trim_clip(const RawVideo& video, int clip_len, Rng& rng) {
  video.validate();
  if (clip_len < 1) throw InvalidInput("clip length must be positive");
  std::vector<int> idx(static_cast<std::size_t>(clip_len));
  if (video.frames < clip_len) {
    for (int t = 0; t < clip_len; ++t) idx[t] = t % video.frames;
    return idx;
  }
  const int start = static_cast<int>(rng.below(static_cast<std::uint64_t>(video.frames - clip_len + 1)));
  for (int t = 0; t < clip_len; ++t) idx[t] = start + t;
  return idx;
}

std::vector<int> center_window(const RawVideo& video, int clip_len) {
  video.validate();
  std::vector<int> idx(static_cast<std::size_t>(clip_len));
  const int start = video.frames >= clip_len ? (video.frames - clip_len) / 2 : 0;
  for (int t = 0; t < clip_len; ++t) idx[t] = (start + t) % video.frames;
  return idx;
}

std::array<int, 2> scaled_size(int height, int width, int short_edge) {
  if (height <= width) {
    const int w = static_cast<int>(std::lround(static_cast<double>(width) * short_edge / height));
    return {short_edge, std::max(w, short_edge)};
  }
  const int h = static_cast<int>(std::lround(static_cast<double>(height) * short_edge / width));
  return {std::max(h, short_edge), short_edge};
}

namespace {

struct Tap {
  int i0, i1;
  float w1;
};

// Half-pixel-centre bilinear taps for `count` outputs starting at `offset`
// in a grid of `scaled` samples over `source` inputs.
std::vector<Tap> bilinear_taps(int source, int scaled, int offset, int count) {
  std::vector<Tap> taps(static_cast<std::size_t>(count));
  const double ratio = static_cast<double>(source) / scaled;
  for (int i = 0; i < count; ++i) {
    double s = (offset + i + 0.5) * ratio - 0.5;
    s = std::clamp(s, 0.0, static_cast<double>(source - 1));
    const int i0 = static_cast<int>(std::floor(s));
    const int i1 = std::min(i0 + 1, source - 1);
    taps[i] = {i0, i1, static_cast<float>(s - i0)};
  }
  return taps;
}

void clamp_unit(Clip& clip) {
  for (float& v : clip.data) v = std::clamp(v, 0.0f, 1.0f);
}

}  // namespace

Clip scale_and_crop_at(const RawVideo& video, std::span<const int> frames, const AugmentConfig& cfg,
                       CropWindow window) {
  video.validate();
  const auto [sh, sw] = scaled_size(video.height, video.width, cfg.scale_short_edge);
  const int crop = cfg.crop_size;
  if (window.y < 0 || window.x < 0 || window.y + crop > sh || window.x + crop > sw)
    throw InvalidInput("crop window outside the scaled frame");
  const auto ty = bilinear_taps(video.height, sh, window.y, crop);
  const auto tx = bilinear_taps(video.width, sw, window.x, crop);

  Clip clip(static_cast<int>(frames.size()), crop);
  clip.source_frames.assign(frames.begin(), frames.end());
  clip.frame_crops.assign(frames.size(), window);
  for (std::size_t t = 0; t < frames.size(); ++t) {
    const int f = frames[t];
    if (f < 0 || f >= video.frames) throw InvalidInput("frame index out of range");
    for (int y = 0; y < crop; ++y) {
      const Tap& a = ty[y];
      for (int x = 0; x < crop; ++x) {
        const Tap& b = tx[x];
        for (int c = 0; c < 3; ++c) {
          const float top = video.at(f, a.i0, b.i0, c) * (1.0f - b.w1) + video.at(f, a.i0, b.i1, c) * b.w1;
          const float bot = video.at(f, a.i1, b.i0, c) * (1.0f - b.w1) + video.at(f, a.i1, b.i1, c) * b.w1;
          clip.at(static_cast<int>(t), y, x, c) = top * (1.0f - a.w1) + bot * a.w1;
        }
      }
    }
  }
  return clip;
}

Clip scale_and_crop(const RawVideo& video, std::span<const int> frames, const AugmentConfig& cfg, Rng& rng) {
  const auto [sh, sw] = scaled_size(video.height, video.width, cfg.scale_short_edge);
  CropWindow w;
  w.y = static_cast<int>(rng.below(static_cast<std::uint64_t>(sh - cfg.crop_size + 1)));
  w.x = static_cast<int>(rng.below(static_cast<std::uint64_t>(sw - cfg.crop_size + 1)));
  return scale_and_crop_at(video, frames, cfg, w);
}

void flip_horizontal(Clip& clip) {
  const int s = clip.size;
  for (int t = 0; t < clip.frames; ++t)
    for (int y = 0; y < s; ++y)
      for (int x = 0; x < s / 2; ++x)
        for (int c = 0; c < 3; ++c) std::swap(clip.at(t, y, x, c), clip.at(t, y, s - 1 - x, c));
}

void adjust_contrast(Clip& clip, double factor) {
  double mean = 0.0;
  for (float v : clip.data) mean += v;
  mean /= static_cast<double>(std::max<std::size_t>(clip.data.size(), 1));
  const float m = static_cast<float>(mean), f = static_cast<float>(factor);
  for (float& v : clip.data) v = m + f * (v - m);
  clamp_unit(clip);
}

void adjust_brightness(Clip& clip, double delta) {
  const float d = static_cast<float>(delta);
  for (float& v : clip.data) v += d;
  clamp_unit(clip);
}

void adjust_hue(Clip& clip, double shift) {
  const float sh = static_cast<float>(shift - std::floor(shift)) * 6.0f;
  float* d = clip.data.data();
  const std::size_t n = clip.data.size() / 3;
  // Branch-free HSV round trip on planar copies: hue in [0, 6), then
  // c_n = v - v s clamp(min(k, 4 - k), 0, 1) with k = (n + h) mod 6.
  std::vector<float> planes(3 * n);
  float *R = planes.data(), *G = R + n, *B = G + n;
  for (std::size_t i = 0; i < n; ++i) {
    R[i] = d[3 * i];
    G[i] = d[3 * i + 1];
    B[i] = d[3 * i + 2];
  }
  auto hi = [](float x, float y) { return x > y ? x : y; };
  auto lo = [](float x, float y) { return x < y ? x : y; };
  for (std::size_t i = 0; i < n; ++i) {
    const float r = R[i], g = G[i], b = B[i];
    const float mx = hi(r, hi(g, b)), mn = lo(r, lo(g, b));
    const float delta = mx - mn;
    const float inv = 1.0f / hi(delta, 1e-30f);  // grey pixels: delta = 0 leaves them unchanged
    const float hr = (g - b) * inv, hg = (b - r) * inv + 2.0f, hb = (r - g) * inv + 4.0f;
    float h = mx == r ? hr : (mx == g ? hg : hb);
    h += sh;
    h += h < 0.0f ? 6.0f : 0.0f;
    h -= h >= 6.0f ? 6.0f : 0.0f;
    float k5 = 5.0f + h, k3 = 3.0f + h, k1 = 1.0f + h;
    k5 -= k5 >= 6.0f ? 6.0f : 0.0f;
    k3 -= k3 >= 6.0f ? 6.0f : 0.0f;
    k1 -= k1 >= 6.0f ? 6.0f : 0.0f;
    R[i] = mx - delta * lo(hi(lo(k5, 4.0f - k5), 0.0f), 1.0f);
    G[i] = mx - delta * lo(hi(lo(k3, 4.0f - k3), 0.0f), 1.0f);
    B[i] = mx - delta * lo(hi(lo(k1, 4.0f - k1), 0.0f), 1.0f);
  }
  for (std::size_t i = 0; i < n; ++i) {
    d[3 * i] = R[i];
    d[3 * i + 1] = G[i];
    d[3 * i + 2] = B[i];
  }
  clamp_unit(clip);
}

void gaussian_blur(Clip& clip, double sigma) {
  if (!(sigma > 0.0)) return;
  const int radius = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<float> kernel(static_cast<std::size_t>(2 * radius + 1));
  double sum = 0.0;
  for (int k = -radius; k <= radius; ++k)
    sum += kernel[k + radius] = static_cast<float>(std::exp(-k * k / (2.0 * sigma * sigma)));
  for (float& w : kernel) w = static_cast<float>(w / sum);

  // Separable passes over channels-last rows; borders replicate the edge.
  const int s = clip.size;
  const std::size_t row = static_cast<std::size_t>(s) * 3;
  std::vector<float> padded((static_cast<std::size_t>(s) + 2 * radius) * 3);
  std::vector<float> frame(row * s);
  for (int t = 0; t < clip.frames; ++t) {
    float* base = clip.data.data() + t * row * s;
    for (int y = 0; y < s; ++y) {
      const float* src = base + y * row;
      for (int k = 0; k < radius; ++k)
        for (int c = 0; c < 3; ++c) {
          padded[k * 3 + c] = src[c];
          padded[(radius + s + k) * 3 + c] = src[row - 3 + c];
        }
      std::copy(src, src + row, padded.begin() + radius * 3);
      float* out = frame.data() + y * row;
      std::fill(out, out + row, 0.0f);
      for (int k = 0; k <= 2 * radius; ++k) {
        const float w = kernel[k];
        const float* in = padded.data() + k * 3;
        for (std::size_t j = 0; j < row; ++j) out[j] += w * in[j];
      }
    }
    for (int y = 0; y < s; ++y) {
      float* out = base + y * row;
      std::fill(out, out + row, 0.0f);
      for (int k = -radius; k <= radius; ++k) {
        const float w = kernel[k + radius];
        const float* in = frame.data() + std::clamp(y + k, 0, s - 1) * row;
        for (std::size_t j = 0; j < row; ++j) out[j] += w * in[j];
      }
    }
  }
  clamp_unit(clip);
}

void channel_split(Clip& clip, int channel) {
  if (channel < 0 || channel > 2) throw InvalidInput("channel must be 0, 1 or 2");
  for (std::size_t i = 0; i + 2 < clip.data.size(); i += 3) {
    const float v = clip.data[i + channel];
    clip.data[i] = clip.data[i + 1] = clip.data[i + 2] = v;
  }
}

PhotometricPlan sample_photometric(const AugmentConfig& cfg, Rng& rng) {
  PhotometricPlan plan;
  const double p = cfg.op_probability;
  for (PhotometricOp op : kPhotometricOrder) {
    if (!rng.bernoulli(p)) continue;
    switch (op) {
      case PhotometricOp::flip: plan.flip = true; break;
      case PhotometricOp::contrast: plan.contrast = rng.uniform(cfg.contrast_min, cfg.contrast_max); break;
      case PhotometricOp::brightness: plan.brightness = rng.uniform(-cfg.brightness_max, cfg.brightness_max); break;
      case PhotometricOp::hue: plan.hue = rng.uniform(-cfg.hue_max, cfg.hue_max); break;
      case PhotometricOp::blur: plan.blur_sigma = rng.uniform(cfg.blur_sigma_min, cfg.blur_sigma_max); break;
      case PhotometricOp::channel_split: plan.split_channel = static_cast<int>(rng.below(3)); break;
    }
  }
  return plan;
}

void apply_plan(Clip& clip, const PhotometricPlan& plan) {
  if (clip.range != ValueRange::unit) throw InvalidInput("photometric operators expect a unit-range clip");
  if (plan.flip) flip_horizontal(clip);
  if (plan.contrast) adjust_contrast(clip, *plan.contrast);
  if (plan.brightness) adjust_brightness(clip, *plan.brightness);
  if (plan.hue) adjust_hue(clip, *plan.hue);
  if (plan.blur_sigma) gaussian_blur(clip, *plan.blur_sigma);
  if (plan.split_channel) channel_split(clip, *plan.split_channel);
}

Clip apply_photometric(Clip clip, const AugmentConfig& cfg, Rng& rng) {
  apply_plan(clip, sample_photometric(cfg, rng));
  return clip;
}

void normalize(Clip& clip) {
  if (clip.range != ValueRange::unit) throw InvalidInput("clip is already normalized");
  for (float& v : clip.data) v = 2.0f * v - 1.0f;
  clip.range = ValueRange::normalized;
}

void denormalize(Clip& clip) {
  if (clip.range != ValueRange::normalized) throw InvalidInput("clip is not normalized");
  for (float& v : clip.data) v = (v + 1.0f) * 0.5f;
  clip.range = ValueRange::unit;
}

ViewPair two_views(const RawVideo& video, std::vector<double> label, const AugmentConfig& cfg, Rng& rng) {
  cfg.validate();
  auto one_view = [&] {
    const std::vector<int> frames = trim_clip(video, cfg.clip_len, rng);
    Clip clip = apply_photometric(scale_and_crop(video, frames, cfg, rng), cfg, rng);
    normalize(clip);
    return clip;
  };
  ViewPair pair;
  pair.x1 = one_view();
  pair.x2 = one_view();
  pair.label = std::move(label);
  return pair;
}

Clip center_clip(const RawVideo& video, const AugmentConfig& cfg) {
  cfg.validate();
  const auto [sh, sw] = scaled_size(video.height, video.width, cfg.scale_short_edge);
  const CropWindow w{(sh - cfg.crop_size) / 2, (sw - cfg.crop_size) / 2};
  Clip clip = scale_and_crop_at(video, center_window(video, cfg.clip_len), cfg, w);
  normalize(clip);
  return clip;
}

Tensor clips_to_tensor(std::span<const Clip* const> clips) {
  if (clips.empty()) throw InvalidInput("no clips to stack");
  const int T = clips[0]->frames, S = clips[0]->size;
  const std::int64_t n = static_cast<std::int64_t>(clips.size());
  Tensor out({n, 3, T, S, S});
  const std::int64_t plane = static_cast<std::int64_t>(T) * S * S;
  for (std::int64_t i = 0; i < n; ++i) {
    const Clip& c = *clips[i];
    if (c.frames != T || c.size != S) throw ShapeError("clips in a batch must share their shape");
    float* dst = out.data() + i * 3 * plane;
    for (std::int64_t p = 0; p < plane; ++p)
      for (int ch = 0; ch < 3; ++ch) dst[ch * plane + p] = c.data[static_cast<std::size_t>(p) * 3 + ch];
  }
  return out;
}

}  // namespace skd
