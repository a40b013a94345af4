// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "skd/nn/tensor.hpp"
#include "skd/random.hpp"

namespace skd {

/// A decoded video: frames x height x width x RGB, stored as 8-bit values
/// and exposed as intensities in [0, 1].
struct RawVideo {
  int frames = 0;
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> pixels;  // F*H*W*3, channels last
  std::optional<double> frame_rate;

  RawVideo() = default;
  RawVideo(int f, int h, int w) : frames(f), height(h), width(w), pixels(static_cast<std::size_t>(f) * h * w * 3) {}

  std::size_t index(int f, int y, int x, int c) const {
    return ((static_cast<std::size_t>(f) * height + y) * width + x) * 3 + c;
  }
  float at(int f, int y, int x, int c) const { return pixels[index(f, y, x, c)] * (1.0f / 255.0f); }
  void validate() const;
  bool operator==(const RawVideo&) const = default;
};

enum class ValueRange { unit, normalized };

struct CropWindow {
  int y = 0;
  int x = 0;
  bool operator==(const CropWindow&) const = default;
};

/// T x size x size x 3 frames, channels last.
struct Clip {
  int frames = 0;
  int size = 0;
  std::vector<float> data;
  ValueRange range = ValueRange::unit;
  std::vector<int> source_frames;       // video frame index of each clip frame
  std::vector<CropWindow> frame_crops;  // crop offset applied to each frame, in scaled coordinates

  Clip() = default;
  Clip(int t, int s) : frames(t), size(s), data(static_cast<std::size_t>(t) * s * s * 3) {}

  std::size_t index(int t, int y, int x, int c) const {
    return ((static_cast<std::size_t>(t) * size + y) * size + x) * 3 + c;
  }
  float& at(int t, int y, int x, int c) { return data[index(t, y, x, c)]; }
  float at(int t, int y, int x, int c) const { return data[index(t, y, x, c)]; }
};

struct ViewPair {
  Clip x1;
  Clip x2;
  std::vector<double> label;  // one-hot
};

struct AugmentConfig {
  int clip_len = 16;
  int scale_short_edge = 128;
  int crop_size = 112;
  double op_probability = 0.5;
  double brightness_max = 0.25;  // delta ~ U(-max, max), additive
  double contrast_min = 0.6;     // factor ~ U(min, max) about the clip mean
  double contrast_max = 1.4;
  double hue_max = 0.1;          // shift ~ U(-max, max) of the hue circle
  double blur_sigma_min = 0.1;   // sigma ~ U(min, max), radius ceil(3 sigma)
  double blur_sigma_max = 2.0;
  std::uint64_t seed = 0;

  void validate() const;
  bool operator==(const AugmentConfig&) const = default;
};

/// T consecutive frame indices starting uniformly in [0, F-T]; videos
/// shorter than T are looped cyclically from frame 0.
std::vector<int> trim_clip(const RawVideo& video, int clip_len, Rng& rng);

/// Deterministic centered window used at evaluation time.
std::vector<int> center_window(const RawVideo& video, int clip_len);

/// Scales the shorter edge to cfg.scale_short_edge (bilinear, aspect ratio
/// kept) and applies one random crop_size x crop_size window to all frames.
Clip scale_and_crop(const RawVideo& video, std::span<const int> frames, const AugmentConfig& cfg, Rng& rng);

/// Same as scale_and_crop with an explicit window (in scaled coordinates).
Clip scale_and_crop_at(const RawVideo& video, std::span<const int> frames, const AugmentConfig& cfg,
                       CropWindow window);

/// Scaled (height, width) for a frame size under the shorter-edge rule.
std::array<int, 2> scaled_size(int height, int width, int short_edge);

enum class PhotometricOp { flip, contrast, brightness, hue, blur, channel_split };
inline constexpr std::array<PhotometricOp, 6> kPhotometricOrder{PhotometricOp::flip, PhotometricOp::contrast,
                                                                PhotometricOp::brightness, PhotometricOp::hue,
                                                                PhotometricOp::blur, PhotometricOp::channel_split};

/// Which operators fire for one clip and their sampled parameters.
struct PhotometricPlan {
  bool flip = false;
  std::optional<double> contrast;
  std::optional<double> brightness;
  std::optional<double> hue;
  std::optional<double> blur_sigma;
  std::optional<int> split_channel;

  bool empty() const { return !flip && !contrast && !brightness && !hue && !blur_sigma && !split_channel; }
};

PhotometricPlan sample_photometric(const AugmentConfig& cfg, Rng& rng);
void apply_plan(Clip& clip, const PhotometricPlan& plan);
Clip apply_photometric(Clip clip, const AugmentConfig& cfg, Rng& rng);

void flip_horizontal(Clip& clip);
void adjust_contrast(Clip& clip, double factor);
void adjust_brightness(Clip& clip, double delta);
void adjust_hue(Clip& clip, double shift);
void gaussian_blur(Clip& clip, double sigma);
void channel_split(Clip& clip, int channel);

/// x -> 2x - 1 and its inverse.
void normalize(Clip& clip);
void denormalize(Clip& clip);

/// trim -> scale/crop -> photometric -> normalize, twice, from one stream.
ViewPair two_views(const RawVideo& video, std::vector<double> label, const AugmentConfig& cfg, Rng& rng);

/// Centered window and centered crop, no photometric ops, normalized.
Clip center_clip(const RawVideo& video, const AugmentConfig& cfg);

/// Stacks clips into an (N, 3, T, H, W) tensor.
Tensor clips_to_tensor(std::span<const Clip* const> clips);

}  // namespace skd
