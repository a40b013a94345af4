// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "skd/augment.hpp"

namespace skd {

struct LabeledVideo {
  std::string id;
  RawVideo video;
  int label = 0;
};

struct DatasetSplit {
  std::vector<LabeledVideo> train, val, test;
  std::vector<std::string> class_names;

  int num_classes() const { return static_cast<int>(class_names.size()); }
  /// Split disjointness, label validity and train coverage of every class.
  void validate() const;
  const std::vector<LabeledVideo>& by_name(const std::string& split) const;
};

/// Motion patterns of the synthetic task. Every pattern is invariant under
/// horizontal flip, so flip augmentation never changes the true class.
inline constexpr std::array<const char*, 6> kSyntheticClasses{"up", "down", "grow", "shrink", "rise_fall",
                                                             "fall_rise"};

struct SyntheticConfig {
  int num_classes = 4;
  int videos_per_class = 50;
  int frames = 24;
  int height = 160;
  int width = 160;
  double noise_std = 0.08;
  int distractors = 3;  // dim blobs drifting horizontally
  std::uint64_t seed = 0;

  void validate(int clip_len) const;
  bool operator==(const SyntheticConfig&) const = default;
};

/// Seeded moving-shape videos, balanced over classes, split 70/15/15 with
/// class stratification.
DatasetSplit generate_synthetic(const SyntheticConfig& cfg);

/// One video of class `label`; deterministic in (cfg.seed, label, index).
RawVideo render_synthetic_video(const SyntheticConfig& cfg, int label, int index);

/// Writes root/classes.txt, root/index.csv and root/videos/<id>/%05d.png.
void export_dataset(const DatasetSplit& split, const std::filesystem::path& root);

/// Reads the layout written by export_dataset.
DatasetSplit load_clip_dataset(const std::filesystem::path& root);

void write_png(const std::filesystem::path& path, const RawVideo& video, int frame);
/// Reads a PNG as 8-bit RGB (grey and alpha inputs are converted).
void read_png(const std::filesystem::path& path, int& height, int& width, std::vector<std::uint8_t>& rgb);

enum class ViewMode {
  center,     // one deterministic centered view
  two_views,  // two independently augmented views
};

struct Batch {
  std::vector<std::size_t> indices;  // positions in the source split
  std::vector<ViewPair> pairs;       // x2 is empty in center mode
  std::vector<int> labels;
};

/// One shuffled pass over `videos` in batches of `batch_size`; the last
/// short batch is yielded as-is. Augmentation randomness for a sample is
/// derived from (seed, epoch, sample position), so the stream does not depend
/// on the number of workers.
class BatchIterator {
 public:
  BatchIterator(const std::vector<LabeledVideo>& videos, int num_classes, std::size_t batch_size,
                const AugmentConfig& cfg, std::uint64_t seed, std::uint64_t epoch, ViewMode mode, int workers = 1);

  std::optional<Batch> next();
  const std::vector<std::size_t>& order() const { return order_; }

 private:
  const std::vector<LabeledVideo>& videos_;
  int num_classes_;
  std::size_t batch_size_;
  AugmentConfig cfg_;
  std::uint64_t seed_, epoch_;
  ViewMode mode_;
  int workers_;
  std::vector<std::size_t> order_;
  std::size_t cursor_ = 0;
};

/// Shuffled visiting order of one epoch.
std::vector<std::size_t> epoch_order(std::size_t count, std::uint64_t seed, std::uint64_t epoch);

std::vector<double> one_hot(int label, int num_classes);

}  // namespace skd
