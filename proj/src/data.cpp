// SPDX-License-Identifier: Apache-2.0
#include "skd/data.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>
#include <thread>

#include "skd/errors.hpp"

namespace fs = std::filesystem;

namespace skd {

void DatasetSplit::validate() const {
  const int k = num_classes();
  std::set<std::string> ids;
  for (const auto* part : {&train, &val, &test})
    for (const auto& v : *part) {
      if (!ids.insert(v.id).second) throw InvalidInput("video id '" + v.id + "' appears more than once");
      if (v.label < 0 || v.label >= k) throw InvalidInput("video '" + v.id + "' has an out-of-range label");
      v.video.validate();
    }
  if (!train.empty()) {
    std::vector<bool> seen(static_cast<std::size_t>(k), false);
    for (const auto& v : train) seen[static_cast<std::size_t>(v.label)] = true;
    for (int c = 0; c < k; ++c)
      if (!seen[static_cast<std::size_t>(c)]) throw InvalidInput("class '" + class_names[c] + "' missing from train");
  }
}

const std::vector<LabeledVideo>& DatasetSplit::by_name(const std::string& split) const {
  if (split == "train") return train;
  if (split == "val") return val;
  if (split == "test") return test;
  throw InvalidInput("unknown split '" + split + "' (expected train, val or test)");
}

void SyntheticConfig::validate(int clip_len) const {
  if (num_classes < 2) throw ConfigError("synthetic.num_classes", "must be at least 2");
  if (num_classes > static_cast<int>(kSyntheticClasses.size()))
    throw ConfigError("synthetic.num_classes", "at most " + std::to_string(kSyntheticClasses.size()) + " supported");
  if (videos_per_class < 1) throw ConfigError("synthetic.videos_per_class", "must be positive");
  if (frames < clip_len) throw ConfigError("synthetic.frames", "must be at least the clip length");
  if (height < 64 || width < 64) throw ConfigError("synthetic.height", "frames must be at least 64x64");
  if (!(noise_std >= 0.0)) throw ConfigError("synthetic.noise_std", "must be non-negative");
  if (distractors < 0) throw ConfigError("synthetic.distractors", "must be non-negative");
}

namespace {

struct Gaussian {
  Rng& rng;
  double spare = 0.0;
  bool has_spare = false;
  double operator()() {
    if (has_spare) {
      has_spare = false;
      return spare;
    }
    double u1 = rng.uniform();
    while (u1 <= 0.0) u1 = rng.uniform();
    const double u2 = rng.uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    spare = r * std::sin(6.283185307179586 * u2);
    has_spare = true;
    return r * std::cos(6.283185307179586 * u2);
  }
};

void draw_shape(std::vector<float>& img, int h, int w, double cy, double cx, double radius, bool square,
                const std::array<float, 3>& color) {
  const int y0 = std::max(0, static_cast<int>(std::floor(cy - radius)));
  const int y1 = std::min(h - 1, static_cast<int>(std::ceil(cy + radius)));
  const int x0 = std::max(0, static_cast<int>(std::floor(cx - radius)));
  const int x1 = std::min(w - 1, static_cast<int>(std::ceil(cx + radius)));
  for (int y = y0; y <= y1; ++y)
    for (int x = x0; x <= x1; ++x) {
      const double dy = y + 0.5 - cy, dx = x + 0.5 - cx;
      const bool inside = square ? (std::abs(dy) <= radius && std::abs(dx) <= radius)
                                 : (dy * dy + dx * dx <= radius * radius);
      if (!inside) continue;
      float* p = img.data() + (static_cast<std::size_t>(y) * w + x) * 3;
      p[0] = color[0];
      p[1] = color[1];
      p[2] = color[2];
    }
}

}  // namespace

RawVideo render_synthetic_video(const SyntheticConfig& cfg, int label, int index) {
  Rng rng(derive_seed(cfg.seed, {static_cast<std::uint64_t>(label), static_cast<std::uint64_t>(index)}));
  const int F = cfg.frames, H = cfg.height, W = cfg.width;

  std::array<float, 3> bg{}, color{};
  const double base = rng.uniform(0.15, 0.4);
  for (float& t : bg) t = static_cast<float>(base + rng.uniform(-0.05, 0.05));
  for (float& v : color) v = static_cast<float>(rng.uniform(0.7, 1.0));

  struct Blob {
    double y, x, vx, r;
    bool square;
    std::array<float, 3> c;
  };
  std::vector<Blob> blobs(static_cast<std::size_t>(cfg.distractors));
  for (Blob& d : blobs) {
    for (float& v : d.c) v = static_cast<float>(rng.uniform(0.05, 0.55));
    d.r = rng.uniform(5.0, 14.0);
    d.y = rng.uniform(0.0, H);
    d.x = rng.uniform(0.0, W);
    d.vx = rng.uniform(-2.0, 2.0);
    d.square = rng.bernoulli(0.5);
  }
  const bool square = rng.bernoulli(0.5);
  const double drift = rng.uniform(-1.0, 1.0);  // horizontal px/frame, symmetric in sign
  const double span = static_cast<double>(F - 1);

  double radius0 = rng.uniform(7.0, 12.0), radius1 = radius0;
  double speed = rng.uniform(1.5, 3.0);
  const std::string name = kSyntheticClasses.at(static_cast<std::size_t>(label));
  const bool vertical = name == "up" || name == "down";
  const bool bounce = name == "rise_fall" || name == "fall_rise";
  if (name == "grow" || name == "shrink") {
    const double small = rng.uniform(5.0, 8.0);
    const double large = rng.uniform(13.0, 19.0);
    radius0 = name == "grow" ? small : large;
    radius1 = name == "grow" ? large : small;
  }
  const double rmax = std::max(radius0, radius1);
  const double travel_room = H - 2.0 * rmax - 2.0;
  const double travel = vertical ? span : (bounce ? span / 2.0 : 0.0);
  if (travel > 0.0) speed = std::min(speed, travel_room / travel);
  const double extent = speed * travel;  // total vertical excursion

  double cy;
  if (name == "up" || name == "rise_fall")
    cy = rng.uniform(rmax + 1.0 + extent, H - rmax - 1.0);  // starts low, moves up
  else if (name == "down" || name == "fall_rise")
    cy = rng.uniform(rmax + 1.0, H - rmax - 1.0 - extent);
  else
    cy = rng.uniform(rmax + 1.0, H - rmax - 1.0);
  const double drift_room = std::abs(drift) * span;
  double cx = rng.uniform(rmax + 1.0 + (drift < 0 ? drift_room : 0.0), W - rmax - 1.0 - (drift > 0 ? drift_room : 0.0));

  RawVideo video(F, H, W);
  std::vector<float> frame(static_cast<std::size_t>(H) * W * 3);
  Gaussian noise{rng};
  for (int f = 0; f < F; ++f) {
    const double u = f / span;
    double y = cy;
    if (name == "up") y = cy - speed * f;
    if (name == "down") y = cy + speed * f;
    if (name == "rise_fall") y = cy - speed * std::min<double>(f, F - 1 - f);
    if (name == "fall_rise") y = cy + speed * std::min<double>(f, F - 1 - f);
    const double x = cx + drift * f;
    const double radius = radius0 + (radius1 - radius0) * u;
    for (std::size_t i = 0; i < frame.size(); ++i) frame[i] = bg[i % 3];
    for (const Blob& d : blobs) draw_shape(frame, H, W, d.y, d.x + d.vx * f, d.r, d.square, d.c);
    draw_shape(frame, H, W, y, x, radius, square, color);
    std::uint8_t* out = video.pixels.data() + static_cast<std::size_t>(f) * H * W * 3;
    for (std::size_t i = 0; i < frame.size(); ++i) {
      double v = frame[i];
      if (cfg.noise_std > 0.0) v += cfg.noise_std * noise();
      out[i] = static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
    }
  }
  return video;
}

DatasetSplit generate_synthetic(const SyntheticConfig& cfg) {
  cfg.validate(1);
  DatasetSplit split;
  const int K = cfg.num_classes;
  for (int c = 0; c < K; ++c) split.class_names.emplace_back(kSyntheticClasses[static_cast<std::size_t>(c)]);

  // Per-class shuffled lists interleaved round-robin, then cut 70/15/15:
  // every prefix of the interleaving is class balanced to within one video.
  std::vector<std::vector<int>> per_class(static_cast<std::size_t>(K));
  for (int c = 0; c < K; ++c) {
    auto& list = per_class[static_cast<std::size_t>(c)];
    for (int i = 0; i < cfg.videos_per_class; ++i) list.push_back(i);
    Rng rng(derive_seed(cfg.seed, {0x5b1f, static_cast<std::uint64_t>(c)}));
    for (std::size_t i = list.size(); i > 1; --i) std::swap(list[i - 1], list[rng.below(i)]);
  }
  std::vector<std::pair<int, int>> order;
  for (int i = 0; i < cfg.videos_per_class; ++i)
    for (int c = 0; c < K; ++c) order.emplace_back(c, per_class[static_cast<std::size_t>(c)][static_cast<std::size_t>(i)]);

  const std::size_t total = order.size();
  const auto n_train = static_cast<std::size_t>(std::lround(0.70 * static_cast<double>(total)));
  const auto n_val = static_cast<std::size_t>(std::lround(0.15 * static_cast<double>(total)));
  for (std::size_t j = 0; j < total; ++j) {
    const auto [c, i] = order[j];
    char id[64];
    std::snprintf(id, sizeof id, "%s_%04d", kSyntheticClasses[static_cast<std::size_t>(c)], i);
    LabeledVideo v{id, render_synthetic_video(cfg, c, i), c};
    (j < n_train ? split.train : j < n_train + n_val ? split.val : split.test).push_back(std::move(v));
  }
  split.validate();
  return split;
}

// ------------------------------------------------------------------- PNG

void write_png(const fs::path& path, const RawVideo& video, int frame) {
  png_image img{};
  img.version = PNG_IMAGE_VERSION;
  img.width = static_cast<png_uint_32>(video.width);
  img.height = static_cast<png_uint_32>(video.height);
  img.format = PNG_FORMAT_RGB;
  const std::uint8_t* data = video.pixels.data() + video.index(frame, 0, 0, 0);
  if (!png_image_write_to_file(&img, path.c_str(), 0, data, 0, nullptr))
    throw Error("cannot write " + path.string() + ": " + img.message);
}

void read_png(const fs::path& path, int& height, int& width, std::vector<std::uint8_t>& rgb) {
  png_image img{};
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&img, path.c_str())) {
    const std::string msg = img.message;
    png_image_free(&img);
    throw CorruptData("cannot read " + path.string() + ": " + msg);
  }
  img.format = PNG_FORMAT_RGB;
  rgb.resize(PNG_IMAGE_SIZE(img));
  if (!png_image_finish_read(&img, nullptr, rgb.data(), 0, nullptr)) {
    const std::string msg = img.message;
    png_image_free(&img);
    throw CorruptData("cannot decode " + path.string() + ": " + msg);
  }
  height = static_cast<int>(img.height);
  width = static_cast<int>(img.width);
}

namespace {

std::string frame_name(int f) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%05d.png", f);
  return buf;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream is(line);
  while (std::getline(is, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

std::string trim_cr(std::string s) {
  while (!s.empty() && (s.back() == '\r' || s.back() == ' ')) s.pop_back();
  return s;
}

}  // namespace

void export_dataset(const DatasetSplit& split, const fs::path& root) {
  fs::create_directories(root / "videos");
  {
    std::ofstream classes(root / "classes.txt");
    for (const auto& c : split.class_names) classes << c << '\n';
    if (!classes) throw Error("cannot write " + (root / "classes.txt").string());
  }
  std::ofstream index(root / "index.csv");
  index << "id,split,class,num_frames\n";
  const std::array<std::pair<const char*, const std::vector<LabeledVideo>*>, 3> parts{
      {{"train", &split.train}, {"val", &split.val}, {"test", &split.test}}};
  for (const auto& [name, videos] : parts)
    for (const auto& v : *videos) {
      const fs::path dir = root / "videos" / v.id;
      fs::create_directories(dir);
      for (int f = 0; f < v.video.frames; ++f) write_png(dir / frame_name(f), v.video, f);
      index << v.id << ',' << name << ',' << split.class_names.at(static_cast<std::size_t>(v.label)) << ','
            << v.video.frames << '\n';
    }
  if (!index) throw Error("cannot write " + (root / "index.csv").string());
}

DatasetSplit load_clip_dataset(const fs::path& root) {
  const fs::path classes_path = root / "classes.txt", index_path = root / "index.csv";
  if (!fs::exists(index_path)) throw NotFound("missing " + index_path.string());
  if (!fs::exists(classes_path)) throw NotFound("missing " + classes_path.string());

  DatasetSplit split;
  {
    std::ifstream in(classes_path);
    std::string line;
    while (std::getline(in, line))
      if (!(line = trim_cr(line)).empty()) split.class_names.push_back(line);
  }

  std::ifstream in(index_path);
  std::string line;
  int lineno = 0;
  const std::string where = index_path.filename().string();
  auto fail = [&](const std::string& msg) -> CorruptData {
    return CorruptData(where + ":" + std::to_string(lineno) + ": " + msg);
  };
  while (std::getline(in, line)) {
    ++lineno;
    line = trim_cr(line);
    if (lineno == 1) {
      if (line != "id,split,class,num_frames") throw fail("expected header 'id,split,class,num_frames'");
      continue;
    }
    if (line.empty()) continue;
    const auto cells = split_csv(line);
    if (cells.size() != 4) throw fail("expected 4 fields, got " + std::to_string(cells.size()));
    const std::string& id = cells[0];
    if (id.empty()) throw fail("empty id");
    const auto cls = std::find(split.class_names.begin(), split.class_names.end(), cells[2]);
    if (cls == split.class_names.end()) throw fail("unknown class '" + cells[2] + "'");
    int frames = 0;
    try {
      std::size_t used = 0;
      frames = std::stoi(cells[3], &used);
      if (used != cells[3].size()) throw std::invalid_argument("trailing");
    } catch (const std::exception&) {
      throw fail("num_frames is not an integer");
    }
    if (frames < 1) throw fail("num_frames must be positive");
    std::vector<LabeledVideo>* target = nullptr;
    if (cells[1] == "train") target = &split.train;
    if (cells[1] == "val") target = &split.val;
    if (cells[1] == "test") target = &split.test;
    if (!target) throw fail("unknown split '" + cells[1] + "'");

    const fs::path dir = root / "videos" / id;
    if (!fs::is_directory(dir)) throw CorruptData("video '" + id + "': missing directory " + dir.string());
    LabeledVideo v;
    v.id = id;
    v.label = static_cast<int>(cls - split.class_names.begin());
    std::vector<std::uint8_t> rgb;
    for (int f = 0; f < frames; ++f) {
      int h = 0, w = 0;
      try {
        read_png(dir / frame_name(f), h, w, rgb);
      } catch (const CorruptData& e) {
        throw CorruptData("video '" + id + "': " + e.what());
      }
      if (f == 0) v.video = RawVideo(frames, h, w);
      if (h != v.video.height || w != v.video.width)
        throw CorruptData("video '" + id + "': frame " + std::to_string(f) + " has different dimensions");
      std::copy(rgb.begin(), rgb.end(), v.video.pixels.begin() + static_cast<std::ptrdiff_t>(v.video.index(f, 0, 0, 0)));
    }
    target->push_back(std::move(v));
  }
  split.validate();
  return split;
}

// --------------------------------------------------------------- batches

std::vector<double> one_hot(int label, int num_classes) {
  if (label < 0 || label >= num_classes) throw InvalidInput("label out of range");
  std::vector<double> y(static_cast<std::size_t>(num_classes), 0.0);
  y[static_cast<std::size_t>(label)] = 1.0;
  return y;
}

std::vector<std::size_t> epoch_order(std::size_t count, std::uint64_t seed, std::uint64_t epoch) {
  std::vector<std::size_t> order(count);
  for (std::size_t i = 0; i < count; ++i) order[i] = i;
  Rng rng(derive_seed(seed, {0x0e0c, epoch}));
  for (std::size_t i = count; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
  return order;
}

BatchIterator::BatchIterator(const std::vector<LabeledVideo>& videos, int num_classes, std::size_t batch_size,
                             const AugmentConfig& cfg, std::uint64_t seed, std::uint64_t epoch, ViewMode mode,
                             int workers)
    : videos_(videos),
      num_classes_(num_classes),
      batch_size_(batch_size),
      cfg_(cfg),
      seed_(seed),
      epoch_(epoch),
      mode_(mode),
      workers_(std::max(1, workers)),
      order_(epoch_order(videos.size(), seed, epoch)) {
  if (batch_size_ == 0) throw InvalidInput("batch size must be positive");
  cfg_.validate();
}

std::optional<Batch> BatchIterator::next() {
  if (cursor_ >= order_.size()) return std::nullopt;
  const std::size_t end = std::min(order_.size(), cursor_ + batch_size_);
  Batch b;
  b.indices.assign(order_.begin() + static_cast<std::ptrdiff_t>(cursor_), order_.begin() + static_cast<std::ptrdiff_t>(end));
  cursor_ = end;
  const std::size_t n = b.indices.size();
  b.pairs.resize(n);
  b.labels.resize(n);

  auto produce = [&](std::size_t i) {
    const LabeledVideo& v = videos_[b.indices[i]];
    b.labels[i] = v.label;
    std::vector<double> y = one_hot(v.label, num_classes_);
    if (mode_ == ViewMode::center) {
      b.pairs[i].x1 = center_clip(v.video, cfg_);
      b.pairs[i].label = std::move(y);
    } else {
      Rng rng(derive_seed(seed_, {0xa06, epoch_, b.indices[i]}));
      b.pairs[i] = two_views(v.video, std::move(y), cfg_, rng);
    }
  };

  const std::size_t workers = std::min<std::size_t>(static_cast<std::size_t>(workers_), n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) produce(i);
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w)
      pool.emplace_back([&, w] {
        for (std::size_t i = w; i < n; i += workers) produce(i);
      });
  }
  return b;
}

}  // namespace skd
