#include <doctest.h>

#include <Eigen/Dense>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>

#include "skd/data.hpp"
#include "skd/errors.hpp"

using namespace skd;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("skd_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

SyntheticConfig small_config() {
  SyntheticConfig cfg;
  cfg.videos_per_class = 4;
  cfg.frames = 6;
  cfg.height = 64;
  cfg.width = 80;
  cfg.seed = 3;
  return cfg;
}

void write_text(const fs::path& p, const std::string& s) { std::ofstream(p) << s; }

// Global vertical velocity of every frame pair from the brightness constancy
// equation (sum of It*Iy over sum of Iy^2), the changed-pixel fraction and the
// mean intensity.
// Each series is summarized by a least-squares quadratic in time.
Eigen::VectorXd motion_features(const RawVideo& v) {
  const int n = v.frames - 1;
  auto grey = [&](int f, int y, int x) { return v.at(f, y, x, 0) + v.at(f, y, x, 1) + v.at(f, y, x, 2); };
  Eigen::VectorXd vel(n), counts(n), mass(n);
  for (int f = 0; f < n; ++f) {
    double num = 0.0, den = 1e-9, c = 0.0;
    for (int y = 1; y + 1 < v.height; ++y)
      for (int x = 0; x < v.width; ++x) {
        const double it = grey(f + 1, y, x) - grey(f, y, x);
        const double iy =
            0.25 * (grey(f, y + 1, x) - grey(f, y - 1, x) + grey(f + 1, y + 1, x) - grey(f + 1, y - 1, x));
        num += it * iy;
        den += iy * iy;
        c += std::abs(it) > 0.05;
      }
    double m = 0.0;
    for (int y = 0; y < v.height; ++y)
      for (int x = 0; x < v.width; ++x) m += grey(f, y, x);
    mass[f] = m / (v.height * v.width);
    vel[f] = -num / den;
    counts[f] = c;
  }
  Eigen::MatrixXd basis(n, 3);
  for (int f = 0; f < n; ++f) {
    const double t = (f - (n - 1) / 2.0) / n;
    basis.row(f) << 1.0, t, t * t;
  }
  const Eigen::MatrixXd proj = (basis.transpose() * basis).ldlt().solve(basis.transpose());
  const Eigen::Vector3d vc = proj * vel, cc = proj * (counts / (v.height * v.width)), mc = proj * mass;
  Eigen::VectorXd out(7);
  out << vc[0], vc[1], vc[2], cc[1], cc[2], mc[1], 1.0;
  return out;
}

// One-vs-rest ridge regression on one-hot targets.
double linear_probe_accuracy(const DatasetSplit& split) {
  const int k = split.num_classes();
  const int dim = static_cast<int>(motion_features(split.train[0].video).size());
  Eigen::MatrixXd X(split.train.size(), dim), Y = Eigen::MatrixXd::Zero(split.train.size(), k);
  for (std::size_t i = 0; i < split.train.size(); ++i) {
    X.row(static_cast<Eigen::Index>(i)) = motion_features(split.train[i].video).transpose();
    Y(static_cast<Eigen::Index>(i), split.train[i].label) = 1.0;
  }
  const Eigen::MatrixXd A = X.transpose() * X + 1e-3 * Eigen::MatrixXd::Identity(dim, dim);
  const Eigen::MatrixXd W = A.ldlt().solve(X.transpose() * Y);
  int correct = 0;
  for (const auto& v : split.test) {
    Eigen::VectorXd s = W.transpose() * motion_features(v.video);
    Eigen::Index best;
    s.maxCoeff(&best);
    correct += best == v.label;
  }
  return static_cast<double>(correct) / static_cast<double>(split.test.size());
}

}  // namespace

TEST_CASE("synthetic split arithmetic and balance") {
  SyntheticConfig cfg;
  cfg.frames = 16;
  cfg.height = 64;
  cfg.width = 64;
  const DatasetSplit s = generate_synthetic(cfg);
  CHECK(s.train.size() == 140);
  CHECK(s.val.size() == 30);
  CHECK(s.test.size() == 30);
  std::map<int, int> total, train;
  std::set<std::string> ids;
  for (const auto* part : {&s.train, &s.val, &s.test})
    for (const auto& v : *part) {
      ++total[v.label];
      ids.insert(v.id);
      CHECK(v.video.frames == 16);
    }
  for (const auto& v : s.train) ++train[v.label];
  CHECK(ids.size() == 200);
  for (int c = 0; c < 4; ++c) {
    CHECK(total[c] == 50);
    CHECK(train[c] == 35);
  }
  CHECK(s.class_names == std::vector<std::string>{"up", "down", "grow", "shrink"});
}

TEST_CASE("synthetic generation is deterministic under seed") {
  const auto cfg = small_config();
  const auto a = generate_synthetic(cfg), b = generate_synthetic(cfg);
  REQUIRE(a.train.size() == b.train.size());
  for (std::size_t i = 0; i < a.train.size(); ++i) {
    CHECK(a.train[i].id == b.train[i].id);
    CHECK(a.train[i].video == b.train[i].video);
  }
  auto other = cfg;
  other.seed = 4;
  CHECK(!(generate_synthetic(other).train[0].video == a.train[0].video));
}

TEST_CASE("synthetic config validation") {
  SyntheticConfig cfg;
  CHECK_NOTHROW(cfg.validate(16));
  cfg.num_classes = 1;
  CHECK_THROWS_AS(cfg.validate(16), ConfigError);
  cfg = {};
  cfg.frames = 8;
  try {
    cfg.validate(16);
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(e.key_path == "synthetic.frames");
  }
}

TEST_CASE("noise-free motion is linearly separable from frame differences") {
  SyntheticConfig cfg;
  cfg.noise_std = 0.0;
  for (std::uint64_t seed : {0u, 1u, 2u}) {
    cfg.seed = seed;
    const double acc = linear_probe_accuracy(generate_synthetic(cfg));
    INFO("seed " << seed);
    CHECK(acc > 0.9);
  }
}

TEST_CASE("export and load round trip") {
  const auto split = generate_synthetic(small_config());
  const fs::path root = fresh_dir("roundtrip");
  export_dataset(split, root);
  CHECK(fs::exists(root / "classes.txt"));
  CHECK(fs::exists(root / "videos" / split.train[0].id / "00000.png"));
  std::ifstream idx(root / "index.csv");
  std::string header;
  std::getline(idx, header);
  CHECK(header == "id,split,class,num_frames");

  const auto back = load_clip_dataset(root);
  CHECK(back.class_names == split.class_names);
  for (const char* name : {"train", "val", "test"}) {
    const auto &a = split.by_name(name), &b = back.by_name(name);
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
      CHECK(a[i].id == b[i].id);
      CHECK(a[i].label == b[i].label);
      CHECK(a[i].video == b[i].video);
    }
  }
  fs::remove_all(root);
}

TEST_CASE("loader error paths") {
  const fs::path root = fresh_dir("loader");
  CHECK_THROWS_AS(load_clip_dataset(root), NotFound);

  write_text(root / "classes.txt", "a\nb\n");
  write_text(root / "index.csv", "id,split,class,num_frames\n");
  const auto empty = load_clip_dataset(root);
  CHECK(empty.train.empty());
  CHECK(empty.val.empty());
  CHECK(empty.test.empty());

  write_text(root / "index.csv", "id,split,class,num_frames\nclip_7,train,a,3\n");
  try {
    load_clip_dataset(root);
    FAIL("expected CorruptData");
  } catch (const CorruptData& e) {
    CHECK(std::string(e.what()).find("clip_7") != std::string::npos);
  }

  write_text(root / "index.csv", "id,split,class,num_frames\nclip_7,train,zebra,3\n");
  try {
    load_clip_dataset(root);
    FAIL("expected CorruptData");
  } catch (const CorruptData& e) {
    CHECK(std::string(e.what()).find("index.csv:2") != std::string::npos);
  }

  fs::create_directories(root / "videos" / "clip_7");
  write_text(root / "videos" / "clip_7" / "00000.png", "not a png");
  write_text(root / "index.csv", "id,split,class,num_frames\nclip_7,train,a,1\n");
  try {
    load_clip_dataset(root);
    FAIL("expected CorruptData");
  } catch (const CorruptData& e) {
    CHECK(std::string(e.what()).find("clip_7") != std::string::npos);
  }
  fs::remove_all(root);
}

TEST_CASE("png round trip is exact at 8 bits") {
  RawVideo v(2, 5, 7);
  Rng rng(1);
  for (auto& p : v.pixels) p = static_cast<std::uint8_t>(rng.below(256));
  const fs::path dir = fresh_dir("png");
  write_png(dir / "f.png", v, 1);
  int h = 0, w = 0;
  std::vector<std::uint8_t> rgb;
  read_png(dir / "f.png", h, w, rgb);
  CHECK(h == 5);
  CHECK(w == 7);
  CHECK(std::equal(rgb.begin(), rgb.end(), v.pixels.begin() + static_cast<std::ptrdiff_t>(v.index(1, 0, 0, 0))));
  fs::remove_all(dir);
}

TEST_CASE("batch iteration sizes and epoch coverage") {
  std::vector<LabeledVideo> videos;
  for (int i = 0; i < 140; ++i) videos.push_back({"v" + std::to_string(i), RawVideo(16, 8, 8), i % 4});
  BatchIterator it(videos, 4, 32, AugmentConfig{}, 5, 0, ViewMode::center);
  std::vector<std::size_t> sizes, seen;
  while (auto b = it.next()) {
    sizes.push_back(b->pairs.size());
    seen.insert(seen.end(), b->indices.begin(), b->indices.end());
  }
  CHECK(sizes == std::vector<std::size_t>{32, 32, 32, 32, 12});
  CHECK(seen == it.order());
  std::sort(seen.begin(), seen.end());
  for (std::size_t i = 0; i < 140; ++i) CHECK(seen[i] == i);
  CHECK(epoch_order(140, 5, 0) == it.order());
  CHECK(epoch_order(140, 5, 1) != it.order());
  CHECK(epoch_order(140, 6, 0) != it.order());
}

TEST_CASE("batch iterator yields augmented pairs independent of worker count") {
  SyntheticConfig sc = small_config();
  sc.frames = 16;
  sc.height = 128;
  sc.width = 128;
  const auto split = generate_synthetic(sc);
  AugmentConfig cfg;
  std::vector<std::size_t> sizes;
  std::multiset<std::size_t> seen;
  BatchIterator one(split.train, 4, 5, cfg, 7, 2, ViewMode::two_views, 1);
  BatchIterator two(split.train, 4, 5, cfg, 7, 2, ViewMode::two_views, 2);
  while (auto b = one.next()) {
    auto c = two.next();
    REQUIRE(c);
    sizes.push_back(b->pairs.size());
    for (std::size_t i = 0; i < b->pairs.size(); ++i) {
      seen.insert(b->indices[i]);
      CHECK(b->labels[i] == split.train[b->indices[i]].label);
      CHECK(b->pairs[i].label == one_hot(b->labels[i], 4));
      CHECK(b->pairs[i].x1.data == c->pairs[i].x1.data);
      CHECK(b->pairs[i].x2.data == c->pairs[i].x2.data);
      CHECK(b->pairs[i].x1.size == 112);
    }
  }
  CHECK(!two.next());
  CHECK(sizes == std::vector<std::size_t>{5, 5, 1});
  CHECK(seen.size() == split.train.size());
  CHECK(std::set<std::size_t>(seen.begin(), seen.end()).size() == split.train.size());

  BatchIterator center(split.val, 4, 8, cfg, 7, 0, ViewMode::center);
  const auto b = center.next();
  REQUIRE(b);
  CHECK(b->pairs[0].x2.data.empty());
  CHECK(b->pairs[0].x1.data == center_clip(split.val[b->indices[0]].video, cfg).data);
}
