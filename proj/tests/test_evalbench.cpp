#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>

#include "skd/errors.hpp"
#include "skd/evalbench.hpp"

using namespace skd;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  return {std::istreambuf_iterator<char>(in), {}};
}

ComparisonResult sample_result() {
  ComparisonResult r;
  // Deliberately out of presentation order.
  r.runs.push_back({MechanismKind::skd_srl, 1, 0.9, 0.8, 12.5});
  r.runs.push_back({MechanismKind::baseline, 1, 0.5, 0.4, 3.25});
  r.runs.push_back({MechanismKind::skd_srl, 2, 0.7, 0.6, 11.0});
  r.runs.push_back({MechanismKind::baseline, 2, 0.3, 1.0 / 3.0, 3.0});
  return r;
}

}  // namespace

TEST_CASE("top-1 from predictions") {
  const std::vector<int> labels{0, 1, 2, 3};
  CHECK(top1_from_predictions(std::vector<int>{0, 1, 2, 3}, labels) == 1.0);
  CHECK(top1_from_predictions(std::vector<int>{1, 2, 3, 0}, labels) == 0.0);
  CHECK(top1_from_predictions(std::vector<int>{0, 1, 2, 0}, labels) == 0.75);
  CHECK_THROWS(top1_from_predictions(std::vector<int>{0}, labels));
}

TEST_CASE("top-1 accuracy is deterministic and order invariant") {
  SyntheticConfig sc;
  sc.videos_per_class = 3;
  sc.frames = 8;
  sc.height = 64;
  sc.width = 64;
  auto split = generate_synthetic(sc);
  AugmentConfig cfg;
  cfg.clip_len = 8;
  cfg.scale_short_edge = 40;
  cfg.crop_size = 32;
  SiameseModel m = build_model(ModelSpec::defaults(EncoderArch::toy3d, 4), 3);
  const double a = top1_accuracy(m, split.train, cfg);
  CHECK(top1_accuracy(m, split.train, cfg, 3) == a);
  auto reversed = split.train;
  std::reverse(reversed.begin(), reversed.end());
  CHECK(top1_accuracy(m, reversed, cfg) == a);
  const auto pred = predict_labels(m, split.train, cfg);
  std::vector<int> labels;
  for (const auto& v : split.train) labels.push_back(v.label);
  CHECK(top1_from_predictions(pred, labels) == a);
}

TEST_CASE("mechanism spec requires a teacher exactly for kd") {
  for (auto kind : kMechanismOrder) {
    MechanismSpec with{kind, default_teacher_spec(4)}, without{kind, std::nullopt};
    if (kind == MechanismKind::kd) {
      CHECK_NOTHROW(with.validate());
      CHECK_THROWS_AS(without.validate(), ConfigError);
    } else {
      CHECK_NOTHROW(without.validate());
      CHECK_THROWS_AS(with.validate(), ConfigError);
    }
  }
  CHECK(default_teacher_spec(4).repr_dim > ModelSpec::defaults(EncoderArch::toy3d, 4).repr_dim);
}

TEST_CASE("mechanism names round trip") {
  for (auto kind : kMechanismOrder) CHECK(parse_mechanism(to_string(kind)) == kind);
  CHECK_THROWS(parse_mechanism("mixup"));
}

TEST_CASE("published reference column") {
  const double expect[] = {46.5, 55.6, 61.4, 66.7, 69.8};
  for (std::size_t i = 0; i < kMechanismOrder.size(); ++i)
    CHECK(published_ucf101_top1(kMechanismOrder[i]) == expect[i]);
}

TEST_CASE("summary rows are in fixed order with sample std") {
  const auto rows = sample_result().summary();
  REQUIRE(rows.size() == 2);
  CHECK(rows[0].kind == MechanismKind::baseline);
  CHECK(rows[1].kind == MechanismKind::skd_srl);
  CHECK(rows[1].val_mean == doctest::Approx(0.8));
  CHECK(rows[1].val_std == doctest::Approx(std::sqrt(0.02)));
  CHECK(rows[1].seeds == std::vector<std::uint64_t>{1, 2});
  CHECK(rows[1].seconds == doctest::Approx(23.5));

  ComparisonResult one;
  one.runs.push_back({MechanismKind::kd, 7, 0.5, 0.25, 1.0});
  const auto single = one.summary();
  REQUIRE(single.size() == 1);
  CHECK(single[0].val_std == 0.0);
  CHECK(single[0].test_std == 0.0);

  ComparisonResult shuffled = sample_result();
  std::reverse(shuffled.runs.begin(), shuffled.runs.end());
  CHECK(summary_table(shuffled) == summary_table(sample_result()));
}

TEST_CASE("report files and CSV round trip") {
  const fs::path dir = fs::temp_directory_path() / "skd_eval_report";
  fs::remove_all(dir);
  const auto r = sample_result();
  compare_report(r, dir);
  const std::string csv = slurp(dir / "report.csv");
  CHECK(csv.rfind("mechanism,seed,val_top1,test_top1,seconds\n", 0) == 0);
  CHECK(csv.find("baseline,1,") < csv.find("skd_srl,1,"));

  const auto back = read_report_csv(dir / "report.csv");
  CHECK(back.summary().size() == 2);
  auto sorted = [](std::vector<RunRecord> v) {
    std::sort(v.begin(), v.end(), [](const RunRecord& a, const RunRecord& b) {
      return std::pair(static_cast<int>(a.kind), a.seed) < std::pair(static_cast<int>(b.kind), b.seed);
    });
    return v;
  };
  CHECK(sorted(back.runs) == sorted(r.runs));

  const std::string table = slurp(dir / "summary.txt");
  CHECK(table.find("69.8") != std::string::npos);
  CHECK(table.find("not reproduced") != std::string::npos);
  const auto j = nlohmann::json::parse(slurp(dir / "summary.json"));
  CHECK(j.dump().find("reference_ucf101_top1_not_reproduced") != std::string::npos);
  fs::remove_all(dir);
}
