#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sys/wait.h>

#include <json.hpp>

#include "skd/config.hpp"
#include "skd/evalbench.hpp"

using namespace skd;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Run {
  int code = -1;
  std::string out, err;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  return {std::istreambuf_iterator<char>(in), {}};
}

const fs::path& work_dir() {
  static const fs::path dir = [] {
    const fs::path d = fs::temp_directory_path() / "skd_cli_test";
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

Run run_cli(const std::string& args, const std::string& env = "") {
  const fs::path out = work_dir() / "stdout.txt", err = work_dir() / "stderr.txt";
  const std::string cmd = env + " '" + std::string(SKD_CLI) + "' " + args + " >'" + out.string() + "' 2>'" +
                          err.string() + "'";
  const int status = std::system(cmd.c_str());
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, slurp(out), slurp(err)};
}

json tiny_config() {
  return json{{"synthetic", {{"videos_per_class", 3}, {"frames", 8}, {"height", 64}, {"width", 64}, {"seed", 1}}},
              {"augment", {{"clip_len", 8}, {"scale_short_edge", 40}, {"crop_size", 32}}},
              {"train", {{"max_epochs", 2}, {"batch_size", 4}, {"seed", 3}}}};
}

fs::path write_config(const std::string& name, const json& j) {
  const fs::path p = work_dir() / name;
  std::ofstream(p) << j.dump(2);
  return p;
}

const fs::path& dataset() {
  static const fs::path data = [] {
    const fs::path d = work_dir() / "data";
    const auto r = run_cli("gen-data --config '" + write_config("gen.json", tiny_config()).string() + "' --out '" +
                           d.string() + "'");
    REQUIRE(r.code == 0);
    return d;
  }();
  return data;
}

}  // namespace

TEST_CASE("cli: selfcheck passes on a correct build") {
  const auto r = run_cli("selfcheck");
  CHECK(r.code == 0);
  CHECK(r.out.find("FAIL") == std::string::npos);
  CHECK(r.out.find("PASS") != std::string::npos);
}

TEST_CASE("cli: usage and config errors exit 2") {
  CHECK(run_cli("").code == 2);
  CHECK(run_cli("train --config x.json").code == 2);

  json bad = tiny_config();
  bad["train"]["lr"] = -1.0;
  auto r = run_cli("train --config '" + write_config("bad_lr.json", bad).string() + "' --data '" +
                   dataset().string() + "' --out '" + (work_dir() / "bad").string() + "'");
  CHECK(r.code == 2);
  CHECK(r.err.find("train.lr") != std::string::npos);

  json unknown = tiny_config();
  unknown["augment"]["sharpness"] = 1;
  r = run_cli("gen-data --config '" + write_config("unknown.json", unknown).string() + "' --out '" +
              (work_dir() / "unused").string() + "'");
  CHECK(r.code == 2);
  CHECK(r.err.find("augment.sharpness") != std::string::npos);

  json mismatch = tiny_config();
  mismatch["model"] = {{"num_classes", 5}};
  r = run_cli("gen-data --config '" + write_config("mismatch.json", mismatch).string() + "' --out '" +
              (work_dir() / "unused").string() + "'");
  CHECK(r.code == 2);
  CHECK(r.err.find("model.num_classes") != std::string::npos);
}

TEST_CASE("cli: runtime failures exit 1") {
  const auto r = run_cli("eval --checkpoint '" + (work_dir() / "nope.ckpt").string() + "' --data '" +
                         dataset().string() + "'");
  CHECK(r.code == 1);
  CHECK(!r.err.empty());
}

TEST_CASE("cli: train with max_epochs = 0 writes an empty metrics file") {
  json cfg = tiny_config();
  cfg["train"]["max_epochs"] = 0;
  const fs::path out = work_dir() / "zero";
  const auto r = run_cli("train --config '" + write_config("zero.json", cfg).string() + "' --data '" +
                         dataset().string() + "' --out '" + out.string() + "'");
  CHECK(r.code == 0);
  REQUIRE(fs::exists(out / "metrics.jsonl"));
  CHECK(fs::file_size(out / "metrics.jsonl") == 0);
}

TEST_CASE("cli: train, eval and config echo") {
  const fs::path out = work_dir() / "run", again = work_dir() / "run_again";
  const auto r = run_cli("train --config '" + write_config("run.json", tiny_config()).string() + "' --data '" +
                             dataset().string() + "' --out '" + out.string() + "'",
                         "SKD_DETERMINISTIC=1");
  REQUIRE(r.code == 0);
  CHECK(fs::exists(out / "model.ckpt"));
  CHECK(fs::exists(out / "checkpoints" / "last.ckpt"));

  // The echoed config has every default filled in and reproduces the run.
  const json echoed = json::parse(slurp(out / "config.json"));
  CHECK(echoed["train"]["lr"] == 0.01);
  CHECK(echoed["train"]["hp"]["tau"] == 10.0);
  CHECK(echoed["augment"]["op_probability"] == 0.5);
  CHECK(to_json(parse_run_config(echoed)) == echoed);
  const auto r2 = run_cli("train --config '" + (out / "config.json").string() + "' --data '" + dataset().string() +
                              "' --out '" + again.string() + "'",
                          "SKD_DETERMINISTIC=1");
  REQUIRE(r2.code == 0);
  CHECK(slurp(out / "metrics.jsonl") == slurp(again / "metrics.jsonl"));

  const auto lines = slurp(out / "metrics.jsonl");
  CHECK(std::count(lines.begin(), lines.end(), '\n') == 2);

  const auto ev = run_cli("eval --checkpoint '" + (out / "model.ckpt").string() + "' --data '" +
                          dataset().string() + "' --split val");
  CHECK(ev.code == 0);
  CHECK(ev.out.find("val top-1") != std::string::npos);
  const auto ev_train = run_cli("eval --checkpoint '" + (out / "checkpoints" / "last.ckpt").string() + "' --data '" +
                                dataset().string() + "'");
  CHECK(ev_train.code == 0);
  CHECK(ev_train.out.find("test top-1") != std::string::npos);
}

TEST_CASE("cli: compare aggregates runs per mechanism") {
  json cfg = tiny_config();
  cfg["train"]["max_epochs"] = 1;
  const fs::path out = work_dir() / "compare";
  const auto r = run_cli("compare --config '" + write_config("cmp.json", cfg).string() + "' --data '" +
                         dataset().string() + "' --mechanisms skd_srl,baseline --seeds 1,2,3 --out '" +
                         out.string() + "'");
  REQUIRE(r.code == 0);
  const auto result = read_report_csv(out / "report.csv");
  CHECK(result.runs.size() == 6);
  const auto rows = result.summary();
  REQUIRE(rows.size() == 2);
  CHECK(rows[0].kind == MechanismKind::baseline);
  CHECK(rows[1].kind == MechanismKind::skd_srl);
  CHECK(rows[0].seeds.size() == 3);
  CHECK(fs::exists(out / "summary.txt"));
  CHECK(fs::exists(out / "summary.json"));

  CHECK(run_cli("compare --config '" + (work_dir() / "cmp.json").string() + "' --data '" + dataset().string() +
                "' --mechanisms mixup --seeds 1 --out '" + out.string() + "'")
            .code == 2);
}
