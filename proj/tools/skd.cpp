// SPDX-License-Identifier: Apache-2.0
// skd: data generation, training, evaluation, mechanism comparison and
// self-checks for self-distilled video action recognition.

#include <cstdio>
#include <cstdlib>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "skd/config.hpp"
#include "skd/errors.hpp"
#include "skd/selfcheck.hpp"

namespace fs = std::filesystem;
using namespace skd;

namespace {

bool deterministic() {
  const char* v = std::getenv("SKD_DETERMINISTIC");
  return v && std::string(v) == "1";
}

/// Single worker and no wall-clock values in outputs.
void apply_environment(TrainConfig& cfg) {
  if (deterministic()) {
    cfg.workers = 1;
    cfg.record_time = false;
  }
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  for (std::string item; std::getline(ss, item, ',');)
    if (!item.empty()) out.push_back(item);
  return out;
}

void print_record(const MetricsRecord& m) {
  std::printf("epoch %3d  loss %.4f (ce %.4f kl %.4f sim %.4f)  val top-1 %.3f  lr %.1e  %.1fs\n", m.epoch,
              m.loss_total, m.loss_ce, m.loss_kl, m.loss_sim, m.val_top1, m.lr, m.seconds);
  std::fflush(stdout);
}

int gen_data(const fs::path& config, const fs::path& out) {
  const RunConfig rc = load_run_config(config);
  const DatasetSplit split = generate_synthetic(rc.synthetic);
  export_dataset(split, out);
  write_resolved_config(rc, out / "config.json");
  std::printf("wrote %zu/%zu/%zu train/val/test videos to %s\n", split.train.size(), split.val.size(),
              split.test.size(), out.c_str());
  return 0;
}

int train_cmd(const fs::path& config, const fs::path& data, const fs::path& out, const fs::path& resume) {
  RunConfig rc = load_run_config(config);
  apply_environment(rc.train);
  rc.train.checkpoint_dir = out / "checkpoints";
  rc.train.metrics_path = out / "metrics.jsonl";
  fs::create_directories(out);
  write_resolved_config(rc, out / "config.json");

  const DatasetSplit split = load_clip_dataset(data);
  std::optional<SiameseModel> teacher;
  if (rc.mechanism == MechanismKind::kd) {
    std::puts("training kd teacher");
    TrainConfig tc = rc.train;
    tc.seed = derive_seed(rc.train.seed, {0x7eac});
    teacher.emplace(train_teacher(rc.teacher, split, tc, rc.augment));
  }
  std::optional<TrainState> state;
  if (!resume.empty()) state = load_checkpoint(resume);
  const RunSetup setup{rc.model, rc.train, rc.augment, rc.mechanism, teacher ? &*teacher : nullptr};
  TrainResult result = train(setup, split, std::move(state), print_record);

  Checkpoint ckpt = model_checkpoint(result.model, rc.train.seed);
  set_eval_view(ckpt, rc.augment);
  write_checkpoint(out / "model.ckpt", ckpt);
  if (!split.test.empty())
    std::printf("test top-1 %.4f\n", top1_accuracy(result.model, split.test, rc.augment));
  return 0;
}

int eval_cmd(const fs::path& checkpoint, const fs::path& data, const std::string& split_name) {
  const Checkpoint ckpt = read_checkpoint(checkpoint);
  SiameseModel model = load_model(ckpt);
  const DatasetSplit split = load_clip_dataset(data);
  if (split.num_classes() != model.spec().num_classes)
    throw IncompatibleCheckpoint("checkpoint has " + std::to_string(model.spec().num_classes) +
                                 " classes, dataset has " + std::to_string(split.num_classes()));
  const auto& videos = split.by_name(split_name);
  std::printf("%s top-1 %.4f (%zu videos)\n", split_name.c_str(), top1_accuracy(model, videos, eval_view(ckpt)),
              videos.size());
  return 0;
}

int compare_cmd(const fs::path& config, const fs::path& data, const std::string& mechanisms,
                const std::string& seeds, const fs::path& out) {
  RunConfig rc = load_run_config(config);
  apply_environment(rc.train);
  std::vector<MechanismKind> kinds;
  for (const auto& m : split_list(mechanisms)) {
    try {
      kinds.push_back(parse_mechanism(m));
    } catch (const InvalidInput& e) {
      throw ConfigError("--mechanisms", e.what());
    }
  }
  std::vector<std::uint64_t> seed_list;
  for (const auto& s : split_list(seeds)) {
    try {
      std::size_t used = 0;
      seed_list.push_back(std::stoull(s, &used));
      if (used != s.size()) throw std::invalid_argument(s);
    } catch (const std::logic_error&) {
      throw ConfigError("--seeds", "'" + s + "' is not a non-negative integer");
    }
  }
  if (kinds.empty()) throw ConfigError("--mechanisms", "no mechanisms given");
  if (seed_list.empty()) throw ConfigError("--seeds", "no seeds given");

  fs::create_directories(out);
  write_resolved_config(rc, out / "config.json");
  const DatasetSplit split = load_clip_dataset(data);
  const ComparisonResult result =
      compare_mechanisms(kinds, seed_list, rc.model, rc.teacher, split, rc.train, rc.augment, [](const RunResult& r) {
        std::printf("%-16s seed %-4llu val %.4f test %.4f  %.0fs\n", to_string(r.record.kind).c_str(),
                    static_cast<unsigned long long>(r.record.seed), r.record.val_top1, r.record.test_top1,
                    r.record.seconds);
        std::fflush(stdout);
      });
  compare_report(result, out);
  std::cout << summary_table(result);
  return 0;
}

int selfcheck_cmd() { return selfcheck::report(selfcheck::run_all(), std::cout) ? 0 : 1; }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Self-distilled video representation learning toolkit"};
  app.require_subcommand(1);

  fs::path config, out, data, checkpoint, resume;
  std::string split_name = "test", mechanisms, seeds;

  auto* gen = app.add_subcommand("gen-data", "Generate the synthetic moving-shapes dataset");
  gen->add_option("--config", config, "Run config (JSON)")->required();
  gen->add_option("--out", out, "Output dataset directory")->required();

  auto* tr = app.add_subcommand("train", "Train one model under the configured mechanism");
  tr->add_option("--config", config, "Run config (JSON)")->required();
  tr->add_option("--data", data, "Dataset directory")->required();
  tr->add_option("--out", out, "Run output directory")->required();
  tr->add_option("--resume", resume, "Training checkpoint to continue from");

  auto* ev = app.add_subcommand("eval", "Top-1 accuracy of a checkpoint on one split");
  ev->add_option("--checkpoint", checkpoint, "Model or training checkpoint")->required();
  ev->add_option("--data", data, "Dataset directory")->required();
  ev->add_option("--split", split_name, "train, val or test")->capture_default_str();

  auto* cmp = app.add_subcommand("compare", "Train several mechanisms over several seeds and report");
  cmp->add_option("--config", config, "Run config (JSON)")->required();
  cmp->add_option("--data", data, "Dataset directory")->required();
  cmp->add_option("--mechanisms", mechanisms, "Comma-separated list")->required();
  cmp->add_option("--seeds", seeds, "Comma-separated list")->required();
  cmp->add_option("--out", out, "Report directory")->required();

  auto* sc = app.add_subcommand("selfcheck", "Run the loss, gradient, augmentation and schedule property suites");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (gen->parsed()) return gen_data(config, out);
    if (tr->parsed()) return train_cmd(config, data, out, resume);
    if (ev->parsed()) return eval_cmd(checkpoint, data, split_name);
    if (cmp->parsed()) return compare_cmd(config, data, mechanisms, seeds, out);
    if (sc->parsed()) return selfcheck_cmd();
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
