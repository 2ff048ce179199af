// Command-line driver: gen-data / train / eval / ablation, built on the
// public C API only.
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "tsnet.h"

namespace {

struct ConfigHandle {
  tsnet_config* p = nullptr;
  ~ConfigHandle() { tsnet_config_destroy(p); }
};

[[noreturn]] void die(int code, const std::string& context) {
  std::fprintf(stderr, "error: %s: %s\n", context.c_str(), tsnet_last_error());
  std::exit(code == TSNET_OK ? 1 : code);
}

void check(int code, const std::string& context) {
  if (code != TSNET_OK) die(code, context);
}

ConfigHandle make_config(const std::string& config_path) {
  ConfigHandle h;
  if (config_path.empty())
    check(tsnet_config_create(&h.p), "creating config");
  else
    check(tsnet_config_load(config_path.c_str(), &h.p), "loading config '" + config_path + "'");
  return h;
}

void set_key(const ConfigHandle& h, const std::string& key, const std::string& value) {
  check(tsnet_config_set(h.p, key.c_str(), value.c_str()), "setting " + key);
}

unsigned config_hash(const ConfigHandle& h) {
  unsigned hash = 0;
  check(tsnet_config_hash(h.p, &hash), "hashing config");
  return hash;
}

struct CellResult {
  std::string label;
  std::string detail;
  int runs = 0;
  double mean = 0, stddev = 0;
  unsigned hash = 0;
};

// mean +- sample std of best-validation error over `runs` seeded runs
CellResult run_cell(const std::string& label, const std::string& detail,
                    const std::string& config_path,
                    const std::vector<std::pair<std::string, std::string>>& overrides,
                    const std::string& cache_dir, const std::string& out_dir, int runs,
                    unsigned long long base_seed) {
  CellResult cell;
  cell.label = label;
  cell.detail = detail;
  cell.runs = runs;
  std::vector<double> errs;
  for (int r = 0; r < runs; ++r) {
    auto cfg = make_config(config_path);
    for (const auto& [k, v] : overrides) set_key(cfg, k, v);
    set_key(cfg, "train.seed", std::to_string(base_seed + static_cast<unsigned long long>(r)));
    if (r == 0) cell.hash = config_hash(cfg);
    std::string run_dir = out_dir + "/" + label + "/run" + std::to_string(r);
    tsnet_train_result res{};
    check(tsnet_train(cfg.p, cache_dir.c_str(), run_dir.c_str(), nullptr, &res),
          "training cell " + label + " run " + std::to_string(r));
    errs.push_back(res.best_val_err95);
    std::printf("  %-22s run %d/%d: val 95%%ErrRate = %.2f%%\n", label.c_str(), r + 1, runs,
                res.best_val_err95);
    std::fflush(stdout);
  }
  double sum = 0;
  for (double e : errs) sum += e;
  cell.mean = sum / errs.size();
  double sq = 0;
  for (double e : errs) sq += (e - cell.mean) * (e - cell.mean);
  cell.stddev = errs.size() > 1 ? std::sqrt(sq / (errs.size() - 1)) : 0.0;
  return cell;
}

void print_and_save_cells(const std::string& title, const std::vector<CellResult>& cells,
                          const std::string& csv_path) {
  std::printf("\n%s (val 95%%ErrRate, mean +- std)\n", title.c_str());
  std::printf("  %-22s %-14s %-18s %s\n", "cell", "loss mode", "err (%)", "config");
  for (const auto& c : cells)
    std::printf("  %-22s %-14s %6.2f +- %-8.2f cfg#%08x\n", c.label.c_str(), c.detail.c_str(),
                c.mean, c.stddev, c.hash);
  std::ofstream csv(csv_path);
  csv << "cell,detail,runs,mean_err95,std_err95,config_hash\n";
  for (const auto& c : cells) {
    char hash[16];
    std::snprintf(hash, sizeof hash, "%08x", c.hash);
    csv << c.label << "," << c.detail << "," << c.runs << "," << c.mean << "," << c.stddev << ","
        << hash << "\n";
  }
  std::printf("summary written to %s\n", csv_path.c_str());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multimodal patch-matching toolkit"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(tsnet_version()));

  std::string config_path, out_dir = "out", cache_dir = "out/data";
  unsigned long long seed = 0;
  bool seed_given = false;

  // --- gen-data ---
  auto* gen = app.add_subcommand("gen-data", "Build pair caches and the split manifest");
  std::vector<std::string> synth_args;
  std::string from_dir;
  gen->add_option("--synth", synth_args,
                  "Synthetic source: N_IMAGES SIZE TRANSFORM [SEED] "
                  "(transform: invert | edge | blurgamma)")
      ->expected(3, 4);
  gen->add_option("--from", from_dir, "Directory of aligned pairs (<id>/a.png, <id>/b.png)");
  gen->add_option("--config", config_path, "Experiment config file");
  gen->add_option("--out", out_dir, "Output directory");
  gen->add_option("--seed", seed, "Dataset split/generation seed")->each([&](const std::string&) {
    seed_given = true;
  });

  // --- train ---
  auto* train = app.add_subcommand("train", "Train the configured model variant");
  std::string resume_path;
  train->add_option("--config", config_path, "Experiment config file");
  train->add_option("--data", cache_dir, "Directory with train/test/val.tspm caches");
  train->add_option("--out", out_dir, "Output directory for checkpoints and metrics");
  train->add_option("--seed", seed, "Training seed override")->each([&](const std::string&) {
    seed_given = true;
  });
  train->add_option("--resume", resume_path, "Checkpoint to resume from");

  // --- eval ---
  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on one split");
  std::string checkpoint_path, split = "test";
  eval->add_option("checkpoint", checkpoint_path, "Checkpoint file (.tsck)")->required();
  eval->add_option("--data", cache_dir, "Directory with train/test/val.tspm caches");
  eval->add_option("--split", split, "Split to evaluate: train | test | val");
  eval->add_option("--out", out_dir, "Output directory for score/curve CSVs");

  // --- ablation ---
  auto* abl = app.add_subcommand("ablation", "Run a predefined ablation grid");
  std::string table;
  int runs = 3;
  abl->add_option("table", table, "Grid: fusion | models")
      ->required()
      ->check(CLI::IsMember({"fusion", "models"}));
  abl->add_option("--config", config_path, "Base experiment config file");
  abl->add_option("--data", cache_dir, "Directory with train/test/val.tspm caches");
  abl->add_option("--out", out_dir, "Output directory");
  abl->add_option("--runs", runs, "Seeded runs per cell")->check(CLI::PositiveNumber);
  abl->add_option("--seed", seed, "Base seed")->each([&](const std::string&) {
    seed_given = true;
  });

  CLI11_PARSE(app, argc, argv);

  if (gen->parsed()) {
    if (synth_args.empty() == from_dir.empty()) {
      std::fprintf(stderr, "error: gen-data needs exactly one of --synth or --from\n");
      return 1;
    }
    auto cfg = make_config(config_path);
    if (!synth_args.empty()) {
      set_key(cfg, "data.dir", "");
      set_key(cfg, "data.synth_images", synth_args[0]);
      set_key(cfg, "data.synth_size", synth_args[1]);
      set_key(cfg, "data.synth_transform", synth_args[2]);
      if (synth_args.size() == 4) set_key(cfg, "data.seed", synth_args[3]);
    } else {
      set_key(cfg, "data.dir", from_dir);
    }
    if (seed_given) set_key(cfg, "data.seed", std::to_string(seed));
    tsnet_data_counts counts{};
    check(tsnet_gen_data(cfg.p, out_dir.c_str(), &counts), "generating data");
    std::printf("split        images   pairs\n");
    std::printf("Train (70%%)  %6lld  %6lld\n", counts.train_images, counts.train_pairs);
    std::printf("Test (20%%)   %6lld  %6lld\n", counts.test_images, counts.test_pairs);
    std::printf("Validation (10%%) %2lld  %6lld\n", counts.val_images, counts.val_pairs);
    std::printf("cache and splits.tsv written to %s\n", out_dir.c_str());
    return 0;
  }

  if (train->parsed()) {
    auto cfg = make_config(config_path);
    if (seed_given) set_key(cfg, "train.seed", std::to_string(seed));
    tsnet_train_result res{};
    check(tsnet_train(cfg.p, cache_dir.c_str(), out_dir.c_str(),
                      resume_path.empty() ? nullptr : resume_path.c_str(), &res),
          "training");
    std::printf("best val 95%%ErrRate = %.2f%% (epoch %d), final train loss = %.4f\n",
                res.best_val_err95, res.best_epoch, res.final_train_loss);
    std::printf("checkpoints and metrics.csv written to %s (cfg#%08x)\n", out_dir.c_str(),
                config_hash(cfg));
    return 0;
  }

  if (eval->parsed()) {
    double err = 0;
    check(tsnet_eval(checkpoint_path.c_str(), cache_dir.c_str(), split.c_str(), out_dir.c_str(),
                     &err),
          "evaluating");
    std::printf("%s 95%%ErrRate = %.2f%%\n", split.c_str(), err);
    std::printf("score and curve CSVs written to %s\n", out_dir.c_str());
    return 0;
  }

  // ablation
  unsigned long long base_seed = seed_given ? seed : 1;
  using Overrides = std::vector<std::pair<std::string, std::string>>;
  std::vector<CellResult> cells;
  if (table == "fusion") {
    // fusion-point grid: FC3 (standard), FC2, FC1, feature tower, plus the
    // parameter-matched Siamese baseline
    struct Cell {
      const char* label;
      const char* kind;
      const char* mode;
    };
    const Cell grid[] = {
        {"FC3_OneEntropy", "TSNet", "OneEntropy"},
        {"FC3_ThreeEntropy", "TSNet", "ThreeEntropy"},
        {"FC2_OneEntropy", "TSNetFusionFC2", "OneEntropy"},
        {"FC2_ThreeEntropy", "TSNetFusionFC2", "ThreeEntropy"},
        {"FC1_OneEntropy", "TSNetFusionFC1", "OneEntropy"},
        {"FC1_ThreeEntropy", "TSNetFusionFC1", "ThreeEntropy"},
        {"FeatureTower", "TSNetFusionTower", "OneEntropy"},
        {"SStar", "SStar", "OneEntropy"},
    };
    for (const Cell& c : grid) {
      Overrides ov{{"model.kind", c.kind}, {"model.loss_mode", c.mode}};
      cells.push_back(
          run_cell(c.label, c.mode, config_path, ov, cache_dir, out_dir, runs, base_seed));
    }
    print_and_save_cells("Fusion-point ablation", cells, out_dir + "/ablation_fusion.csv");
  } else {
    // model comparison: each variant without / with the contrastive terms
    struct Row {
      const char* label;
      const char* kind;
      const char* lambda;
      const char* beta;
    };
    const Row grid[] = {
        {"S", "S", "0", "0"},           {"PS", "PS", "0", "0"},
        {"TSNet", "TSNet", "0", "0"},   {"S+C", "S", "0.01", "0.01"},
        {"PS+C", "PS", "0.01", "0.01"}, {"TSNet+C", "TSNet", "0.01", "0.01"},
    };
    for (const Row& r : grid) {
      Overrides ov{{"model.kind", r.kind}, {"loss.lambda", r.lambda}, {"loss.beta", r.beta}};
      std::string detail = std::string("lambda=beta=") + r.lambda;
      cells.push_back(
          run_cell(r.label, detail, config_path, ov, cache_dir, out_dir, runs, base_seed));
    }
    print_and_save_cells("Model comparison", cells, out_dir + "/ablation_models.csv");
  }
  return 0;
}
