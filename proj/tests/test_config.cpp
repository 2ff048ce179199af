#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>

#include "ts/config.hpp"

namespace fs = std::filesystem;

TEST_CASE("defaults match the published hyperparameters") {
  ts::ExperimentConfig cfg;
  CHECK(cfg.model_kind == "S");
  CHECK(cfg.model_loss_mode == "OneEntropy");
  CHECK(cfg.metric_hidden == 512);
  CHECK(cfg.loss_lambda == 1e-2);
  CHECK(cfg.loss_beta == 1e-2);
  CHECK(cfg.loss_q == 50.0);
  CHECK_FALSE(cfg.loss_normalize_features);
  CHECK(cfg.train_lr == 1e-3);
  CHECK(cfg.train_momentum == 0.95);
  CHECK(cfg.train_l2 == 1e-3);
  CHECK(cfg.train_batch_size == 32);
  CHECK(cfg.data_synth_images == 40);
  CHECK(cfg.data_synth_size == 256);
}

TEST_CASE("parse: comments, whitespace, line numbers in errors") {
  auto cfg = ts::ExperimentConfig::parse_text(
      "# experiment\n"
      "model.kind = TSNet\n"
      "  train.lr   =  0.01  # inline comment\n"
      "\n"
      "loss.q=25\n");
  CHECK(cfg.model_kind == "TSNet");
  CHECK(cfg.train_lr == 0.01);
  CHECK(cfg.loss_q == 25.0);

  try {
    ts::ExperimentConfig::parse_text("model.kind = S\nnope.key = 1\n");
    FAIL("expected ConfigError");
  } catch (const ts::ConfigError& e) {
    CHECK(std::string(e.what()).find("line 2") != std::string::npos);
    CHECK(std::string(e.what()).find("nope.key") != std::string::npos);
  }
  CHECK_THROWS_AS(ts::ExperimentConfig::parse_text("model.kind\n"), ts::ConfigError);
  CHECK_THROWS_AS(ts::ExperimentConfig::parse_text("train.lr = fast\n"), ts::ConfigError);
  CHECK_THROWS_AS(ts::ExperimentConfig::parse_text("model.kind = Quad\n"), ts::ConfigError);
  CHECK_THROWS_AS(ts::ExperimentConfig::parse_text("loss.normalize_features = maybe\n"),
                  ts::ConfigError);
}

TEST_CASE("serialize round-trips every key") {
  ts::ExperimentConfig cfg;
  cfg.model_kind = "TSNetFusionFC2";
  cfg.model_loss_mode = "ThreeEntropy";
  cfg.loss_lambda = 0.5;
  cfg.loss_normalize_features = true;
  cfg.train_epochs = 17;
  cfg.train_seed = 987654321;
  cfg.data_dir = "/some/dataset";
  cfg.data_synth_transform = "blurgamma";
  auto text = cfg.serialize();
  auto back = ts::ExperimentConfig::parse_text(text);
  CHECK(back.serialize() == text);
  CHECK(back.model_kind == "TSNetFusionFC2");
  CHECK(back.loss_lambda == 0.5);
  CHECK(back.loss_normalize_features);
  CHECK(back.train_epochs == 17);
  CHECK(back.train_seed == 987654321);
  CHECK(back.data_dir == "/some/dataset");
}

TEST_CASE("save and parse_file") {
  auto path = (fs::temp_directory_path() / "tsnet_cfg_test.conf").string();
  ts::ExperimentConfig cfg;
  cfg.train_seed = 5;
  cfg.save(path);
  auto back = ts::ExperimentConfig::parse_file(path);
  CHECK(back.train_seed == 5);
  fs::remove(path);
  CHECK_THROWS_AS(ts::ExperimentConfig::parse_file(path), ts::ConfigError);
}

TEST_CASE("epoch resolution and train config mapping") {
  ts::ExperimentConfig cfg;
  CHECK(cfg.train_epochs == 0);
  CHECK(cfg.resolved_epochs() == 40);  // synthetic default
  cfg.data_dir = "/data";
  CHECK(cfg.resolved_epochs() == 150);  // real dataset default
  cfg.train_epochs = 7;
  CHECK(cfg.resolved_epochs() == 7);

  auto tc = cfg.train_config();
  CHECK(tc.epochs == 7);
  CHECK(tc.lr == cfg.train_lr);
  CHECK(tc.momentum == 0.95);
  CHECK(tc.loss.q == 50.0);
}

TEST_CASE("config hash tracks content") {
  ts::ExperimentConfig a, b;
  CHECK(a.hash() == b.hash());
  b.train_seed = 1;
  CHECK(a.hash() != b.hash());
}
