#pragma once

#include <cstdint>
#include <string>

#include "ts/model.hpp"
#include "ts/train.hpp"

namespace ts {

// Flat key-value experiment configuration (one `key = value` per line,
// `#` comments). Unknown keys are rejected with their line number.
struct ExperimentConfig {
  // model
  std::string model_kind = "S";
  std::string model_loss_mode = "OneEntropy";
  int metric_hidden = 512;
  // loss
  double loss_lambda = 1e-2;
  double loss_beta = 1e-2;
  double loss_q = 50.0;
  bool loss_normalize_features = false;
  // train
  double train_lr = 1e-3;
  double train_momentum = 0.95;
  double train_l2 = 1e-3;
  int train_batch_size = 32;
  int train_epochs = 0;  // 0 = auto: 40 for synthetic data, 150 for a real dataset
  uint64_t train_seed = 0;
  // data: either a dataset directory or synthetic generator parameters
  std::string data_dir;
  int data_synth_images = 40;
  int data_synth_size = 256;
  std::string data_synth_transform = "edge";
  uint64_t data_seed = 7;

  static ExperimentConfig parse_file(const std::string& path);
  static ExperimentConfig parse_text(const std::string& text);
  std::string serialize() const;
  void save(const std::string& path) const;

  void set(const std::string& key, const std::string& value);
  std::string get(const std::string& key) const;

  VariantKind kind() const { return variant_from_name(model_kind); }
  LossMode loss_mode() const { return loss_mode_from_name(model_loss_mode); }
  int resolved_epochs() const { return train_epochs > 0 ? train_epochs : (data_dir.empty() ? 40 : 150); }
  TrainConfig train_config() const;

  // stable hash of the serialized config, for reproducibility annotations
  uint32_t hash() const;
};

}  // namespace ts
