#pragma once

#include <limits>
#include <string>
#include <vector>

#include "ts/data.hpp"
#include "ts/model.hpp"

namespace ts {

struct TrainConfig {
  double lr = 1e-3;
  double momentum = 0.95;
  double l2 = 1e-3;
  int batch_size = 32;
  int epochs = 40;  // desk-scale default; >= 150 for real datasets
  uint64_t seed = 0;
  LossWeights loss;

  void validate() const {
    if (!(lr > 0) || !(momentum >= 0) || !(l2 >= 0) || batch_size < 1 || epochs < 1)
      throw ConfigError("train config fields must be positive");
    loss.validate();
  }
};

// g' = g + l2*w; v <- momentum*v + g'; w <- w - lr*v. Gradients are consumed
// (zeroed) by the step.
void sgd_momentum_step(NamedParams<float>& params, std::vector<std::vector<float>>& velocities,
                       const TrainConfig& cfg);

// Match confidence: softmax probability of the positive class.
float score_pair(const Model<float>& model, const PatchPair& pair);

// Batched scoring; thread count capped by TSNET_THREADS (forward-only).
std::vector<float> score_pairs(const Model<float>& model, const std::vector<PatchPair>& pairs);

// Percentage of negatives admitted at the largest threshold detecting >= 95%
// of positives (threshold = the ceil(0.95 n)-th largest positive score; ties
// at the threshold count as detected / false respectively).
double err_rate_95(const std::vector<float>& pos_scores, const std::vector<float>& neg_scores);
double err_rate_95_threshold(const std::vector<float>& pos_scores);

struct EvalReport {
  int n_pos = 0, n_neg = 0;
  std::vector<float> scores;  // parallel to the evaluated pair list
  std::vector<int> labels;
  double threshold_at_95tpr = 0;
  double err_rate_95 = 0;                          // percentage in [0, 100]
  std::vector<std::pair<double, double>> curve;    // (tpr, fpr) samples
};

EvalReport evaluate(const Model<float>& model, const std::vector<PatchPair>& pairs);
void write_eval_csvs(const EvalReport& rep, const std::string& out_dir, const std::string& tag);

// --- checkpointing (magic "TSCK") ---
struct Checkpoint {
  VariantKind kind = VariantKind::S;
  LossMode loss_mode = LossMode::OneEntropy;
  double width_mult = 1.0, bottleneck_mult = 1.0;
  int metric_hidden = 512;
  int epoch = 0;
  double best_val_err = 101.0;
  ModalityStats stats;
  std::string rng_state;
  std::vector<std::string> param_names;
  std::vector<Shape> param_shapes;
  std::vector<std::vector<float>> param_values;
  std::vector<std::vector<float>> velocities;
};

void save_checkpoint(const std::string& path, const Checkpoint& ck);
Checkpoint load_checkpoint(const std::string& path);

Checkpoint snapshot(Model<float>& model, const std::vector<std::vector<float>>& velocities,
                    int epoch, double best_val_err, const ModalityStats& stats,
                    const std::string& rng_state);
Model<float> model_from_checkpoint(const Checkpoint& ck);

// --- training loop ---
struct EpochLog {
  int epoch = 0;
  double total = 0;
  // nan marks an absent component in the log
  double tsnet_en = std::numeric_limits<double>::quiet_NaN();
  double siam_en = std::numeric_limits<double>::quiet_NaN();
  double pseudo_en = std::numeric_limits<double>::quiet_NaN();
  double siam_con = std::numeric_limits<double>::quiet_NaN();
  double pseudo_con = std::numeric_limits<double>::quiet_NaN();
  double val_err95 = 0;
};

std::string metrics_csv_header();
std::string metrics_csv_row(const EpochLog& log);

struct TrainResult {
  double best_val_err = 101.0;
  int best_epoch = 0;
  double final_train_loss = 0;
  std::vector<EpochLog> log;
  std::string best_checkpoint_path, last_checkpoint_path, metrics_path;
};

// Trains in shuffled mini-batches; logs every loss component and the
// validation 95% error rate per epoch; retains the best-on-validation
// checkpoint. Aborts with a diagnostic on non-finite loss. resume_path, when
// nonempty, restores a previous run's full state (params, velocities, rng,
// epoch counter) for bit-identical continuation.
TrainResult train(Model<float>& model, const std::vector<PatchPair>& train_pairs,
                  const std::vector<PatchPair>& val_pairs, const ModalityStats& stats,
                  const TrainConfig& cfg, const std::string& out_dir,
                  const std::string& resume_path = "");

}  // namespace ts
