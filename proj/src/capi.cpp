#include "tsnet.h"

#include <cstring>
#include <filesystem>
#include <string>

#include "ts/config.hpp"
#include "ts/data.hpp"
#include "ts/train.hpp"

namespace fs = std::filesystem;

struct tsnet_config {
  ts::ExperimentConfig cfg;
};

struct tsnet_model {
  ts::Model<float> model;
  ts::ModalityStats stats;
};

namespace {

thread_local std::string g_last_error;

int fail(int code, const std::string& msg) {
  g_last_error = msg;
  return code;
}

template <typename Fn>
int guarded(Fn&& fn) {
  try {
    fn();
    g_last_error.clear();
    return TSNET_OK;
  } catch (const ts::DimensionError& e) {
    return fail(TSNET_ERR_DIMENSION, e.what());
  } catch (const ts::ConfigError& e) {
    return fail(TSNET_ERR_CONFIG, e.what());
  } catch (const ts::IntegrityError& e) {
    return fail(TSNET_ERR_INTEGRITY, e.what());
  } catch (const ts::IngestionError& e) {
    return fail(TSNET_ERR_INGESTION, e.what());
  } catch (const std::exception& e) {
    return fail(TSNET_ERR_RUNTIME, e.what());
  }
}

std::string cache_path(const std::string& dir, ts::Split s) {
  return dir + "/" + ts::split_name(s) + ".tspm";
}

std::vector<ts::AlignedImagePair> load_source_images(const ts::ExperimentConfig& cfg) {
  if (!cfg.data_dir.empty()) return ts::load_image_pairs(cfg.data_dir);
  return ts::synth_dataset(cfg.data_synth_images, cfg.data_synth_size,
                           ts::transform_from_name(cfg.data_synth_transform), cfg.data_seed);
}

}  // namespace

extern "C" {

const char* tsnet_version(void) { return "1.0.0"; }

const char* tsnet_last_error(void) { return g_last_error.c_str(); }

int tsnet_config_create(tsnet_config** out) {
  if (!out) return fail(TSNET_ERR_INVALID_ARG, "null output handle");
  return guarded([&]() { *out = new tsnet_config{}; });
}

int tsnet_config_load(const char* path, tsnet_config** out) {
  if (!path || !out) return fail(TSNET_ERR_INVALID_ARG, "null path or output handle");
  return guarded([&]() { *out = new tsnet_config{ts::ExperimentConfig::parse_file(path)}; });
}

int tsnet_config_set(tsnet_config* cfg, const char* key, const char* value) {
  if (!cfg || !key || !value) return fail(TSNET_ERR_INVALID_ARG, "null config, key, or value");
  return guarded([&]() { cfg->cfg.set(key, value); });
}

int tsnet_config_get(const tsnet_config* cfg, const char* key, char* buf, size_t buflen) {
  if (!cfg || !key || !buf || buflen == 0)
    return fail(TSNET_ERR_INVALID_ARG, "null config, key, or undersized buffer");
  return guarded([&]() {
    std::string v = cfg->cfg.get(key);
    size_t n = std::min(buflen - 1, v.size());
    std::memcpy(buf, v.data(), n);
    buf[n] = '\0';
  });
}

int tsnet_config_save(const tsnet_config* cfg, const char* path) {
  if (!cfg || !path) return fail(TSNET_ERR_INVALID_ARG, "null config or path");
  return guarded([&]() { cfg->cfg.save(path); });
}

int tsnet_config_hash(const tsnet_config* cfg, unsigned* out) {
  if (!cfg || !out) return fail(TSNET_ERR_INVALID_ARG, "null config or output");
  return guarded([&]() { *out = cfg->cfg.hash(); });
}

void tsnet_config_destroy(tsnet_config* cfg) { delete cfg; }

int tsnet_gen_data(const tsnet_config* cfg, const char* out_dir, tsnet_data_counts* counts) {
  if (!cfg || !out_dir) return fail(TSNET_ERR_INVALID_ARG, "null config or output directory");
  return guarded([&]() {
    auto images = load_source_images(cfg->cfg);
    auto ds = ts::build_dataset(images, cfg->cfg.data_seed);
    fs::create_directories(out_dir);
    std::string dir(out_dir);
    ts::write_pair_cache(cache_path(dir, ts::Split::Train), ds.train);
    ts::write_pair_cache(cache_path(dir, ts::Split::Test), ds.test);
    ts::write_pair_cache(cache_path(dir, ts::Split::Val), ds.val);
    ts::write_splits_tsv(dir + "/splits.tsv", ds, images);
    if (counts) {
      counts->train_images = static_cast<long long>(ds.train_ids.size());
      counts->test_images = static_cast<long long>(ds.test_ids.size());
      counts->val_images = static_cast<long long>(ds.val_ids.size());
      counts->train_pairs = static_cast<long long>(ds.train.size());
      counts->test_pairs = static_cast<long long>(ds.test.size());
      counts->val_pairs = static_cast<long long>(ds.val.size());
    }
  });
}

int tsnet_train(const tsnet_config* cfg, const char* cache_dir, const char* out_dir,
                const char* resume_path, tsnet_train_result* result) {
  if (!cfg || !cache_dir || !out_dir)
    return fail(TSNET_ERR_INVALID_ARG, "null config, cache directory, or output directory");
  return guarded([&]() {
    std::string dir(cache_dir);
    auto train_pairs = ts::read_pair_cache(cache_path(dir, ts::Split::Train));
    auto val_pairs = ts::read_pair_cache(cache_path(dir, ts::Split::Val));
    auto stats = ts::compute_stats(train_pairs);
    ts::normalize(train_pairs, stats);
    ts::normalize(val_pairs, stats);
    ts::Rng init_rng(cfg->cfg.train_seed);
    auto model = ts::Model<float>::create(cfg->cfg.kind(), cfg->cfg.loss_mode(), init_rng,
                                          cfg->cfg.metric_hidden);
    auto res = ts::train(model, train_pairs, val_pairs, stats, cfg->cfg.train_config(), out_dir,
                         resume_path ? resume_path : "");
    if (result) {
      result->best_val_err95 = res.best_val_err;
      result->best_epoch = res.best_epoch;
      result->final_train_loss = res.final_train_loss;
    }
  });
}

int tsnet_eval(const char* checkpoint_path, const char* cache_dir, const char* split,
               const char* out_dir, double* err_rate_95) {
  if (!checkpoint_path || !cache_dir || !split || !out_dir)
    return fail(TSNET_ERR_INVALID_ARG, "null checkpoint, cache directory, split, or output");
  return guarded([&]() {
    ts::Split s = ts::split_from_name(split);
    auto ck = ts::load_checkpoint(checkpoint_path);
    auto model = ts::model_from_checkpoint(ck);
    auto pairs = ts::read_pair_cache(cache_path(cache_dir, s));
    ts::normalize(pairs, ck.stats);
    auto rep = ts::evaluate(model, pairs);
    ts::write_eval_csvs(rep, out_dir, split);
    if (err_rate_95) *err_rate_95 = rep.err_rate_95;
  });
}

int tsnet_model_load(const char* checkpoint_path, tsnet_model** out) {
  if (!checkpoint_path || !out) return fail(TSNET_ERR_INVALID_ARG, "null path or output handle");
  return guarded([&]() {
    auto ck = ts::load_checkpoint(checkpoint_path);
    auto* m = new tsnet_model{ts::model_from_checkpoint(ck), ck.stats};
    *out = m;
  });
}

int tsnet_model_score(const tsnet_model* model, const float* patch_a, const float* patch_b,
                      float* score) {
  if (!model || !patch_a || !patch_b || !score)
    return fail(TSNET_ERR_INVALID_ARG, "null model, patch, or score output");
  return guarded([&]() {
    ts::PatchPair pair;
    const size_t n = static_cast<size_t>(TSNET_PATCH_SIZE) * TSNET_PATCH_SIZE;
    pair.a.assign(patch_a, patch_a + n);
    pair.b.assign(patch_b, patch_b + n);
    std::vector<ts::PatchPair> one{pair};
    ts::normalize(one, model->stats);
    *score = ts::score_pair(model->model, one[0]);
  });
}

void tsnet_model_destroy(tsnet_model* model) { delete model; }

}  // extern "C"
