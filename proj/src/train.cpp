#include "ts/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>
#include <thread>

namespace ts {

// ---------------------------------------------------------------------------
// Optimizer
// ---------------------------------------------------------------------------

void sgd_momentum_step(NamedParams<float>& params, std::vector<std::vector<float>>& velocities,
                       const TrainConfig& cfg) {
  if (velocities.size() != params.size())
    throw DimensionError("velocity buffer count " + std::to_string(velocities.size()) +
                         " does not match parameter count " + std::to_string(params.size()));
  float lr = static_cast<float>(cfg.lr);
  float mom = static_cast<float>(cfg.momentum);
  float l2 = static_cast<float>(cfg.l2);
  for (size_t i = 0; i < params.size(); ++i) {
    Tensor<float>& t = params[i].second;
    std::vector<float>& v = velocities[i];
    if (v.empty()) v.assign(t.size(), 0.0f);
    if (static_cast<long long>(v.size()) != t.size())
      throw DimensionError("velocity shape mismatch for parameter " + params[i].first);
    std::vector<float>& w = t.mutable_data();
    const bool has_g = t.has_grad();
    const std::vector<float>* g = has_g ? &t.grad() : nullptr;
    for (size_t k = 0; k < w.size(); ++k) {
      float gk = (has_g ? (*g)[k] : 0.0f) + l2 * w[k];
      v[k] = mom * v[k] + gk;
      w[k] -= lr * v[k];
    }
    t.zero_grad();
  }
}

// ---------------------------------------------------------------------------
// Scoring and the 95% error-rate protocol
// ---------------------------------------------------------------------------

static float positive_prob(const float* logits) {
  float m = std::max(logits[0], logits[1]);
  float ea = std::exp(logits[0] - m), eb = std::exp(logits[1] - m);
  return eb / (ea + eb);
}

static void score_range(const Model<float>& model, const std::vector<PatchPair>& pairs,
                        size_t begin, size_t end, std::vector<float>& out) {
  const size_t patch = static_cast<size_t>(kPatchSize) * kPatchSize;
  const int chunk = 32;
  for (size_t s = begin; s < end; s += chunk) {
    int n = static_cast<int>(std::min<size_t>(chunk, end - s));
    std::vector<float> xa(n * patch), xb(n * patch);
    for (int i = 0; i < n; ++i) {
      std::copy_n(pairs[s + i].a.data(), patch, xa.data() + i * patch);
      std::copy_n(pairs[s + i].b.data(), patch, xb.data() + i * patch);
    }
    auto x1 = Tensor<float>::from({n, 1, kPatchSize, kPatchSize}, std::move(xa));
    auto x2 = Tensor<float>::from({n, 1, kPatchSize, kPatchSize}, std::move(xb));
    auto fw = model.forward(x1, x2);
    for (int i = 0; i < n; ++i)
      out[s + i] = positive_prob(fw.logits_final.data().data() + 2 * i);
  }
}

float score_pair(const Model<float>& model, const PatchPair& pair) {
  std::vector<float> out(1);
  std::vector<PatchPair> one{pair};
  score_range(model, one, 0, 1, out);
  return out[0];
}

static int eval_thread_cap() {
  const char* env = std::getenv("TSNET_THREADS");
  if (!env) return 1;
  int n = std::atoi(env);
  return n < 1 ? 1 : n;
}

std::vector<float> score_pairs(const Model<float>& model, const std::vector<PatchPair>& pairs) {
  std::vector<float> out(pairs.size());
  int threads = std::min<int>(eval_thread_cap(), std::max<size_t>(pairs.size() / 64, 1));
  if (threads <= 1) {
    score_range(model, pairs, 0, pairs.size(), out);
    return out;
  }
  std::vector<std::thread> pool;
  size_t per = (pairs.size() + threads - 1) / threads;
  for (int t = 0; t < threads; ++t) {
    size_t b = t * per, e = std::min(pairs.size(), b + per);
    if (b >= e) break;
    pool.emplace_back([&, b, e]() { score_range(model, pairs, b, e, out); });
  }
  for (auto& th : pool) th.join();
  return out;
}

double err_rate_95_threshold(const std::vector<float>& pos_scores) {
  if (pos_scores.empty()) throw DimensionError("err_rate_95 requires non-empty positive scores");
  std::vector<float> sorted(pos_scores);
  std::sort(sorted.begin(), sorted.end(), std::greater<float>());
  size_t k = static_cast<size_t>(std::ceil(0.95 * static_cast<double>(sorted.size())));
  k = std::max<size_t>(k, 1);
  return sorted[k - 1];
}

double err_rate_95(const std::vector<float>& pos_scores, const std::vector<float>& neg_scores) {
  if (neg_scores.empty()) throw DimensionError("err_rate_95 requires non-empty negative scores");
  double t = err_rate_95_threshold(pos_scores);
  size_t false_matches = 0;
  for (float s : neg_scores)
    if (s >= t) ++false_matches;
  return 100.0 * static_cast<double>(false_matches) / static_cast<double>(neg_scores.size());
}

EvalReport evaluate(const Model<float>& model, const std::vector<PatchPair>& pairs) {
  EvalReport rep;
  rep.scores = score_pairs(model, pairs);
  rep.labels.reserve(pairs.size());
  std::vector<float> pos, neg;
  for (size_t i = 0; i < pairs.size(); ++i) {
    rep.labels.push_back(pairs[i].label);
    (pairs[i].label ? pos : neg).push_back(rep.scores[i]);
  }
  rep.n_pos = static_cast<int>(pos.size());
  rep.n_neg = static_cast<int>(neg.size());
  rep.threshold_at_95tpr = err_rate_95_threshold(pos);
  rep.err_rate_95 = err_rate_95(pos, neg);
  // (tpr, fpr) sweep over the observed score levels
  std::vector<float> levels(rep.scores);
  std::sort(levels.begin(), levels.end(), std::greater<float>());
  levels.erase(std::unique(levels.begin(), levels.end()), levels.end());
  size_t stride = std::max<size_t>(1, levels.size() / 512);
  std::vector<float> ps(pos), ns(neg);
  std::sort(ps.begin(), ps.end(), std::greater<float>());
  std::sort(ns.begin(), ns.end(), std::greater<float>());
  for (size_t i = 0; i < levels.size(); i += stride) {
    float t = levels[i];
    auto count_ge = [t](const std::vector<float>& v) {
      return static_cast<double>(std::upper_bound(v.begin(), v.end(), t, std::greater<float>()) -
                                 v.begin());
    };
    rep.curve.push_back({pos.empty() ? 0 : count_ge(ps) / pos.size(),
                         neg.empty() ? 0 : count_ge(ns) / neg.size()});
  }
  return rep;
}

void write_eval_csvs(const EvalReport& rep, const std::string& out_dir, const std::string& tag) {
  std::filesystem::create_directories(out_dir);
  {
    std::ofstream f(out_dir + "/" + tag + "_scores.csv");
    f << "index,label,score\n";
    for (size_t i = 0; i < rep.scores.size(); ++i)
      f << i << "," << rep.labels[i] << "," << rep.scores[i] << "\n";
  }
  {
    std::ofstream f(out_dir + "/" + tag + "_curve.csv");
    f << "tpr,fpr\n";
    for (auto& [tpr, fpr] : rep.curve) f << tpr << "," << fpr << "\n";
  }
}

// ---------------------------------------------------------------------------
// Checkpoint serialization
// ---------------------------------------------------------------------------

namespace {

constexpr char kCkMagic[4] = {'T', 'S', 'C', 'K'};
constexpr uint16_t kCkVersion = 1;

uint32_t fnv1a(const std::string& s) {
  uint32_t h = 2166136261u;
  for (unsigned char c : s) {
    h ^= c;
    h *= 16777619u;
  }
  return h;
}

struct Writer {
  std::string buf;
  void raw(const void* p, size_t n) { buf.append(static_cast<const char*>(p), n); }
  void u8(uint8_t v) { raw(&v, 1); }
  void u16(uint16_t v) { raw(&v, 2); }
  void u32(uint32_t v) { raw(&v, 4); }
  void f64(double v) { raw(&v, 8); }
  void f32(float v) { raw(&v, 4); }
  void str(const std::string& s) { u32(static_cast<uint32_t>(s.size())); raw(s.data(), s.size()); }
  void floats(const std::vector<float>& v) {
    u32(static_cast<uint32_t>(v.size()));
    raw(v.data(), v.size() * sizeof(float));
  }
};

struct Reader {
  const std::string& buf;
  size_t off = 0;
  explicit Reader(const std::string& b) : buf(b) {}
  void raw(void* p, size_t n) {
    if (off + n > buf.size())
      throw IntegrityError("truncated checkpoint at offset " + std::to_string(off));
    std::memcpy(p, buf.data() + off, n);
    off += n;
  }
  uint8_t u8() { uint8_t v; raw(&v, 1); return v; }
  uint16_t u16() { uint16_t v; raw(&v, 2); return v; }
  uint32_t u32() { uint32_t v; raw(&v, 4); return v; }
  double f64() { double v; raw(&v, 8); return v; }
  float f32() { float v; raw(&v, 4); return v; }
  std::string str() {
    uint32_t n = u32();
    if (off + n > buf.size())
      throw IntegrityError("truncated checkpoint string at offset " + std::to_string(off));
    std::string s = buf.substr(off, n);
    off += n;
    return s;
  }
  std::vector<float> floats() {
    uint32_t n = u32();
    std::vector<float> v(n);
    raw(v.data(), static_cast<size_t>(n) * sizeof(float));
    return v;
  }
};

}  // namespace

void save_checkpoint(const std::string& path, const Checkpoint& ck) {
  Writer w;
  w.u8(static_cast<uint8_t>(ck.kind));
  w.u8(static_cast<uint8_t>(ck.loss_mode));
  w.f64(ck.width_mult);
  w.f64(ck.bottleneck_mult);
  w.u32(static_cast<uint32_t>(ck.metric_hidden));
  w.u32(static_cast<uint32_t>(ck.epoch));
  w.f64(ck.best_val_err);
  w.f32(ck.stats.mean_a);
  w.f32(ck.stats.std_a);
  w.f32(ck.stats.mean_b);
  w.f32(ck.stats.std_b);
  w.str(ck.rng_state);
  w.u32(static_cast<uint32_t>(ck.param_names.size()));
  for (size_t i = 0; i < ck.param_names.size(); ++i) {
    w.str(ck.param_names[i]);
    w.u8(static_cast<uint8_t>(ck.param_shapes[i].size()));
    for (int e : ck.param_shapes[i]) w.u32(static_cast<uint32_t>(e));
    w.floats(ck.param_values[i]);
    w.floats(ck.velocities[i]);
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IntegrityError("cannot open '" + path + "' for writing");
  f.write(kCkMagic, 4);
  f.write(reinterpret_cast<const char*>(&kCkVersion), 2);
  f.write(w.buf.data(), w.buf.size());
  uint32_t sum = fnv1a(w.buf);
  f.write(reinterpret_cast<const char*>(&sum), 4);
  if (!f) throw IntegrityError("write failed for '" + path + "'");
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IntegrityError("cannot open checkpoint '" + path + "'");
  std::ostringstream ss;
  ss << f.rdbuf();
  std::string all = ss.str();
  if (all.size() < 10 || std::memcmp(all.data(), kCkMagic, 4) != 0)
    throw IntegrityError("'" + path + "' is not a TSCK checkpoint (bad magic at offset 0)");
  uint16_t version;
  std::memcpy(&version, all.data() + 4, 2);
  if (version != kCkVersion)
    throw IntegrityError("unsupported checkpoint version " + std::to_string(version));
  std::string body = all.substr(6, all.size() - 10);
  uint32_t stored;
  std::memcpy(&stored, all.data() + all.size() - 4, 4);
  if (fnv1a(body) != stored)
    throw IntegrityError("checkpoint '" + path + "' failed its integrity checksum at offset " +
                         std::to_string(all.size() - 4));
  Reader r(body);
  Checkpoint ck;
  ck.kind = static_cast<VariantKind>(r.u8());
  ck.loss_mode = static_cast<LossMode>(r.u8());
  ck.width_mult = r.f64();
  ck.bottleneck_mult = r.f64();
  ck.metric_hidden = static_cast<int>(r.u32());
  ck.epoch = static_cast<int>(r.u32());
  ck.best_val_err = r.f64();
  ck.stats.mean_a = r.f32();
  ck.stats.std_a = r.f32();
  ck.stats.mean_b = r.f32();
  ck.stats.std_b = r.f32();
  ck.rng_state = r.str();
  uint32_t n = r.u32();
  for (uint32_t i = 0; i < n; ++i) {
    ck.param_names.push_back(r.str());
    Shape s(r.u8());
    for (int& e : s) e = static_cast<int>(r.u32());
    ck.param_shapes.push_back(std::move(s));
    ck.param_values.push_back(r.floats());
    ck.velocities.push_back(r.floats());
  }
  if (r.off != body.size())
    throw IntegrityError("trailing bytes in checkpoint at offset " + std::to_string(6 + r.off));
  return ck;
}

Checkpoint snapshot(Model<float>& model, const std::vector<std::vector<float>>& velocities,
                    int epoch, double best_val_err, const ModalityStats& stats,
                    const std::string& rng_state) {
  Checkpoint ck;
  ck.kind = model.kind;
  ck.loss_mode = model.loss_mode;
  ck.width_mult = model.width_mult;
  ck.bottleneck_mult = model.bottleneck_mult;
  ck.metric_hidden = model.metric_hidden;
  ck.epoch = epoch;
  ck.best_val_err = best_val_err;
  ck.stats = stats;
  ck.rng_state = rng_state;
  auto params = model.params();
  for (size_t i = 0; i < params.size(); ++i) {
    ck.param_names.push_back(params[i].first);
    ck.param_shapes.push_back(params[i].second.shape());
    ck.param_values.push_back(params[i].second.data());
    ck.velocities.push_back(i < velocities.size() && !velocities[i].empty()
                                ? velocities[i]
                                : std::vector<float>(params[i].second.size(), 0.0f));
  }
  return ck;
}

Model<float> model_from_checkpoint(const Checkpoint& ck) {
  Rng rng(0);
  Model<float> model = Model<float>::create(ck.kind, ck.loss_mode, rng, ck.metric_hidden);
  if (std::fabs(model.width_mult - ck.width_mult) > 1e-9 ||
      std::fabs(model.bottleneck_mult - ck.bottleneck_mult) > 1e-9)
    throw IntegrityError("checkpoint architecture multipliers do not match this build");
  auto params = model.params();
  if (params.size() != ck.param_names.size())
    throw IntegrityError("checkpoint parameter count mismatch for variant " +
                         std::string(variant_name(ck.kind)));
  for (size_t i = 0; i < params.size(); ++i) {
    if (params[i].first != ck.param_names[i] || params[i].second.shape() != ck.param_shapes[i] ||
        params[i].second.data().size() != ck.param_values[i].size())
      throw IntegrityError("checkpoint parameter '" + ck.param_names[i] +
                           "' does not match variant layout");
    params[i].second.mutable_data() = ck.param_values[i];
  }
  return model;
}

// ---------------------------------------------------------------------------
// Training loop
// ---------------------------------------------------------------------------

std::string metrics_csv_header() {
  return "epoch,total,tsnet_en,siam_en,pseudo_en,siam_con,pseudo_con,val_err95";
}

static std::string field(double v) {
  if (std::isnan(v)) return "";
  std::ostringstream os;
  os.precision(9);
  os << v;
  return os.str();
}

std::string metrics_csv_row(const EpochLog& l) {
  std::ostringstream os;
  os << l.epoch << "," << field(l.total) << "," << field(l.tsnet_en) << "," << field(l.siam_en)
     << "," << field(l.pseudo_en) << "," << field(l.siam_con) << "," << field(l.pseudo_con) << ","
     << field(l.val_err95);
  return os.str();
}

TrainResult train(Model<float>& model, const std::vector<PatchPair>& train_pairs,
                  const std::vector<PatchPair>& val_pairs, const ModalityStats& stats,
                  const TrainConfig& cfg, const std::string& out_dir,
                  const std::string& resume_path) {
  cfg.validate();
  if (train_pairs.empty()) throw ConfigError("training split is empty");
  std::filesystem::create_directories(out_dir);

  NamedParams<float> params = model.params();
  std::vector<std::vector<float>> velocities(params.size());
  Rng rng(cfg.seed);
  int start_epoch = 0;
  double best_val = 101.0;
  int best_epoch = 0;

  if (!resume_path.empty()) {
    Checkpoint ck = load_checkpoint(resume_path);
    Model<float> restored = model_from_checkpoint(ck);
    model = std::move(restored);
    params = model.params();
    velocities = ck.velocities;
    rng.load_state(ck.rng_state);
    start_epoch = ck.epoch;
    best_val = ck.best_val_err;
  }

  TrainResult res;
  res.best_checkpoint_path = out_dir + "/best.tsck";
  res.last_checkpoint_path = out_dir + "/last.tsck";
  res.metrics_path = out_dir + "/metrics.csv";
  bool resuming = !resume_path.empty() && std::filesystem::exists(res.metrics_path);
  std::ofstream csv(res.metrics_path, resuming ? std::ios::app : std::ios::out);
  if (!resuming) csv << metrics_csv_header() << "\n";

  const size_t patch = static_cast<size_t>(kPatchSize) * kPatchSize;
  std::vector<size_t> order(train_pairs.size());

  for (int epoch = start_epoch + 1; epoch <= cfg.epochs; ++epoch) {
    // identity order re-established every epoch so the permutation depends
    // only on the rng state, which resume restores from the checkpoint
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    rng.shuffle(order);
    double sum_total = 0;
    double sums[5] = {0, 0, 0, 0, 0};
    bool seen[5] = {false, false, false, false, false};
    size_t count = 0;
    for (size_t start = 0; start < order.size(); start += cfg.batch_size) {
      int n = static_cast<int>(std::min<size_t>(cfg.batch_size, order.size() - start));
      std::vector<float> xa(static_cast<size_t>(n) * patch), xb(static_cast<size_t>(n) * patch);
      std::vector<int> labels(n);
      for (int i = 0; i < n; ++i) {
        const PatchPair& p = train_pairs[order[start + i]];
        std::copy_n(p.a.data(), patch, xa.data() + static_cast<size_t>(i) * patch);
        std::copy_n(p.b.data(), patch, xb.data() + static_cast<size_t>(i) * patch);
        labels[i] = p.label;
      }
      auto x1 = Tensor<float>::from({n, 1, kPatchSize, kPatchSize}, std::move(xa));
      auto x2 = Tensor<float>::from({n, 1, kPatchSize, kPatchSize}, std::move(xb));
      auto fw = model.forward(x1, x2);
      auto lb = combined_loss(fw, labels, cfg.loss, model.kind, model.loss_mode);
      float total = lb.total.item();
      if (!std::isfinite(total))
        throw std::runtime_error("non-finite training loss (epoch " + std::to_string(epoch) +
                                 ", batch " + std::to_string(start / cfg.batch_size) +
                                 ", lr=" + std::to_string(cfg.lr) + ")");
      backward(lb.total);
      sgd_momentum_step(params, velocities, cfg);
      sum_total += static_cast<double>(total) * n;
      const Tensor<float>* comps[5] = {&lb.tsnet_en, &lb.siam_en, &lb.pseudo_en, &lb.siam_con,
                                       &lb.pseudo_con};
      for (int c = 0; c < 5; ++c)
        if (comps[c]->defined()) {
          sums[c] += static_cast<double>(comps[c]->item()) * n;
          seen[c] = true;
        }
      count += n;
    }

    EpochLog log;
    log.epoch = epoch;
    log.total = sum_total / static_cast<double>(count);
    double* fields[5] = {&log.tsnet_en, &log.siam_en, &log.pseudo_en, &log.siam_con,
                         &log.pseudo_con};
    for (int c = 0; c < 5; ++c)
      *fields[c] = seen[c] ? sums[c] / static_cast<double>(count)
                           : std::numeric_limits<double>::quiet_NaN();
    if (!val_pairs.empty()) {
      EvalReport rep = evaluate(model, val_pairs);
      log.val_err95 = rep.err_rate_95;
      if (rep.err_rate_95 < best_val) {
        best_val = rep.err_rate_95;
        best_epoch = epoch;
        save_checkpoint(res.best_checkpoint_path,
                        snapshot(model, velocities, epoch, best_val, stats, rng.save_state()));
      }
    } else {
      log.val_err95 = std::numeric_limits<double>::quiet_NaN();
    }
    csv << metrics_csv_row(log) << "\n";
    csv.flush();
    res.log.push_back(log);
    res.final_train_loss = log.total;
  }

  save_checkpoint(res.last_checkpoint_path,
                  snapshot(model, velocities, cfg.epochs, best_val, stats, rng.save_state()));
  if (val_pairs.empty() || res.log.empty()) {
    // no validation-based selection possible; best == last
    save_checkpoint(res.best_checkpoint_path,
                    snapshot(model, velocities, cfg.epochs, best_val, stats, rng.save_state()));
  }
  res.best_val_err = best_val;
  res.best_epoch = best_epoch;
  return res;
}

}  // namespace ts
