#pragma once

// Training and evaluation loops, the pooled-feature softmax-regression
// baseline, and metrics files.

#include <filesystem>
#include <iostream>
#include <numeric>
#include <string>
#include <vector>

#include "json.hpp"
#include "pasl/lgn.hpp"
#include "pasl/pipeline.hpp"

namespace pasl {

struct TrainConfig {
  PipelineConfig pipeline;
  std::size_t hidden = 256;
  double lambda = 1.0;
  Combine combine = Combine::product;
  bool use_spatial = true;
  bool use_similarity = true;
  std::size_t batch_size = 32;
  std::size_t epochs = 20;
  LrSchedule schedule;
  double dropout = 0.2;
  OptimizerConfig optimizer;
  std::uint64_t seed = 1;  // model init, shuffling and dropout
  std::string out_dir;     // empty: nothing written
  bool verbose = false;

  void validate() const {
    if (pipeline.n_regions == 0 || hidden == 0 || batch_size == 0 || epochs == 0 || pipeline.roi_grid == 0)
      throw std::invalid_argument("train config: counts must be positive");
    if (!(lambda >= 0.0)) throw std::invalid_argument("train config: lambda must be >= 0");
    schedule.validate();
  }

  LgnConfig model_config(std::size_t input_dim, std::size_t num_classes) const {
    LgnConfig c;
    c.input_dim = input_dim;
    c.hidden = hidden;
    c.num_classes = num_classes;
    c.lambda = lambda;
    c.combine = combine;
    c.with_global = pipeline.with_global;
    c.use_spatial = use_spatial;
    c.use_similarity = use_similarity;
    c.dropout = dropout;
    return c;
  }
};

/// Reads a JSON config; absent keys keep their defaults.
inline TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig c = {}) {
  auto opt = [&](const char* key, auto& dst) {
    if (j.contains(key)) dst = j.at(key).get<std::decay_t<decltype(dst)>>();
  };
  opt("n_regions", c.pipeline.n_regions);
  if (j.contains("method")) c.pipeline.method = parse_cluster_method(j.at("method").get<std::string>());
  opt("cluster_seed", c.pipeline.cluster_seed);
  opt("roi_grid", c.pipeline.roi_grid);
  opt("with_global", c.pipeline.with_global);
  opt("threads", c.pipeline.threads);
  opt("hidden", c.hidden);
  opt("lambda", c.lambda);
  if (j.contains("combine")) c.combine = parse_combine(j.at("combine").get<std::string>());
  opt("use_spatial", c.use_spatial);
  opt("use_similarity", c.use_similarity);
  opt("batch_size", c.batch_size);
  opt("epochs", c.epochs);
  opt("lr", c.schedule.base);
  opt("lr_decay", c.schedule.factor);
  opt("lr_milestones", c.schedule.milestones);
  opt("dropout", c.dropout);
  opt("weight_decay", c.optimizer.weight_decay);
  opt("clip_norm", c.optimizer.clip_norm);
  opt("seed", c.seed);
  opt("out_dir", c.out_dir);
  c.validate();
  return c;
}

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  double test_acc = 0.0;
};

struct EvalReport {
  double accuracy = 0.0;
  std::vector<double> per_class;  // NaN for classes absent from the split
  std::vector<std::pair<std::size_t, double>> top_k;
  std::size_t count = 0;
};

struct TrainResult {
  LgnModel model;
  std::vector<EpochRecord> epochs;
  EvalReport final_eval;
};

/// Position of `label` when classes are sorted by descending logit, ties by
/// ascending class index.
inline std::size_t label_rank(std::span<const double> logits, std::uint32_t label) {
  std::size_t rank = 0;
  for (std::size_t j = 0; j < logits.size(); ++j)
    if (logits[j] > logits[label] || (logits[j] == logits[label] && j < label)) ++rank;
  return rank;
}

inline EvalReport score_logits(const std::vector<std::vector<double>>& logits,
                               const std::vector<std::uint32_t>& labels, std::size_t num_classes,
                               std::vector<std::size_t> ks = {1, 5}) {
  if (logits.empty()) throw std::invalid_argument("evaluate: empty split");
  EvalReport r;
  r.count = logits.size();
  std::vector<std::size_t> hits(num_classes, 0), totals(num_classes, 0);
  std::vector<std::size_t> topk_hits(ks.size(), 0);
  for (std::size_t i = 0; i < logits.size(); ++i) {
    if (logits[i].size() != num_classes) throw std::invalid_argument("evaluate: dimension mismatch");
    const auto rank = label_rank(logits[i], labels[i]);
    ++totals[labels[i]];
    if (rank == 0) ++hits[labels[i]];
    for (std::size_t k = 0; k < ks.size(); ++k)
      if (rank < ks[k]) ++topk_hits[k];
  }
  const auto correct = std::accumulate(hits.begin(), hits.end(), std::size_t{0});
  r.accuracy = double(correct) / double(r.count);
  for (std::size_t c = 0; c < num_classes; ++c)
    r.per_class.push_back(totals[c] ? double(hits[c]) / double(totals[c])
                                    : std::numeric_limits<double>::quiet_NaN());
  for (std::size_t k = 0; k < ks.size(); ++k)
    r.top_k.emplace_back(ks[k], double(topk_hits[k]) / double(r.count));
  return r;
}

inline EvalReport evaluate(const LgnModel& model, const std::vector<GraphSample>& samples,
                           std::size_t threads = 1, std::vector<std::size_t> ks = {1, 5}) {
  if (samples.empty()) throw std::invalid_argument("evaluate: empty split");
  std::vector<std::vector<double>> logits(samples.size());
  std::vector<std::uint32_t> labels(samples.size());
  parallel_for(samples.size(), threads, [&](std::size_t i) {
    logits[i] = predict_logits(model, samples[i]);
    labels[i] = samples[i].label;
  });
  return score_logits(logits, labels, model.config.num_classes, std::move(ks));
}

inline nlohmann::json eval_to_json(const EvalReport& r) {
  nlohmann::json per_class = nlohmann::json::array();
  for (double v : r.per_class) per_class.push_back(std::isnan(v) ? nlohmann::json(nullptr) : nlohmann::json(v));
  nlohmann::json topk = nlohmann::json::object();
  for (const auto& [k, v] : r.top_k) topk["top" + std::to_string(k)] = v;
  return {{"accuracy", r.accuracy}, {"per_class", per_class}, {"top_k", topk}, {"count", r.count}};
}

inline void check_training_set(const std::vector<GraphSample>& train, std::size_t num_classes) {
  if (num_classes == 0 || train.empty())
    throw std::invalid_argument("degenerate dataset: no training images");
  std::vector<std::size_t> counts(num_classes, 0);
  for (const auto& s : train) ++counts[s.label];
  for (std::size_t c = 0; c < num_classes; ++c)
    if (counts[c] == 0)
      throw std::invalid_argument("degenerate dataset: class " + std::to_string(c) +
                                  " has no training images");
}

inline std::vector<std::vector<std::size_t>> epoch_batches(std::size_t n, std::size_t batch_size,
                                                           std::uint64_t seed, std::size_t epoch) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(mix_seed(seed, 0xE90C0000ull + epoch));
  rng.shuffle(order);
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t i = 0; i < n; i += batch_size)
    out.emplace_back(order.begin() + i, order.begin() + std::min(n, i + batch_size));
  return out;
}

inline nlohmann::json metrics_to_json(const std::vector<EpochRecord>& epochs) {
  auto arr = nlohmann::json::array();
  for (const auto& e : epochs)
    arr.push_back({{"epoch", e.epoch}, {"train_loss", e.train_loss}, {"test_acc", e.test_acc}});
  return arr;
}

/// Trains on `train`, evaluating on `test` after every epoch.
inline TrainResult train_on_samples(const TrainConfig& cfg, const std::vector<GraphSample>& train,
                                    const std::vector<GraphSample>& test, std::size_t num_classes) {
  cfg.validate();
  check_training_set(train, num_classes);
  TrainResult res;
  res.model = init_model(cfg.model_config(train.front().nodes.cols, num_classes), cfg.seed);
  std::size_t step = 0;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr = cfg.schedule.at(epoch);
    double loss_sum = 0.0;
    for (const auto& idx : epoch_batches(train.size(), cfg.batch_size, cfg.seed, epoch)) {
      std::vector<const GraphSample*> batch;
      for (auto i : idx) batch.push_back(&train[i]);
      const std::optional<std::uint64_t> drop =
          cfg.dropout > 0.0 ? std::optional<std::uint64_t>(mix_seed(cfg.seed ^ 0xD0D0ull, step))
                            : std::nullopt;
      auto r = forward_backward(res.model, batch, drop, cfg.pipeline.threads);
      loss_sum += r.loss * double(batch.size());
      optimizer_step(res.model, std::move(r.grad), lr, cfg.optimizer);
      ++step;
    }
    EpochRecord rec;
    rec.epoch = epoch + 1;
    rec.train_loss = loss_sum / double(train.size());
    rec.test_acc = test.empty() ? std::numeric_limits<double>::quiet_NaN()
                                : evaluate(res.model, test, cfg.pipeline.threads).accuracy;
    res.epochs.push_back(rec);
    if (cfg.verbose)
      std::cerr << "epoch " << rec.epoch << " lr " << lr << " train_loss " << rec.train_loss
                << " test_acc " << rec.test_acc << "\n";
  }
  if (!test.empty()) res.final_eval = evaluate(res.model, test, cfg.pipeline.threads);
  return res;
}

struct SplitSamples {
  std::vector<GraphSample> train;
  std::vector<GraphSample> test;
};

inline SplitSamples prepare_split(const DatasetManifest& manifest, const PipelineConfig& cfg) {
  const auto all = prepare_samples(manifest.entries, cfg);
  SplitSamples s;
  for (std::size_t i = 0; i < all.size(); ++i)
    (manifest.entries[i].split == Split::train ? s.train : s.test).push_back(all[i]);
  return s;
}

/// Full run: features, training loop, then checkpoint + metrics.json in
/// cfg.out_dir.
inline TrainResult train(const TrainConfig& cfg, const DatasetManifest& manifest) {
  if (manifest.entries.empty() || manifest.num_classes == 0)
    throw std::invalid_argument("degenerate dataset: empty manifest");
  const auto split = prepare_split(manifest, cfg.pipeline);
  auto res = train_on_samples(cfg, split.train, split.test, manifest.num_classes);
  if (!cfg.out_dir.empty()) {
    std::filesystem::create_directories(cfg.out_dir);
    const auto dir = std::filesystem::path(cfg.out_dir);
    save_checkpoint(res.model, (dir / "model.lgn").string(), {{"pipeline", cfg.pipeline.to_json()}});
    nlohmann::json metrics{{"epochs", metrics_to_json(res.epochs)}};
    if (!split.test.empty()) metrics["final"] = eval_to_json(res.final_eval);
    bytes::write_file((dir / "metrics.json").string(), metrics.dump(2) + "\n");
  }
  return res;
}

// ---------------------------------------------------------------------------
// Baseline: average of the ℓ2-normalized local region features, classified by
// softmax regression trained with the same optimizer settings.

inline std::vector<double> pooled_region_feature(const GraphSample& s) {
  const std::size_t first = s.has_global ? 1 : 0;
  std::vector<double> out(s.nodes.cols, 0.0);
  for (std::size_t i = first; i < s.nodes.rows; ++i)
    for (std::size_t k = 0; k < s.nodes.cols; ++k) out[k] += s.nodes(i, k);
  for (double& x : out) x /= double(s.nodes.rows - first);
  return out;
}

struct SoftmaxRegression {
  Matrix weight;  // d × K
  Matrix bias;    // 1 × K

  std::vector<double> logits(std::span<const double> x) const {
    std::vector<double> out(bias.data.begin(), bias.data.end());
    for (std::size_t k = 0; k < x.size(); ++k)
      for (std::size_t j = 0; j < out.size(); ++j) out[j] += x[k] * weight(k, j);
    return out;
  }
};

struct BaselineResult {
  SoftmaxRegression model;
  double test_accuracy = 0.0;
  double train_accuracy = 0.0;
};

inline BaselineResult train_baseline(const std::vector<std::vector<double>>& train_x,
                                     const std::vector<std::uint32_t>& train_y,
                                     const std::vector<std::vector<double>>& test_x,
                                     const std::vector<std::uint32_t>& test_y,
                                     std::size_t num_classes, const TrainConfig& cfg) {
  if (train_x.empty()) throw std::invalid_argument("baseline: no training data");
  const std::size_t d = train_x.front().size();
  const std::size_t K = num_classes;
  BaselineResult res;
  res.model.weight = Matrix(d, K);
  res.model.bias = Matrix(1, K);
  Rng rng(cfg.seed);
  const double bound = std::sqrt(6.0 / double(d + K));
  for (double& w : res.model.weight.data) w = rng.uniform(-bound, bound);

  // Reuse the LGN optimizer by placing the classifier in the image head slot.
  LgnConfig lc;
  lc.input_dim = 2;
  lc.hidden = d;
  lc.num_classes = K;
  LgnModel holder;
  holder.config = lc;
  holder.params = LgnParams::zeros(lc);
  holder.adam = {LgnParams::zeros(lc), LgnParams::zeros(lc), 0};
  holder.params.image_w = res.model.weight;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr = cfg.schedule.at(epoch);
    for (const auto& idx : epoch_batches(train_x.size(), cfg.batch_size, cfg.seed, epoch)) {
      LgnParams grad = LgnParams::zeros(lc);
      const double scale = 1.0 / double(idx.size());
      for (auto i : idx) {
        SoftmaxRegression cur{holder.params.image_w, holder.params.image_b};
        auto p = cur.logits(train_x[i]);
        detail::softmax_inplace(p);
        for (std::size_t j = 0; j < K; ++j) {
          const double g = scale * (p[j] - (j == train_y[i] ? 1.0 : 0.0));
          grad.image_b(0, j) += g;
          for (std::size_t k = 0; k < d; ++k) grad.image_w(k, j) += train_x[i][k] * g;
        }
      }
      optimizer_step(holder, std::move(grad), lr, cfg.optimizer);
    }
  }
  res.model.weight = holder.params.image_w;
  res.model.bias = holder.params.image_b;
  auto accuracy = [&](const std::vector<std::vector<double>>& xs, const std::vector<std::uint32_t>& ys) {
    if (xs.empty()) return std::numeric_limits<double>::quiet_NaN();
    std::vector<std::vector<double>> logits;
    for (const auto& x : xs) logits.push_back(res.model.logits(x));
    return score_logits(logits, ys, K).accuracy;
  };
  res.train_accuracy = accuracy(train_x, train_y);
  res.test_accuracy = accuracy(test_x, test_y);
  return res;
}

inline BaselineResult baseline_on_samples(const std::vector<GraphSample>& train,
                                          const std::vector<GraphSample>& test,
                                          std::size_t num_classes, const TrainConfig& cfg) {
  std::vector<std::vector<double>> tx, vx;
  std::vector<std::uint32_t> ty, vy;
  for (const auto& s : train) {
    tx.push_back(pooled_region_feature(s));
    ty.push_back(s.label);
  }
  for (const auto& s : test) {
    vx.push_back(pooled_region_feature(s));
    vy.push_back(s.label);
  }
  return train_baseline(tx, ty, vx, vy, num_classes, cfg);
}

}  // namespace pasl
