#pragma once

// Piecewise training. The triplet branches are fitted to annotated pairs only
// (cross-entropy of the CP distribution), the prior is counted from the same
// annotations, and the selection head is fitted afterwards on balanced
// annotated/null pairs with the triplet branches frozen.

#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "lrtd/cp_dist.hpp"
#include "lrtd/dataset.hpp"
#include "lrtd/error.hpp"
#include "lrtd/feature_net.hpp"
#include "lrtd/prior.hpp"
#include "lrtd/rng.hpp"
#include "lrtd/text_io.hpp"

namespace lrtd {

inline constexpr int kModelVersion = 1;

struct TrainConfig {
  double learning_rate = 1e-4;
  double clip_norm = 20.0;
  std::size_t epochs = 7;
  std::size_t batch_size = 32;
  std::size_t rank = 5;
  std::size_t hidden_dim = 64;
  double sel_learning_rate = 1e-2;
  std::size_t sel_epochs = 7;
  std::uint64_t seed = 1;

  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

inline void validate(const TrainConfig& c) {
  auto need = [](bool ok, const std::string& what) {
    if (!ok) throw DegenerateInputError("invalid TrainConfig: " + what);
  };
  need(c.learning_rate >= 0.0 && std::isfinite(c.learning_rate), "learning_rate must be >= 0");
  need(c.clip_norm > 0.0, "clip_norm must be > 0");
  need(c.epochs >= 1, "epochs must be >= 1");
  need(c.batch_size >= 1, "batch_size must be >= 1");
  need(c.rank >= 1 && c.hidden_dim >= 1, "rank and hidden_dim must be >= 1");
  need(c.sel_learning_rate >= 0.0 && std::isfinite(c.sel_learning_rate),
       "sel_learning_rate must be >= 0");
}

struct TrainedModel {
  ModelParams params;
  PriorTensor prior;
  TrainConfig config;
  std::vector<double> loss_trace;      // mean triplet NLL per epoch
  std::vector<double> sel_loss_trace;  // mean selection log-loss per epoch

  friend bool operator==(const TrainedModel&, const TrainedModel&) = default;
};

struct EpochStats {
  std::string phase;  // "triplet" or "selection"
  std::size_t epoch = 0;
  double mean_loss = 0.0;
  double wall_seconds = 0.0;
};

using ProgressFn = std::function<void(const EpochStats&)>;

inline double global_norm(const ModelParams& grads) {
  double sq = 0.0;
  grads.for_each_tensor([&sq](const std::string&, std::span<const double> v) {
    for (double x : v) sq += x * x;
  });
  return std::sqrt(sq);
}

/// Rescale all gradients by max_norm/norm when their joint L2 norm exceeds max_norm.
inline ModelParams clip_gradients(ModelParams grads, double max_norm) {
  if (!(max_norm > 0.0)) throw DegenerateInputError("clip norm must be > 0");
  const double norm = global_norm(grads);
  if (norm > max_norm) {
    const double scale = max_norm / norm;
    grads.for_each_tensor([scale](const std::string&, std::span<double> v) {
      for (double& x : v) x *= scale;
    });
  }
  return grads;
}

namespace detail {

inline void accumulate(ModelParams& acc, const ModelParams& g) {
  std::vector<std::span<const double>> src;
  g.for_each_tensor([&src](const std::string&, std::span<const double> v) { src.push_back(v); });
  std::size_t n = 0;
  acc.for_each_tensor([&](const std::string&, std::span<double> v) {
    const auto s = src[n++];
    for (std::size_t i = 0; i < v.size(); ++i) v[i] += s[i];
  });
}

/// params -= lr * grads, restricted to triplet or selection tensors.
inline void sgd_step(ModelParams& params, const ModelParams& grads, double lr, bool selection) {
  std::vector<std::span<const double>> src;
  grads.for_each_tensor([&src](const std::string&, std::span<const double> v) { src.push_back(v); });
  std::size_t n = 0;
  params.for_each_tensor([&](const std::string& name, std::span<double> v) {
    const auto g = src[n++];
    if (is_selection_tensor(name) != selection) return;
    for (std::size_t i = 0; i < v.size(); ++i) v[i] -= lr * g[i];
  });
}

inline double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace detail

struct TripletExample {
  std::span<const double> feature;
  TripletIndex target;
};

inline std::vector<TripletExample> positive_examples(std::span<const Scene> scenes) {
  std::vector<TripletExample> out;
  for (const auto& s : scenes)
    for (const auto& p : s.pairs)
      if (p.selected && p.annotation) out.push_back({p.pair_feature, *p.annotation});
  return out;
}

/// Summed NLL of a batch; per-example gradients are added into grad_sum.
inline double triplet_batch_gradient(const ModelParams& m, std::span<const TripletExample> batch,
                                     ModelParams& grad_sum) {
  double loss = 0.0;
  for (const auto& ex : batch) {
    auto fw = forward(m, ex.feature);
    loss += nll_loss(fw.scores, ex.target);
    detail::accumulate(grad_sum, backward(m, fw.cache, nll_gradient(fw.scores, ex.target)));
  }
  return loss;
}

/// SGD on annotated pairs: forward -> closed-form CP gradient -> backward ->
/// clip -> update. Batches are means over examples.
inline TrainedModel train_triplet(const TrainConfig& config, std::span<const Scene> train,
                                  const Shape3& shape, const ProgressFn& progress = {}) {
  validate(config);
  const auto examples = positive_examples(train);
  if (examples.empty()) throw DegenerateInputError("training split has no annotated pairs");
  const std::size_t feature_dim = examples.front().feature.size();

  TrainedModel model;
  model.config = config;
  model.params = init_params(feature_dim, config.hidden_dim, shape, config.rank,
                             derive_seed(config.seed, "init"));
  model.prior = build_prior(collect_annotations(train), shape);

  const std::uint64_t shuffle_seed = derive_seed(config.seed, "shuffle");
  std::vector<std::size_t> order(examples.size());
  std::vector<TripletExample> batch;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(derive_seed(shuffle_seed, static_cast<std::uint64_t>(epoch)));
    rng.shuffle(order);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      batch.clear();
      for (std::size_t n = start; n < end; ++n) batch.push_back(examples[order[n]]);
      ModelParams grads = zeros_like(model.params);
      epoch_loss += triplet_batch_gradient(model.params, batch, grads);
      const double inv = 1.0 / static_cast<double>(batch.size());
      grads.for_each_tensor([inv](const std::string&, std::span<double> v) {
        for (double& x : v) x *= inv;
      });
      grads = clip_gradients(std::move(grads), config.clip_norm);
      detail::sgd_step(model.params, grads, config.learning_rate, false);
    }
    model.loss_trace.push_back(epoch_loss / static_cast<double>(examples.size()));
    if (progress)
      progress({"triplet", epoch + 1, model.loss_trace.back(), detail::seconds_since(t0)});
  }
  return model;
}

/// Fit only the selection head on balanced annotated/null pairs.
inline TrainedModel train_selection(const TrainConfig& config, std::span<const Scene> train,
                                    TrainedModel model, const ProgressFn& progress = {}) {
  validate(config);
  BalancedSelectionBatches batches(train, derive_seed(config.seed, "selection"));
  const std::size_t F = model.params.feature_dim;
  for (std::size_t epoch = 0; epoch < config.sel_epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    const auto items = batches.next_epoch();
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < items.size(); start += config.batch_size) {
      const std::size_t end = std::min(items.size(), start + config.batch_size);
      ModelParams grads = zeros_like(model.params);
      for (std::size_t n = start; n < end; ++n) {
        const auto& ex = items[n];
        if (ex.feature.size() != F) throw ShapeError("selection feature width mismatch");
        epoch_loss += sel_loss(model.params, ex.feature, ex.label);
        const SelGrad g = sel_backward(model.params, ex.feature, ex.label);
        for (std::size_t f = 0; f < F; ++f) grads.w_sel[f] += g.w[f];
        grads.b_sel += g.b;
      }
      const double inv = 1.0 / static_cast<double>(end - start);
      for (double& x : grads.w_sel) x *= inv;
      grads.b_sel *= inv;
      grads = clip_gradients(std::move(grads), config.clip_norm);
      detail::sgd_step(model.params, grads, config.sel_learning_rate, true);
    }
    model.sel_loss_trace.push_back(epoch_loss / static_cast<double>(items.size()));
    if (progress)
      progress({"selection", epoch + 1, model.sel_loss_trace.back(), detail::seconds_since(t0)});
  }
  return model;
}

/// Both phases in order.
inline TrainedModel train(const TrainConfig& config, std::span<const Scene> train_scenes,
                          const Shape3& shape, const ProgressFn& progress = {}) {
  return train_selection(config, train_scenes, train_triplet(config, train_scenes, shape, progress),
                         progress);
}

// ---------------------------------------------------------------------------
// Checkpoints

inline std::string format_model(const TrainedModel& m) {
  using text::append_double;
  using text::format_double;
  const auto& c = m.config;
  const auto& p = m.params;
  std::string out = "LRTD-MODEL version=" + std::to_string(kModelVersion) + "\n";
  out += "config learning_rate=" + format_double(c.learning_rate) +
         " clip_norm=" + format_double(c.clip_norm) + " epochs=" + std::to_string(c.epochs) +
         " batch_size=" + std::to_string(c.batch_size) + " rank=" + std::to_string(c.rank) +
         " hidden_dim=" + std::to_string(c.hidden_dim) +
         " sel_learning_rate=" + format_double(c.sel_learning_rate) +
         " sel_epochs=" + std::to_string(c.sel_epochs) + " seed=" + std::to_string(c.seed) + "\n";
  out += "dims feature_dim=" + std::to_string(p.feature_dim) +
         " hidden_dim=" + std::to_string(p.hidden_dim) + " n_s=" + std::to_string(p.shape.n_s) +
         " n_p=" + std::to_string(p.shape.n_p) + " n_o=" + std::to_string(p.shape.n_o) +
         " rank=" + std::to_string(p.rank) + "\n";
  p.for_each_tensor([&out](const std::string& name, std::span<const double> v) {
    out += "tensor " + name + " " + std::to_string(v.size());
    for (double x : v) append_double(out, x);
    out += '\n';
  });
  out += "prior " + std::to_string(m.prior.counts().size()) + "\n";
  for (const auto& [t, n] : m.prior.counts())
    out += "count " + std::to_string(t.i) + " " + std::to_string(t.j) + " " + std::to_string(t.k) +
           " " + std::to_string(n) + "\n";
  out += "loss_trace " + std::to_string(m.loss_trace.size());
  for (double x : m.loss_trace) append_double(out, x);
  out += "\nsel_loss_trace " + std::to_string(m.sel_loss_trace.size());
  for (double x : m.sel_loss_trace) append_double(out, x);
  out += "\nEND\n";
  return out;
}

inline void save_model(const TrainedModel& m, const std::filesystem::path& path) {
  text::write_file_atomic(path, format_model(m));
}

/// Parses a checkpoint; throws on any defect, including a missing END trailer.
inline TrainedModel parse_model(std::string_view contents) {
  const auto ls = text::lines(contents);
  std::size_t n = 0;
  auto next = [&](const std::string& expect) {
    if (n >= ls.size()) throw ParseError(n + 1, expect, "unexpected end of file (truncated checkpoint)");
    text::Record r(n + 1, ls[n]);
    ++n;
    if (r.word("tag") != expect) r.fail("tag", "expected '" + expect + "' record");
    return r;
  };

  auto head = next("LRTD-MODEL");
  const auto version = head.keyed_u64("version");
  if (version != static_cast<std::uint64_t>(kModelVersion))
    throw VersionError("checkpoint version " + std::to_string(version) + " is not supported (expected " +
                       std::to_string(kModelVersion) + ")");
  head.expect_end();

  TrainedModel m;
  auto cfg = next("config");
  m.config.learning_rate = cfg.keyed_real("learning_rate");
  m.config.clip_norm = cfg.keyed_real("clip_norm");
  m.config.epochs = cfg.keyed_u64("epochs");
  m.config.batch_size = cfg.keyed_u64("batch_size");
  m.config.rank = cfg.keyed_u64("rank");
  m.config.hidden_dim = cfg.keyed_u64("hidden_dim");
  m.config.sel_learning_rate = cfg.keyed_real("sel_learning_rate");
  m.config.sel_epochs = cfg.keyed_u64("sel_epochs");
  m.config.seed = cfg.keyed_u64("seed");
  cfg.expect_end();

  auto dims = next("dims");
  const std::size_t feature_dim = dims.keyed_u64("feature_dim");
  const std::size_t hidden_dim = dims.keyed_u64("hidden_dim");
  Shape3 shape;
  shape.n_s = dims.keyed_u64("n_s");
  shape.n_p = dims.keyed_u64("n_p");
  shape.n_o = dims.keyed_u64("n_o");
  const std::size_t rank = dims.keyed_u64("rank");
  dims.expect_end();
  try {
    check_dims(feature_dim, hidden_dim, shape, rank);
  } catch (const Error& e) {
    dims.fail("dims", e.what());
  }
  // Shape the tensors through init_params, then overwrite every value.
  m.params = init_params(feature_dim, hidden_dim, shape, rank, 0);
  m.params.for_each_tensor([&](const std::string& name, std::span<double> v) {
    auto rec = next("tensor");
    if (rec.word("name") != name) rec.fail("name", "expected tensor '" + name + "'");
    if (rec.count("size") != v.size())
      rec.fail("size", "tensor '" + name + "' must hold " + std::to_string(v.size()) + " values");
    for (std::size_t i = 0; i < v.size(); ++i) {
      v[i] = rec.real(name + "[" + std::to_string(i) + "]");
      if (!std::isfinite(v[i])) rec.fail(name + "[" + std::to_string(i) + "]", "non-finite parameter");
    }
    rec.expect_end();
  });

  auto prior_rec = next("prior");
  const std::size_t records = prior_rec.count("records");
  prior_rec.expect_end();
  m.prior = PriorTensor(shape);
  for (std::size_t r = 0; r < records; ++r) {
    auto rec = next("count");
    TripletIndex t;
    t.i = rec.count("i");
    t.j = rec.count("j");
    t.k = rec.count("k");
    const auto c = rec.u64("count");
    rec.expect_end();
    if (t.i >= shape.n_s || t.j >= shape.n_p || t.k >= shape.n_o) rec.fail("i", "triplet outside shape");
    if (c == 0) rec.fail("count", "stored counts must be >= 1");
    if (m.prior.count(t) != 0) rec.fail("i", "duplicate prior record");
    m.prior.add(t, c);
  }
  auto read_trace = [&](const std::string& tag, std::vector<double>& out) {
    auto rec = next(tag);
    const std::size_t len = rec.count("length");
    out.resize(len);
    for (std::size_t i = 0; i < len; ++i) out[i] = rec.real(tag + "[" + std::to_string(i) + "]");
    rec.expect_end();
  };
  read_trace("loss_trace", m.loss_trace);
  read_trace("sel_loss_trace", m.sel_loss_trace);
  auto end = next("END");
  end.expect_end();
  for (; n < ls.size(); ++n)
    if (!ls[n].empty()) throw ParseError(n + 1, "tag", "content after END");
  return m;
}

inline TrainedModel load_model(const std::filesystem::path& path) {
  return parse_model(text::read_file(path));
}

}  // namespace lrtd
