#pragma once

// Ranking and metrics. Every ordered pair contributes its k best triplets,
// scored by the full posterior
//
//   log f = log P(boxes) + log psi_c(t) + log psi_u(t) + log P(sel | pair)
//
// and recall@N counts ground-truth annotations among a scene's top N.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "lrtd/cp_dist.hpp"
#include "lrtd/dataset.hpp"
#include "lrtd/error.hpp"
#include "lrtd/feature_net.hpp"
#include "lrtd/prior.hpp"
#include "lrtd/tensor.hpp"
#include "lrtd/text_io.hpp"
#include "lrtd/trainer.hpp"

namespace lrtd {

struct Prediction {
  std::size_t scene_id = 0;
  std::size_t subject_id = 0;
  std::size_t object_id = 0;
  TripletIndex triplet;
  double score = 0.0;  // log f
  std::size_t pair_rank = 0;  // position within its pair's top-k, 0-based

  friend bool operator==(const Prediction&, const Prediction&) = default;
};

/// Which factors of the posterior enter the score; all on by default.
struct ScoreOptions {
  bool use_prior = true;
  bool use_selection = true;
  bool use_detection = true;
};

/// Descending score; ties by (subject, object, triplet) ascending.
inline bool ranks_before(const Prediction& a, const Prediction& b) {
  if (a.score != b.score) return a.score > b.score;
  return std::tie(a.subject_id, a.object_id, a.triplet) <
         std::tie(b.subject_id, b.object_id, b.triplet);
}

inline void check_compatible(const TrainedModel& model, const Scene& scene) {
  for (const auto& p : scene.pairs)
    if (p.pair_feature.size() != model.params.feature_dim)
      throw ShapeError("scene " + std::to_string(scene.scene_id) + " has pair features of width " +
                       std::to_string(p.pair_feature.size()) + ", model expects " +
                       std::to_string(model.params.feature_dim));
  for (const auto& p : scene.pairs)
    if (p.annotation) check_index(model.params.shape, *p.annotation);
}

/// Pair-level log factors that do not depend on the triplet.
inline double pair_log_factor(const TrainedModel& model, const Scene& scene, const PairSample& p,
                              const ScoreOptions& opt) {
  double base = 0.0;
  if (opt.use_detection)
    base += std::log(scene.object(p.subject_id).det_confidence) +
            std::log(scene.object(p.object_id).det_confidence);
  if (opt.use_selection) base += sel_log_prob(model.params, p.pair_feature);
  return base;
}

/// Top-k triplets of every pair, merged and globally ranked.
inline std::vector<Prediction> score_pairs(const TrainedModel& model, const Scene& scene,
                                           std::size_t k, const ScoreOptions& opt = {}) {
  check_compatible(model, scene);
  if (k == 0) return {};
  std::vector<Prediction> out;
  out.reserve(scene.pairs.size() * k);
  for (const auto& p : scene.pairs) {
    const CpScores scores = forward(model.params, p.pair_feature).scores;
    const DenseTensor fused = dense_fused_log(scores, opt.use_prior ? &model.prior : nullptr);
    const double base = pair_log_factor(model, scene, p, opt);
    const auto top = top_k_entries(fused, k);
    for (std::size_t n = 0; n < top.size(); ++n)
      out.push_back({scene.scene_id, p.subject_id, p.object_id, top[n].index, base + top[n].value, n});
  }
  std::sort(out.begin(), out.end(), ranks_before);
  return out;
}

/// Keeps each pair's first k predictions of a ranking made with a larger k.
inline std::vector<Prediction> restrict_k(std::span<const Prediction> preds, std::size_t k) {
  std::vector<Prediction> out;
  for (const auto& p : preds)
    if (p.pair_rank < k) out.push_back(p);
  return out;
}

struct SceneRecall {
  std::size_t found = 0;
  std::size_t total = 0;
};

/// Hits of the scene's annotations among the N best predictions.
inline SceneRecall scene_recall(std::span<const Prediction> preds, const Scene& scene, std::size_t n) {
  std::vector<Prediction> ranked(preds.begin(), preds.end());
  std::sort(ranked.begin(), ranked.end(), ranks_before);
  if (ranked.size() > n) ranked.resize(n);
  std::set<std::tuple<std::size_t, std::size_t, TripletIndex>> top;
  for (const auto& p : ranked) top.emplace(p.subject_id, p.object_id, p.triplet);
  SceneRecall r;
  for (const auto& p : scene.pairs) {
    if (!p.annotation) continue;
    ++r.total;
    if (top.count({p.subject_id, p.object_id, *p.annotation})) ++r.found;
  }
  return r;
}

/// Per-scene recall@N averaged over scenes that carry at least one
/// annotation. `per_scene[s]` holds the predictions for `scenes[s]`.
inline double recall_at_n(std::span<const std::vector<Prediction>> per_scene,
                          std::span<const Scene> scenes, std::size_t n) {
  if (n == 0) throw DegenerateInputError("recall@N needs N >= 1");
  if (per_scene.size() != scenes.size())
    throw ShapeError("prediction lists and scenes differ in count");
  double sum = 0.0;
  std::size_t counted = 0;
  for (std::size_t s = 0; s < scenes.size(); ++s) {
    const SceneRecall r = scene_recall(per_scene[s], scenes[s], n);
    if (r.total == 0) continue;
    sum += static_cast<double>(r.found) / static_cast<double>(r.total);
    ++counted;
  }
  return counted == 0 ? 0.0 : sum / static_cast<double>(counted);
}

/// Rankings for every scene with k_max predictions per pair.
inline std::vector<std::vector<Prediction>> score_scenes(const TrainedModel& model,
                                                         std::span<const Scene> scenes,
                                                         std::size_t k_max,
                                                         const ScoreOptions& opt = {}) {
  std::vector<std::vector<Prediction>> out;
  out.reserve(scenes.size());
  for (const auto& s : scenes) out.push_back(score_pairs(model, s, k_max, opt));
  return out;
}

inline double recall_for_k(std::span<const std::vector<Prediction>> ranked,
                           std::span<const Scene> scenes, std::size_t k, std::size_t n) {
  std::vector<std::vector<Prediction>> limited;
  limited.reserve(ranked.size());
  for (const auto& r : ranked) limited.push_back(restrict_k(r, k));
  return recall_at_n(limited, scenes, n);
}

/// k maximizing validation recall@N; ties go to the smallest k.
inline std::size_t select_free_k(const TrainedModel& model, std::span<const Scene> val,
                                 std::size_t n, std::span<const std::size_t> k_grid,
                                 const ScoreOptions& opt = {}) {
  if (k_grid.empty()) throw DegenerateInputError("k grid is empty");
  if (val.empty()) throw DegenerateInputError("validation split is empty");
  std::vector<std::size_t> grid(k_grid.begin(), k_grid.end());
  std::sort(grid.begin(), grid.end());
  if (grid.front() == 0) throw DegenerateInputError("k grid entries must be >= 1");
  const auto ranked = score_scenes(model, val, grid.back(), opt);
  std::size_t best_k = grid.front();
  double best = -1.0;
  for (std::size_t k : grid) {
    const double r = recall_for_k(ranked, val, k, n);
    if (r > best) {
      best = r;
      best_k = k;
    }
  }
  return best_k;
}

/// KL(GT || model) over the dense triplet tensors.
inline double kl_to_ground_truth(const CpScores& model, const CpScores& gt) {
  if (model.shape() != gt.shape())
    throw ShapeError("KL between distributions of shape " + to_string(model.shape()) + " and " +
                     to_string(gt.shape()));
  const DenseTensor lp = dense_log_prob(gt);
  const DenseTensor lq = dense_log_prob(model);
  const auto p = lp.values();
  const auto q = lq.values();
  double kl = 0.0;
  for (std::size_t n = 0; n < p.size(); ++n) {
    const double pn = std::exp(p[n]);
    if (pn > 0.0) kl += pn * (p[n] - q[n]);
  }
  return std::max(0.0, kl);
}

/// KL for one pair; throws when the pair carries no stored GT.
inline double kl_to_ground_truth(const TrainedModel& model, const PairSample& pair) {
  if (!pair.gt) throw DegenerateInputError("pair has no stored ground-truth distribution");
  return kl_to_ground_truth(forward(model.params, pair.pair_feature).scores, *pair.gt);
}

struct EvalConfig {
  std::vector<std::size_t> n_values{50, 100};
  /// Empty means {1,2,3,5,10,n_pred_classes}.
  std::vector<std::size_t> k_grid;
  ScoreOptions options;
};

inline std::vector<std::size_t> default_k_grid(const Shape3& shape) {
  std::vector<std::size_t> g{1, 2, 3, 5, 10, shape.n_p};
  std::sort(g.begin(), g.end());
  g.erase(std::unique(g.begin(), g.end()), g.end());
  return g;
}

struct EvalReport {
  std::vector<std::size_t> n_values;
  std::vector<double> recall_k1;      // per N
  std::vector<double> recall_free_k;  // per N
  std::size_t k_star = 1;
  bool has_kl = false;
  double mean_kl = 0.0;
  std::size_t kl_pairs = 0;
  std::size_t scenes = 0;
  std::size_t pairs = 0;
  std::size_t annotations = 0;

  double recall(std::size_t n, bool free_k) const {
    for (std::size_t i = 0; i < n_values.size(); ++i)
      if (n_values[i] == n) return free_k ? recall_free_k[i] : recall_k1[i];
    throw IndexError("report has no recall@" + std::to_string(n));
  }
};

/// k* is chosen on `val` for the first N in config.n_values; recalls are
/// measured on `test`.
inline EvalReport evaluate(const TrainedModel& model, std::span<const Scene> val,
                           std::span<const Scene> test, const EvalConfig& config) {
  if (config.n_values.empty()) throw DegenerateInputError("no recall@N cutoffs requested");
  const auto grid = config.k_grid.empty() ? default_k_grid(model.params.shape) : config.k_grid;
  EvalReport rep;
  rep.n_values = config.n_values;
  rep.k_star = select_free_k(model, val, config.n_values.front(), grid, config.options);
  const auto ranked = score_scenes(model, test, rep.k_star, config.options);
  for (std::size_t n : config.n_values) {
    rep.recall_k1.push_back(recall_for_k(ranked, test, 1, n));
    rep.recall_free_k.push_back(recall_for_k(ranked, test, rep.k_star, n));
  }
  double kl_sum = 0.0;
  for (const auto& s : test) {
    ++rep.scenes;
    for (const auto& p : s.pairs) {
      ++rep.pairs;
      if (p.annotation) ++rep.annotations;
      if (p.gt) {
        kl_sum += kl_to_ground_truth(model, p);
        ++rep.kl_pairs;
      }
    }
  }
  if (rep.kl_pairs > 0) {
    rep.has_kl = true;
    rep.mean_kl = kl_sum / static_cast<double>(rep.kl_pairs);
  }
  return rep;
}

/// key=value lines.
inline std::string format_report(const EvalReport& r) {
  using text::format_double;
  std::string out;
  out += "k_star=" + std::to_string(r.k_star) + "\n";
  for (std::size_t i = 0; i < r.n_values.size(); ++i) {
    const std::string n = std::to_string(r.n_values[i]);
    out += "recall_at_" + n + "_k1=" + format_double(r.recall_k1[i]) + "\n";
    out += "recall_at_" + n + "_free_k=" + format_double(r.recall_free_k[i]) + "\n";
  }
  if (r.has_kl) {
    out += "mean_kl=" + format_double(r.mean_kl) + "\n";
    out += "kl_pairs=" + std::to_string(r.kl_pairs) + "\n";
  }
  out += "scenes=" + std::to_string(r.scenes) + "\n";
  out += "pairs=" + std::to_string(r.pairs) + "\n";
  out += "annotations=" + std::to_string(r.annotations) + "\n";
  return out;
}

/// Tab-separated table: one row per (N, k setting).
inline std::string format_report_table(const EvalReport& r) {
  std::string out = "n\tk_setting\tk\trecall\n";
  for (std::size_t i = 0; i < r.n_values.size(); ++i) {
    const std::string n = std::to_string(r.n_values[i]);
    out += n + "\tk1\t1\t" + text::format_double(r.recall_k1[i]) + "\n";
    out += n + "\tfree_k\t" + std::to_string(r.k_star) + "\t" + text::format_double(r.recall_free_k[i]) + "\n";
  }
  return out;
}

}  // namespace lrtd
