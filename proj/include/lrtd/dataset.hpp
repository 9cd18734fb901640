#pragma once

// Synthetic relation data following the annotation process
//
//   objects -> pair selected by annotator? -> one triplet drawn from the
//   pair's ground-truth conditional distribution
//
// Ground-truth conditionals are themselves low-rank CP mixtures whose
// components disagree on predicate *and* on one of the object labels, so a
// rank-1 (independent) model cannot represent them.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "lrtd/cp_dist.hpp"
#include "lrtd/error.hpp"
#include "lrtd/math.hpp"
#include "lrtd/rng.hpp"
#include "lrtd/tensor.hpp"
#include "lrtd/text_io.hpp"

namespace lrtd {

inline constexpr std::size_t kGeometryDim = 3;  // dx, dy, normalized distance
inline constexpr int kDatasetVersion = 1;

struct GenSpec {
  std::size_t n_obj_classes = 6;
  std::size_t n_pred_classes = 6;
  std::size_t obj_feature_dim = 8;
  std::size_t true_rank = 2;
  std::size_t modality_count = 2;
  /// Weight of pair proximity in the annotator's selection logit. +inf
  /// selects every pair.
  double selection_bias_strength = 8.0;
  double selection_base_logit = -6.0;
  double feature_noise = 0.3;
  /// Logit gap of each component's mode over the other classes.
  double mode_sharpness = 5.0;
  /// Component r's mass is scaled by exp(-r * component_decay).
  double component_decay = 0.5;
  /// Bound on the smooth feature-dependent perturbation of each GT score.
  double gt_perturbation = 0.3;
  std::size_t scenes = 200;
  std::size_t objects_per_scene = 8;
  std::uint64_t seed = 1;

  Shape3 shape() const { return {n_obj_classes, n_pred_classes, n_obj_classes}; }
  std::size_t pair_feature_dim() const { return 2 * obj_feature_dim + kGeometryDim; }

  friend bool operator==(const GenSpec&, const GenSpec&) = default;
};

inline void validate(const GenSpec& g) {
  auto need = [](bool ok, const std::string& what) {
    if (!ok) throw DegenerateInputError("invalid GenSpec: " + what);
  };
  need(g.n_obj_classes >= 1 && g.n_pred_classes >= 1, "class counts must be >= 1");
  need(g.obj_feature_dim >= 1, "obj_feature_dim must be >= 1");
  need(g.true_rank >= 1 && g.modality_count >= 1, "true_rank and modality_count must be >= 1");
  need(g.true_rank >= g.modality_count, "true_rank must be >= modality_count");
  need(g.modality_count <= g.n_pred_classes, "modality_count exceeds predicate classes");
  need(g.true_rank == 1 || g.n_obj_classes >= 2,
       "true_rank > 1 needs at least two object classes");
  need(g.scenes >= 1 && g.objects_per_scene >= 1, "scenes and objects_per_scene must be >= 1");
  need(g.selection_bias_strength >= 0.0, "selection_bias_strength must be >= 0");
  need(std::isfinite(g.selection_base_logit), "selection_base_logit must be finite");
  need(g.feature_noise >= 0.0 && std::isfinite(g.feature_noise), "feature_noise must be >= 0");
  need(std::isfinite(g.mode_sharpness) && std::isfinite(g.component_decay) &&
           std::isfinite(g.gt_perturbation),
       "generator scales must be finite");
}

struct SceneObject {
  std::size_t object_id = 0;
  std::size_t latent_class = 0;
  std::vector<double> feature;
  double det_confidence = 1.0;

  friend bool operator==(const SceneObject&, const SceneObject&) = default;
};

struct PairSample {
  std::size_t subject_id = 0;
  std::size_t object_id = 0;
  std::vector<double> geometry;
  /// subject feature ++ object feature ++ geometry
  std::vector<double> pair_feature;
  bool selected = false;
  std::optional<TripletIndex> annotation;
  std::optional<CpScores> gt;

  friend bool operator==(const PairSample&, const PairSample&) = default;
};

struct Scene {
  std::size_t scene_id = 0;
  std::vector<SceneObject> objects;
  std::vector<PairSample> pairs;

  const SceneObject& object(std::size_t id) const {
    for (const auto& o : objects)
      if (o.object_id == id) return o;
    throw IndexError("scene " + std::to_string(scene_id) + " has no object " +
                     std::to_string(id));
  }

  friend bool operator==(const Scene&, const Scene&) = default;
};

struct Dataset {
  GenSpec spec;
  std::vector<Scene> train;
  std::vector<Scene> val;
  std::vector<Scene> test;
};

inline std::vector<double> make_pair_feature(const SceneObject& s, const SceneObject& o,
                                             std::span<const double> geometry) {
  std::vector<double> f;
  f.reserve(s.feature.size() + o.feature.size() + geometry.size());
  f.insert(f.end(), s.feature.begin(), s.feature.end());
  f.insert(f.end(), o.feature.begin(), o.feature.end());
  f.insert(f.end(), geometry.begin(), geometry.end());
  return f;
}

/// The fixed random "world" behind a GenSpec: class embeddings, per-family
/// predicate modes, label confusions and the smooth GT score map.
class GroundTruthModel {
 public:
  explicit GroundTruthModel(const GenSpec& spec) : spec_(spec) {
    validate(spec_);
    Rng rng(derive_seed(spec_.seed, "world"));
    const std::size_t C = spec_.n_obj_classes;
    const std::size_t P = spec_.n_pred_classes;
    embeddings_.resize(C);
    for (auto& e : embeddings_) {
      e.resize(spec_.obj_feature_dim);
      for (double& x : e) x = rng.normal();
    }
    pred_modes_.resize(C * C);
    for (auto& modes : pred_modes_) {
      std::vector<std::size_t> perm(P);
      for (std::size_t p = 0; p < P; ++p) perm[p] = p;
      rng.shuffle(perm);
      modes.assign(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(spec_.modality_count));
    }
    confusion_.resize(C);
    for (auto& row : confusion_) {
      row.resize(spec_.true_rank, 0);
      for (std::size_t r = 1; r < spec_.true_rank; ++r) row[r] = 1 + rng.index(C - 1);  // offset
    }
    const std::size_t F = spec_.pair_feature_dim();
    const double scale = 1.0 / std::sqrt(static_cast<double>(F));
    for (Var a : kAllVars) {
      auto& mats = perturb_[static_cast<std::size_t>(a)];
      mats.resize(spec_.true_rank);
      for (auto& m : mats) {
        m.resize(spec_.shape().dim(a) * F);
        for (double& x : m) x = scale * rng.normal();
      }
    }
  }

  const GenSpec& spec() const { return spec_; }
  const std::vector<double>& embedding(std::size_t cls) const { return embeddings_.at(cls); }

  /// Predicate modes of the (subject class, object class) family.
  const std::vector<std::size_t>& predicate_modes(std::size_t cs, std::size_t co) const {
    return pred_modes_.at(cs * spec_.n_obj_classes + co);
  }

  /// Mode of component r for each variable.
  TripletIndex component_mode(std::size_t cs, std::size_t co, std::size_t r) const {
    const std::size_t C = spec_.n_obj_classes;
    TripletIndex t{cs, predicate_modes(cs, co)[r % spec_.modality_count], co};
    if (r == 0) return t;
    // Odd components relabel the object, even ones the subject.
    if (r % 2 == 1)
      t.k = (co + confusion_[co][r]) % C;
    else
      t.i = (cs + confusion_[cs][r]) % C;
    return t;
  }

  CpScores gt_scores(std::size_t cs, std::size_t co, std::span<const double> pair_feature) const {
    const std::size_t F = spec_.pair_feature_dim();
    if (pair_feature.size() != F) throw ShapeError("pair feature width mismatch");
    CpScores c(spec_.shape(), spec_.true_rank);
    for (std::size_t r = 0; r < spec_.true_rank; ++r) {
      const TripletIndex mode = component_mode(cs, co, r);
      for (Var a : kAllVars) {
        auto v = c.vec(a, r);
        const auto& m = perturb_[static_cast<std::size_t>(a)][r];
        std::vector<double> base(v.size(), 0.0);
        base[mode.at(a)] = spec_.mode_sharpness;
        for (std::size_t x = 0; x < v.size(); ++x) {
          double acc = 0.0;
          for (std::size_t f = 0; f < F; ++f) acc += m[x * F + f] * pair_feature[f];
          v[x] = base[x] + spec_.gt_perturbation * std::tanh(acc);
        }
        // Bounded perturbation, re-centred so each component keeps its mass.
        double shift = log_sum_exp(v) - log_sum_exp(base);
        if (a == Var::predicate) shift += spec_.component_decay * static_cast<double>(r);
        for (double& x : v) x -= shift;
      }
    }
    return c;
  }

 private:
  GenSpec spec_;
  std::vector<std::vector<double>> embeddings_;
  std::vector<std::vector<std::size_t>> pred_modes_;
  std::vector<std::vector<std::size_t>> confusion_;
  std::array<std::vector<std::vector<double>>, 3> perturb_;
};

/// Annotator's selection logit for a pair at normalized distance `dist` in [0,1).
inline double selection_logit(const GenSpec& spec, double dist) {
  constexpr double kClamp = 40.0;
  if (std::isinf(spec.selection_bias_strength)) return kClamp;
  const double z = spec.selection_base_logit + spec.selection_bias_strength * (1.0 - dist);
  return std::clamp(z, -kClamp, kClamp);
}

inline Scene generate_scene(const GroundTruthModel& world, std::size_t scene_id) {
  const GenSpec& spec = world.spec();
  Rng rng(derive_seed(derive_seed(spec.seed, "data"), static_cast<std::uint64_t>(scene_id)));
  Scene scene;
  scene.scene_id = scene_id;
  std::vector<std::array<double, 2>> position(spec.objects_per_scene);
  for (std::size_t n = 0; n < spec.objects_per_scene; ++n) {
    SceneObject o;
    o.object_id = n;
    o.latent_class = rng.index(spec.n_obj_classes);
    const auto& e = world.embedding(o.latent_class);
    o.feature.resize(e.size());
    for (std::size_t f = 0; f < e.size(); ++f) o.feature[f] = e[f] + spec.feature_noise * rng.normal();
    // Beta(5,1) by inversion; 1-u keeps the value in (0,1].
    o.det_confidence = std::pow(1.0 - rng.uniform(), 1.0 / 5.0);
    position[n] = {rng.uniform(), rng.uniform()};
    scene.objects.push_back(std::move(o));
  }
  for (std::size_t s = 0; s < spec.objects_per_scene; ++s)
    for (std::size_t o = 0; o < spec.objects_per_scene; ++o) {
      if (s == o) continue;
      PairSample p;
      p.subject_id = s;
      p.object_id = o;
      const double dx = position[o][0] - position[s][0];
      const double dy = position[o][1] - position[s][1];
      const double dist = std::sqrt(dx * dx + dy * dy) / std::sqrt(2.0);
      p.geometry = {dx, dy, dist};
      p.pair_feature = make_pair_feature(scene.objects[s], scene.objects[o], p.geometry);
      CpScores gt = world.gt_scores(scene.objects[s].latent_class, scene.objects[o].latent_class,
                                    p.pair_feature);
      p.selected = rng.bernoulli(sigmoid(selection_logit(spec, dist)));
      if (p.selected) p.annotation = sample(gt, rng);
      p.gt = std::move(gt);
      scene.pairs.push_back(std::move(p));
    }
  return scene;
}

/// Scenes split 70/15/15 in generation order.
inline Dataset gen_synthetic(const GenSpec& spec) {
  validate(spec);
  const GroundTruthModel world(spec);
  Dataset d;
  d.spec = spec;
  const std::size_t n_train = spec.scenes * 70 / 100;
  const std::size_t n_val = spec.scenes * 15 / 100;
  for (std::size_t id = 0; id < spec.scenes; ++id) {
    Scene s = generate_scene(world, id);
    if (id < n_train)
      d.train.push_back(std::move(s));
    else if (id < n_train + n_val)
      d.val.push_back(std::move(s));
    else
      d.test.push_back(std::move(s));
  }
  return d;
}

/// Annotated (selected) triplets of a scene list.
inline std::vector<TripletIndex> collect_annotations(std::span<const Scene> scenes) {
  std::vector<TripletIndex> out;
  for (const auto& s : scenes)
    for (const auto& p : s.pairs)
      if (p.annotation) out.push_back(*p.annotation);
  return out;
}

// ---------------------------------------------------------------------------
// Persistence

struct DatasetFile {
  GenSpec spec;
  std::string split;
  std::vector<Scene> scenes;
};

namespace detail {

inline std::string spec_fields(const GenSpec& g) {
  using text::format_double;
  std::string s;
  s += " n_obj_classes=" + std::to_string(g.n_obj_classes);
  s += " n_pred_classes=" + std::to_string(g.n_pred_classes);
  s += " obj_feature_dim=" + std::to_string(g.obj_feature_dim);
  s += " geometry_dim=" + std::to_string(kGeometryDim);
  s += " true_rank=" + std::to_string(g.true_rank);
  s += " modality_count=" + std::to_string(g.modality_count);
  s += " selection_bias_strength=" + format_double(g.selection_bias_strength);
  s += " selection_base_logit=" + format_double(g.selection_base_logit);
  s += " feature_noise=" + format_double(g.feature_noise);
  s += " mode_sharpness=" + format_double(g.mode_sharpness);
  s += " component_decay=" + format_double(g.component_decay);
  s += " gt_perturbation=" + format_double(g.gt_perturbation);
  s += " scenes=" + std::to_string(g.scenes);
  s += " objects_per_scene=" + std::to_string(g.objects_per_scene);
  s += " seed=" + std::to_string(g.seed);
  return s;
}

inline GenSpec parse_spec_fields(text::Record& rec) {
  GenSpec g;
  g.n_obj_classes = rec.keyed_u64("n_obj_classes");
  g.n_pred_classes = rec.keyed_u64("n_pred_classes");
  g.obj_feature_dim = rec.keyed_u64("obj_feature_dim");
  if (rec.keyed_u64("geometry_dim") != kGeometryDim) rec.fail("geometry_dim", "unsupported");
  g.true_rank = rec.keyed_u64("true_rank");
  g.modality_count = rec.keyed_u64("modality_count");
  g.selection_bias_strength = rec.keyed_real("selection_bias_strength");
  g.selection_base_logit = rec.keyed_real("selection_base_logit");
  g.feature_noise = rec.keyed_real("feature_noise");
  g.mode_sharpness = rec.keyed_real("mode_sharpness");
  g.component_decay = rec.keyed_real("component_decay");
  g.gt_perturbation = rec.keyed_real("gt_perturbation");
  g.scenes = rec.keyed_u64("scenes");
  g.objects_per_scene = rec.keyed_u64("objects_per_scene");
  g.seed = rec.keyed_u64("seed");
  return g;
}

}  // namespace detail

/// Serialize scenes as HDR / OBJ / PAIR / GT records. GT records are written
/// only when `with_gt` is set and the pair carries one.
inline std::string format_dataset(const GenSpec& spec, const std::string& split,
                                  std::span<const Scene> scenes, bool with_gt) {
  std::string out = "HDR lrtd-dataset version=" + std::to_string(kDatasetVersion) +
                    " split=" + split + " scene_count=" + std::to_string(scenes.size()) +
                    detail::spec_fields(spec) + "\n";
  for (const auto& sc : scenes) {
    for (const auto& o : sc.objects) {
      out += "OBJ " + std::to_string(sc.scene_id) + " " + std::to_string(o.object_id) + " " +
             std::to_string(o.latent_class);
      text::append_double(out, o.det_confidence);
      out += " " + std::to_string(o.feature.size());
      for (double x : o.feature) text::append_double(out, x);
      out += '\n';
    }
    for (const auto& p : sc.pairs) {
      out += "PAIR " + std::to_string(sc.scene_id) + " " + std::to_string(p.subject_id) + " " +
             std::to_string(p.object_id);
      for (double x : p.geometry) text::append_double(out, x);
      out += p.selected ? " 1" : " 0";
      if (p.annotation)
        out += " " + std::to_string(p.annotation->i) + " " + std::to_string(p.annotation->j) +
               " " + std::to_string(p.annotation->k);
      else
        out += " -";
      out += '\n';
    }
    if (!with_gt) continue;
    for (const auto& p : sc.pairs) {
      if (!p.gt) continue;
      out += "GT " + std::to_string(sc.scene_id) + " " + std::to_string(p.subject_id) + " " +
             std::to_string(p.object_id) + " " + std::to_string(p.gt->rank());
      for (double x : p.gt->flat()) text::append_double(out, x);
      out += '\n';
    }
  }
  return out;
}

inline void save_dataset(const std::filesystem::path& path, const GenSpec& spec,
                         const std::string& split, std::span<const Scene> scenes, bool with_gt) {
  text::write_file_atomic(path, format_dataset(spec, split, scenes, with_gt));
}

inline DatasetFile parse_dataset(std::string_view contents) {
  const auto ls = text::lines(contents);
  if (ls.empty()) throw ParseError(1, "HDR", "empty dataset file");
  DatasetFile file;
  std::size_t expected_scenes = 0;
  {
    text::Record hdr(1, ls[0]);
    if (hdr.word("tag") != "HDR") hdr.fail("tag", "first record must be HDR");
    if (hdr.word("format") != "lrtd-dataset") hdr.fail("format", "not an lrtd dataset");
    const auto version = hdr.keyed_u64("version");
    if (version != static_cast<std::uint64_t>(kDatasetVersion))
      throw VersionError("dataset version " + std::to_string(version) + " is not supported (expected " +
                         std::to_string(kDatasetVersion) + ")");
    file.split = std::string(hdr.keyed("split"));
    expected_scenes = hdr.keyed_u64("scene_count");
    file.spec = detail::parse_spec_fields(hdr);
    hdr.expect_end();
  }
  const GenSpec& g = file.spec;
  const Shape3 shape = g.shape();

  auto find_pair = [](Scene& sc, std::size_t s, std::size_t o) -> PairSample* {
    for (auto& p : sc.pairs)
      if (p.subject_id == s && p.object_id == o) return &p;
    return nullptr;
  };

  std::set<std::size_t> seen_scenes;
  for (std::size_t n = 1; n < ls.size(); ++n) {
    text::Record rec(n + 1, ls[n]);
    if (rec.empty()) continue;
    const auto tag = rec.word("tag");
    if (tag == "OBJ") {
      const std::size_t scene_id = rec.count("scene_id");
      if (file.scenes.empty() || file.scenes.back().scene_id != scene_id) {
        if (!seen_scenes.insert(scene_id).second) rec.fail("scene_id", "scene records are not contiguous");
        Scene sc;
        sc.scene_id = scene_id;
        file.scenes.push_back(std::move(sc));
      }
      Scene& sc = file.scenes.back();
      if (!sc.pairs.empty()) rec.fail("scene_id", "object record after pair records");
      SceneObject o;
      o.object_id = rec.count("object_id");
      if (o.object_id != sc.objects.size()) rec.fail("object_id", "objects must be numbered 0..N-1 in order");
      o.latent_class = rec.count("class");
      if (o.latent_class >= g.n_obj_classes) rec.fail("class", "class index out of range");
      o.det_confidence = rec.real("confidence");
      if (!(o.det_confidence > 0.0 && o.det_confidence <= 1.0))
        rec.fail("confidence", "must lie in (0,1]");
      const std::size_t width = rec.count("feature_width");
      if (width != g.obj_feature_dim) rec.fail("feature_width", "does not match header");
      o.feature.resize(width);
      for (std::size_t f = 0; f < width; ++f) o.feature[f] = rec.real("feature[" + std::to_string(f) + "]");
      rec.expect_end();
      sc.objects.push_back(std::move(o));
    } else if (tag == "PAIR") {
      const std::size_t scene_id = rec.count("scene_id");
      if (file.scenes.empty() || file.scenes.back().scene_id != scene_id)
        rec.fail("scene_id", "pair refers to a scene without objects");
      Scene& sc = file.scenes.back();
      PairSample p;
      p.subject_id = rec.count("subject_id");
      p.object_id = rec.count("object_id");
      if (p.subject_id >= sc.objects.size()) rec.fail("subject_id", "unknown object");
      if (p.object_id >= sc.objects.size()) rec.fail("object_id", "unknown object");
      if (p.subject_id == p.object_id) rec.fail("object_id", "subject and object must differ");
      if (find_pair(sc, p.subject_id, p.object_id)) rec.fail("object_id", "duplicate pair");
      p.geometry.resize(kGeometryDim);
      for (std::size_t f = 0; f < kGeometryDim; ++f) p.geometry[f] = rec.real("geometry[" + std::to_string(f) + "]");
      const auto sel = rec.word("selected");
      if (sel != "0" && sel != "1") rec.fail("selected", "expected 0 or 1");
      p.selected = sel == "1";
      const auto ann = rec.word("annotation");
      if (ann == "-") {
        if (p.selected) rec.fail("annotation", "selected pair without annotation");
      } else {
        if (!p.selected) rec.fail("annotation", "annotation on an unselected pair");
        TripletIndex t;
        std::uint64_t i = 0;
        auto [ptr, ec] = std::from_chars(ann.data(), ann.data() + ann.size(), i);
        if (ec != std::errc() || ptr != ann.data() + ann.size()) rec.fail("annotation.i", "not an index");
        t.i = static_cast<std::size_t>(i);
        t.j = rec.count("annotation.j");
        t.k = rec.count("annotation.k");
        if (t.i >= shape.n_s || t.j >= shape.n_p || t.k >= shape.n_o)
          rec.fail("annotation", "triplet outside shape " + to_string(shape));
        p.annotation = t;
      }
      rec.expect_end();
      p.pair_feature = make_pair_feature(sc.objects[p.subject_id], sc.objects[p.object_id], p.geometry);
      sc.pairs.push_back(std::move(p));
    } else if (tag == "GT") {
      const std::size_t scene_id = rec.count("scene_id");
      if (file.scenes.empty() || file.scenes.back().scene_id != scene_id)
        rec.fail("scene_id", "GT refers to an unknown scene");
      Scene& sc = file.scenes.back();
      const std::size_t s = rec.count("subject_id");
      const std::size_t o = rec.count("object_id");
      PairSample* p = find_pair(sc, s, o);
      if (!p) rec.fail("object_id", "GT for an unknown pair");
      if (p->gt) rec.fail("object_id", "duplicate GT record");
      const std::size_t rank = rec.count("rank");
      if (rank == 0) rec.fail("rank", "must be >= 1");
      std::vector<double> values(rank * shape.dim_sum());
      for (std::size_t v = 0; v < values.size(); ++v) values[v] = rec.real("score[" + std::to_string(v) + "]");
      rec.expect_end();
      try {
        p->gt = CpScores(shape, rank, std::move(values));
      } catch (const Error& e) {
        rec.fail("score", e.what());
      }
    } else if (tag == "HDR") {
      rec.fail("tag", "duplicate HDR record");
    } else {
      rec.fail("tag", "unknown record tag '" + std::string(tag) + "'");
    }
  }
  for (const auto& sc : file.scenes) {
    const std::size_t n = sc.objects.size();
    if (sc.pairs.size() != n * (n - 1))
      throw ParseError(ls.size(), "PAIR", "scene " + std::to_string(sc.scene_id) + " has " +
                                              std::to_string(sc.pairs.size()) + " pairs, expected " +
                                              std::to_string(n * (n - 1)));
  }
  if (file.scenes.size() != expected_scenes)
    throw ParseError(1, "scene_count", "header declares " + std::to_string(expected_scenes) +
                                           " scenes, file holds " + std::to_string(file.scenes.size()));
  return file;
}

inline DatasetFile load_dataset(const std::filesystem::path& path) {
  return parse_dataset(text::read_file(path));
}

// ---------------------------------------------------------------------------
// Balanced selection examples

struct SelectionExample {
  std::span<const double> feature;
  int label = 0;
};

/// Per epoch: every positive pair once plus an equal number of null pairs,
/// drawn without replacement (with replacement when nulls are scarcer),
/// shuffled together. Views into `scenes`, which must outlive this object.
class BalancedSelectionBatches {
 public:
  BalancedSelectionBatches(std::span<const Scene> scenes, std::uint64_t seed) : seed_(seed) {
    for (const auto& s : scenes)
      for (const auto& p : s.pairs) (p.selected ? positives_ : negatives_).push_back(&p);
    if (positives_.empty() || negatives_.empty())
      throw DegenerateInputError("selection training needs both annotated and null pairs (" +
                                 std::to_string(positives_.size()) + " positive, " +
                                 std::to_string(negatives_.size()) + " null)");
  }

  std::size_t positives() const { return positives_.size(); }
  std::size_t negatives() const { return negatives_.size(); }

  std::vector<SelectionExample> next_epoch() {
    Rng rng(derive_seed(seed_, static_cast<std::uint64_t>(epoch_++)));
    const std::size_t n = positives_.size();
    std::vector<SelectionExample> out;
    out.reserve(2 * n);
    for (const PairSample* p : positives_) out.push_back({p->pair_feature, 1});
    if (negatives_.size() >= n) {
      std::vector<std::size_t> idx(negatives_.size());
      for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
      for (std::size_t i = 0; i < n; ++i) std::swap(idx[i], idx[i + rng.index(idx.size() - i)]);
      for (std::size_t i = 0; i < n; ++i) out.push_back({negatives_[idx[i]]->pair_feature, 0});
    } else {
      for (std::size_t i = 0; i < n; ++i)
        out.push_back({negatives_[rng.index(negatives_.size())]->pair_feature, 0});
    }
    rng.shuffle(out);
    return out;
  }

 private:
  std::uint64_t seed_;
  std::size_t epoch_ = 0;
  std::vector<const PairSample*> positives_;
  std::vector<const PairSample*> negatives_;
};

}  // namespace lrtd
