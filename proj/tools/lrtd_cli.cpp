// lrtd: generate synthetic relation data, train low-rank triplet models,
// evaluate recall@N, check gradients and inspect checkpoints.

#include <cstdint>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <iostream>
#include <limits>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "lrtd/lrtd.hpp"

namespace fs = std::filesystem;

namespace {

struct GlobalOptions {
  std::uint64_t seed = 1;
  std::string out_dir = ".";
  bool quiet = false;
};

struct DataOptions {
  std::string data_dir;  // defaults to --out-dir
  std::string model;     // defaults to <out-dir>/model.lrtd

  fs::path data_path(const GlobalOptions& g) const { return data_dir.empty() ? fs::path(g.out_dir) : fs::path(data_dir); }
  fs::path model_path(const GlobalOptions& g) const {
    return model.empty() ? fs::path(g.out_dir) / "model.lrtd" : fs::path(model);
  }
};

const char* const kSplits[] = {"train", "val", "test"};

fs::path split_file(const fs::path& dir, const std::string& split) { return dir / (split + ".lrtd"); }

int cmd_gen_data(const GlobalOptions& g, lrtd::GenSpec spec, bool with_gt) {
  spec.seed = g.seed;
  const lrtd::Dataset d = lrtd::gen_synthetic(spec);
  fs::create_directories(g.out_dir);
  const std::vector<lrtd::Scene>* parts[] = {&d.train, &d.val, &d.test};
  std::size_t total_pairs = 0;
  std::size_t total_selected = 0;
  for (std::size_t s = 0; s < 3; ++s) {
    const auto& scenes = *parts[s];
    lrtd::save_dataset(split_file(g.out_dir, kSplits[s]), spec, kSplits[s], scenes, with_gt);
    std::size_t pairs = 0;
    std::size_t selected = 0;
    for (const auto& sc : scenes) {
      pairs += sc.pairs.size();
      for (const auto& p : sc.pairs) selected += p.selected ? 1 : 0;
    }
    total_pairs += pairs;
    total_selected += selected;
    std::cout << "split=" << kSplits[s] << " scenes=" << scenes.size() << " pairs=" << pairs
              << " annotated=" << selected << "\n";
  }
  std::cout << "total_pairs=" << total_pairs << " total_annotated=" << total_selected << "\n";
  return 0;
}

int cmd_train(const GlobalOptions& g, const DataOptions& io, lrtd::TrainConfig cfg) {
  cfg.seed = g.seed;
  const auto train = lrtd::load_dataset(split_file(io.data_path(g), "train"));
  auto progress = [&g](const lrtd::EpochStats& e) {
    if (g.quiet) return;
    std::printf("progress phase=%s epoch=%zu mean_loss=%.6f wall_seconds=%.3f\n", e.phase.c_str(),
                e.epoch, e.mean_loss, e.wall_seconds);
    std::fflush(stdout);
  };
  const auto model = lrtd::train(cfg, train.scenes, train.spec.shape(), progress);
  const fs::path out = io.model_path(g);
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  lrtd::save_model(model, out);
  if (!g.quiet) std::cout << "model=" << out.string() << "\n";
  return 0;
}

void check_shapes(const lrtd::TrainedModel& m, const lrtd::DatasetFile& d) {
  if (m.params.shape != d.spec.shape() || m.params.feature_dim != d.spec.pair_feature_dim())
    throw lrtd::ShapeError("model shape " + lrtd::to_string(m.params.shape) + " / feature width " +
                           std::to_string(m.params.feature_dim) + " does not match dataset shape " +
                           lrtd::to_string(d.spec.shape()) + " / feature width " +
                           std::to_string(d.spec.pair_feature_dim()));
}

int cmd_eval(const GlobalOptions& g, const DataOptions& io, const lrtd::EvalConfig& cfg,
             const std::string& report_path, const std::string& table_path) {
  const auto model = lrtd::load_model(io.model_path(g));
  const auto val = lrtd::load_dataset(split_file(io.data_path(g), "val"));
  const auto test = lrtd::load_dataset(split_file(io.data_path(g), "test"));
  check_shapes(model, val);
  check_shapes(model, test);
  const auto report = lrtd::evaluate(model, val.scenes, test.scenes, cfg);
  const std::string text = lrtd::format_report(report);
  std::cout << text;
  if (!report_path.empty()) lrtd::text::write_file_atomic(report_path, text);
  if (!table_path.empty()) lrtd::text::write_file_atomic(table_path, lrtd::format_report_table(report));
  return 0;
}

int cmd_gradcheck(const GlobalOptions& g, lrtd::GradCheckOptions opt) {
  opt.seed = g.seed;
  const auto r = lrtd::run_gradcheck(opt);
  std::printf("max_rel_err_scores=%.3e\nmax_rel_err_params=%.3e\nmax_rel_err_selection=%.3e\n",
              r.max_rel_err_scores, r.max_rel_err_params, r.max_rel_err_selection);
  std::printf("entries_checked=%zu\nthreshold=%.1e\nresult=%s\n", r.entries_checked, opt.threshold,
              r.pass ? "PASS" : "FAIL");
  return r.pass ? 0 : 1;
}

int cmd_inspect(const GlobalOptions& g, const DataOptions& io, const std::string& split,
                long long scene_id, std::size_t k, std::vector<double> feature) {
  const auto model = lrtd::load_model(io.model_path(g));
  const auto& p = model.params;
  std::cout << "shape=" << lrtd::to_string(p.shape) << "\nrank=" << p.rank
            << "\nfeature_dim=" << p.feature_dim << "\nhidden_dim=" << p.hidden_dim
            << "\nprior_nonzero=" << model.prior.counts().size() << "\n";
  if (feature.empty()) feature.assign(p.feature_dim, 0.0);
  const auto scores = lrtd::forward(p, feature).scores;
  std::cout << "mixture_weights=";
  const auto w = lrtd::mixture_weights(scores);
  for (std::size_t r = 0; r < w.size(); ++r) std::cout << (r ? "," : "") << lrtd::text::format_double(w[r]);
  std::cout << "\n";
  if (scene_id < 0) return 0;

  const auto data = lrtd::load_dataset(split_file(io.data_path(g), split));
  check_shapes(model, data);
  const lrtd::Scene* scene = nullptr;
  for (const auto& s : data.scenes)
    if (static_cast<long long>(s.scene_id) == scene_id) scene = &s;
  if (!scene)
    throw lrtd::IndexError("scene " + std::to_string(scene_id) + " not found in split '" + split + "'");
  const auto preds = lrtd::score_pairs(model, *scene, k);
  std::cout << "scene=" << scene->scene_id << " objects=" << scene->objects.size() << " k=" << k << "\n";
  for (const auto& pair : scene->pairs) {
    std::cout << "pair " << pair.subject_id << "->" << pair.object_id;
    if (pair.annotation) std::cout << " annotated=" << lrtd::to_string(*pair.annotation);
    std::cout << "\n";
    for (const auto& pr : preds)
      if (pr.subject_id == pair.subject_id && pr.object_id == pair.object_id)
        std::cout << "  top" << pr.pair_rank + 1 << " " << lrtd::to_string(pr.triplet)
                  << " log_f=" << lrtd::text::format_double(pr.score) << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Low-rank tensor triplet distributions: data, training, evaluation"};
  app.require_subcommand(1);
  app.set_config("--config", "", "key=value file setting any flag; command line wins");

  GlobalOptions g;
  app.add_option("--seed", g.seed, "Master seed for every random stream")->capture_default_str();
  app.add_option("--out-dir", g.out_dir, "Directory for output files")->capture_default_str();
  app.add_flag("--quiet", g.quiet, "Suppress progress output");

  // gen-data
  lrtd::GenSpec spec;
  bool with_gt = false;
  auto* gen = app.add_subcommand("gen-data", "Generate train/val/test synthetic datasets");
  gen->add_option("--scenes", spec.scenes)->capture_default_str();
  gen->add_option("--objects", spec.objects_per_scene, "Objects per scene")->capture_default_str();
  gen->add_option("--obj-classes", spec.n_obj_classes)->capture_default_str();
  gen->add_option("--pred-classes", spec.n_pred_classes)->capture_default_str();
  gen->add_option("--obj-feature-dim", spec.obj_feature_dim)->capture_default_str();
  gen->add_option("--true-rank", spec.true_rank)->capture_default_str();
  gen->add_option("--modality-count", spec.modality_count)->capture_default_str();
  gen->add_option("--selection-bias-strength", spec.selection_bias_strength, "Use 'inf' to select every pair")
      ->capture_default_str();
  gen->add_option("--selection-base-logit", spec.selection_base_logit)->capture_default_str();
  gen->add_option("--feature-noise", spec.feature_noise)->capture_default_str();
  gen->add_option("--mode-sharpness", spec.mode_sharpness)->capture_default_str();
  gen->add_option("--component-decay", spec.component_decay)->capture_default_str();
  gen->add_option("--gt-perturbation", spec.gt_perturbation)->capture_default_str();
  gen->add_flag("--with-gt", with_gt, "Also write ground-truth distributions (GT records)");

  DataOptions io;
  auto add_io = [&io](CLI::App* sub) {
    sub->add_option("--data-dir", io.data_dir, "Dataset directory (default: --out-dir)");
    sub->add_option("--model", io.model, "Checkpoint path (default: <out-dir>/model.lrtd)");
  };

  // train
  lrtd::TrainConfig tc;
  auto* trn = app.add_subcommand("train", "Train triplet branches, then the selection head");
  add_io(trn);
  trn->add_option("--learning-rate,--lr", tc.learning_rate)->capture_default_str();
  trn->add_option("--clip-norm", tc.clip_norm)->capture_default_str();
  trn->add_option("--epochs", tc.epochs)->capture_default_str();
  trn->add_option("--batch-size", tc.batch_size)->capture_default_str();
  trn->add_option("--rank", tc.rank)->capture_default_str();
  trn->add_option("--hidden-dim", tc.hidden_dim)->capture_default_str();
  trn->add_option("--sel-learning-rate,--sel-lr", tc.sel_learning_rate)->capture_default_str();
  trn->add_option("--sel-epochs", tc.sel_epochs)->capture_default_str();

  // eval
  lrtd::EvalConfig ec;
  std::string report_path, table_path;
  bool no_prior = false, no_sel = false, no_det = false;
  auto* evl = app.add_subcommand("eval", "Recall@N for k=1 and free k on the test split");
  add_io(evl);
  evl->add_option("--n", ec.n_values, "Recall cutoffs")->delimiter(',')->capture_default_str();
  evl->add_option("--k-grid", ec.k_grid, "Candidate k values for free k")->delimiter(',');
  evl->add_flag("--no-prior", no_prior, "Drop the frequency prior from the score");
  evl->add_flag("--no-selection", no_sel, "Score with P(sel) = 1");
  evl->add_flag("--no-detection", no_det, "Score with P(boxes) = 1");
  evl->add_option("--report", report_path, "Also write the key=value report here");
  evl->add_option("--table", table_path, "Write a tab-separated recall table here");

  // gradcheck
  lrtd::GradCheckOptions gc;
  auto* grd = app.add_subcommand("gradcheck", "Finite-difference check of all analytic gradients");
  grd->add_option("--instances", gc.instances)->capture_default_str();
  grd->add_option("--net-instances", gc.net_instances)->capture_default_str();
  grd->add_option("--rank", gc.rank, "Fixed rank (0 = random in 1..4)")->capture_default_str();
  grd->add_option("--max-dim", gc.max_dim)->capture_default_str();
  grd->add_option("--threshold", gc.threshold)->capture_default_str();
  grd->add_flag("--corrupt", gc.corrupt, "Negative control: perturb the analytic gradients");

  // inspect
  std::string split = "test";
  long long scene_id = -1;
  std::size_t inspect_k = 5;
  std::vector<double> feature;
  auto* ins = app.add_subcommand("inspect", "Print model summary and top-k triplets per pair");
  add_io(ins);
  ins->add_option("--split", split)->check(CLI::IsMember({"train", "val", "test"}))->capture_default_str();
  ins->add_option("--scene", scene_id, "Scene id to rank");
  ins->add_option("--k", inspect_k)->capture_default_str();
  ins->add_option("--feature", feature, "Pair feature for the mixture-weight readout")->delimiter(',');

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (*gen) return cmd_gen_data(g, spec, with_gt);
    if (*trn) return cmd_train(g, io, tc);
    if (*evl) {
      ec.options.use_prior = !no_prior;
      ec.options.use_selection = !no_sel;
      ec.options.use_detection = !no_det;
      return cmd_eval(g, io, ec, report_path, table_path);
    }
    if (*grd) return cmd_gradcheck(g, gc);
    if (*ins) return cmd_inspect(g, io, split, scene_id, inspect_k, feature);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
