#pragma once

// Central finite-difference checks of the closed-form CP gradient and of the
// full parameter gradient through the feature network.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "lrtd/cp_dist.hpp"
#include "lrtd/feature_net.hpp"
#include "lrtd/rng.hpp"

namespace lrtd {

/// |a - b| / max(|a|, |b|, floor). The floor keeps near-zero entries from
/// turning rounding noise into large ratios.
inline double relative_error(double analytic, double numeric, double floor = 1e-3) {
  const double scale = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / scale;
}

struct GradCheckOptions {
  std::size_t instances = 100;
  std::size_t max_dim = 6;  // subject/object dims drawn in [1, max_dim], predicate in [1, max_dim-1]
  std::size_t rank = 0;     // 0 draws R in [1, 4]
  std::size_t feature_dim = 5;
  std::size_t hidden_dim = 6;
  std::size_t net_instances = 50;
  double step = 1e-5;
  double threshold = 1e-5;
  double kink_margin = 1e-3;
  std::uint64_t seed = 7;
  /// Negative control: perturbs one analytic gradient entry per instance.
  bool corrupt = false;
};

struct GradCheckResult {
  double max_rel_err_scores = 0.0;
  double max_rel_err_params = 0.0;
  double max_rel_err_selection = 0.0;
  std::size_t entries_checked = 0;
  bool pass = false;
};

inline CpScores random_scores(const Shape3& shape, std::size_t rank, Rng& rng, double scale = 1.5) {
  CpScores c(shape, rank);
  for (double& x : c.flat()) x = scale * rng.normal();
  return c;
}

inline TripletIndex random_triplet(const Shape3& shape, Rng& rng) {
  return {rng.index(shape.n_s), rng.index(shape.n_p), rng.index(shape.n_o)};
}

inline GradCheckResult run_gradcheck(const GradCheckOptions& opt) {
  GradCheckResult res;
  Rng rng(opt.seed);
  const double h = opt.step;
  auto draw_shape = [&] {
    return Shape3{1 + rng.index(opt.max_dim), 1 + rng.index(std::max<std::size_t>(opt.max_dim - 1, 1)),
                  1 + rng.index(opt.max_dim)};
  };
  auto draw_rank = [&] { return opt.rank ? opt.rank : 1 + rng.index(4); };

  for (std::size_t n = 0; n < opt.instances; ++n) {
    const Shape3 shape = draw_shape();
    CpScores c = random_scores(shape, draw_rank(), rng);
    const TripletIndex t = random_triplet(shape, rng);
    CpGrad g = nll_gradient(c, t);
    if (opt.corrupt) g.flat()[rng.index(g.flat().size())] += 0.05;
    for (std::size_t e = 0; e < c.flat().size(); ++e) {
      const double saved = c.flat()[e];
      c.flat()[e] = saved + h;
      const double up = nll_loss(c, t);
      c.flat()[e] = saved - h;
      const double down = nll_loss(c, t);
      c.flat()[e] = saved;
      const double numeric = (up - down) / (2.0 * h);
      res.max_rel_err_scores = std::max(res.max_rel_err_scores, relative_error(g.flat()[e], numeric));
      ++res.entries_checked;
    }
  }

  for (std::size_t n = 0; n < opt.net_instances; ++n) {
    const Shape3 shape = draw_shape();
    ModelParams m = init_params(opt.feature_dim, opt.hidden_dim, shape, draw_rank(), rng.bits());
    // Non-zero biases so the check also covers them.
    m.for_each_tensor([&rng](const std::string& name, std::span<double> v) {
      if (name.rfind("b", 0) == 0)
        for (double& x : v) x = 0.3 * rng.normal();
    });
    std::vector<double> x(opt.feature_dim);
    // Inputs that put a hidden unit within kink_margin of its relu kink are redrawn.
    auto near_kink = [&] {
      const auto cache = forward(m, x).cache;
      for (const auto& pre : cache.pre)
        for (double z : pre)
          if (std::abs(z) < opt.kink_margin) return true;
      return false;
    };
    do {
      for (double& v : x) v = rng.normal();
    } while (near_kink());
    const TripletIndex t = random_triplet(shape, rng);
    const int label = static_cast<int>(rng.index(2));

    const auto fw = forward(m, x);
    ParamGrads grads = backward(m, fw.cache, nll_gradient(fw.scores, t));
    const SelGrad sg = sel_backward(m, x, label);
    grads.w_sel = sg.w;
    grads.b_sel = sg.b;
    if (opt.corrupt) grads.branch(Var::predicate).b2[0] += 0.05;

    std::vector<std::span<const double>> analytic;
    grads.for_each_tensor([&analytic](const std::string&, std::span<const double> v) { analytic.push_back(v); });
    std::size_t tensor = 0;
    m.for_each_tensor([&](const std::string& name, std::span<double> v) {
      const auto a = analytic[tensor++];
      const bool sel = is_selection_tensor(name);
      auto loss = [&] { return sel ? sel_loss(m, x, label) : nll_loss(forward(m, x).scores, t); };
      for (std::size_t e = 0; e < v.size(); ++e) {
        const double saved = v[e];
        v[e] = saved + h;
        const double up = loss();
        v[e] = saved - h;
        const double down = loss();
        v[e] = saved;
        const double err = relative_error(a[e], (up - down) / (2.0 * h));
        double& slot = sel ? res.max_rel_err_selection : res.max_rel_err_params;
        slot = std::max(slot, err);
        ++res.entries_checked;
      }
    });
  }
  res.pass = res.max_rel_err_scores <= opt.threshold && res.max_rel_err_params <= opt.threshold &&
             res.max_rel_err_selection <= opt.threshold;
  return res;
}

}  // namespace lrtd
