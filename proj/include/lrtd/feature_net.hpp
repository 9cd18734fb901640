#pragma once

// Pair-feature network producing the 3·R score vectors of a CpScores, plus a
// logistic head for the probability that a pair gets annotated at all.
//
// Each variable has its own branch:
//   h_a      = relu(W1_a x + b1_a)
//   scores_a = W2_a h_a + b2_a        (R·dim_a outputs, component-major)

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "lrtd/cp_dist.hpp"
#include "lrtd/error.hpp"
#include "lrtd/math.hpp"
#include "lrtd/rng.hpp"
#include "lrtd/tensor.hpp"

namespace lrtd {

/// Row-major dense matrix.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}

  double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
  double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }

  friend bool operator==(const Matrix&, const Matrix&) = default;
};

struct Branch {
  Matrix w1;               // hidden × feature
  std::vector<double> b1;  // hidden
  Matrix w2;               // rank·dim × hidden
  std::vector<double> b2;  // rank·dim

  friend bool operator==(const Branch&, const Branch&) = default;
};

struct ModelParams {
  std::size_t feature_dim = 0;
  std::size_t hidden_dim = 0;
  Shape3 shape;
  std::size_t rank = 0;
  std::array<Branch, 3> branches;
  std::vector<double> w_sel;
  double b_sel = 0.0;

  Branch& branch(Var a) { return branches[static_cast<std::size_t>(a)]; }
  const Branch& branch(Var a) const { return branches[static_cast<std::size_t>(a)]; }

  /// Visit every parameter array in a fixed order with a stable name.
  /// The triplet branches come first, the selection head last.
  template <typename F>
  void for_each_tensor(F&& f) {
    for_each_impl(*this, f);
  }
  template <typename F>
  void for_each_tensor(F&& f) const {
    for_each_impl(*this, f);
  }

  friend bool operator==(const ModelParams&, const ModelParams&) = default;

 private:
  template <typename Self, typename F>
  static void for_each_impl(Self& self, F& f) {
    static constexpr std::array<const char*, 3> tag{"s", "p", "o"};
    for (std::size_t a = 0; a < 3; ++a) {
      auto& b = self.branches[a];
      f(std::string("W1_") + tag[a], std::span(b.w1.data));
      f(std::string("b1_") + tag[a], std::span(b.b1));
      f(std::string("W2_") + tag[a], std::span(b.w2.data));
      f(std::string("b2_") + tag[a], std::span(b.b2));
    }
    f(std::string("w_sel"), std::span(self.w_sel));
    f(std::string("b_sel"), std::span(&self.b_sel, 1));
  }
};

/// Gradients share the parameter layout.
using ParamGrads = ModelParams;

inline bool is_selection_tensor(const std::string& name) {
  return name == "w_sel" || name == "b_sel";
}

inline ModelParams zeros_like(const ModelParams& m) {
  ModelParams z = m;
  z.for_each_tensor([](const std::string&, std::span<double> v) {
    for (double& x : v) x = 0.0;
  });
  return z;
}

inline void check_dims(std::size_t feature_dim, std::size_t hidden_dim, const Shape3& shape,
                       std::size_t rank) {
  validate(shape);
  if (feature_dim == 0 || hidden_dim == 0 || rank == 0)
    throw ShapeError("feature_dim, hidden_dim and rank must all be >= 1");
}

/// Weights ~ U[-1/sqrt(fan_in), 1/sqrt(fan_in)], biases zero.
inline ModelParams init_params(std::size_t feature_dim, std::size_t hidden_dim, const Shape3& shape,
                               std::size_t rank, std::uint64_t seed) {
  check_dims(feature_dim, hidden_dim, shape, rank);
  Rng rng(seed);
  ModelParams m;
  m.feature_dim = feature_dim;
  m.hidden_dim = hidden_dim;
  m.shape = shape;
  m.rank = rank;
  auto fill_uniform = [&rng](std::vector<double>& v, std::size_t fan_in) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (double& x : v) x = rng.uniform(-bound, bound);
  };
  for (Var a : kAllVars) {
    Branch& b = m.branch(a);
    const std::size_t out = rank * shape.dim(a);
    b.w1 = Matrix(hidden_dim, feature_dim);
    b.b1.assign(hidden_dim, 0.0);
    b.w2 = Matrix(out, hidden_dim);
    b.b2.assign(out, 0.0);
    fill_uniform(b.w1.data, feature_dim);
    fill_uniform(b.w2.data, hidden_dim);
  }
  m.w_sel.assign(feature_dim, 0.0);
  fill_uniform(m.w_sel, feature_dim);
  m.b_sel = 0.0;
  return m;
}

struct ForwardCache {
  std::vector<double> input;
  std::array<std::vector<double>, 3> pre;   // W1 x + b1, per branch
  std::array<std::vector<double>, 3> post;  // relu(pre)
};

struct ForwardResult {
  CpScores scores;
  ForwardCache cache;
};

inline ForwardResult forward(const ModelParams& m, std::span<const double> x) {
  if (x.size() != m.feature_dim)
    throw ShapeError("feature length " + std::to_string(x.size()) + ", model expects " +
                     std::to_string(m.feature_dim));
  ForwardResult res{CpScores(m.shape, m.rank), {}};
  res.cache.input.assign(x.begin(), x.end());
  for (Var a : kAllVars) {
    const std::size_t ai = static_cast<std::size_t>(a);
    const Branch& b = m.branch(a);
    auto& pre = res.cache.pre[ai];
    auto& post = res.cache.post[ai];
    pre.assign(m.hidden_dim, 0.0);
    post.assign(m.hidden_dim, 0.0);
    for (std::size_t h = 0; h < m.hidden_dim; ++h) {
      double acc = b.b1[h];
      const double* row = &b.w1.data[h * m.feature_dim];
      for (std::size_t f = 0; f < m.feature_dim; ++f) acc += row[f] * x[f];
      pre[h] = acc;
      post[h] = acc > 0.0 ? acc : 0.0;
    }
    auto out = res.scores.block(a);
    for (std::size_t o = 0; o < out.size(); ++o) {
      double acc = b.b2[o];
      const double* row = &b.w2.data[o * m.hidden_dim];
      for (std::size_t h = 0; h < m.hidden_dim; ++h) acc += row[h] * post[h];
      out[o] = acc;
    }
  }
  return res;
}

/// Chain dL/dscores through both layers of every branch. The selection-head
/// entries of the result are zero.
inline ParamGrads backward(const ModelParams& m, const ForwardCache& cache, const CpGrad& g) {
  if (cache.input.size() != m.feature_dim)
    throw ShapeError("forward cache was not produced by these parameters");
  if (g.shape() != m.shape || g.rank() != m.rank)
    throw ShapeError("score gradient layout does not match the model");
  ParamGrads out = zeros_like(m);
  const auto& x = cache.input;
  for (Var a : kAllVars) {
    const std::size_t ai = static_cast<std::size_t>(a);
    const Branch& b = m.branch(a);
    Branch& d = out.branch(a);
    const auto& pre = cache.pre[ai];
    const auto& post = cache.post[ai];
    if (pre.size() != m.hidden_dim || post.size() != m.hidden_dim)
      throw ShapeError("forward cache was not produced by these parameters");
    auto dy = g.block(a);
    std::vector<double> dh(m.hidden_dim, 0.0);
    for (std::size_t o = 0; o < dy.size(); ++o) {
      const double go = dy[o];
      d.b2[o] = go;
      if (go == 0.0) continue;
      double* drow = &d.w2.data[o * m.hidden_dim];
      const double* row = &b.w2.data[o * m.hidden_dim];
      for (std::size_t h = 0; h < m.hidden_dim; ++h) {
        drow[h] = go * post[h];
        dh[h] += go * row[h];
      }
    }
    for (std::size_t h = 0; h < m.hidden_dim; ++h) {
      // relu'(0) := 0
      const double dpre = pre[h] > 0.0 ? dh[h] : 0.0;
      d.b1[h] = dpre;
      if (dpre == 0.0) continue;
      double* drow = &d.w1.data[h * m.feature_dim];
      for (std::size_t f = 0; f < m.feature_dim; ++f) drow[f] = dpre * x[f];
    }
  }
  return out;
}

inline double sel_logit(const ModelParams& m, std::span<const double> x) {
  if (x.size() != m.feature_dim || m.w_sel.size() != m.feature_dim)
    throw ShapeError("selection head expects " + std::to_string(m.feature_dim) +
                     " features, got " + std::to_string(x.size()));
  double z = m.b_sel;
  for (std::size_t f = 0; f < x.size(); ++f) z += m.w_sel[f] * x[f];
  return z;
}

/// P(pair is annotated | features), kept strictly inside (0, 1).
inline double sel_forward(const ModelParams& m, std::span<const double> x) {
  return std::clamp(sigmoid(sel_logit(m, x)), std::numeric_limits<double>::min(),
                    std::nextafter(1.0, 0.0));
}

/// log P(pair is annotated | features), stable for large |logit|.
inline double sel_log_prob(const ModelParams& m, std::span<const double> x) {
  return log_sigmoid(sel_logit(m, x));
}

struct SelGrad {
  std::vector<double> w;
  double b = 0.0;
};

/// Logistic-loss gradient: (p - label)·x and (p - label).
inline SelGrad sel_backward(const ModelParams& m, std::span<const double> x, int label) {
  const double p = sel_forward(m, x);
  const double err = p - static_cast<double>(label);
  SelGrad g;
  g.w.resize(x.size());
  for (std::size_t f = 0; f < x.size(); ++f) g.w[f] = err * x[f];
  g.b = err;
  return g;
}

/// Binary cross-entropy of the selection head on one example.
inline double sel_loss(const ModelParams& m, std::span<const double> x, int label) {
  const double z = sel_logit(m, x);
  // log(1 + e^z) - label·z
  const double softplus = z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
  return softplus - static_cast<double>(label) * z;
}

}  // namespace lrtd
