#pragma once

// Normalized low-rank non-negative CP tensors as distributions over triplets.
//
// A CpScores value holds R raw score vectors per variable. The factor entries
// are exp(score), so the unnormalized tensor is
//
//   psi(i,j,k) = sum_r exp(s_s[r][i] + s_p[r][j] + s_o[r][k])
//
// and its partition function factorizes per component:
//
//   Z = sum_r prod_a sum_i exp(s_a[r][i]).
//
// Everything below works in log space and never builds the dense tensor,
// except the dense_* helpers which exist for small-scale ranking.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "lrtd/error.hpp"
#include "lrtd/math.hpp"
#include "lrtd/rng.hpp"
#include "lrtd/tensor.hpp"

namespace lrtd {

/// Score vectors s_{a,r} for a ∈ {s,p,o}, r < rank. Flat layout: the subject
/// block (rank × n_s), then predicate (rank × n_p), then object (rank × n_o),
/// each block row-major by component.
class CpScores {
 public:
  CpScores() = default;

  CpScores(Shape3 shape, std::size_t rank, double fill = 0.0)
      : shape_(shape), rank_(rank), data_(rank * shape.dim_sum(), fill) {
    check_layout();
  }

  CpScores(Shape3 shape, std::size_t rank, std::vector<double> data)
      : shape_(shape), rank_(rank), data_(std::move(data)) {
    check_layout();
    if (data_.size() != rank_ * shape_.dim_sum())
      throw ShapeError("CpScores expects " + std::to_string(rank_ * shape_.dim_sum()) +
                       " values, got " + std::to_string(data_.size()));
    for (double x : data_)
      if (!std::isfinite(x)) throw DegenerateInputError("CpScores entries must be finite");
  }

  const Shape3& shape() const { return shape_; }
  std::size_t rank() const { return rank_; }

  std::span<const double> vec(Var a, std::size_t r) const {
    return {data_.data() + offset(a, r), shape_.dim(a)};
  }
  std::span<double> vec(Var a, std::size_t r) { return {data_.data() + offset(a, r), shape_.dim(a)}; }

  /// The rank × dim values of one variable.
  std::span<const double> block(Var a) const {
    return {data_.data() + offset(a, 0), rank_ * shape_.dim(a)};
  }
  std::span<double> block(Var a) { return {data_.data() + offset(a, 0), rank_ * shape_.dim(a)}; }

  std::span<const double> flat() const { return data_; }
  std::span<double> flat() { return data_; }

  std::size_t offset(Var a, std::size_t r) const {
    std::size_t base = 0;
    for (Var b : kAllVars) {
      if (b == a) break;
      base += rank_ * shape_.dim(b);
    }
    return base + r * shape_.dim(a);
  }

  friend bool operator==(const CpScores&, const CpScores&) = default;

 private:
  void check_layout() const {
    validate(shape_);
    if (rank_ == 0) throw ShapeError("CP rank must be >= 1");
  }

  Shape3 shape_;
  std::size_t rank_ = 0;
  std::vector<double> data_;
};

/// dL/ds with the same layout as the scores it differentiates.
using CpGrad = CpScores;

namespace detail {

/// lse of every score vector, indexed [a][r].
inline std::array<std::vector<double>, 3> vector_lse(const CpScores& c) {
  std::array<std::vector<double>, 3> out;
  for (Var a : kAllVars) {
    auto& row = out[static_cast<std::size_t>(a)];
    row.resize(c.rank());
    for (std::size_t r = 0; r < c.rank(); ++r) row[r] = log_sum_exp(c.vec(a, r));
  }
  return out;
}

/// log of component r's total mass: sum_a lse(s_{a,r}).
inline std::vector<double> component_log_mass(const std::array<std::vector<double>, 3>& lse,
                                              std::size_t rank) {
  std::vector<double> out(rank);
  for (std::size_t r = 0; r < rank; ++r) out[r] = lse[0][r] + lse[1][r] + lse[2][r];
  return out;
}

/// s_s[r][i] + s_p[r][j] + s_o[r][k] for every r.
inline std::vector<double> component_entry_scores(const CpScores& c, const TripletIndex& t) {
  std::vector<double> out(c.rank());
  for (std::size_t r = 0; r < c.rank(); ++r)
    out[r] = c.vec(Var::subject, r)[t.i] + c.vec(Var::predicate, r)[t.j] +
             c.vec(Var::object, r)[t.k];
  return out;
}

}  // namespace detail

/// log Z in O(R·(n_s+n_p+n_o)).
inline double log_partition(const CpScores& c) {
  const auto lse = detail::vector_lse(c);
  return log_sum_exp(detail::component_log_mass(lse, c.rank()));
}

inline double log_prob(const CpScores& c, const TripletIndex& t) {
  check_index(c.shape(), t);
  return log_sum_exp(detail::component_entry_scores(c, t)) - log_partition(c);
}

/// Cross-entropy against the one-hot target tensor at t.
inline double nll_loss(const CpScores& c, const TripletIndex& t) {
  return std::max(0.0, -log_prob(c, t));
}

/// Exact dL/ds for L = -log y(t), without materializing the tensor.
///
/// For variable a, component r and class index x:
///   dL/ds_a[r][x] = exp(s_a[r][x] + sum_{b != a} lse(s_b[r]) - log Z)
///                   - [x == t_a] * resp_r
/// where resp_r is component r's posterior share of the observed entry t.
inline CpGrad nll_gradient(const CpScores& c, const TripletIndex& t) {
  check_index(c.shape(), t);
  const std::size_t rank = c.rank();
  const auto lse = detail::vector_lse(c);
  const auto comp_mass = detail::component_log_mass(lse, rank);
  const double log_z = log_sum_exp(comp_mass);

  auto entry = detail::component_entry_scores(c, t);
  const double log_entry = log_sum_exp(entry);

  CpGrad g(c.shape(), rank);
  for (std::size_t r = 0; r < rank; ++r) {
    const double resp = std::exp(entry[r] - log_entry);
    for (Var a : kAllVars) {
      const std::size_t ai = static_cast<std::size_t>(a);
      // Mass of the other two variables' vectors in component r.
      const double others = comp_mass[r] - lse[ai][r] - log_z;
      auto s = c.vec(a, r);
      auto d = g.vec(a, r);
      for (std::size_t x = 0; x < s.size(); ++x) d[x] = std::exp(s[x] + others);
      d[t.at(a)] -= resp;
    }
  }
  return g;
}

/// w_r = Z_r / Z; the weights absorbed into the score vectors.
inline std::vector<double> mixture_weights(const CpScores& c) {
  const auto lse = detail::vector_lse(c);
  auto w = detail::component_log_mass(lse, c.rank());
  const double log_z = log_sum_exp(w);
  for (double& x : w) x = std::exp(x - log_z);
  return w;
}

/// Marginal distribution of one variable: sum_r w_r softmax(s_{a,r}).
inline std::vector<double> marginal(const CpScores& c, Var a) {
  const auto w = mixture_weights(c);
  std::vector<double> out(c.shape().dim(a), 0.0);
  for (std::size_t r = 0; r < c.rank(); ++r) {
    const auto p = softmax(c.vec(a, r));
    for (std::size_t x = 0; x < out.size(); ++x) out[x] += w[r] * p[x];
  }
  return out;
}

/// Inverse-CDF draw from a probability vector (need not be exactly normalized).
inline std::size_t sample_categorical(std::span<const double> probs, Rng& rng) {
  double total = 0.0;
  for (double p : probs) total += p;
  const double u = rng.uniform() * total;
  double cum = 0.0;
  for (std::size_t x = 0; x < probs.size(); ++x) {
    cum += probs[x];
    if (u < cum) return x;
  }
  // Rounding can leave u == total; return the last index with positive mass.
  for (std::size_t x = probs.size(); x-- > 0;)
    if (probs[x] > 0.0) return x;
  return probs.size() - 1;
}

/// Ancestral sampling: component first, then each variable independently.
inline TripletIndex sample(const CpScores& c, Rng& rng) {
  const auto w = mixture_weights(c);
  const std::size_t r = sample_categorical(w, rng);
  TripletIndex t;
  t.i = sample_categorical(softmax(c.vec(Var::subject, r)), rng);
  t.j = sample_categorical(softmax(c.vec(Var::predicate, r)), rng);
  t.k = sample_categorical(softmax(c.vec(Var::object, r)), rng);
  return t;
}

/// Dense tensor of log y(i,j,k). Costs R·n_s·n_p·n_o; small shapes only.
inline DenseTensor dense_log_prob(const CpScores& c) {
  const Shape3& sh = c.shape();
  const double log_z = log_partition(c);
  DenseTensor out(sh);
  std::vector<double> terms(c.rank());
  for (std::size_t i = 0; i < sh.n_s; ++i)
    for (std::size_t j = 0; j < sh.n_p; ++j)
      for (std::size_t k = 0; k < sh.n_o; ++k) {
        for (std::size_t r = 0; r < c.rank(); ++r)
          terms[r] = c.vec(Var::subject, r)[i] + c.vec(Var::predicate, r)[j] +
                     c.vec(Var::object, r)[k];
        out(i, j, k) = log_sum_exp(terms) - log_z;
      }
  return out;
}

inline DenseTensor dense_prob(const CpScores& c) {
  DenseTensor out = dense_log_prob(c);
  for (double& x : out.values()) x = std::exp(x);
  return out;
}

}  // namespace lrtd
