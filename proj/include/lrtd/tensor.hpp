#pragma once

// Dense order-3 tensors over (subject, predicate, object) label triplets.
// This is the explicit, materialized representation: every compressed
// computation in cp_dist.hpp has a brute-force counterpart here.

#include <algorithm>
#include <array>
#include <cstddef>
#include <numeric>
#include <span>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "lrtd/error.hpp"

namespace lrtd {

/// The three triplet variables, in storage order.
enum class Var : std::size_t { subject = 0, predicate = 1, object = 2 };

inline constexpr std::array<Var, 3> kAllVars{Var::subject, Var::predicate, Var::object};

inline const char* var_name(Var v) {
  switch (v) {
    case Var::subject:
      return "subject";
    case Var::predicate:
      return "predicate";
    case Var::object:
      return "object";
  }
  return "?";
}

struct Shape3 {
  std::size_t n_s = 1;
  std::size_t n_p = 1;
  std::size_t n_o = 1;

  constexpr std::size_t dim(Var v) const {
    switch (v) {
      case Var::subject:
        return n_s;
      case Var::predicate:
        return n_p;
      case Var::object:
        return n_o;
    }
    return 0;
  }
  constexpr std::size_t size() const { return n_s * n_p * n_o; }
  constexpr std::size_t dim_sum() const { return n_s + n_p + n_o; }

  friend constexpr bool operator==(const Shape3&, const Shape3&) = default;
};

inline std::string to_string(const Shape3& s) {
  return "(" + std::to_string(s.n_s) + "," + std::to_string(s.n_p) + "," +
         std::to_string(s.n_o) + ")";
}

inline void validate(const Shape3& s) {
  if (s.n_s == 0 || s.n_p == 0 || s.n_o == 0)
    throw ShapeError("shape dimensions must be >= 1, got " + to_string(s));
}

struct TripletIndex {
  std::size_t i = 0;  // subject
  std::size_t j = 0;  // predicate
  std::size_t k = 0;  // object

  constexpr std::size_t at(Var v) const {
    switch (v) {
      case Var::subject:
        return i;
      case Var::predicate:
        return j;
      case Var::object:
        return k;
    }
    return 0;
  }

  friend constexpr auto operator<=>(const TripletIndex&, const TripletIndex&) = default;
};

inline std::string to_string(const TripletIndex& t) {
  return "(" + std::to_string(t.i) + "," + std::to_string(t.j) + "," + std::to_string(t.k) +
         ")";
}

inline void check_index(const Shape3& s, const TripletIndex& t) {
  if (t.i >= s.n_s || t.j >= s.n_p || t.k >= s.n_o)
    throw IndexError("triplet " + to_string(t) + " outside shape " + to_string(s));
}

/// Row-major flat offset in (subject, predicate, object) order.
constexpr std::size_t flat_index(const Shape3& s, const TripletIndex& t) {
  return (t.i * s.n_p + t.j) * s.n_o + t.k;
}

constexpr TripletIndex unflatten(const Shape3& s, std::size_t flat) {
  TripletIndex t;
  t.k = flat % s.n_o;
  flat /= s.n_o;
  t.j = flat % s.n_p;
  t.i = flat / s.n_p;
  return t;
}

class DenseTensor {
 public:
  DenseTensor() = default;

  explicit DenseTensor(Shape3 shape, double fill = 0.0) : shape_(shape) {
    validate(shape_);
    values_.assign(shape_.size(), fill);
  }

  DenseTensor(Shape3 shape, std::vector<double> values)
      : shape_(shape), values_(std::move(values)) {
    validate(shape_);
    if (values_.size() != shape_.size())
      throw ShapeError("value count " + std::to_string(values_.size()) +
                       " does not match shape " + to_string(shape_));
  }

  const Shape3& shape() const { return shape_; }
  std::span<const double> values() const { return values_; }
  std::span<double> values() { return values_; }

  double operator()(std::size_t i, std::size_t j, std::size_t k) const {
    return values_[flat_index(shape_, {i, j, k})];
  }
  double& operator()(std::size_t i, std::size_t j, std::size_t k) {
    return values_[flat_index(shape_, {i, j, k})];
  }
  double operator[](const TripletIndex& t) const { return values_[flat_index(shape_, t)]; }
  double& operator[](const TripletIndex& t) { return values_[flat_index(shape_, t)]; }

  friend bool operator==(const DenseTensor&, const DenseTensor&) = default;

 private:
  Shape3 shape_;
  std::vector<double> values_;
};

/// One rank-1 component: a (subject, predicate, object) vector triple.
using CpFactor = std::array<std::vector<double>, 3>;

/// T(i,j,k) = sum_r f_r[s](i) * f_r[p](j) * f_r[o](k).
inline DenseTensor dense_from_cp(std::span<const CpFactor> factors, const Shape3& shape) {
  validate(shape);
  if (factors.empty()) throw ShapeError("dense_from_cp needs at least one component");
  for (const auto& f : factors) {
    for (Var v : kAllVars) {
      const auto& vec = f[static_cast<std::size_t>(v)];
      if (vec.size() != shape.dim(v))
        throw ShapeError(std::string(var_name(v)) + " factor has length " +
                         std::to_string(vec.size()) + ", expected " +
                         std::to_string(shape.dim(v)));
      if (std::any_of(vec.begin(), vec.end(), [](double x) { return !(x >= 0.0); }))
        throw DegenerateInputError("CP factors must be non-negative");
    }
  }
  DenseTensor t(shape);
  for (const auto& f : factors) {
    const auto& a = f[0];
    const auto& b = f[1];
    const auto& c = f[2];
    for (std::size_t i = 0; i < shape.n_s; ++i)
      for (std::size_t j = 0; j < shape.n_p; ++j) {
        const double ab = a[i] * b[j];
        for (std::size_t k = 0; k < shape.n_o; ++k) t(i, j, k) += ab * c[k];
      }
  }
  return t;
}

inline double tensor_sum(const DenseTensor& t) {
  const auto v = t.values();
  return std::accumulate(v.begin(), v.end(), 0.0);
}

inline DenseTensor normalize(const DenseTensor& t) {
  const auto v = t.values();
  if (std::any_of(v.begin(), v.end(), [](double x) { return !(x >= 0.0); }))
    throw DegenerateInputError("normalize requires non-negative entries");
  const double total = tensor_sum(t);
  if (!(total > 0.0)) throw DegenerateInputError("normalize of a zero-sum tensor");
  DenseTensor out = t;
  for (double& x : out.values()) x /= total;
  return out;
}

inline DenseTensor elementwise_product(const DenseTensor& a, const DenseTensor& b) {
  if (a.shape() != b.shape())
    throw ShapeError("elementwise_product shape mismatch " + to_string(a.shape()) + " vs " +
                     to_string(b.shape()));
  DenseTensor out = a;
  auto ov = out.values();
  auto bv = b.values();
  for (std::size_t n = 0; n < ov.size(); ++n) ov[n] *= bv[n];
  return out;
}

struct RankedEntry {
  TripletIndex index;
  double value = 0.0;

  friend bool operator==(const RankedEntry&, const RankedEntry&) = default;
};

/// The min(k, size) largest entries, descending; equal values ordered by
/// ascending (i,j,k).
inline std::vector<RankedEntry> top_k_entries(const DenseTensor& t, std::size_t k) {
  const auto v = t.values();
  const std::size_t count = std::min(k, v.size());
  std::vector<std::size_t> order(v.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  // Flat order equals lexicographic (i,j,k) order, so the tie-break is on the flat index.
  auto before = [&](std::size_t a, std::size_t b) {
    return v[a] > v[b] || (v[a] == v[b] && a < b);
  };
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(count),
                    order.end(), before);
  std::vector<RankedEntry> out;
  out.reserve(count);
  for (std::size_t n = 0; n < count; ++n)
    out.push_back({unflatten(t.shape(), order[n]), v[order[n]]});
  return out;
}

}  // namespace lrtd
