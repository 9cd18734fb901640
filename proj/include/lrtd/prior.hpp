#pragma once

// Unconditional triplet prior: add-one smoothed training-set frequencies.

#include <cmath>
#include <cstdint>
#include <map>
#include <span>
#include <vector>

#include "lrtd/cp_dist.hpp"
#include "lrtd/tensor.hpp"

namespace lrtd {

class PriorTensor {
 public:
  PriorTensor() = default;

  explicit PriorTensor(Shape3 shape) : shape_(shape) {
    validate(shape_);
    total_smoothed_ = static_cast<double>(shape_.size());
  }

  /// Rebuild from stored (index, count) records; counts must be >= 1.
  PriorTensor(Shape3 shape, const std::map<TripletIndex, std::uint64_t>& counts)
      : PriorTensor(shape) {
    for (const auto& [t, n] : counts) add(t, n);
  }

  const Shape3& shape() const { return shape_; }
  const std::map<TripletIndex, std::uint64_t>& counts() const { return counts_; }
  double total_smoothed() const { return total_smoothed_; }

  std::uint64_t count(const TripletIndex& t) const {
    auto it = counts_.find(t);
    return it == counts_.end() ? 0 : it->second;
  }

  /// (count + 1) / total_smoothed.
  double value(const TripletIndex& t) const {
    check_index(shape_, t);
    return (static_cast<double>(count(t)) + 1.0) / total_smoothed_;
  }

  void add(const TripletIndex& t, std::uint64_t n = 1) {
    check_index(shape_, t);
    if (n == 0) throw DegenerateInputError("prior counts must be >= 1");
    counts_[t] += n;
    total_smoothed_ += static_cast<double>(n);
  }

  friend bool operator==(const PriorTensor&, const PriorTensor&) = default;

 private:
  Shape3 shape_;
  std::map<TripletIndex, std::uint64_t> counts_;
  double total_smoothed_ = 1.0;
};

inline PriorTensor build_prior(std::span<const TripletIndex> annotations, const Shape3& shape) {
  PriorTensor p(shape);
  for (const auto& t : annotations) p.add(t);
  return p;
}

inline double prior_log_value(const PriorTensor& p, const TripletIndex& t) {
  check_index(p.shape(), t);
  return std::log(static_cast<double>(p.count(t)) + 1.0) - std::log(p.total_smoothed());
}

/// Dense prior tensor; values sum to 1.
inline DenseTensor dense_prior(const PriorTensor& p) {
  DenseTensor out(p.shape(), 1.0 / p.total_smoothed());
  for (const auto& [t, n] : p.counts()) out[t] = (static_cast<double>(n) + 1.0) / p.total_smoothed();
  return out;
}

/// log psi_c(t) + log psi_u(t). Unnormalized; meant for ranking only.
inline double fuse(const CpScores& c, const PriorTensor& p, const TripletIndex& t) {
  if (c.shape() != p.shape())
    throw ShapeError("fuse shape mismatch " + to_string(c.shape()) + " vs " +
                     to_string(p.shape()));
  return log_prob(c, t) + prior_log_value(p, t);
}

/// Dense fused log scores over every cell.
inline DenseTensor dense_fused_log(const CpScores& c, const PriorTensor* p) {
  DenseTensor out = dense_log_prob(c);
  if (p == nullptr) return out;
  if (c.shape() != p->shape())
    throw ShapeError("fuse shape mismatch " + to_string(c.shape()) + " vs " +
                     to_string(p->shape()));
  // Same expression as fuse() cell by cell, so both routes agree bitwise.
  auto v = out.values();
  for (std::size_t n = 0; n < v.size(); ++n) v[n] += prior_log_value(*p, unflatten(out.shape(), n));
  return out;
}

}  // namespace lrtd
