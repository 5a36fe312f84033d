#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <vector>

#include "chaosop/error.hpp"

namespace chaosop {

/// Number of multi-indices in `dim` variables of total degree <= p,
/// i.e. binomial(dim + p, p). Throws OverflowError when it exceeds size_t.
inline std::size_t cardinality(std::size_t dim, std::size_t p) {
  if (dim == 0) throw ParameterError("cardinality: dim must be positive");
  std::size_t result = 1;
  for (std::size_t i = 1; i <= p; ++i) {
    // binomial(dim+i, i) = binomial(dim+i-1, i-1) * (dim+i) / i, exact at every step.
    std::size_t top = 0;
    if (__builtin_add_overflow(dim, i, &top)) throw OverflowError("cardinality overflow");
    const std::size_t g = std::gcd(result, i);
    std::size_t reduced = result / g;
    // gcd(reduced, i/g) == 1, so i/g divides top.
    std::size_t factor = top / (i / g);
    if (__builtin_mul_overflow(reduced, factor, &result)) throw OverflowError("cardinality overflow");
  }
  return result;
}

/// Ordered set of exponent tuples defining a truncated polynomial basis.
///
/// Ordering is graded (by total degree), then lexicographically descending
/// within a grade, so the all-zeros tuple is always first:
///   (0,0) (1,0) (0,1) (2,0) (1,1) (0,2) ...
class MultiIndexSet {
 public:
  MultiIndexSet() = default;

  std::size_t dim() const noexcept { return dim_; }
  std::size_t size() const noexcept { return dim_ == 0 ? 0 : data_.size() / dim_; }
  int total_degree() const noexcept { return p_; }
  /// Hyperbolic q-norm used at construction; 1 means plain total degree.
  double q_norm() const noexcept { return q_norm_; }

  std::span<const int> operator[](std::size_t i) const {
    return {data_.data() + i * dim_, dim_};
  }

  /// Largest single exponent in the set (drives the univariate table size).
  int max_degree() const noexcept {
    int m = 0;
    for (int e : data_) m = std::max(m, e);
    return m;
  }

  bool contains(std::span<const int> alpha) const {
    if (alpha.size() != dim_) return false;
    for (std::size_t i = 0; i < size(); ++i) {
      auto row = (*this)[i];
      if (std::equal(row.begin(), row.end(), alpha.begin())) return true;
    }
    return false;
  }

  /// FNV-1a over dim, size and all exponents; identifies the basis in model files.
  std::uint64_t hash() const noexcept {
    std::uint64_t h = 1469598103934665603ULL;
    auto mix = [&h](std::uint64_t v) {
      for (int b = 0; b < 8; ++b) {
        h ^= (v >> (8 * b)) & 0xffU;
        h *= 1099511628211ULL;
      }
    };
    mix(dim_);
    mix(size());
    for (int e : data_) mix(static_cast<std::uint64_t>(e));
    return h;
  }

  const std::vector<int>& raw() const noexcept { return data_; }

  friend bool operator==(const MultiIndexSet& a, const MultiIndexSet& b) {
    return a.dim_ == b.dim_ && a.data_ == b.data_;
  }

  /// Rebuilds a set from its flat representation (used by model_io).
  static MultiIndexSet from_raw(std::size_t dim, int p, double q_norm, std::vector<int> data) {
    if (dim == 0 || data.size() % dim != 0) throw ShapeError("MultiIndexSet: bad raw layout");
    MultiIndexSet s;
    s.dim_ = dim;
    s.p_ = p;
    s.q_norm_ = q_norm;
    s.data_ = std::move(data);
    return s;
  }

 private:
  friend MultiIndexSet total_degree_set(std::size_t, int);
  friend MultiIndexSet hyperbolic_set(std::size_t, int, double);

  std::size_t dim_ = 0;
  int p_ = 0;
  double q_norm_ = 1.0;
  std::vector<int> data_;
};

namespace detail {

// Appends every tuple of exactly `remaining` total degree over positions
// [pos, dim), first coordinate largest first.
inline void enumerate_grade(std::vector<int>& current, std::size_t pos, int remaining,
                            std::vector<int>& out) {
  const std::size_t dim = current.size();
  if (pos + 1 == dim) {
    current[pos] = remaining;
    out.insert(out.end(), current.begin(), current.end());
    return;
  }
  for (int a = remaining; a >= 0; --a) {
    current[pos] = a;
    enumerate_grade(current, pos + 1, remaining - a, out);
  }
  current[pos] = 0;
}

}  // namespace detail

inline MultiIndexSet total_degree_set(std::size_t dim, int p) {
  if (dim == 0) throw ParameterError("total_degree_set: dim must be positive");
  if (p < 0) throw ParameterError("total_degree_set: negative degree");
  const std::size_t count = cardinality(dim, static_cast<std::size_t>(p));
  if (count > std::numeric_limits<std::size_t>::max() / dim)
    throw OverflowError("total_degree_set: set too large");

  MultiIndexSet s;
  s.dim_ = dim;
  s.p_ = p;
  s.data_.reserve(count * dim);
  std::vector<int> current(dim, 0);
  for (int grade = 0; grade <= p; ++grade) detail::enumerate_grade(current, 0, grade, s.data_);
  return s;
}

/// Tuples with (sum alpha_i^q)^(1/q) <= p. q = 1 reproduces total_degree_set.
inline MultiIndexSet hyperbolic_set(std::size_t dim, int p, double q_norm) {
  if (!(q_norm > 0.0) || q_norm > 1.0)
    throw ParameterError("hyperbolic_set: q_norm must lie in (0, 1]");
  MultiIndexSet full = total_degree_set(dim, p);
  if (q_norm == 1.0) return full;

  MultiIndexSet s;
  s.dim_ = dim;
  s.p_ = p;
  s.q_norm_ = q_norm;
  const double bound = static_cast<double>(p) * (1.0 + 1e-12);
  for (std::size_t i = 0; i < full.size(); ++i) {
    auto alpha = full[i];
    double acc = 0.0;
    for (int a : alpha)
      if (a > 0) acc += std::pow(static_cast<double>(a), q_norm);
    if (std::pow(acc, 1.0 / q_norm) <= bound) s.data_.insert(s.data_.end(), alpha.begin(), alpha.end());
  }
  return s;
}

}  // namespace chaosop
