#pragma once

// Design matrices of the separated expansion s(x,t,xi) = Phi(x,t) C Psi(xi):
// Psi (P x N) over random samples, Phi (n x Q) over spatio-temporal points,
// and derivative-transformed Phi blocks for PDE/BC/IC constraints.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "chaosop/error.hpp"
#include "chaosop/index_sets.hpp"
#include "chaosop/orthopoly.hpp"

namespace chaosop {

/// Largest per-axis derivative order a DiffOpSpec may request.
inline constexpr int kMaxDerivativeOrder = 2;

struct Axis {
  std::string name;
  double lo = 0.0;
  double hi = 1.0;
};

/// Axis-aligned physical box. One axis may be flagged as the evolution axis
/// (time, or the integration variable of an initial-value ODE); the rest are
/// spatial.
struct Box {
  std::vector<Axis> axes;
  std::optional<std::size_t> time_axis;

  std::size_t dim() const noexcept { return axes.size(); }
  std::vector<std::size_t> spatial_axes() const {
    std::vector<std::size_t> out;
    for (std::size_t k = 0; k < axes.size(); ++k)
      if (!time_axis || *time_axis != k) out.push_back(k);
    return out;
  }
};

/// Per-axis affine maps [lo_k, hi_k] -> [-1, 1].
class DomainMap {
 public:
  DomainMap() = default;
  DomainMap(std::vector<double> lo, std::vector<double> hi) : lo_(std::move(lo)), hi_(std::move(hi)) {
    if (lo_.size() != hi_.size()) throw ShapeError("DomainMap: bound sizes differ");
    for (std::size_t k = 0; k < lo_.size(); ++k)
      if (!(hi_[k] > lo_[k])) throw ParameterError("DomainMap: empty axis");
  }
  explicit DomainMap(const Box& box) {
    for (const auto& a : box.axes) {
      if (!(a.hi > a.lo)) throw ParameterError("DomainMap: empty axis " + a.name);
      lo_.push_back(a.lo);
      hi_.push_back(a.hi);
    }
  }

  std::size_t dim() const noexcept { return lo_.size(); }
  double lo(std::size_t k) const { return lo_[k]; }
  double hi(std::size_t k) const { return hi_[k]; }

  double to_reference(std::size_t k, double x) const {
    return 2.0 * (x - lo_[k]) / (hi_[k] - lo_[k]) - 1.0;
  }
  double to_physical(std::size_t k, double z) const {
    return lo_[k] + 0.5 * (z + 1.0) * (hi_[k] - lo_[k]);
  }
  /// d(reference)/d(physical) along axis k; an order-m derivative picks up scale^m.
  double scale(std::size_t k) const { return 2.0 / (hi_[k] - lo_[k]); }

  bool contains(std::span<const double> point) const {
    if (point.size() != lo_.size()) return false;
    for (std::size_t k = 0; k < lo_.size(); ++k) {
      const double slack = 1e-12 * (hi_[k] - lo_[k]);
      if (!(point[k] >= lo_[k] - slack && point[k] <= hi_[k] + slack)) return false;
    }
    return true;
  }

  void check_points(const Eigen::MatrixXd& points) const {
    if (static_cast<std::size_t>(points.cols()) != dim())
      throw ShapeError("point dimension does not match the domain");
    std::vector<double> p(dim());
    for (Eigen::Index i = 0; i < points.rows(); ++i) {
      for (std::size_t k = 0; k < dim(); ++k) p[k] = points(i, static_cast<Eigen::Index>(k));
      if (!contains(p)) throw DomainError("point " + std::to_string(i) + " lies outside the domain");
    }
  }

  friend bool operator==(const DomainMap&, const DomainMap&) = default;

 private:
  std::vector<double> lo_, hi_;
};

/// One linear term: scale * coefficient(point, xi) * D^orders s.
/// `field` indexes the per-realization coefficient samples handed to
/// assemble_phi; std::nullopt means a constant coefficient.
struct DiffTerm {
  double scale = 1.0;
  std::vector<int> orders;
  std::optional<std::size_t> field;
};

/// Pointwise product scale * (D^left s) * (D^right s), e.g. Burgers' s * s_x.
struct QuadraticTerm {
  double scale = 1.0;
  std::vector<int> left;
  std::vector<int> right;
};

struct DiffOpSpec {
  std::vector<DiffTerm> terms;
  std::vector<QuadraticTerm> quadratic;

  static DiffOpSpec identity(std::size_t dim) { return {{DiffTerm{1.0, std::vector<int>(dim, 0), {}}}, {}}; }

  bool has_field_terms() const {
    return std::any_of(terms.begin(), terms.end(), [](const DiffTerm& t) { return t.field.has_value(); });
  }
};

enum class BlockKind { PDE, BC, IC, DATA };

inline std::string to_string(BlockKind kind) {
  switch (kind) {
    case BlockKind::PDE: return "PDE";
    case BlockKind::BC: return "BC";
    case BlockKind::IC: return "IC";
    case BlockKind::DATA: return "DATA";
  }
  return "?";
}

/// One additive piece of a design block: rows of `basis` (n x Q) weighted
/// pointwise by `field` (n x N, one column per realization) when present.
struct DesignTerm {
  Eigen::MatrixXd basis;
  std::optional<Eigen::MatrixXd> field;
};

/// Constraint design matrix. Realization j's matrix is
///   sum_t diag(field_t[:, j]) * basis_t
/// with the diagonal omitted for shared terms. Keeping the shared bases and
/// the pointwise coefficients apart lets every realization be applied with
/// one GEMM per term instead of materializing N matrices.
struct DesignBlock {
  BlockKind kind = BlockKind::PDE;
  Eigen::MatrixXd points;
  std::vector<DesignTerm> terms;

  Eigen::Index rows() const { return terms.empty() ? 0 : terms.front().basis.rows(); }
  Eigen::Index cols() const { return terms.empty() ? 0 : terms.front().basis.cols(); }

  bool per_realization() const {
    return std::any_of(terms.begin(), terms.end(), [](const DesignTerm& t) { return t.field.has_value(); });
  }
  Eigen::Index realizations() const {
    for (const auto& t : terms)
      if (t.field) return t.field->cols();
    return 0;
  }

  /// The single matrix of a block that does not depend on xi.
  Eigen::MatrixXd shared_matrix() const {
    if (per_realization()) throw ParameterError("design block depends on the realization");
    Eigen::MatrixXd m = Eigen::MatrixXd::Zero(rows(), cols());
    for (const auto& t : terms) m += t.basis;
    return m;
  }

  Eigen::MatrixXd realization(Eigen::Index j) const {
    Eigen::MatrixXd m = Eigen::MatrixXd::Zero(rows(), cols());
    for (const auto& t : terms) {
      if (t.field)
        m.noalias() += t.field->col(j).asDiagonal() * t.basis;
      else
        m += t.basis;
    }
    return m;
  }

  /// Column j of the result is Phi_j * u.col(j); u is Q x N.
  Eigen::MatrixXd apply(const Eigen::MatrixXd& u) const {
    Eigen::MatrixXd out = Eigen::MatrixXd::Zero(rows(), u.cols());
    for (const auto& t : terms) {
      if (t.field)
        out.array() += t.field->array() * (t.basis * u).array();
      else
        out.noalias() += t.basis * u;
    }
    return out;
  }

  /// Column j of the result is Phi_j^T * r.col(j); r is n x N.
  Eigen::MatrixXd apply_transpose(const Eigen::MatrixXd& r) const {
    Eigen::MatrixXd out = Eigen::MatrixXd::Zero(cols(), r.cols());
    for (const auto& t : terms) {
      if (t.field)
        out.noalias() += t.basis.transpose() * (t.field->array() * r.array()).matrix();
      else
        out.noalias() += t.basis.transpose() * r;
    }
    return out;
  }
};

/// Psi(alpha, j) = prod_i psi_{alpha_i}(xi_i^(j)) in the orthonormal convention.
/// xi_samples is N x r (one sample per row).
inline Eigen::MatrixXd assemble_psi(const MultiIndexSet& set_a, const Eigen::MatrixXd& xi_samples,
                                    Family family = Family::HermiteProbabilist) {
  const auto r = static_cast<Eigen::Index>(set_a.dim());
  if (xi_samples.cols() != r) throw ShapeError("assemble_psi: sample dimension does not match the index set");
  const int deg = set_a.max_degree();
  const auto stride = static_cast<std::size_t>(deg) + 1;
  const auto count = static_cast<Eigen::Index>(set_a.size());
  Eigen::MatrixXd psi(count, xi_samples.rows());
  std::vector<double> tables(stride * static_cast<std::size_t>(r));
  for (Eigen::Index j = 0; j < xi_samples.rows(); ++j) {
    for (Eigen::Index i = 0; i < r; ++i)
      eval_table_orthonormal(family, deg, 0, xi_samples(j, i), std::span(tables).subspan(i * stride, stride));
    for (Eigen::Index a = 0; a < count; ++a) {
      auto alpha = set_a[static_cast<std::size_t>(a)];
      double v = 1.0;
      for (Eigen::Index i = 0; i < r; ++i)
        if (alpha[i] != 0) v *= tables[i * stride + alpha[i]];
      psi(a, j) = v;
    }
  }
  return psi;
}

namespace detail {

// Per-axis orthonormal Legendre tables at one point, derivatives already
// carrying the chain-rule factor scale^order.
struct AxisTables {
  int degree = 0;
  int max_order = 0;
  std::vector<double> values;  // [order][degree]
  double at(int order, int n) const { return values[order * (degree + 1) + n]; }
};

inline std::vector<int> max_orders(const DiffOpSpec& op, std::size_t dim) {
  std::vector<int> m(dim, 0);
  auto bump = [&](const std::vector<int>& orders) {
    if (orders.size() != dim) throw ShapeError("DiffOpSpec: derivative order tuple has the wrong dimension");
    for (std::size_t k = 0; k < dim; ++k) {
      if (orders[k] < 0 || orders[k] > kMaxDerivativeOrder)
        throw ParameterError("DiffOpSpec: derivative order " + std::to_string(orders[k]) +
                             " exceeds the supported maximum of " + std::to_string(kMaxDerivativeOrder));
      m[k] = std::max(m[k], orders[k]);
    }
  };
  for (const auto& t : op.terms) bump(t.orders);
  for (const auto& q : op.quadratic) {
    bump(q.left);
    bump(q.right);
  }
  return m;
}

// basis(i, beta) = prod_k d^{orders_k} phi_{beta_k}(mapped x_ik), for all i.
inline Eigen::MatrixXd derivative_basis(const MultiIndexSet& set_b, const Eigen::MatrixXd& points,
                                        const DomainMap& map, const std::vector<int>& orders) {
  const std::size_t dim = set_b.dim();
  const int deg = set_b.max_degree();
  const auto q = static_cast<Eigen::Index>(set_b.size());
  Eigen::MatrixXd out(points.rows(), q);
  std::vector<AxisTables> tables(dim);
  for (std::size_t k = 0; k < dim; ++k) {
    tables[k].degree = deg;
    tables[k].max_order = orders[k];
    tables[k].values.resize((deg + 1) * (orders[k] + 1));
  }
  for (Eigen::Index i = 0; i < points.rows(); ++i) {
    for (std::size_t k = 0; k < dim; ++k) {
      auto& t = tables[k];
      const double z = map.to_reference(k, points(i, static_cast<Eigen::Index>(k)));
      eval_table_orthonormal(Family::Legendre, deg, orders[k], z, t.values);
      const double chain = std::pow(map.scale(k), orders[k]);
      for (int n = 0; n <= deg; ++n) t.values[orders[k] * (deg + 1) + n] *= chain;
    }
    for (Eigen::Index b = 0; b < q; ++b) {
      auto beta = set_b[static_cast<std::size_t>(b)];
      double v = 1.0;
      for (std::size_t k = 0; k < dim; ++k) v *= tables[k].at(orders[k], beta[k]);
      out(i, b) = v;
    }
  }
  return out;
}

}  // namespace detail

/// Assemble the (possibly realization-dependent) constraint matrix for `op`
/// at `points` (n x (d+1)). field_values[f] supplies the n x N samples of the
/// coefficient field referenced by DiffTerm::field == f. Quadratic terms are
/// not folded in; see assemble_quadratic.
inline DesignBlock assemble_phi(const MultiIndexSet& set_b, const Eigen::MatrixXd& points, const DomainMap& map,
                                const DiffOpSpec& op, std::span<const Eigen::MatrixXd> field_values = {},
                                BlockKind kind = BlockKind::PDE) {
  if (set_b.dim() != map.dim()) throw ShapeError("assemble_phi: index set and domain dimensions differ");
  map.check_points(points);
  if (op.terms.empty()) throw ParameterError("assemble_phi: operator has no linear terms");
  detail::max_orders(op, set_b.dim());

  DesignBlock block;
  block.kind = kind;
  block.points = points;
  DesignTerm shared{Eigen::MatrixXd::Zero(points.rows(), static_cast<Eigen::Index>(set_b.size())), {}};
  bool any_shared = false;
  for (const auto& term : op.terms) {
    Eigen::MatrixXd basis = term.scale * detail::derivative_basis(set_b, points, map, term.orders);
    if (!term.field) {
      shared.basis += basis;
      any_shared = true;
      continue;
    }
    if (*term.field >= field_values.size())
      throw ParameterError("assemble_phi: missing field values for coefficient field " + std::to_string(*term.field));
    const auto& f = field_values[*term.field];
    if (f.rows() != points.rows()) throw ShapeError("assemble_phi: field values must have one row per point");
    block.terms.push_back({std::move(basis), f});
  }
  if (any_shared) block.terms.insert(block.terms.begin(), std::move(shared));
  const Eigen::Index n_real = block.realizations();
  for (const auto& t : block.terms)
    if (t.field && t.field->cols() != n_real) throw ShapeError("assemble_phi: coefficient fields disagree on N");
  return block;
}

inline DesignBlock assemble_phi(const MultiIndexSet& set_b, const Eigen::MatrixXd& points, const DomainMap& map) {
  return assemble_phi(set_b, points, map, DiffOpSpec::identity(set_b.dim()));
}

/// The two derivative bases of each quadratic term of `op`, scale folded into the left one.
struct QuadraticBasis {
  Eigen::MatrixXd left;
  Eigen::MatrixXd right;
};

inline std::vector<QuadraticBasis> assemble_quadratic(const MultiIndexSet& set_b, const Eigen::MatrixXd& points,
                                                      const DomainMap& map, const DiffOpSpec& op) {
  map.check_points(points);
  detail::max_orders(op, set_b.dim());
  std::vector<QuadraticBasis> out;
  for (const auto& q : op.quadratic)
    out.push_back({q.scale * detail::derivative_basis(set_b, points, map, q.left),
                   detail::derivative_basis(set_b, points, map, q.right)});
  return out;
}

struct PointCounts {
  std::size_t pde = 0;
  std::size_t bc = 0;
  std::size_t ic = 0;
  std::size_t total() const { return pde + bc + ic; }
};

struct VirtualPoints {
  Eigen::MatrixXd pde;
  Eigen::MatrixXd bc;
  Eigen::MatrixXd ic;
};

/// Random collocation points: PDE points uniform in the open interior, BC
/// points on the spatial boundary (face chosen by measure) with uniform
/// evolution coordinate, IC points at the start of the evolution axis.
/// Deterministic for a fixed seed. `min_total` enforces n_pde+n_bc+n_ic >= Q.
inline VirtualPoints sample_virtual_points(const Box& box, PointCounts counts, std::uint64_t seed,
                                           std::size_t min_total = 1) {
  const std::size_t dim = box.dim();
  if (dim == 0) throw ParameterError("sample_virtual_points: empty box");
  for (const auto& a : box.axes)
    if (!(a.hi > a.lo)) throw ParameterError("sample_virtual_points: empty axis " + a.name);
  if (counts.total() == 0) throw ParameterError("sample_virtual_points: zero points requested");
  if (counts.total() < min_total)
    throw ParameterError("sample_virtual_points: " + std::to_string(counts.total()) +
                         " points cannot determine " + std::to_string(min_total) + " basis functions");
  const auto spatial = box.spatial_axes();
  if (counts.bc > 0 && spatial.empty()) throw ParameterError("sample_virtual_points: no spatial boundary");
  if (counts.ic > 0 && !box.time_axis) throw ParameterError("sample_virtual_points: no evolution axis for IC");

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto interior = [&](std::size_t k) {
    double u = 0.0;
    do u = unit(rng);
    while (u == 0.0);
    return box.axes[k].lo + u * (box.axes[k].hi - box.axes[k].lo);
  };

  VirtualPoints vp;
  vp.pde.resize(static_cast<Eigen::Index>(counts.pde), static_cast<Eigen::Index>(dim));
  for (Eigen::Index i = 0; i < vp.pde.rows(); ++i)
    for (std::size_t k = 0; k < dim; ++k) vp.pde(i, static_cast<Eigen::Index>(k)) = interior(k);

  vp.bc.resize(static_cast<Eigen::Index>(counts.bc), static_cast<Eigen::Index>(dim));
  if (counts.bc > 0) {
    // Faces 2s and 2s+1 are the low/high ends of spatial axis s, weighted by area.
    std::vector<double> weights;
    for (std::size_t s : spatial) {
      double area = 1.0;
      for (std::size_t o : spatial)
        if (o != s) area *= box.axes[o].hi - box.axes[o].lo;
      weights.push_back(area);
      weights.push_back(area);
    }
    std::discrete_distribution<std::size_t> face(weights.begin(), weights.end());
    for (Eigen::Index i = 0; i < vp.bc.rows(); ++i) {
      const std::size_t f = face(rng);
      const std::size_t axis = spatial[f / 2];
      for (std::size_t k = 0; k < dim; ++k) {
        if (k == axis)
          vp.bc(i, static_cast<Eigen::Index>(k)) = f % 2 == 0 ? box.axes[k].lo : box.axes[k].hi;
        else
          vp.bc(i, static_cast<Eigen::Index>(k)) = interior(k);
      }
    }
  }

  vp.ic.resize(static_cast<Eigen::Index>(counts.ic), static_cast<Eigen::Index>(dim));
  for (Eigen::Index i = 0; i < vp.ic.rows(); ++i)
    for (std::size_t k = 0; k < dim; ++k)
      vp.ic(i, static_cast<Eigen::Index>(k)) = k == *box.time_axis ? box.axes[k].lo : interior(k);
  return vp;
}

/// Tensor grid of points (last axis fastest) from per-axis coordinate lists.
inline Eigen::MatrixXd tensor_grid(const std::vector<std::vector<double>>& coords) {
  Eigen::Index total = 1;
  for (const auto& c : coords) total *= static_cast<Eigen::Index>(c.size());
  Eigen::MatrixXd pts(total, static_cast<Eigen::Index>(coords.size()));
  for (Eigen::Index i = 0; i < total; ++i) {
    Eigen::Index rem = i;
    for (auto k = static_cast<Eigen::Index>(coords.size()) - 1; k >= 0; --k) {
      const auto nk = static_cast<Eigen::Index>(coords[k].size());
      pts(i, k) = coords[k][rem % nk];
      rem /= nk;
    }
  }
  return pts;
}

}  // namespace chaosop
