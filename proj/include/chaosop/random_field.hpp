#pragma once

// Gaussian random fields discretized by a truncated Karhunen-Loeve expansion
// of the RBF covariance k(x, x') = sigma^2 exp(-|x - x'|^2 / (2 ell^2)).
// Eigenpairs come from a Nystrom discretization of the covariance integral
// operator on a uniform grid with trapezoid weights.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <memory>
#include <numeric>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "chaosop/error.hpp"

namespace chaosop {

struct KernelSpec {
  double sigma = 1.0;
  double ell = 0.2;
  double mean = 0.0;
  /// Optional mean function over the field's coordinates; overrides `mean`.
  std::function<double(const Eigen::RowVectorXd&)> mean_fn;

  void validate() const {
    if (!(sigma > 0.0)) throw ParameterError("KernelSpec: sigma must be positive");
    if (!(ell > 0.0)) throw ParameterError("KernelSpec: length scale must be positive");
  }

  /// Correlation part exp(-d^2 / (2 ell^2)) without sigma^2.
  double correlation(double dist_sq) const { return std::exp(-dist_sq / (2.0 * ell * ell)); }

  double mean_at(const Eigen::RowVectorXd& x) const { return mean_fn ? mean_fn(x) : mean; }
};

/// Quadrature grid: points (m x d) with positive weights.
struct QuadratureGrid {
  Eigen::MatrixXd points;
  Eigen::VectorXd weights;
};

/// m uniform nodes on [lo, hi] including the end points, trapezoid weights.
inline QuadratureGrid uniform_grid(double lo, double hi, Eigen::Index m) {
  if (m < 2) throw ParameterError("uniform_grid: need at least two points");
  if (!(hi > lo)) throw ParameterError("uniform_grid: empty interval");
  QuadratureGrid g;
  g.points.resize(m, 1);
  g.weights.resize(m);
  const double h = (hi - lo) / static_cast<double>(m - 1);
  for (Eigen::Index i = 0; i < m; ++i) {
    g.points(i, 0) = lo + h * static_cast<double>(i);
    g.weights(i) = (i == 0 || i == m - 1) ? 0.5 * h : h;
  }
  return g;
}

/// Tensor product of two 1D trapezoid grids (second coordinate fastest).
inline QuadratureGrid tensor_quadrature(const QuadratureGrid& gx, const QuadratureGrid& gy) {
  const Eigen::Index mx = gx.points.rows(), my = gy.points.rows();
  QuadratureGrid g;
  g.points.resize(mx * my, 2);
  g.weights.resize(mx * my);
  for (Eigen::Index i = 0; i < mx; ++i)
    for (Eigen::Index j = 0; j < my; ++j) {
      g.points(i * my + j, 0) = gx.points(i, 0);
      g.points(i * my + j, 1) = gy.points(j, 0);
      g.weights(i * my + j) = gx.weights(i) * gy.weights(j);
    }
  return g;
}

/// Truncated KL basis. Eigenfunctions are orthonormal under the grid weights.
struct KLBasis {
  KernelSpec kernel;
  QuadratureGrid grid;
  Eigen::VectorXd eigenvalues;      // r, descending, positive
  Eigen::MatrixXd eigenfunctions;   // m x r
  Eigen::VectorXd mean_on_grid;     // m
  double captured_fraction = 1.0;
  double total_variance = 0.0;      // sum of all (clipped) discrete eigenvalues
  bool clipped_negative = false;    // eigenvalues below -1e-10 lambda_max were zeroed

  /// Separable representation for tensor grids: per-axis unit-variance 1D
  /// eigenpairs and, for each retained mode, the factor index per axis.
  struct Factor {
    QuadratureGrid grid;
    Eigen::VectorXd eigenvalues;
    Eigen::MatrixXd eigenfunctions;
  };
  std::vector<Factor> factors;
  std::vector<std::vector<Eigen::Index>> mode_factors;

  Eigen::Index modes() const { return eigenvalues.size(); }
  Eigen::Index dim() const { return grid.points.cols(); }
};

namespace detail {

struct SymmetricEigen {
  Eigen::VectorXd values;   // descending, clipped at zero
  Eigen::MatrixXd vectors;  // columns orthonormal under the quadrature weights
  bool clipped = false;
};

// Nystrom eigenpairs of the weighted kernel matrix W^1/2 K W^1/2.
inline SymmetricEigen nystrom_eigen(const Eigen::MatrixXd& kernel_matrix, const Eigen::VectorXd& weights,
                                    const Eigen::MatrixXd& points) {
  const Eigen::VectorXd sw = weights.cwiseSqrt();
  const Eigen::MatrixXd a = sw.asDiagonal() * kernel_matrix * sw.asDiagonal();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(a);
  if (es.info() != Eigen::Success) throw Error("KL eigendecomposition failed");
  const Eigen::Index m = a.rows();
  SymmetricEigen out;
  out.values = es.eigenvalues().reverse();
  out.vectors = es.eigenvectors().rowwise().reverse();
  const double lmax = std::max(out.values(0), 0.0);
  for (Eigen::Index k = 0; k < m; ++k) {
    if (out.values(k) < -1e-10 * lmax) out.clipped = true;
    out.values(k) = std::max(out.values(k), 0.0);
  }
  out.vectors = sw.cwiseInverse().asDiagonal() * out.vectors;

  // Sign convention: positive weighted inner product with a tilted plane, so
  // refined grids produce the same modes.
  const Eigen::RowVectorXd centre = points.colwise().mean();
  Eigen::RowVectorXd extent = points.colwise().maxCoeff() - points.colwise().minCoeff();
  for (Eigen::Index d = 0; d < extent.size(); ++d)
    if (extent(d) <= 0.0) extent(d) = 1.0;
  Eigen::VectorXd probe(m);
  for (Eigen::Index i = 0; i < m; ++i) {
    double v = 1.0;
    for (Eigen::Index d = 0; d < points.cols(); ++d)
      v += 0.37 * static_cast<double>(d + 1) * (points(i, d) - centre(d)) / extent(d);
    probe(i) = v * weights(i);
  }
  for (Eigen::Index k = 0; k < m; ++k)
    if (out.vectors.col(k).dot(probe) < 0.0) out.vectors.col(k) *= -1.0;
  return out;
}

inline Eigen::MatrixXd correlation_matrix(const KernelSpec& kernel, const Eigen::MatrixXd& a,
                                          const Eigen::MatrixXd& b) {
  Eigen::MatrixXd k(a.rows(), b.rows());
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < b.rows(); ++j) k(i, j) = kernel.correlation((a.row(i) - b.row(j)).squaredNorm());
  return k;
}

// Smallest r with prefix(r)/total >= target, or `fixed` when given.
inline Eigen::Index retained_count(const Eigen::VectorXd& values, double target, std::optional<Eigen::Index> fixed,
                                   double& captured, double& total) {
  const Eigen::Index m = values.size();
  Eigen::VectorXd prefix(m);
  std::partial_sum(values.begin(), values.end(), prefix.begin());
  total = prefix(m - 1);
  if (!(total > 0.0)) throw Error("KL: covariance operator has no positive spectrum");
  Eigen::Index r = m;
  if (fixed) {
    if (*fixed < 1 || *fixed > m) throw ParameterError("KL: fixed mode count out of range");
    r = *fixed;
  } else {
    for (Eigen::Index k = 0; k < m; ++k)
      if (prefix(k) / total >= target) {
        r = k + 1;
        break;
      }
  }
  if (!(values(r - 1) > 0.0)) throw ParameterError("KL: retained modes include a zero eigenvalue");
  captured = prefix(r - 1) / total;
  return r;
}

inline void validate_target(double target) {
  if (!(target > 0.0) || target > 1.0) throw ParameterError("KL: target fraction must lie in (0, 1]");
}

}  // namespace detail

/// Dense Nystrom KL decomposition on an arbitrary weighted grid. Retains the
/// smallest r whose captured variance fraction reaches `target_fraction`, or
/// exactly `fixed_modes` modes when given (the achieved fraction is reported).
inline KLBasis kl_decompose(const KernelSpec& kernel, const QuadratureGrid& grid, double target_fraction,
                            std::optional<Eigen::Index> fixed_modes = std::nullopt) {
  kernel.validate();
  detail::validate_target(target_fraction);
  if (grid.points.rows() < 2) throw ParameterError("kl_decompose: grid needs at least two points");
  if (grid.weights.size() != grid.points.rows()) throw ShapeError("kl_decompose: one weight per grid point");

  const Eigen::MatrixXd k = kernel.sigma * kernel.sigma * detail::correlation_matrix(kernel, grid.points, grid.points);
  auto eig = detail::nystrom_eigen(k, grid.weights, grid.points);

  KLBasis basis;
  basis.kernel = kernel;
  basis.grid = grid;
  basis.clipped_negative = eig.clipped;
  const Eigen::Index r =
      detail::retained_count(eig.values, target_fraction, fixed_modes, basis.captured_fraction, basis.total_variance);
  basis.eigenvalues = eig.values.head(r);
  basis.eigenfunctions = eig.vectors.leftCols(r);
  basis.mean_on_grid.resize(grid.points.rows());
  for (Eigen::Index i = 0; i < grid.points.rows(); ++i) basis.mean_on_grid(i) = kernel.mean_at(grid.points.row(i));
  return basis;
}

/// KL decomposition on the tensor product of 1D grids. The RBF kernel on
/// Euclidean distance factorizes over axes and so does the trapezoid weight,
/// so the Nystrom eigenpairs are exactly products of 1D eigenpairs; this
/// avoids the (m^d x m^d) eigensolve.
inline KLBasis kl_decompose_separable(const KernelSpec& kernel, const std::vector<QuadratureGrid>& axes,
                                      double target_fraction, std::optional<Eigen::Index> fixed_modes = std::nullopt) {
  kernel.validate();
  detail::validate_target(target_fraction);
  if (axes.size() != 2) throw ParameterError("kl_decompose_separable: two axes supported");

  KernelSpec unit = kernel;
  unit.sigma = 1.0;
  std::vector<KLBasis::Factor> factors;
  bool clipped = false;
  for (const auto& g : axes) {
    if (g.points.rows() < 2 || g.points.cols() != 1) throw ParameterError("kl_decompose_separable: bad axis grid");
    const Eigen::MatrixXd k = detail::correlation_matrix(unit, g.points, g.points);
    auto eig = detail::nystrom_eigen(k, g.weights, g.points);
    clipped = clipped || eig.clipped;
    factors.push_back({g, eig.values, eig.vectors});
  }

  const Eigen::Index mx = factors[0].eigenvalues.size(), my = factors[1].eigenvalues.size();
  const double s2 = kernel.sigma * kernel.sigma;
  struct Pair {
    double value;
    Eigen::Index i, j;
  };
  std::vector<Pair> pairs;
  pairs.reserve(static_cast<std::size_t>(mx * my));
  for (Eigen::Index i = 0; i < mx; ++i)
    for (Eigen::Index j = 0; j < my; ++j)
      pairs.push_back({s2 * factors[0].eigenvalues(i) * factors[1].eigenvalues(j), i, j});
  std::stable_sort(pairs.begin(), pairs.end(), [](const Pair& a, const Pair& b) {
    if (a.value != b.value) return a.value > b.value;
    if (a.i + a.j != b.i + b.j) return a.i + a.j < b.i + b.j;
    return a.i < b.i;
  });
  Eigen::VectorXd values(static_cast<Eigen::Index>(pairs.size()));
  for (std::size_t k = 0; k < pairs.size(); ++k) values(static_cast<Eigen::Index>(k)) = pairs[k].value;

  KLBasis basis;
  basis.kernel = kernel;
  basis.grid = tensor_quadrature(axes[0], axes[1]);
  basis.clipped_negative = clipped;
  const Eigen::Index r =
      detail::retained_count(values, target_fraction, fixed_modes, basis.captured_fraction, basis.total_variance);
  basis.eigenvalues = values.head(r);
  basis.eigenfunctions.resize(mx * my, r);
  for (Eigen::Index k = 0; k < r; ++k) {
    const auto& pr = pairs[static_cast<std::size_t>(k)];
    basis.mode_factors.push_back({pr.i, pr.j});
    for (Eigen::Index a = 0; a < mx; ++a)
      for (Eigen::Index b = 0; b < my; ++b)
        basis.eigenfunctions(a * my + b, k) = factors[0].eigenfunctions(a, pr.i) * factors[1].eigenfunctions(b, pr.j);
  }
  basis.factors = std::move(factors);
  basis.mean_on_grid.resize(basis.grid.points.rows());
  for (Eigen::Index i = 0; i < basis.grid.points.rows(); ++i)
    basis.mean_on_grid(i) = kernel.mean_at(basis.grid.points.row(i));
  return basis;
}

/// mean_on_grid + sum_i sqrt(lambda_i) phi_i xi_i.
inline Eigen::VectorXd sample_field(const KLBasis& basis, const Eigen::VectorXd& xi) {
  if (xi.size() != basis.modes()) throw ShapeError("sample_field: xi length must equal the retained mode count");
  return basis.mean_on_grid + basis.eigenfunctions * (basis.eigenvalues.cwiseSqrt().asDiagonal() * xi);
}

/// sqrt(lambda_k) phi_k(x_i) at arbitrary points (n x d) by Nystrom extension
///   phi_k(x) = (1/lambda_k) sum_m w_m k(x, x_m) phi_k(x_m),
/// which reproduces the grid values exactly at grid nodes.
inline Eigen::MatrixXd kl_mode_values(const KLBasis& basis, const Eigen::MatrixXd& points) {
  if (points.cols() != basis.dim()) throw ShapeError("kl_mode_values: point dimension mismatch");
  const Eigen::RowVectorXd lo = basis.grid.points.colwise().minCoeff();
  const Eigen::RowVectorXd hi = basis.grid.points.colwise().maxCoeff();
  for (Eigen::Index i = 0; i < points.rows(); ++i)
    for (Eigen::Index d = 0; d < points.cols(); ++d) {
      const double slack = 1e-12 * (hi(d) - lo(d));
      if (!(points(i, d) >= lo(d) - slack && points(i, d) <= hi(d) + slack))
        throw DomainError("field evaluation outside the kernel's domain box");
    }

  const Eigen::Index r = basis.modes();
  Eigen::MatrixXd out(points.rows(), r);
  if (basis.factors.empty()) {
    const Eigen::MatrixXd kx = basis.kernel.sigma * basis.kernel.sigma *
                               detail::correlation_matrix(basis.kernel, points, basis.grid.points);
    out = kx * basis.grid.weights.asDiagonal() * basis.eigenfunctions;
    for (Eigen::Index k = 0; k < r; ++k) out.col(k) /= std::sqrt(basis.eigenvalues(k));
    return out;
  }
  // Separable: product of 1D extensions, sigma^2 carried by the eigenvalue.
  KernelSpec unit = basis.kernel;
  unit.sigma = 1.0;
  std::vector<Eigen::MatrixXd> ext;
  for (std::size_t d = 0; d < basis.factors.size(); ++d) {
    const auto& f = basis.factors[d];
    const Eigen::MatrixXd kx = detail::correlation_matrix(unit, points.col(static_cast<Eigen::Index>(d)), f.grid.points);
    Eigen::MatrixXd e = kx * f.grid.weights.asDiagonal() * f.eigenfunctions;
    for (Eigen::Index k = 0; k < e.cols(); ++k)
      e.col(k) = f.eigenvalues(k) > 0.0 ? Eigen::VectorXd(e.col(k) / f.eigenvalues(k))
                                        : Eigen::VectorXd::Zero(e.rows());
    ext.push_back(std::move(e));
  }
  for (Eigen::Index k = 0; k < r; ++k) {
    const auto& mf = basis.mode_factors[static_cast<std::size_t>(k)];
    out.col(k) = std::sqrt(basis.eigenvalues(k)) * ext[0].col(mf[0]).cwiseProduct(ext[1].col(mf[1]));
  }
  return out;
}

inline Eigen::VectorXd kl_mean_values(const KLBasis& basis, const Eigen::MatrixXd& points) {
  Eigen::VectorXd m(points.rows());
  for (Eigen::Index i = 0; i < points.rows(); ++i) m(i) = basis.kernel.mean_at(points.row(i));
  return m;
}

/// KL synthesis at arbitrary points.
inline Eigen::VectorXd field_at(const KLBasis& basis, const Eigen::VectorXd& xi, const Eigen::MatrixXd& points) {
  if (xi.size() != basis.modes()) throw ShapeError("field_at: xi length must equal the retained mode count");
  return kl_mean_values(basis, points) + kl_mode_values(basis, points) * xi;
}

/// An input function that is affine in a contiguous slice of the random germ:
///   value(x, xi) = mean(x) + sum_k mode_k(x) xi[offset + k].
/// Covers KL fields, deterministic functions and scalar-amplitude inputs.
class InputField {
 public:
  using MeanFn = std::function<Eigen::VectorXd(const Eigen::MatrixXd&)>;
  using ModeFn = std::function<Eigen::MatrixXd(const Eigen::MatrixXd&)>;

  /// The zero field.
  InputField()
      : mean_([](const Eigen::MatrixXd& p) { return Eigen::VectorXd::Zero(p.rows()); }),
        modes_([](const Eigen::MatrixXd& p) { return Eigen::MatrixXd(p.rows(), 0); }) {}

  static InputField constant(double value) {
    return deterministic([value](const Eigen::MatrixXd& p) { return Eigen::VectorXd::Constant(p.rows(), value); });
  }

  static InputField deterministic(MeanFn mean) {
    InputField f;
    f.mean_ = std::move(mean);
    f.modes_ = [](const Eigen::MatrixXd& p) { return Eigen::MatrixXd(p.rows(), 0); };
    return f;
  }

  /// KL field over the listed coordinates of the problem's points.
  static InputField kl(std::shared_ptr<const KLBasis> basis, std::vector<Eigen::Index> coords, std::size_t offset) {
    if (static_cast<Eigen::Index>(coords.size()) != basis->dim()) throw ShapeError("InputField::kl: coordinate count");
    InputField f;
    f.offset_ = offset;
    f.count_ = static_cast<std::size_t>(basis->modes());
    auto pick = [coords](const Eigen::MatrixXd& p) {
      Eigen::MatrixXd sub(p.rows(), static_cast<Eigen::Index>(coords.size()));
      for (std::size_t c = 0; c < coords.size(); ++c) sub.col(static_cast<Eigen::Index>(c)) = p.col(coords[c]);
      return sub;
    };
    f.mean_ = [basis, pick](const Eigen::MatrixXd& p) { return kl_mean_values(*basis, pick(p)); };
    f.modes_ = [basis, pick](const Eigen::MatrixXd& p) { return kl_mode_values(*basis, pick(p)); };
    f.basis_ = std::move(basis);
    return f;
  }

  /// xi[offset] * shape(x).
  static InputField scaled_variable(MeanFn shape, std::size_t offset) {
    InputField f;
    f.offset_ = offset;
    f.count_ = 1;
    f.mean_ = [](const Eigen::MatrixXd& p) { return Eigen::VectorXd::Zero(p.rows()); };
    f.modes_ = [shape = std::move(shape)](const Eigen::MatrixXd& p) { return Eigen::MatrixXd(shape(p)); };
    return f;
  }

  std::size_t offset() const noexcept { return offset_; }
  std::size_t count() const noexcept { return count_; }
  const std::shared_ptr<const KLBasis>& kl_basis() const noexcept { return basis_; }

  Eigen::VectorXd mean(const Eigen::MatrixXd& points) const { return mean_(points); }
  Eigen::MatrixXd modes(const Eigen::MatrixXd& points) const { return modes_(points); }

  /// n x N values for the N samples in xi_samples (N x r).
  Eigen::MatrixXd evaluate(const Eigen::MatrixXd& points, const Eigen::MatrixXd& xi_samples) const {
    check_germ(xi_samples.cols());
    Eigen::MatrixXd out = mean_(points).replicate(1, xi_samples.rows());
    if (count_ > 0)
      out.noalias() += modes_(points) *
                       xi_samples.middleCols(static_cast<Eigen::Index>(offset_), static_cast<Eigen::Index>(count_))
                           .transpose();
    return out;
  }

  Eigen::VectorXd evaluate_one(const Eigen::MatrixXd& points, const Eigen::VectorXd& xi) const {
    check_germ(xi.size());
    Eigen::VectorXd out = mean_(points);
    if (count_ > 0)
      out.noalias() += modes_(points) * xi.segment(static_cast<Eigen::Index>(offset_), static_cast<Eigen::Index>(count_));
    return out;
  }

 private:
  void check_germ(Eigen::Index r) const {
    if (static_cast<Eigen::Index>(offset_ + count_) > r) throw ShapeError("InputField: germ too short for field");
  }

  MeanFn mean_;
  ModeFn modes_;
  std::size_t offset_ = 0;
  std::size_t count_ = 0;
  std::shared_ptr<const KLBasis> basis_;
};

}  // namespace chaosop
