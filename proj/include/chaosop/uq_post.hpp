#pragma once

// Moments and variance-based sensitivities read directly off the
// coefficients. With an orthonormal stochastic basis and Psi_0 = 1 the mean
// is the first column, the covariance the Gram of the remaining columns.

#include <cmath>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "chaosop/operator_fit.hpp"

namespace chaosop {

/// Total variance below which Sobol indices are reported as zero and flagged.
inline constexpr double kDegenerateVariance = 1e-14;

struct UQSummary {
  Eigen::MatrixXd points;
  Eigen::VectorXd mean;
  Eigen::VectorXd std;
  std::optional<Eigen::MatrixXd> covariance;
  std::optional<Eigen::MatrixXd> sobol_first;
  std::vector<bool> degenerate;  // per point, set when sobol_first is present
};

namespace detail {

inline Eigen::MatrixXd spatial_basis(const CoefficientMatrix& c, const Eigen::MatrixXd& points) {
  return assemble_phi(c.set_b, points, c.map).shared_matrix();
}

}  // namespace detail

inline Eigen::VectorXd predictive_mean(const CoefficientMatrix& c, const Eigen::MatrixXd& points) {
  return detail::spatial_basis(c, points) * c.values.col(0);
}

/// Phi (C diag(0, 1, ..., 1) C^T) Phi^T.
inline Eigen::MatrixXd predictive_covariance(const CoefficientMatrix& c, const Eigen::MatrixXd& points) {
  const Eigen::MatrixXd a = detail::spatial_basis(c, points) * c.values.rightCols(c.values.cols() - 1);
  Eigen::MatrixXd cov = a * a.transpose();
  return 0.5 * (cov + cov.transpose());
}

/// Diagonal of the covariance without forming it.
inline Eigen::VectorXd predictive_std(const CoefficientMatrix& c, const Eigen::MatrixXd& points) {
  const Eigen::MatrixXd a = detail::spatial_basis(c, points) * c.values.rightCols(c.values.cols() - 1);
  return a.rowwise().squaredNorm().cwiseSqrt();
}

struct SobolResult {
  Eigen::MatrixXd indices;       // n x r
  std::vector<bool> degenerate;  // total variance below kDegenerateVariance
};

/// First-order indices from the standard PCE variance decomposition:
///   S_i(x) = sum_{alpha : only xi_i active} a_alpha(x)^2 / sum_{alpha != 0} a_alpha(x)^2
/// with a_alpha(x) = sum_beta c_{beta alpha} Phi_beta(x).
inline SobolResult sobol_first_order(const CoefficientMatrix& c, const Eigen::MatrixXd& points) {
  const Eigen::MatrixXd a = detail::spatial_basis(c, points) * c.values;
  const std::size_t r = c.set_a.dim();
  // Which single input each stochastic index involves; -1 for none or several.
  std::vector<int> owner(c.set_a.size(), -1);
  for (std::size_t k = 0; k < c.set_a.size(); ++k) {
    auto alpha = c.set_a[k];
    int active = -1, count = 0;
    for (std::size_t i = 0; i < r; ++i)
      if (alpha[i] != 0) {
        active = static_cast<int>(i);
        ++count;
      }
    if (count == 1) owner[k] = active;
  }

  SobolResult out;
  out.indices = Eigen::MatrixXd::Zero(a.rows(), static_cast<Eigen::Index>(r));
  out.degenerate.assign(static_cast<std::size_t>(a.rows()), false);
  for (Eigen::Index pnt = 0; pnt < a.rows(); ++pnt) {
    double total = 0.0;
    for (Eigen::Index k = 1; k < a.cols(); ++k) total += a(pnt, k) * a(pnt, k);
    if (total < kDegenerateVariance) {
      out.degenerate[static_cast<std::size_t>(pnt)] = true;
      continue;
    }
    for (Eigen::Index k = 1; k < a.cols(); ++k)
      if (owner[static_cast<std::size_t>(k)] >= 0)
        out.indices(pnt, owner[static_cast<std::size_t>(k)]) += a(pnt, k) * a(pnt, k) / total;
  }
  return out;
}

inline UQSummary summarize(const CoefficientMatrix& c, const Eigen::MatrixXd& points, bool with_covariance = false,
                           bool with_sobol = true) {
  UQSummary s;
  s.points = points;
  s.mean = predictive_mean(c, points);
  if (with_covariance) {
    s.covariance = predictive_covariance(c, points);
    s.std = s.covariance->diagonal().cwiseMax(0.0).cwiseSqrt();
  } else {
    s.std = predictive_std(c, points);
  }
  if (with_sobol) {
    auto sob = sobol_first_order(c, points);
    s.sobol_first = std::move(sob.indices);
    s.degenerate = std::move(sob.degenerate);
  }
  return s;
}

}  // namespace chaosop
