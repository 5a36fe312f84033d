#pragma once

#include <algorithm>
#include <cmath>
#include <string>

#include <Eigen/Dense>

#include "chaosop/error.hpp"

namespace chaosop {

/// Reciprocal condition estimate below which a Gram matrix counts as singular.
inline constexpr double kRcondFloor = 1e-15;

/// Cholesky factorization of a symmetric positive-definite Gram matrix.
/// Rank failures are reported, never pseudo-inverted.
class SpdFactor {
 public:
  SpdFactor(const Eigen::MatrixXd& gram, std::string side) : llt_(gram) {
    if (llt_.info() != Eigen::Success) throw RankDeficiencyError(std::move(side), 0.0);
    const double rc = llt_.rcond();
    if (!(rc > kRcondFloor)) throw RankDeficiencyError(std::move(side), rc);
  }

  Eigen::MatrixXd solve(const Eigen::MatrixXd& rhs) const { return llt_.solve(rhs); }

 private:
  Eigen::LLT<Eigen::MatrixXd> llt_;
};

/// Eigendecomposition of a symmetric matrix with eigenvalues clamped at zero.
struct SymmetricSpectrum {
  Eigen::VectorXd values;
  Eigen::MatrixXd vectors;

  explicit SymmetricSpectrum(const Eigen::MatrixXd& m) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m);
    if (es.info() != Eigen::Success) throw Error("symmetric eigendecomposition failed");
    values = es.eigenvalues().cwiseMax(0.0);
    vectors = es.eigenvectors();
  }
};

struct CgResult {
  Eigen::MatrixXd solution;
  int iterations = 0;
  double relative_residual = 0.0;
};

/// Preconditioned conjugate gradients on matrices under the Frobenius inner
/// product. `apply` must be symmetric positive definite, `precondition` an
/// SPD approximation of its inverse. The recursive residual is confirmed
/// against the true residual before returning; on disagreement CG restarts.
template <class Apply, class Precondition>
CgResult pcg(Apply&& apply, Precondition&& precondition, const Eigen::MatrixXd& rhs, Eigen::MatrixXd x, double tol,
             int max_iter) {
  const double bnorm = rhs.norm();
  if (bnorm == 0.0) return {Eigen::MatrixXd::Zero(rhs.rows(), rhs.cols()), 0, 0.0};
  int it = 0;
  double rel = 0.0;
  while (true) {
    Eigen::MatrixXd r = rhs - apply(x);
    rel = r.norm() / bnorm;
    if (rel <= tol) return {std::move(x), it, rel};
    if (it >= max_iter) throw ConvergenceError(it, rel);
    Eigen::MatrixXd z = precondition(r);
    Eigen::MatrixXd p = z;
    double rz = (r.array() * z.array()).sum();
    while (it < max_iter) {
      const Eigen::MatrixXd ap = apply(p);
      const double pap = (p.array() * ap.array()).sum();
      if (!(pap > 0.0)) break;
      const double alpha = rz / pap;
      x.noalias() += alpha * p;
      r.noalias() -= alpha * ap;
      ++it;
      if (r.norm() / bnorm <= tol) break;
      z = precondition(r);
      const double rz_next = (r.array() * z.array()).sum();
      p = z + (rz_next / rz) * p;
      rz = rz_next;
    }
    // Restart only if progress remains possible; a breakdown with a stale
    // residual would otherwise loop.
    const double true_rel = (rhs - apply(x)).norm() / bnorm;
    if (true_rel <= tol) return {std::move(x), it, true_rel};
    if (it >= max_iter || true_rel >= rel) throw ConvergenceError(it, true_rel);
  }
}

}  // namespace chaosop
