#pragma once

#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace chaosop {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Argument outside the mathematical domain (non-finite input, point outside a box).
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Matrix or vector dimensions that do not line up.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Invalid configuration value (negative counts, unsupported derivative order, ...).
class ParameterError : public Error {
 public:
  using Error::Error;
};

/// Integer cardinality that does not fit the platform integer.
class OverflowError : public Error {
 public:
  using Error::Error;
};

/// A Gram matrix that is singular to working precision.
class RankDeficiencyError : public Error {
 public:
  RankDeficiencyError(std::string side, double rcond)
      : Error("rank-deficient " + side + " Gram matrix (reciprocal condition " +
              std::to_string(rcond) + ")"),
        side_(std::move(side)),
        rcond_(rcond) {}

  const std::string& side() const noexcept { return side_; }
  double rcond() const noexcept { return rcond_; }

 private:
  std::string side_;
  double rcond_;
};

/// Iterative linear solve that did not reach its tolerance.
class ConvergenceError : public Error {
 public:
  ConvergenceError(int iterations, double relative_residual)
      : Error("conjugate gradients stopped after " + std::to_string(iterations) +
              " iterations at relative residual " + std::to_string(relative_residual)),
        iterations_(iterations),
        relative_residual_(relative_residual) {}

  int iterations() const noexcept { return iterations_; }
  double relative_residual() const noexcept { return relative_residual_; }

 private:
  int iterations_;
  double relative_residual_;
};

/// Gauss-Newton gave up: damping grew past its ceiling without a loss decrease.
class StagnationError : public Error {
 public:
  StagnationError(Eigen::MatrixXd best, double best_loss)
      : Error("Gauss-Newton stagnated at loss " + std::to_string(best_loss)),
        best_(std::move(best)),
        best_loss_(best_loss) {}

  const Eigen::MatrixXd& best() const noexcept { return best_; }
  double best_loss() const noexcept { return best_loss_; }

 private:
  Eigen::MatrixXd best_;
  double best_loss_;
};

/// Per-sample failure of a reference solver.
class SolverError : public Error {
 public:
  using Error::Error;
};

/// File could not be read, written or renamed.
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace chaosop
