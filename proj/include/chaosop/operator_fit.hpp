#pragma once

// Learning the coefficient matrix C of s ~ Phi C Psi.
//
//  * fit_data_driven: least squares against labeled samples S (n x N).
//  * fit_pc2_linear: physics-constrained closed form when every block's
//    design matrix is shared by all realizations.
//  * fit_pc2_linear_general: realization-dependent design blocks, solved by
//    preconditioned CG on the stationarity system without forming the
//    (QP x QP) Kronecker matrix.
//  * fit_pc2_nonlinear: Gauss-Newton with Levenberg damping for quadratic
//    nonlinearities; each step is a linear solve of the general form.

#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "chaosop/design.hpp"
#include "chaosop/error.hpp"
#include "chaosop/index_sets.hpp"
#include "chaosop/linalg.hpp"
#include "chaosop/orthopoly.hpp"

namespace chaosop {

struct FitOptions {
  double ridge = 0.0;        // Tikhonov shift added to the Gram matrices
  int max_iter = 50;         // Gauss-Newton accepted steps
  double grad_tol = 1e-10;   // stop when |grad| <= grad_tol (1 + loss)
  double damping = 1e-6;     // initial Levenberg damping
  double cg_tol = 1e-10;     // relative residual of every CG solve
  std::optional<int> cg_max_iter;  // default 10 Q P
  std::uint64_t seed = 0;

  void validate() const {
    if (!(ridge >= 0.0)) throw ParameterError("FitOptions: ridge must be nonnegative");
    if (!(grad_tol > 0.0)) throw ParameterError("FitOptions: grad_tol must be positive");
    if (!(damping >= 0.0)) throw ParameterError("FitOptions: damping must be nonnegative");
    if (!(cg_tol > 0.0)) throw ParameterError("FitOptions: cg_tol must be positive");
    if (max_iter < 1) throw ParameterError("FitOptions: max_iter must be positive");
    if (cg_max_iter && *cg_max_iter < 1) throw ParameterError("FitOptions: cg_max_iter must be positive");
  }
};

/// Fitted surrogate: values (Q x P) plus everything needed to evaluate it.
struct CoefficientMatrix {
  Eigen::MatrixXd values;
  MultiIndexSet set_a;  // stochastic
  MultiIndexSet set_b;  // spatio-temporal
  DomainMap map;
  Family family = Family::HermiteProbabilist;

  CoefficientMatrix() = default;
  CoefficientMatrix(Eigen::MatrixXd v, MultiIndexSet a, MultiIndexSet b, DomainMap m,
                    Family f = Family::HermiteProbabilist)
      : values(std::move(v)), set_a(std::move(a)), set_b(std::move(b)), map(std::move(m)), family(f) {
    validate();
  }

  void validate() const {
    if (values.rows() != static_cast<Eigen::Index>(set_b.size()) ||
        values.cols() != static_cast<Eigen::Index>(set_a.size()))
      throw ShapeError("CoefficientMatrix: values must be |B| x |A|");
    if (!values.allFinite()) throw DomainError("CoefficientMatrix: non-finite coefficient");
    if (map.dim() != set_b.dim()) throw ShapeError("CoefficientMatrix: domain and spatial set disagree");
  }
};

/// One constraint family (PDE, BC, IC or labeled data) of the physics loss.
struct Pc2Block {
  DesignBlock design;
  Eigen::MatrixXd target;                  // n x N
  double weight = 0.0;                     // multiplies |residual|_F^2
  std::vector<QuadraticBasis> quadratic;   // pointwise products, PDE blocks only
};

/// Loss L(C) = sum_b weight_b |R_b|_F^2 with
///   R_b = Phi_b (C Psi) + sum_q (L_q C Psi) .* (R_q C Psi) - F_b,
/// Phi_b applied column by column when it depends on the realization.
struct Pc2System {
  std::vector<Pc2Block> blocks;
  Eigen::MatrixXd psi;  // P x N

  /// Appends a block with weight relative_weight / (n N).
  void add(DesignBlock design, Eigen::MatrixXd target, double relative_weight = 1.0,
           std::vector<QuadraticBasis> quadratic = {}) {
    if (!(relative_weight >= 0.0)) throw ParameterError("Pc2System: block weight must be nonnegative");
    const double n = static_cast<double>(design.rows());
    const double w = n > 0 ? relative_weight / (n * static_cast<double>(psi.cols())) : 0.0;
    blocks.push_back({std::move(design), std::move(target), w, std::move(quadratic)});
  }

  Eigen::Index q() const { return blocks.empty() ? 0 : blocks.front().design.cols(); }
  Eigen::Index p() const { return psi.rows(); }
  Eigen::Index n_real() const { return psi.cols(); }

  bool nonlinear() const {
    for (const auto& b : blocks)
      if (!b.quadratic.empty()) return true;
    return false;
  }
  bool per_realization() const {
    for (const auto& b : blocks)
      if (b.design.per_realization()) return true;
    return false;
  }

  void validate() const {
    if (blocks.empty()) throw ParameterError("Pc2System: no blocks");
    if (psi.size() == 0) throw ShapeError("Pc2System: empty Psi");
    bool any_positive = false;
    for (const auto& b : blocks) {
      if (b.design.cols() != q()) throw ShapeError("Pc2System: blocks disagree on Q");
      if (b.target.rows() != b.design.rows() || b.target.cols() != n_real())
        throw ShapeError("Pc2System: " + to_string(b.design.kind) + " target must be n_block x N");
      if (b.design.per_realization() && b.design.realizations() != n_real())
        throw ShapeError("Pc2System: per-realization block does not match N");
      if (!(b.weight >= 0.0)) throw ParameterError("Pc2System: negative weight");
      any_positive = any_positive || b.weight > 0.0;
      for (const auto& qb : b.quadratic)
        if (qb.left.rows() != b.design.rows() || qb.right.rows() != b.design.rows() || qb.left.cols() != q() ||
            qb.right.cols() != q())
          throw ShapeError("Pc2System: quadratic basis shape");
    }
    if (!any_positive) throw ParameterError("Pc2System: every block weight is zero");
  }
};

/// Least squares fit of S ~ Phi C Psi:
///   C = (Phi^T Phi + ridge I)^-1 Phi^T S Psi^T (Psi Psi^T + ridge I)^-1.
inline Eigen::MatrixXd fit_data_driven(const Eigen::MatrixXd& phi, const Eigen::MatrixXd& psi,
                                       const Eigen::MatrixXd& s, const FitOptions& opts = {}) {
  opts.validate();
  if (s.rows() != phi.rows() || s.cols() != psi.cols()) throw ShapeError("fit_data_driven: S must be n x N");
  if (opts.ridge == 0.0) {
    if (phi.rows() < phi.cols()) throw RankDeficiencyError("spatial", 0.0);
    if (psi.cols() < psi.rows()) throw RankDeficiencyError("stochastic", 0.0);
  }
  Eigen::MatrixXd g_phi = phi.transpose() * phi;
  Eigen::MatrixXd g_psi = psi * psi.transpose();
  g_phi.diagonal().array() += opts.ridge;
  g_psi.diagonal().array() += opts.ridge;
  const SpdFactor f_phi(g_phi, "spatial");
  const SpdFactor f_psi(g_psi, "stochastic");
  const Eigen::MatrixXd left = f_phi.solve(phi.transpose() * s * psi.transpose());
  return f_psi.solve(left.transpose()).transpose();
}

namespace detail {

// One term of a (possibly linearized) design block, by reference.
struct PieceView {
  const Eigen::MatrixXd* basis;
  const Eigen::MatrixXd* field;  // nullptr for shared pieces
};

struct BlockView {
  std::vector<PieceView> pieces;
  double weight = 0.0;
  Eigen::Index rows = 0;
};

inline Eigen::MatrixXd view_apply(const BlockView& b, const Eigen::MatrixXd& u) {
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(b.rows, u.cols());
  for (const auto& pc : b.pieces) {
    if (pc.field)
      out.array() += pc.field->array() * (*pc.basis * u).array();
    else
      out.noalias() += *pc.basis * u;
  }
  return out;
}

inline Eigen::MatrixXd view_apply_transpose(const BlockView& b, const Eigen::MatrixXd& r) {
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(b.pieces.front().basis->cols(), r.cols());
  for (const auto& pc : b.pieces) {
    if (pc.field)
      out.noalias() += pc.basis->transpose() * (pc.field->array() * r.array()).matrix();
    else
      out.noalias() += pc.basis->transpose() * r;
  }
  return out;
}

inline BlockView linear_view(const Pc2Block& b) {
  BlockView v;
  v.weight = b.weight;
  v.rows = b.design.rows();
  for (const auto& t : b.design.terms) v.pieces.push_back({&t.basis, t.field ? &*t.field : nullptr});
  return v;
}

// X -> sum_b w_b sum_j Phi_bj^T Phi_bj X psi_j psi_j^T + shift X.
inline Eigen::MatrixXd normal_apply(const std::vector<BlockView>& views, const Eigen::MatrixXd& psi,
                                    const Eigen::MatrixXd& x, double shift) {
  const Eigen::MatrixXd u = x * psi;
  Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(x.rows(), psi.cols());
  for (const auto& v : views) {
    if (v.weight == 0.0) continue;
    acc.noalias() += v.weight * view_apply_transpose(v, view_apply(v, u));
  }
  Eigen::MatrixXd out = acc * psi.transpose();
  if (shift != 0.0) out.noalias() += shift * x;
  return out;
}

// Kronecker approximation A ~ G (x) Psi Psi^T with G the realization-averaged
// weighted Gram; exact when no block depends on the realization.
class KroneckerPreconditioner {
 public:
  KroneckerPreconditioner(const std::vector<BlockView>& views, const Eigen::MatrixXd& psi)
      : psi_spec_(psi * psi.transpose()), phi_spec_(averaged_gram(views, psi.cols())) {}

  void set_shift(double shift) { shift_ = shift; }

  Eigen::MatrixXd operator()(const Eigen::MatrixXd& r) const {
    const auto& u = phi_spec_.vectors;
    const auto& v = psi_spec_.vectors;
    Eigen::MatrixXd t = u.transpose() * r * v;
    const double floor = 1e-14 * phi_spec_.values.maxCoeff() * psi_spec_.values.maxCoeff();
    for (Eigen::Index k = 0; k < t.cols(); ++k)
      for (Eigen::Index i = 0; i < t.rows(); ++i)
        t(i, k) /= std::max(phi_spec_.values(i) * psi_spec_.values(k) + shift_, floor);
    return u * t * v.transpose();
  }

 private:
  static Eigen::MatrixXd averaged_gram(const std::vector<BlockView>& views, Eigen::Index n_real) {
    const Eigen::Index q = views.front().pieces.front().basis->cols();
    Eigen::MatrixXd g = Eigen::MatrixXd::Zero(q, q);
    const double inv_n = 1.0 / static_cast<double>(n_real);
    for (const auto& v : views) {
      if (v.weight == 0.0) continue;
      for (const auto& a : v.pieces)
        for (const auto& b : v.pieces) {
          // (1/N) sum_j diag(c_a[:, j] c_b[:, j]), c = 1 for shared pieces.
          Eigen::VectorXd d;
          if (a.field && b.field)
            d = (a.field->array() * b.field->array()).rowwise().sum().matrix() * inv_n;
          else if (a.field)
            d = a.field->rowwise().sum() * inv_n;
          else if (b.field)
            d = b.field->rowwise().sum() * inv_n;
          else
            d = Eigen::VectorXd::Ones(v.rows);
          g.noalias() += v.weight * (a.basis->array().colwise() * d.array()).matrix().transpose() * *b.basis;
        }
    }
    return 0.5 * (g + g.transpose());
  }

  SymmetricSpectrum psi_spec_;
  SymmetricSpectrum phi_spec_;
  double shift_ = 0.0;
};

inline int cg_cap(const FitOptions& opts, Eigen::Index q, Eigen::Index p) {
  if (opts.cg_max_iter) return *opts.cg_max_iter;
  const auto cap = 10 * q * p;
  return cap > std::numeric_limits<int>::max() ? std::numeric_limits<int>::max() : static_cast<int>(cap);
}

// Residual of one block at U = C Psi, quadratic products included.
inline Eigen::MatrixXd block_residual(const Pc2Block& b, const Eigen::MatrixXd& u) {
  Eigen::MatrixXd r = b.design.apply(u) - b.target;
  for (const auto& qb : b.quadratic) r.array() += (qb.left * u).array() * (qb.right * u).array();
  return r;
}

}  // namespace detail

inline double pc2_loss(const Eigen::MatrixXd& c, const Pc2System& system) {
  if (c.rows() != system.q() || c.cols() != system.p()) throw ShapeError("pc2_loss: C must be Q x P");
  const Eigen::MatrixXd u = c * system.psi;
  double loss = 0.0;
  for (const auto& b : system.blocks)
    if (b.weight != 0.0) loss += b.weight * detail::block_residual(b, u).squaredNorm();
  return loss;
}

/// Analytic gradient of pc2_loss, product-rule terms included.
inline Eigen::MatrixXd pc2_loss_gradient(const Eigen::MatrixXd& c, const Pc2System& system) {
  if (c.rows() != system.q() || c.cols() != system.p()) throw ShapeError("pc2_loss_gradient: C must be Q x P");
  const Eigen::MatrixXd u = c * system.psi;
  Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(c.rows(), u.cols());
  for (const auto& b : system.blocks) {
    if (b.weight == 0.0) continue;
    const Eigen::MatrixXd r = detail::block_residual(b, u);
    Eigen::MatrixXd back = b.design.apply_transpose(r);
    for (const auto& qb : b.quadratic) {
      back.noalias() += qb.left.transpose() * (r.array() * (qb.right * u).array()).matrix();
      back.noalias() += qb.right.transpose() * (r.array() * (qb.left * u).array()).matrix();
    }
    acc.noalias() += 2.0 * b.weight * back;
  }
  return acc * system.psi.transpose();
}

/// Stationarity system of the linear physics loss for realization-dependent
/// blocks, solved matrix-free by preconditioned CG:
///   sum_b w_b sum_j Phi_bj^T Phi_bj C psi_j psi_j^T + ridge C = sum_b w_b sum_j Phi_bj^T f_bj psi_j^T.
inline Eigen::MatrixXd fit_pc2_linear_general(const Pc2System& system, const FitOptions& opts = {}) {
  opts.validate();
  system.validate();
  if (system.nonlinear()) throw ParameterError("fit_pc2_linear_general: system has quadratic terms");
  std::vector<detail::BlockView> views;
  for (const auto& b : system.blocks) views.push_back(detail::linear_view(b));

  Eigen::MatrixXd rhs_q = Eigen::MatrixXd::Zero(system.q(), system.n_real());
  for (const auto& b : system.blocks)
    if (b.weight != 0.0) rhs_q.noalias() += b.weight * b.design.apply_transpose(b.target);
  const Eigen::MatrixXd rhs = rhs_q * system.psi.transpose();

  detail::KroneckerPreconditioner precond(views, system.psi);
  precond.set_shift(opts.ridge);
  auto apply = [&](const Eigen::MatrixXd& x) { return detail::normal_apply(views, system.psi, x, opts.ridge); };
  auto result = pcg(apply, precond, rhs, Eigen::MatrixXd::Zero(system.q(), system.p()), opts.cg_tol,
                    detail::cg_cap(opts, system.q(), system.p()));
  return std::move(result.solution);
}

/// Closed-form minimizer of the linear physics loss when all design blocks
/// are shared across realizations:
///   C = [sum_b w_b Phi_b^T Phi_b]^-1 [sum_b w_b Phi_b^T F_b] Psi^T [Psi Psi^T]^-1.
/// Realization-dependent systems are routed to fit_pc2_linear_general.
inline Eigen::MatrixXd fit_pc2_linear(const Pc2System& system, const FitOptions& opts = {}) {
  opts.validate();
  system.validate();
  if (system.nonlinear()) throw ParameterError("fit_pc2_linear: system has quadratic terms; use fit_pc2_nonlinear");
  if (system.per_realization()) return fit_pc2_linear_general(system, opts);

  const Eigen::Index q = system.q();
  Eigen::MatrixXd g_phi = Eigen::MatrixXd::Zero(q, q);
  Eigen::MatrixXd h = Eigen::MatrixXd::Zero(q, system.n_real());
  for (const auto& b : system.blocks) {
    if (b.weight == 0.0) continue;
    const Eigen::MatrixXd phi = b.design.shared_matrix();
    g_phi.noalias() += b.weight * phi.transpose() * phi;
    h.noalias() += b.weight * phi.transpose() * b.target;
  }
  Eigen::MatrixXd g_psi = system.psi * system.psi.transpose();
  g_phi.diagonal().array() += opts.ridge;
  g_psi.diagonal().array() += opts.ridge;
  const SpdFactor f_phi(g_phi, "spatial");
  const SpdFactor f_psi(g_psi, "stochastic");
  const Eigen::MatrixXd left = f_phi.solve(h * system.psi.transpose());
  return f_psi.solve(left.transpose()).transpose();
}

/// Returns a copy of `system` with a DATA block (phi_data C Psi ~ s_data)
/// whose weight is relative_weight / (n N), like every other block.
inline Pc2System augment_with_data(Pc2System system, const Eigen::MatrixXd& phi_data, const Eigen::MatrixXd& s_data,
                                   double relative_weight = 1.0) {
  if (s_data.cols() != system.n_real()) throw ShapeError("augment_with_data: S_data must have N columns");
  if (s_data.rows() != phi_data.rows()) throw ShapeError("augment_with_data: S_data must have one row per point");
  if (!system.blocks.empty() && phi_data.cols() != system.q()) throw ShapeError("augment_with_data: Phi has wrong Q");
  DesignBlock block;
  block.kind = BlockKind::DATA;
  block.terms.push_back({phi_data, std::nullopt});
  system.add(std::move(block), s_data, relative_weight);
  return system;
}

struct GaussNewtonStep {
  int iter = 0;
  double loss = 0.0;
  double grad_norm = 0.0;
  double damping = 0.0;
  bool accepted = true;
  int cg_iterations = 0;
};

struct NonlinearFit {
  Eigen::MatrixXd coefficients;
  std::vector<GaussNewtonStep> trace;
  bool converged = false;
};

/// Damped Gauss-Newton on vec(C). Each attempt solves
///   (J^T W J + (damping + ridge) I) delta = -grad / 2
/// with the Jacobian of every residual column taken around the current C;
/// quadratic products linearize into realization-dependent design pieces.
/// A step is accepted only if the loss decreases; damping is divided by 10
/// on acceptance and multiplied by 10 on rejection.
inline NonlinearFit fit_pc2_nonlinear(const Pc2System& system, std::optional<Eigen::MatrixXd> init = std::nullopt,
                                      const FitOptions& opts = {}) {
  opts.validate();
  system.validate();
  if (!system.nonlinear()) throw ParameterError("fit_pc2_nonlinear: system has no quadratic terms");
  const Eigen::Index q = system.q(), p = system.p();

  NonlinearFit fit;
  fit.coefficients = init ? std::move(*init) : Eigen::MatrixXd::Zero(q, p);
  if (fit.coefficients.rows() != q || fit.coefficients.cols() != p)
    throw ShapeError("fit_pc2_nonlinear: initial C must be Q x P");
  Eigen::MatrixXd& c = fit.coefficients;

  double loss = pc2_loss(c, system);
  double damping = opts.damping;
  const int cg_max = detail::cg_cap(opts, q, p);
  int attempt = 0;

  for (int accepted = 0;;) {
    const Eigen::MatrixXd grad = pc2_loss_gradient(c, system);
    const double gnorm = grad.norm();
    if (fit.trace.empty()) fit.trace.push_back({0, loss, gnorm, damping, true, 0});
    fit.trace.back().grad_norm = gnorm;
    if (gnorm <= opts.grad_tol * (1.0 + loss)) {
      fit.converged = true;
      return fit;
    }
    if (accepted >= opts.max_iter) return fit;

    // Linearization: J delta = Phi_b delta Psi + sum_q [(L delta Psi) .* (R U) + (L U) .* (R delta Psi)].
    const Eigen::MatrixXd u = c * system.psi;
    std::vector<Eigen::MatrixXd> fields;
    std::size_t n_fields = 0;
    for (const auto& b : system.blocks) n_fields += 2 * b.quadratic.size();
    fields.reserve(n_fields);
    std::vector<detail::BlockView> views;
    for (const auto& b : system.blocks) {
      auto v = detail::linear_view(b);
      for (const auto& qb : b.quadratic) {
        fields.push_back(qb.right * u);
        v.pieces.push_back({&qb.left, &fields.back()});
        fields.push_back(qb.left * u);
        v.pieces.push_back({&qb.right, &fields.back()});
      }
      views.push_back(std::move(v));
    }
    detail::KroneckerPreconditioner precond(views, system.psi);
    const Eigen::MatrixXd rhs = -0.5 * grad;

    while (true) {
      ++attempt;
      const double shift = damping + opts.ridge;
      precond.set_shift(shift);
      auto apply = [&](const Eigen::MatrixXd& x) { return detail::normal_apply(views, system.psi, x, shift); };
      std::optional<CgResult> step;
      try {
        step = pcg(apply, precond, rhs, Eigen::MatrixXd::Zero(q, p), opts.cg_tol, cg_max);
      } catch (const ConvergenceError&) {
        step.reset();
      }
      const double trial_loss = step ? pc2_loss(c + step->solution, system) : std::numeric_limits<double>::infinity();
      const int cg_its = step ? step->iterations : cg_max;
      if (trial_loss < loss) {
        c += step->solution;
        loss = trial_loss;
        ++accepted;
        fit.trace.push_back({attempt, loss, 0.0, damping, true, cg_its});
        damping /= 10.0;
        break;
      }
      fit.trace.push_back({attempt, trial_loss, gnorm, damping, false, cg_its});
      damping *= 10.0;
      if (damping > 1e12) throw StagnationError(c, loss);
    }
  }
}

/// s(points, xi) ~ Phi(points) C Psi(xi), points n x (d+1), xi N x r.
inline Eigen::MatrixXd predict(const CoefficientMatrix& c, const Eigen::MatrixXd& points,
                               const Eigen::MatrixXd& xi_samples) {
  const Eigen::MatrixXd phi = assemble_phi(c.set_b, points, c.map).shared_matrix();
  const Eigen::MatrixXd psi = assemble_psi(c.set_a, xi_samples, c.family);
  return phi * (c.values * psi);
}

}  // namespace chaosop
