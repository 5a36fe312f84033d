#pragma once

// Finite-difference reference solvers that produce training and test data.
// Every solver returns the full space-time grid; interpolation to query
// points is multilinear (exact on grid nodes).

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "chaosop/error.hpp"

namespace chaosop {

/// Values on a tensor grid of uniform axes, last axis fastest.
struct GridSolution {
  std::vector<Eigen::VectorXd> axes;
  Eigen::VectorXd values;

  std::size_t dim() const { return axes.size(); }

  Eigen::Index flat(const std::vector<Eigen::Index>& idx) const {
    Eigen::Index f = 0;
    for (std::size_t k = 0; k < axes.size(); ++k) f = f * axes[k].size() + idx[k];
    return f;
  }

  /// Multilinear interpolation at points (n x dim).
  Eigen::VectorXd interpolate(const Eigen::MatrixXd& points) const {
    const std::size_t d = dim();
    if (static_cast<std::size_t>(points.cols()) != d) throw ShapeError("GridSolution: point dimension mismatch");
    Eigen::VectorXd out(points.rows());
    std::vector<Eigen::Index> lo(d), idx(d);
    std::vector<double> frac(d);
    for (Eigen::Index i = 0; i < points.rows(); ++i) {
      for (std::size_t k = 0; k < d; ++k) {
        const auto& ax = axes[k];
        const Eigen::Index m = ax.size();
        const double h = (ax(m - 1) - ax(0)) / static_cast<double>(m - 1);
        const double pos = (points(i, static_cast<Eigen::Index>(k)) - ax(0)) / h;
        if (pos < -1e-9 || pos > static_cast<double>(m - 1) + 1e-9)
          throw DomainError("GridSolution: point outside the solver grid");
        Eigen::Index j = static_cast<Eigen::Index>(std::floor(pos + 1e-9));
        j = std::clamp<Eigen::Index>(j, 0, m - 2);
        double f = pos - static_cast<double>(j);
        if (std::abs(f) < 1e-9) f = 0.0;
        if (std::abs(f - 1.0) < 1e-9) f = 1.0;
        lo[k] = j;
        frac[k] = f;
      }
      double acc = 0.0;
      for (unsigned corner = 0; corner < (1u << d); ++corner) {
        double w = 1.0;
        for (std::size_t k = 0; k < d; ++k) {
          const bool up = (corner >> k) & 1u;
          w *= up ? frac[k] : 1.0 - frac[k];
          idx[k] = lo[k] + (up ? 1 : 0);
        }
        if (w != 0.0) acc += w * values(flat(idx));
      }
      out(i) = acc;
    }
    return out;
  }
};

inline Eigen::VectorXd uniform_axis(double lo, double hi, Eigen::Index intervals) {
  return Eigen::VectorXd::LinSpaced(intervals + 1, lo, hi);
}

namespace detail {

// Thomas algorithm for a constant-coefficient or general tridiagonal system;
// sub(i) multiplies x(i-1), sup(i) multiplies x(i+1).
inline void solve_tridiagonal(const Eigen::VectorXd& sub, const Eigen::VectorXd& diag, const Eigen::VectorXd& sup,
                              Eigen::Ref<Eigen::VectorXd> rhs) {
  const Eigen::Index n = diag.size();
  Eigen::VectorXd c(n);
  c(0) = sup(0) / diag(0);
  rhs(0) /= diag(0);
  for (Eigen::Index i = 1; i < n; ++i) {
    const double m = diag(i) - sub(i) * c(i - 1);
    c(i) = i + 1 < n ? sup(i) / m : 0.0;
    rhs(i) = (rhs(i) - sub(i) * rhs(i - 1)) / m;
  }
  for (Eigen::Index i = n - 2; i >= 0; --i) rhs(i) -= c(i) * rhs(i + 1);
}

inline void check_finite(const Eigen::VectorXd& v, const char* solver) {
  if (!v.allFinite()) throw SolverError(std::string(solver) + ": solution blew up");
}

}  // namespace detail

/// s(x) = int_0^x u on a uniform grid: cumulative trapezoid plus the
/// Euler-Maclaurin end correction -h^2/12 (u'(x) - u'(0)), with u' from
/// second-order differences, giving fourth-order accuracy.
inline GridSolution solve_antiderivative(const Eigen::VectorXd& x, const Eigen::VectorXd& u) {
  if (x.size() != u.size() || x.size() < 2) throw ShapeError("solve_antiderivative: grid and integrand differ");
  const Eigen::Index n = x.size();
  const double h = (x(n - 1) - x(0)) / static_cast<double>(n - 1);
  GridSolution g;
  g.axes = {x};
  g.values.resize(n);
  g.values(0) = 0.0;
  for (Eigen::Index i = 1; i < n; ++i) g.values(i) = g.values(i - 1) + 0.5 * (x(i) - x(i - 1)) * (u(i) + u(i - 1));
  if (n >= 3) {
    Eigen::VectorXd du(n);
    du(0) = (-3 * u(0) + 4 * u(1) - u(2)) / (2 * h);
    du(n - 1) = (3 * u(n - 1) - 4 * u(n - 2) + u(n - 3)) / (2 * h);
    for (Eigen::Index i = 1; i < n - 1; ++i) du(i) = (u(i + 1) - u(i - 1)) / (2 * h);
    for (Eigen::Index i = 1; i < n; ++i) g.values(i) -= h * h / 12.0 * (du(i) - du(0));
  }
  detail::check_finite(g.values, "antiderivative");
  return g;
}

/// s_t + v(x) s_x = D s_xx on [0,1] x [0,T], s(x,0) = sin(pi x), s = 0 at x = 0, 1.
/// Crank-Nicolson in time with central differences for both spatial terms.
struct AdvectionDiffusionSolver {
  double diffusivity = 0.1;
  double t_end = 1.0;
  Eigen::Index space_intervals = 400;
  Eigen::Index time_steps = 400;

  /// v_on_grid holds the velocity at the space_intervals + 1 nodes.
  GridSolution solve(const Eigen::VectorXd& v_on_grid) const {
    const Eigen::Index m = space_intervals, nt = time_steps;
    if (v_on_grid.size() != m + 1) throw ShapeError("advection-diffusion: velocity must live on the solver grid");
    const double h = 1.0 / static_cast<double>(m), dt = t_end / static_cast<double>(nt);
    const Eigen::Index n = m - 1;
    // A s = lo s_{i-1} + di s_i + up s_{i+1}, s_t = -A s.
    Eigen::VectorXd lo(n), di(n), up(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      const double v = v_on_grid(i + 1);
      lo(i) = -diffusivity / (h * h) - v / (2 * h);
      di(i) = 2 * diffusivity / (h * h);
      up(i) = -diffusivity / (h * h) + v / (2 * h);
    }
    const Eigen::VectorXd sub = 0.5 * dt * lo, diag = Eigen::VectorXd::Ones(n) + 0.5 * dt * di, sup = 0.5 * dt * up;

    GridSolution g;
    g.axes = {uniform_axis(0.0, 1.0, m), uniform_axis(0.0, t_end, nt)};
    g.values.resize((m + 1) * (nt + 1));
    Eigen::VectorXd s = (M_PI * g.axes[0].array()).sin().matrix();
    s(0) = s(m) = 0.0;
    auto store = [&](Eigen::Index k) {
      for (Eigen::Index i = 0; i <= m; ++i) g.values(i * (nt + 1) + k) = s(i);
    };
    // Exact IC on the nodes (sin(pi) is not exactly zero in floating point).
    for (Eigen::Index i = 0; i <= m; ++i) g.values(i * (nt + 1)) = std::sin(M_PI * g.axes[0](i));
    Eigen::VectorXd rhs(n);
    for (Eigen::Index k = 1; k <= nt; ++k) {
      for (Eigen::Index i = 0; i < n; ++i) {
        const double as = lo(i) * s(i) + di(i) * s(i + 1) + up(i) * s(i + 2);
        rhs(i) = s(i + 1) - 0.5 * dt * as;
      }
      detail::solve_tridiagonal(sub, diag, sup, rhs);
      s.segment(1, n) = rhs;
      store(k);
    }
    detail::check_finite(g.values, "advection-diffusion");
    return g;
  }
};

/// s_t + s s_x = nu s_xx + f(x) on [0,1] x [0,T], s(x,0) = sin(pi x), Dirichlet zero.
/// Crank-Nicolson diffusion with a Heun predictor-corrector for the
/// conservative flux (s^2/2)_x in central form.
struct BurgersSolver {
  double viscosity = 0.001;
  double t_end = 0.3;
  Eigen::Index space_intervals = 512;
  Eigen::Index time_steps = 1500;

  GridSolution solve(const Eigen::VectorXd& f_on_grid) const {
    const Eigen::Index m = space_intervals, nt = time_steps;
    if (f_on_grid.size() != m + 1) throw ShapeError("burgers: forcing must live on the solver grid");
    const double h = 1.0 / static_cast<double>(m), dt = t_end / static_cast<double>(nt);
    const Eigen::Index n = m - 1;
    const double d = viscosity * dt / (2 * h * h);
    const Eigen::VectorXd sub = Eigen::VectorXd::Constant(n, -d), sup = Eigen::VectorXd::Constant(n, -d);
    const Eigen::VectorXd diag = Eigen::VectorXd::Constant(n, 1 + 2 * d);

    GridSolution g;
    g.axes = {uniform_axis(0.0, 1.0, m), uniform_axis(0.0, t_end, nt)};
    g.values.resize((m + 1) * (nt + 1));
    Eigen::VectorXd s = (M_PI * g.axes[0].array()).sin().matrix();
    s(0) = s(m) = 0.0;
    for (Eigen::Index i = 0; i <= m; ++i) g.values(i * (nt + 1)) = std::sin(M_PI * g.axes[0](i));

    auto flux_div = [&](const Eigen::VectorXd& u, Eigen::VectorXd& out) {
      for (Eigen::Index i = 0; i < n; ++i) out(i) = (0.25 / h) * (u(i + 2) * u(i + 2) - u(i) * u(i));
    };
    Eigen::VectorXd base(n), n0(n), n1(n), rhs(n), pred = s;
    for (Eigen::Index k = 1; k <= nt; ++k) {
      for (Eigen::Index i = 0; i < n; ++i) base(i) = s(i + 1) + d * (s(i) - 2 * s(i + 1) + s(i + 2));
      flux_div(s, n0);
      rhs = base + dt * (f_on_grid.segment(1, n) - n0);
      detail::solve_tridiagonal(sub, diag, sup, rhs);
      pred.segment(1, n) = rhs;
      flux_div(pred, n1);
      rhs = base + dt * (f_on_grid.segment(1, n) - 0.5 * (n0 + n1));
      detail::solve_tridiagonal(sub, diag, sup, rhs);
      s.segment(1, n) = rhs;
      for (Eigen::Index i = 0; i <= m; ++i) g.values(i * (nt + 1) + k) = s(i);
    }
    detail::check_finite(g.values, "burgers");
    return g;
  }
};

/// s_t = alpha (s_xx + s_yy) + f(x, y) on [0,1]^2 x [0,T],
/// s(x,y,0) = A sin(2 pi x) sin(2 pi y), Dirichlet zero.
/// Peaceman-Rachford ADI (second order, unconditionally stable).
struct Heat2dSolver {
  double alpha = 0.01;
  double t_end = 1.0;
  Eigen::Index space_intervals = 64;
  Eigen::Index time_steps = 200;

  /// f_on_grid is (m+1) x (m+1) with x along rows.
  GridSolution solve(const Eigen::MatrixXd& f_on_grid, double amplitude) const {
    const Eigen::Index m = space_intervals, nt = time_steps;
    if (f_on_grid.rows() != m + 1 || f_on_grid.cols() != m + 1)
      throw ShapeError("heat2d: forcing must live on the solver grid");
    const double h = 1.0 / static_cast<double>(m), dt = t_end / static_cast<double>(nt);
    const Eigen::Index n = m - 1;
    const double d = alpha * dt / (2 * h * h);
    const Eigen::VectorXd sub = Eigen::VectorXd::Constant(n, -d), sup = Eigen::VectorXd::Constant(n, -d);
    const Eigen::VectorXd diag = Eigen::VectorXd::Constant(n, 1 + 2 * d);

    GridSolution g;
    const Eigen::VectorXd x = uniform_axis(0.0, 1.0, m);
    g.axes = {x, x, uniform_axis(0.0, t_end, nt)};
    g.values.resize((m + 1) * (m + 1) * (nt + 1));
    const Eigen::Index plane = nt + 1;
    Eigen::MatrixXd s(m + 1, m + 1);
    for (Eigen::Index i = 0; i <= m; ++i)
      for (Eigen::Index j = 0; j <= m; ++j) {
        const bool edge = i == 0 || j == 0 || i == m || j == m;
        s(i, j) = edge ? 0.0 : amplitude * std::sin(2 * M_PI * x(i)) * std::sin(2 * M_PI * x(j));
      }
    auto store = [&](Eigen::Index k) {
      for (Eigen::Index i = 0; i <= m; ++i)
        for (Eigen::Index j = 0; j <= m; ++j) g.values((i * (m + 1) + j) * plane + k) = s(i, j);
    };
    store(0);
    Eigen::MatrixXd half = Eigen::MatrixXd::Zero(m + 1, m + 1);
    Eigen::VectorXd line(n);
    for (Eigen::Index k = 1; k <= nt; ++k) {
      // Implicit in x, explicit in y.
      for (Eigen::Index j = 1; j < m; ++j) {
        for (Eigen::Index i = 1; i < m; ++i)
          line(i - 1) = s(i, j) + d * (s(i, j + 1) - 2 * s(i, j) + s(i, j - 1)) + 0.5 * dt * f_on_grid(i, j);
        detail::solve_tridiagonal(sub, diag, sup, line);
        half.col(j).segment(1, n) = line;
      }
      // Implicit in y, explicit in x.
      for (Eigen::Index i = 1; i < m; ++i) {
        for (Eigen::Index j = 1; j < m; ++j)
          line(j - 1) = half(i, j) + d * (half(i + 1, j) - 2 * half(i, j) + half(i - 1, j)) + 0.5 * dt * f_on_grid(i, j);
        detail::solve_tridiagonal(sub, diag, sup, line);
        s.row(i).segment(1, n) = line.transpose();
      }
      store(k);
    }
    detail::check_finite(g.values, "heat2d");
    return g;
  }
};

}  // namespace chaosop
