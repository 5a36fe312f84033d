#pragma once

// Benchmark problems: physics constraints for the PC2 fit, a finite-difference
// reference solver mapping the germ xi to a solution, and the evaluation grids.

#include <atomic>
#include <cmath>
#include <cstdint>
#include <exception>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <Eigen/Dense>

#include "chaosop/design.hpp"
#include "chaosop/error.hpp"
#include "chaosop/fd_solvers.hpp"
#include "chaosop/index_sets.hpp"
#include "chaosop/operator_fit.hpp"
#include "chaosop/random_field.hpp"

namespace chaosop {

/// Optional overrides of a reference solver's resolution.
struct SolverGrid {
  std::optional<Eigen::Index> space_intervals;
  std::optional<Eigen::Index> time_steps;

  void validate() const {
    if (space_intervals && *space_intervals < 2) throw ParameterError("solver grid: need at least 2 intervals");
    if (time_steps && *time_steps < 1) throw ParameterError("solver grid: need at least 1 time step");
  }
};

/// One family of residuals: op[s] = target on the points of `kind`.
struct Constraint {
  BlockKind kind = BlockKind::PDE;
  DiffOpSpec op;
  std::vector<InputField> coefficients;  // indexed by DiffTerm::field
  InputField target;
};

struct ProblemDefaults {
  int p = 3;
  int q = 10;
  double hyperbolic_q = 1.0;
  std::size_t n_train = 100;
  std::size_t n_test = 1000;
  std::size_t n_unlabeled = 1000;
  std::size_t n_mcs = 10000;
  PointCounts points;
  std::uint64_t seed = 1;
  FitOptions fit;
};

/// KL field occupying germ coordinates [offset, offset + modes).
struct KlComponent {
  std::string name;
  std::size_t offset = 0;
  std::shared_ptr<const KLBasis> basis;
};

struct PdeProblem {
  std::string name;
  Box box;
  std::size_t r = 0;
  std::vector<KlComponent> kl;
  std::vector<Constraint> constraints;
  ProblemDefaults defaults;
  std::vector<std::vector<double>> query_axes;  // test/evaluation grid
  std::vector<std::vector<double>> uq_axes;     // mean/std comparison grid
  InputField input;                             // the input function recorded in datasets
  Eigen::MatrixXd input_points;
  std::function<GridSolution(const Eigen::VectorXd&)> solve;
  std::string solver_id;
  std::string solver_grid;

  Eigen::MatrixXd query_points() const { return tensor_grid(query_axes); }
  Eigen::MatrixXd uq_points() const { return tensor_grid(uq_axes); }
  DomainMap domain_map() const { return DomainMap(box); }

  MultiIndexSet stochastic_set(int p, double hyperbolic) const {
    return hyperbolic < 1.0 ? hyperbolic_set(r, p, hyperbolic) : total_degree_set(r, p);
  }
  MultiIndexSet spatial_set(int q) const { return total_degree_set(box.dim(), q); }
};

/// N standard-normal germ samples (N x r), sample by sample from one stream.
inline Eigen::MatrixXd draw_xi(std::size_t n, std::size_t r, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd;
  Eigen::MatrixXd xi(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(r));
  for (Eigen::Index j = 0; j < xi.rows(); ++j)
    for (Eigen::Index i = 0; i < xi.cols(); ++i) xi(j, i) = nd(rng);
  return xi;
}

namespace detail {

inline std::vector<double> linspace(double lo, double hi, std::size_t count) {
  std::vector<double> v(count);
  for (std::size_t i = 0; i < count; ++i)
    v[i] = count == 1 ? lo : lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(count - 1);
  return v;
}

// Runs body(i) for i in [0, n) on up to `threads` workers. Results must be
// written by index so the outcome does not depend on scheduling; the first
// exception (lowest index) is rethrown.
inline void parallel_for(std::size_t n, unsigned threads, const std::function<void(std::size_t)>& body) {
  threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(std::max<std::size_t>(n, 1))));
  if (threads == 1) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::mutex mu;
  std::size_t failed_at = n;
  std::exception_ptr failure;
  auto worker = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        body(i);
      } catch (...) {
        std::lock_guard lock(mu);
        if (i < failed_at) {
          failed_at = i;
          failure = std::current_exception();
        }
      }
    }
  };
  std::vector<std::jthread> pool;
  for (unsigned t = 0; t < threads; ++t) pool.emplace_back(worker);
  pool.clear();
  if (failure) std::rethrow_exception(failure);
}

inline std::string describe_xi(const Eigen::VectorXd& xi) {
  std::ostringstream os;
  os.precision(17);
  os << "[";
  for (Eigen::Index i = 0; i < xi.size(); ++i) os << (i ? ", " : "") << xi(i);
  os << "]";
  return os.str();
}

// Input field values on a solver grid, with the mode matrix precomputed once.
struct GridInput {
  Eigen::VectorXd mean;
  Eigen::MatrixXd modes;
  std::size_t offset = 0;

  GridInput(const InputField& field, const Eigen::MatrixXd& points)
      : mean(field.mean(points)), modes(field.modes(points)), offset(field.offset()) {}

  Eigen::VectorXd operator()(const Eigen::VectorXd& xi) const {
    Eigen::VectorXd v = mean;
    if (modes.cols() > 0) v.noalias() += modes * xi.segment(static_cast<Eigen::Index>(offset), modes.cols());
    return v;
  }
};

inline Eigen::MatrixXd with_zero_columns(const Eigen::VectorXd& x, Eigen::Index extra) {
  Eigen::MatrixXd p = Eigen::MatrixXd::Zero(x.size(), 1 + extra);
  p.col(0) = x;
  return p;
}

inline std::shared_ptr<const KLBasis> line_kl(double sigma, double ell, double mean, Eigen::Index modes) {
  KernelSpec k;
  k.sigma = sigma;
  k.ell = ell;
  k.mean = mean;
  return std::make_shared<const KLBasis>(kl_decompose(k, uniform_grid(0.0, 1.0, 200), 0.99, modes));
}

inline InputField sine_ic(double freq) {
  return InputField::deterministic([freq](const Eigen::MatrixXd& p) {
    return Eigen::VectorXd((freq * M_PI * p.col(0).array()).sin().matrix());
  });
}

}  // namespace detail

/// ds/dx = u(x), s(0) = 0 on [0,1]; u a zero-mean GRF (sigma 1, ell 0.2).
/// x is the evolution axis, so the initial condition sits at x = 0.
inline PdeProblem problem_antiderivative(const SolverGrid& grid_override = {}) {
  grid_override.validate();
  PdeProblem pb;
  pb.name = "antiderivative";
  pb.box.axes = {{"x", 0.0, 1.0}};
  pb.box.time_axis = 0;
  auto basis = detail::line_kl(1.0, 0.2, 0.0, 6);
  pb.kl = {{"u", 0, basis}};
  pb.r = 6;
  const auto u = InputField::kl(basis, {0}, 0);
  pb.constraints = {{BlockKind::PDE, {{DiffTerm{1.0, {1}, {}}}, {}}, {}, u},
                    {BlockKind::IC, DiffOpSpec::identity(1), {}, InputField::constant(0.0)}};
  pb.defaults = {3, 10, 1.0, 100, 1000, 1000, 10000, {1000, 0, 1}, 11, {}};
  pb.query_axes = {detail::linspace(0.0, 1.0, 101)};
  pb.uq_axes = pb.query_axes;
  pb.input = u;
  pb.input_points = Eigen::Map<const Eigen::VectorXd>(pb.query_axes[0].data(), 101);

  const Eigen::Index m = grid_override.space_intervals.value_or(1000);
  const Eigen::VectorXd grid = uniform_axis(0.0, 1.0, m);
  auto in = std::make_shared<const detail::GridInput>(u, grid);
  pb.solve = [grid, in](const Eigen::VectorXd& xi) { return solve_antiderivative(grid, (*in)(xi)); };
  pb.solver_id = "corrected-cumulative-trapezoid";
  pb.solver_grid = "x: " + std::to_string(m + 1) + " nodes on [0,1]";
  return pb;
}

/// s_t + v(x) s_x = D s_xx, D = 0.1, v a GRF (mean 1, sigma 0.05, ell 0.2);
/// s(x,0) = sin(pi x), s(0,t) = s(1,t) = 0.
inline PdeProblem problem_advection_diffusion(const SolverGrid& grid_override = {}) {
  grid_override.validate();
  constexpr double kD = 0.1;
  PdeProblem pb;
  pb.name = "advection_diffusion";
  pb.box.axes = {{"x", 0.0, 1.0}, {"t", 0.0, 1.0}};
  pb.box.time_axis = 1;
  auto basis = detail::line_kl(0.05, 0.2, 1.0, 6);
  pb.kl = {{"v", 0, basis}};
  pb.r = 6;
  const auto v = InputField::kl(basis, {0}, 0);
  DiffOpSpec pde{{DiffTerm{1.0, {0, 1}, {}}, DiffTerm{-kD, {2, 0}, {}}, DiffTerm{1.0, {1, 0}, 0}}, {}};
  pb.constraints = {{BlockKind::PDE, pde, {v}, InputField::constant(0.0)},
                    {BlockKind::BC, DiffOpSpec::identity(2), {}, InputField::constant(0.0)},
                    {BlockKind::IC, DiffOpSpec::identity(2), {}, detail::sine_ic(1.0)}};
  pb.defaults = {3, 14, 1.0, 100, 1000, 1000, 10000, {400, 60, 60}, 21, {}};
  pb.query_axes = {detail::linspace(0.0, 1.0, 41), detail::linspace(0.0, 1.0, 41)};
  pb.uq_axes = pb.query_axes;
  pb.input = v;
  pb.input_points = detail::with_zero_columns(Eigen::VectorXd::LinSpaced(101, 0.0, 1.0), 1);

  AdvectionDiffusionSolver solver;
  solver.diffusivity = kD;
  solver.space_intervals = grid_override.space_intervals.value_or(solver.space_intervals);
  solver.time_steps = grid_override.time_steps.value_or(solver.time_steps);
  auto in = std::make_shared<const detail::GridInput>(
      v, detail::with_zero_columns(uniform_axis(0.0, 1.0, solver.space_intervals), 1));
  pb.solve = [solver, in](const Eigen::VectorXd& xi) { return solver.solve((*in)(xi)); };
  pb.solver_id = "crank-nicolson-central";
  pb.solver_grid = "x: " + std::to_string(solver.space_intervals + 1) + " nodes, t: " +
                   std::to_string(solver.time_steps + 1) + " levels on [0,1]";
  return pb;
}

/// s_t + s s_x = nu s_xx + f(x), nu = 0.001, f a zero-mean GRF (sigma 0.1,
/// ell 0.2); s(x,0) = sin(pi x), Dirichlet zero, t in [0, 0.3].
inline PdeProblem problem_burgers(const SolverGrid& grid_override = {}) {
  grid_override.validate();
  constexpr double kNu = 0.001, kT = 0.3;
  PdeProblem pb;
  pb.name = "burgers";
  pb.box.axes = {{"x", 0.0, 1.0}, {"t", 0.0, kT}};
  pb.box.time_axis = 1;
  auto basis = detail::line_kl(0.1, 0.2, 0.0, 6);
  pb.kl = {{"f", 0, basis}};
  pb.r = 6;
  const auto f = InputField::kl(basis, {0}, 0);
  DiffOpSpec pde{{DiffTerm{1.0, {0, 1}, {}}, DiffTerm{-kNu, {2, 0}, {}}}, {QuadraticTerm{1.0, {0, 0}, {1, 0}}}};
  pb.constraints = {{BlockKind::PDE, pde, {}, f},
                    {BlockKind::BC, DiffOpSpec::identity(2), {}, InputField::constant(0.0)},
                    {BlockKind::IC, DiffOpSpec::identity(2), {}, detail::sine_ic(1.0)}};
  pb.defaults = {3, 23, 1.0, 100, 1000, 1000, 10000, {800, 80, 80}, 31, {}};
  pb.defaults.fit.max_iter = 100;
  pb.defaults.fit.grad_tol = 1e-8;
  pb.query_axes = {detail::linspace(0.0, 1.0, 33), detail::linspace(0.0, kT, 31)};
  pb.uq_axes = pb.query_axes;
  pb.input = f;
  pb.input_points = detail::with_zero_columns(Eigen::VectorXd::LinSpaced(101, 0.0, 1.0), 1);

  BurgersSolver solver;
  solver.viscosity = kNu;
  solver.t_end = kT;
  solver.space_intervals = grid_override.space_intervals.value_or(solver.space_intervals);
  solver.time_steps = grid_override.time_steps.value_or(solver.time_steps);
  auto in = std::make_shared<const detail::GridInput>(
      f, detail::with_zero_columns(uniform_axis(0.0, 1.0, solver.space_intervals), 1));
  pb.solve = [solver, in](const Eigen::VectorXd& xi) { return solver.solve((*in)(xi)); };
  pb.solver_id = "cn-diffusion-heun-advection";
  pb.solver_grid = "x: " + std::to_string(solver.space_intervals + 1) + " nodes, t: " +
                   std::to_string(solver.time_steps + 1) + " levels on [0,0.3]";
  return pb;
}

enum class HeatScale { Desk, Full };

/// s_t = alpha (s_xx + s_yy) + f(x,y), alpha = 0.01, f a zero-mean 2D GRF
/// (sigma 1, ell 0.2, 20 modes), s(x,y,0) = A sin(2 pi x) sin(2 pi y) with
/// A standard normal (germ coordinate 20); Dirichlet zero.
inline PdeProblem problem_heat2d(HeatScale scale = HeatScale::Desk, const SolverGrid& grid_override = {}) {
  grid_override.validate();
  constexpr double kAlpha = 0.01;
  PdeProblem pb;
  pb.name = scale == HeatScale::Desk ? "heat2d" : "heat2d_full";
  pb.box.axes = {{"x", 0.0, 1.0}, {"y", 0.0, 1.0}, {"t", 0.0, 1.0}};
  pb.box.time_axis = 2;
  KernelSpec k;
  k.sigma = 1.0;
  k.ell = 0.2;
  const auto g64 = uniform_grid(0.0, 1.0, 64);
  auto basis = std::make_shared<const KLBasis>(kl_decompose_separable(k, {g64, g64}, 0.99, 20));
  pb.kl = {{"f", 0, basis}};
  pb.r = 21;
  const auto f = InputField::kl(basis, {0, 1}, 0);
  const auto ic = InputField::scaled_variable(
      [](const Eigen::MatrixXd& p) {
        return Eigen::VectorXd(((2 * M_PI * p.col(0).array()).sin() * (2 * M_PI * p.col(1).array()).sin()).matrix());
      },
      20);
  DiffOpSpec pde{{DiffTerm{1.0, {0, 0, 1}, {}}, DiffTerm{-kAlpha, {2, 0, 0}, {}}, DiffTerm{-kAlpha, {0, 2, 0}, {}}},
                 {}};
  pb.constraints = {{BlockKind::PDE, pde, {}, f},
                    {BlockKind::BC, DiffOpSpec::identity(3), {}, InputField::constant(0.0)},
                    {BlockKind::IC, DiffOpSpec::identity(3), {}, ic}};
  const bool desk = scale == HeatScale::Desk;
  pb.defaults = {4, 16, 0.9, 2500, 100, desk ? 2500u : 5000u, desk ? 1000u : 10000u, {3000, 2000, 2000}, 41, {}};
  // 21 time levels keep the degree-16 time basis identifiable from grid data.
  pb.query_axes = {detail::linspace(0.0, 1.0, 17), detail::linspace(0.0, 1.0, 17), detail::linspace(0.0, 1.0, 21)};
  pb.uq_axes = {detail::linspace(0.0, 1.0, 17), detail::linspace(0.0, 1.0, 17), {1.0}};
  pb.input = f;
  pb.input_points = tensor_grid({detail::linspace(0.0, 1.0, 17), detail::linspace(0.0, 1.0, 17)});

  Heat2dSolver solver;
  solver.alpha = kAlpha;
  solver.space_intervals = grid_override.space_intervals.value_or(desk ? 32 : 64);
  solver.time_steps = grid_override.time_steps.value_or(desk ? 100 : 200);
  const Eigen::VectorXd axis = uniform_axis(0.0, 1.0, solver.space_intervals);
  std::vector<double> ax(axis.data(), axis.data() + axis.size());
  auto in = std::make_shared<const detail::GridInput>(f, tensor_grid({ax, ax}));
  const Eigen::Index side = axis.size();
  pb.solve = [solver, in, side](const Eigen::VectorXd& xi) {
    const Eigen::VectorXd fv = (*in)(xi);
    using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    const Eigen::MatrixXd fg = Eigen::Map<const RowMajor>(fv.data(), side, side);
    return solver.solve(fg, xi(20));
  };
  pb.solver_id = "peaceman-rachford-adi";
  pb.solver_grid = "x,y: " + std::to_string(solver.space_intervals + 1) + " nodes, t: " +
                   std::to_string(solver.time_steps + 1) + " levels on [0,1]";
  return pb;
}

inline PdeProblem problem_by_name(const std::string& name, const SolverGrid& grid = {}) {
  if (name == "antiderivative") return problem_antiderivative(grid);
  if (name == "advection_diffusion") return problem_advection_diffusion(grid);
  if (name == "burgers") return problem_burgers(grid);
  if (name == "heat2d") return problem_heat2d(HeatScale::Desk, grid);
  if (name == "heat2d_full") return problem_heat2d(HeatScale::Full, grid);
  throw ParameterError("unknown problem '" + name + "'");
}

inline const std::vector<std::string>& problem_names() {
  static const std::vector<std::string> names{"antiderivative", "advection_diffusion", "burgers", "heat2d"};
  return names;
}

struct Provenance {
  std::string problem;
  std::string solver;
  std::string grid;
  std::uint64_t seed = 0;
};

struct Dataset {
  Eigen::MatrixXd xi;         // N x r
  Eigen::MatrixXd inputs;     // n_input x N, the input function at problem.input_points
  Eigen::MatrixXd points;     // n x d
  Eigen::MatrixXd solutions;  // n x N
  Provenance provenance;
};

/// Reference solutions for the given germ samples, ordered by sample index.
inline Dataset generate_dataset_for(const PdeProblem& pb, const Eigen::MatrixXd& xi, const Eigen::MatrixXd& points,
                                    std::uint64_t seed = 0, unsigned threads = 1) {
  if (xi.rows() < 1) throw ParameterError("generate_dataset: N must be at least 1");
  if (static_cast<std::size_t>(xi.cols()) != pb.r) throw ShapeError("generate_dataset: germ dimension mismatch");
  Dataset ds;
  ds.xi = xi;
  ds.points = points;
  ds.solutions.resize(points.rows(), xi.rows());
  ds.inputs = pb.input.evaluate(pb.input_points, xi);
  ds.provenance = {pb.name, pb.solver_id, pb.solver_grid, seed};
  detail::parallel_for(static_cast<std::size_t>(xi.rows()), threads, [&](std::size_t j) {
    const Eigen::VectorXd x = xi.row(static_cast<Eigen::Index>(j)).transpose();
    try {
      ds.solutions.col(static_cast<Eigen::Index>(j)) = pb.solve(x).interpolate(points);
    } catch (const SolverError& e) {
      throw SolverError("sample " + std::to_string(j) + " with xi = " + detail::describe_xi(x) + ": " + e.what());
    }
  });
  return ds;
}

inline Dataset generate_dataset(const PdeProblem& pb, std::size_t n, const Eigen::MatrixXd& points,
                                std::uint64_t seed, unsigned threads = 1) {
  if (n < 1) throw ParameterError("generate_dataset: N must be at least 1");
  return generate_dataset_for(pb, draw_xi(n, pb.r, seed), points, seed, threads);
}

struct McsReference {
  Eigen::VectorXd mean;
  Eigen::VectorXd std;  // sample standard deviation (divisor M - 1)
  std::size_t samples = 0;
};

/// Mean and standard deviation over M reference solves. Samples are solved
/// in batches and folded into Welford accumulators in index order, so the
/// result does not depend on the thread count.
inline McsReference mcs_statistics_for(const PdeProblem& pb, const Eigen::MatrixXd& xi, const Eigen::MatrixXd& points,
                                       unsigned threads = 1) {
  const Eigen::Index m = xi.rows();
  if (m < 2) throw ParameterError("mcs_statistics: need at least two samples");
  const Eigen::Index n = points.rows();
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(n), m2 = Eigen::VectorXd::Zero(n);
  const Eigen::Index batch = 256;
  for (Eigen::Index start = 0; start < m; start += batch) {
    const Eigen::Index count = std::min(batch, m - start);
    const auto ds = generate_dataset_for(pb, xi.middleRows(start, count), points, 0, threads);
    for (Eigen::Index j = 0; j < count; ++j) {
      const double k = static_cast<double>(start + j + 1);
      const Eigen::VectorXd delta = ds.solutions.col(j) - mean;
      mean += delta / k;
      m2 += delta.cwiseProduct(ds.solutions.col(j) - mean);
    }
  }
  return {mean, (m2 / static_cast<double>(m - 1)).cwiseMax(0.0).cwiseSqrt(), static_cast<std::size_t>(m)};
}

inline McsReference mcs_statistics(const PdeProblem& pb, std::size_t m, const Eigen::MatrixXd& points,
                                   std::uint64_t seed, unsigned threads = 1) {
  if (m < 2) throw ParameterError("mcs_statistics: need at least two samples");
  return mcs_statistics_for(pb, draw_xi(m, pb.r, seed), points, threads);
}

/// Physics-constrained system for the germ samples xi (N x r): virtual points
/// drawn from `seed`, one block per constraint, weights 1/(n_block N).
inline Pc2System assemble_pc2_system(const PdeProblem& pb, const MultiIndexSet& set_b, const MultiIndexSet& set_a,
                                     const Eigen::MatrixXd& xi, PointCounts counts, std::uint64_t seed) {
  const DomainMap map = pb.domain_map();
  const auto vp = sample_virtual_points(pb.box, counts, seed, set_b.size());
  Pc2System sys;
  sys.psi = assemble_psi(set_a, xi);
  for (const auto& c : pb.constraints) {
    const Eigen::MatrixXd* pts = c.kind == BlockKind::PDE ? &vp.pde : c.kind == BlockKind::BC ? &vp.bc : &vp.ic;
    if (pts->rows() == 0) continue;
    std::vector<Eigen::MatrixXd> fields;
    for (const auto& coeff : c.coefficients) fields.push_back(coeff.evaluate(*pts, xi));
    auto block = assemble_phi(set_b, *pts, map, c.op, fields, c.kind);
    auto quad = assemble_quadratic(set_b, *pts, map, c.op);
    sys.add(std::move(block), c.target.evaluate(*pts, xi), 1.0, std::move(quad));
  }
  return sys;
}

}  // namespace chaosop
