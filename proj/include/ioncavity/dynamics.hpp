#pragma once

// Lindblad master equation: Liouvillian assembly, adaptive time evolution and steady states.
//
// Density matrices are vectorised column-major, so vec(A ρ B) = (Bᵀ ⊗ A) vec ρ and
//   L = -i(I⊗H - Hᵀ⊗I) + Σ_k [2 O_k*⊗O_k - I⊗O_k†O_k - (O_k†O_k)ᵀ⊗I].

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseLU>
#include <Eigen/SparseQR>
#include <boost/numeric/odeint.hpp>

#include "ioncavity/config.hpp"
#include "ioncavity/error.hpp"
#include "ioncavity/linalg.hpp"

namespace ioncavity {

using Superoperator = Eigen::SparseMatrix<Complex, Eigen::ColMajor>;

/// 2 O ρ O† - O†O ρ - ρ O†O.
inline OperatorMatrix lindblad_dissipator(const DensityMatrix& rho, const OperatorMatrix& op) {
  if (!(rho.space() == op.space())) throw DimensionError("lindblad_dissipator: state and operator spaces differ");
  const DenseMatrix o = op.to_dense();
  const DenseMatrix od = o.adjoint();
  const DenseMatrix& r = rho.matrix();
  const DenseMatrix odo = od * o;
  const DenseMatrix out = 2.0 * o * r * od - odo * r - r * odo;
  return OperatorMatrix::from_dense(rho.space(), out);
}

namespace detail {

using Triplets = std::vector<Eigen::Triplet<Complex>>;

/// Adds coef · (Bᵀ ⊗ A) to the triplet list (n = dimension of A and B).
inline void add_sandwich(Triplets& t, const SparseMatrix& a, const SparseMatrix& b, Complex coef) {
  const auto n = a.rows();
  for (Eigen::Index i = 0; i < a.outerSize(); ++i)
    for (SparseMatrix::InnerIterator ea(a, i); ea; ++ea)
      for (Eigen::Index l = 0; l < b.outerSize(); ++l)
        for (SparseMatrix::InnerIterator eb(b, l); eb; ++eb)
          t.emplace_back(static_cast<int>(ea.row() + eb.col() * n), static_cast<int>(ea.col() + eb.row() * n),
                         coef * ea.value() * eb.value());
}

/// coef · (I ⊗ A), i.e. ρ -> A ρ.
inline void add_left(Triplets& t, const SparseMatrix& a, Complex coef) {
  const auto n = a.rows();
  for (Eigen::Index i = 0; i < a.outerSize(); ++i)
    for (SparseMatrix::InnerIterator e(a, i); e; ++e)
      for (Eigen::Index k = 0; k < n; ++k)
        t.emplace_back(static_cast<int>(e.row() + k * n), static_cast<int>(e.col() + k * n), coef * e.value());
}

/// coef · (Aᵀ ⊗ I), i.e. ρ -> ρ A.
inline void add_right(Triplets& t, const SparseMatrix& a, Complex coef) {
  const auto n = a.rows();
  for (Eigen::Index l = 0; l < a.outerSize(); ++l)
    for (SparseMatrix::InnerIterator e(a, l); e; ++e)
      for (Eigen::Index i = 0; i < n; ++i)
        t.emplace_back(static_cast<int>(i + e.col() * n), static_cast<int>(i + e.row() * n), coef * e.value());
}

inline Superoperator liouvillian_raw(const SparseMatrix* h, const std::vector<SparseMatrix>& c_ops, Eigen::Index n) {
  Triplets t;
  if (h) {
    add_left(t, *h, Complex(0.0, -1.0));
    add_right(t, *h, Complex(0.0, 1.0));
  }
  for (const auto& o : c_ops) {
    const SparseMatrix od = o.adjoint();
    const SparseMatrix odo = od * o;
    add_sandwich(t, o, od, 2.0);
    add_left(t, odo, -1.0);
    add_right(t, odo, -1.0);
  }
  Superoperator l(n * n, n * n);
  l.setFromTriplets(t.begin(), t.end());
  l.prune(Complex(0.0), 0.0);
  l.makeCompressed();
  return l;
}

inline Eigen::VectorXcd vectorize(const DenseMatrix& m) { return Eigen::Map<const Eigen::VectorXcd>(m.data(), m.size()); }

inline DenseMatrix unvectorize(const Eigen::VectorXcd& v, Eigen::Index n) {
  return Eigen::Map<const DenseMatrix>(v.data(), n, n);
}

/// Coefficients c with c·vec(ρ) = Tr(ρ op).
inline Eigen::VectorXcd trace_functional(const SparseMatrix& op) {
  const auto n = op.rows();
  Eigen::VectorXcd c = Eigen::VectorXcd::Zero(n * n);
  for (Eigen::Index i = 0; i < op.outerSize(); ++i)
    for (SparseMatrix::InnerIterator e(op, i); e; ++e) c(e.col() + e.row() * n) += e.value();
  return c;
}

inline void require_hermitian(const OperatorMatrix& h, const char* what) {
  if (!h.is_hermitian(1e-12)) throw DomainError(std::string(what) + " is not hermitian");
}

}  // namespace detail

/// Superoperator of the master equation on the full space of `h`.
inline Superoperator liouvillian(const OperatorMatrix& h, const std::vector<OperatorMatrix>& c_ops) {
  detail::require_hermitian(h, "Hamiltonian");
  std::vector<SparseMatrix> c;
  for (const auto& o : c_ops) {
    h.require_same_space(o);
    c.push_back(o.matrix());
  }
  return detail::liouvillian_raw(&h.matrix(), c, static_cast<Eigen::Index>(h.dim()));
}

/// H(t) = H_static + f(t) H_pulsed. `breakpoints` are the times where f is not smooth; the
/// integrator never steps across them.
struct TimeDependentHamiltonian {
  OperatorMatrix static_part;
  std::optional<OperatorMatrix> pulsed;
  std::function<double(double)> envelope;
  std::vector<double> breakpoints;

  static TimeDependentHamiltonian constant(OperatorMatrix h) { return {std::move(h), std::nullopt, {}, {}}; }

  static TimeDependentHamiltonian with_pulse(OperatorMatrix h_static, OperatorMatrix h_pulsed, const PulseShape& shape) {
    return {std::move(h_static), std::move(h_pulsed), [shape](double t) { return shape.value(t); }, shape.breakpoints()};
  }

  OperatorMatrix at(double t) const {
    if (!pulsed || !envelope) return static_part;
    return static_part + envelope(t) * *pulsed;
  }
};

struct Observable {
  std::string label;
  OperatorMatrix op;
};

struct MasterEquationProblem {
  TimeDependentHamiltonian hamiltonian;
  std::vector<OperatorMatrix> collapse_ops;
  DensityMatrix initial_state;
  /// Recorded at every sample time.
  std::vector<Observable> observables;
  /// Accumulated as ∫_0^t_final Tr(ρ op) dt.
  std::vector<Observable> integrated;
};

struct EvolveOptions {
  double abs_tol = 1e-10;
  double rel_tol = 1e-8;
  double initial_step_us = 1e-3;
  double min_step_us = 1e-12;
  std::size_t max_steps = 5'000'000;
  bool store_states = true;
  /// Integrate only on basis states reachable from the initial support (exact).
  bool reduce_to_reachable = true;
};

struct TrajectoryResult {
  std::vector<double> times;
  std::vector<DensityMatrix> states;
  std::vector<std::string> observable_labels;
  /// expectations[k][i]: observable k at times[i].
  std::vector<std::vector<Complex>> expectations;
  std::vector<std::string> integrated_labels;
  std::vector<double> integrated;
  double max_trace_drift = 0.0;
  double max_hermiticity_error = 0.0;
  double min_eigenvalue = std::numeric_limits<double>::infinity();
  std::size_t accepted_steps = 0;
  std::size_t rejected_steps = 0;
  std::size_t reduced_dim = 0;

  double integral(const std::string& label) const {
    for (std::size_t i = 0; i < integrated_labels.size(); ++i)
      if (integrated_labels[i] == label) return integrated[i];
    throw DomainError("no integrated observable '" + label + "'");
  }
  const std::vector<Complex>& series(const std::string& label) const {
    for (std::size_t i = 0; i < observable_labels.size(); ++i)
      if (observable_labels[i] == label) return expectations[i];
    throw DomainError("no observable '" + label + "'");
  }
};

/// Basis indices reachable from `seed` along the nonzero entries (col -> row) of the given
/// operators. Hermitian operators contribute both directions through their symmetric pattern.
inline std::vector<std::size_t> reachable_states(std::size_t dim, const std::vector<std::size_t>& seed,
                                                 const std::vector<const SparseMatrix*>& ops) {
  std::vector<std::vector<std::size_t>> adj(dim);
  for (const auto* m : ops)
    for (Eigen::Index i = 0; i < m->outerSize(); ++i)
      for (SparseMatrix::InnerIterator e(*m, i); e; ++e)
        adj[static_cast<std::size_t>(e.col())].push_back(static_cast<std::size_t>(e.row()));
  std::vector<char> seen(dim, 0);
  std::vector<std::size_t> queue;
  for (auto s : seed)
    if (!seen[s]) {
      seen[s] = 1;
      queue.push_back(s);
    }
  for (std::size_t q = 0; q < queue.size(); ++q)
    for (auto nb : adj[queue[q]])
      if (!seen[nb]) {
        seen[nb] = 1;
        queue.push_back(nb);
      }
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < dim; ++i)
    if (seen[i]) out.push_back(i);
  return out;
}

namespace detail {

inline SparseMatrix restrict_to(const SparseMatrix& m, const std::vector<std::size_t>& keep, std::size_t dim) {
  std::vector<long> pos(dim, -1);
  for (std::size_t k = 0; k < keep.size(); ++k) pos[keep[k]] = static_cast<long>(k);
  std::vector<Eigen::Triplet<Complex>> t;
  for (Eigen::Index i = 0; i < m.outerSize(); ++i)
    for (SparseMatrix::InnerIterator e(m, i); e; ++e) {
      const long r = pos[static_cast<std::size_t>(e.row())], c = pos[static_cast<std::size_t>(e.col())];
      if (r >= 0 && c >= 0) t.emplace_back(static_cast<int>(r), static_cast<int>(c), e.value());
    }
  const auto n = static_cast<Eigen::Index>(keep.size());
  SparseMatrix out(n, n);
  out.setFromTriplets(t.begin(), t.end());
  return out;
}

using OdeState = std::vector<Complex>;

}  // namespace detail

/// Integrates the master equation from t = 0 to t_final and records the requested samples.
/// An empty `sample_times` means {t_final}.
inline TrajectoryResult evolve(const MasterEquationProblem& problem, double t_final, std::vector<double> sample_times = {},
                               const EvolveOptions& opt = {}) {
  namespace odeint = boost::numeric::odeint;
  if (!(t_final > 0.0)) throw DomainError("evolve: t_final must be > 0");
  if (sample_times.empty()) sample_times.push_back(t_final);
  for (std::size_t i = 0; i < sample_times.size(); ++i) {
    if (sample_times[i] < 0.0 || sample_times[i] > t_final) throw DomainError("evolve: sample time outside [0, t_final]");
    if (i > 0 && !(sample_times[i] > sample_times[i - 1])) throw DomainError("evolve: sample times must be strictly increasing");
  }

  const auto& hs = problem.hamiltonian.static_part;
  const auto& space = hs.space();
  const std::size_t dim = space.total_dim();
  if (!(problem.initial_state.space() == space)) throw DimensionError("evolve: initial state lives on a different space");
  detail::require_hermitian(hs, "static Hamiltonian");
  const bool has_pulse = problem.hamiltonian.pulsed.has_value() && static_cast<bool>(problem.hamiltonian.envelope);
  if (has_pulse) {
    hs.require_same_space(*problem.hamiltonian.pulsed);
    detail::require_hermitian(*problem.hamiltonian.pulsed, "pulsed Hamiltonian");
  }
  for (const auto& c : problem.collapse_ops) hs.require_same_space(c);
  for (const auto& o : problem.observables) hs.require_same_space(o.op);
  for (const auto& o : problem.integrated) hs.require_same_space(o.op);

  // Reduced basis.
  std::vector<std::size_t> keep;
  const DenseMatrix& rho0_full = problem.initial_state.matrix();
  if (opt.reduce_to_reachable) {
    std::vector<std::size_t> seed;
    for (std::size_t i = 0; i < dim; ++i)
      if (rho0_full.row(static_cast<Eigen::Index>(i)).cwiseAbs().maxCoeff() > 0.0 ||
          rho0_full.col(static_cast<Eigen::Index>(i)).cwiseAbs().maxCoeff() > 0.0)
        seed.push_back(i);
    std::vector<const SparseMatrix*> ops{&hs.matrix()};
    if (has_pulse) ops.push_back(&problem.hamiltonian.pulsed->matrix());
    for (const auto& c : problem.collapse_ops) ops.push_back(&c.matrix());
    keep = reachable_states(dim, seed, ops);
  } else {
    keep.resize(dim);
    for (std::size_t i = 0; i < dim; ++i) keep[i] = i;
  }
  const auto n = static_cast<Eigen::Index>(keep.size());
  const Eigen::Index m = n * n;
  const auto restrict = [&](const OperatorMatrix& o) { return detail::restrict_to(o.matrix(), keep, dim); };

  const SparseMatrix h_red = restrict(hs);
  std::vector<SparseMatrix> c_red;
  for (const auto& c : problem.collapse_ops) c_red.push_back(restrict(c));
  const Superoperator l_static = detail::liouvillian_raw(&h_red, c_red, n);
  Superoperator l_pulse;
  if (has_pulse) {
    const SparseMatrix hp = restrict(*problem.hamiltonian.pulsed);
    l_pulse = detail::liouvillian_raw(&hp, {}, n);
  }
  std::vector<Eigen::VectorXcd> obs_f, int_f;
  for (const auto& o : problem.observables) obs_f.push_back(detail::trace_functional(restrict(o.op)));
  for (const auto& o : problem.integrated) int_f.push_back(detail::trace_functional(restrict(o.op)));
  const Eigen::Index n_int = static_cast<Eigen::Index>(int_f.size());
  Eigen::MatrixXcd int_rows(n_int, m);
  for (Eigen::Index k = 0; k < n_int; ++k) int_rows.row(k) = int_f[static_cast<std::size_t>(k)].transpose();

  DenseMatrix rho0(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j)
      rho0(i, j) = rho0_full(static_cast<Eigen::Index>(keep[static_cast<std::size_t>(i)]),
                             static_cast<Eigen::Index>(keep[static_cast<std::size_t>(j)]));

  detail::OdeState x(static_cast<std::size_t>(m + n_int), Complex(0.0));
  std::copy(rho0.data(), rho0.data() + m, x.begin());

  // Segment grid: breakpoints of the envelope plus sample times.
  std::vector<double> grid{0.0, t_final};
  if (has_pulse)
    for (double b : problem.hamiltonian.breakpoints)
      if (b > 0.0 && b < t_final) grid.push_back(b);
  for (double s : sample_times) grid.push_back(s);
  std::sort(grid.begin(), grid.end());
  grid.erase(std::unique(grid.begin(), grid.end()), grid.end());

  TrajectoryResult res;
  res.reduced_dim = keep.size();
  for (const auto& o : problem.observables) res.observable_labels.push_back(o.label);
  for (const auto& o : problem.integrated) res.integrated_labels.push_back(o.label);
  res.expectations.assign(problem.observables.size(), {});

  const auto record = [&](double t) {
    const Eigen::Map<const Eigen::VectorXcd> v(x.data(), m);
    const DenseMatrix rho = detail::unvectorize(v, n);
    res.times.push_back(t);
    for (std::size_t k = 0; k < obs_f.size(); ++k) res.expectations[k].push_back(obs_f[k].cwiseProduct(v).sum());
    res.max_trace_drift = std::max(res.max_trace_drift, std::abs(rho.trace() - 1.0));
    res.max_hermiticity_error = std::max(res.max_hermiticity_error, (rho - rho.adjoint()).cwiseAbs().maxCoeff());
    if (n <= 64) {
      const DenseMatrix h = 0.5 * (rho + rho.adjoint());
      Eigen::SelfAdjointEigenSolver<DenseMatrix> es(h, Eigen::EigenvaluesOnly);
      res.min_eigenvalue = std::min(res.min_eigenvalue, es.eigenvalues().minCoeff());
    }
    if (opt.store_states) {
      DenseMatrix full = DenseMatrix::Zero(static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(dim));
      for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j)
          full(static_cast<Eigen::Index>(keep[static_cast<std::size_t>(i)]),
               static_cast<Eigen::Index>(keep[static_cast<std::size_t>(j)])) = rho(i, j);
      res.states.emplace_back(space, std::move(full));
    }
  };

  using Stepper = odeint::runge_kutta_dopri5<detail::OdeState, double, detail::OdeState, double>;
  auto stepper = odeint::make_controlled<Stepper>(opt.abs_tol, opt.rel_tol);

  double seg_a = 0.0, seg_b = 0.0;
  const auto rhs = [&](const detail::OdeState& xs, detail::OdeState& dxdt, double t) {
    const Eigen::Map<const Eigen::VectorXcd> v(xs.data(), m);
    Eigen::Map<Eigen::VectorXcd> d(dxdt.data(), m);
    d.noalias() = l_static * v;
    if (has_pulse) {
      // f is evaluated inside the current segment, so a step ending on an edge sees the left limit.
      const double te = std::clamp(t, seg_a, std::nextafter(seg_b, seg_a));
      const double f = problem.hamiltonian.envelope(te);
      if (f != 0.0) d.noalias() += f * (l_pulse * v);
    }
    if (n_int > 0) {
      Eigen::Map<Eigen::VectorXcd> di(dxdt.data() + m, n_int);
      di.noalias() = int_rows * v;
    }
  };

  std::size_t next_sample = 0;
  if (sample_times[0] == 0.0) {
    record(0.0);
    ++next_sample;
  }
  double dt = opt.initial_step_us;
  std::size_t steps = 0;
  for (std::size_t g = 0; g + 1 < grid.size(); ++g) {
    seg_a = grid[g];
    seg_b = grid[g + 1];
    stepper.reset();
    double t = seg_a;
    while (t < seg_b) {
      const double remaining = seg_b - t;
      const bool capped = dt >= remaining;
      double h = capped ? remaining : dt;
      const auto r = stepper.try_step(rhs, x, t, h);
      if (r == odeint::success) {
        ++res.accepted_steps;
        // A step shortened to land on seg_b says little about the natural step size.
        if (capped) {
          t = seg_b;
          dt = std::max(dt, h);
        } else {
          dt = h;
        }
      } else {
        ++res.rejected_steps;
        dt = h;
        if (dt < opt.min_step_us) throw SolverError("evolve: step size underflow", t);
      }
      if (++steps > opt.max_steps) throw SolverError("evolve: step limit exceeded", t);
    }
    if (next_sample < sample_times.size() && sample_times[next_sample] == seg_b) {
      record(seg_b);
      ++next_sample;
    }
  }
  for (Eigen::Index k = 0; k < n_int; ++k) res.integrated.push_back(x[static_cast<std::size_t>(m + k)].real());
  return res;
}

namespace detail {

/// Dimension of the null space of a square sparse matrix.
inline std::size_t nullity(const Superoperator& a) {
  const auto n = a.rows();
  if (n <= 1024) {
    Eigen::ColPivHouseholderQR<Eigen::MatrixXcd> qr{Eigen::MatrixXcd(a)};
    qr.setThreshold(1e-10);
    return static_cast<std::size_t>(n - qr.rank());
  }
  Eigen::SparseQR<Superoperator, Eigen::COLAMDOrdering<int>> qr;
  qr.setPivotThreshold(1e-10);
  qr.compute(a);
  return static_cast<std::size_t>(n - qr.rank());
}

inline double norm1(const Superoperator& a) {
  double best = 0.0;
  for (Eigen::Index j = 0; j < a.outerSize(); ++j) {
    double s = 0.0;
    for (Superoperator::InnerIterator e(a, j); e; ++e) s += std::abs(e.value());
    best = std::max(best, s);
  }
  return best;
}

inline DensityMatrix finish_steady_state(const HilbertSpace& space, const Superoperator& l, const Eigen::VectorXcd& x,
                                         Eigen::Index n) {
  const double residual = (l * x).cwiseAbs().maxCoeff();
  if (!(residual <= 1e-9 * std::max(1.0, x.cwiseAbs().maxCoeff())))
    throw SolverError("steady state residual " + format_double(residual) + " exceeds tolerance");
  DenseMatrix rho = unvectorize(x, n);
  rho = 0.5 * (rho + rho.adjoint()).eval();
  return DensityMatrix(space, std::move(rho));
}

}  // namespace detail

/// Unique ρ with L ρ = 0 and Tr ρ = 1, by a direct sparse solve with one equation replaced by
/// the trace condition. Throws DegenerateSteadyState when the null space is not one-dimensional.
inline DensityMatrix steady_state(const OperatorMatrix& h, const std::vector<OperatorMatrix>& c_ops) {
  if (c_ops.empty()) throw DegenerateSteadyState(0);
  detail::require_hermitian(h, "Hamiltonian");
  const Superoperator l = liouvillian(h, c_ops);
  const auto n = static_cast<Eigen::Index>(h.dim());
  const Eigen::Index m = n * n;

  std::vector<Eigen::Triplet<Complex>> t;
  t.reserve(static_cast<std::size_t>(l.nonZeros() + n));
  for (Eigen::Index j = 0; j < l.outerSize(); ++j)
    for (Superoperator::InnerIterator e(l, j); e; ++e)
      if (e.row() != 0) t.emplace_back(static_cast<int>(e.row()), static_cast<int>(e.col()), e.value());
  for (Eigen::Index i = 0; i < n; ++i) t.emplace_back(0, static_cast<int>(i + i * n), Complex(1.0));
  Superoperator a(m, m);
  a.setFromTriplets(t.begin(), t.end());
  a.makeCompressed();

  Eigen::SparseLU<Superoperator, Eigen::COLAMDOrdering<int>> lu;
  lu.compute(a);
  bool singular = lu.info() != Eigen::Success;
  Eigen::VectorXcd x;
  if (!singular) {
    Eigen::VectorXcd b = Eigen::VectorXcd::Zero(m);
    b(0) = 1.0;
    x = lu.solve(b);
    // A second solve with a dense right-hand side exposes near-singular factorizations.
    const Eigen::VectorXcd probe = Eigen::VectorXcd::Constant(m, Complex(1.0 / std::sqrt(static_cast<double>(m))));
    const Eigen::VectorXcd y = lu.solve(probe);
    const double cond = detail::norm1(a) * y.cwiseAbs().sum();
    singular = !x.allFinite() || !y.allFinite() || cond > 1e13;
  }
  if (singular) {
    const auto k = detail::nullity(l);
    throw DegenerateSteadyState(k);
  }
  return detail::finish_steady_state(h.space(), l, x, n);
}

/// Steady state of dρ/dt = Lρ + r (ρ0 Tr ρ - ρ): the system is re-prepared in ρ0 at rate r, so
/// the result is the time average of ρ(t) over exponentially distributed windows of mean 1/r,
/// ρ = r (r - L)^{-1} ρ0. Always unique for r > 0.
inline DensityMatrix steady_state_with_reset(const OperatorMatrix& h, const std::vector<OperatorMatrix>& c_ops,
                                             const DensityMatrix& rho0, double rate) {
  if (!(rate > 0.0)) throw DomainError("steady_state_with_reset: rate must be > 0");
  if (!(rho0.space() == h.space())) throw DimensionError("steady_state_with_reset: reset state lives on a different space");
  detail::require_hermitian(h, "Hamiltonian");
  const std::size_t dim = h.dim();
  for (const auto& c : c_ops) h.require_same_space(c);

  // Only states reachable from the support of ρ0 can be populated.
  std::vector<std::size_t> seed;
  const DenseMatrix& r0 = rho0.matrix();
  for (std::size_t i = 0; i < dim; ++i)
    if (r0.row(static_cast<Eigen::Index>(i)).cwiseAbs().maxCoeff() > 0.0) seed.push_back(i);
  std::vector<const SparseMatrix*> ops{&h.matrix()};
  for (const auto& c : c_ops) ops.push_back(&c.matrix());
  const auto keep = reachable_states(dim, seed, ops);
  const auto n = static_cast<Eigen::Index>(keep.size());
  const Eigen::Index m = n * n;

  const SparseMatrix h_red = detail::restrict_to(h.matrix(), keep, dim);
  std::vector<SparseMatrix> c_red;
  for (const auto& c : c_ops) c_red.push_back(detail::restrict_to(c.matrix(), keep, dim));
  const Superoperator l = detail::liouvillian_raw(&h_red, c_red, n);
  Superoperator id(m, m);
  id.setIdentity();
  const Superoperator a = Superoperator(rate * id - l);
  Eigen::SparseLU<Superoperator, Eigen::COLAMDOrdering<int>> lu;
  lu.compute(a);
  if (lu.info() != Eigen::Success) throw SolverError("steady_state_with_reset: factorization failed");
  DenseMatrix r0_red(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j)
      r0_red(i, j) = r0(static_cast<Eigen::Index>(keep[static_cast<std::size_t>(i)]),
                        static_cast<Eigen::Index>(keep[static_cast<std::size_t>(j)]));
  const Eigen::VectorXcd b = rate * detail::vectorize(r0_red);
  const Eigen::VectorXcd x = lu.solve(b);
  if (!x.allFinite()) throw SolverError("steady_state_with_reset: non-finite solution");
  const double residual = (a * x - b).cwiseAbs().maxCoeff();
  if (!(residual <= 1e-9 * std::max(1.0, x.cwiseAbs().maxCoeff())))
    throw SolverError("steady_state_with_reset: residual " + format_double(residual) + " exceeds tolerance");
  const DenseMatrix rr = detail::unvectorize(x, n);
  DenseMatrix rho = DenseMatrix::Zero(static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(dim));
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j)
      rho(static_cast<Eigen::Index>(keep[static_cast<std::size_t>(i)]), static_cast<Eigen::Index>(keep[static_cast<std::size_t>(j)])) =
          0.5 * (rr(i, j) + std::conj(rr(j, i)));
  return DensityMatrix(h.space(), std::move(rho));
}

/// ‖L ρ‖_max, the size of dρ/dt at ρ.
inline double liouvillian_residual(const OperatorMatrix& h, const std::vector<OperatorMatrix>& c_ops, const DensityMatrix& rho) {
  return (liouvillian(h, c_ops) * detail::vectorize(rho.matrix())).cwiseAbs().maxCoeff();
}

}  // namespace ioncavity
