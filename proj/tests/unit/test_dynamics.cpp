#include <cmath>
#include <complex>
#include <random>

#include <gtest/gtest.h>
#include <unsupported/Eigen/FFT>

#include "ioncavity/dynamics.hpp"

using namespace ioncavity;

namespace {

OperatorMatrix sigma_minus(const std::string& label) {
  const MatrixEntry e[] = {{0, 1, 1.0}};  // |g><e| with g = 0, e = 1
  return OperatorMatrix::from_entries(HilbertSpace::single(label, 2), e);
}

struct JaynesCummings {
  HilbertSpace space{{{"atom", 2}, {"mode", 2}}};
  OperatorMatrix a = embed(annihilation_operator(1, "mode"), "mode", space);
  OperatorMatrix sm = embed(sigma_minus("atom"), "atom", space);
  OperatorMatrix h(double g) const { return g * (dagger(a) * sm + dagger(sm) * a); }
};

// Dominant frequency (cycles per unit time) of a real series, Hann window + parabolic peak interpolation.
double dominant_frequency(const std::vector<double>& y, double dt) {
  const std::size_t n = y.size();
  double mean = 0.0;
  for (double v : y) mean += v;
  mean /= static_cast<double>(n);
  std::vector<double> w(n);
  for (std::size_t i = 0; i < n; ++i)
    w[i] = (y[i] - mean) * 0.5 * (1.0 - std::cos(2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(n - 1)));
  Eigen::FFT<double> fft;
  std::vector<std::complex<double>> spec;
  fft.fwd(spec, w);
  std::size_t k = 1;
  for (std::size_t i = 1; i < n / 2; ++i)
    if (std::abs(spec[i]) > std::abs(spec[k])) k = i;
  const double a = std::log(std::abs(spec[k - 1])), b = std::log(std::abs(spec[k])), c = std::log(std::abs(spec[k + 1]));
  const double shift = 0.5 * (a - c) / (a - 2.0 * b + c);
  return (static_cast<double>(k) + shift) / (static_cast<double>(n) * dt);
}

}  // namespace

TEST(Dynamics, DissipatorOnFockState) {
  const auto a = annihilation_operator(2);
  const auto rho = DensityMatrix::basis_state(a.space(), 1);
  const DenseMatrix d = lindblad_dissipator(rho, a).to_dense();
  DenseMatrix expected = DenseMatrix::Zero(3, 3);
  expected(0, 0) = 2.0;
  expected(1, 1) = -2.0;
  EXPECT_LT((d - expected).cwiseAbs().maxCoeff(), 1e-14);
  EXPECT_EQ(lindblad_dissipator(rho, OperatorMatrix::identity(a.space())).nonzeros(), 0u);
}

TEST(Dynamics, DissipatorIsTraceless) {
  std::mt19937 rng(3);
  std::normal_distribution<double> nd;
  for (int trial = 0; trial < 20; ++trial) {
    const Eigen::Index n = 2 + trial % 7;
    const auto s = HilbertSpace::single("x", static_cast<std::size_t>(n));
    DenseMatrix m(n, n), o(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = 0; j < n; ++j) {
        m(i, j) = Complex(nd(rng), nd(rng));
        o(i, j) = Complex(nd(rng), nd(rng));
      }
    DenseMatrix r = m * m.adjoint();
    r /= r.trace();
    const auto d = lindblad_dissipator(DensityMatrix(s, r), OperatorMatrix::from_dense(s, o));
    EXPECT_LT(std::abs(d.to_dense().trace()), 1e-12);
  }
}

TEST(Dynamics, LiouvillianMatchesDenseAction) {
  std::mt19937 rng(11);
  std::normal_distribution<double> nd;
  const Eigen::Index n = 4;
  const auto s = HilbertSpace::single("x", 4);
  DenseMatrix hm(n, n), om(n, n), rm(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) {
      hm(i, j) = Complex(nd(rng), nd(rng));
      om(i, j) = Complex(nd(rng), nd(rng));
      rm(i, j) = Complex(nd(rng), nd(rng));
    }
  hm = (hm + hm.adjoint()).eval();
  const auto h = OperatorMatrix::from_dense(s, hm), o = OperatorMatrix::from_dense(s, om);
  const auto l = liouvillian(h, {o});
  const DensityMatrix rho(s, rm);
  const DenseMatrix expected = Complex(0.0, -1.0) * (hm * rm - rm * hm) + lindblad_dissipator(rho, o).to_dense();
  const Eigen::VectorXcd v = l * detail::vectorize(rm);
  EXPECT_LT((detail::unvectorize(v, n) - expected).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Dynamics, NonHermitianHamiltonianRejected) {
  const auto a = annihilation_operator(2);
  EXPECT_THROW(liouvillian(a, {}), DomainError);
}

TEST(Dynamics, FreeEvolutionIsStatic) {
  const auto s = HilbertSpace::single("x", 3);
  const std::pair<std::size_t, double> w[] = {{0, 0.3}, {2, 0.7}};
  const auto rho0 = DensityMatrix::mixture(s, w);
  MasterEquationProblem p{TimeDependentHamiltonian::constant(OperatorMatrix::zero(s)), {}, rho0, {}, {}};
  EvolveOptions opt;
  opt.reduce_to_reachable = false;
  const auto r = evolve(p, 5.0, {1.0, 2.5, 5.0}, opt);
  ASSERT_EQ(r.states.size(), 3u);
  for (const auto& st : r.states) EXPECT_LT((st.matrix() - rho0.matrix()).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(Dynamics, CavityDecayIsExponential) {
  const double kappa = two_pi * 0.7;
  const auto a = annihilation_operator(3);
  const auto rho0 = DensityMatrix::basis_state(a.space(), 1);
  MasterEquationProblem p{TimeDependentHamiltonian::constant(OperatorMatrix::zero(a.space())),
                          {std::sqrt(kappa) * a},
                          rho0,
                          {{"n", dagger(a) * a}},
                          {{"n_int", dagger(a) * a}}};
  std::vector<double> ts;
  for (int i = 1; i <= 20; ++i) ts.push_back(0.05 * i);
  const auto r = evolve(p, 1.0, ts);
  const auto n = r.series("n");
  for (std::size_t i = 0; i < ts.size(); ++i) EXPECT_NEAR(n[i].real(), std::exp(-2.0 * kappa * ts[i]), 1e-7);
  EXPECT_NEAR(r.integral("n_int"), (1.0 - std::exp(-2.0 * kappa)) / (2.0 * kappa), 1e-7);
  EXPECT_LT(r.max_trace_drift, 1e-9);
  EXPECT_GT(r.min_eigenvalue, -1e-9);
  EXPECT_EQ(r.reduced_dim, 2u);  // |2>, |3> unreachable from |1>
}

TEST(Dynamics, VacuumRabiOscillationAtTwoG) {
  JaynesCummings jc;
  const double g = two_pi * 1.0;
  const auto start = jc.space.flat_index({0, 1});  // |g,1>
  const auto excited = jc.space.flat_index({1, 0});
  MasterEquationProblem p{TimeDependentHamiltonian::constant(jc.h(g)),
                          {},
                          DensityMatrix::basis_state(jc.space, start),
                          {{"pe", OperatorMatrix::from_entries(jc.space, std::vector<MatrixEntry>{{excited, excited, 1.0}})}},
                          {}};
  const double dt = 0.01, t_end = 100.0;
  std::vector<double> ts;
  for (int i = 0; i * dt <= t_end + 1e-12; ++i) ts.push_back(i * dt);
  const auto r = evolve(p, t_end, ts);
  std::vector<double> y;
  for (auto v : r.series("pe")) y.push_back(v.real());
  for (std::size_t i = 0; i < ts.size(); i += 397) EXPECT_NEAR(y[i], std::pow(std::sin(g * ts[i]), 2), 1e-5);
  const double f = dominant_frequency(y, dt);
  EXPECT_NEAR(two_pi * f / (2.0 * g), 1.0, 1e-3);
}

TEST(Dynamics, RectangularPulseArea) {
  // Resonant two-level drive H = (Ω/2) σx for duration T, then free: P_e = sin²(ΩT/2).
  const auto s = HilbertSpace::single("q", 2);
  const auto sm = sigma_minus("q");
  const double omega = two_pi * 1.3;
  PulseShape pulse;
  pulse.duration_us = 0.25;
  const auto h = TimeDependentHamiltonian::with_pulse(OperatorMatrix::zero(s), 0.5 * omega * (sm + dagger(sm)), pulse);
  MasterEquationProblem p{h, {}, DensityMatrix::basis_state(s, 0), {{"pe", dagger(sm) * sm}}, {}};
  const auto r = evolve(p, 0.6, {0.6});
  EXPECT_NEAR(r.series("pe").back().real(), std::pow(std::sin(0.5 * omega * pulse.duration_us), 2), 1e-7);
}

TEST(Dynamics, StepLimitRaisesSolverError) {
  JaynesCummings jc;
  MasterEquationProblem p{TimeDependentHamiltonian::constant(jc.h(two_pi * 5.0)), {}, DensityMatrix::basis_state(jc.space, 1), {}, {}};
  EvolveOptions opt;
  opt.max_steps = 3;
  EXPECT_THROW(evolve(p, 10.0, {}, opt), SolverError);
}

TEST(Dynamics, DrivenCavitySteadyState) {
  const double kappa = two_pi * 4.1, e = two_pi * 0.05;
  const auto a = annihilation_operator(6);
  for (double det_mhz : {0.0, 2.0, -7.5}) {
    const double d = two_pi * det_mhz;
    const auto h = -d * (dagger(a) * a) + e * (a + dagger(a));
    const auto rho = steady_state(h, {std::sqrt(kappa) * a});
    EXPECT_NEAR(expectation(rho, dagger(a) * a).real(), e * e / (kappa * kappa + d * d), 1e-12);
    EXPECT_LT(liouvillian_residual(h, {std::sqrt(kappa) * a}, rho), 1e-9);
    EXPECT_TRUE(rho.is_valid());
  }
}

TEST(Dynamics, SteadyStateAgreesWithLongEvolution) {
  JaynesCummings jc;
  const double kappa = two_pi * 1.0, gamma = two_pi * 0.5, e = two_pi * 0.2, g = two_pi * 2.0;
  const auto h = jc.h(g) + e * (jc.a + dagger(jc.a)) - two_pi * 0.7 * (dagger(jc.a) * jc.a);
  const std::vector<OperatorMatrix> c{std::sqrt(kappa) * jc.a, std::sqrt(gamma) * jc.sm};
  const auto ss = steady_state(h, c);
  MasterEquationProblem p{TimeDependentHamiltonian::constant(h), c, DensityMatrix::basis_state(jc.space, 0), {}, {}};
  EvolveOptions opt;
  opt.abs_tol = 1e-12;
  opt.rel_tol = 1e-10;
  const auto r = evolve(p, 20.0, {20.0}, opt);
  EXPECT_LT((r.states.back().matrix() - ss.matrix()).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(Dynamics, DegenerateSteadyStates) {
  const auto s = HilbertSpace::single("x", 3);
  EXPECT_THROW(steady_state(OperatorMatrix::zero(s), {}), DegenerateSteadyState);
  // Level 2 decays into two sinks 0 and 1: every operator on span{|0>, |1>} is stationary.
  const std::vector<OperatorMatrix> c{OperatorMatrix::from_entries(s, std::vector<MatrixEntry>{{0, 2, 1.0}}),
                                      OperatorMatrix::from_entries(s, std::vector<MatrixEntry>{{1, 2, 1.0}})};
  try {
    steady_state(OperatorMatrix::zero(s), c);
    FAIL() << "expected DegenerateSteadyState";
  } catch (const DegenerateSteadyState& e) {
    EXPECT_EQ(e.dimension(), 4u);
    EXPECT_EQ(e.error_class(), ErrorClass::solver);
  }
}

TEST(Dynamics, ResetSteadyState) {
  const auto s = HilbertSpace::single("x", 3);
  const std::vector<OperatorMatrix> c{OperatorMatrix::from_entries(s, std::vector<MatrixEntry>{{0, 2, 1.0}}),
                                      OperatorMatrix::from_entries(s, std::vector<MatrixEntry>{{1, 2, 1.0}})};
  const auto rho0 = DensityMatrix::basis_state(s, 2);
  // Level 2 empties at 2 per channel (4 total) and is refilled at rate r: p2 = r / (r + 4).
  const double rate = 0.5;
  const auto rho = steady_state_with_reset(OperatorMatrix::zero(s), c, rho0, rate);
  const double p2 = rate / (rate + 4.0);
  EXPECT_NEAR(rho.matrix()(2, 2).real(), p2, 1e-12);
  EXPECT_NEAR(rho.matrix()(0, 0).real(), 0.5 * (1.0 - p2), 1e-12);
  EXPECT_NEAR(rho.trace().real(), 1.0, 1e-12);
  EXPECT_THROW(steady_state_with_reset(OperatorMatrix::zero(s), c, rho0, 0.0), DomainError);
}
