#pragma once

// Damped least squares (Levenberg-Marquardt) and Lorentzian peak models.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <vector>

#include <Eigen/Dense>
#include <unsupported/Eigen/NonLinearOptimization>

#include "ioncavity/error.hpp"

namespace ioncavity {

struct LeastSquaresResult {
  Eigen::VectorXd params;
  /// s² (JᵀJ)⁻¹ with s² = RSS / (m - n).
  Eigen::MatrixXd covariance;
  double rss = 0.0;
  int status = 0;
  int evaluations = 0;
  bool converged = false;

  Eigen::VectorXd standard_errors() const { return covariance.diagonal().cwiseMax(0.0).cwiseSqrt(); }
};

using ResidualFn = std::function<void(const Eigen::VectorXd&, Eigen::VectorXd&)>;
using JacobianFn = std::function<void(const Eigen::VectorXd&, Eigen::MatrixXd&)>;

namespace detail {

struct LmFunctor {
  using Scalar = double;
  enum { InputsAtCompileTime = Eigen::Dynamic, ValuesAtCompileTime = Eigen::Dynamic };
  using InputType = Eigen::VectorXd;
  using ValueType = Eigen::VectorXd;
  using JacobianType = Eigen::MatrixXd;

  int n_params;
  int n_values;
  const ResidualFn* f;
  const JacobianFn* j;

  int inputs() const { return n_params; }
  int values() const { return n_values; }
  int operator()(const Eigen::VectorXd& x, Eigen::VectorXd& fv) const {
    (*f)(x, fv);
    return fv.allFinite() ? 0 : -1;
  }
  int df(const Eigen::VectorXd& x, Eigen::MatrixXd& jac) const {
    (*j)(x, jac);
    return 0;
  }
};

}  // namespace detail

/// Minimises |r(p)|² from p0. `m` is the number of residuals.
inline LeastSquaresResult levenberg_marquardt(const ResidualFn& r, const JacobianFn& jac, Eigen::VectorXd p0, int m,
                                             int max_evaluations = 4000) {
  const int n = static_cast<int>(p0.size());
  if (m < n) throw FitError(FitError::Reason::insufficient_data, "fewer data points than parameters");
  detail::LmFunctor functor{n, m, &r, &jac};
  Eigen::LevenbergMarquardt<detail::LmFunctor> lm(functor);
  lm.parameters.ftol = 1e-15;
  lm.parameters.xtol = 1e-15;
  lm.parameters.gtol = 0.0;
  lm.parameters.maxfev = max_evaluations;
  const auto status = lm.minimize(p0);

  LeastSquaresResult out;
  out.params = p0;
  out.status = static_cast<int>(status);
  out.evaluations = lm.nfev;
  using S = Eigen::LevenbergMarquardtSpace::Status;
  out.converged = status != S::TooManyFunctionEvaluation && status != S::ImproperInputParameters &&
                  status != S::UserAsked && p0.allFinite();
  Eigen::VectorXd res(m);
  r(p0, res);
  out.rss = res.squaredNorm();
  Eigen::MatrixXd jm(m, n);
  jac(p0, jm);
  const double s2 = m > n ? out.rss / (m - n) : 0.0;
  const Eigen::MatrixXd jtj = jm.transpose() * jm;
  Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(jtj);
  out.covariance = s2 * cod.pseudoInverse();
  return out;
}

struct LorentzianFit {
  double center = 0.0;
  double hwhm = 0.0;
  double amplitude = 0.0;
  double offset = 0.0;
  double center_error = 0.0;
  double hwhm_error = 0.0;
  double amplitude_error = 0.0;
  double offset_error = 0.0;
  double residual_norm = 0.0;
  bool converged = false;
};

/// offset + amplitude · w² / ((x - c)² + w²)
inline double lorentzian(double x, double center, double hwhm, double amplitude, double offset) {
  const double d = x - center;
  return offset + amplitude * hwhm * hwhm / (d * d + hwhm * hwhm);
}

/// Indices of strict local maxima (plateaus count once), highest first.
inline std::vector<std::size_t> local_maxima(const std::vector<double>& y) {
  std::vector<std::size_t> idx;
  const std::size_t n = y.size();
  for (std::size_t i = 0; i < n; ++i) {
    const bool left = i == 0 || y[i] > y[i - 1];
    std::size_t j = i;
    while (j + 1 < n && y[j + 1] == y[i]) ++j;
    const bool right = j + 1 == n || y[i] > y[j + 1];
    const bool flat = i == 0 && j + 1 == n;
    if (left && right && !flat) idx.push_back(i + (j - i) / 2);
    i = j;
  }
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return y[a] > y[b]; });
  return idx;
}

namespace detail {

/// Half width at half height above the minimum, read off the samples around peak i.
inline double half_width_guess(const std::vector<double>& x, const std::vector<double>& y, std::size_t i) {
  const double base = *std::min_element(y.begin(), y.end());
  const double half = base + 0.5 * (y[i] - base);
  std::size_t l = i, r = i;
  while (l > 0 && y[l] > half) --l;
  while (r + 1 < y.size() && y[r] > half) ++r;
  double w = 0.5 * std::abs(x[r] - x[l]);
  if (!(w > 0.0)) w = x.size() > 1 ? std::abs(x[1] - x[0]) : 1.0;
  return w;
}

inline void check_xy(const std::vector<double>& x, const std::vector<double>& y, const std::vector<double>& sigma,
                     std::size_t min_points) {
  if (x.size() != y.size()) throw FitError(FitError::Reason::insufficient_data, "x and y differ in length");
  if (!sigma.empty() && sigma.size() != x.size())
    throw FitError(FitError::Reason::insufficient_data, "sigma and data differ in length");
  if (x.size() < min_points) throw FitError(FitError::Reason::insufficient_data, "too few points for the fit");
  for (double s : sigma)
    if (!(s > 0.0)) throw FitError(FitError::Reason::insufficient_data, "sigma must be > 0");
}

}  // namespace detail

/// Sum of `k` Lorentzians plus a common offset. Params: (c_1, w_1, A_1, ..., c_k, w_k, A_k, offset).
struct MultiLorentzianFit {
  std::vector<LorentzianFit> peaks;  ///< sorted by center; offset fields hold the common offset
  Eigen::VectorXd params;
  Eigen::MatrixXd covariance;
  double residual_norm = 0.0;
  bool converged = false;
};

inline MultiLorentzianFit fit_lorentzians(const std::vector<double>& x, const std::vector<double>& y,
                                          const std::vector<double>& centers, const std::vector<double>& widths,
                                          const std::vector<double>& sigma = {}) {
  const std::size_t k = centers.size();
  detail::check_xy(x, y, sigma, 3 * k + 1);
  if (widths.size() != k) throw FitError(FitError::Reason::insufficient_data, "one width guess per peak required");
  const int m = static_cast<int>(x.size());
  const int np = static_cast<int>(3 * k + 1);
  const auto weight = [&](int i) { return sigma.empty() ? 1.0 : 1.0 / sigma[static_cast<std::size_t>(i)]; };

  ResidualFn f = [&](const Eigen::VectorXd& p, Eigen::VectorXd& r) {
    for (int i = 0; i < m; ++i) {
      double v = p(np - 1);
      for (std::size_t q = 0; q < k; ++q)
        v += lorentzian(x[static_cast<std::size_t>(i)], p(3 * q), p(3 * q + 1), p(3 * q + 2), 0.0);
      r(i) = (v - y[static_cast<std::size_t>(i)]) * weight(i);
    }
  };
  JacobianFn jf = [&](const Eigen::VectorXd& p, Eigen::MatrixXd& jac) {
    for (int i = 0; i < m; ++i) {
      const double w8 = weight(i);
      for (std::size_t q = 0; q < k; ++q) {
        const double c = p(3 * q), w = p(3 * q + 1), a = p(3 * q + 2);
        const double d = x[static_cast<std::size_t>(i)] - c;
        const double den = d * d + w * w;
        const double l = w * w / den;
        jac(i, 3 * q) = w8 * a * 2.0 * d * w * w / (den * den);
        jac(i, 3 * q + 1) = w8 * a * 2.0 * w * d * d / (den * den);
        jac(i, 3 * q + 2) = w8 * l;
      }
      jac(i, np - 1) = w8;
    }
  };

  const double base = *std::min_element(y.begin(), y.end());
  Eigen::VectorXd p0(np);
  for (std::size_t q = 0; q < k; ++q) {
    p0(3 * q) = centers[q];
    p0(3 * q + 1) = widths[q];
    const auto nearest = static_cast<std::size_t>(
        std::min_element(x.begin(), x.end(), [&](double a, double b) { return std::abs(a - centers[q]) < std::abs(b - centers[q]); }) - x.begin());
    p0(3 * q + 2) = y[nearest] - base;
  }
  p0(np - 1) = base;

  const auto ls = levenberg_marquardt(f, jf, p0, m);
  MultiLorentzianFit out;
  out.params = ls.params;
  out.covariance = ls.covariance;
  out.residual_norm = std::sqrt(ls.rss);
  out.converged = ls.converged;
  const Eigen::VectorXd se = ls.standard_errors();
  for (std::size_t q = 0; q < k; ++q) {
    LorentzianFit pk;
    pk.center = ls.params(3 * q);
    pk.hwhm = std::abs(ls.params(3 * q + 1));
    pk.amplitude = ls.params(3 * q + 2);
    pk.offset = ls.params(np - 1);
    pk.center_error = se(3 * q);
    pk.hwhm_error = se(3 * q + 1);
    pk.amplitude_error = se(3 * q + 2);
    pk.offset_error = se(np - 1);
    pk.residual_norm = out.residual_norm;
    pk.converged = ls.converged;
    out.peaks.push_back(pk);
  }
  std::sort(out.peaks.begin(), out.peaks.end(), [](const auto& a, const auto& b) { return a.center < b.center; });
  return out;
}

/// Single Lorentzian, multi-started from the three highest local maxima; the lowest residual wins.
inline LorentzianFit fit_lorentzian(const std::vector<double>& x, const std::vector<double>& y,
                                    const std::vector<double>& sigma = {}) {
  detail::check_xy(x, y, sigma, 4);
  auto starts = local_maxima(y);
  if (starts.empty()) throw FitError(FitError::Reason::no_peaks, "no local maximum in the data");
  if (starts.size() > 3) starts.resize(3);
  LorentzianFit best;
  double best_rss = std::numeric_limits<double>::infinity();
  for (auto i : starts) {
    try {
      auto fit = fit_lorentzians(x, y, {x[i]}, {detail::half_width_guess(x, y, i)}, sigma);
      if (fit.converged && fit.residual_norm < best_rss) {
        best_rss = fit.residual_norm;
        best = fit.peaks.front();
      }
    } catch (const FitError&) {
    }
  }
  if (!best.converged) throw FitError(FitError::Reason::not_converged, "Lorentzian fit did not converge from any start");
  return best;
}

}  // namespace ioncavity
