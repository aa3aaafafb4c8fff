#pragma once

// Dressed states, effective coupling, g0 fitting, error budget, Doppler correction and
// drive-amplitude calibration.

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <mutex>
#include <string>
#include <utility>
#include <vector>

// pchip.hpp calls unqualified isnan; the C header puts it in the global namespace.
#include <math.h>

#include <boost/math/interpolators/pchip.hpp>
#include <boost/math/tools/minima.hpp>

#include "ioncavity/atomic.hpp"
#include "ioncavity/config.hpp"
#include "ioncavity/spectroscopy.hpp"

namespace ioncavity {

/// First-excitation block in the basis {|a,1,0>, |b,0,1>, |c,0,0>} with H = g1|c><a| + g2|c><b| + H.c.
struct DressedSpectrum {
  /// Ascending: -λ, 0, +λ (same units as g1, g2).
  std::array<double, 3> eigenvalues{};
  /// Column k is the eigenvector of eigenvalues[k]: |u->, |u0>, |u+>.
  Eigen::Matrix3d eigenvectors = Eigen::Matrix3d::Zero();
  double lambda = 0.0;

  Eigen::Vector3d u_minus() const { return eigenvectors.col(0); }
  Eigen::Vector3d u_dark() const { return eigenvectors.col(1); }
  Eigen::Vector3d u_plus() const { return eigenvectors.col(2); }
  /// Bright state |v> = (g1|a> + g2|b>)/λ.
  Eigen::Vector3d bright() const { return (u_plus() + u_minus()) / std::sqrt(2.0); }
};

inline Eigen::Matrix3d first_excitation_hamiltonian(double g1, double g2) {
  Eigen::Matrix3d h = Eigen::Matrix3d::Zero();
  h(2, 0) = h(0, 2) = g1;
  h(2, 1) = h(1, 2) = g2;
  return h;
}

/// |u±> = (|v> ± |c,0,0>)/√2 at ±λ, dark |u0> = (g2|a> - g1|b>)/λ at 0.
inline DressedSpectrum dressed_states(double g1, double g2) {
  const double lambda = std::hypot(g1, g2);
  if (!(lambda > 0.0)) throw DomainError("dressed_states: g1 and g2 must not both vanish");
  DressedSpectrum d;
  d.lambda = lambda;
  d.eigenvalues = {-lambda, 0.0, lambda};
  const Eigen::Vector3d v(g1 / lambda, g2 / lambda, 0.0);
  const Eigen::Vector3d c(0.0, 0.0, 1.0);
  const double s = 1.0 / std::sqrt(2.0);
  d.eigenvectors.col(0) = s * (v - c);
  d.eigenvectors.col(1) = Eigen::Vector3d(g2 / lambda, -g1 / lambda, 0.0);
  d.eigenvectors.col(2) = s * (v + c);
  return d;
}

/// Couplings of |D,-3/2>-|P,-1/2> (σ+) and |D,+1/2>-|P,-1/2> (σ-) for the given g0.
inline std::pair<Frequency, Frequency> raman_couplings(Frequency g0) {
  const auto h = [](int n) { return HalfInt::half(n); };
  const double c1 = std::abs(clebsch_gordan(h(3), h(-3), +1, h(1), h(-1)));
  const double c2 = std::abs(clebsch_gordan(h(3), h(1), -1, h(1), h(-1)));
  return {g0 * c1, g0 * c2};
}

/// λ = sqrt(g1² + g2²) = g0 sqrt(1/2 + 1/6).
inline Frequency effective_coupling(Frequency g0) {
  if (g0.angular() < 0.0) throw DomainError("effective_coupling: g0 must be >= 0");
  const auto [g1, g2] = raman_couplings(g0);
  return Frequency::angular(std::hypot(g1.angular(), g2.angular()));
}

/// g0 averaged over a Gaussian axial spread Δz in a standing wave: g0 sqrt((1 + exp(-k²Δz²))/2).
inline Frequency doppler_corrected_g0(Frequency g0_ideal, double delta_z_nm, double wavelength_nm) {
  if (!(g0_ideal.angular() >= 0.0) || !(delta_z_nm >= 0.0) || !(wavelength_nm > 0.0))
    throw DomainError("doppler_corrected_g0: arguments must be positive");
  const double k = two_pi / wavelength_nm;
  const double x = k * k * delta_z_nm * delta_z_nm;
  return g0_ideal * std::sqrt(0.5 * (1.0 + std::exp(-x)));
}

// ---------------------------------------------------------------------------------------------
// g0 fit

struct MeasuredShift {
  double delta_p_mhz = 0.0;
  double delta_mhz = 0.0;
  /// Standard error; <= 0 means unknown.
  double delta_error_mhz = 0.0;
};

inline std::vector<MeasuredShift> to_measured(const DispersionCurve& c) {
  std::vector<MeasuredShift> out;
  for (const auto& p : c.points)
    if (p.ok) out.push_back({p.delta_p_mhz, p.delta_mhz, 0.0});
  return out;
}

struct FitResult {
  std::string parameter = "g0_mhz";
  double estimate = 0.0;
  double standard_error = 0.0;
  double chi2 = 0.0;
  double chi2_per_dof = 0.0;
  std::size_t evaluations = 0;
  bool weighted = false;
  std::vector<double> residuals;
};

struct FitG0Options {
  double lo_mhz = 5.0;
  double hi_mhz = 25.0;
  int bits = 24;
  std::uintmax_t max_iterations = 100;
  /// Step for the finite-difference sensitivity dδ/dg0 used in the standard error.
  double fd_step_mhz = 0.05;
  /// χ² range over the bracket below this fraction of (1 + χ²_min) counts as flat.
  double flat_tolerance = 1e-10;
  DispersionOptions dispersion{};
};

/// Forward model δ(Δp; g0) with memoisation per (g0, Δp).
class DispersionModel {
 public:
  DispersionModel(SystemConfig cfg, DispersionOptions opt) : cfg_(std::move(cfg)), opt_(std::move(opt)) {}

  std::vector<double> operator()(double g0_mhz, const std::vector<double>& delta_p_mhz) {
    std::vector<double> missing;
    {
      std::lock_guard lock(mu_);
      for (double dp : delta_p_mhz)
        if (!cache_.count({g0_mhz, dp})) missing.push_back(dp);
    }
    if (!missing.empty()) {
      SystemConfig c = cfg_;
      c.g0 = Frequency::mhz(g0_mhz);
      const auto curve = raman_dispersion_curve(c, missing, opt_);
      std::lock_guard lock(mu_);
      diagnostics_.merge(curve.diagnostics);
      ++curves_;
      for (const auto& p : curve.points) {
        if (!p.ok) throw SolverError("forward model failed at g0=" + format_double(g0_mhz) + " MHz, delta_p=" +
                                     format_double(p.delta_p_mhz) + " MHz: " + p.message);
        cache_[{g0_mhz, p.delta_p_mhz}] = p.delta_mhz;
      }
    }
    std::vector<double> out;
    std::lock_guard lock(mu_);
    for (double dp : delta_p_mhz) out.push_back(cache_.at({g0_mhz, dp}));
    return out;
  }

  std::size_t curves_computed() const { return curves_; }
  const RunDiagnostics& diagnostics() const { return diagnostics_; }

 private:
  SystemConfig cfg_;
  DispersionOptions opt_;
  std::map<std::pair<double, double>, double> cache_;
  std::mutex mu_;
  std::size_t curves_ = 0;
  RunDiagnostics diagnostics_;
};

/// One-parameter χ² fit of g0 to a measured δ(Δp) curve, by Brent's method over the bracket.
inline FitResult fit_g0(const std::vector<MeasuredShift>& measured, DispersionModel& model, const FitG0Options& opt = {}) {
  if (measured.size() < 5) throw FitError(FitError::Reason::insufficient_data, "fit_g0 needs at least 5 points");
  if (!(opt.lo_mhz < opt.hi_mhz) || opt.lo_mhz < 0.0) throw FitError(FitError::Reason::out_of_range, "fit_g0: invalid bracket");
  std::vector<double> dp, y, w;
  bool weighted = true;
  for (const auto& m : measured) {
    dp.push_back(m.delta_p_mhz);
    y.push_back(m.delta_mhz);
    if (!(m.delta_error_mhz > 0.0)) weighted = false;
  }
  for (const auto& m : measured) w.push_back(weighted ? 1.0 / (m.delta_error_mhz * m.delta_error_mhz) : 1.0);

  std::size_t evals = 0;
  const auto chi2 = [&](double g0) {
    ++evals;
    const auto sim = model(g0, dp);
    double s = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) s += w[i] * (sim[i] - y[i]) * (sim[i] - y[i]);
    return s;
  };
  std::uintmax_t iters = opt.max_iterations;
  const auto [g_best, c_best] = boost::math::tools::brent_find_minima(chi2, opt.lo_mhz, opt.hi_mhz, opt.bits, iters);
  if (iters >= opt.max_iterations) throw FitError(FitError::Reason::not_converged, "fit_g0: Brent search did not converge");

  const double c_lo = chi2(opt.lo_mhz), c_hi = chi2(opt.hi_mhz);
  if (std::max(c_lo, c_hi) - c_best <= opt.flat_tolerance * (1.0 + c_best))
    throw FitError(FitError::Reason::flat_objective, "fit_g0: objective is flat over the search bracket");
  const double edge = 1e-3 * (opt.hi_mhz - opt.lo_mhz);
  if (g_best - opt.lo_mhz < edge || opt.hi_mhz - g_best < edge)
    throw FitError(FitError::Reason::out_of_range, "fit_g0: minimum at the edge of the search bracket (g0=" +
                                                       format_double(g_best) + " MHz)");

  FitResult r;
  r.estimate = g_best;
  r.chi2 = c_best;
  r.weighted = weighted;
  const auto dof = static_cast<double>(measured.size() - 1);
  r.chi2_per_dof = c_best / dof;
  const auto sim = model(g_best, dp);
  for (std::size_t i = 0; i < y.size(); ++i) r.residuals.push_back(y[i] - sim[i]);
  // Gauss-Newton variance from the sensitivity of the model curve.
  const double h = opt.fd_step_mhz;
  const auto up = model(g_best + h, dp);
  const auto dn = model(g_best - h, dp);
  double jtj = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double j = (up[i] - dn[i]) / (2.0 * h);
    jtj += w[i] * j * j;
  }
  const double scale = weighted ? std::max(1.0, r.chi2_per_dof) : r.chi2_per_dof;
  r.standard_error = jtj > 0.0 ? std::sqrt(scale / jtj) : std::numeric_limits<double>::infinity();
  r.evaluations = evals;
  return r;
}

inline FitResult fit_g0(const std::vector<MeasuredShift>& measured, const SystemConfig& cfg, const FitG0Options& opt = {}) {
  DispersionModel model(cfg, opt.dispersion);
  return fit_g0(measured, model, opt);
}

// ---------------------------------------------------------------------------------------------
// Error budget

/// Returns cfg with the numeric config key `key` shifted by `delta` (in the key's file units).
inline SystemConfig perturb_parameter(const SystemConfig& cfg, const std::string& key, double delta) {
  std::string text;
  bool found = false;
  for (auto [k, v] : system_config_entries(cfg)) {
    if (k == key) {
      const auto x = parse_double(v);
      if (!x) throw ConfigError("parameter '" + key + "' is not numeric");
      v = format_double(*x + delta);
      found = true;
    }
    text += k + " = " + v + "\n";
  }
  if (!found) throw ConfigError("unknown parameter '" + key + "'");
  return system_config_from_text(text);
}

inline std::string parameter_unit(const std::string& key) {
  if (key.size() > 4 && key.ends_with("_mhz")) return "MHz";
  if (key == "b_gauss") return "G";
  if (key.ends_with("_us")) return "us";
  return "";
}

struct ErrorBudgetRow {
  std::string name;
  double parameter_error = 0.0;
  std::string parameter_unit;
  /// |Δg0/Δp| from refits at p ± error.
  double gradient = 0.0;
  /// Same from refits at p ± error/2, for the linearity check.
  double gradient_half = 0.0;
  std::string gradient_unit;
  double contribution = 0.0;
  bool linear = true;
  bool valid = true;
  std::string message;
};

struct ErrorBudget {
  double fitted_g0_mhz = 0.0;
  std::vector<ErrorBudgetRow> rows;
  double combined_error = 0.0;
  RunDiagnostics diagnostics;

  std::string to_csv() const {
    std::string out = "parameter,parameter_error,parameter_unit,gradient,gradient_unit,contribution_mhz,gradient_half,linear,valid\n";
    for (const auto& r : rows)
      out += r.name + "," + format_double(r.parameter_error) + "," + r.parameter_unit + "," + format_double(r.gradient) + "," +
             r.gradient_unit + "," + format_double(r.contribution) + "," + format_double(r.gradient_half) + "," +
             (r.linear ? "true" : "false") + "," + (r.valid ? "true" : "false") + "\n";
    out += "combined,,," + std::string(",,") + format_double(combined_error) + ",,,\n";
    return out;
  }

  std::string to_table() const {
    std::ostringstream os;
    const auto fixed = [](double v, int prec) {
      std::ostringstream s;
      s.setf(std::ios::fixed);
      s.precision(prec);
      s << v;
      return s.str();
    };
    os << "Parameter            | Error of param.  | Gradient          | Error budget for g0\n";
    os << "---------------------+------------------+-------------------+--------------------\n";
    for (const auto& r : rows) {
      std::string name = r.name, err = fixed(r.parameter_error, 3) + " " + r.parameter_unit;
      std::string grad = r.valid ? fixed(r.gradient, 3) + (r.gradient_unit.empty() ? "" : " " + r.gradient_unit) : "invalid";
      std::string contrib = r.valid ? fixed(r.contribution, 3) + " MHz" : r.message;
      name.resize(20, ' ');
      err.resize(16, ' ');
      grad.resize(17, ' ');
      os << name << " | " << err << " | " << grad << " | " << contrib << "\n";
    }
    os << "Combined (quadrature): " << fixed(combined_error, 3) << " MHz\n";
    return os.str();
  }
};

struct ErrorBudgetOptions {
  FitG0Options fit{};
  /// Refits search g0 within ± this window around the base estimate.
  double refit_window_mhz = 2.0;
  bool linearity_check = true;
  double linearity_tolerance = 0.10;
};

/// Propagates each parameter error to g0 by refitting the measured curve with the parameter
/// shifted by ±error (and ±error/2 for the linearity check); contributions add in quadrature.
inline ErrorBudget error_budget(const std::vector<MeasuredShift>& measured, const SystemConfig& cfg, double fitted_g0_mhz,
                                const std::vector<std::pair<std::string, double>>& parameter_errors,
                                const ErrorBudgetOptions& opt = {}) {
  ErrorBudget b;
  b.fitted_g0_mhz = fitted_g0_mhz;
  FitG0Options fo = opt.fit;
  fo.lo_mhz = std::max(0.0, fitted_g0_mhz - opt.refit_window_mhz);
  fo.hi_mhz = fitted_g0_mhz + opt.refit_window_mhz;
  const auto refit = [&](const std::string& key, double shift) {
    DispersionModel model(perturb_parameter(cfg, key, shift), fo.dispersion);
    const double g = fit_g0(measured, model, fo).estimate;
    b.diagnostics.merge(model.diagnostics());
    return g;
  };
  double sum2 = 0.0;
  for (const auto& [key, err] : parameter_errors) {
    ErrorBudgetRow row;
    row.name = key;
    row.parameter_error = err;
    row.parameter_unit = parameter_unit(key);
    row.gradient_unit = row.parameter_unit == "MHz" || row.parameter_unit.empty() ? "" : "MHz/" + row.parameter_unit;
    try {
      if (!(err > 0.0)) throw ConfigError("parameter error for '" + key + "' must be > 0");
      row.gradient = std::abs(refit(key, err) - refit(key, -err)) / (2.0 * err);
      if (opt.linearity_check) {
        row.gradient_half = std::abs(refit(key, 0.5 * err) - refit(key, -0.5 * err)) / err;
        row.linear = std::abs(row.gradient_half - row.gradient) <= opt.linearity_tolerance * std::max(row.gradient, 1e-12);
      }
      row.contribution = row.gradient * err;
      sum2 += row.contribution * row.contribution;
    } catch (const Error& e) {
      row.valid = false;
      row.message = e.what();
    }
    b.rows.push_back(row);
  }
  b.combined_error = std::sqrt(sum2);
  return b;
}

// ---------------------------------------------------------------------------------------------
// Drive amplitude

struct DriveCalibrationOptions {
  double e_min_mhz = 0.005;
  double e_max_mhz = 0.1;
  std::size_t e_points = 20;
  /// Probe detunings for the peak search.
  std::vector<double> grid_mhz = linspace(-25.0, 25.0, 101);
  std::size_t threads = 1;
};

struct DriveCurve {
  std::vector<double> e_mhz;
  std::vector<double> ratio;
};

/// Peak transmission with the ion over peak transmission without it, for each drive amplitude.
inline DriveCurve drive_ratio_curve(const SystemConfig& cfg, const DriveCalibrationOptions& opt = {}) {
  if (opt.e_points < 2 || !(opt.e_min_mhz > 0.0) || !(opt.e_max_mhz > opt.e_min_mhz))
    throw ConfigError("drive grid must have >= 2 points with 0 < e_min < e_max");
  DriveCurve c;
  c.e_mhz.resize(opt.e_points);
  c.ratio.resize(opt.e_points);
  const double l0 = std::log(opt.e_min_mhz), l1 = std::log(opt.e_max_mhz);
  parallel_for(opt.e_points, opt.threads, [&](std::size_t i) {
    const double e = std::exp(l0 + (l1 - l0) * static_cast<double>(i) / static_cast<double>(opt.e_points - 1));
    SystemConfig cc = cfg;
    cc.drive = Frequency::mhz(e);
    c.e_mhz[i] = e;
    c.ratio[i] = peak_transmission(cc, false, opt.grid_mhz) / peak_transmission(cc, true, opt.grid_mhz);
  });
  return c;
}

struct DriveEstimate {
  double e_mhz = 0.0;
  DriveCurve curve;
};

/// Inverts the ratio-vs-E curve by monotone cubic interpolation. Ratios outside the computed
/// range are refused.
inline DriveEstimate estimate_drive_amplitude(double peak_ratio, const DriveCurve& curve) {
  if (!(peak_ratio > 0.0) || peak_ratio > 1.0) throw FitError(FitError::Reason::out_of_range, "peak ratio must be in (0, 1]");
  for (std::size_t i = 1; i < curve.ratio.size(); ++i)
    if (!(curve.ratio[i] > curve.ratio[i - 1]))
      throw FitError(FitError::Reason::not_converged, "ratio-vs-E curve is not strictly increasing; cannot invert");
  if (peak_ratio < curve.ratio.front() || peak_ratio > curve.ratio.back())
    throw FitError(FitError::Reason::out_of_range, "peak ratio " + format_double(peak_ratio) + " outside the computed range [" +
                                                       format_double(curve.ratio.front()) + ", " +
                                                       format_double(curve.ratio.back()) + "]; refusing to extrapolate");
  std::vector<double> x = curve.ratio, y;
  for (double e : curve.e_mhz) y.push_back(std::log(e));
  boost::math::interpolators::pchip<std::vector<double>> interp(std::move(x), std::move(y));
  return {std::exp(interp(peak_ratio)), curve};
}

inline DriveEstimate estimate_drive_amplitude(double peak_ratio, const SystemConfig& cfg, const DriveCalibrationOptions& opt = {}) {
  return estimate_drive_amplitude(peak_ratio, drive_ratio_curve(cfg, opt));
}

}  // namespace ioncavity
