#pragma once

// Simulated measurement protocols: Raman emission scans, transmission scans, linewidth fits.

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <boost/math/tools/minima.hpp>
#include <unsupported/Eigen/KroneckerProduct>

#include "ioncavity/config.hpp"
#include "ioncavity/dynamics.hpp"
#include "ioncavity/fitting.hpp"
#include "ioncavity/model.hpp"
#include "ioncavity/parallel.hpp"

namespace ioncavity {

struct SpectrumPoint {
  double detuning_mhz = 0.0;
  double signal = 0.0;
  std::optional<double> signal_error;
};

/// Worst invariant values seen across the runs that produced a result.
struct RunDiagnostics {
  double max_trace_drift = 0.0;
  double max_hermiticity_error = 0.0;
  double min_eigenvalue = std::numeric_limits<double>::infinity();

  void merge(const RunDiagnostics& o) {
    max_trace_drift = std::max(max_trace_drift, o.max_trace_drift);
    max_hermiticity_error = std::max(max_hermiticity_error, o.max_hermiticity_error);
    min_eigenvalue = std::min(min_eigenvalue, o.min_eigenvalue);
  }
  void observe(const DensityMatrix& rho) {
    max_trace_drift = std::max(max_trace_drift, std::abs(rho.trace() - 1.0));
    max_hermiticity_error = std::max(max_hermiticity_error, rho.hermiticity_error());
    if (rho.dim() <= 128) min_eigenvalue = std::min(min_eigenvalue, rho.min_eigenvalue());
  }
  void observe(const TrajectoryResult& r) {
    max_trace_drift = std::max(max_trace_drift, r.max_trace_drift);
    max_hermiticity_error = std::max(max_hermiticity_error, r.max_hermiticity_error);
    min_eigenvalue = std::min(min_eigenvalue, r.min_eigenvalue);
  }
};

struct SpectrumScan {
  std::string protocol;
  std::string axis_label = "detuning_mhz";
  std::string params_hash;
  std::vector<SpectrumPoint> points;
  RunDiagnostics diagnostics;

  std::vector<double> detunings() const {
    std::vector<double> v;
    for (const auto& p : points) v.push_back(p.detuning_mhz);
    return v;
  }
  std::vector<double> signals() const {
    std::vector<double> v;
    for (const auto& p : points) v.push_back(p.signal);
    return v;
  }
  /// Per-point errors, or empty when any point lacks one.
  std::vector<double> errors() const {
    std::vector<double> v;
    for (const auto& p : points) {
      if (!p.signal_error) return {};
      v.push_back(*p.signal_error);
    }
    return v;
  }

  void validate() const {
    for (std::size_t i = 0; i < points.size(); ++i) {
      if (i > 0 && !(points[i].detuning_mhz > points[i - 1].detuning_mhz))
        throw DomainError("spectrum detunings must be strictly increasing");
      if (!(points[i].signal >= 0.0)) throw DomainError("spectrum signals must be >= 0");
    }
  }

  std::string to_csv() const {
    std::string out = "# protocol=" + protocol + ", params hash=" + params_hash + "\n";
    out += axis_label + ",signal,signal_error\n";
    for (const auto& p : points) {
      out += format_double(p.detuning_mhz) + "," + format_double(p.signal) + ",";
      if (p.signal_error) out += format_double(*p.signal_error);
      out += "\n";
    }
    return out;
  }

  static SpectrumScan from_csv(std::istream& in) {
    SpectrumScan s;
    std::string line;
    if (!std::getline(in, line) || line.rfind("# protocol=", 0) != 0)
      throw ConfigError("spectrum CSV: missing '# protocol=..., params hash=...' header");
    const auto comma = line.find(", params hash=");
    if (comma == std::string::npos) throw ConfigError("spectrum CSV: malformed header '" + line + "'");
    s.protocol = line.substr(11, comma - 11);
    s.params_hash = line.substr(comma + 14);
    if (!std::getline(in, line)) throw ConfigError("spectrum CSV: missing column header");
    const auto c0 = line.find(',');
    s.axis_label = line.substr(0, c0);
    int lineno = 2;
    while (std::getline(in, line)) {
      ++lineno;
      if (line.empty()) continue;
      std::vector<std::string> f;
      std::stringstream ss(line);
      std::string item;
      while (std::getline(ss, item, ',')) f.push_back(item);
      if (!line.empty() && line.back() == ',') f.emplace_back();
      if (f.size() != 3) throw ConfigError("spectrum CSV line " + std::to_string(lineno) + ": expected 3 fields");
      auto d = parse_double(f[0]);
      auto v = parse_double(f[1]);
      if (!d || !v) throw ConfigError("spectrum CSV line " + std::to_string(lineno) + ": not a number");
      SpectrumPoint p{*d, *v, std::nullopt};
      if (!f[2].empty()) {
        auto e = parse_double(f[2]);
        if (!e) throw ConfigError("spectrum CSV line " + std::to_string(lineno) + ": bad signal_error");
        p.signal_error = *e;
      }
      s.points.push_back(p);
    }
    return s;
  }

  static SpectrumScan load(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("cannot open spectrum file '" + path + "'");
    return from_csv(f);
  }
};

/// `n` evenly spaced points on [lo, hi].
inline std::vector<double> linspace(double lo, double hi, std::size_t n) {
  std::vector<double> v(n);
  if (n == 1) {
    v[0] = lo;
    return v;
  }
  for (std::size_t i = 0; i < n; ++i) v[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n - 1);
  return v;
}

struct ScanOptions {
  std::size_t threads = 1;
  EvolveOptions evolve{};
  /// Ring-down after the pump pulse, in units of the cavity energy decay time 1/(2κ).
  double ringdown_decay_times = 5.0;
  /// Initial weights of S(m=-1/2) and S(m=+1/2).
  double s_minus_weight = 0.5;
  double s_plus_weight = 0.5;
};

inline EvolveOptions evolve_options_for(const SystemConfig& cfg, EvolveOptions base = {}) {
  base.abs_tol = cfg.ode_abs_tol;
  base.rel_tol = cfg.ode_rel_tol;
  base.store_states = false;
  return base;
}

/// Photons leaving through each mode during pulse + ring-down, for one cavity detuning.
struct EmissionResult {
  double photons_plus = 0.0;
  double photons_minus = 0.0;
  double total() const { return photons_plus + photons_minus; }
  TrajectoryResult trajectory;
};

inline EmissionResult simulate_emission(const SystemConfig& cfg, const ScanOptions& opt = {}) {
  const IonCavitySpace sys(cfg);
  auto h_static = build_H0_raman(cfg, sys) + build_HB(cfg, sys) + build_H_ioncav(cfg, sys);
  auto h_pump = build_H_pump_envelope(cfg, sys);
  const std::pair<std::size_t, double> w[] = {
      {sys.index({Manifold::S, HalfInt::half(-1)}, 0, 0), opt.s_minus_weight},
      {sys.index({Manifold::S, HalfInt::half(1)}, 0, 0), opt.s_plus_weight}};
  MasterEquationProblem p{TimeDependentHamiltonian::with_pulse(std::move(h_static), std::move(h_pump), cfg.pulse),
                          build_collapse_operators(cfg, sys),
                          DensityMatrix::mixture(sys.space(), w),
                          {},
                          {}};
  const double two_kappa = 2.0 * cfg.kappa.angular();
  p.integrated.push_back({"emission_plus", two_kappa * (dagger(sys.a_plus()) * sys.a_plus())});
  p.integrated.push_back({"emission_minus", two_kappa * (dagger(sys.a_minus()) * sys.a_minus())});
  const double window = cfg.pulse.duration_us + opt.ringdown_decay_times / two_kappa;
  EmissionResult r;
  r.trajectory = evolve(p, window, {}, evolve_options_for(cfg, opt.evolve));
  r.photons_plus = r.trajectory.integral("emission_plus");
  r.photons_minus = r.trajectory.integral("emission_minus");
  return r;
}

/// Raman emission spectrum: total emitted photon number vs cavity detuning at fixed pump detuning.
inline SpectrumScan emission_scan(const SystemConfig& cfg, Frequency delta_p, const std::vector<double>& delta_c_grid_mhz,
                                  const ScanOptions& opt = {}) {
  if (delta_c_grid_mhz.empty()) throw DomainError("emission_scan: empty detuning grid");
  cfg.validate();
  SpectrumScan scan;
  scan.protocol = "emission-scan";
  scan.axis_label = "delta_c_mhz";
  SystemConfig base = cfg;
  base.delta_p = delta_p;
  scan.params_hash = config_hash(base);
  scan.points.resize(delta_c_grid_mhz.size());
  std::vector<RunDiagnostics> diag(delta_c_grid_mhz.size());
  parallel_for(delta_c_grid_mhz.size(), opt.threads, [&](std::size_t i) {
    SystemConfig c = base;
    c.delta_c = Frequency::mhz(delta_c_grid_mhz[i]);
    try {
      const auto r = simulate_emission(c, opt);
      scan.points[i] = {delta_c_grid_mhz[i], std::max(0.0, r.total()), std::nullopt};
      diag[i].observe(r.trajectory);
    } catch (const SolverError& e) {
      throw ScanPointError(delta_c_grid_mhz[i], e.what());
    }
  });
  for (const auto& d : diag) scan.diagnostics.merge(d);
  scan.validate();
  return scan;
}

struct RamanShift {
  double delta_mhz = 0.0;
  double error_mhz = 0.0;
  /// The fitted center lies within one grid step of the scan edge.
  bool peak_at_edge = false;
  LorentzianFit fit;
};

/// δ = (fitted Lorentzian center) - Δp, so a peak at larger Δc than Δp gives δ > 0.
inline RamanShift extract_raman_shift(const SpectrumScan& scan, Frequency delta_p) {
  const auto x = scan.detunings();
  const auto fit = fit_lorentzian(x, scan.signals(), scan.errors());
  RamanShift r;
  r.fit = fit;
  r.delta_mhz = fit.center - delta_p.in_mhz();
  r.error_mhz = fit.center_error;
  const double step = x.size() > 1 ? std::abs(x[1] - x[0]) : 0.0;
  r.peak_at_edge = fit.center <= x.front() + step || fit.center >= x.back() - step;
  return r;
}

struct DispersionPoint {
  double delta_p_mhz = 0.0;
  double delta_mhz = 0.0;
  double delta_error_mhz = 0.0;
  bool ok = true;
  std::string message;
};

struct DispersionCurve {
  std::vector<DispersionPoint> points;
  RunDiagnostics diagnostics;

  std::vector<DispersionPoint> valid() const {
    std::vector<DispersionPoint> v;
    for (const auto& p : points)
      if (p.ok) v.push_back(p);
    return v;
  }
  /// max δ - min δ over valid points.
  double peak_to_peak() const {
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (const auto& p : points)
      if (p.ok) {
        lo = std::min(lo, p.delta_mhz);
        hi = std::max(hi, p.delta_mhz);
      }
    return hi - lo;
  }
};

struct DispersionOptions {
  ScanOptions scan{};
  /// Each Δc grid is centred on its Δp.
  double half_span_mhz = 25.0;
  std::size_t points = 81;
};

/// δ(Δp): one emission scan and Lorentzian fit per pump detuning. Failed points are kept
/// with ok = false.
inline DispersionCurve raman_dispersion_curve(const SystemConfig& cfg, const std::vector<double>& delta_p_grid_mhz,
                                              const DispersionOptions& opt = {}) {
  cfg.validate();
  const std::size_t np = delta_p_grid_mhz.size(), nc = opt.points;
  std::vector<double> signal(np * nc, 0.0);
  std::vector<std::string> failure(np);
  std::vector<RunDiagnostics> diag(np * nc);
  const auto offsets = linspace(-opt.half_span_mhz, opt.half_span_mhz, nc);
  // One flat work list so a single slow Δp does not idle the other workers.
  std::vector<std::exception_ptr> errs(np * nc);
  parallel_for(np * nc, opt.scan.threads, [&](std::size_t k) {
    const std::size_t i = k / nc, j = k % nc;
    SystemConfig c = cfg;
    c.delta_p = Frequency::mhz(delta_p_grid_mhz[i]);
    c.delta_c = Frequency::mhz(delta_p_grid_mhz[i] + offsets[j]);
    try {
      const auto r = simulate_emission(c, opt.scan);
      signal[k] = std::max(0.0, r.total());
      diag[k].observe(r.trajectory);
    } catch (...) {
      errs[k] = std::current_exception();
    }
  });
  DispersionCurve curve;
  for (const auto& d : diag) curve.diagnostics.merge(d);
  for (std::size_t i = 0; i < np; ++i) {
    DispersionPoint p;
    p.delta_p_mhz = delta_p_grid_mhz[i];
    try {
      for (std::size_t j = 0; j < nc; ++j)
        if (errs[i * nc + j]) std::rethrow_exception(errs[i * nc + j]);
      SpectrumScan s;
      s.protocol = "emission-scan";
      for (std::size_t j = 0; j < nc; ++j) s.points.push_back({delta_p_grid_mhz[i] + offsets[j], signal[i * nc + j], std::nullopt});
      const auto r = extract_raman_shift(s, Frequency::mhz(delta_p_grid_mhz[i]));
      p.delta_mhz = r.delta_mhz;
      p.delta_error_mhz = r.error_mhz;
      if (r.peak_at_edge) p.message = "peak at grid edge";
    } catch (const std::exception& e) {
      p.ok = false;
      p.message = e.what();
    }
    curve.points.push_back(p);
  }
  return curve;
}

// ---------------------------------------------------------------------------------------------
// Transmission

struct TransmissionOptions {
  std::size_t threads = 1;
  /// Scan without the ion (empty driven cavity).
  bool no_ion = false;
};

/// Steady state of the driven empty cavity.
inline DensityMatrix empty_cavity_steady_state(const SystemConfig& cfg) {
  const auto m = build_cavity_only(cfg);
  return steady_state(m.hamiltonian, m.collapse_ops);
}

inline double detected_rate(const SystemConfig& cfg, const DensityMatrix& rho, const OperatorMatrix& a_plus,
                            const OperatorMatrix& a_minus) {
  double n = expectation(rho, dagger(a_plus) * a_plus).real();
  if (cfg.detection == Detection::both_modes) n += expectation(rho, dagger(a_minus) * a_minus).real();
  return 2.0 * cfg.kappa.angular() * n;
}

/// Transmitted photon rate (photons/us) at one probe detuning. With the ion, the system is
/// re-prepared in |D,-3/2> ⊗ (empty-cavity steady state) at rate 1/probe_window and the
/// time-averaged state is used, because nothing in the probe Hamiltonian returns population
/// from S1/2 and the literal steady state is not unique.
struct TransmissionPoint {
  double signal = 0.0;
  DensityMatrix state;
};

inline TransmissionPoint transmission_point(const SystemConfig& cfg, bool no_ion) {
  if (no_ion) {
    const auto m = build_cavity_only(cfg);
    auto rho = steady_state(m.hamiltonian, m.collapse_ops);
    return {detected_rate(cfg, rho, m.a_plus, m.a_minus), std::move(rho)};
  }
  const IonCavitySpace sys(cfg);
  const auto h = build_H0_transmission(cfg, sys) + build_HB(cfg, sys) + build_H_drive(cfg, sys) + build_H_ioncav(cfg, sys);
  const auto c_ops = build_collapse_operators(cfg, sys);
  const auto cav = empty_cavity_steady_state(cfg);
  const auto atom_dim = static_cast<Eigen::Index>(sys.scheme().size());
  DenseMatrix atom = DenseMatrix::Zero(atom_dim, atom_dim);
  const auto d = static_cast<Eigen::Index>(sys.scheme().index_of({Manifold::D, HalfInt::half(-3)}));
  atom(d, d) = 1.0;
  DenseMatrix rho0 = Eigen::kroneckerProduct(atom, cav.matrix()).eval();
  const DensityMatrix reset(sys.space(), std::move(rho0));
  auto rho = steady_state_with_reset(h, c_ops, reset, 1.0 / cfg.probe_window_us);
  return {detected_rate(cfg, rho, sys.a_plus(), sys.a_minus()), std::move(rho)};
}

inline SpectrumScan transmission_scan(const SystemConfig& cfg, const std::vector<double>& delta_866_grid_mhz,
                                      const TransmissionOptions& opt = {}) {
  if (delta_866_grid_mhz.empty()) throw DomainError("transmission_scan: empty detuning grid");
  cfg.validate();
  SpectrumScan scan;
  scan.protocol = opt.no_ion ? "transmission-scan-no-ion" : "transmission-scan";
  scan.axis_label = "delta_866_mhz";
  scan.params_hash = config_hash(cfg);
  scan.points.resize(delta_866_grid_mhz.size());
  std::vector<RunDiagnostics> diag(delta_866_grid_mhz.size());
  parallel_for(delta_866_grid_mhz.size(), opt.threads, [&](std::size_t i) {
    SystemConfig c = cfg;
    c.delta_866 = Frequency::mhz(delta_866_grid_mhz[i]);
    try {
      const auto r = transmission_point(c, opt.no_ion);
      scan.points[i] = {delta_866_grid_mhz[i], std::max(0.0, r.signal), std::nullopt};
      diag[i].observe(r.state);
    } catch (const SolverError& e) {
      throw ScanPointError(delta_866_grid_mhz[i], e.what());
    }
  });
  for (const auto& d : diag) scan.diagnostics.merge(d);
  scan.validate();
  return scan;
}

/// 2κ E² / (κ² + Δ²) in photons/us, the driven empty cavity without truncation.
inline double empty_cavity_transmission(const SystemConfig& cfg, Frequency delta_866) {
  const double k = cfg.kappa.angular(), e = cfg.drive.angular(), d = delta_866.angular();
  return 2.0 * k * e * e / (k * k + d * d);
}

/// Highest transmission, refined between grid points by Brent's method.
inline double peak_transmission(const SystemConfig& cfg, bool no_ion, const std::vector<double>& grid_mhz) {
  const auto scan = transmission_scan(cfg, grid_mhz, {1, no_ion});
  const auto y = scan.signals();
  const auto i = static_cast<std::size_t>(std::max_element(y.begin(), y.end()) - y.begin());
  if (i == 0 || i + 1 == y.size()) return y[i];
  const auto f = [&](double d) {
    SystemConfig c = cfg;
    c.delta_866 = Frequency::mhz(d);
    return -transmission_point(c, no_ion).signal;
  };
  const auto [x, v] = boost::math::tools::brent_find_minima(f, grid_mhz[i - 1], grid_mhz[i + 1], 40);
  (void)x;
  return std::max(y[i], -v);
}

struct LinewidthResult {
  double kappa_mhz = 0.0;
  double error_mhz = 0.0;
  /// Multiplier that maps the scan's axis onto true MHz.
  double axis_scale = 1.0;
  MultiLorentzianFit fit;
};

/// Central-peak HWHM from a carrier + two sidebands spectrum. The axis is rescaled so the
/// fitted sidebands sit at ±sideband_offset.
inline LinewidthResult linewidth_fit(const SpectrumScan& scan, double sideband_offset_mhz) {
  if (!(sideband_offset_mhz > 0.0)) throw DomainError("linewidth_fit: sideband offset must be > 0");
  const auto x = scan.detunings();
  const auto y = scan.signals();
  auto peaks = local_maxima(y);
  if (peaks.size() < 3) throw FitError(FitError::Reason::no_peaks, "linewidth_fit: fewer than 3 resolvable peaks");
  peaks.resize(3);
  std::sort(peaks.begin(), peaks.end());
  std::vector<double> c, w;
  for (auto i : peaks) {
    c.push_back(x[i]);
    w.push_back(detail::half_width_guess(x, y, i));
  }
  // Widths from the half-maximum crossings overlap between neighbours; cap them by the spacing.
  const double spacing = std::min(c[1] - c[0], c[2] - c[1]);
  for (auto& wi : w) wi = std::min(wi, 0.25 * spacing);
  auto fit = fit_lorentzians(x, y, c, w, scan.errors());
  if (!fit.converged) throw FitError(FitError::Reason::not_converged, "linewidth_fit: triple Lorentzian did not converge");

  // Parameter slots in fit order (before sorting by center).
  std::vector<int> order{0, 1, 2};
  std::sort(order.begin(), order.end(), [&](int a, int b) { return fit.params(3 * a) < fit.params(3 * b); });
  const int lo = order[0], mid = order[1], hi = order[2];
  const double span = fit.params(3 * hi) - fit.params(3 * lo);
  if (!(span > 0.0)) throw FitError(FitError::Reason::no_peaks, "linewidth_fit: sidebands not separated");
  const double scale = 2.0 * sideband_offset_mhz / span;
  const double w0 = std::abs(fit.params(3 * mid + 1));
  LinewidthResult r;
  r.axis_scale = scale;
  r.kappa_mhz = w0 * scale;
  Eigen::VectorXd g = Eigen::VectorXd::Zero(fit.params.size());
  g(3 * mid + 1) = (fit.params(3 * mid + 1) >= 0 ? 1.0 : -1.0) * scale;
  g(3 * hi) = -r.kappa_mhz / span;
  g(3 * lo) = r.kappa_mhz / span;
  r.error_mhz = std::sqrt(std::max(0.0, double(g.transpose() * fit.covariance * g)));
  r.fit = std::move(fit);
  return r;
}

/// Empty-cavity transmission probed by a carrier and two phase-modulation sidebands at
/// ±offset with relative power `sideband_power`.
inline SpectrumScan sideband_transmission_scan(const SystemConfig& cfg, const std::vector<double>& grid_mhz,
                                               double sideband_offset_mhz, double sideband_power) {
  SpectrumScan scan;
  scan.protocol = "linewidth-scan";
  scan.axis_label = "delta_866_mhz";
  scan.params_hash = config_hash(cfg);
  for (double d : grid_mhz) {
    double s = 0.0;
    for (int k = -1; k <= 1; ++k) {
      SystemConfig c = cfg;
      c.delta_866 = Frequency::mhz(d - k * sideband_offset_mhz);
      const double weight = k == 0 ? 1.0 : sideband_power;
      s += weight * transmission_point(c, true).signal;
    }
    scan.points.push_back({d, s, std::nullopt});
  }
  return scan;
}

}  // namespace ioncavity
