#pragma once

// SystemConfig and the flat `key = value` configuration format.
//
// File units: MHz for rates and detunings, gauss for the field, us for times.
// In memory every rate is a Frequency (angular, 2π·MHz).

#include <algorithm>
#include <array>
#include <cctype>
#include <charconv>
#include <cmath>
#include <complex>
#include <cstdint>
#include <fstream>
#include <map>
#include <numbers>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "ioncavity/atomic.hpp"
#include "ioncavity/error.hpp"
#include "ioncavity/units.hpp"

namespace ioncavity {

/// Shortest decimal text that parses back to the same double.
inline std::string format_double(double v) {
  std::array<char, 64> buf{};
  auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  if (ec != std::errc()) return "nan";
  return std::string(buf.data(), ptr);
}

inline std::optional<double> parse_double(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  if (s.empty()) return std::nullopt;
  if (s.front() == '+') s.remove_prefix(1);
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

/// Envelope f(t) of the pump pulse. Rectangular on [0, duration), or with sin^2 edges of
/// length `ramp`.
struct PulseShape {
  enum class Kind { rectangular, sin2_ramp };
  Kind kind = Kind::rectangular;
  double duration_us = 0.3;
  double ramp_us = 0.0;

  double value(double t) const {
    if (t < 0.0 || t >= duration_us) return 0.0;
    if (kind == Kind::rectangular || ramp_us <= 0.0) return 1.0;
    const double r = std::min(ramp_us, 0.5 * duration_us);
    if (t < r) {
      const double s = std::sin(0.5 * std::numbers::pi * t / r);
      return s * s;
    }
    if (t > duration_us - r) {
      const double s = std::sin(0.5 * std::numbers::pi * (duration_us - t) / r);
      return s * s;
    }
    return 1.0;
  }

  /// Times where f or its derivative is discontinuous.
  std::vector<double> breakpoints() const {
    std::vector<double> b{0.0};
    if (kind == Kind::sin2_ramp && ramp_us > 0.0) {
      const double r = std::min(ramp_us, 0.5 * duration_us);
      b.push_back(r);
      if (duration_us - r > r) b.push_back(duration_us - r);
    }
    b.push_back(duration_us);
    return b;
  }

  bool operator==(const PulseShape&) const = default;
};

enum class Detection { drive_mode, both_modes };

struct SystemConfig {
  Frequency g0 = Frequency::mhz(15.1);
  Frequency kappa = Frequency::mhz(4.1);
  Frequency gamma_s = Frequency::mhz(11.5 * 0.936);
  Frequency gamma_d = Frequency::mhz(11.5 * 0.064);
  Frequency omega_397 = Frequency::mhz(11.9);
  Frequency delta_p = Frequency::mhz(-10.0);
  Frequency delta_c = Frequency::mhz(-10.0);
  Frequency delta_866 = Frequency::mhz(0.0);
  Frequency drive = Frequency::mhz(0.032);
  /// Spherical components (eps_-1, eps_0, eps_+1).
  std::array<std::complex<double>, 3> pump_polarization{0.0, 1.0, 0.0};
  MagneticEnvironment env{};
  double lande_g_s = 2.002;
  double lande_g_p = 2.0 / 3.0;
  double lande_g_d = 0.8;
  std::size_t fock_cutoff = 1;
  PulseShape pulse{};
  /// Mean probe duration for transmission spectra (us).
  double probe_window_us = 100.0;
  Detection detection = Detection::drive_mode;
  double ode_abs_tol = 1e-10;
  double ode_rel_tol = 1e-8;

  Frequency gamma_total() const { return gamma_s + gamma_d; }
  LevelScheme level_scheme() const { return LevelScheme::calcium(lande_g_s, lande_g_p, lande_g_d); }
  std::complex<double> eps(int q) const { return pump_polarization[static_cast<std::size_t>(q + 1)]; }

  /// Every invariant violation, empty when valid.
  std::vector<std::string> violations() const {
    std::vector<std::string> v;
    auto positive = [&](Frequency f, const char* key) {
      if (!(f.angular() > 0.0) || !std::isfinite(f.angular())) v.push_back(std::string(key) + " must be > 0");
    };
    auto nonneg = [&](Frequency f, const char* key) {
      if (!(f.angular() >= 0.0) || !std::isfinite(f.angular())) v.push_back(std::string(key) + " must be >= 0");
    };
    auto finite = [&](Frequency f, const char* key) {
      if (!std::isfinite(f.angular())) v.push_back(std::string(key) + " must be finite");
    };
    nonneg(g0, "g0_mhz");
    positive(kappa, "kappa_mhz");
    positive(gamma_s, "gamma_s_mhz");
    positive(gamma_d, "gamma_d_mhz");
    nonneg(omega_397, "omega_397_mhz");
    nonneg(drive, "drive_e_mhz");
    finite(delta_p, "delta_p_mhz");
    finite(delta_c, "delta_c_mhz");
    finite(delta_866, "delta_866_mhz");
    double norm = 0.0;
    for (auto e : pump_polarization) norm += std::norm(e);
    if (std::abs(norm - 1.0) > 1e-12) v.push_back("pump polarization must have unit norm (|eps|^2 sum = " + format_double(norm) + ")");
    if (!(env.field_gauss >= 0.0)) v.push_back("b_gauss must be >= 0");
    if (!(env.bohr_magneton_mhz_per_gauss > 0.0)) v.push_back("mu_b_mhz_per_gauss must be > 0");
    if (fock_cutoff < 1) v.push_back("fock_cutoff must be >= 1");
    if (fock_cutoff > 3) v.push_back("fock_cutoff must be <= 3");
    if (!(pulse.duration_us > 0.0)) v.push_back("pulse_duration_us must be > 0");
    if (!(pulse.ramp_us >= 0.0)) v.push_back("pulse_ramp_us must be >= 0");
    if (!(probe_window_us > 0.0)) v.push_back("probe_window_us must be > 0");
    if (!(ode_abs_tol > 0.0) || !(ode_rel_tol > 0.0)) v.push_back("ODE tolerances must be > 0");
    return v;
  }

  void validate() const {
    auto v = violations();
    if (!v.empty()) throw ConfigError(std::move(v));
  }
};

/// Ordered flat key/value store that remembers which keys were consumed.
class KeyValueConfig {
 public:
  static KeyValueConfig parse(std::istream& in, const std::string& origin = "<config>") {
    KeyValueConfig kv;
    std::string line;
    std::vector<std::string> errors;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
      const auto trim = [](std::string s) {
        const auto b = s.find_first_not_of(" \t\r");
        if (b == std::string::npos) return std::string();
        const auto e = s.find_last_not_of(" \t\r");
        return s.substr(b, e - b + 1);
      };
      line = trim(line);
      if (line.empty()) continue;
      const auto eq = line.find('=');
      if (eq == std::string::npos) {
        errors.push_back(origin + ":" + std::to_string(lineno) + ": expected 'key = value'");
        continue;
      }
      auto key = trim(line.substr(0, eq));
      auto value = trim(line.substr(eq + 1));
      if (key.empty()) {
        errors.push_back(origin + ":" + std::to_string(lineno) + ": empty key");
        continue;
      }
      if (kv.values_.count(key)) errors.push_back(origin + ":" + std::to_string(lineno) + ": duplicate key '" + key + "'");
      kv.values_[key] = value;
    }
    if (!errors.empty()) throw ConfigError(errors);
    return kv;
  }

  static KeyValueConfig load(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("cannot open config file '" + path + "'");
    return parse(f, path);
  }

  void set(const std::string& key, const std::string& value) { values_[key] = value; }
  bool contains(const std::string& key) const { return values_.count(key) != 0; }
  const std::map<std::string, std::string>& values() const { return values_; }

  /// Marks the key consumed and returns its raw text.
  std::optional<std::string> take(const std::string& key) {
    used_.insert(key);
    auto it = values_.find(key);
    if (it == values_.end()) return std::nullopt;
    return it->second;
  }

  std::vector<std::string> unused_keys() const {
    std::vector<std::string> out;
    for (const auto& [k, v] : values_)
      if (!used_.count(k)) out.push_back(k);
    return out;
  }

 private:
  std::map<std::string, std::string> values_;
  std::set<std::string> used_;
};

namespace detail {

inline std::string format_complex(std::complex<double> c) {
  return format_double(c.real()) + "," + format_double(c.imag());
}

inline std::optional<std::complex<double>> parse_complex(const std::string& s) {
  const auto comma = s.find(',');
  if (comma == std::string::npos) {
    auto re = parse_double(s);
    if (!re) return std::nullopt;
    return std::complex<double>(*re, 0.0);
  }
  auto re = parse_double(std::string_view(s).substr(0, comma));
  auto im = parse_double(std::string_view(s).substr(comma + 1));
  if (!re || !im) return std::nullopt;
  return std::complex<double>(*re, *im);
}

/// Reads typed values out of a KeyValueConfig, collecting every error.
class Reader {
 public:
  explicit Reader(KeyValueConfig& kv) : kv_(kv) {}

  void number(const std::string& key, double& out) {
    if (auto s = kv_.take(key)) {
      if (auto v = parse_double(*s)) out = *v;
      else errors.push_back(key + ": not a number: '" + *s + "'");
    }
  }
  void frequency(const std::string& key, Frequency& out) {
    double mhz = out.in_mhz();
    const bool had = kv_.contains(key);
    number(key, mhz);
    if (had) out = Frequency::mhz(mhz);
  }
  void count(const std::string& key, std::size_t& out) {
    if (auto s = kv_.take(key)) {
      auto v = parse_double(*s);
      if (!v || *v < 0 || std::floor(*v) != *v) errors.push_back(key + ": not a non-negative integer: '" + *s + "'");
      else out = static_cast<std::size_t>(*v);
    }
  }
  void complex(const std::string& key, std::complex<double>& out) {
    if (auto s = kv_.take(key)) {
      if (auto v = parse_complex(*s)) out = *v;
      else errors.push_back(key + ": not a complex number 're' or 're,im': '" + *s + "'");
    }
  }
  void boolean(const std::string& key, bool& out) {
    if (auto s = kv_.take(key)) {
      if (*s == "true" || *s == "1" || *s == "yes") out = true;
      else if (*s == "false" || *s == "0" || *s == "no") out = false;
      else errors.push_back(key + ": not a boolean: '" + *s + "'");
    }
  }
  void text(const std::string& key, std::string& out) {
    if (auto s = kv_.take(key)) out = *s;
  }
  void number_list(const std::string& key, std::vector<double>& out) {
    if (auto s = kv_.take(key)) {
      std::vector<double> v;
      std::stringstream ss(*s);
      std::string item;
      bool ok = true;
      while (std::getline(ss, item, ',')) {
        auto d = parse_double(item);
        if (!d) { ok = false; break; }
        v.push_back(*d);
      }
      if (!ok || v.empty()) errors.push_back(key + ": not a comma-separated number list: '" + *s + "'");
      else out = std::move(v);
    }
  }

  std::vector<std::string> errors;

 private:
  KeyValueConfig& kv_;
};

}  // namespace detail

/// Reads the physical keys from `kv` into `cfg` (missing keys keep their defaults).
/// Returns the list of parse errors; validation is separate.
inline std::vector<std::string> read_system_config(KeyValueConfig& kv, SystemConfig& cfg) {
  detail::Reader r(kv);
  r.frequency("g0_mhz", cfg.g0);
  r.frequency("kappa_mhz", cfg.kappa);
  r.frequency("gamma_s_mhz", cfg.gamma_s);
  r.frequency("gamma_d_mhz", cfg.gamma_d);
  r.frequency("omega_397_mhz", cfg.omega_397);
  r.frequency("delta_p_mhz", cfg.delta_p);
  r.frequency("delta_c_mhz", cfg.delta_c);
  r.frequency("delta_866_mhz", cfg.delta_866);
  r.frequency("drive_e_mhz", cfg.drive);
  r.complex("pump_eps_m1", cfg.pump_polarization[0]);
  r.complex("pump_eps_0", cfg.pump_polarization[1]);
  r.complex("pump_eps_p1", cfg.pump_polarization[2]);
  r.number("b_gauss", cfg.env.field_gauss);
  r.number("mu_b_mhz_per_gauss", cfg.env.bohr_magneton_mhz_per_gauss);
  r.number("lande_g_s", cfg.lande_g_s);
  r.number("lande_g_p", cfg.lande_g_p);
  r.number("lande_g_d", cfg.lande_g_d);
  r.count("fock_cutoff", cfg.fock_cutoff);
  std::string shape = cfg.pulse.kind == PulseShape::Kind::rectangular ? "rectangular" : "sin2";
  r.text("pulse_shape", shape);
  if (shape == "rectangular") cfg.pulse.kind = PulseShape::Kind::rectangular;
  else if (shape == "sin2") cfg.pulse.kind = PulseShape::Kind::sin2_ramp;
  else r.errors.push_back("pulse_shape: expected 'rectangular' or 'sin2', got '" + shape + "'");
  r.number("pulse_duration_us", cfg.pulse.duration_us);
  r.number("pulse_ramp_us", cfg.pulse.ramp_us);
  r.number("probe_window_us", cfg.probe_window_us);
  std::string det = cfg.detection == Detection::drive_mode ? "drive_mode" : "both_modes";
  r.text("detection", det);
  if (det == "drive_mode") cfg.detection = Detection::drive_mode;
  else if (det == "both_modes") cfg.detection = Detection::both_modes;
  else r.errors.push_back("detection: expected 'drive_mode' or 'both_modes', got '" + det + "'");
  r.number("ode_abs_tol", cfg.ode_abs_tol);
  r.number("ode_rel_tol", cfg.ode_rel_tol);
  return r.errors;
}

/// Canonical `key = value` lines, one per parameter, in a fixed order.
inline std::vector<std::pair<std::string, std::string>> system_config_entries(const SystemConfig& c) {
  const auto f = [](Frequency x) { return format_double(x.in_mhz()); };
  return {
      {"g0_mhz", f(c.g0)},
      {"kappa_mhz", f(c.kappa)},
      {"gamma_s_mhz", f(c.gamma_s)},
      {"gamma_d_mhz", f(c.gamma_d)},
      {"omega_397_mhz", f(c.omega_397)},
      {"delta_p_mhz", f(c.delta_p)},
      {"delta_c_mhz", f(c.delta_c)},
      {"delta_866_mhz", f(c.delta_866)},
      {"drive_e_mhz", f(c.drive)},
      {"pump_eps_m1", detail::format_complex(c.pump_polarization[0])},
      {"pump_eps_0", detail::format_complex(c.pump_polarization[1])},
      {"pump_eps_p1", detail::format_complex(c.pump_polarization[2])},
      {"b_gauss", format_double(c.env.field_gauss)},
      {"mu_b_mhz_per_gauss", format_double(c.env.bohr_magneton_mhz_per_gauss)},
      {"lande_g_s", format_double(c.lande_g_s)},
      {"lande_g_p", format_double(c.lande_g_p)},
      {"lande_g_d", format_double(c.lande_g_d)},
      {"fock_cutoff", std::to_string(c.fock_cutoff)},
      {"pulse_shape", c.pulse.kind == PulseShape::Kind::rectangular ? "rectangular" : "sin2"},
      {"pulse_duration_us", format_double(c.pulse.duration_us)},
      {"pulse_ramp_us", format_double(c.pulse.ramp_us)},
      {"probe_window_us", format_double(c.probe_window_us)},
      {"detection", c.detection == Detection::drive_mode ? "drive_mode" : "both_modes"},
      {"ode_abs_tol", format_double(c.ode_abs_tol)},
      {"ode_rel_tol", format_double(c.ode_rel_tol)},
  };
}

inline std::string to_config_text(const SystemConfig& c) {
  std::string out;
  for (const auto& [k, v] : system_config_entries(c)) out += k + " = " + v + "\n";
  return out;
}

/// Parses a complete config text; unknown keys and invalid values are reported together.
inline SystemConfig system_config_from_text(const std::string& text) {
  std::istringstream in(text);
  auto kv = KeyValueConfig::parse(in);
  SystemConfig cfg;
  auto errors = read_system_config(kv, cfg);
  for (const auto& k : kv.unused_keys()) errors.push_back("unknown key '" + k + "'");
  auto v = cfg.violations();
  errors.insert(errors.end(), v.begin(), v.end());
  if (!errors.empty()) throw ConfigError(std::move(errors));
  return cfg;
}

/// 64-bit FNV-1a, used for config content hashes.
inline std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

inline std::string hex64(std::uint64_t h) {
  static constexpr char digits[] = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i) {
    s[static_cast<std::size_t>(i)] = digits[h & 0xf];
    h >>= 4;
  }
  return s;
}

inline std::string config_hash(const SystemConfig& c) { return hex64(fnv1a(to_config_text(c))); }

}  // namespace ioncavity
