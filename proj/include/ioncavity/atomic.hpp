#pragma once

// Angular-momentum coupling, the Ca+ S1/2-P1/2-D3/2 level scheme and Zeeman shifts.

#include <cmath>
#include <cstdlib>
#include <string>
#include <vector>

#include "ioncavity/error.hpp"
#include "ioncavity/units.hpp"

namespace ioncavity {

/// Exact half-integer, stored as twice its value.
class HalfInt {
 public:
  constexpr HalfInt() = default;
  static constexpr HalfInt twice(int t) { return HalfInt(t); }
  static constexpr HalfInt whole(int n) { return HalfInt(2 * n); }
  /// n/2
  static constexpr HalfInt half(int n) { return HalfInt(n); }

  constexpr int twice_value() const { return twice_; }
  constexpr double value() const { return 0.5 * twice_; }
  constexpr bool is_integer() const { return twice_ % 2 == 0; }

  constexpr HalfInt operator-() const { return HalfInt(-twice_); }
  constexpr HalfInt operator+(HalfInt o) const { return HalfInt(twice_ + o.twice_); }
  constexpr HalfInt operator-(HalfInt o) const { return HalfInt(twice_ - o.twice_); }
  constexpr auto operator<=>(const HalfInt&) const = default;

 private:
  constexpr explicit HalfInt(int t) : twice_(t) {}
  int twice_ = 0;
};

namespace detail {

inline double log_factorial(int n) { return std::lgamma(static_cast<double>(n) + 1.0); }

inline void check_pair(HalfInt j, HalfInt m, const char* name) {
  if (j.twice_value() < 0)
    throw DomainError(std::string("wigner_3j: negative angular momentum ") + name);
  if (std::abs(m.twice_value()) > j.twice_value())
    throw DomainError(std::string("wigner_3j: |m| > j for ") + name);
  if ((j.twice_value() - m.twice_value()) % 2 != 0)
    throw DomainError(std::string("wigner_3j: j and m of different half-integer class for ") + name);
}

}  // namespace detail

/// Wigner 3-j symbol (j1 j2 j3; m1 m2 m3) from the Racah closed-form sum.
inline double wigner_3j(HalfInt j1, HalfInt j2, HalfInt j3, HalfInt m1, HalfInt m2, HalfInt m3) {
  detail::check_pair(j1, m1, "(j1,m1)");
  detail::check_pair(j2, m2, "(j2,m2)");
  detail::check_pair(j3, m3, "(j3,m3)");
  if ((m1 + m2 + m3).twice_value() != 0) return 0.0;
  const int J1 = j1.twice_value(), J2 = j2.twice_value(), J3 = j3.twice_value();
  const int M1 = m1.twice_value(), M2 = m2.twice_value(), M3 = m3.twice_value();
  if ((J1 + J2 + J3) % 2 != 0) return 0.0;
  if (J3 > J1 + J2 || J3 < std::abs(J1 - J2)) return 0.0;

  // All quantities below are integers once halved.
  const int a = (J1 + J2 - J3) / 2, b = (J1 - J2 + J3) / 2, c = (-J1 + J2 + J3) / 2;
  const int s = (J1 + J2 + J3) / 2;
  const double log_delta = detail::log_factorial(a) + detail::log_factorial(b) +
                           detail::log_factorial(c) - detail::log_factorial(s + 1);
  const double log_norm =
      detail::log_factorial((J1 + M1) / 2) + detail::log_factorial((J1 - M1) / 2) +
      detail::log_factorial((J2 + M2) / 2) + detail::log_factorial((J2 - M2) / 2) +
      detail::log_factorial((J3 + M3) / 2) + detail::log_factorial((J3 - M3) / 2);

  const int t1 = (J3 - J2 + M1) / 2;  // j3 - j2 + m1
  const int t2 = (J3 - J1 - M2) / 2;  // j3 - j1 - m2
  const int t3 = a;                   // j1 + j2 - j3
  const int t4 = (J1 - M1) / 2;       // j1 - m1
  const int t5 = (J2 + M2) / 2;       // j2 + m2
  const int k_min = std::max({0, -t1, -t2});
  const int k_max = std::min({t3, t4, t5});

  double sum = 0.0;
  for (int k = k_min; k <= k_max; ++k) {
    const double log_den = detail::log_factorial(k) + detail::log_factorial(t1 + k) +
                           detail::log_factorial(t2 + k) + detail::log_factorial(t3 - k) +
                           detail::log_factorial(t4 - k) + detail::log_factorial(t5 - k);
    const double term = std::exp(0.5 * (log_delta + log_norm) - log_den);
    sum += (k % 2 == 0) ? term : -term;
  }
  const int phase = (J1 - J2 - M3) / 2;  // j1 - j2 - m3
  return (phase % 2 == 0) ? sum : -sum;
}

/// C(jU mU, 1 q; jV mV) = (-1)^(jU-1+mV) sqrt(2jV+1) (jU 1 jV; mU q -mV).
inline double clebsch_gordan(HalfInt jU, HalfInt mU, int q, HalfInt jV, HalfInt mV) {
  if (q < -1 || q > 1) throw DomainError("clebsch_gordan: q must be -1, 0 or +1");
  if ((mU + HalfInt::whole(q)) != mV) return 0.0;
  const double w = wigner_3j(jU, HalfInt::whole(1), jV, mU, HalfInt::whole(q), -mV);
  if (w == 0.0) return 0.0;
  const int phase2 = jU.twice_value() - 2 + mV.twice_value();
  if (phase2 % 2 != 0) throw DomainError("clebsch_gordan: non-integer phase exponent");
  const double sign = ((phase2 / 2) % 2 == 0) ? 1.0 : -1.0;
  return sign * std::sqrt(jV.twice_value() + 1.0) * w;
}

enum class Manifold { S, P, D };

inline const char* to_string(Manifold m) {
  switch (m) {
    case Manifold::S: return "S";
    case Manifold::P: return "P";
    case Manifold::D: return "D";
  }
  return "?";
}

struct ManifoldSpec {
  Manifold label;
  HalfInt j;
  double lande_g;
};

struct Sublevel {
  Manifold manifold;
  HalfInt m;
  bool operator==(const Sublevel&) const = default;
};

/// Atomic basis. Sublevels are enumerated by manifold (in declaration order) and then by
/// ascending m_j.
class LevelScheme {
 public:
  explicit LevelScheme(std::vector<ManifoldSpec> manifolds) : manifolds_(std::move(manifolds)) {
    for (const auto& mf : manifolds_)
      for (int t = -mf.j.twice_value(); t <= mf.j.twice_value(); t += 2)
        sublevels_.push_back({mf.label, HalfInt::twice(t)});
  }

  /// S1/2, P1/2, D3/2 with the given Landé factors.
  static LevelScheme calcium(double g_s = 2.002, double g_p = 2.0 / 3.0, double g_d = 0.8) {
    return LevelScheme({{Manifold::S, HalfInt::half(1), g_s},
                        {Manifold::P, HalfInt::half(1), g_p},
                        {Manifold::D, HalfInt::half(3), g_d}});
  }

  const std::vector<ManifoldSpec>& manifolds() const { return manifolds_; }
  const std::vector<Sublevel>& sublevels() const { return sublevels_; }
  std::size_t size() const { return sublevels_.size(); }

  const ManifoldSpec& manifold(Manifold m) const {
    for (const auto& mf : manifolds_)
      if (mf.label == m) return mf;
    throw DomainError(std::string("level scheme has no manifold ") + to_string(m));
  }

  std::size_t index_of(Sublevel s) const {
    for (std::size_t i = 0; i < sublevels_.size(); ++i)
      if (sublevels_[i] == s) return i;
    throw DomainError(std::string("no sublevel ") + to_string(s.manifold) + " m=" +
                      std::to_string(s.m.value()));
  }

  /// Indices of the sublevels of one manifold, ascending m.
  std::vector<std::size_t> indices(Manifold m) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < sublevels_.size(); ++i)
      if (sublevels_[i].manifold == m) out.push_back(i);
    return out;
  }

 private:
  std::vector<ManifoldSpec> manifolds_;
  std::vector<Sublevel> sublevels_;
};

struct MagneticEnvironment {
  double field_gauss = 0.9;
  double bohr_magneton_mhz_per_gauss = 1.3996;
};

/// B g_L mu_B m_j as an angular frequency.
inline Frequency zeeman_shift(Sublevel level, const LevelScheme& scheme, const MagneticEnvironment& env) {
  const auto& mf = scheme.manifold(level.manifold);
  if (std::abs(level.m.twice_value()) > mf.j.twice_value() ||
      (mf.j.twice_value() - level.m.twice_value()) % 2 != 0)
    throw DomainError("zeeman_shift: m_j outside manifold");
  return Frequency::mhz(env.field_gauss * mf.lande_g * env.bohr_magneton_mhz_per_gauss *
                        level.m.value());
}

}  // namespace ioncavity
