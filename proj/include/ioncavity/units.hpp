#pragma once

#include <compare>
#include <numbers>

namespace ioncavity {

inline constexpr double two_pi = 2.0 * std::numbers::pi;

/// A rate or detuning. Constructed and reported in ordinary frequency (MHz), used by the
/// solvers as an angular frequency (rad/us, i.e. 2π·MHz). The MHz value is what is stored,
/// so config text round-trips exactly.
class Frequency {
 public:
  constexpr Frequency() = default;

  static constexpr Frequency mhz(double f) { return Frequency(f); }
  static constexpr Frequency angular(double w) { return Frequency(w / two_pi); }

  constexpr double in_mhz() const { return mhz_; }
  constexpr double angular() const { return two_pi * mhz_; }

  constexpr Frequency operator-() const { return Frequency(-mhz_); }
  constexpr Frequency operator+(Frequency o) const { return Frequency(mhz_ + o.mhz_); }
  constexpr Frequency operator-(Frequency o) const { return Frequency(mhz_ - o.mhz_); }
  constexpr Frequency operator*(double s) const { return Frequency(mhz_ * s); }
  constexpr Frequency operator/(double s) const { return Frequency(mhz_ / s); }
  constexpr auto operator<=>(const Frequency&) const = default;

 private:
  constexpr explicit Frequency(double f) : mhz_(f) {}
  double mhz_ = 0.0;
};

constexpr Frequency operator*(double s, Frequency f) { return f * s; }

}  // namespace ioncavity
