#pragma once

// Hamiltonian terms and collapse operators of the ion + two-mode cavity system.
//
// Basis order is (atom, sigma_plus mode, sigma_minus mode). All operators are in angular
// frequency units (rad/us) with hbar = 1.

#include <cmath>
#include <string>
#include <vector>

#include "ioncavity/atomic.hpp"
#include "ioncavity/config.hpp"
#include "ioncavity/linalg.hpp"

namespace ioncavity {

inline const std::string kAtomLabel = "atom";
inline const std::string kPlusLabel = "sigma_plus";
inline const std::string kMinusLabel = "sigma_minus";

/// Composite space and the elementary operators on it.
class IonCavitySpace {
 public:
  IonCavitySpace(LevelScheme scheme, std::size_t fock_cutoff)
      : scheme_(std::move(scheme)),
        cutoff_(fock_cutoff),
        space_({{kAtomLabel, scheme_.size()}, {kPlusLabel, fock_cutoff + 1}, {kMinusLabel, fock_cutoff + 1}}),
        a_plus_(embed(annihilation_operator(fock_cutoff, kPlusLabel), kPlusLabel, space_)),
        a_minus_(embed(annihilation_operator(fock_cutoff, kMinusLabel), kMinusLabel, space_)) {}

  explicit IonCavitySpace(const SystemConfig& cfg) : IonCavitySpace(cfg.level_scheme(), cfg.fock_cutoff) {}

  const HilbertSpace& space() const { return space_; }
  const LevelScheme& scheme() const { return scheme_; }
  std::size_t fock_cutoff() const { return cutoff_; }
  const OperatorMatrix& a_plus() const { return a_plus_; }
  const OperatorMatrix& a_minus() const { return a_minus_; }

  /// |to><from| on the atom, identity on both modes.
  OperatorMatrix atomic(std::size_t to, std::size_t from, Complex value = 1.0) const {
    const auto atom = HilbertSpace::single(kAtomLabel, scheme_.size());
    return embed(OperatorMatrix::outer(atom, to, from, value), kAtomLabel, space_);
  }
  OperatorMatrix atomic(Sublevel to, Sublevel from, Complex value = 1.0) const {
    return atomic(scheme_.index_of(to), scheme_.index_of(from), value);
  }

  /// Projector onto a whole manifold.
  OperatorMatrix manifold_projector(Manifold m) const {
    auto out = OperatorMatrix::zero(space_);
    for (auto i : scheme_.indices(m)) out = out + atomic(i, i);
    return out;
  }

  std::size_t index(Sublevel s, std::size_t n_plus, std::size_t n_minus) const {
    return space_.flat_index({scheme_.index_of(s), n_plus, n_minus});
  }

  /// Σ|P><P| + a+†a+ + a-†a-.
  OperatorMatrix excitation_number() const {
    return manifold_projector(Manifold::P) + dagger(a_plus_) * a_plus_ + dagger(a_minus_) * a_minus_;
  }

 private:
  LevelScheme scheme_;
  std::size_t cutoff_;
  HilbertSpace space_;
  OperatorMatrix a_plus_;
  OperatorMatrix a_minus_;
};

inline OperatorMatrix hermitian_part_plus_hc(const OperatorMatrix& x) { return x + dagger(x); }

/// Δp Σ|S><S| + Δc Σ|D><D|.
inline OperatorMatrix build_H0_raman(const SystemConfig& cfg, const IonCavitySpace& sys) {
  return cfg.delta_p.angular() * sys.manifold_projector(Manifold::S) +
         cfg.delta_c.angular() * sys.manifold_projector(Manifold::D);
}
inline OperatorMatrix build_H0_raman(const SystemConfig& cfg) { return build_H0_raman(cfg, IonCavitySpace(cfg)); }

/// B Σ g_L μ_B m_j |L,m_j><L,m_j|.
inline OperatorMatrix build_HB(const SystemConfig& cfg, const IonCavitySpace& sys) {
  auto h = OperatorMatrix::zero(sys.space());
  const auto& scheme = sys.scheme();
  for (std::size_t i = 0; i < scheme.size(); ++i) {
    const double w = zeeman_shift(scheme.sublevels()[i], scheme, cfg.env).angular();
    if (w != 0.0) h = h + sys.atomic(i, i, w);
  }
  return h;
}
inline OperatorMatrix build_HB(const SystemConfig& cfg) { return build_HB(cfg, IonCavitySpace(cfg)); }

/// Pump coupling with f(t) = 1.
inline OperatorMatrix build_H_pump_envelope(const SystemConfig& cfg, const IonCavitySpace& sys) {
  const auto& scheme = sys.scheme();
  const auto jS = scheme.manifold(Manifold::S).j;
  const auto jP = scheme.manifold(Manifold::P).j;
  auto up = OperatorMatrix::zero(sys.space());
  for (int q = -1; q <= 1; ++q) {
    const Complex eps = cfg.eps(q);
    if (eps == Complex(0.0)) continue;
    for (auto s : scheme.indices(Manifold::S))
      for (auto p : scheme.indices(Manifold::P)) {
        const double c = clebsch_gordan(jS, scheme.sublevels()[s].m, q, jP, scheme.sublevels()[p].m);
        if (c != 0.0) up = up + sys.atomic(p, s, 0.5 * cfg.omega_397.angular() * eps * c);
      }
  }
  return hermitian_part_plus_hc(up);
}

inline OperatorMatrix build_H_pump(const SystemConfig& cfg, double t_us, const IonCavitySpace& sys) {
  const double f = cfg.pulse.value(t_us);
  if (f == 0.0) return OperatorMatrix::zero(sys.space());
  return f * build_H_pump_envelope(cfg, sys);
}
inline OperatorMatrix build_H_pump(const SystemConfig& cfg, double t_us) {
  return build_H_pump(cfg, t_us, IonCavitySpace(cfg));
}

/// g0 Σ [C(+1) a+ |P><D| + C(-1) a- |P><D| + H.c.].
inline OperatorMatrix build_H_ioncav(const SystemConfig& cfg, const IonCavitySpace& sys) {
  const auto& scheme = sys.scheme();
  const auto jD = scheme.manifold(Manifold::D).j;
  const auto jP = scheme.manifold(Manifold::P).j;
  auto absorb = OperatorMatrix::zero(sys.space());
  for (auto d : scheme.indices(Manifold::D))
    for (auto p : scheme.indices(Manifold::P)) {
      const auto mD = scheme.sublevels()[d].m;
      const auto mP = scheme.sublevels()[p].m;
      const double cp = clebsch_gordan(jD, mD, +1, jP, mP);
      const double cm = clebsch_gordan(jD, mD, -1, jP, mP);
      if (cp != 0.0) absorb = absorb + sys.a_plus() * sys.atomic(p, d, cfg.g0.angular() * cp);
      if (cm != 0.0) absorb = absorb + sys.a_minus() * sys.atomic(p, d, cfg.g0.angular() * cm);
    }
  return hermitian_part_plus_hc(absorb);
}
inline OperatorMatrix build_H_ioncav(const SystemConfig& cfg) { return build_H_ioncav(cfg, IonCavitySpace(cfg)); }

/// Δ866 Σ|D><D| - Δ866 (a+†a+ + a-†a-), cavity on atomic resonance.
inline OperatorMatrix build_H0_transmission(const SystemConfig& cfg, const IonCavitySpace& sys) {
  const double d = cfg.delta_866.angular();
  return d * sys.manifold_projector(Manifold::D) -
         d * (dagger(sys.a_plus()) * sys.a_plus() + dagger(sys.a_minus()) * sys.a_minus());
}
inline OperatorMatrix build_H0_transmission(const SystemConfig& cfg) {
  return build_H0_transmission(cfg, IonCavitySpace(cfg));
}

/// E (a+ + a+†).
inline OperatorMatrix build_H_drive(const SystemConfig& cfg, const IonCavitySpace& sys) {
  return cfg.drive.angular() * hermitian_part_plus_hc(sys.a_plus());
}
inline OperatorMatrix build_H_drive(const SystemConfig& cfg) { return build_H_drive(cfg, IonCavitySpace(cfg)); }

/// Jump operators O_k for the dissipator Σ_k 2 O ρ O† - O†O ρ - ρ O†O. Rates are folded in as
/// sqrt(rate); zero-rate channels and vanishing Clebsch-Gordan factors are omitted.
inline std::vector<OperatorMatrix> build_collapse_operators(const SystemConfig& cfg, const IonCavitySpace& sys) {
  std::vector<OperatorMatrix> ops;
  const double k = cfg.kappa.angular();
  if (k > 0.0) {
    ops.push_back(std::sqrt(k) * sys.a_plus());
    ops.push_back(std::sqrt(k) * sys.a_minus());
  }
  const auto& scheme = sys.scheme();
  const auto jP = scheme.manifold(Manifold::P).j;
  const auto add_decay = [&](Manifold lower, double rate) {
    if (!(rate > 0.0)) return;
    const auto jL = scheme.manifold(lower).j;
    for (auto l : scheme.indices(lower))
      for (auto p : scheme.indices(Manifold::P))
        for (int q = -1; q <= 1; ++q) {
          const double c = clebsch_gordan(jL, scheme.sublevels()[l].m, q, jP, scheme.sublevels()[p].m);
          if (c != 0.0) ops.push_back(sys.atomic(l, p, std::sqrt(rate) * c));
        }
  };
  add_decay(Manifold::S, cfg.gamma_s.angular());
  add_decay(Manifold::D, cfg.gamma_d.angular());
  return ops;
}
inline std::vector<OperatorMatrix> build_collapse_operators(const SystemConfig& cfg) {
  return build_collapse_operators(cfg, IonCavitySpace(cfg));
}

/// Empty two-mode cavity (no ion) for the transmission reference.
struct CavityOnlyModel {
  HilbertSpace space;
  OperatorMatrix a_plus;
  OperatorMatrix a_minus;
  OperatorMatrix hamiltonian;
  std::vector<OperatorMatrix> collapse_ops;
};

inline CavityOnlyModel build_cavity_only(const SystemConfig& cfg) {
  HilbertSpace space({{kPlusLabel, cfg.fock_cutoff + 1}, {kMinusLabel, cfg.fock_cutoff + 1}});
  auto ap = embed(annihilation_operator(cfg.fock_cutoff, kPlusLabel), kPlusLabel, space);
  auto am = embed(annihilation_operator(cfg.fock_cutoff, kMinusLabel), kMinusLabel, space);
  const double d = cfg.delta_866.angular();
  auto h = -d * (dagger(ap) * ap + dagger(am) * am) + cfg.drive.angular() * (ap + dagger(ap));
  std::vector<OperatorMatrix> c;
  const double k = cfg.kappa.angular();
  c.push_back(std::sqrt(k) * ap);
  c.push_back(std::sqrt(k) * am);
  return {space, ap, am, h, c};
}

}  // namespace ioncavity
