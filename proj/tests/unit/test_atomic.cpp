#include <cmath>
#include <map>
#include <tuple>

#include <Eigen/Dense>
#include <gtest/gtest.h>

#include "ioncavity/atomic.hpp"

using namespace ioncavity;

namespace {

// Independent Clebsch-Gordan oracle: build |J, J> in the product basis from the J² eigenproblem
// (Condon-Shortley phase: <j1 j1; j2 J-j1|J J> > 0), then lower with J-.
class CouplingOracle {
 public:
  CouplingOracle(int tj1, int tj2) : tj1_(tj1), tj2_(tj2) {
    const int n1 = tj1 + 1, n2 = tj2 + 1, n = n1 * n2;
    Eigen::MatrixXd jz = Eigen::MatrixXd::Zero(n, n), jm = Eigen::MatrixXd::Zero(n, n);
    const auto lower = [](int tj, int tm) {  // <m-1|j-|m>
      const double j = 0.5 * tj, m = 0.5 * tm;
      return std::sqrt(j * (j + 1) - m * (m - 1));
    };
    for (int a = 0; a < n1; ++a)
      for (int b = 0; b < n2; ++b) {
        const int i = a * n2 + b;
        const int tm1 = tj1 - 2 * a, tm2 = tj2 - 2 * b;  // index 0 holds m = +j
        jz(i, i) = 0.5 * (tm1 + tm2);
        if (a + 1 < n1) jm((a + 1) * n2 + b, i) += lower(tj1, tm1);
        if (b + 1 < n2) jm(a * n2 + b + 1, i) += lower(tj2, tm2);
      }
    const Eigen::MatrixXd jp = jm.transpose();
    const Eigen::MatrixXd j2 = jm * jp + jz * jz + jz;  // J² = J-J+ + Jz² + Jz

    for (int tJ = std::abs(tj1 - tj2); tJ <= tj1 + tj2; tJ += 2) {
      std::vector<int> idx;
      for (int i = 0; i < n; ++i)
        if (std::abs(2.0 * jz(i, i) - tJ) < 1e-9) idx.push_back(i);
      Eigen::MatrixXd sub(idx.size(), idx.size());
      for (std::size_t r = 0; r < idx.size(); ++r)
        for (std::size_t c = 0; c < idx.size(); ++c) sub(r, c) = j2(idx[r], idx[c]);
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sub);
      const double target = 0.5 * tJ * (0.5 * tJ + 1);
      int k = 0;
      for (int q = 0; q < es.eigenvalues().size(); ++q)
        if (std::abs(es.eigenvalues()(q) - target) < std::abs(es.eigenvalues()(k) - target)) k = q;
      Eigen::VectorXd v = Eigen::VectorXd::Zero(n);
      for (std::size_t r = 0; r < idx.size(); ++r) v(idx[r]) = es.eigenvectors()(static_cast<Eigen::Index>(r), k);
      // Component with m1 = j1 is the one with a = 0.
      for (int b = 0; b < n2; ++b)
        if (std::abs(v(b)) > 1e-9) {
          if (v(b) < 0) v = -v;
          break;
        }
      for (int tM = tJ; tM >= -tJ; tM -= 2) {
        for (int a = 0; a < n1; ++a)
          for (int b = 0; b < n2; ++b) table_[{tJ, tM, tj1 - 2 * a, tj2 - 2 * b}] = v(a * n2 + b);
        if (tM > -tJ) v = jm * v / lower(tJ, tM);
      }
    }
  }

  /// <j1 m1; j2 m2 | J M>, arguments doubled.
  double operator()(int tm1, int tm2, int tJ, int tM) const {
    const auto it = table_.find({tJ, tM, tm1, tm2});
    return it == table_.end() ? 0.0 : it->second;
  }

 private:
  int tj1_, tj2_;
  std::map<std::tuple<int, int, int, int>, double> table_;
};

HalfInt H(int twice) { return HalfInt::twice(twice); }

}  // namespace

TEST(Atomic, ThreeJSelectionRule) {
  EXPECT_EQ(wigner_3j(H(2), H(2), H(2), H(2), H(0), H(0)), 0.0);
  EXPECT_EQ(wigner_3j(H(1), H(2), H(1), H(1), H(2), H(1)), 0.0);
}

TEST(Atomic, ThreeJSimpleValue) {
  EXPECT_NEAR(wigner_3j(H(2), H(2), H(0), H(2), H(-2), H(0)), 1.0 / std::sqrt(3.0), 1e-14);
}

TEST(Atomic, ThreeJMatchesAngularMomentumOracle) {
  int checked = 0;
  for (int tj1 = 0; tj1 <= 4; ++tj1)
    for (int tj2 = 0; tj2 <= 4; ++tj2) {
      const CouplingOracle cg(tj1, tj2);
      for (int tj3 = std::abs(tj1 - tj2); tj3 <= tj1 + tj2; tj3 += 2)
        for (int tm1 = -tj1; tm1 <= tj1; tm1 += 2)
          for (int tm2 = -tj2; tm2 <= tj2; tm2 += 2) {
            const int tm3 = -tm1 - tm2;
            if (std::abs(tm3) > tj3) continue;
            const int phase2 = tj1 - tj2 - tm3;
            const double sign = (phase2 / 2) % 2 == 0 ? 1.0 : -1.0;
            const double expected = sign / std::sqrt(tj3 + 1.0) * cg(tm1, tm2, tj3, -tm3);
            EXPECT_NEAR(wigner_3j(H(tj1), H(tj2), H(tj3), H(tm1), H(tm2), H(tm3)), expected, 1e-12)
                << tj1 << " " << tj2 << " " << tj3 << " " << tm1 << " " << tm2;
            ++checked;
          }
    }
  EXPECT_GT(checked, 100);
}

TEST(Atomic, ClebschGordanMatchesOracle) {
  for (int tjU : {1, 3})
    for (int tjV : {1, 3}) {
      const CouplingOracle cg(tjU, 2);
      for (int tmU = -tjU; tmU <= tjU; tmU += 2)
        for (int q = -1; q <= 1; ++q)
          for (int tmV = -tjV; tmV <= tjV; tmV += 2)
            EXPECT_NEAR(clebsch_gordan(H(tjU), H(tmU), q, H(tjV), H(tmV)), cg(tmU, 2 * q, tjV, tmV), 1e-12);
    }
}

TEST(Atomic, CavityTransitionCoefficients) {
  EXPECT_NEAR(std::abs(clebsch_gordan(H(3), H(-3), +1, H(1), H(-1))), 1.0 / std::sqrt(2.0), 1e-14);
  EXPECT_NEAR(std::abs(clebsch_gordan(H(3), H(1), -1, H(1), H(-1))), 1.0 / std::sqrt(6.0), 1e-14);
  EXPECT_EQ(clebsch_gordan(H(3), H(1), +1, H(1), H(1)), 0.0);
  EXPECT_THROW(clebsch_gordan(H(3), H(1), 2, H(1), H(1)), DomainError);
}

TEST(Atomic, CalciumLevelScheme) {
  const auto s = LevelScheme::calcium();
  ASSERT_EQ(s.size(), 8u);
  EXPECT_EQ(s.index_of({Manifold::S, H(-1)}), 0u);
  EXPECT_EQ(s.index_of({Manifold::P, H(1)}), 3u);
  EXPECT_EQ(s.index_of({Manifold::D, H(-3)}), 4u);
  EXPECT_EQ(s.indices(Manifold::D).size(), 4u);
}

TEST(Atomic, ZeemanShifts) {
  const auto s = LevelScheme::calcium();
  MagneticEnvironment env;
  env.field_gauss = 0.0;
  for (const auto& l : s.sublevels()) EXPECT_EQ(zeeman_shift(l, s, env).angular(), 0.0);
  env.field_gauss = 0.9;
  EXPECT_NEAR(zeeman_shift({Manifold::S, H(1)}, s, env).in_mhz(), 0.9 * 2.002 * 1.3996 * 0.5, 1e-12);
  EXPECT_NEAR(zeeman_shift({Manifold::S, H(1)}, s, env).in_mhz(), 1.261, 5e-4);
  for (const auto& l : s.sublevels())
    EXPECT_DOUBLE_EQ(zeeman_shift(l, s, env).angular(), -zeeman_shift({l.manifold, -l.m}, s, env).angular());
  EXPECT_THROW(zeeman_shift({Manifold::S, H(3)}, s, env), DomainError);
}
