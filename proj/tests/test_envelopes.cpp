#include <gtest/gtest.h>

#include <random>
#include <sstream>

#include "cms/envelopes.hpp"

using namespace cms;

namespace {

constexpr double kRho = 50.0, kUmin = 0.2;
// Tangent roots evaluated independently at 30 digits.
constexpr double kW0to1 = 0.248737970521939389843;  // psi+ from u_L = 0
constexpr double kZlowSym = 0.398216893893825770069;  // r = 1, n = 1.852, q_L = -1

double psi(double u) { return psi_plus(u, kUmin, kRho); }

// First sign change of f on a uniform grid of step h over [a, b].
template <class F>
double grid_root(F f, double a, double b, double h) {
  double prev = f(a);
  for (double x = a + h; x <= b; x += h) {
    const double cur = f(x);
    if (prev * cur <= 0.0) return x - 0.5 * h;
    prev = cur;
  }
  return std::numeric_limits<double>::quiet_NaN();
}

void expect_sigmoid_sound(const SigmoidEnvelope& env, bool minus, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(env.u_lo, env.u_hi);
  for (int i = 0; i < 1000; ++i) {
    const double x = env.u_hi > env.u_lo ? u(rng) : env.u_lo;
    const double f = minus ? psi_minus(x, kUmin, kRho) : psi(x);
    ASSERT_LE(f, env.eval(x) + 1e-9) << to_string(env.tag) << " u=" << x;
  }
}

void expect_hw_sound(const HwEnvelope& env, double r, double n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(env.q_lo, env.q_hi);
  for (int i = 0; i < 1000; ++i) {
    const double q = env.q_hi > env.q_lo ? u(rng) : env.q_lo;
    const double f = phi(q, r, n);
    ASSERT_LE(env.lower_at(q), f + 1e-9) << to_string(env.tag) << " q=" << q;
    ASSERT_LE(f, env.upper_at(q) + 1e-9) << to_string(env.tag) << " q=" << q;
  }
}

}  // namespace

TEST(SigmoidTangent, ConcaveIntervalReturnsLowerBound) {
  EXPECT_EQ(*bisect_sigmoid_tangent(0.25, 1.0, kUmin, kRho), 0.25);
}

TEST(SigmoidTangent, MatchesGridScanAndReference) {
  const auto w = bisect_sigmoid_tangent(0.0, 1.0, kUmin, kRho);
  ASSERT_TRUE(w);
  auto f = [](double x) { return psi_plus_prime(x, kUmin, kRho) * x + psi(0.0) - psi(x); };
  EXPECT_NEAR(*w, grid_root(f, kUmin, 1.0, 1e-6), 1e-6);
  EXPECT_NEAR(*w, kW0to1, 1e-9);
}

TEST(SigmoidTangent, ResidualOnRandomBrackets) {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> lo(-1.0, 0.19), hi(0.21, 2.0);
  int found = 0;
  for (int i = 0; i < 200; ++i) {
    const double a = lo(rng), b = hi(rng);
    const auto w = bisect_sigmoid_tangent(a, b, kUmin, kRho);
    if (!w) continue;
    ++found;
    EXPECT_LE(std::abs(psi_plus_prime(*w, kUmin, kRho) * (*w - a) + psi(a) - psi(*w)), 1e-9);
  }
  EXPECT_GT(found, 150);
}

TEST(SigmoidEnvelope, AllFourCases) {
  std::mt19937_64 rng(7);
  const auto kink = sigmoid_envelope_plus(0.0, 1.0, kUmin, kRho);
  EXPECT_EQ(kink.tag, EnvelopeCase::SigmoidTangentKink);
  EXPECT_EQ(kink.upper.size(), 2u);
  EXPECT_GE(kink.k, 0.0);
  EXPECT_LE(kink.k, 1.0);
  expect_sigmoid_sound(kink, false, rng);

  const auto sec = sigmoid_envelope_plus(0.0, 0.22, kUmin, kRho);
  EXPECT_EQ(sec.tag, EnvelopeCase::SigmoidSecant);
  ASSERT_EQ(sec.upper.size(), 1u);
  EXPECT_NEAR(sec.upper[0](0.0), psi(0.0), 1e-15);
  EXPECT_NEAR(sec.upper[0](0.22), psi(0.22), 1e-15);
  expect_sigmoid_sound(sec, false, rng);

  const auto ends = sigmoid_envelope_plus(0.25, 1.0, kUmin, kRho);
  EXPECT_EQ(ends.tag, EnvelopeCase::SigmoidEndpointTangents);
  EXPECT_EQ(ends.w, 0.25);
  expect_sigmoid_sound(ends, false, rng);

  const auto pt = sigmoid_envelope_plus(0.3, 0.3, kUmin, kRho);
  EXPECT_EQ(pt.tag, EnvelopeCase::SigmoidPoint);
  ASSERT_EQ(pt.upper.size(), 1u);
  EXPECT_EQ(pt.upper[0].slope, 0.0);
  EXPECT_EQ(pt.upper[0].intercept, psi(0.3));

  EXPECT_EQ(sigmoid_envelope_plus(-0.5, 0.1, kUmin, kRho).tag, EnvelopeCase::SigmoidSecant);
  EXPECT_THROW(sigmoid_envelope_plus(1.0, 0.0, kUmin, kRho), ValidationError);
}

TEST(SigmoidEnvelope, MirroredNegativeSide) {
  std::mt19937_64 rng(8);
  const auto env = sigmoid_envelope_minus(-1.0, 0.0, kUmin, kRho);
  EXPECT_EQ(env.tag, EnvelopeCase::SigmoidTangentKink);
  EXPECT_NEAR(env.w, -kW0to1, 1e-9);
  expect_sigmoid_sound(env, true, rng);
  const auto plus = sigmoid_envelope_plus(0.0, 1.0, kUmin, kRho);
  for (double u : {-1.0, -0.7, -0.3, -0.1, 0.0}) EXPECT_NEAR(env.eval(u), plus.eval(-u), 1e-15);
}

TEST(SigmoidEnvelope, SoundAndTightOnRandomIntervals) {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  for (int i = 0; i < 300; ++i) {
    double a = u(rng), b = u(rng);
    if (a > b) std::swap(a, b);
    for (bool minus : {false, true}) {
      const auto env = minus ? sigmoid_envelope_minus(a, b, kUmin, kRho) : sigmoid_envelope_plus(a, b, kUmin, kRho);
      auto f = [&](double x) { return minus ? psi_minus(x, kUmin, kRho) : psi(x); };
      EXPECT_NEAR(env.eval(a), f(a), 1e-8);
      EXPECT_NEAR(env.eval(b), f(b), 1e-8);
      if (i % 10 == 0) expect_sigmoid_sound(env, minus, rng);
    }
  }
}

TEST(SigmoidEnvelope, FlowCutsScaleByArea) {
  const double area = 0.0314;
  const auto env = sigmoid_envelope_plus(0.0, 1.0, kUmin, kRho);
  const auto cuts = sigmoid_cuts(env, area);
  ASSERT_EQ(cuts.size(), 2u);
  const double q = 0.4 * area;
  for (std::size_t c = 0; c < cuts.size(); ++c) {
    // sigma at the line value makes the row tight
    const double sigma = env.upper[c](0.4);
    EXPECT_NEAR(cuts[c].coeff_q * q + cuts[c].coeff_aux * sigma, cuts[c].rhs, 1e-12);
  }
}

TEST(HwTangent, MatchesGridScanAndSymmetry) {
  const auto zl = bisect_hw_tangent(1.0, 1.852, -1.0, 1.0, HwSide::Lower);
  const auto zu = bisect_hw_tangent(1.0, 1.852, -1.0, 1.0, HwSide::Upper);
  ASSERT_TRUE(zl && zu);
  auto f = [](double x) { return phi_prime(x, 1.0, 1.852) * (x + 1.0) + phi(-1.0, 1.0, 1.852) - phi(x, 1.0, 1.852); };
  EXPECT_NEAR(*zl, grid_root(f, 1e-3, 1.0, 1e-6), 1e-6);
  EXPECT_NEAR(*zl, kZlowSym, 1e-9);
  EXPECT_NEAR(*zu, -*zl, 1e-9);
}

TEST(HwTangent, SignTestRejectsOutOfRangeTangent) {
  EXPECT_FALSE(bisect_hw_tangent(1.0, 1.852, -0.001, 1.0, HwSide::Upper));
  EXPECT_TRUE(bisect_hw_tangent(1.0, 1.852, -0.001, 1.0, HwSide::Lower));
  // Oracle: the upper tangent from q_U lies left of q_L exactly when f(q_L) and f(0) share a sign.
  auto f = [](double x) { return phi_prime(x, 1.0, 1.852) * (x - 1.0) + phi(1.0, 1.0, 1.852) - phi(x, 1.0, 1.852); };
  EXPECT_GT(f(-0.001) * f(0.0), 0.0);
}

TEST(HwEnvelope, AllFiveCasesArePolyhedralSandwiches) {
  std::mt19937_64 rng(10);
  struct Case {
    double lo, hi;
    EnvelopeCase tag;
  };
  for (const auto& c : {Case{-1.0, 1.0, EnvelopeCase::HwBothTangents}, Case{-0.001, 1.0, EnvelopeCase::HwUpperSecant},
                        Case{-1.0, 0.001, EnvelopeCase::HwLowerSecant}, Case{0.1, 1.0, EnvelopeCase::HwPositive},
                        Case{0.0, 1.0, EnvelopeCase::HwPositive}, Case{-1.0, -0.1, EnvelopeCase::HwNegative}}) {
    const auto env = hw_envelope(1.0, 1.852, c.lo, c.hi);
    EXPECT_EQ(env.tag, c.tag) << c.lo << ' ' << c.hi;
    expect_hw_sound(env, 1.0, 1.852, rng);
    for (double k : {env.k_lower, env.k_upper})
      if (!std::isnan(k)) {
        EXPECT_GE(k, c.lo - 1e-12);
        EXPECT_LE(k, c.hi + 1e-12);
      }
  }
  const auto pos = hw_envelope(1.0, 1.852, 0.1, 1.0);
  EXPECT_EQ(pos.upper.size(), 1u);
  EXPECT_EQ(pos.lower.size(), 2u);
}

TEST(HwEnvelope, PinnedInterval) {
  const auto env = hw_envelope(300.0, 1.852, 0.02, 0.02);
  EXPECT_EQ(env.tag, EnvelopeCase::HwPinned);
  EXPECT_EQ(env.upper_at(0.02), phi(0.02, 300.0, 1.852));
  EXPECT_EQ(env.lower_at(0.02), phi(0.02, 300.0, 1.852));
  const auto cuts = hw_cuts(env);
  ASSERT_EQ(cuts.size(), 2u);
  // Both rows together force theta = phi(q).
  EXPECT_EQ(cuts[0].rhs, -cuts[1].rhs);
}

TEST(HwEnvelope, SoundAndTightOnRandomIntervals) {
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  for (int i = 0; i < 400; ++i) {
    const double r = std::pow(10.0, 1.0 + 5.0 * u01(rng));
    const double n = i % 4 == 0 ? 2.0 : 1.852;
    const double scale = std::pow(10.0, -3.0 + 2.0 * u01(rng));
    double a = scale * (2.0 * u01(rng) - 1.0), b = scale * (2.0 * u01(rng) - 1.0);
    if (a > b) std::swap(a, b);
    const auto env = hw_envelope(r, n, a, b);
    const double tol = 1e-9 * std::max(1.0, std::abs(phi(b, r, n)) + std::abs(phi(a, r, n)));
    EXPECT_NEAR(env.upper_at(a), phi(a, r, n), tol) << to_string(env.tag);
    EXPECT_NEAR(env.upper_at(b), phi(b, r, n), tol) << to_string(env.tag);
    EXPECT_NEAR(env.lower_at(a), phi(a, r, n), tol) << to_string(env.tag);
    EXPECT_NEAR(env.lower_at(b), phi(b, r, n), tol) << to_string(env.tag);
    std::uniform_real_distribution<double> q(a, b);
    for (int s = 0; s < 200; ++s) {
      const double x = q(rng);
      ASSERT_LE(env.lower_at(x), phi(x, r, n) + tol) << to_string(env.tag);
      ASSERT_GE(env.upper_at(x), phi(x, r, n) - tol) << to_string(env.tag);
    }
  }
}

TEST(HwEnvelope, BareShapeCanWidenOnANestedInterval) {
  // The inner lower tangents sit further apart than the outer ones.
  const auto outer = hw_envelope(500.0, 1.852, -0.16139, 0.237667);
  const auto inner = hw_envelope(500.0, 1.852, -0.117156, 0.234901);
  ASSERT_EQ(inner.tag, EnvelopeCase::HwBothTangents);
  auto max_gap = [](const HwEnvelope& e, double a, double b) {
    double g = 0.0;
    for (int s = 0; s <= 4000; ++s) {
      const double x = a + (b - a) * s / 4000.0;
      g = std::max(g, e.upper_at(x) - e.lower_at(x));
    }
    return g;
  };
  EXPECT_GT(max_gap(inner, inner.q_lo, inner.q_hi), max_gap(outer, outer.q_lo, outer.q_hi));
  EXPECT_LE(max_gap(refine(inner, outer), inner.q_lo, inner.q_hi), max_gap(outer, outer.q_lo, outer.q_hi));
}

TEST(HwEnvelope, RefinedNestedIntervalsNeverWidenTheGap) {
  std::mt19937_64 rng(13);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  for (int i = 0; i < 100; ++i) {
    double a = -1.0 + 2.0 * u01(rng), b = -1.0 + 2.0 * u01(rng);
    if (a > b) std::swap(a, b);
    const auto outer = hw_envelope(500.0, 1.852, a, b);
    const double a2 = a + 0.3 * (b - a) * u01(rng), b2 = b - 0.3 * (b - a) * u01(rng);
    const auto inner = refine(hw_envelope(500.0, 1.852, a2, b2), outer);
    double gap_outer = 0.0, gap_inner = 0.0;
    for (int s = 0; s <= 2000; ++s) {
      const double x = a + (b - a) * s / 2000.0;
      gap_outer = std::max(gap_outer, outer.upper_at(x) - outer.lower_at(x));
      if (x >= a2 && x <= b2) gap_inner = std::max(gap_inner, inner.upper_at(x) - inner.lower_at(x));
    }
    EXPECT_LE(gap_inner, gap_outer + 1e-9);
    EXPECT_NEAR(inner.upper_at(a2), phi(a2, 500.0, 1.852), 1e-9 * (1.0 + std::abs(phi(a2, 500.0, 1.852))));
    EXPECT_NEAR(inner.lower_at(b2), phi(b2, 500.0, 1.852), 1e-9 * (1.0 + std::abs(phi(b2, 500.0, 1.852))));
  }
  EXPECT_THROW(refine(hw_envelope(1.0, 1.852, -1.0, 1.0), hw_envelope(1.0, 1.852, -0.5, 1.0)), ValidationError);
}

TEST(SigmoidEnvelope, RefinedNestedIntervalsNeverLoosen) {
  std::mt19937_64 rng(14);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  for (int i = 0; i < 100; ++i) {
    double a = -1.0 + 2.0 * u01(rng), b = -1.0 + 2.0 * u01(rng);
    if (a > b) std::swap(a, b);
    const auto outer = sigmoid_envelope_plus(a, b, kUmin, kRho);
    const double a2 = a + 0.3 * (b - a) * u01(rng), b2 = b - 0.3 * (b - a) * u01(rng);
    const auto inner = refine(sigmoid_envelope_plus(a2, b2, kUmin, kRho), outer);
    for (int s = 0; s <= 500; ++s) {
      const double x = a2 + (b2 - a2) * s / 500.0;
      EXPECT_LE(inner.eval(x), outer.eval(x));
      EXPECT_GE(inner.eval(x), psi(x) - 1e-9);
    }
  }
}

TEST(EnvelopeCsv, OneRowPerLine) {
  std::ostringstream out;
  write_envelope_csv_header(out);
  write_envelope_csv(out, "P1", 0, hw_envelope(1.0, 1.852, -1.0, 1.0));
  write_envelope_csv(out, "P1", 0, "psi_plus", sigmoid_envelope_plus(0.0, 1.0, kUmin, kRho));
  const std::string s = out.str();
  EXPECT_EQ(std::count(s.begin(), s.end(), '\n'), 1 + 4 + 2);
  EXPECT_NE(s.find("hw_both_tangents"), std::string::npos);
}
