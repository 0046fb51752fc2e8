#pragma once

#include <cmath>
#include <limits>
#include <optional>
#include <ostream>
#include <string_view>
#include <vector>

#include "cms/hydraulics.hpp"
#include "cms/scc.hpp"

namespace cms {

// Bracket width. Tangency residuals scale with f' ~ rho^2, so a 1e-10 width is too coarse.
inline constexpr double kBisectionTol = 1e-14;
inline constexpr int kBisectionMaxIter = 200;
// Intervals narrower than this are treated as a single point.
inline constexpr double kDegenerateWidth = 1e-12;

// y = intercept + slope * x
struct Line {
  double intercept = 0.0;
  double slope = 0.0;
  double operator()(double x) const { return intercept + slope * x; }
  static Line through(double x0, double y0, double slope) { return {y0 - slope * x0, slope}; }
};

// One row coeff_q * q + coeff_aux * aux <= rhs, with aux the sigma or theta
// variable of the same link and timestep.
struct LinearCut {
  double coeff_q = 0.0;
  double coeff_aux = 0.0;
  double rhs = 0.0;
};

enum class EnvelopeCase {
  SigmoidTangentKink,       // u_L < w <= u_U
  SigmoidSecant,            // u_L < u_U <= w
  SigmoidEndpointTangents,  // u_L = w <= u_U
  SigmoidPoint,             // u_L = w = u_U
  HwBothTangents,           // q_L < zbar < 0 < zlow < q_U
  HwUpperSecant,            // zbar <= q_L < 0 < zlow < q_U
  HwLowerSecant,            // q_L < zbar < 0 < q_U <= zlow
  HwPositive,               // 0 <= q_L < q_U
  HwNegative,               // q_L < q_U <= 0
  HwPinned,                 // q_L = q_U
  HwMonotoneBox,            // no tangent on either side; only reachable inside the smoothing band
};

inline std::string_view to_string(EnvelopeCase c) {
  switch (c) {
    case EnvelopeCase::SigmoidTangentKink: return "sigmoid_tangent_kink";
    case EnvelopeCase::SigmoidSecant: return "sigmoid_secant";
    case EnvelopeCase::SigmoidEndpointTangents: return "sigmoid_endpoint_tangents";
    case EnvelopeCase::SigmoidPoint: return "sigmoid_point";
    case EnvelopeCase::HwBothTangents: return "hw_both_tangents";
    case EnvelopeCase::HwUpperSecant: return "hw_upper_secant";
    case EnvelopeCase::HwLowerSecant: return "hw_lower_secant";
    case EnvelopeCase::HwPositive: return "hw_positive";
    case EnvelopeCase::HwNegative: return "hw_negative";
    case EnvelopeCase::HwPinned: return "hw_pinned";
    case EnvelopeCase::HwMonotoneBox: return "hw_monotone_box";
  }
  return "unknown";
}

namespace detail {

inline double intersect(const Line& a, const Line& b) {
  if (a.slope == b.slope) return std::numeric_limits<double>::quiet_NaN();
  return (b.intercept - a.intercept) / (a.slope - b.slope);
}

// Bisection on [x0, x1] with f(x0) * f(x1) <= 0. Returns the final bracket.
template <class F>
std::pair<double, double> bisect(F&& f, double x0, double x1) {
  double f0 = f(x0);
  for (int it = 0; it < kBisectionMaxIter && std::abs(x1 - x0) >= kBisectionTol; ++it) {
    const double x2 = 0.5 * (x0 + x1);
    const double f2 = f(x2);
    if (f2 * f0 <= 0.0) {
      x1 = x2;
    } else {
      x0 = x2;
      f0 = f2;
    }
  }
  return {x0, x1};
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Sigmoid psi+(u) = 1 / (1 + exp(-rho (u - u_min))), convex left of u_min and
// concave right of it. The envelope is a concave upper bound on [u_L, u_U].

struct SigmoidEnvelope {
  EnvelopeCase tag = EnvelopeCase::SigmoidPoint;
  double u_lo = 0.0, u_hi = 0.0;
  double w = std::numeric_limits<double>::quiet_NaN();  // tangent point
  double k = std::numeric_limits<double>::quiet_NaN();  // kink between the two cuts
  std::vector<Line> upper;                              // sigma <= min over lines

  double eval(double u) const {
    double v = std::numeric_limits<double>::infinity();
    for (const auto& l : upper) v = std::min(v, l(u));
    return v;
  }
};

// Point w > u_min where the line from (u_L, psi(u_L)) touches psi. Returns u_L
// when the whole interval is concave and nullopt when the tangent point lies
// beyond u_U. The returned point sits on the side where the tangent at w stays
// above psi(u_L).
inline std::optional<double> bisect_sigmoid_tangent(double u_lo, double u_hi, double u_min, double rho) {
  if (u_lo >= u_min) return u_lo;
  if (u_hi <= u_min) return std::nullopt;
  auto f = [&](double x) {
    return psi_plus_prime(x, u_min, rho) * (x - u_lo) + psi_plus(u_lo, u_min, rho) - psi_plus(x, u_min, rho);
  };
  if (f(u_hi) > 0.0) return std::nullopt;
  return detail::bisect(f, u_min, u_hi).second;
}

inline SigmoidEnvelope sigmoid_envelope_plus(double u_lo, double u_hi, double u_min, double rho) {
  if (!(u_lo <= u_hi)) throw ValidationError("sigmoid envelope needs u_L <= u_U");
  auto psi = [&](double u) { return psi_plus(u, u_min, rho); };
  auto dpsi = [&](double u) { return psi_plus_prime(u, u_min, rho); };
  SigmoidEnvelope env;
  env.u_lo = u_lo;
  env.u_hi = u_hi;
  if (u_hi - u_lo <= kDegenerateWidth) {
    // psi is increasing, so the right end bounds the whole sliver.
    env.tag = EnvelopeCase::SigmoidPoint;
    env.w = u_lo;
    env.upper = {Line{psi(u_hi), 0.0}};
    return env;
  }
  const auto w = bisect_sigmoid_tangent(u_lo, u_hi, u_min, rho);
  if (!w) {
    env.tag = EnvelopeCase::SigmoidSecant;
    env.upper = {Line::through(u_lo, psi(u_lo), (psi(u_hi) - psi(u_lo)) / (u_hi - u_lo))};
    return env;
  }
  env.w = *w;
  env.tag = *w == u_lo ? EnvelopeCase::SigmoidEndpointTangents : EnvelopeCase::SigmoidTangentKink;
  const Line left = Line::through(*w, psi(*w), dpsi(*w));
  const Line right = Line::through(u_hi, psi(u_hi), dpsi(u_hi));
  env.upper = {left, right};
  env.k = detail::intersect(left, right);
  return env;
}

// psi-(u) = psi+(-u): build on the mirrored interval and reflect.
inline SigmoidEnvelope sigmoid_envelope_minus(double u_lo, double u_hi, double u_min, double rho) {
  SigmoidEnvelope env = sigmoid_envelope_plus(-u_hi, -u_lo, u_min, rho);
  env.u_lo = u_lo;
  env.u_hi = u_hi;
  env.w = -env.w;
  env.k = -env.k;
  for (auto& l : env.upper) l.slope = -l.slope;
  return env;
}

// Rows sigma - slope/A * q <= intercept, for q in flow units.
inline std::vector<LinearCut> sigmoid_cuts(const SigmoidEnvelope& env, double area) {
  std::vector<LinearCut> cuts;
  for (const auto& l : env.upper) cuts.push_back({-l.slope / area, 1.0, l.intercept});
  return cuts;
}

// ---------------------------------------------------------------------------
// Head loss phi(q), odd, concave for q < 0 and convex for q > 0.

struct HwEnvelope {
  EnvelopeCase tag = EnvelopeCase::HwPinned;
  double q_lo = 0.0, q_hi = 0.0;
  double z_upper = std::numeric_limits<double>::quiet_NaN();  // zbar < 0
  double z_lower = std::numeric_limits<double>::quiet_NaN();  // zlow > 0
  double k_upper = std::numeric_limits<double>::quiet_NaN();
  double k_lower = std::numeric_limits<double>::quiet_NaN();
  std::vector<Line> upper;  // theta <= min over lines
  std::vector<Line> lower;  // theta >= max over lines

  double upper_at(double q) const {
    double v = std::numeric_limits<double>::infinity();
    for (const auto& l : upper) v = std::min(v, l(q));
    return v;
  }
  double lower_at(double q) const {
    double v = -std::numeric_limits<double>::infinity();
    for (const auto& l : lower) v = std::max(v, l(q));
    return v;
  }
};

enum class HwSide { Upper, Lower };

// Lower side: point zlow > 0 where the line from (q_L, phi(q_L)) touches phi.
// Upper side: point zbar < 0 where the line from (q_U, phi(q_U)) touches phi.
// nullopt when the sign test on [0, far end] fails, i.e. the tangent point lies
// outside the interval. The returned point is the bracket end nearer zero, whose
// smaller slope keeps the line on the sound side.
inline std::optional<double> bisect_hw_tangent(double r, double n, double q_lo, double q_hi, HwSide side,
                                               double q_eps = kDefaultQEps) {
  const double y1 = side == HwSide::Lower ? q_lo : q_hi;
  const double y2 = side == HwSide::Lower ? q_hi : q_lo;
  auto f = [&](double x) { return phi_prime(x, r, n, q_eps) * (x - y1) + phi(y1, r, n, q_eps) - phi(x, r, n, q_eps); };
  const double f0 = f(0.0), f2 = f(y2);
  if (f2 * f0 > 0.0 || y2 == 0.0) return std::nullopt;
  const auto [a, b] = detail::bisect(f, 0.0, y2);
  return std::abs(a) < std::abs(b) ? a : b;
}

inline HwEnvelope hw_envelope(double r, double n, double q_lo, double q_hi, double q_eps = kDefaultQEps) {
  if (!(q_lo <= q_hi)) throw ValidationError("head-loss envelope needs q_L <= q_U");
  auto f = [&](double q) { return phi(q, r, n, q_eps); };
  auto df = [&](double q) { return phi_prime(q, r, n, q_eps); };
  HwEnvelope env;
  env.q_lo = q_lo;
  env.q_hi = q_hi;
  auto tangent = [&](double x) { return Line::through(x, f(x), df(x)); };
  auto secant = [&] { return Line::through(q_lo, f(q_lo), (f(q_hi) - f(q_lo)) / (q_hi - q_lo)); };

  if (q_hi - q_lo <= kDegenerateWidth) {
    env.tag = EnvelopeCase::HwPinned;
    env.upper = {Line{f(q_hi), 0.0}};
    env.lower = {Line{f(q_lo), 0.0}};
    return env;
  }
  if (q_lo >= 0.0) {
    env.tag = EnvelopeCase::HwPositive;
    env.upper = {secant()};
    env.lower = {tangent(q_lo), tangent(q_hi)};
    env.k_lower = detail::intersect(env.lower[0], env.lower[1]);
    return env;
  }
  if (q_hi <= 0.0) {
    env.tag = EnvelopeCase::HwNegative;
    env.upper = {tangent(q_lo), tangent(q_hi)};
    env.lower = {secant()};
    env.k_upper = detail::intersect(env.upper[0], env.upper[1]);
    return env;
  }

  const auto zl = bisect_hw_tangent(r, n, q_lo, q_hi, HwSide::Lower, q_eps);
  const auto zu = bisect_hw_tangent(r, n, q_lo, q_hi, HwSide::Upper, q_eps);
  if (zl) {
    env.z_lower = *zl;
    env.lower = {Line::through(q_lo, f(q_lo), df(*zl)), tangent(q_hi)};
    env.k_lower = detail::intersect(env.lower[0], env.lower[1]);
  } else {
    env.lower = {secant()};
  }
  if (zu) {
    env.z_upper = *zu;
    env.upper = {tangent(q_lo), Line::through(q_hi, f(q_hi), df(*zu))};
    env.k_upper = detail::intersect(env.upper[0], env.upper[1]);
  } else {
    env.upper = {secant()};
  }
  if (zl && zu) {
    env.tag = EnvelopeCase::HwBothTangents;
  } else if (zl) {
    env.tag = EnvelopeCase::HwUpperSecant;
  } else if (zu) {
    env.tag = EnvelopeCase::HwLowerSecant;
  } else {
    // Both secants would cross phi; fall back to the monotone box.
    env.tag = EnvelopeCase::HwMonotoneBox;
    env.upper = {Line{f(q_hi), 0.0}};
    env.lower = {Line{f(q_lo), 0.0}};
  }
  return env;
}

inline HwEnvelope hw_envelope(const HeadLossParams& p, int j, double q_lo, double q_hi) {
  return hw_envelope(p.r[j], p.n_exp[j], q_lo, q_hi, p.q_eps);
}

// The two-line shapes are not nested: a narrower interval can move the tangent
// points apart and widen the gap. Lines built on a containing interval remain
// valid, so keeping them makes tightening monotone.
inline HwEnvelope refine(HwEnvelope env, const HwEnvelope& previous) {
  if (previous.q_lo > env.q_lo || previous.q_hi < env.q_hi)
    throw ValidationError("refine needs the previous interval to contain the new one");
  env.upper.insert(env.upper.end(), previous.upper.begin(), previous.upper.end());
  env.lower.insert(env.lower.end(), previous.lower.begin(), previous.lower.end());
  return env;
}

inline SigmoidEnvelope refine(SigmoidEnvelope env, const SigmoidEnvelope& previous) {
  if (previous.u_lo > env.u_lo || previous.u_hi < env.u_hi)
    throw ValidationError("refine needs the previous interval to contain the new one");
  env.upper.insert(env.upper.end(), previous.upper.begin(), previous.upper.end());
  return env;
}

// Upper lines give -slope q + theta <= intercept; lower lines give
// slope q - theta <= -intercept.
inline std::vector<LinearCut> hw_cuts(const HwEnvelope& env) {
  std::vector<LinearCut> cuts;
  for (const auto& l : env.upper) cuts.push_back({-l.slope, 1.0, l.intercept});
  for (const auto& l : env.lower) cuts.push_back({l.slope, -1.0, -l.intercept});
  return cuts;
}

// Debug dump for plotting, one row per line.
inline void write_envelope_csv_header(std::ostream& out) { out << "link_id,t,function,side,case,slope,intercept,lo,hi\n"; }

inline void write_envelope_csv(std::ostream& out, std::string_view link_id, int t, std::string_view function,
                               const SigmoidEnvelope& env) {
  for (const auto& l : env.upper)
    out << link_id << ',' << t << ',' << function << ",upper," << to_string(env.tag) << ',' << l.slope << ','
        << l.intercept << ',' << env.u_lo << ',' << env.u_hi << '\n';
}

inline void write_envelope_csv(std::ostream& out, std::string_view link_id, int t, const HwEnvelope& env) {
  for (const auto& [side, lines] : {std::pair{"upper", &env.upper}, std::pair{"lower", &env.lower}})
    for (const auto& l : *lines)
      out << link_id << ',' << t << ",headloss," << side << ',' << to_string(env.tag) << ',' << l.slope << ','
          << l.intercept << ',' << env.q_lo << ',' << env.q_hi << '\n';
}

}  // namespace cms
