#include <gtest/gtest.h>

#include "cms/control.hpp"
#include "fixtures.hpp"

using namespace cms;
using fixtures::J;
using fixtures::R;

namespace {

struct Ctx {
  NetworkModel net;
  HeadLossParams hp;
  SccParams sp;
  BoundSet b;
};

Ctx context(NetworkModel net, int n_f = 0) {
  Ctx c{std::move(net)};
  c.hp = headloss_params(c.net);
  c.sp = make_scc_params(c.net);
  c.b = make_bounds(c.net);
  apply_forest_bounds(c.net, forest_core(c.net), n_f, c.b);
  return c;
}

// Two routes from one source to one demand node: A1-A2 through a low node K,
// or the long pipe B. Only one route can exceed 0.2 m/s, so throttling A
// (B flushed, 62% of length) and throttling B (A flushed, 37%) are distinct
// local optima.
NetworkModel two_routes() {
  NetworkModel net;
  net.nodes.push_back({"J", 0.0, std::nullopt});
  net.nodes.push_back({"K", -30.0, std::nullopt});
  fixtures::add_sources(net, 1);
  net.links.push_back(make_pipe("A1", R(0), J(1), 300.0, 0.2, 120.0));
  net.links.push_back(make_pipe("A2", J(1), J(0), 300.0, 0.2, 120.0));
  net.links.push_back(make_pipe("B", R(0), J(0), 1000.0, 0.2, 120.0));
  fixtures::set_snapshots(net, {{0.3 * net.links[0].area, 0.0}}, {{50.0}});
  return net;
}

// Source, DBV pipe, J1, pipe, J2 at 5 m elevation.
NetworkModel two_pipe_line() {
  NetworkModel net;
  net.nodes.push_back({"J1", 0.0, std::nullopt});
  net.nodes.push_back({"J2", 5.0, std::nullopt});
  fixtures::add_sources(net, 1);
  net.links.push_back(make_pipe("P1", R(0), J(0), 500.0, 0.15, 120.0));
  net.links.push_back(make_pipe("P2", J(0), J(1), 500.0, 0.15, 120.0));
  fixtures::set_snapshots(net, {{0.002, 0.003}}, {{50.0}});
  return net;
}

Eigen::VectorXd vec(std::initializer_list<double> v) {
  Eigen::VectorXd x(static_cast<Eigen::Index>(v.size()));
  int i = 0;
  for (double a : v) x[i++] = a;
  return x;
}

}  // namespace

TEST(Sfscp, FlushingValveOnSinglePipeReachesFullCapacity) {
  const auto c = context(fixtures::single_pipe(), 1);
  const auto P = make_control_problem(c.net, c.hp, c.sp, c.b, 0, {}, {0}, 0);
  const auto r = sfscp_solve(P, vec({0.0}));
  // (5 + 25) L/s over 0.0707 m^2 is 0.424 m/s
  EXPECT_NEAR(r.x[0], 0.025, 1e-9);
  EXPECT_NEAR(r.eval.state.q[0] / c.net.links[0].area, 0.030 / c.net.links[0].area, 1e-6);
  EXPECT_GE(r.eval.f, 0.99);
  for (std::size_t k = 1; k < r.f_history.size(); ++k) EXPECT_GE(r.f_history[k], r.f_history[k - 1]);
  EXPECT_NEAR(r.eval.f, scc_smooth_flows({r.eval.state.q}, c.net, c.sp), 1e-10);
}

TEST(Sfscp, StationaryStartIsReturnedUnchanged) {
  const auto c = context(fixtures::single_pipe(), 1);
  const auto P = make_control_problem(c.net, c.hp, c.sp, c.b, 0, {}, {0}, 0);
  const auto r = sfscp_solve(P, vec({0.025}));
  EXPECT_EQ(r.iterations, 1);
  EXPECT_EQ(r.status, SfscpStatus::Stationary);
  EXPECT_EQ(r.x[0], 0.025);
  EXPECT_THROW(sfscp_solve(make_control_problem(c.net, c.hp, c.sp, c.b, 0, {0}, {}, 1), vec({0.0})), InfeasibleError);
}

TEST(Sfscp, ObjectiveNeverDecreasesAndIteratesStayFeasible) {
  const auto c = context(fixtures::two_loop(), 1);
  ControlOptions opt;
  opt.trace = true;
  for (unsigned pattern = 0; pattern < 4; ++pattern) {
    const auto P = make_control_problem(c.net, c.hp, c.sp, c.b, 1, {6, 7}, {2}, pattern);
    for (int s = 0; s < 3; ++s) {
      const auto x0 = start_point(P, s + 1, nullptr, 100 + s);
      const auto rest = restore_feasibility(P, x0, opt);
      if (!rest) continue;
      const auto r = sfscp_solve(P, rest->x, opt);
      for (std::size_t k = 1; k < r.f_history.size(); ++k) EXPECT_GE(r.f_history[k], r.f_history[k - 1]);
      for (const auto& row : r.trace) {
        EXPECT_LE(row.mass_residual, opt.hydraulics.tol_mass);
        EXPECT_LE(row.energy_residual, opt.hydraulics.tol_energy);
      }
      EXPECT_TRUE(evaluate_control(P, r.x, opt).feasible);
    }
  }
}

TEST(Sensitivity, MatchesFiniteDifferencesThroughTheHydraulicSolve) {
  const auto c = context(fixtures::two_loop(), 2);
  const auto P = make_control_problem(c.net, c.hp, c.sp, c.b, 0, {5, 6}, {1, 3}, 0);
  ControlOptions opt;
  opt.hydraulics.tol_mass = 1e-13;
  opt.hydraulics.tol_energy = 1e-11;
  const Eigen::VectorXd x = vec({0.5, 0.3, 0.8, 0.4, 0.004, 0.006});
  const auto ev = evaluate_control(P, x, opt);
  ASSERT_TRUE(ev.solved);
  const auto sens = sensitivities(P, ev.state);
  const auto grad = control_gradient(P, ev.state, sens);
  for (int i = 0; i < P.size(); ++i) {
    const double h = i < P.n_eta() ? 1e-4 : 1e-7;
    Eigen::VectorXd xp = x, xm = x;
    xp[i] += h;
    xm[i] -= h;
    const auto ep = evaluate_control(P, xp, opt), em = evaluate_control(P, xm, opt);
    const Eigen::VectorXd fd_q = (ep.state.q - em.state.q) / (2 * h);
    const Eigen::VectorXd fd_h = (ep.state.h - em.state.h) / (2 * h);
    EXPECT_LE((sens.dq.col(i) - fd_q).norm(), 1e-3 * fd_q.norm()) << "control " << i;
    EXPECT_LE((sens.dh.col(i) - fd_h).norm(), 1e-3 * std::max(fd_h.norm(), 1e-9)) << "control " << i;
    const double fd_f = (ep.f - em.f) / (2 * h);
    EXPECT_NEAR(grad[i], fd_f, 1e-3 * std::abs(fd_f) + 1e-9) << "control " << i;
  }
}

TEST(Restoration, FeasibleSeedIsKept) {
  const auto c = context(two_pipe_line());
  const auto P = make_control_problem(c.net, c.hp, c.sp, c.b, 0, {0}, {}, 0);
  const auto r = restore_feasibility(P, vec({3.0}));
  ASSERT_TRUE(r.has_value());
  EXPECT_EQ(r->x[0], 3.0);
  EXPECT_EQ(r->distance, 0.0);
  EXPECT_EQ(r->mu, 0.0);
}

TEST(Restoration, ReducesValveLossToTheMinimumPressure) {
  const auto c = context(two_pipe_line());
  const auto P = make_control_problem(c.net, c.hp, c.sp, c.b, 0, {0}, {}, 0);
  ControlOptions opt;
  // Bisection oracle: the largest loss that keeps J2 at 15 m above its 5 m elevation.
  auto head_j2 = [&](double eta) { return evaluate_control(P, vec({eta}), opt).state.h[1]; };
  ASSERT_LT(head_j2(40.0), 20.0);
  double lo = 0.0, hi = 40.0;
  for (int i = 0; i < 100; ++i) (head_j2(0.5 * (lo + hi)) >= 20.0 ? lo : hi) = 0.5 * (lo + hi);
  const auto r = restore_feasibility(P, vec({40.0}), opt);
  ASSERT_TRUE(r.has_value());
  EXPECT_TRUE(r->eval.feasible);
  EXPECT_LE(r->x[0], lo + 1e-9);
  EXPECT_GE(r->x[0], lo - 2e-3);  // aims 1 mm inside the limit
  EXPECT_GE(r->eval.state.h[1], 20.0);
}

TEST(Restoration, ImpossibleDirectionIsInfeasible) {
  // The only supply pipe cannot carry flow away from the demand node.
  const auto c = context(two_pipe_line());
  const auto P = make_control_problem(c.net, c.hp, c.sp, c.b, 0, {0}, {}, 1);
  EXPECT_FALSE(restore_feasibility(P, vec({0.0})).has_value());
  EXPECT_THROW(multi_start(P, nullptr), InfeasibleError);
}

TEST(MultiStart, GridScanShowsTwoLocalOptima) {
  const auto c = context(two_routes());
  const auto P = make_control_problem(c.net, c.hp, c.sp, c.b, 0, {0, 2}, {}, 0);
  ControlOptions opt;
  // Best feasible f on each side of the diagonal eta_A = eta_B.
  double best_a = -1.0, best_b = -1.0;
  for (double ea = 0.0; ea <= 35.0; ea += 0.5)
    for (double eb = 0.0; eb <= 35.0; eb += 0.05) {
      const auto ev = evaluate_control(P, vec({ea, eb}), opt);
      if (!ev.feasible) continue;
      (ea > eb ? best_a : best_b) = std::max(ea > eb ? best_a : best_b, ev.f);
    }
  EXPECT_NEAR(best_a, 0.62, 0.01);  // A throttled, B flushed
  EXPECT_NEAR(best_b, 0.37, 0.01);  // B throttled, A flushed
}

TEST(MultiStart, RandomStartsEscapeAnAdversarialSeed) {
  const auto c = context(two_routes());
  const auto P = make_control_problem(c.net, c.hp, c.sp, c.b, 0, {0, 2}, {}, 0);
  Eigen::VectorXd seed = Eigen::VectorXd::Zero(3);
  seed[2] = 2.0;  // throttles B, so A carries the flow
  ControlOptions one;
  one.starts = 1;
  EXPECT_NEAR(multi_start(P, &seed, one).run.eval.f, 0.3725, 0.005);
  int found = 0;
  for (std::uint64_t rep = 0; rep < 100; ++rep) {
    ControlOptions five;
    five.seed = rep;
    five.threads = 1;
    found += multi_start(P, &seed, five).run.eval.f > 0.6;
  }
  EXPECT_GE(found, 95);
}

TEST(Directions, PatternCountsAndStartAccounting) {
  const auto c = context(fixtures::two_loop(), 1);
  ControlOptions opt;
  opt.starts = 2;
  const auto none = enumerate_dbv_directions(c.net, c.hp, c.sp, c.b, {}, {2}, nullptr, opt);
  EXPECT_EQ(none.patterns_per_t, 1);
  EXPECT_EQ(none.runs, c.net.n_t() * 1 * 2);
  const auto two = enumerate_dbv_directions(c.net, c.hp, c.sp, c.b, {6, 7}, {2}, nullptr, opt);
  EXPECT_EQ(two.patterns_per_t, 4);
  EXPECT_EQ(two.runs, c.net.n_t() * 4 * 2);
  EXPECT_NEAR(two.f, scc_smooth(two.states, c.net, c.sp), 1e-10);
  EXPECT_LE(two.f, 1.0);
  for (int t = 0; t < c.net.n_t(); ++t) {
    EXPECT_GT(two.alpha[t][2], 0.0);
    EXPECT_EQ(two.eta[t][3], 0.0);  // no valve on a plain pipe
  }
  const auto js = to_json(two, c.net);
  EXPECT_EQ(js.at("timesteps").size(), static_cast<std::size_t>(c.net.n_t()));
  std::ostringstream csv;
  write_trace_csv(csv, two);
  EXPECT_EQ(csv.str().rfind("t,k,f,beta,mass_residual,energy_residual\n", 0), 0u);

  ControlOptions tight = opt;
  tight.max_dbv = 1;
  EXPECT_THROW(enumerate_dbv_directions(c.net, c.hp, c.sp, c.b, {6, 7}, {}, nullptr, tight), ValidationError);
}

TEST(Directions, SymmetricLinkTiesGoToTheFirstPattern) {
  // Mirror-image halves: the cross link carries no flow in either direction.
  NetworkModel net;
  fixtures::add_junctions(net, 2);
  fixtures::add_sources(net, 1);
  net.links.push_back(make_pipe("L", R(0), J(0), 400.0, 0.15, 110.0));
  net.links.push_back(make_pipe("M", R(0), J(1), 400.0, 0.15, 110.0));
  net.links.push_back(make_pipe("X", J(0), J(1), 300.0, 0.1, 110.0));
  fixtures::set_snapshots(net, {{0.004, 0.004}}, {{50.0}});
  const auto c = context(net);
  ControlOptions opt;
  opt.starts = 3;
  const auto s = enumerate_dbv_directions(c.net, c.hp, c.sp, c.b, {2}, {}, nullptr, opt);
  EXPECT_EQ(s.pattern[0], 0u);
  EXPECT_EQ(s.start[0], 0);
}

TEST(Directions, ThreadCountDoesNotChangeTheResult) {
  const auto c = context(fixtures::two_loop(), 1);
  ControlOptions a, b;
  a.threads = 1;
  b.threads = 3;
  a.seed = b.seed = 42;
  const auto sa = enumerate_dbv_directions(c.net, c.hp, c.sp, c.b, {6}, {2}, nullptr, a);
  const auto sb = enumerate_dbv_directions(c.net, c.hp, c.sp, c.b, {6}, {2}, nullptr, b);
  EXPECT_EQ(sa.f, sb.f);
  EXPECT_EQ(sa.pattern, sb.pattern);
  EXPECT_EQ(sa.start, sb.start);
}
