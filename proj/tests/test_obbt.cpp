#include <gtest/gtest.h>

#include "cms/obbt.hpp"
#include "fixtures.hpp"

using namespace cms;

namespace {

struct Case {
  NetworkModel net;
  HeadLossParams hp;
  SccParams sp;
  ForestCoreDecomposition fc;
  BoundSet bounds;
  DesignConfig design;
};

Case make_case(NetworkModel net, int n_v, int n_f) {
  Case c{std::move(net)};
  c.hp = headloss_params(c.net);
  c.sp = make_scc_params(c.net);
  c.fc = forest_core(c.net);
  c.bounds = make_bounds(c.net);
  apply_forest_bounds(c.net, c.fc, n_f, c.bounds);
  c.design = default_design(c.net, n_v, n_f);
  return c;
}

double bound_of(const Case& c, const BoundSet& b) {
  const auto sol = lp::solve_lp(build_lp(c.net, c.hp, c.sp, b, c.design).lp);
  EXPECT_EQ(sol.status, lp::Status::Optimal);
  return lp_bound(sol);
}

}  // namespace

TEST(Obbt, TreeHasNothingToTighten) {
  auto c = make_case(fixtures::star(3), 1, 1);
  const auto before = c.bounds;
  const auto rep = tighten(c.net, c.hp, c.sp, c.bounds, c.design, c.fc);
  EXPECT_EQ(rep.total_solves(), 0);
  EXPECT_EQ(rep.iterations, 0);
  for (int j = 0; j < c.net.n_p(); ++j) {
    EXPECT_EQ(c.bounds.q_lo[0][j], before.q_lo[0][j]);
    EXPECT_EQ(c.bounds.q_hi[0][j], before.q_hi[0][j]);
  }
}

TEST(Obbt, SingleLoopContainsSimulatedFlows) {
  auto c = make_case(fixtures::single_loop(), 1, 0);
  const auto start = std::chrono::steady_clock::now();
  const auto rep = tighten(c.net, c.hp, c.sp, c.bounds, c.design, c.fc);
  EXPECT_LT(std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count(), 5.0);
  ASSERT_GE(rep.iterations, 1);
  for (int n : rep.lp_solves) EXPECT_EQ(n, 2 * 1 * 3);
  EXPECT_LT(rep.diam.back(), rep.diam.front());
  const auto sim = simulate_uncontrolled(c.net, c.hp);
  for (int j = 0; j < c.net.n_p(); ++j) {
    EXPECT_LE(c.bounds.q_lo[0][j], sim[0].q[j]);
    EXPECT_GE(c.bounds.q_hi[0][j], sim[0].q[j]);
  }
}

TEST(Obbt, BoundsShrinkMonotonicallyAndContainControlledFlows) {
  auto c = make_case(fixtures::two_loop(), 1, 1);
  const double before = bound_of(c, c.bounds);
  auto b = c.bounds;
  ObbtOptions opt;
  opt.k_max = 4;
  opt.eps_tol = 1.0;  // run every iteration
  const auto rep = tighten(c.net, c.hp, c.sp, b, c.design, c.fc, opt);
  EXPECT_EQ(rep.iterations, 4);
  const int ncore = static_cast<int>(c.fc.core_links.size());
  for (int n : rep.lp_solves) EXPECT_EQ(n, 2 * c.net.n_t() * ncore);
  for (std::size_t k = 1; k < rep.diam.size(); ++k) EXPECT_LE(rep.diam[k], rep.diam[k - 1]);
  // each history box contains the next one
  for (std::size_t k = 0; k < b.q_history.size(); ++k) {
    const auto& nlo = k + 1 < b.q_history.size() ? b.q_history[k + 1].first : b.q_lo;
    const auto& nhi = k + 1 < b.q_history.size() ? b.q_history[k + 1].second : b.q_hi;
    for (int t = 0; t < c.net.n_t(); ++t)
      for (int j = 0; j < c.net.n_p(); ++j) {
        EXPECT_GE(nlo[t][j], b.q_history[k].first[t][j]);
        EXPECT_LE(nhi[t][j], b.q_history[k].second[t][j]);
      }
  }
  EXPECT_LE(bound_of(c, b), before + 1e-9);

  // A throttled loop link with a flushing valve stays inside the tightened box.
  const int dbv = 6;
  std::vector<Eigen::VectorXd> eta(c.net.n_t(), Eigen::VectorXd::Zero(c.net.n_p()));
  std::vector<Eigen::VectorXd> alpha(c.net.n_t(), Eigen::VectorXd::Zero(c.net.n_n()));
  const auto base = simulate_uncontrolled(c.net, c.hp);
  for (int t = 0; t < c.net.n_t(); ++t) {
    eta[t][dbv] = base[t].q[dbv] >= 0.0 ? 3.0 : -3.0;
    alpha[t][2] = 0.02;
  }
  const auto controlled = simulate(c.net, c.hp, eta, alpha);
  std::vector<char> valve(c.net.n_p(), 0);
  valve[dbv] = 1;
  ASSERT_TRUE(within_limits(c.net, c.bounds, base, {}));
  ASSERT_TRUE(within_limits(c.net, c.bounds, controlled, valve));
  for (const auto& st : {base, controlled})
    for (int t = 0; t < c.net.n_t(); ++t)
      for (int j = 0; j < c.net.n_p(); ++j) {
        EXPECT_LE(b.q_lo[t][j], st[t].q[j]);
        EXPECT_GE(b.q_hi[t][j], st[t].q[j]);
      }
}

TEST(Obbt, ThreadCountDoesNotChangeBounds) {
  auto c = make_case(fixtures::grid(3, 0.002, 50.0, 0.15, 2), 1, 1);
  auto b1 = c.bounds, b4 = c.bounds;
  ObbtOptions o1, o4;
  o1.threads = 1;
  o4.threads = 4;
  o1.k_max = o4.k_max = 1;
  tighten(c.net, c.hp, c.sp, b1, c.design, c.fc, o1);
  const auto rep = tighten(c.net, c.hp, c.sp, b4, c.design, c.fc, o4);
  for (int t = 0; t < c.net.n_t(); ++t) {
    EXPECT_EQ(b1.q_lo[t], b4.q_lo[t]);  // bitwise
    EXPECT_EQ(b1.q_hi[t], b4.q_hi[t]);
  }
  EXPECT_GT(rep.warm_started.front(), 0);
  const auto js = to_json(rep);
  EXPECT_EQ(js.at("total_lp_solves").get<int>(), rep.total_solves());
}

TEST(Obbt, StopsWhenProgressStalls) {
  auto c = make_case(fixtures::single_loop(), 1, 0);
  ObbtOptions opt;
  opt.k_max = 10;
  const auto rep = tighten(c.net, c.hp, c.sp, c.bounds, c.design, c.fc, opt);
  ASSERT_GE(rep.diam.size(), 2u);
  if (rep.iterations < opt.k_max) {
    const auto n = rep.diam.size();
    EXPECT_GT(rep.diam[n - 1] / rep.diam[n - 2], opt.eps_tol);
  }
  EXPECT_THROW(tighten(c.net, c.hp, c.sp, c.bounds, c.design, c.fc, {.k_max = -1}), ValidationError);
}
