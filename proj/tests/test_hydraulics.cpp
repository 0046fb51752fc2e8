#include <gtest/gtest.h>

#include <chrono>
#include <random>

#include "cms/hydraulics.hpp"
#include "fixtures.hpp"

using namespace cms;

namespace {

// Reference values evaluated independently at 30 significant digits.
constexpr double kR1000 = 457.176290224189212626;  // L=1000, C=130, D=0.3
constexpr double kPhi005 = 1.78064009091721106726;  // phi(0.05) for kR1000
constexpr double kHeadSinglePipe = 49.9749633540879939;  // 50 - phi(0.005)

Eigen::VectorXd zeros(int n) { return Eigen::VectorXd::Zero(n); }

}  // namespace

TEST(HeadLoss, HazenWilliamsResistance) {
  EXPECT_NEAR(hw_resistance(1000.0, 130.0, 0.3), kR1000, 1e-9 * kR1000);
  const double r2 = hw_resistance(1000.0, 260.0, 0.3);
  EXPECT_NEAR(r2 / kR1000, std::pow(2.0, -1.852), 1e-12);
  EXPECT_EQ(valve_resistance(0.0, 0.2), 0.0);
  const auto p = headloss_params(fixtures::prv_line());
  EXPECT_EQ(p.r[0], 0.0);
  EXPECT_EQ(p.n_exp[0], 2.0);
  EXPECT_EQ(p.n_exp[1], 1.852);
}

TEST(HeadLoss, PhiValuesAndSymmetry) {
  EXPECT_EQ(phi(0.0, kR1000, 1.852), 0.0);
  EXPECT_NEAR(phi(0.05, kR1000, 1.852), kPhi005, 1e-9 * kPhi005);
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int i = 0; i < 1000; ++i) {
    const double q = u(rng) * (i % 2 ? 1e-6 : 1.0);
    EXPECT_EQ(phi(q, 321.0, 1.852) + phi(-q, 321.0, 1.852), 0.0);
  }
}

TEST(HeadLoss, DerivativeMatchesCentralDifferences) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> mag(-4.0, -0.3), u01(0.0, 1.0);
  for (int i = 0; i < 1000; ++i) {
    const double q = (u01(rng) < 0.5 ? -1.0 : 1.0) * std::pow(10.0, mag(rng));
    const double n = i % 3 == 0 ? 2.0 : 1.852;
    const double r = 10.0 + 1000.0 * u01(rng);
    const double h = 1e-5 * std::abs(q);
    const double fd = (phi(q + h, r, n) - phi(q - h, r, n)) / (2 * h);
    EXPECT_NEAR(phi_prime(q, r, n), fd, 1e-5 * std::abs(fd)) << q;
  }
}

TEST(HeadLoss, SmoothingBandMatchesValueAndSlopeAtEdge) {
  const double r = 500.0, e = kDefaultQEps;
  for (double n : {1.852, 2.0}) {
    const double inside = e * (1.0 - 1e-12), outside = e * (1.0 + 1e-12);
    EXPECT_NEAR(phi(inside, r, n), phi(outside, r, n), 1e-10 * std::abs(phi(outside, r, n)));
    EXPECT_NEAR(phi_prime(inside, r, n), phi_prime(outside, r, n), 1e-9 * phi_prime(outside, r, n));
    EXPECT_GT(phi_prime(0.0, r, n), 0.0);
  }
}

TEST(SteadySolver, SinglePipe) {
  const auto net = fixtures::single_pipe();
  const auto p = headloss_params(net);
  const auto s = solve_steady(net, p, 0, zeros(1), zeros(1));
  EXPECT_NEAR(s.q[0], 0.005, 1e-12);
  EXPECT_NEAR(s.h[0], kHeadSinglePipe, 1e-9);
  EXPECT_NEAR(s.theta[0], 50.0 - kHeadSinglePipe, 1e-9);
}

TEST(SteadySolver, FlushingDemandAddsToFlow) {
  const auto net = fixtures::single_pipe();
  const auto p = headloss_params(net);
  Eigen::VectorXd alpha(1);
  alpha << 0.025;
  const auto s = solve_steady(net, p, 0, zeros(1), alpha);
  EXPECT_NEAR(s.q[0], 0.030, 1e-12);
  EXPECT_NEAR(s.q[0] / net.links[0].area, 0.030 / (std::numbers::pi * 0.09 / 4), 1e-10);
}

TEST(SteadySolver, ParallelPipesSplitEvenly) {
  const auto net = fixtures::parallel_pipes(0.02);
  const auto s = solve_steady(net, headloss_params(net), 0, zeros(2), zeros(1));
  EXPECT_NEAR(s.q[0], 0.01, 1e-9);
  EXPECT_NEAR(s.q[1], 0.01, 1e-9);
}

TEST(SteadySolver, HeadLossIncreasesWithDemand) {
  double prev = -1.0;
  for (double d = 0.001; d < 0.1; d *= 1.5) {
    const auto net = fixtures::single_pipe(d);
    const auto s = solve_steady(net, headloss_params(net), 0, zeros(1), zeros(1));
    const double loss = 50.0 - s.h[0];
    EXPECT_GT(loss, prev);
    prev = loss;
  }
}

TEST(SteadySolver, ResidualsOnRandomNetworks) {
  for (std::uint64_t seed = 1; seed <= 50; ++seed) {
    const auto net = fixtures::random_network(seed, 60);
    const auto p = headloss_params(net);
    const auto t0 = std::chrono::steady_clock::now();
    const auto s = solve_steady(net, p, 0, zeros(net.n_p()), zeros(net.n_n()));
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    EXPECT_LE(mass_residual(net, s, 0), 1e-8) << seed;
    EXPECT_LE(energy_residual(net, p, s, 0), 1e-6) << seed;
    EXPECT_LT(secs, 1.0);
  }
}

TEST(SteadySolver, ForestFlowsFollowDownstreamDemand) {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const auto net = fixtures::random_network(seed, 50);
    const auto fc = forest_core(net);
    Eigen::VectorXd alpha = zeros(net.n_n());
    for (int i = 0; i < net.n_n(); i += 7) alpha[i] = 0.003;
    const auto s = solve_steady(net, headloss_params(net), 0, zeros(net.n_p()), alpha);
    const auto expected = fc.forest_flows(net.demands[0], &alpha);
    for (std::size_t f = 0; f < fc.forest_links.size(); ++f)
      EXPECT_NEAR(s.q[fc.forest_links[f]], expected[f], 1e-10) << seed;
  }
}

TEST(SteadySolver, ValveLossAddsHead) {
  const auto net = fixtures::prv_line();
  const auto p = headloss_params(net);
  Eigen::VectorXd eta = zeros(2);
  const auto open = solve_steady(net, p, 0, eta, zeros(2));
  eta[0] = 7.5;
  const auto throttled = solve_steady(net, p, 0, eta, zeros(2));
  EXPECT_NEAR(open.h[0] - throttled.h[0], 7.5, 1e-7);
  EXPECT_NEAR(open.q[0], 0.005, 1e-10);
}

TEST(SteadySolver, ClosuresThatIsolateNodesAreSingular) {
  const auto net = fixtures::triangle_pendant();
  std::vector<char> closed(net.n_p(), 0);
  closed[3] = 1;
  EXPECT_THROW(solve_steady(net, headloss_params(net), 0, zeros(4), zeros(3), closed), SingularSystem);
  closed[3] = 0;
  closed[1] = 1;
  const auto s = solve_steady(net, headloss_params(net), 0, zeros(4), zeros(3), closed);
  EXPECT_EQ(s.q[1], 0.0);
  EXPECT_NEAR(s.q[0], 0.004, 1e-10);
}

TEST(SteadySolver, IterationCapRaisesNonConvergence) {
  const auto net = fixtures::grid();
  HydraulicOptions opt;
  opt.max_newton = 1;
  EXPECT_THROW(solve_steady(net, headloss_params(net), 0, zeros(net.n_p()), zeros(net.n_n()), {}, opt),
               NonConvergence);
}

TEST(SteadySolver, HistoryIsRecordedOnRequest) {
  const auto net = fixtures::grid();
  HydraulicOptions opt;
  opt.record_history = true;
  const auto s = solve_steady(net, headloss_params(net), 0, zeros(net.n_p()), zeros(net.n_n()), {}, opt);
  EXPECT_EQ(static_cast<int>(s.history.size()), s.iterations + 1);
  std::ostringstream csv;
  write_residual_history(csv, s);
  EXPECT_EQ(csv.str().rfind("iteration,mass_residual,energy_residual\n", 0), 0u);
}
