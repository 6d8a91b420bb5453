#include <gtest/gtest.h>

#include <vector>

#include "rsctl/pay_control.hpp"
#include "support/fixtures.hpp"

using namespace rsctl;
using rsctl::testing::explicit_graph;

namespace {

struct Scene {
  MetricGraph g;
  EconomicParams params;
  std::vector<DriverState> fleet;
  ProfitTable table;
  RelocationWeights weights;
};

Scene make_scene(MetricGraph g, std::vector<DriverState> fleet, EconomicParams params = {}) {
  Scene s{std::move(g), params, std::move(fleet), {}, {}};
  double top = 0.0;
  for (const auto& d : s.fleet) top = std::max(top, d.budget);
  s.table = uninformed_profit_table(s.g, s.params, top);
  s.weights = relocation_weights(s.g, s.params, s.fleet, s.table);
  return s;
}

Scene random_scene(Rng& rng, int n, int m) {
  auto g = rsctl::testing::random_graph(rng, n, 2500.0);
  std::vector<DriverState> fleet;
  for (int i = 0; i < m; ++i)
    fleet.push_back({i, uniform_index(rng, n), 10.0 + 30.0 * uniform01(rng), Info::None});
  EconomicParams e;
  e.fare_per_min = 0.33 + 0.5 * uniform01(rng);
  return make_scene(std::move(g), std::move(fleet), e);
}

// h straight from its definition, with profits re-evaluated per driver.
double h_oracle(const Scene& s, const std::vector<int>& q, double beta) {
  double h = beta * expected_response_time(s.g, q);
  for (std::size_t i = 0; i < s.fleet.size(); ++i) {
    const auto& d = s.fleet[i];
    double best = -1e300;
    for (int u = 0; u < s.g.size(); ++u) best = std::max(best, net_profit(s.g, s.params, s.table, d.location, d.budget, u));
    h += s.params.drive_cost_per_min * s.g.c(d.location, q[i]) + best -
         s.table.at(q[i], s.params.budget_quanta(d.budget) - s.params.travel_quanta(s.g.c(d.location, q[i])));
  }
  return h;
}

std::vector<int> random_targets(Rng& rng, int n, int m) {
  std::vector<int> q;
  for (int i = 0; i < m; ++i) q.push_back(uniform_index(rng, n));
  return q;
}

// Two vertices one minute apart; both drivers wait at the quieter one, which
// is their own best response.
Scene two_vertex_jam() {
  auto g = explicit_graph({{0, 1}, {1, 0}}, {0.1, 0.2});
  return make_scene(g, {{0, 0, 10.0, Info::None}, {1, 0, 10.0, Info::None}});
}

}  // namespace

TEST(RelocationWeight, ZeroDemandReducesToPlainMfl) {
  auto g = explicit_graph({{0, 1, 2}, {1, 0, 1}, {2, 1, 0}}, {0.0, 0.0, 0.0});
  g.vertices[1].arrival_prob = 1.0;
  auto s = make_scene(g, {{0, 0, 10.0, Info::None}, {1, 2, 10.0, Info::None}});
  auto mfl = build_mfl(s.g, s.weights, 2.0);
  for (int i = 0; i < 2; ++i)
    for (int q = 0; q < 3; ++q) EXPECT_DOUBLE_EQ(mfl.c_prime(i, q), g.c(s.fleet[static_cast<std::size_t>(i)].location, q));
  EXPECT_DOUBLE_EQ(mfl.service_weight, 2.0 / s.params.drive_cost_per_min);
}

TEST(RelocationWeight, BestResponseStayIsFree) {
  Rng rng(2);
  auto s = random_scene(rng, 6, 3);
  for (std::size_t i = 0; i < s.fleet.size(); ++i) {
    const auto& d = s.fleet[i];
    auto r = best_response(s.g, s.params, s.table, d.location, d.budget);
    EXPECT_NEAR(s.g.c(d.location, r.vertex) - relocation_weight(s.g, s.params, s.table, d, r.vertex), 0.0, 1e-12);
    EXPECT_NEAR(min_incentive(s.g, s.params, s.table, d, r.vertex).payment, 0.0, 1e-12);
    EXPECT_NEAR(s.weights.w(static_cast<int>(i), r.vertex), relocation_weight(s.g, s.params, s.table, d, r.vertex), 1e-12);
  }
}

TEST(MinIncentive, StayingAtOptimumCostsNothing) {
  auto s = two_vertex_jam();
  auto inc = min_incentive(s.g, s.params, s.table, s.fleet[0], 0);
  EXPECT_EQ(inc.payment, 0.0);
  EXPECT_TRUE(std::isnan(inc.rate));
}

TEST(MinIncentive, InferiorVertexPaysTheProfitGap) {
  auto s = two_vertex_jam();
  const auto& d = s.fleet[0];
  // Both sides of the indifference condition, evaluated directly.
  const double stay = expected_profit(s.g, s.params, s.fleet, d, Info::None, 0, d.budget);
  const double move = -s.params.drive_cost_per_min * 1.0 + expected_profit(s.g, s.params, s.fleet, d, Info::None, 1, d.budget - 1.0);
  ASSERT_GT(stay, move);
  auto inc = min_incentive(s.g, s.params, s.table, d, 1);
  EXPECT_NEAR(inc.payment, stay - move, 1e-12);
  // The rate on the driving cost disburses the same payment.
  EXPECT_NEAR(inc.rate * s.params.drive_cost_per_min * 1.0, inc.payment, 1e-12);
  EXPECT_NEAR(move + inc.payment, stay, 1e-12);
}

TEST(ProviderCost, StayingAtBestResponsesIsBetaD) {
  auto s = two_vertex_jam();
  std::vector<int> q{0, 0};
  EXPECT_NEAR(provider_cost(s.g, s.weights, q, 3.0), 3.0 * expected_response_time(s.g, q), 1e-12);
  EXPECT_NEAR(provider_cost(s.g, s.weights, q, 3.0), h_oracle(s, q, 3.0), 1e-12);
}

TEST(ProviderCost, LemmaIdentityOnRandomTargets) {
  Rng rng(31);
  for (int trial = 0; trial < 20; ++trial) {
    auto s = random_scene(rng, 3 + uniform_index(rng, 5), 1 + uniform_index(rng, 4));
    const double beta = 20.0 * uniform01(rng);
    auto mfl = build_mfl(s.g, s.weights, beta);
    for (int k = 0; k < 25; ++k) {
      auto q = random_targets(rng, s.g.size(), mfl.drivers());
      const double h = h_oracle(s, q, beta);
      EXPECT_LE(std::abs(h - s.params.drive_cost_per_min * mfl_cost(mfl, q)) / std::max(1.0, std::abs(h)), 1e-6);
      EXPECT_NEAR(provider_cost(s.g, s.weights, q, beta), h, 1e-9);
    }
  }
}

TEST(BuildMfl, SingleDriverTwoCandidatesByHand) {
  auto s = make_scene(explicit_graph({{0, 1}, {1, 0}}, {0.1, 0.2}), {{0, 0, 10.0, Info::None}});
  auto mfl = build_mfl(s.g, s.weights, 1.0);
  const double sigma = s.params.drive_cost_per_min;
  const double pay1 = min_incentive(s.g, s.params, s.table, s.fleet[0], 1).payment;
  EXPECT_NEAR(mfl_cost(mfl, std::vector<int>{0}), (1.0 / sigma) * (2.0 / 3.0), 1e-12);
  EXPECT_NEAR(mfl_cost(mfl, std::vector<int>{1}), pay1 / sigma + (1.0 / sigma) * (1.0 / 3.0), 1e-12);
  EXPECT_THROW(build_mfl(s.g, s.weights, -1.0), ConfigError);
}

TEST(LocalSearch, SingleDriverIsExact) {
  Rng rng(8);
  for (int trial = 0; trial < 15; ++trial) {
    auto s = random_scene(rng, 5, 1);
    auto mfl = build_mfl(s.g, s.weights, 10.0 * uniform01(rng));
    EXPECT_NEAR(solve_local_search(s.g, mfl).mfl_cost, solve_bruteforce(s.g, mfl).mfl_cost, 1e-9);
  }
}

TEST(LocalSearch, BoundedByBruteForceAndIdentity) {
  Rng rng(9);
  for (int trial = 0; trial < 60; ++trial) {
    const int m = 1 + uniform_index(rng, 3), n = 2 + uniform_index(rng, 5);
    auto s = random_scene(rng, n, m);
    const double beta = 15.0 * uniform01(rng);
    auto mfl = build_mfl(s.g, s.weights, beta);
    auto ls = solve_local_search(s.g, mfl);
    auto bf = solve_bruteforce(s.g, mfl);
    // Independent enumeration of h.
    double best_h = 1e300;
    std::vector<int> q(static_cast<std::size_t>(m), 0);
    for (;;) {
      best_h = std::min(best_h, h_oracle(s, q, beta));
      int i = m - 1;
      while (i >= 0 && ++q[static_cast<std::size_t>(i)] == n) q[static_cast<std::size_t>(i--)] = 0;
      if (i < 0) break;
    }
    const double sigma = s.params.drive_cost_per_min;
    EXPECT_NEAR(sigma * bf.mfl_cost, best_h, 1e-9 * std::max(1.0, best_h));
    EXPECT_NEAR(bf.provider_cost, best_h, 1e-9 * std::max(1.0, best_h));
    EXPECT_LE(bf.mfl_cost, ls.mfl_cost + 1e-9);
    EXPECT_LE(ls.mfl_cost, 3.0 * bf.mfl_cost + 1e-9);
    EXPECT_LE(ls.mfl_cost, mfl_cost(mfl, s.weights.initial) + 1e-9);
  }
}

TEST(LocalSearch, JammedDriversGetPaidToSpread) {
  Rng rng(12);
  auto g = rsctl::testing::random_graph(rng, 6, 3000.0);
  std::vector<DriverState> fleet;
  for (int i = 0; i < 3; ++i) fleet.push_back({i, 0, 30.0, Info::None});
  auto s = make_scene(g, fleet);
  auto mfl = build_mfl(s.g, s.weights, 10.0);
  auto plan = solve_local_search(s.g, mfl);
  auto bf = solve_bruteforce(s.g, mfl);
  std::vector<int> initial{0, 0, 0};
  EXPECT_GT(plan.total_pay, 0.0);
  EXPECT_LT(plan.response_time, expected_response_time(s.g, initial));
  EXPECT_LT(bf.response_time, expected_response_time(s.g, initial));
}

TEST(BruteForce, ZeroBetaPaysNothing) {
  Rng rng(13);
  for (int trial = 0; trial < 20; ++trial) {
    auto s = random_scene(rng, 5, 2);
    auto mfl = build_mfl(s.g, s.weights, 0.0);
    auto bf = solve_bruteforce(s.g, mfl);
    EXPECT_NEAR(bf.total_pay, 0.0, 1e-9);
    EXPECT_NEAR(solve_local_search(s.g, mfl).total_pay, 0.0, 1e-9);
  }
}

TEST(BruteForce, ResponseTimeNonIncreasingInBeta) {
  Rng rng(14);
  for (int trial = 0; trial < 15; ++trial) {
    auto s = random_scene(rng, 5, 3);
    double prev = 1e300, prev_pay = -1.0;
    for (double beta : {0.0, 0.5, 1.0, 2.0, 5.0, 10.0, 50.0}) {
      auto bf = solve_bruteforce(s.g, build_mfl(s.g, s.weights, beta));
      EXPECT_LE(bf.response_time, prev + 1e-9);
      EXPECT_GE(bf.total_pay, prev_pay - 1e-9);
      prev = bf.response_time;
      prev_pay = bf.total_pay;
    }
  }
}

TEST(BruteForce, IdentityDominatesAndGuard) {
  Rng rng(15);
  auto s = random_scene(rng, 6, 3);
  auto mfl = build_mfl(s.g, s.weights, 4.0);
  auto bf = solve_bruteforce(s.g, mfl);
  EXPECT_LE(bf.mfl_cost, mfl_cost(mfl, s.weights.initial) + 1e-12);
  EXPECT_NEAR(bf.provider_cost, s.params.drive_cost_per_min * bf.mfl_cost, 1e-9);

  auto big = random_scene(rng, 40, 4);
  EXPECT_THROW(solve_bruteforce(big.g, build_mfl(big.g, big.weights, 1.0)), ConfigError);
}

TEST(Offers, NoneWhenEveryoneIsOptimal) {
  auto s = two_vertex_jam();
  auto plan = solve_local_search(s.g, build_mfl(s.g, s.weights, 0.0));
  EXPECT_TRUE(extract_offers(plan).empty());
}

TEST(Offers, OneRelocatedDriver) {
  auto s = two_vertex_jam();
  auto plan = solve_local_search(s.g, build_mfl(s.g, s.weights, 10.0));
  auto offers = extract_offers(plan);
  ASSERT_EQ(offers.size(), 1u);
  EXPECT_EQ(offers[0].target, 1);
  EXPECT_GT(offers[0].payment, 0.0);
  EXPECT_NEAR(offers[0].payment, min_incentive(s.g, s.params, s.table, s.fleet[0], 1).payment, 1e-12);
  EXPECT_EQ(plan.response_time, 0.0);
}

TEST(Offers, RationalAndEquilibrium) {
  Rng rng(16);
  for (int trial = 0; trial < 30; ++trial) {
    auto s = random_scene(rng, 5, 3);
    auto plan = solve_local_search(s.g, build_mfl(s.g, s.weights, 10.0 * uniform01(rng)));
    EXPECT_GE(plan.total_pay, 0.0);
    for (std::size_t i = 0; i < s.fleet.size(); ++i) {
      const auto& d = s.fleet[i];
      const double best = best_response(s.g, s.params, s.table, d.location, d.budget).profit;
      const double accept = net_profit(s.g, s.params, s.table, d.location, d.budget, plan.targets[i]) + plan.payments[i];
      EXPECT_GE(accept, best - 1e-9);
      // Unpaid deviations never beat accepting.
      for (int u = 0; u < s.g.size(); ++u)
        if (u != plan.targets[i]) EXPECT_LE(net_profit(s.g, s.params, s.table, d.location, d.budget, u), accept + 1e-9);
    }
  }
}

TEST(Hungarian, MatchesPermutationEnumeration) {
  Rng rng(17);
  for (int trial = 0; trial < 50; ++trial) {
    const int n = 1 + uniform_index(rng, 6);
    Matrix c(static_cast<std::size_t>(n), static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) c(static_cast<std::size_t>(i), static_cast<std::size_t>(j)) = std::round(10 * uniform01(rng)) - 3;
    std::vector<int> perm(static_cast<std::size_t>(n));
    std::iota(perm.begin(), perm.end(), 0);
    double best = 1e300;
    do {
      double s = 0;
      for (int i = 0; i < n; ++i) s += c(static_cast<std::size_t>(i), static_cast<std::size_t>(perm[static_cast<std::size_t>(i)]));
      best = std::min(best, s);
    } while (std::next_permutation(perm.begin(), perm.end()));
    auto got = min_cost_assignment(c);
    double s = 0;
    std::vector<int> seen(static_cast<std::size_t>(n), 0);
    for (int i = 0; i < n; ++i) {
      s += c(static_cast<std::size_t>(i), static_cast<std::size_t>(got[static_cast<std::size_t>(i)]));
      ++seen[static_cast<std::size_t>(got[static_cast<std::size_t>(i)])];
    }
    EXPECT_DOUBLE_EQ(s, best);
    for (int k : seen) EXPECT_EQ(k, 1);
  }
}

TEST(Json, PlanSerializes) {
  auto s = two_vertex_jam();
  auto plan = solve_local_search(s.g, build_mfl(s.g, s.weights, 10.0));
  nlohmann::json j = plan;
  EXPECT_EQ(j.at("drivers").size(), 2u);
  EXPECT_NEAR(j.at("provider_cost").get<double>(), j.at("total_pay").get<double>() + j.at("service_term").get<double>(), 1e-12);
  EXPECT_TRUE(j.at("drivers")[1].at("rate").is_null());
}
