#pragma once

// Pay-to-control: the provider offers each idle driver the smallest lump sum
// that makes a target vertex as good as the driver's best response, and picks
// targets to minimize total pay plus beta times D. Dividing by the per-minute
// driving cost turns this into a mobile facility location problem.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "rsctl/assignment.hpp"
#include "rsctl/core.hpp"
#include "rsctl/driver_model.hpp"
#include "rsctl/metric_graph.hpp"

namespace rsctl {

inline constexpr double kLocalSearchTolerance = 1e-6;
inline constexpr std::uint64_t kMaxBruteForceAssignments = 1'000'000;

/// V_i(q', B_i - c(q_i, q')) and BestProfit_i for every driver and vertex.
///
/// w(i, q') = (V_i(q', .) - BestProfit_i) / sigma, so the relocation cost
/// c(q_i, q') - w(i, q') is the indifference payment divided by sigma.
struct RelocationWeights {
  double sigma = 0.0;
  std::vector<int> driver_ids;
  std::vector<int> initial;
  std::vector<double> best;  // BestProfit_i
  Matrix value;              // m x n

  int drivers() const { return static_cast<int>(initial.size()); }
  double w(int i, int q) const {
    return (value(static_cast<std::size_t>(i), static_cast<std::size_t>(q)) - best[static_cast<std::size_t>(i)]) / sigma;
  }
};

inline double relocation_weight(const MetricGraph& g, const EconomicParams& params, const ProfitTable& table,
                                const DriverState& driver, int target) {
  const double best = best_response(g, params, table, driver.location, driver.budget).profit;
  const double v = table.at(target, params.budget_quanta(driver.budget) - params.travel_quanta(g.c(driver.location, target)));
  return (v - best) / params.drive_cost_per_min;
}

/// `tables[i]` is driver i's profit table; one table may serve several drivers.
inline RelocationWeights relocation_weights(const MetricGraph& g, const EconomicParams& params,
                                            std::span<const DriverState> fleet,
                                            std::span<const ProfitTable* const> tables) {
  if (tables.size() != fleet.size()) throw std::invalid_argument("one profit table per driver");
  const int n = g.size();
  RelocationWeights rw;
  rw.sigma = params.drive_cost_per_min;
  rw.value = Matrix(fleet.size(), static_cast<std::size_t>(n));
  for (std::size_t i = 0; i < fleet.size(); ++i) {
    const auto& d = fleet[i];
    const auto& t = *tables[i];
    rw.driver_ids.push_back(d.id);
    rw.initial.push_back(d.location);
    rw.best.push_back(best_response(g, params, t, d.location, d.budget).profit);
    const int quanta = params.budget_quanta(d.budget);
    for (int q = 0; q < n; ++q)
      rw.value(i, static_cast<std::size_t>(q)) = t.at(q, quanta - params.travel_quanta(g.c(d.location, q)));
  }
  return rw;
}

inline RelocationWeights relocation_weights(const MetricGraph& g, const EconomicParams& params,
                                            std::span<const DriverState> fleet, const ProfitTable& shared) {
  std::vector<const ProfitTable*> tables(fleet.size(), &shared);
  return relocation_weights(g, params, fleet, tables);
}

struct Incentive {
  double payment = 0.0;      // dollars
  double rate = std::nan("");  // payment per dollar of driving cost; undefined for zero distance
};

/// Smallest payment making `target` as profitable as the best response:
/// P = max{0, Best - (-sigma c + V(target, B - c))}. Paying the rate d on the
/// driving cost sigma c disburses the same P.
inline Incentive min_incentive(const MetricGraph& g, const EconomicParams& params, const ProfitTable& table,
                               const DriverState& driver, int target) {
  const double best = best_response(g, params, table, driver.location, driver.budget).profit;
  const double here = net_profit(g, params, table, driver.location, driver.budget, target);
  Incentive inc;
  inc.payment = std::max(0.0, best - here);
  const double drive = params.drive_cost_per_min * g.c(driver.location, target);
  if (drive > 0.0) inc.rate = inc.payment / drive;
  return inc;
}

/// h(Q') = sum sigma c(q_i, q'_i) + beta D(Q') + sum BestProfit_i - sum V_i(q'_i, .).
inline double provider_cost(const MetricGraph& g, const RelocationWeights& rw, std::span<const int> targets,
                            double beta) {
  if (static_cast<int>(targets.size()) != rw.drivers()) throw std::invalid_argument("one target per driver");
  double h = beta * expected_response_time(g, targets);
  for (int i = 0; i < rw.drivers(); ++i) {
    const auto ui = static_cast<std::size_t>(i);
    const int q = targets[ui];
    h += rw.sigma * g.c(rw.initial[ui], q) + rw.best[ui] - rw.value(ui, static_cast<std::size_t>(q));
  }
  return h;
}

/// Drivers Q, candidates F = all vertices, demand V. Relocation edges carry
/// c' = c - w; service edges carry c scaled by beta / sigma, so that
/// sigma C(Q') = h(Q').
struct MflInstance {
  RelocationWeights weights;
  Matrix relocation;  // m x n, c'(q_i, q')
  Matrix service;     // n x n travel minutes
  std::vector<int> demand;
  std::vector<double> demand_weight;
  double beta = 0.0;
  double service_weight = 0.0;

  int drivers() const { return weights.drivers(); }
  int candidates() const { return static_cast<int>(service.rows()); }
  double c_prime(int i, int q) const { return relocation(static_cast<std::size_t>(i), static_cast<std::size_t>(q)); }
};

inline MflInstance build_mfl(const MetricGraph& g, RelocationWeights weights, double beta) {
  if (beta < 0.0) throw ConfigError("beta must be nonnegative");
  if (weights.drivers() == 0) throw DataError("no drivers to relocate");
  if (static_cast<int>(weights.value.cols()) != g.size()) throw std::invalid_argument("weights do not cover all vertices");
  MflInstance mfl;
  const int m = weights.drivers(), n = g.size();
  mfl.relocation = Matrix(static_cast<std::size_t>(m), static_cast<std::size_t>(n));
  for (int i = 0; i < m; ++i)
    for (int q = 0; q < n; ++q)
      mfl.relocation(static_cast<std::size_t>(i), static_cast<std::size_t>(q)) =
          g.c(weights.initial[static_cast<std::size_t>(i)], q) - weights.w(i, q);
  mfl.service = g.cost;
  for (int v = 0; v < n; ++v)
    if (g.pa(v) > 0.0) {
      mfl.demand.push_back(v);
      mfl.demand_weight.push_back(g.pa(v));
    }
  mfl.beta = beta;
  mfl.service_weight = beta / weights.sigma;
  mfl.weights = std::move(weights);
  return mfl;
}

inline double mfl_service(const MflInstance& mfl, std::span<const int> targets) {
  double d = 0.0;
  for (std::size_t k = 0; k < mfl.demand.size(); ++k) {
    double best = kInfDistance;
    for (int q : targets) best = std::min(best, mfl.service(static_cast<std::size_t>(q), static_cast<std::size_t>(mfl.demand[k])));
    d += mfl.demand_weight[k] * best;
  }
  return d;
}

/// C(Q') = sum c'(q_i, q'_i) + (beta / sigma) sum_v p_a(v) min c(q', v).
inline double mfl_cost(const MflInstance& mfl, std::span<const int> targets) {
  if (static_cast<int>(targets.size()) != mfl.drivers()) throw std::invalid_argument("one target per driver");
  double c = mfl.service_weight * mfl_service(mfl, targets);
  for (int i = 0; i < mfl.drivers(); ++i) c += mfl.c_prime(i, targets[static_cast<std::size_t>(i)]);
  return c;
}

struct IncentivePlan {
  std::vector<int> driver_ids;
  std::vector<int> initial;
  std::vector<int> targets;
  std::vector<double> payments;  // dollars
  std::vector<double> rates;     // NaN for zero-distance targets
  double total_pay = 0.0;
  double service_term = 0.0;     // beta D(Q')
  double provider_cost = 0.0;    // h(Q') = total_pay + service_term
  double response_time = 0.0;    // D(Q')
  double mfl_cost = 0.0;         // C(Q')
  int iterations = 0;
};

inline IncentivePlan make_plan(const MetricGraph& g, const MflInstance& mfl, std::vector<int> targets) {
  const auto& rw = mfl.weights;
  IncentivePlan plan;
  plan.driver_ids = rw.driver_ids;
  plan.initial = rw.initial;
  for (int i = 0; i < rw.drivers(); ++i) {
    const auto ui = static_cast<std::size_t>(i);
    const int q = targets[ui];
    const double drive = rw.sigma * g.c(rw.initial[ui], q);
    const double p = std::max(0.0, rw.best[ui] - (rw.value(ui, static_cast<std::size_t>(q)) - drive));
    plan.payments.push_back(p);
    plan.rates.push_back(drive > 0.0 ? p / drive : std::nan(""));
    plan.total_pay += p;
  }
  plan.response_time = expected_response_time(g, targets);
  plan.service_term = mfl.beta * plan.response_time;
  plan.provider_cost = plan.total_pay + plan.service_term;
  plan.mfl_cost = mfl_cost(mfl, targets);
  plan.targets = std::move(targets);
  return plan;
}

namespace detail {

// Nearest and second-nearest target distance per demand vertex, for O(|V|)
// evaluation of single-driver moves.
struct NearestTwo {
  std::vector<double> first, second;
  std::vector<int> owner;

  void rebuild(const MflInstance& mfl, const std::vector<int>& targets) {
    const std::size_t nd = mfl.demand.size();
    first.assign(nd, kInfDistance);
    second.assign(nd, kInfDistance);
    owner.assign(nd, -1);
    for (std::size_t k = 0; k < nd; ++k)
      for (std::size_t i = 0; i < targets.size(); ++i) {
        const double c = mfl.service(static_cast<std::size_t>(targets[i]), static_cast<std::size_t>(mfl.demand[k]));
        if (c < first[k]) {
          second[k] = first[k];
          first[k] = c;
          owner[k] = static_cast<int>(i);
        } else if (c < second[k]) {
          second[k] = c;
        }
      }
  }
};

inline bool rematch(const MflInstance& mfl, std::vector<int>& targets) {
  const auto m = static_cast<std::size_t>(mfl.drivers());
  Matrix cost(m, m);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t k = 0; k < m; ++k) cost(i, k) = mfl.c_prime(static_cast<int>(i), targets[k]);
  const auto perm = min_cost_assignment(cost);
  double before = 0.0, after = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    before += cost(i, i);
    after += cost(i, static_cast<std::size_t>(perm[i]));
  }
  if (!(after < before - kLocalSearchTolerance * std::max(std::abs(before), 1e-12))) return false;
  std::vector<int> next(m);
  for (std::size_t i = 0; i < m; ++i) next[i] = targets[static_cast<std::size_t>(perm[i])];
  targets = std::move(next);
  return true;
}

}  // namespace detail

/// Deterministic local search on C. Starts from the cheapest of staying put,
/// everyone at a zero-pay target and `alternative` (if given), applies the
/// best single-driver retargeting while it gains more than a 1e-6 fraction
/// of C, then re-solves the matching of drivers to the chosen target multiset.
inline IncentivePlan solve_local_search(const MetricGraph& g, const MflInstance& mfl,
                                        std::span<const int> alternative = {}) {
  const int m = mfl.drivers(), n = mfl.candidates();
  std::vector<int> targets = mfl.weights.initial;
  std::vector<int> responses(static_cast<std::size_t>(m));
  for (int i = 0; i < m; ++i) {
    int best = mfl.weights.initial[static_cast<std::size_t>(i)];
    for (int q = 0; q < n; ++q)
      if (mfl.c_prime(i, q) < mfl.c_prime(i, best) - kTieTolerance) best = q;
    responses[static_cast<std::size_t>(i)] = best;
  }
  double cost = mfl_cost(mfl, targets);
  if (const double alt = mfl_cost(mfl, responses); alt < cost) {
    targets = responses;
    cost = alt;
  }
  if (!alternative.empty()) {
    if (const double alt = mfl_cost(mfl, alternative); alt < cost) {
      targets.assign(alternative.begin(), alternative.end());
      cost = alt;
    }
  }

  detail::NearestTwo near;
  const std::size_t nd = mfl.demand.size();
  std::vector<double> without(nd);
  int iterations = 0;
  for (;;) {
    near.rebuild(mfl, targets);
    double service = 0.0;
    for (std::size_t k = 0; k < nd; ++k) service += mfl.demand_weight[k] * near.first[k];
    double best_delta = 0.0;
    int best_i = -1, best_q = -1;
    for (int i = 0; i < m; ++i) {
      for (std::size_t k = 0; k < nd; ++k) without[k] = near.owner[k] == i ? near.second[k] : near.first[k];
      const double stay = mfl.c_prime(i, targets[static_cast<std::size_t>(i)]);
      for (int q = 0; q < n; ++q) {
        if (q == targets[static_cast<std::size_t>(i)]) continue;
        double s = 0.0;
        const double* row = mfl.service.row(static_cast<std::size_t>(q));
        for (std::size_t k = 0; k < nd; ++k)
          s += mfl.demand_weight[k] * std::min(row[static_cast<std::size_t>(mfl.demand[k])], without[k]);
        const double delta = mfl.c_prime(i, q) - stay + mfl.service_weight * (s - service);
        if (delta < best_delta) {
          best_delta = delta;
          best_i = i;
          best_q = q;
        }
      }
    }
    ++iterations;
    if (best_i >= 0 && -best_delta > kLocalSearchTolerance * std::max(std::abs(cost), 1e-12)) {
      targets[static_cast<std::size_t>(best_i)] = best_q;
      cost += best_delta;
      continue;
    }
    if (detail::rematch(mfl, targets)) {
      cost = mfl_cost(mfl, targets);
      continue;
    }
    break;
  }
  auto plan = make_plan(g, mfl, std::move(targets));
  plan.iterations = iterations;
  return plan;
}

/// Exhaustive minimum of C over all |F|^m target vectors, scanned with
/// driver 0 most significant; the first minimum wins.
inline IncentivePlan solve_bruteforce(const MetricGraph& g, const MflInstance& mfl) {
  const int m = mfl.drivers(), n = mfl.candidates();
  double count = std::pow(static_cast<double>(n), m);
  if (count > static_cast<double>(kMaxBruteForceAssignments))
    throw ConfigError("brute force limited to " + std::to_string(kMaxBruteForceAssignments) + " assignments");
  std::vector<int> targets(static_cast<std::size_t>(m), 0), best_targets;
  double best = kInfDistance;
  for (;;) {
    const double c = mfl_cost(mfl, targets);
    if (best_targets.empty() || c < best - 1e-12 * std::max(1.0, std::abs(best))) {
      best = c;
      best_targets = targets;
    }
    int i = m - 1;
    while (i >= 0 && ++targets[static_cast<std::size_t>(i)] == n) targets[static_cast<std::size_t>(i--)] = 0;
    if (i < 0) break;
  }
  return make_plan(g, mfl, std::move(best_targets));
}

struct Offer {
  int driver_id = 0;
  int target = 0;
  double payment = 0.0;
  double rate = std::nan("");
};

/// One offer per driver that is paid or asked to move.
inline std::vector<Offer> extract_offers(const IncentivePlan& plan) {
  std::vector<Offer> out;
  for (std::size_t i = 0; i < plan.targets.size(); ++i) {
    if (plan.payments[i] <= 0.0 && plan.targets[i] == plan.initial[i]) continue;
    out.push_back({plan.driver_ids[i], plan.targets[i], plan.payments[i], plan.rates[i]});
  }
  return out;
}

inline nlohmann::json nan_to_null(double x) { return std::isnan(x) ? nlohmann::json(nullptr) : nlohmann::json(x); }

inline void to_json(nlohmann::json& j, const IncentivePlan& p) {
  nlohmann::json drivers = nlohmann::json::array();
  for (std::size_t i = 0; i < p.targets.size(); ++i)
    drivers.push_back({{"driver", p.driver_ids[i]}, {"from", p.initial[i]}, {"target", p.targets[i]},
                       {"payment", p.payments[i]}, {"rate", nan_to_null(p.rates[i])}});
  j = {{"drivers", drivers},
       {"total_pay", p.total_pay},
       {"service_term", p.service_term},
       {"provider_cost", p.provider_cost},
       {"response_time", p.response_time}};
}

inline void to_json(nlohmann::json& j, const Offer& o) {
  j = {{"driver", o.driver_id}, {"target", o.target}, {"payment", o.payment}, {"rate", nan_to_null(o.rate)}};
}

}  // namespace rsctl
