#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "rsctl/core.hpp"
#include "rsctl/metric_graph.hpp"

namespace rsctl {

inline constexpr double kMetersPerMile = 1609.344;
inline constexpr double kTieTolerance = 1e-12;

/// Per-minute economics of a driver. Fares are converted to a per-minute
/// rate at ingestion so that every cost in the model is in minutes.
struct EconomicParams {
  double drive_cost_per_min = 0.3;  // sigma, dollars per minute of driving
  double fare_per_min = 1.06 * (kDefaultSpeedKmh * 1000.0 / kMetersPerMile) / 60.0;  // sigma'
  double budget_quantum = 1.0;      // delta, minutes

  static EconomicParams from_fare_per_mile(double fare_per_mile, double drive_cost_per_min, double speed_kmh,
                                           double budget_quantum = 1.0) {
    EconomicParams p;
    p.drive_cost_per_min = drive_cost_per_min;
    p.fare_per_min = fare_per_mile * (speed_kmh * 1000.0 / kMetersPerMile) / 60.0;
    p.budget_quantum = budget_quantum;
    p.check();
    return p;
  }

  void check() const {
    if (!(drive_cost_per_min > 0.0)) throw ConfigError("drive_cost_per_min must be positive");
    if (!(fare_per_min > 0.0)) throw ConfigError("fare_per_min must be positive");
    if (!(budget_quantum > 0.0)) throw ConfigError("budget_quantum must be positive");
  }

  /// Budgets are rounded down to the grid.
  int budget_quanta(double minutes) const {
    if (minutes <= 0.0) return 0;
    return static_cast<int>(std::floor(minutes / budget_quantum + 1e-9));
  }

  /// Travel times are rounded up to the grid when subtracted from a budget.
  int travel_quanta(double minutes) const {
    if (minutes <= 0.0) return 0;
    return static_cast<int>(std::ceil(minutes / budget_quantum - 1e-9));
  }
};

enum class Info { None, Full };

inline const char* to_string(Info info) { return info == Info::Full ? "full" : "none"; }

struct DriverState {
  int id = 0;
  int location = 0;
  double budget = 0.0;  // minutes of work left
  Info info = Info::None;
};

// ---------------------------------------------------------------------------
// Pick-up probability

/// Number of drivers in `fleet` (other than `self_id`) that driver `self_id`,
/// hypothetically waiting at `u`, believes are closer to `v`. Equidistant
/// drivers count when their id is lower. Always zero without information.
inline int count_closer_drivers(const MetricGraph& g, std::span<const DriverState> fleet, int self_id, Info info,
                                int v, int u) {
  if (info == Info::None) return 0;
  const double own = g.c(u, v);
  int closer = 0;
  for (const auto& d : fleet) {
    if (d.id == self_id) continue;
    const double theirs = g.c(d.location, v);
    if (theirs < own - kTieTolerance || (std::abs(theirs - own) <= kTieTolerance && d.id < self_id)) ++closer;
  }
  return closer;
}

/// P[X >= k] for X ~ Binomial(n, p).
inline double binomial_tail_at_least(int n, int k, double p) {
  if (k <= 0) return 1.0;
  if (k > n) return 0.0;
  if (p <= 0.0) return 0.0;
  if (p >= 1.0) return 1.0;
  const double lp = std::log(p);
  const double lq = std::log1p(-p);
  const double lg_n = std::lgamma(n + 1.0);
  double sum = 0.0;
  for (int j = k; j <= n; ++j)
    sum += std::exp(lg_n - std::lgamma(j + 1.0) - std::lgamma(n - j + 1.0) + j * lp + (n - j) * lq);
  return std::min(1.0, sum);
}

/// Probability that the next request driver i is assigned comes from `v`.
/// For every other vertex w with demand, the driver must be reached by v's
/// (S(v)+1)-th arrival before w's (S(w)+1)-th, i.e. at least S(v)+1 of the
/// first S(v)+S(w)+1 arrivals at {v, w} land on v.
inline double pickup_probability(std::span<const int> closer, std::span<const double> rates, int v) {
  const double lv = rates[static_cast<std::size_t>(v)];
  if (lv <= 0.0) return 0.0;
  const int sv = closer[static_cast<std::size_t>(v)];
  double p = 1.0;
  for (std::size_t w = 0; w < rates.size(); ++w) {
    if (static_cast<int>(w) == v || rates[w] <= 0.0) continue;
    p *= binomial_tail_at_least(sv + closer[w] + 1, sv + 1, lv / (lv + rates[w]));
  }
  return p;
}

/// Memoizes the binomial factors of `pickup_probability` per (v, w, S(v), S(w)).
/// Not thread-safe; use one cache per worker.
class PickupOddsCache {
 public:
  PickupOddsCache(const MetricGraph& g, int max_count)
      : n_(g.size()), span_(max_count + 1), rates_(static_cast<std::size_t>(g.size())) {
    for (int u = 0; u < n_; ++u) rates_[static_cast<std::size_t>(u)] = g.rate(u);
    table_.assign(static_cast<std::size_t>(n_) * n_ * span_ * span_, -1.0);
  }

  double factor(int v, int w, int sv, int sw) {
    if (sv >= span_ || sw >= span_) return compute(v, w, sv, sw);
    double& slot = table_[((static_cast<std::size_t>(v) * n_ + w) * span_ + sv) * span_ + sw];
    if (slot < 0.0) slot = compute(v, w, sv, sw);
    return slot;
  }

  std::span<const double> rates() const { return rates_; }

 private:
  double compute(int v, int w, int sv, int sw) const {
    const double lv = rates_[static_cast<std::size_t>(v)];
    const double lw = rates_[static_cast<std::size_t>(w)];
    return binomial_tail_at_least(sv + sw + 1, sv + 1, lv / (lv + lw));
  }

  int n_;
  int span_;
  std::vector<double> rates_;
  std::vector<double> table_;
};

/// Matrix P with P(u, v) = p_i(v, u): the pick-up probability at v perceived by
/// driver `self_id` if it waited at u.
inline Matrix pickup_matrix(const MetricGraph& g, std::span<const DriverState> fleet, int self_id, Info info,
                            PickupOddsCache& cache) {
  const int n = g.size();
  const auto rates = cache.rates();
  Matrix p(static_cast<std::size_t>(n), static_cast<std::size_t>(n));
  std::vector<int> closer(static_cast<std::size_t>(n));
  for (int u = 0; u < n; ++u) {
    if (info == Info::None && u > 0) {
      // Without information the counts, hence the row, do not depend on u.
      for (int v = 0; v < n; ++v) p(static_cast<std::size_t>(u), static_cast<std::size_t>(v)) = p(0, static_cast<std::size_t>(v));
      continue;
    }
    for (int v = 0; v < n; ++v) closer[static_cast<std::size_t>(v)] = count_closer_drivers(g, fleet, self_id, info, v, u);
    for (int v = 0; v < n; ++v) {
      if (rates[static_cast<std::size_t>(v)] <= 0.0) continue;
      double prob = 1.0;
      for (int w = 0; w < n; ++w) {
        if (w == v || rates[static_cast<std::size_t>(w)] <= 0.0) continue;
        prob *= cache.factor(v, w, closer[static_cast<std::size_t>(v)], closer[static_cast<std::size_t>(w)]);
      }
      p(static_cast<std::size_t>(u), static_cast<std::size_t>(v)) = prob;
    }
  }
  return p;
}

inline Matrix pickup_matrix(const MetricGraph& g, std::span<const DriverState> fleet, int self_id, Info info) {
  PickupOddsCache cache(g, static_cast<int>(fleet.size()));
  return pickup_matrix(g, fleet, self_id, info, cache);
}

// ---------------------------------------------------------------------------
// Expected profit

/// Memoized V_i(u, b) for every vertex and every budget level 0..max_quanta.
class ProfitTable {
 public:
  ProfitTable() = default;
  ProfitTable(int vertices, int max_quanta, double quantum)
      : vertices_(vertices), max_quanta_(max_quanta), quantum_(quantum),
        values_(static_cast<std::size_t>(max_quanta + 1), static_cast<std::size_t>(vertices)) {}

  /// V(u, quanta); zero for nonpositive budgets. Budgets beyond the table are
  /// a programming error.
  double at(int u, int quanta) const {
    if (quanta <= 0) return 0.0;
    if (quanta > max_quanta_) throw std::out_of_range("profit table budget " + std::to_string(quanta) +
                                                      " exceeds " + std::to_string(max_quanta_));
    return values_(static_cast<std::size_t>(quanta), static_cast<std::size_t>(u));
  }

  int vertices() const { return vertices_; }
  int max_quanta() const { return max_quanta_; }
  double quantum() const { return quantum_; }

  double& mutable_at(int u, int quanta) {
    return values_(static_cast<std::size_t>(quanta), static_cast<std::size_t>(u));
  }

  // Context the table was computed under; informational.
  int driver_id = -1;
  Info info = Info::None;
  std::vector<std::pair<int, int>> configuration;  // (driver id, vertex) known to the driver

 private:
  int vertices_ = 0;
  int max_quanta_ = 0;
  double quantum_ = 1.0;
  Matrix values_;
};

namespace detail {

// For a fixed pick-up vertex and budget level, the continuation values
// g_w = fare(v, w) + V(w, level - quanta(v, w)) sorted ascending with suffix
// sums, so that sum_w pd(w|v) * max{0, g_w - a} is a binary search.
struct RideGroup {
  std::vector<double> gains;
  std::vector<double> weight_suffix;
  std::vector<double> weighted_gain_suffix;

  double expected_positive_part(double a) const {
    const auto k = static_cast<std::size_t>(std::upper_bound(gains.begin(), gains.end(), a) - gains.begin());
    return weighted_gain_suffix[k] - a * weight_suffix[k];
  }
};

}  // namespace detail

/// Evaluates
///   V(u, b) = sum_{v,w} pd(w|v) p(v,u) max{0, fare*c(v,w) - cost*c(u,v) + V(w, b - q(u,v) - q(v,w))}
/// with V(., b <= 0) = 0, where q rounds travel times up to budget quanta.
/// Zero-duration pick-up and ride legs leave the budget unchanged; those terms
/// are resolved as the least fixed point at each level.
inline ProfitTable compute_profit_table(const MetricGraph& g, const EconomicParams& params, const Matrix& pickup,
                                        int max_quanta) {
  const int n = g.size();
  const auto N = static_cast<std::size_t>(n);
  max_quanta = std::max(0, max_quanta);
  ProfitTable table(n, max_quanta, params.budget_quantum);
  const double sigma = params.drive_cost_per_min;
  const double fare = params.fare_per_min;

  std::vector<int> quanta(N * N);
  for (int u = 0; u < n; ++u)
    for (int v = 0; v < n; ++v) quanta[static_cast<std::size_t>(u) * N + v] = params.travel_quanta(g.c(u, v));
  auto q = [&](int a, int b) { return quanta[static_cast<std::size_t>(a) * N + b]; };

  std::vector<std::vector<detail::RideGroup>> groups(static_cast<std::size_t>(max_quanta + 1));
  std::vector<std::pair<double, double>> scratch(N);
  auto build_groups = [&](int level) {
    auto& row = groups[static_cast<std::size_t>(level)];
    row.resize(N);
    for (int v = 0; v < n; ++v) {
      for (int w = 0; w < n; ++w)
        scratch[static_cast<std::size_t>(w)] = {fare * g.c(v, w) + table.at(w, level - q(v, w)), g.pd(v, w)};
      std::sort(scratch.begin(), scratch.end());
      auto& grp = row[static_cast<std::size_t>(v)];
      grp.gains.resize(N);
      grp.weight_suffix.assign(N + 1, 0.0);
      grp.weighted_gain_suffix.assign(N + 1, 0.0);
      for (std::size_t k = N; k-- > 0;) {
        grp.gains[k] = scratch[k].first;
        grp.weight_suffix[k] = grp.weight_suffix[k + 1] + scratch[k].second;
        grp.weighted_gain_suffix[k] = grp.weighted_gain_suffix[k + 1] + scratch[k].second * scratch[k].first;
      }
    }
  };
  build_groups(0);

  struct LoopTerm {
    double coef;
    int w;
    double offset;
  };
  std::vector<double> base(N);
  std::vector<std::vector<LoopTerm>> loops(N);
  std::vector<double> current(N), next(N);

  for (int b = 1; b <= max_quanta; ++b) {
    for (int u = 0; u < n; ++u) {
      double r = 0.0;
      auto& loop = loops[static_cast<std::size_t>(u)];
      loop.clear();
      for (int v = 0; v < n; ++v) {
        const double pv = pickup(static_cast<std::size_t>(u), static_cast<std::size_t>(v));
        if (pv <= 0.0) continue;
        const double approach = sigma * g.c(u, v);
        if (q(u, v) >= 1) {
          const int level = std::max(0, b - q(u, v));
          r += pv * groups[static_cast<std::size_t>(level)][static_cast<std::size_t>(v)].expected_positive_part(approach);
          continue;
        }
        for (int w = 0; w < n; ++w) {
          const double pd = g.pd(v, w);
          if (pd <= 0.0) continue;
          const double offset = fare * g.c(v, w) - approach;
          if (q(v, w) >= 1) {
            r += pv * pd * std::max(0.0, offset + table.at(w, b - q(v, w)));
          } else {
            loop.push_back({pv * pd, w, offset});
          }
        }
      }
      base[static_cast<std::size_t>(u)] = r;
    }

    // Least fixed point of V = base + sum coef * max{0, offset + V(w)}.
    std::fill(current.begin(), current.end(), 0.0);
    for (int iter = 0; iter < 100000; ++iter) {
      double change = 0.0;
      for (int u = 0; u < n; ++u) {
        double val = base[static_cast<std::size_t>(u)];
        for (const auto& t : loops[static_cast<std::size_t>(u)])
          val += t.coef * std::max(0.0, t.offset + current[static_cast<std::size_t>(t.w)]);
        next[static_cast<std::size_t>(u)] = val;
        change = std::max(change, std::abs(val - current[static_cast<std::size_t>(u)]) / std::max(1.0, std::abs(val)));
      }
      std::swap(current, next);
      if (change <= 1e-15) break;
    }
    for (int u = 0; u < n; ++u) table.mutable_at(u, b) = current[static_cast<std::size_t>(u)];
    build_groups(b);
  }
  return table;
}

/// Profit table of driver `self` under the given information set.
inline ProfitTable profit_table_for(const MetricGraph& g, const EconomicParams& params,
                                    std::span<const DriverState> fleet, const DriverState& self, Info info,
                                    PickupOddsCache& cache) {
  const Matrix p = pickup_matrix(g, fleet, self.id, info, cache);
  ProfitTable t = compute_profit_table(g, params, p, params.budget_quanta(self.budget));
  t.driver_id = self.id;
  t.info = info;
  if (info == Info::Full)
    for (const auto& d : fleet) t.configuration.emplace_back(d.id, d.location);
  return t;
}

/// Without information every driver sees the same odds, so one table up to
/// the largest budget serves the whole fleet.
inline ProfitTable uninformed_profit_table(const MetricGraph& g, const EconomicParams& params, double max_budget) {
  PickupOddsCache cache(g, 1);
  const Matrix p = pickup_matrix(g, {}, -1, Info::None, cache);
  ProfitTable t = compute_profit_table(g, params, p, params.budget_quanta(max_budget));
  t.info = Info::None;
  return t;
}

/// V_i(u, budget) for driver `self` under `info`.
inline double expected_profit(const MetricGraph& g, const EconomicParams& params, std::span<const DriverState> fleet,
                              const DriverState& self, Info info, int u, double budget) {
  PickupOddsCache cache(g, static_cast<int>(fleet.size()));
  const Matrix p = pickup_matrix(g, fleet, self.id, info, cache);
  const int quanta = params.budget_quanta(budget);
  return compute_profit_table(g, params, p, quanta).at(u, quanta);
}

// ---------------------------------------------------------------------------
// Best response

/// -cost * c(from, to) + V(to, budget - c(from, to)).
inline double net_profit(const MetricGraph& g, const EconomicParams& params, const ProfitTable& table, int from,
                         double budget, int to) {
  const double travel = g.c(from, to);
  return -params.drive_cost_per_min * travel +
         table.at(to, params.budget_quanta(budget) - params.travel_quanta(travel));
}

struct Response {
  int vertex = 0;
  double profit = 0.0;
};

/// Profit-maximizing waiting vertex. Ties go to the cheaper relocation, then
/// to the lower vertex id.
inline Response best_response(const MetricGraph& g, const EconomicParams& params, const ProfitTable& table, int from,
                              double budget) {
  Response best{from, net_profit(g, params, table, from, budget, from)};
  for (int u = 0; u < g.size(); ++u) {
    const double value = net_profit(g, params, table, from, budget, u);
    const double tol = kTieTolerance * std::max(1.0, std::abs(best.profit));
    if (value > best.profit + tol) {
      best = {u, value};
    } else if (value >= best.profit - tol) {
      const double cu = g.c(from, u), cb = g.c(from, best.vertex);
      if (cu < cb - kTieTolerance || (std::abs(cu - cb) <= kTieTolerance && u < best.vertex)) best = {u, value};
    }
  }
  return best;
}

inline Response best_response(const MetricGraph& g, const EconomicParams& params, const DriverState& driver,
                              std::span<const DriverState> fleet, Info info) {
  PickupOddsCache cache(g, static_cast<int>(fleet.size()));
  const auto table = profit_table_for(g, params, fleet, driver, info, cache);
  return best_response(g, params, table, driver.location, driver.budget);
}

/// Waiting vertices a driver would pick with full information and with none.
struct CandidatePair {
  int driver_id = 0;
  Response full;
  Response none;
  bool indifferent() const { return full.vertex == none.vertex; }
};

inline CandidatePair candidate_locations(const MetricGraph& g, const EconomicParams& params,
                                         const DriverState& driver, const ProfitTable& full_table,
                                         const ProfitTable& none_table) {
  return {driver.id, best_response(g, params, full_table, driver.location, driver.budget),
          best_response(g, params, none_table, driver.location, driver.budget)};
}

inline CandidatePair candidate_locations(const MetricGraph& g, const EconomicParams& params,
                                         const DriverState& driver, std::span<const DriverState> fleet) {
  PickupOddsCache cache(g, static_cast<int>(fleet.size()));
  const auto full = profit_table_for(g, params, fleet, driver, Info::Full, cache);
  const auto none = profit_table_for(g, params, fleet, driver, Info::None, cache);
  return candidate_locations(g, params, driver, full, none);
}

// ---------------------------------------------------------------------------
// JSON

inline void to_json(nlohmann::json& j, const ProfitTable& t) {
  auto values = nlohmann::json::array();
  for (int u = 0; u < t.vertices(); ++u) {
    std::vector<double> row;
    for (int b = 0; b <= t.max_quanta(); ++b) row.push_back(t.at(u, b));
    values.push_back(row);
  }
  j = {{"driver", t.driver_id},         {"info", to_string(t.info)},
       {"configuration", t.configuration}, {"quantum", t.quantum()},
       {"max_quanta", t.max_quanta()},   {"values", values}};
}

inline void from_json(const nlohmann::json& j, ProfitTable& t) {
  const auto& values = j.at("values");
  const int max_quanta = j.at("max_quanta").get<int>();
  t = ProfitTable(static_cast<int>(values.size()), max_quanta, j.at("quantum").get<double>());
  for (int u = 0; u < t.vertices(); ++u) {
    const auto& row = values.at(static_cast<std::size_t>(u));
    if (static_cast<int>(row.size()) != max_quanta + 1) throw DataError("profit table row has wrong length");
    for (int b = 1; b <= max_quanta; ++b) t.mutable_at(u, b) = row.at(static_cast<std::size_t>(b)).get<double>();
  }
  t.driver_id = j.at("driver").get<int>();
  t.info = j.at("info").get<std::string>() == "full" ? Info::Full : Info::None;
  t.configuration = j.at("configuration").get<std::vector<std::pair<int, int>>>();
}

}  // namespace rsctl
