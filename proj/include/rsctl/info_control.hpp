#pragma once

// Selective information sharing: every idle driver has two candidate waiting
// vertices, one it would pick knowing all driver positions and one it would
// pick knowing none. The provider chooses one per driver to minimize D.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "rsctl/core.hpp"
#include "rsctl/driver_model.hpp"
#include "rsctl/lp.hpp"
#include "rsctl/metric_graph.hpp"

namespace rsctl {

inline constexpr double kRoundingTieTolerance = 1e-9;
inline constexpr int kMaxBruteForcePairs = 20;

enum class Share { None, Full };

inline const char* to_string(Share s) { return s == Share::Full ? "full" : "none"; }

struct SharingPair {
  int driver_id = 0;
  int full = 0;  // instance vertex chosen with full information
  int none = 0;  // instance vertex chosen with no information
};

/// Candidate pairs over a graph in which every candidate vertex is distinct.
/// Collisions are resolved by zero-distance duplicates; `origin` maps each
/// instance vertex back to the vertex it copies.
struct InfoSharingInstance {
  MetricGraph graph;
  std::vector<int> origin;
  std::vector<SharingPair> pairs;
  std::vector<int> demand;  // vertices with positive arrival probability

  int m() const { return static_cast<int>(pairs.size()); }
  int slot_vertex(int slot) const {
    const auto& p = pairs[static_cast<std::size_t>(slot / 2)];
    return slot % 2 == 0 ? p.full : p.none;
  }
  int vertex(int pair, Share s) const {
    const auto& p = pairs[static_cast<std::size_t>(pair)];
    return s == Share::Full ? p.full : p.none;
  }
};

inline void check_instance(const InfoSharingInstance& in) {
  if (static_cast<int>(in.origin.size()) != in.graph.size()) throw DataError("instance origin map has wrong size");
  std::vector<char> used(static_cast<std::size_t>(in.graph.size()), 0);
  for (const auto& p : in.pairs)
    for (int v : {p.full, p.none}) {
      if (v < 0 || v >= in.graph.size()) throw DataError("candidate vertex out of range");
      if (used[static_cast<std::size_t>(v)]++) throw DataError("candidate vertices are not distinct");
    }
  for (int v : in.demand)
    if (v < 0 || v >= in.graph.size()) throw DataError("demand vertex out of range");
}

/// Builds the instance from each driver's (full, none) candidate vertices in
/// `graph`. A driver indifferent between the two gets a duplicate as its full
/// vertex; a vertex already claimed by an earlier slot is duplicated.
inline InfoSharingInstance build_instance(const MetricGraph& graph, std::span<const CandidatePair> candidates) {
  InfoSharingInstance in;
  in.graph = graph;
  in.origin.resize(static_cast<std::size_t>(graph.size()));
  std::iota(in.origin.begin(), in.origin.end(), 0);
  for (int v = 0; v < graph.size(); ++v)
    if (graph.pa(v) > 0.0) in.demand.push_back(v);

  std::vector<char> used(static_cast<std::size_t>(graph.size()), 0);
  auto claim = [&](int v) {
    if (!used[static_cast<std::size_t>(v)]) {
      used[static_cast<std::size_t>(v)] = 1;
      return v;
    }
    const int copy = add_duplicate_vertex(in.graph, v);
    in.origin.push_back(in.origin[static_cast<std::size_t>(v)]);
    used.push_back(1);
    return copy;
  };
  for (const auto& c : candidates) {
    SharingPair p;
    p.driver_id = c.driver_id;
    p.none = claim(c.none.vertex);
    p.full = claim(c.full.vertex);
    in.pairs.push_back(p);
  }
  return in;
}

/// Computes candidate pairs for every driver in `fleet` and builds the instance.
inline InfoSharingInstance build_instance(const MetricGraph& graph, const EconomicParams& params,
                                          std::span<const DriverState> fleet) {
  if (fleet.empty()) throw DataError("no drivers");
  std::vector<CandidatePair> cands;
  for (const auto& d : fleet) cands.push_back(candidate_locations(graph, params, d, fleet));
  return build_instance(graph, cands);
}

// ---------------------------------------------------------------------------
// Integer program and relaxations

/// The integer program with y_u for every candidate slot (pair i: slots 2i
/// for full, 2i+1 for none) followed by x_{u,v} in slot-major, demand-minor
/// order.
struct SharingIlp {
  LinearProgram lp;
  std::vector<bool> integer;
  int slots = 0;
  int demands = 0;

  int y(int slot) const { return slot; }
  int x(int slot, int demand_index) const { return slots + slot * demands + demand_index; }
};

inline SharingIlp build_ilp(const InfoSharingInstance& in) {
  SharingIlp ilp;
  ilp.slots = 2 * in.m();
  ilp.demands = static_cast<int>(in.demand.size());
  auto& lp = ilp.lp;
  for (int s = 0; s < ilp.slots; ++s) lp.add_variable(0.0, 0.0, 1.0);
  for (int s = 0; s < ilp.slots; ++s) {
    const int u = in.slot_vertex(s);
    for (int v : in.demand) lp.add_variable(in.graph.pa(v) * in.graph.c(u, v), 0.0, 1.0);
  }
  ilp.integer.assign(static_cast<std::size_t>(lp.variables()), true);

  for (int k = 0; k < ilp.demands; ++k) {
    std::vector<std::pair<int, double>> terms;
    for (int s = 0; s < ilp.slots; ++s) terms.emplace_back(ilp.x(s, k), 1.0);
    lp.add_row(std::move(terms), Relation::Equal, 1.0);
  }
  for (int s = 0; s < ilp.slots; ++s)
    for (int k = 0; k < ilp.demands; ++k) lp.add_row({{ilp.x(s, k), 1.0}, {ilp.y(s), -1.0}}, Relation::LessEqual, 0.0);
  for (int i = 0; i < in.m(); ++i) lp.add_row({{ilp.y(2 * i), 1.0}, {ilp.y(2 * i + 1), 1.0}}, Relation::Equal, 1.0);
  return ilp;
}

/// Fractional openings y per slot and the relaxation's optimal value.
struct Relaxation {
  LpStatus status = LpStatus::Infeasible;
  double objective = 0.0;
  std::vector<double> y;
  int iterations = 0;
};

inline Relaxation relax_full(const InfoSharingInstance& in, SimplexOptions opt = {}) {
  const auto ilp = build_ilp(in);
  const auto res = solve(ilp.lp, opt);
  Relaxation r;
  r.status = res.status;
  r.iterations = res.iterations;
  if (res.status != LpStatus::Optimal) return r;
  r.objective = res.objective_value;
  r.y.assign(res.values.begin(), res.values.begin() + ilp.slots);
  return r;
}

/// Same optimum as the full relaxation with far fewer variables:
///  - indifferent pairs (both slots copies of one vertex) are opened outright;
///  - candidates copying the same vertex share one x per demand, bounded by
///    the sum of their y;
///  - demand v is served at most at U_v = min over pairs of the farther slot,
///    which some split of every pair attains, so farther candidates are
///    replaced by one uncapacitated slack at cost U_v;
///  - demands with no candidate strictly closer than U_v become constants.
inline Relaxation relax_reduced(const InfoSharingInstance& in, SimplexOptions opt = {}) {
  const int m = in.m();
  if (m == 0) throw DataError("instance has no candidate pairs");
  const auto& g = in.graph;
  auto origin = [&](int v) { return in.origin[static_cast<std::size_t>(v)]; };

  Relaxation r;
  r.y.assign(static_cast<std::size_t>(2 * m), 0.0);
  std::vector<int> open;        // origins always open
  std::vector<int> live_pairs;  // pairs with a real choice
  for (int i = 0; i < m; ++i) {
    const auto& p = in.pairs[static_cast<std::size_t>(i)];
    if (origin(p.full) == origin(p.none)) {
      r.y[static_cast<std::size_t>(2 * i + 1)] = 1.0;
      open.push_back(origin(p.none));
    } else {
      live_pairs.push_back(i);
    }
  }

  LinearProgram lp;
  std::vector<int> yvar(static_cast<std::size_t>(2 * m), -1);
  std::map<int, std::vector<int>> groups;  // origin -> y variables
  for (int i : live_pairs) {
    for (int s : {2 * i, 2 * i + 1}) {
      yvar[static_cast<std::size_t>(s)] = lp.add_variable(0.0, 0.0, 1.0);
      groups[origin(in.slot_vertex(s))].push_back(yvar[static_cast<std::size_t>(s)]);
    }
    lp.add_row({{yvar[static_cast<std::size_t>(2 * i)], 1.0}, {yvar[static_cast<std::size_t>(2 * i + 1)], 1.0}},
               Relation::Equal, 1.0);
  }

  double constant = 0.0;
  for (int v : in.demand) {
    double bound = kInfDistance;
    for (int o : open) bound = std::min(bound, g.c(o, v));
    for (int i : live_pairs) {
      const auto& p = in.pairs[static_cast<std::size_t>(i)];
      bound = std::min(bound, std::max(g.c(p.full, v), g.c(p.none, v)));
    }
    const double w = g.pa(v);
    std::vector<std::pair<int, double>> cover;
    for (const auto& [o, ys] : groups) {
      if (!(g.c(o, v) < bound)) continue;
      const int x = lp.add_variable(w * g.c(o, v), 0.0, 1.0);
      cover.emplace_back(x, 1.0);
      std::vector<std::pair<int, double>> link{{x, 1.0}};
      for (int y : ys) link.emplace_back(y, -1.0);
      lp.add_row(std::move(link), Relation::LessEqual, 0.0);
    }
    if (cover.empty()) {
      constant += w * bound;
      continue;
    }
    cover.emplace_back(lp.add_variable(w * bound, 0.0, 1.0), 1.0);
    lp.add_row(std::move(cover), Relation::Equal, 1.0);
  }

  if (lp.variables() == 0) {
    r.status = LpStatus::Optimal;
    r.objective = constant;
    return r;
  }
  const auto res = solve(lp, opt);
  r.status = res.status;
  r.iterations = res.iterations;
  if (res.status != LpStatus::Optimal) return r;
  r.objective = res.objective_value + constant;
  for (int s = 0; s < 2 * m; ++s)
    if (yvar[static_cast<std::size_t>(s)] >= 0)
      r.y[static_cast<std::size_t>(s)] = res.values[static_cast<std::size_t>(yvar[static_cast<std::size_t>(s)])];
  return r;
}

// ---------------------------------------------------------------------------
// Decisions

struct SharingDecision {
  std::vector<Share> share;          // per pair
  std::vector<int> configuration;    // instance vertex per pair
  std::vector<int> locations;        // original vertex per pair
  std::vector<int> informed;         // driver ids that receive the snapshot
  double objective = 0.0;            // D(Q')
  double lp_bound = std::nan("");    // relaxation value when rounded

  double gap() const { return std::isnan(lp_bound) ? std::nan("") : objective - lp_bound; }
};

/// D of the configuration that takes slot `share[i]` from every pair.
inline double sharing_objective(const InfoSharingInstance& in, const std::vector<Share>& share) {
  double d = 0.0;
  for (int v : in.demand) {
    double best = kInfDistance;
    for (int i = 0; i < in.m(); ++i) best = std::min(best, in.graph.c(in.vertex(i, share[static_cast<std::size_t>(i)]), v));
    d += in.graph.pa(v) * best;
  }
  return d;
}

inline SharingDecision make_decision(const InfoSharingInstance& in, std::vector<Share> share) {
  SharingDecision d;
  d.share = std::move(share);
  for (int i = 0; i < in.m(); ++i) {
    const int v = in.vertex(i, d.share[static_cast<std::size_t>(i)]);
    d.configuration.push_back(v);
    d.locations.push_back(in.origin[static_cast<std::size_t>(v)]);
    if (d.share[static_cast<std::size_t>(i)] == Share::Full) d.informed.push_back(in.pairs[static_cast<std::size_t>(i)].driver_id);
  }
  d.objective = in.m() > 0 && !in.demand.empty() ? sharing_objective(in, d.share) : 0.0;
  return d;
}

/// Opens the slot with y > 1/2; an exact half goes to the no-information
/// slot. Demand is then served by the nearest opened vertex.
inline SharingDecision round_solution(const InfoSharingInstance& in, const Relaxation& relaxation) {
  if (relaxation.status != LpStatus::Optimal) throw std::invalid_argument("rounding needs an optimal relaxation");
  std::vector<Share> share(static_cast<std::size_t>(in.m()), Share::None);
  for (int i = 0; i < in.m(); ++i)
    if (relaxation.y[static_cast<std::size_t>(2 * i)] > 0.5 + kRoundingTieTolerance) share[static_cast<std::size_t>(i)] = Share::Full;
  auto d = make_decision(in, std::move(share));
  d.lp_bound = relaxation.objective;
  return d;
}

inline SharingDecision solve_lp_rounding(const InfoSharingInstance& in, SimplexOptions opt = {}) {
  return round_solution(in, relax_reduced(in, opt));
}

/// Exhaustive optimum. Selections are scanned in lexicographic order with
/// pair 0 most significant and none before full; the first minimum wins.
inline SharingDecision solve_bruteforce(const InfoSharingInstance& in) {
  const int m = in.m();
  if (m > kMaxBruteForcePairs)
    throw ConfigError("brute force limited to " + std::to_string(kMaxBruteForcePairs) + " pairs");
  const std::size_t nd = in.demand.size();
  std::vector<std::vector<double>> dist(static_cast<std::size_t>(2 * m), std::vector<double>(nd));
  for (int s = 0; s < 2 * m; ++s)
    for (std::size_t k = 0; k < nd; ++k)
      dist[static_cast<std::size_t>(s)][k] = in.graph.pa(in.demand[k]) * in.graph.c(in.slot_vertex(s), in.demand[k]);

  std::uint64_t best_mask = 0;
  double best = kInfDistance;
  std::vector<double> near(nd);
  const std::uint64_t total = std::uint64_t{1} << m;
  for (std::uint64_t mask = 0; mask < total; ++mask) {
    std::fill(near.begin(), near.end(), kInfDistance);
    for (int i = 0; i < m; ++i) {
      const bool full = (mask >> (m - 1 - i)) & 1U;
      const auto& row = dist[static_cast<std::size_t>(2 * i + (full ? 0 : 1))];
      for (std::size_t k = 0; k < nd; ++k) near[k] = std::min(near[k], row[k]);
    }
    double d = 0.0;
    for (double x : near) d += x;
    if (nd == 0) d = 0.0;
    if (mask == 0 || d < best - 1e-12 * std::max(1.0, best)) {
      best = d;
      best_mask = mask;
    }
  }
  std::vector<Share> share(static_cast<std::size_t>(m));
  for (int i = 0; i < m; ++i) share[static_cast<std::size_t>(i)] = (best_mask >> (m - 1 - i)) & 1U ? Share::Full : Share::None;
  return make_decision(in, std::move(share));
}

// ---------------------------------------------------------------------------
// CNF reduction

struct Cnf {
  int variables = 0;
  std::vector<std::vector<int>> clauses;  // literals +-(1..variables)
};

/// Parses DIMACS text: `c` comment lines, a `p cnf <vars> <clauses>` header,
/// then zero-terminated clauses.
inline Cnf parse_dimacs(std::istream& in) {
  Cnf f;
  int declared = -1;
  std::string line;
  std::vector<int> current;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::istringstream ls(line);
    std::string tok;
    if (!(ls >> tok) || tok == "c" || tok[0] == 'c' || tok == "%") continue;
    if (tok == "p") {
      std::string kind;
      if (!(ls >> kind >> f.variables >> declared) || kind != "cnf" || f.variables < 0 || declared < 0)
        throw DataError("line " + std::to_string(lineno) + ": malformed problem line");
      continue;
    }
    if (declared < 0) throw DataError("line " + std::to_string(lineno) + ": clause before problem line");
    ls.clear();
    ls.str(line);
    long long lit = 0;
    while (ls >> tok) {
      try {
        std::size_t used = 0;
        lit = std::stoll(tok, &used);
        if (used != tok.size()) throw std::invalid_argument(tok);
      } catch (const std::exception&) {
        throw DataError("line " + std::to_string(lineno) + ": bad literal '" + tok + "'");
      }
      if (lit == 0) {
        f.clauses.push_back(current);
        current.clear();
      } else {
        if (std::llabs(lit) > f.variables) throw DataError("line " + std::to_string(lineno) + ": literal out of range");
        current.push_back(static_cast<int>(lit));
      }
    }
  }
  if (declared < 0) throw DataError("missing problem line");
  if (!current.empty()) f.clauses.push_back(current);
  if (static_cast<int>(f.clauses.size()) != declared)
    throw DataError("expected " + std::to_string(declared) + " clauses, found " + std::to_string(f.clauses.size()));
  return f;
}

inline Cnf parse_dimacs(const std::string& text) {
  std::istringstream in(text);
  return parse_dimacs(in);
}

inline void write_dimacs(std::ostream& out, const Cnf& f) {
  out << "p cnf " << f.variables << ' ' << f.clauses.size() << '\n';
  for (const auto& c : f.clauses) {
    for (int l : c) out << l << ' ';
    out << "0\n";
  }
}

/// Variable j has a true vertex 2j and a false vertex 2j+1 forming pair j
/// (full = true). Clause k is demand vertex 2n+k with probability 1/m. A
/// literal vertex is at distance 1 from the clauses containing it; every
/// other pair of distinct vertices is at distance 2. The optimum is 1 exactly
/// when the formula is satisfiable.
inline InfoSharingInstance sat_to_instance(const Cnf& f) {
  const int n = f.variables;
  const int m = static_cast<int>(f.clauses.size());
  if (n <= 0 || m <= 0) throw DataError("formula needs variables and clauses");
  const int size = 2 * n + m;
  InfoSharingInstance in;
  auto& g = in.graph;
  g.cost = Matrix(static_cast<std::size_t>(size), static_cast<std::size_t>(size), 2.0);
  g.dropoff = Matrix(static_cast<std::size_t>(size), static_cast<std::size_t>(size), 1.0 / size);
  for (int v = 0; v < size; ++v) {
    g.cost(static_cast<std::size_t>(v), static_cast<std::size_t>(v)) = 0.0;
    const double pa = v >= 2 * n ? 1.0 / m : 0.0;
    g.vertices.push_back({v, {}, pa, pa});
  }
  for (int k = 0; k < m; ++k) {
    for (int lit : f.clauses[static_cast<std::size_t>(k)]) {
      if (lit == 0 || std::abs(lit) > n) throw DataError("literal out of range");
      const auto u = static_cast<std::size_t>(2 * (std::abs(lit) - 1) + (lit > 0 ? 0 : 1));
      const auto v = static_cast<std::size_t>(2 * n + k);
      g.cost(u, v) = g.cost(v, u) = 1.0;
    }
  }
  in.origin.resize(static_cast<std::size_t>(size));
  std::iota(in.origin.begin(), in.origin.end(), 0);
  for (int j = 0; j < n; ++j) in.pairs.push_back({j, 2 * j, 2 * j + 1});
  for (int k = 0; k < m; ++k) in.demand.push_back(2 * n + k);
  return in;
}

/// Truth assignment read off a decision on a reduced formula.
inline std::vector<bool> assignment_of(const SharingDecision& d) {
  std::vector<bool> a;
  for (Share s : d.share) a.push_back(s == Share::Full);
  return a;
}

// ---------------------------------------------------------------------------
// JSON

inline void to_json(nlohmann::json& j, const SharingPair& p) {
  j = {{"driver", p.driver_id}, {"full", p.full}, {"none", p.none}};
}

inline void from_json(const nlohmann::json& j, SharingPair& p) {
  p.driver_id = j.at("driver").get<int>();
  p.full = j.at("full").get<int>();
  p.none = j.at("none").get<int>();
}

inline void to_json(nlohmann::json& j, const InfoSharingInstance& in) {
  j = {{"graph", in.graph}, {"origin", in.origin}, {"pairs", in.pairs}, {"demand", in.demand}};
}

inline void from_json(const nlohmann::json& j, InfoSharingInstance& in) {
  in.graph = j.at("graph").get<MetricGraph>();
  in.origin = j.at("origin").get<std::vector<int>>();
  in.pairs = j.at("pairs").get<std::vector<SharingPair>>();
  in.demand = j.at("demand").get<std::vector<int>>();
  check_instance(in);
}

inline void to_json(nlohmann::json& j, const SharingDecision& d) {
  std::vector<std::string> share;
  for (Share s : d.share) share.emplace_back(to_string(s));
  j = {{"share", share}, {"configuration", d.configuration}, {"locations", d.locations},
       {"informed", d.informed}, {"objective", d.objective}};
  if (!std::isnan(d.lp_bound)) j["lp_bound"] = d.lp_bound;
}

}  // namespace rsctl
