#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "rsctl/core.hpp"

namespace rsctl {

inline constexpr double kMetricTolerance = 1e-9;
inline constexpr double kEarthRadiusMeters = 6371008.8;
inline constexpr double kDefaultSpeedKmh = 30.0;
inline constexpr double kInfDistance = std::numeric_limits<double>::infinity();

struct RawPickup {
  double latitude = 0.0;   // degrees
  double longitude = 0.0;  // degrees
  double timestamp = 0.0;  // seconds since epoch
};

struct Point {
  double x = 0.0;  // meters
  double y = 0.0;  // meters
};

inline double distance(Point a, Point b) { return std::hypot(a.x - b.x, a.y - b.y); }

struct Vertex {
  int id = 0;
  Point position;
  double arrival_rate = 0.0;  // requests per minute
  double arrival_prob = 0.0;
};

enum class DropoffMode { Uniform };

/// Complete metric graph over demand clusters.
///
/// `cost(u, v)` is the travel time in minutes. `dropoff(v, w)` is the
/// probability that a ride picked up at `v` ends at `w`. Immutable once built,
/// except for `add_duplicate_vertex`, which only appends.
struct MetricGraph {
  std::vector<Vertex> vertices;
  Matrix cost;
  Matrix dropoff;
  double speed_kmh = kDefaultSpeedKmh;

  int size() const { return static_cast<int>(vertices.size()); }
  double c(int u, int v) const {
    return cost(static_cast<std::size_t>(u), static_cast<std::size_t>(v));
  }
  double pd(int v, int w) const {
    return dropoff(static_cast<std::size_t>(v), static_cast<std::size_t>(w));
  }
  double pa(int u) const { return vertices[static_cast<std::size_t>(u)].arrival_prob; }
  double rate(int u) const { return vertices[static_cast<std::size_t>(u)].arrival_rate; }
};

// ---------------------------------------------------------------------------
// Projection and clustering

/// Local equirectangular projection around the mean coordinate of `pickups`.
/// Errors are well below 0.1% at city scale.
struct Projection {
  double lat0 = 0.0;
  double lon0 = 0.0;

  static Projection around(std::span<const RawPickup> pickups) {
    Projection p;
    if (pickups.empty()) return p;
    for (const auto& r : pickups) {
      p.lat0 += r.latitude;
      p.lon0 += r.longitude;
    }
    p.lat0 /= static_cast<double>(pickups.size());
    p.lon0 /= static_cast<double>(pickups.size());
    return p;
  }

  Point project(double latitude, double longitude) const {
    constexpr double kDeg = 3.14159265358979323846 / 180.0;
    return {kEarthRadiusMeters * (longitude - lon0) * kDeg * std::cos(lat0 * kDeg),
            kEarthRadiusMeters * (latitude - lat0) * kDeg};
  }
};

inline void check_pickup(const RawPickup& p) {
  if (!(p.latitude >= -90.0 && p.latitude <= 90.0))
    throw DataError("latitude out of range: " + std::to_string(p.latitude));
  if (!(p.longitude >= -180.0 && p.longitude <= 180.0))
    throw DataError("longitude out of range: " + std::to_string(p.longitude));
}

struct DemandEstimate {
  double arrival_rate;
  double arrival_prob;
};

/// Per-vertex Poisson rate (count / horizon) and arrival probability
/// (count / total count).
inline std::vector<DemandEstimate> estimate_demand(std::span<const double> counts, double horizon_minutes) {
  if (!(horizon_minutes > 0.0)) throw DataError("horizon must be positive");
  const double total = std::accumulate(counts.begin(), counts.end(), 0.0);
  if (!(total > 0.0)) throw DataError("no requests in demand estimate");
  std::vector<DemandEstimate> out;
  out.reserve(counts.size());
  for (double c : counts) out.push_back({c / horizon_minutes, c / total});
  return out;
}

/// Greedy first-fit clustering of planar points with a complete-linkage
/// diameter bound. Each point joins the lowest-index cluster whose members
/// all lie within `radius`; otherwise it opens a new cluster. Returns the
/// cluster index of every point.
inline std::vector<int> cluster_points(std::span<const Point> points, double radius) {
  if (radius < 0.0) throw DataError("cluster radius must be nonnegative");
  const double cell = radius > 0.0 ? radius : 1.0;
  auto key = [cell](Point p) {
    return std::pair<long long, long long>{static_cast<long long>(std::floor(p.x / cell)),
                                           static_cast<long long>(std::floor(p.y / cell))};
  };
  // Clusters are indexed by the grid cell of their first member; any member of
  // an acceptable cluster, in particular the first, lies within one cell.
  std::map<std::pair<long long, long long>, std::vector<int>> by_cell;
  std::vector<std::vector<int>> members;
  std::vector<int> label(points.size(), -1);
  std::vector<int> candidates;
  for (std::size_t i = 0; i < points.size(); ++i) {
    const Point p = points[i];
    const auto [cx, cy] = key(p);
    candidates.clear();
    for (long long dx = -1; dx <= 1; ++dx)
      for (long long dy = -1; dy <= 1; ++dy) {
        auto it = by_cell.find({cx + dx, cy + dy});
        if (it != by_cell.end()) candidates.insert(candidates.end(), it->second.begin(), it->second.end());
      }
    std::sort(candidates.begin(), candidates.end());
    int chosen = -1;
    for (int k : candidates) {
      const auto& m = members[static_cast<std::size_t>(k)];
      bool fits = std::all_of(m.begin(), m.end(), [&](int j) {
        return distance(points[static_cast<std::size_t>(j)], p) <= radius;
      });
      if (fits) {
        chosen = k;
        break;
      }
    }
    if (chosen < 0) {
      chosen = static_cast<int>(members.size());
      members.emplace_back();
      by_cell[{cx, cy}].push_back(chosen);
    }
    members[static_cast<std::size_t>(chosen)].push_back(static_cast<int>(i));
    label[i] = chosen;
  }
  return label;
}

struct ClusteringResult {
  std::vector<Vertex> vertices;
  std::vector<int> assignment;  // pickup index -> vertex id
  std::vector<double> counts;   // pickups per vertex
  Projection projection;
};

/// Clusters raw pickups so that no two pickups in a cluster are farther than
/// `radius` meters apart. Vertex positions are pickup centroids; demand is
/// estimated over `horizon_minutes`, or over the timestamp span when the
/// horizon is not positive (one minute if all timestamps coincide).
inline ClusteringResult cluster_pickups_detailed(std::span<const RawPickup> pickups, double radius,
                                                 double horizon_minutes = 0.0) {
  if (pickups.empty()) throw DataError("no pickups");
  for (const auto& p : pickups) check_pickup(p);

  ClusteringResult result;
  result.projection = Projection::around(pickups);

  // Identical coordinates always land in the same cluster, so cluster the
  // distinct locations in first-appearance order.
  std::map<std::pair<double, double>, int> location_index;
  std::vector<Point> locations;
  std::vector<int> pickup_location(pickups.size());
  for (std::size_t i = 0; i < pickups.size(); ++i) {
    auto [it, inserted] =
        location_index.try_emplace({pickups[i].latitude, pickups[i].longitude}, static_cast<int>(locations.size()));
    if (inserted) locations.push_back(result.projection.project(pickups[i].latitude, pickups[i].longitude));
    pickup_location[i] = it->second;
  }
  const auto location_cluster = cluster_points(locations, radius);
  const int n = location_cluster.empty() ? 0 : *std::max_element(location_cluster.begin(), location_cluster.end()) + 1;

  std::vector<Point> sum(static_cast<std::size_t>(n));
  result.counts.assign(static_cast<std::size_t>(n), 0.0);
  result.assignment.resize(pickups.size());
  for (std::size_t i = 0; i < pickups.size(); ++i) {
    const int k = location_cluster[static_cast<std::size_t>(pickup_location[i])];
    const Point p = locations[static_cast<std::size_t>(pickup_location[i])];
    sum[static_cast<std::size_t>(k)].x += p.x;
    sum[static_cast<std::size_t>(k)].y += p.y;
    result.counts[static_cast<std::size_t>(k)] += 1.0;
    result.assignment[i] = k;
  }

  double horizon = horizon_minutes;
  if (!(horizon > 0.0)) {
    auto [lo, hi] = std::minmax_element(pickups.begin(), pickups.end(),
                                        [](const auto& a, const auto& b) { return a.timestamp < b.timestamp; });
    horizon = (hi->timestamp - lo->timestamp) / 60.0;
    if (!(horizon > 0.0)) horizon = 1.0;
  }
  const auto demand = estimate_demand(result.counts, horizon);
  result.vertices.resize(static_cast<std::size_t>(n));
  for (int k = 0; k < n; ++k) {
    auto& v = result.vertices[static_cast<std::size_t>(k)];
    const double cnt = result.counts[static_cast<std::size_t>(k)];
    v.id = k;
    v.position = {sum[static_cast<std::size_t>(k)].x / cnt, sum[static_cast<std::size_t>(k)].y / cnt};
    v.arrival_rate = demand[static_cast<std::size_t>(k)].arrival_rate;
    v.arrival_prob = demand[static_cast<std::size_t>(k)].arrival_prob;
  }
  return result;
}

inline std::vector<Vertex> cluster_pickups(std::span<const RawPickup> pickups, double radius,
                                           double horizon_minutes = 0.0) {
  return cluster_pickups_detailed(pickups, radius, horizon_minutes).vertices;
}

/// Keeps the `k` vertices with the highest arrival rate (ties by id), renumbers
/// them in their original order and renormalizes arrival probabilities.
inline std::vector<Vertex> keep_busiest(std::vector<Vertex> vertices, int k) {
  if (k <= 0 || k >= static_cast<int>(vertices.size())) return vertices;
  std::vector<int> order(vertices.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return vertices[static_cast<std::size_t>(a)].arrival_rate > vertices[static_cast<std::size_t>(b)].arrival_rate;
  });
  order.resize(static_cast<std::size_t>(k));
  std::sort(order.begin(), order.end());
  std::vector<Vertex> kept;
  double total = 0.0;
  for (int idx : order) total += vertices[static_cast<std::size_t>(idx)].arrival_rate;
  for (int idx : order) {
    Vertex v = vertices[static_cast<std::size_t>(idx)];
    v.id = static_cast<int>(kept.size());
    v.arrival_prob = total > 0.0 ? v.arrival_rate / total : 1.0 / k;
    kept.push_back(v);
  }
  return kept;
}

// ---------------------------------------------------------------------------
// Graph construction and checks

inline MetricGraph build_complete_metric(std::vector<Vertex> vertices, DropoffMode mode = DropoffMode::Uniform,
                                         double speed_kmh = kDefaultSpeedKmh) {
  if (vertices.empty()) throw DataError("graph needs at least one vertex");
  if (!(speed_kmh > 0.0)) throw ConfigError("speed must be positive");
  const std::size_t n = vertices.size();
  MetricGraph g;
  g.speed_kmh = speed_kmh;
  const double meters_per_minute = speed_kmh * 1000.0 / 60.0;
  g.cost = Matrix(n, n);
  for (std::size_t u = 0; u < n; ++u) {
    vertices[u].id = static_cast<int>(u);
    for (std::size_t v = u + 1; v < n; ++v) {
      const double t = distance(vertices[u].position, vertices[v].position) / meters_per_minute;
      g.cost(u, v) = t;
      g.cost(v, u) = t;
    }
  }
  switch (mode) {
    case DropoffMode::Uniform:
      g.dropoff = Matrix(n, n, 1.0 / static_cast<double>(n));
      break;
  }
  g.vertices = std::move(vertices);
  return g;
}

struct MetricViolation {
  enum class Kind { Asymmetric, Triangle, Negative, NonzeroDiagonal };
  Kind kind;
  int u;
  int v;
  int w;          // intermediate vertex for triangle violations, -1 otherwise
  double excess;  // amount by which the condition fails
};

/// All asymmetric pairs and triangle violations beyond 1e-9 (plus negative or
/// nonzero-diagonal entries). Empty means the costs form a metric.
inline std::vector<MetricViolation> validate_metric(const MetricGraph& g) {
  std::vector<MetricViolation> out;
  const int n = g.size();
  for (int u = 0; u < n; ++u) {
    if (std::abs(g.c(u, u)) > kMetricTolerance)
      out.push_back({MetricViolation::Kind::NonzeroDiagonal, u, u, -1, std::abs(g.c(u, u))});
    for (int v = 0; v < n; ++v) {
      if (g.c(u, v) < -kMetricTolerance) out.push_back({MetricViolation::Kind::Negative, u, v, -1, -g.c(u, v)});
      if (u < v && std::abs(g.c(u, v) - g.c(v, u)) > kMetricTolerance)
        out.push_back({MetricViolation::Kind::Asymmetric, u, v, -1, std::abs(g.c(u, v) - g.c(v, u))});
    }
  }
  for (int u = 0; u < n; ++u)
    for (int w = u + 1; w < n; ++w) {
      const double direct = g.c(u, w);
      for (int v = 0; v < n; ++v) {
        if (v == u || v == w) continue;
        const double excess = direct - (g.c(u, v) + g.c(v, w));
        if (excess > kMetricTolerance) out.push_back({MetricViolation::Kind::Triangle, u, w, v, excess});
      }
    }
  return out;
}

/// Appends a copy of `source` at zero distance from it. The copy carries no
/// demand and inherits the source's drop-off distribution.
inline int add_duplicate_vertex(MetricGraph& g, int source) {
  if (source < 0 || source >= g.size()) throw DataError("duplicate source out of range");
  const auto n = static_cast<std::size_t>(g.size());
  const auto s = static_cast<std::size_t>(source);
  g.cost.grow_square();
  g.dropoff.grow_square();
  for (std::size_t x = 0; x < n; ++x) {
    g.cost(n, x) = g.cost(s, x);
    g.cost(x, n) = g.cost(x, s);
    g.dropoff(n, x) = g.dropoff(s, x);
  }
  g.cost(n, n) = 0.0;
  Vertex copy = g.vertices[s];
  copy.id = static_cast<int>(n);
  copy.arrival_rate = 0.0;
  copy.arrival_prob = 0.0;
  g.vertices.push_back(copy);
  return copy.id;
}

/// D(Q) = sum_u p_a(u) min_{q in Q} c(q, u), in minutes.
inline double expected_response_time(const MetricGraph& g, std::span<const int> configuration) {
  if (configuration.empty()) throw DataError("configuration is empty");
  double d = 0.0;
  for (int u = 0; u < g.size(); ++u) {
    if (g.pa(u) <= 0.0) continue;
    double best = kInfDistance;
    for (int q : configuration) best = std::min(best, g.c(q, u));
    d += g.pa(u) * best;
  }
  return d;
}

/// Demand-weighted mean ride duration in minutes.
inline double mean_ride_duration(const MetricGraph& g) {
  double total = 0.0;
  for (int v = 0; v < g.size(); ++v) {
    double ride = 0.0;
    for (int w = 0; w < g.size(); ++w) ride += g.pd(v, w) * g.c(v, w);
    total += g.pa(v) * ride;
  }
  return total;
}

/// Checks the structural invariants of a loaded graph; throws DataError.
inline void check_graph(const MetricGraph& g) {
  const auto n = static_cast<std::size_t>(g.size());
  if (n == 0) throw DataError("graph has no vertices");
  if (g.cost.rows() != n || g.cost.cols() != n) throw DataError("cost matrix shape mismatch");
  if (g.dropoff.rows() != n || g.dropoff.cols() != n) throw DataError("dropoff matrix shape mismatch");
  double total = 0.0;
  for (const auto& v : g.vertices) {
    if (v.arrival_rate < 0.0) throw DataError("negative arrival rate at vertex " + std::to_string(v.id));
    if (v.arrival_prob < 0.0 || v.arrival_prob > 1.0)
      throw DataError("arrival probability out of range at vertex " + std::to_string(v.id));
    total += v.arrival_prob;
  }
  if (std::abs(total - 1.0) > kMetricTolerance) throw DataError("arrival probabilities do not sum to 1");
  for (std::size_t v = 0; v < n; ++v) {
    double row = 0.0;
    for (std::size_t w = 0; w < n; ++w) row += g.dropoff(v, w);
    if (std::abs(row - 1.0) > kMetricTolerance)
      throw DataError("dropoff row " + std::to_string(v) + " does not sum to 1");
  }
}

// ---------------------------------------------------------------------------
// JSON snapshot

inline nlohmann::json matrix_to_json(const Matrix& m) {
  auto rows = nlohmann::json::array();
  for (std::size_t r = 0; r < m.rows(); ++r) rows.push_back(std::vector<double>(m.row(r), m.row(r) + m.cols()));
  return rows;
}

inline Matrix matrix_from_json(const nlohmann::json& j) {
  const std::size_t rows = j.size();
  const std::size_t cols = rows == 0 ? 0 : j.at(0).size();
  Matrix m(rows, cols);
  for (std::size_t r = 0; r < rows; ++r) {
    if (j.at(r).size() != cols) throw DataError("ragged matrix in JSON");
    for (std::size_t c = 0; c < cols; ++c) m(r, c) = j.at(r).at(c).get<double>();
  }
  return m;
}

inline void to_json(nlohmann::json& j, const Vertex& v) {
  j = {{"id", v.id}, {"x", v.position.x}, {"y", v.position.y},
       {"arrival_rate", v.arrival_rate}, {"arrival_prob", v.arrival_prob}};
}

inline void from_json(const nlohmann::json& j, Vertex& v) {
  v.id = j.at("id").get<int>();
  v.position = {j.at("x").get<double>(), j.at("y").get<double>()};
  v.arrival_rate = j.at("arrival_rate").get<double>();
  v.arrival_prob = j.at("arrival_prob").get<double>();
}

inline void to_json(nlohmann::json& j, const MetricGraph& g) {
  j = {{"speed_kmh", g.speed_kmh},
       {"vertices", g.vertices},
       {"cost", matrix_to_json(g.cost)},
       {"dropoff", matrix_to_json(g.dropoff)}};
}

inline void from_json(const nlohmann::json& j, MetricGraph& g) {
  g.speed_kmh = j.at("speed_kmh").get<double>();
  g.vertices = j.at("vertices").get<std::vector<Vertex>>();
  g.cost = matrix_from_json(j.at("cost"));
  g.dropoff = matrix_from_json(j.at("dropoff"));
  check_graph(g);
}

}  // namespace rsctl
