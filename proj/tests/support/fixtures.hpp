#pragma once

// Small graphs and random generators shared by the unit suites.

#include <cstdint>
#include <vector>

#include "rsctl/metric_graph.hpp"
#include "rsctl/random.hpp"

namespace rsctl::testing {

// Vertices on a line at the given x positions (meters) with the given rates.
inline std::vector<Vertex> line_vertices(const std::vector<double>& xs, const std::vector<double>& rates) {
  std::vector<Vertex> out;
  double total = 0.0;
  for (double r : rates) total += r;
  for (std::size_t i = 0; i < xs.size(); ++i)
    out.push_back({static_cast<int>(i), {xs[i], 0.0}, rates[i], total > 0.0 ? rates[i] / total : 0.0});
  return out;
}

// Graph with an explicit cost matrix (minutes) and uniform drop-off.
inline MetricGraph explicit_graph(const std::vector<std::vector<double>>& cost, const std::vector<double>& rates) {
  const std::size_t n = cost.size();
  MetricGraph g;
  double total = 0.0;
  for (double r : rates) total += r;
  for (std::size_t i = 0; i < n; ++i)
    g.vertices.push_back({static_cast<int>(i), {0.0, 0.0}, rates[i], total > 0.0 ? rates[i] / total : 1.0 / n});
  g.cost = Matrix(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) g.cost(i, j) = cost[i][j];
  g.dropoff = Matrix(n, n, 1.0 / static_cast<double>(n));
  return g;
}

// Random Euclidean graph: `n` points in a `side`-meter square, rates in
// [0.01, 0.05], speed 30 km/h, uniform drop-off.
inline MetricGraph random_graph(Rng& rng, int n, double side = 3000.0) {
  std::vector<Vertex> vs;
  double total = 0.0;
  for (int i = 0; i < n; ++i) {
    const double rate = 0.01 + 0.04 * uniform01(rng);
    vs.push_back({i, {side * uniform01(rng), side * uniform01(rng)}, rate, 0.0});
    total += rate;
  }
  for (auto& v : vs) v.arrival_prob = v.arrival_rate / total;
  return build_complete_metric(vs);
}

}  // namespace rsctl::testing
