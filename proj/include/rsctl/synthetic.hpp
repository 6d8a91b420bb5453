#pragma once

// Synthetic pickups on a Manhattan-shaped strip, for runs without trip data.

#include <cmath>
#include <cstdint>
#include <vector>

#include "rsctl/metric_graph.hpp"
#include "rsctl/random.hpp"

namespace rsctl {

struct Hotspot {
  double latitude;
  double longitude;
  double spread_m;  // standard deviation
  double weight;
};

struct SyntheticCity {
  // Strip axis from the southern tip to the northern end, and its half-width.
  double south_lat = 40.7033, south_lon = -74.0170;
  double north_lat = 40.8000, north_lon = -73.9460;
  double half_width_m = 1100.0;
  double background = 0.25;  // share of pickups spread uniformly over the strip
  std::vector<Hotspot> hotspots{
      {40.7580, -73.9855, 500.0, 0.30},  // midtown
      {40.7527, -73.9772, 400.0, 0.15},  // grand central
      {40.7075, -74.0113, 450.0, 0.12},  // financial district
      {40.7336, -73.9950, 500.0, 0.10},  // village
      {40.7736, -73.9566, 600.0, 0.08},  // upper east
      {40.7870, -73.9754, 600.0, 0.05},  // upper west
  };
  double horizon_minutes = 24.0 * 60.0;
  double grid_deg = 1e-4;  // coordinates are snapped, so repeated locations occur
};

/// `count` pickups with timestamps uniform over the horizon.
inline std::vector<RawPickup> synthetic_pickups(const SyntheticCity& city, int count, std::uint64_t seed) {
  constexpr double kDeg = 3.14159265358979323846 / 180.0;
  const double m_per_deg_lat = kEarthRadiusMeters * kDeg;
  const double m_per_deg_lon = m_per_deg_lat * std::cos(city.south_lat * kDeg);
  const double ax = (city.north_lon - city.south_lon) * m_per_deg_lon;
  const double ay = (city.north_lat - city.south_lat) * m_per_deg_lat;
  const double len = std::hypot(ax, ay);
  const double ux = ax / len, uy = ay / len;  // along the strip
  const double nx = -uy, ny = ux;             // across it

  Rng rng(seed);
  std::vector<double> weights{city.background};
  for (const auto& h : city.hotspots) weights.push_back(h.weight);
  auto normal = [&rng]() {
    const double u1 = 1.0 - uniform01(rng), u2 = uniform01(rng);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
  };
  auto snap = [&](double x) { return std::round(x / city.grid_deg) * city.grid_deg; };

  std::vector<RawPickup> out;
  out.reserve(static_cast<std::size_t>(count));
  while (static_cast<int>(out.size()) < count) {
    const int k = sample_discrete(rng, weights);
    double x = 0.0, y = 0.0;  // meters east / north of the southern tip
    if (k == 0) {
      const double s = len * uniform01(rng), w = city.half_width_m * (2.0 * uniform01(rng) - 1.0);
      x = s * ux + w * nx;
      y = s * uy + w * ny;
    } else {
      const auto& h = city.hotspots[static_cast<std::size_t>(k - 1)];
      x = (h.longitude - city.south_lon) * m_per_deg_lon + h.spread_m * normal();
      y = (h.latitude - city.south_lat) * m_per_deg_lat + h.spread_m * normal();
    }
    // Keep the point on the strip.
    const double along = x * ux + y * uy, across = x * nx + y * ny;
    if (along < 0.0 || along > len || std::abs(across) > city.half_width_m) continue;
    RawPickup p;
    p.latitude = snap(city.south_lat + y / m_per_deg_lat);
    p.longitude = snap(city.south_lon + x / m_per_deg_lon);
    p.timestamp = 60.0 * city.horizon_minutes * uniform01(rng);
    out.push_back(p);
  }
  return out;
}

/// Clusters `pickups` at `radius` meters, keeps the `keep` busiest clusters
/// and scales arrival rates so the busiest vertex sees `max_rate` per minute.
inline MetricGraph desk_scale_graph(std::span<const RawPickup> pickups, double radius, int keep, double max_rate,
                                    double speed_kmh = kDefaultSpeedKmh) {
  auto vertices = keep_busiest(cluster_pickups(pickups, radius), keep);
  double top = 0.0;
  for (const auto& v : vertices) top = std::max(top, v.arrival_rate);
  if (!(top > 0.0)) throw DataError("no demand in pickups");
  for (auto& v : vertices) v.arrival_rate *= max_rate / top;
  return build_complete_metric(std::move(vertices), DropoffMode::Uniform, speed_kmh);
}

inline MetricGraph manhattan_like_graph(std::uint64_t seed, int pickups = 5000, int keep = 40,
                                        double max_rate = 0.03) {
  const auto raw = synthetic_pickups(SyntheticCity{}, pickups, seed);
  return desk_scale_graph(raw, 500.0, keep, max_rate);
}

}  // namespace rsctl
