// One decision point on a jammed synthetic city: what each control does to
// the twenty drivers parked around the busiest cluster.
//
//   ./jam_controls [seed]

#include <cstdio>
#include <cstdlib>
#include <vector>

#include "rsctl/info_control.hpp"
#include "rsctl/pay_control.hpp"
#include "rsctl/simulation.hpp"
#include "rsctl/synthetic.hpp"

using namespace rsctl;

int main(int argc, char** argv) {
  const std::uint64_t seed = argc > 1 ? std::strtoull(argv[1], nullptr, 10) : 1;
  const MetricGraph g = manhattan_like_graph(2024);

  SimConfig cfg;
  cfg.scenario = ScenarioKind::Jammed;
  cfg.seed = seed;
  const auto start = init_scenario(cfg, g);
  const double budget = driver_budget(cfg, g);

  std::vector<DriverState> fleet;
  for (int i = 0; i < cfg.num_drivers; ++i) fleet.push_back({i, start[static_cast<std::size_t>(i)], budget, Info::None});
  const auto none_table = uninformed_profit_table(g, cfg.params, budget);

  std::vector<int> drift;
  for (const auto& d : fleet) drift.push_back(best_response(g, cfg.params, none_table, d.location, d.budget).vertex);
  std::printf("city: %d clusters, budget %.1f min\n", g.size(), budget);
  std::printf("D(jam)                 %.3f min\n", expected_response_time(g, start));
  std::printf("D(no control)          %.3f min\n", expected_response_time(g, drift));

  const auto sharing = solve_lp_rounding(build_instance(g, cfg.params, fleet));
  std::printf("D(share information)   %.3f min, LP bound %.3f, %zu of %d informed\n", sharing.objective,
              sharing.lp_bound, sharing.informed.size(), cfg.num_drivers);

  for (double beta : {1.0, 10.0}) {
    const auto mfl = build_mfl(g, relocation_weights(g, cfg.params, fleet, none_table), beta);
    const auto plan = solve_local_search(g, mfl, drift);
    std::printf("D(pay, beta=%4.1f)      %.3f min for $%.2f\n", beta, plan.response_time, plan.total_pay);
    if (beta == 10.0)
      for (const auto& o : extract_offers(plan))
        std::printf("  driver %2d: %2d -> %2d for $%.2f\n", o.driver_id,
                    start[static_cast<std::size_t>(o.driver_id)], o.target, o.payment);
  }
  return 0;
}
