#pragma once

// Poisson request streams served by the nearest idle driver, with a control
// applied to the idle drivers before every arrival.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <exception>
#include <functional>
#include <limits>
#include <mutex>
#include <numeric>
#include <ostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "rsctl/core.hpp"
#include "rsctl/driver_model.hpp"
#include "rsctl/info_control.hpp"
#include "rsctl/metric_graph.hpp"
#include "rsctl/pay_control.hpp"
#include "rsctl/random.hpp"
#include "rsctl/stats.hpp"

namespace rsctl {

enum class ScenarioKind { Random, Jammed };
enum class ControlKind { None, InfoShare, Pay };
enum class StepOrder { ControlThenDispatch, DispatchThenControl };

inline const char* to_string(ScenarioKind s) { return s == ScenarioKind::Jammed ? "jammed" : "random"; }

inline const char* to_string(ControlKind c) {
  switch (c) {
    case ControlKind::InfoShare: return "info";
    case ControlKind::Pay: return "pay";
    default: return "none";
  }
}

inline const char* to_string(StepOrder o) {
  return o == StepOrder::DispatchThenControl ? "dispatch_then_control" : "control_then_dispatch";
}

inline ScenarioKind parse_scenario(const std::string& s) {
  if (s == "random") return ScenarioKind::Random;
  if (s == "jammed") return ScenarioKind::Jammed;
  throw ConfigError("scenario must be random or jammed, got '" + s + "'");
}

inline ControlKind parse_control(const std::string& s) {
  if (s == "none") return ControlKind::None;
  if (s == "info") return ControlKind::InfoShare;
  if (s == "pay") return ControlKind::Pay;
  throw ConfigError("control must be none, info or pay, got '" + s + "'");
}

inline StepOrder parse_order(const std::string& s) {
  if (s == "control_then_dispatch") return StepOrder::ControlThenDispatch;
  if (s == "dispatch_then_control") return StepOrder::DispatchThenControl;
  throw ConfigError("order must be control_then_dispatch or dispatch_then_control, got '" + s + "'");
}

struct SimConfig {
  int num_drivers = 20;
  ScenarioKind scenario = ScenarioKind::Random;
  int jam_center = -1;  // -1 selects the busiest vertex
  int jam_k = 20;
  int num_requests = 100;
  ControlKind control = ControlKind::None;
  double beta = 1.0;
  std::uint64_t seed = 1;
  EconomicParams params;
  double budget = 0.0;  // minutes per driver; 0 means five mean rides
  StepOrder order = StepOrder::ControlThenDispatch;
  bool relocation_uses_budget = false;  // relocation is instantaneous unless set
};

inline void check_config(const SimConfig& c, const MetricGraph& g) {
  if (c.num_drivers < 1) throw ConfigError("num_drivers must be at least 1");
  if (c.num_requests < 0) throw ConfigError("num_requests must be nonnegative");
  if (c.scenario == ScenarioKind::Jammed) {
    if (c.jam_k < 1 || c.jam_k > g.size())
      throw ConfigError("jam_k must lie in [1, " + std::to_string(g.size()) + "]");
    if (c.jam_center < -1 || c.jam_center >= g.size()) throw ConfigError("jam_center out of range");
  }
  if (c.control == ControlKind::Pay && !(c.beta >= 0.0)) throw ConfigError("beta must be nonnegative");
  if (c.budget < 0.0) throw ConfigError("budget must be nonnegative");
  c.params.check();
}

/// Busiest vertex, lowest id on ties, unless the config names one.
inline int jam_center(const SimConfig& c, const MetricGraph& g) {
  if (c.jam_center >= 0) return c.jam_center;
  int best = 0;
  for (int v = 1; v < g.size(); ++v)
    if (g.rate(v) > g.rate(best)) best = v;
  return best;
}

inline double driver_budget(const SimConfig& c, const MetricGraph& g) {
  return c.budget > 0.0 ? c.budget : 5.0 * mean_ride_duration(g);
}

inline std::uint64_t scenario_seed(std::uint64_t seed) { return derive_seed(seed, 1, 0); }
inline std::uint64_t request_seed(std::uint64_t seed) { return derive_seed(seed, 2, 0); }

/// Initial waiting vertex of every driver.
inline std::vector<int> init_scenario(const SimConfig& c, const MetricGraph& g) {
  check_config(c, g);
  Rng rng(scenario_seed(c.seed));
  std::vector<int> q;
  if (c.scenario == ScenarioKind::Random) {
    for (int i = 0; i < c.num_drivers; ++i) q.push_back(uniform_index(rng, g.size()));
    return q;
  }
  const int center = jam_center(c, g);
  std::vector<int> order(static_cast<std::size_t>(g.size()));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return g.c(center, a) < g.c(center, b); });
  for (int i = 0; i < c.num_drivers; ++i) q.push_back(order[static_cast<std::size_t>(uniform_index(rng, c.jam_k))]);
  return q;
}

struct Request {
  double time = 0.0;  // minutes
  int pickup = 0;
  int dropoff = 0;
};

/// Superposed Poisson stream: exponential gaps at rate sum(lambda), pickup
/// drawn proportionally to lambda, drop-off from the pickup's drop-off row.
inline std::vector<Request> generate_requests(const MetricGraph& g, int count, std::uint64_t seed) {
  std::vector<double> rates;
  double total = 0.0;
  for (int v = 0; v < g.size(); ++v) {
    rates.push_back(g.rate(v));
    total += g.rate(v);
  }
  if (count > 0 && !(total > 0.0)) throw DataError("no demand: all arrival rates are zero");
  Rng rng(seed);
  std::vector<Request> out;
  out.reserve(static_cast<std::size_t>(std::max(count, 0)));
  double t = 0.0;
  for (int k = 0; k < count; ++k) {
    t += exponential(rng, total);
    Request r;
    r.time = t;
    r.pickup = sample_discrete(rng, rates);
    r.dropoff = sample_discrete(rng, std::span<const double>(g.dropoff.row(static_cast<std::size_t>(r.pickup)), g.dropoff.cols()));
    out.push_back(r);
  }
  return out;
}

/// Index into `locations` of the nearest available driver (lowest id on ties),
/// or -1 when none is available.
inline int assign_request(const MetricGraph& g, std::span<const int> locations, std::span<const int> ids,
                          std::span<const char> available, int pickup) {
  int best = -1;
  for (std::size_t i = 0; i < locations.size(); ++i) {
    if (!available[i]) continue;
    if (best < 0) {
      best = static_cast<int>(i);
      continue;
    }
    const double c = g.c(locations[i], pickup), cb = g.c(locations[static_cast<std::size_t>(best)], pickup);
    if (c < cb || (c == cb && ids[i] < ids[static_cast<std::size_t>(best)])) best = static_cast<int>(i);
  }
  return best;
}

/// D over a changing multiset of waiting vertices. Removal rescans only the
/// demand vertices whose nearest distance came from the removed vertex.
class ResponseTimeTracker {
 public:
  explicit ResponseTimeTracker(const MetricGraph& g)
      : g_(&g), count_(static_cast<std::size_t>(g.size()), 0), near_(static_cast<std::size_t>(g.size()), kInfDistance) {
    for (int v = 0; v < g.size(); ++v)
      if (g.pa(v) > 0.0) demand_.push_back(v);
  }

  void add(int q) {
    ++count_[static_cast<std::size_t>(q)];
    ++size_;
    for (int v : demand_) near_[static_cast<std::size_t>(v)] = std::min(near_[static_cast<std::size_t>(v)], g_->c(q, v));
  }

  void remove(int q) {
    if (count_[static_cast<std::size_t>(q)] <= 0) throw std::logic_error("removing an absent waiting vertex");
    --count_[static_cast<std::size_t>(q)];
    --size_;
    if (count_[static_cast<std::size_t>(q)] > 0) return;
    for (int v : demand_) {
      if (g_->c(q, v) != near_[static_cast<std::size_t>(v)]) continue;
      double best = kInfDistance;
      for (int u = 0; u < g_->size(); ++u)
        if (count_[static_cast<std::size_t>(u)] > 0) best = std::min(best, g_->c(u, v));
      near_[static_cast<std::size_t>(v)] = best;
    }
  }

  int size() const { return size_; }

  /// D, or NaN with nobody waiting.
  double value() const {
    if (size_ == 0) return std::numeric_limits<double>::quiet_NaN();
    double d = 0.0;
    for (int v : demand_) d += g_->pa(v) * near_[static_cast<std::size_t>(v)];
    return d;
  }

 private:
  const MetricGraph* g_;
  std::vector<int> count_;
  std::vector<double> near_;
  std::vector<int> demand_;
  int size_ = 0;
};

struct StepRecord {
  Request request;
  int driver = -1;                // -1 when nobody is left to serve
  double wait = std::numeric_limits<double>::quiet_NaN();
  double response_time = std::numeric_limits<double>::quiet_NaN();  // D over idle drivers before dispatch
  double response_time_check = std::numeric_limits<double>::quiet_NaN();  // same, from scratch
  int idle = 0;
  int informed = 0;
  double payment = 0.0;           // paid at this decision point
  double provider_cost = std::numeric_limits<double>::quiet_NaN();   // h of the applied plan
  double baseline_cost = std::numeric_limits<double>::quiet_NaN();   // h of everyone at best response
};

struct EpisodeResult {
  SimConfig config;
  std::vector<int> initial;
  std::vector<StepRecord> steps;
  double mean_response_time = std::numeric_limits<double>::quiet_NaN();  // over steps with idle drivers
  double mean_wait = std::numeric_limits<double>::quiet_NaN();
  double total_pay = 0.0;
  double informed_fraction = 0.0;  // mean over decision points of informed / idle
  int unserved = 0;
  double max_tracker_error = 0.0;
};

namespace detail {

struct SimDriver {
  int id = 0;
  int location = 0;
  double budget = 0.0;
  double free_at = 0.0;
  bool idle = true;
  bool active = true;
};

class Episode {
 public:
  Episode(const SimConfig& c, const MetricGraph& g)
      : c_(c), g_(g), tracker_(g), odds_(g, c.num_drivers),
        none_table_(uninformed_profit_table(g, c.params, driver_budget(c, g))) {}

  EpisodeResult run() {
    EpisodeResult res;
    res.config = c_;
    res.initial = init_scenario(c_, g_);
    const double budget = driver_budget(c_, g_);
    for (int i = 0; i < c_.num_drivers; ++i) {
      drivers_.push_back({i, res.initial[static_cast<std::size_t>(i)], budget, 0.0, true, true});
      tracker_.add(res.initial[static_cast<std::size_t>(i)]);
    }
    const auto requests = generate_requests(g_, c_.num_requests, request_seed(c_.seed));
    int decisions = 0;
    for (const auto& r : requests) {
      StepRecord s;
      s.request = r;
      release(r.time);
      if (c_.order == StepOrder::ControlThenDispatch) control(s, decisions);
      record(s, res);
      dispatch(r, s, res);
      if (c_.order == StepOrder::DispatchThenControl) {
        release(r.time);
        StepRecord scratch;
        control(scratch, decisions);
        s.payment = scratch.payment;
        s.informed = scratch.informed;
        s.provider_cost = scratch.provider_cost;
        s.baseline_cost = scratch.baseline_cost;
      }
      res.total_pay += s.payment;
      res.steps.push_back(s);
    }
    summarize_episode(res, decisions);
    return res;
  }

 private:
  void release(double t) {
    for (auto& d : drivers_)
      if (d.active && !d.idle && d.free_at <= t) {
        d.idle = true;
        tracker_.add(d.location);
      }
  }

  std::vector<DriverState> idle_states() const {
    std::vector<DriverState> out;
    for (const auto& d : drivers_)
      if (d.active && d.idle) out.push_back({d.id, d.location, d.budget, Info::None});
    return out;
  }

  void move(int id, int target) {
    auto& d = drivers_[static_cast<std::size_t>(id)];
    if (target == d.location) return;
    tracker_.remove(d.location);
    if (c_.relocation_uses_budget) d.budget -= g_.c(d.location, target);
    d.location = target;
    if (d.budget <= 0.0) {
      d.active = false;
      d.idle = false;
      return;
    }
    tracker_.add(target);
  }

  void control(StepRecord& s, int& decisions) {
    const auto idle = idle_states();
    if (idle.empty()) return;
    std::vector<int> targets;
    switch (c_.control) {
      case ControlKind::None:
        for (const auto& d : idle) targets.push_back(best_response(g_, c_.params, none_table_, d.location, d.budget).vertex);
        break;
      case ControlKind::InfoShare: {
        std::vector<CandidatePair> cands;
        for (const auto& d : idle) {
          const auto full = profit_table_for(g_, c_.params, idle, d, Info::Full, odds_);
          cands.push_back(candidate_locations(g_, c_.params, d, full, none_table_));
        }
        const auto decision = solve_lp_rounding(build_instance(g_, cands));
        targets = decision.locations;
        s.informed = static_cast<int>(decision.informed.size());
        informed_share_ += static_cast<double>(s.informed) / static_cast<double>(idle.size());
        break;
      }
      case ControlKind::Pay: {
        std::vector<int> responses;
        for (const auto& d : idle) responses.push_back(best_response(g_, c_.params, none_table_, d.location, d.budget).vertex);
        auto weights = relocation_weights(g_, c_.params, idle, none_table_);
        const auto mfl = build_mfl(g_, weights, c_.beta);
        const auto plan = solve_local_search(g_, mfl, responses);
        s.provider_cost = plan.provider_cost;
        s.baseline_cost = provider_cost(g_, mfl.weights, responses, c_.beta);
        s.payment = plan.total_pay;
        targets = plan.targets;
        break;
      }
    }
    ++decisions;
    for (std::size_t i = 0; i < idle.size(); ++i) move(idle[i].id, targets[i]);
  }

  void record(StepRecord& s, EpisodeResult& res) {
    std::vector<int> q;
    for (const auto& d : drivers_)
      if (d.active && d.idle) q.push_back(d.location);
    s.idle = static_cast<int>(q.size());
    s.response_time = tracker_.value();
    if (!q.empty()) {
      s.response_time_check = expected_response_time(g_, q);
      res.max_tracker_error = std::max(res.max_tracker_error, std::abs(s.response_time - s.response_time_check));
    }
  }

  void dispatch(const Request& r, StepRecord& s, EpisodeResult& res) {
    double start = r.time;
    if (!any_idle()) {
      // Queue until the earliest ride in progress ends.
      double next = kInfDistance;
      for (const auto& d : drivers_)
        if (d.active && !d.idle) next = std::min(next, d.free_at);
      if (next == kInfDistance) {
        ++res.unserved;
        return;
      }
      start = next;
      release(start);
    }
    std::vector<int> loc, ids;
    std::vector<char> avail;
    for (const auto& d : drivers_) {
      loc.push_back(d.location);
      ids.push_back(d.id);
      avail.push_back(d.active && d.idle ? 1 : 0);
    }
    const int k = assign_request(g_, loc, ids, avail, r.pickup);
    auto& d = drivers_[static_cast<std::size_t>(k)];
    tracker_.remove(d.location);
    const double approach = g_.c(d.location, r.pickup);
    const double ride = g_.c(r.pickup, r.dropoff);
    s.driver = d.id;
    s.wait = (start - r.time) + approach;
    d.idle = false;
    d.free_at = start + approach + ride;
    d.budget -= approach + ride;
    d.location = r.dropoff;
    if (d.budget <= 0.0) d.active = false;
  }

  bool any_idle() const {
    return std::any_of(drivers_.begin(), drivers_.end(), [](const SimDriver& d) { return d.active && d.idle; });
  }

  void summarize_episode(EpisodeResult& res, int decisions) const {
    double dsum = 0.0, wsum = 0.0;
    int dn = 0, wn = 0;
    for (const auto& s : res.steps) {
      if (!std::isnan(s.response_time)) {
        dsum += s.response_time;
        ++dn;
      }
      if (s.driver >= 0) {
        wsum += s.wait;
        ++wn;
      }
    }
    if (dn > 0) res.mean_response_time = dsum / dn;
    if (wn > 0) res.mean_wait = wsum / wn;
    if (decisions > 0 && c_.control == ControlKind::InfoShare) res.informed_fraction = informed_share_ / decisions;
  }

  const SimConfig& c_;
  const MetricGraph& g_;
  ResponseTimeTracker tracker_;
  PickupOddsCache odds_;
  ProfitTable none_table_;
  std::vector<SimDriver> drivers_;
  double informed_share_ = 0.0;
};

}  // namespace detail

inline EpisodeResult run_episode(const SimConfig& config, const MetricGraph& g) {
  check_config(config, g);
  return detail::Episode(config, g).run();
}

// ---------------------------------------------------------------------------
// Batches

/// One summary row per configuration. Repetition r of every configuration
/// uses seed derive_seed(master, 0, r), and the improvement compares it to a
/// no-control episode on the same seed.
struct BatchRow {
  SimConfig config;
  int repetitions = 0;
  std::vector<double> improvement;        // (D_none - D_control) / D_none per repetition
  std::vector<double> total_pay;
  std::vector<double> informed_fraction;
  std::vector<double> response_none;
  std::vector<double> response_control;

  Summary improvement_summary() const { return summarize(improvement); }
  Summary pay_summary() const { return summarize(total_pay); }
  Summary informed_summary() const { return summarize(informed_fraction); }
};

inline std::uint64_t repetition_seed(std::uint64_t master, int repetition) {
  return derive_seed(master, 0, static_cast<std::uint64_t>(repetition));
}

inline double improvement_of(double none, double control) {
  if (std::isnan(none) || std::isnan(control) || none <= 0.0) return 0.0;
  return (none - control) / none;
}

using BatchProgress = std::function<void(std::size_t config, int repetition)>;

/// Episodes run on up to `threads` workers (0 picks the hardware count).
/// Results land in fixed slots, so the output does not depend on scheduling.
inline std::vector<BatchRow> run_batch(const MetricGraph& g, std::span<const SimConfig> configs, int repetitions,
                                       std::uint64_t master_seed, const BatchProgress& progress = {},
                                       unsigned threads = 0) {
  if (repetitions < 1) throw ConfigError("repetitions must be at least 1");
  for (const auto& c : configs) check_config(c, g);
  struct Slot {
    double none = 0.0, control = 0.0, pay = 0.0, informed = 0.0;
  };
  const std::size_t reps = static_cast<std::size_t>(repetitions);
  std::vector<Slot> slots(configs.size() * reps);
  std::atomic<std::size_t> next{0};
  std::mutex progress_mutex;
  std::exception_ptr failure;

  auto work = [&] {
    for (std::size_t job = next++; job < slots.size(); job = next++) {
      const std::size_t k = job / reps;
      const int r = static_cast<int>(job % reps);
      try {
        SimConfig c = configs[k];
        c.seed = repetition_seed(master_seed, r);
        const auto ctrl = run_episode(c, g);
        Slot& s = slots[job];
        s.control = ctrl.mean_response_time;
        s.none = ctrl.mean_response_time;
        s.pay = ctrl.total_pay;
        s.informed = ctrl.informed_fraction;
        if (c.control != ControlKind::None) {
          SimConfig base = c;
          base.control = ControlKind::None;
          s.none = run_episode(base, g).mean_response_time;
        }
        if (progress) {
          std::lock_guard lock(progress_mutex);
          progress(k, r);
        }
      } catch (...) {
        std::lock_guard lock(progress_mutex);
        if (!failure) failure = std::current_exception();
        next = slots.size();
      }
    }
  };

  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = static_cast<unsigned>(std::min<std::size_t>(threads, slots.size()));
  if (threads <= 1) {
    work();
  } else {
    std::vector<std::jthread> pool;
    for (unsigned t = 0; t < threads; ++t) pool.emplace_back(work);
  }
  if (failure) std::rethrow_exception(failure);

  std::vector<BatchRow> rows;
  for (std::size_t k = 0; k < configs.size(); ++k) {
    BatchRow row;
    row.config = configs[k];
    row.repetitions = repetitions;
    for (std::size_t r = 0; r < reps; ++r) {
      const Slot& s = slots[k * reps + r];
      row.improvement.push_back(improvement_of(s.none, s.control));
      row.total_pay.push_back(s.pay);
      row.informed_fraction.push_back(s.informed);
      row.response_none.push_back(s.none);
      row.response_control.push_back(s.control);
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

// ---------------------------------------------------------------------------
// Output

inline void to_json(nlohmann::json& j, const SimConfig& c) {
  j = {{"drivers", c.num_drivers},
       {"scenario", to_string(c.scenario)},
       {"jam_center", c.jam_center},
       {"jam_k", c.jam_k},
       {"requests", c.num_requests},
       {"control", to_string(c.control)},
       {"beta", c.beta},
       {"seed", c.seed},
       {"budget", c.budget},
       {"order", to_string(c.order)},
       {"relocation_uses_budget", c.relocation_uses_budget},
       {"drive_cost_per_min", c.params.drive_cost_per_min},
       {"fare_per_min", c.params.fare_per_min},
       {"budget_quantum", c.params.budget_quantum}};
}

inline nlohmann::json number_or_null(double x) { return std::isnan(x) ? nlohmann::json(nullptr) : nlohmann::json(x); }

inline void to_json(nlohmann::json& j, const EpisodeResult& r) {
  j = {{"config", r.config},
       {"initial", r.initial},
       {"mean_response_time", number_or_null(r.mean_response_time)},
       {"mean_wait", number_or_null(r.mean_wait)},
       {"total_pay", r.total_pay},
       {"informed_fraction", r.informed_fraction},
       {"unserved", r.unserved},
       {"max_tracker_error", r.max_tracker_error}};
}

inline void to_json(nlohmann::json& j, const Summary& s) {
  j = {{"count", s.count}, {"mean", number_or_null(s.mean)}, {"q1", number_or_null(s.q1)},
       {"median", number_or_null(s.median)}, {"q3", number_or_null(s.q3)}};
}

inline void to_json(nlohmann::json& j, const BatchRow& r) {
  j = {{"config", r.config},
       {"repetitions", r.repetitions},
       {"improvement", r.improvement_summary()},
       {"total_pay", r.pay_summary()},
       {"informed_fraction", r.informed_summary()},
       {"response_none", summarize(r.response_none)},
       {"response_control", summarize(r.response_control)}};
}

namespace detail {

inline std::string csv_number(double x) {
  if (std::isnan(x)) return "";
  std::ostringstream s;
  s.precision(17);
  s << x;
  return s.str();
}

}  // namespace detail

inline const char* kEpisodeCsvHeader =
    "request,time,pickup,dropoff,driver,wait,response_time,idle,informed,payment,provider_cost,baseline_cost";

inline void write_episode_csv(std::ostream& out, const EpisodeResult& r) {
  using detail::csv_number;
  out << kEpisodeCsvHeader << '\n';
  for (std::size_t k = 0; k < r.steps.size(); ++k) {
    const auto& s = r.steps[k];
    out << k << ',' << csv_number(s.request.time) << ',' << s.request.pickup << ',' << s.request.dropoff << ','
        << s.driver << ',' << csv_number(s.wait) << ',' << csv_number(s.response_time) << ',' << s.idle << ','
        << s.informed << ',' << csv_number(s.payment) << ',' << csv_number(s.provider_cost) << ','
        << csv_number(s.baseline_cost) << '\n';
  }
}

inline const char* kBatchCsvHeader =
    "control,drivers,scenario,beta,repetitions,"
    "improvement_mean,improvement_q1,improvement_median,improvement_q3,"
    "pay_mean,pay_q1,pay_median,pay_q3,"
    "informed_mean,informed_q1,informed_median,informed_q3";

inline void write_batch_csv(std::ostream& out, std::span<const BatchRow> rows) {
  using detail::csv_number;
  out << kBatchCsvHeader << '\n';
  for (const auto& r : rows) {
    out << to_string(r.config.control) << ',' << r.config.num_drivers << ',' << to_string(r.config.scenario) << ','
        << csv_number(r.config.beta) << ',' << r.repetitions;
    for (const auto& s : {r.improvement_summary(), r.pay_summary(), r.informed_summary()})
      out << ',' << csv_number(s.mean) << ',' << csv_number(s.q1) << ',' << csv_number(s.median) << ','
          << csv_number(s.q3);
    out << '\n';
  }
}

}  // namespace rsctl
