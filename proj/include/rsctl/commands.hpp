#pragma once

// The ingest, synth, run and report commands behind the rsctl tool. Every
// file written here starts with the digest of the configuration that
// produced it, and nothing is overwritten unless `force` is set.
//
// Requires OpenSSL's libcrypto for SHA-256.

#include <openssl/evp.h>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

#include <nlohmann/json.hpp>

#include "rsctl/core.hpp"
#include "rsctl/metric_graph.hpp"
#include "rsctl/simulation.hpp"
#include "rsctl/stats.hpp"
#include "rsctl/synthetic.hpp"

namespace rsctl::cli {

namespace fs = std::filesystem;
using nlohmann::json;

inline constexpr const char* kToolVersion = "0.1.0";

enum ExitCode : int { kOk = 0, kFailure = 1, kConfigError = 2, kDataError = 3 };

// ---------------------------------------------------------------------------
// Digests and files

inline std::string sha256_hex(std::string_view bytes) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr) != 1)
    throw std::runtime_error("SHA-256 failed");
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(kHex[md[i] >> 4]);
    out.push_back(kHex[md[i] & 15]);
  }
  return out;
}

inline std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw DataError("cannot read " + p.string());
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

/// Digest of a JSON value in its canonical (sorted-key, compact) form.
inline std::string json_digest(const json& j) { return "sha256:" + sha256_hex(j.dump()); }

inline void refuse_overwrite(const fs::path& p, bool force) {
  if (!force && fs::exists(p)) throw ConfigError(p.string() + " exists; pass --force to overwrite");
}

inline void write_file(const fs::path& p, const std::string& bytes) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + p.string());
  out << bytes;
  if (!out) throw DataError("write failed: " + p.string());
}

inline std::string csv_header_comment(const std::string& digest) {
  return std::string("# rsctl ") + kToolVersion + " config_digest " + digest + "\n";
}

// JSON has no comments, so the digest leads the document as a field.
inline std::string json_with_digest(json body, const std::string& digest) {
  body["config_digest"] = digest;
  body["tool_version"] = kToolVersion;
  return body.dump(2) + "\n";
}

// ---------------------------------------------------------------------------
// Pickup CSV

struct CsvIngest {
  std::vector<RawPickup> pickups;
  std::vector<std::string> errors;  // "line N: reason"
  std::size_t rows = 0;             // data rows seen, blank lines excluded
};

namespace detail {

inline std::string trim(std::string_view s) {
  std::size_t a = 0, b = s.size();
  while (a < b && (s[a] == ' ' || s[a] == '\t' || s[a] == '\r' || s[a] == '"')) ++a;
  while (b > a && (s[b - 1] == ' ' || s[b - 1] == '\t' || s[b - 1] == '\r' || s[b - 1] == '"')) --b;
  return std::string(s.substr(a, b - a));
}

inline std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (char ch : line) {
    if (ch == '"') {
      quoted = !quoted;
    } else if (ch == ',' && !quoted) {
      out.push_back(trim(cur));
      cur.clear();
    } else {
      cur.push_back(ch);
    }
  }
  out.push_back(trim(cur));
  return out;
}

inline std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

inline std::optional<double> parse_double(const std::string& s) {
  if (s.empty()) return std::nullopt;
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(v)) return std::nullopt;
  return v;
}

// Days since 1970-01-01 of a proleptic Gregorian date.
inline long long days_from_civil(long long y, unsigned m, unsigned d) {
  y -= m <= 2;
  const long long era = (y >= 0 ? y : y - 399) / 400;
  const unsigned yoe = static_cast<unsigned>(y - era * 400);
  const unsigned doy = (153 * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
  const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
  return era * 146097 + static_cast<long long>(doe) - 719468;
}

// "M/D/YYYY H:MM[:SS]" as naive seconds since the epoch.
inline std::optional<double> parse_datetime(const std::string& s) {
  unsigned mo = 0, d = 0, h = 0, mi = 0, se = 0;
  int y = 0;
  char tail = 0;
  const int n = std::sscanf(s.c_str(), "%u/%u/%d %u:%u:%u%c", &mo, &d, &y, &h, &mi, &se, &tail);
  if (n != 5 && n != 6) return std::nullopt;
  if (mo < 1 || mo > 12 || d < 1 || d > 31 || h > 23 || mi > 59 || se > 60) return std::nullopt;
  return static_cast<double>(days_from_civil(y, mo, d) * 86400 + h * 3600 + mi * 60 + se);
}

}  // namespace detail

/// Reads pickups from a CSV whose header names a latitude column (`lat` or
/// `latitude`), a longitude column (`lon`, `lng` or `longitude`) and a time
/// column (`timestamp` in epoch seconds, or `date/time` as M/D/YYYY H:MM:SS).
/// Bad rows are collected with their line numbers; more than
/// `max_bad_fraction` of them aborts with a DataError.
inline CsvIngest read_pickups_csv(std::istream& in, double max_bad_fraction = 0.01) {
  std::string line;
  int line_no = 0;
  std::vector<std::string> header;
  while (std::getline(in, line)) {
    ++line_no;
    if (!detail::trim(line).empty()) {
      header = detail::split_csv(line);
      break;
    }
  }
  if (header.empty()) throw DataError("line 1: missing CSV header");
  int lat = -1, lon = -1, ts = -1, dt = -1;
  for (int k = 0; k < static_cast<int>(header.size()); ++k) {
    const auto h = detail::lower(header[static_cast<std::size_t>(k)]);
    if (h == "lat" || h == "latitude") lat = k;
    if (h == "lon" || h == "lng" || h == "longitude") lon = k;
    if (h == "timestamp") ts = k;
    if (h == "date/time" || h == "datetime") dt = k;
  }
  if (lat < 0 || lon < 0 || (ts < 0 && dt < 0))
    throw DataError("line " + std::to_string(line_no) + ": header must name lat, lon and timestamp columns");

  CsvIngest out;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    ++out.rows;
    const auto f = detail::split_csv(line);
    auto bad = [&](const std::string& why) { out.errors.push_back("line " + std::to_string(line_no) + ": " + why); };
    if (f.size() != header.size()) {
      bad("expected " + std::to_string(header.size()) + " fields, got " + std::to_string(f.size()));
      continue;
    }
    const auto la = detail::parse_double(f[static_cast<std::size_t>(lat)]);
    const auto lo = detail::parse_double(f[static_cast<std::size_t>(lon)]);
    const auto t = ts >= 0 ? detail::parse_double(f[static_cast<std::size_t>(ts)])
                           : detail::parse_datetime(f[static_cast<std::size_t>(dt)]);
    if (!la || *la < -90.0 || *la > 90.0) {
      bad("bad latitude '" + f[static_cast<std::size_t>(lat)] + "'");
      continue;
    }
    if (!lo || *lo < -180.0 || *lo > 180.0) {
      bad("bad longitude '" + f[static_cast<std::size_t>(lon)] + "'");
      continue;
    }
    if (!t) {
      bad("bad timestamp '" + f[static_cast<std::size_t>(ts >= 0 ? ts : dt)] + "'");
      continue;
    }
    out.pickups.push_back({*la, *lo, *t});
  }
  if (out.rows == 0) throw DataError("no data rows");
  if (static_cast<double>(out.errors.size()) > max_bad_fraction * static_cast<double>(out.rows)) {
    std::string msg = std::to_string(out.errors.size()) + " of " + std::to_string(out.rows) +
                      " rows malformed (limit " + std::to_string(max_bad_fraction * 100.0) + "%)";
    for (std::size_t k = 0; k < std::min<std::size_t>(out.errors.size(), 20); ++k) msg += "\n  " + out.errors[k];
    throw DataError(msg);
  }
  return out;
}

// ---------------------------------------------------------------------------
// ingest and synth

struct IngestOptions {
  fs::path csv;
  fs::path out;
  double radius = 500.0;   // meters, cluster diameter bound
  double speed = kDefaultSpeedKmh;
  double horizon = 0.0;    // minutes; 0 uses the timestamp span
  int keep = 0;            // 0 keeps every cluster
  double max_rate = 0.0;   // 0 keeps the estimated rates
  bool force = false;
};

inline json graph_document(const MetricGraph& g, const json& config) {
  json doc = g;
  doc["source"] = config;
  return doc;
}

inline void rescale_rates(std::vector<Vertex>& vs, double max_rate) {
  if (!(max_rate > 0.0)) return;
  double top = 0.0;
  for (const auto& v : vs) top = std::max(top, v.arrival_rate);
  if (!(top > 0.0)) throw DataError("no demand to rescale");
  for (auto& v : vs) v.arrival_rate *= max_rate / top;
}

inline MetricGraph cmd_ingest(const IngestOptions& o, std::ostream& log) {
  if (!(o.radius >= 0.0)) throw ConfigError("radius must be nonnegative");
  if (!(o.speed > 0.0)) throw ConfigError("speed must be positive");
  if (o.horizon < 0.0) throw ConfigError("horizon must be nonnegative");
  if (o.keep < 0) throw ConfigError("keep must be nonnegative");
  if (o.max_rate < 0.0) throw ConfigError("max-rate must be nonnegative");
  refuse_overwrite(o.out, o.force);
  const std::string bytes = read_file(o.csv);
  std::istringstream in(bytes);
  const auto parsed = read_pickups_csv(in);
  for (const auto& e : parsed.errors) log << "skipped " << e << '\n';
  if (parsed.pickups.empty()) throw DataError("no valid rows");

  const json config = {{"command", "ingest"},      {"input", o.csv.string()},
                       {"input_digest", "sha256:" + sha256_hex(bytes)},
                       {"radius", o.radius},       {"speed", o.speed},
                       {"horizon", o.horizon},     {"keep", o.keep},
                       {"max_rate", o.max_rate}};
  auto vertices = keep_busiest(cluster_pickups(parsed.pickups, o.radius, o.horizon), o.keep);
  rescale_rates(vertices, o.max_rate);
  const auto g = build_complete_metric(std::move(vertices), DropoffMode::Uniform, o.speed);
  check_graph(g);
  write_file(o.out, json_with_digest(graph_document(g, config), json_digest(config)));
  double total = 0.0;
  for (const auto& v : g.vertices) total += v.arrival_rate;
  log << "clusters " << g.size() << " total_rate " << total << " per minute\n";
  return g;
}

struct SynthOptions {
  fs::path out;
  std::uint64_t seed = 2024;
  int pickups = 5000;
  int keep = 40;
  double max_rate = 0.03;
  bool force = false;
};

inline MetricGraph cmd_synth(const SynthOptions& o, std::ostream& log) {
  if (o.pickups < 1) throw ConfigError("pickups must be positive");
  if (o.keep < 0) throw ConfigError("keep must be nonnegative");
  if (!(o.max_rate > 0.0)) throw ConfigError("max-rate must be positive");
  refuse_overwrite(o.out, o.force);
  const json config = {{"command", "synth"}, {"seed", o.seed}, {"pickups", o.pickups},
                       {"keep", o.keep},     {"max_rate", o.max_rate}};
  const auto g = manhattan_like_graph(o.seed, o.pickups, o.keep, o.max_rate);
  write_file(o.out, json_with_digest(graph_document(g, config), json_digest(config)));
  double total = 0.0;
  for (const auto& v : g.vertices) total += v.arrival_rate;
  log << "clusters " << g.size() << " total_rate " << total << " per minute\n";
  return g;
}

inline MetricGraph load_graph(const std::string& bytes) {
  json j;
  try {
    j = json::parse(bytes);
  } catch (const json::exception& e) {
    throw DataError(std::string("graph is not valid JSON: ") + e.what());
  }
  try {
    return j.get<MetricGraph>();
  } catch (const json::exception& e) {
    throw DataError(std::string("graph JSON: ") + e.what());
  }
}

// ---------------------------------------------------------------------------
// Run configuration

/// A fully resolved run: the simulation config, repetition count and the
/// canonical JSON whose digest tags every output.
struct RunConfig {
  SimConfig sim;
  int reps = 1;
  unsigned threads = 0;  // execution detail, excluded from the digest
};

/// Fields accepted in a run config file. All are optional.
inline const std::map<std::string, std::string>& run_schema() {
  static const std::map<std::string, std::string> schema{
      {"drivers", "integer >= 1"},
      {"scenario", "\"random\" or \"jammed\""},
      {"jam_center", "integer >= -1 (-1 = busiest vertex)"},
      {"jam_k", "integer >= 1"},
      {"requests", "integer >= 0"},
      {"control", "\"none\", \"info\" or \"pay\""},
      {"beta", "number >= 0"},
      {"seed", "unsigned 64-bit integer"},
      {"reps", "integer >= 1"},
      {"budget", "number >= 0 (0 = five mean rides)"},
      {"order", "\"control_then_dispatch\" or \"dispatch_then_control\""},
      {"relocation_uses_budget", "boolean"},
      {"drive_cost_per_min", "number > 0"},
      {"fare_per_min", "number > 0"},
      {"budget_quantum", "number > 0"},
  };
  return schema;
}

namespace detail {

[[noreturn]] inline void field_error(const std::string& key, const std::string& why) {
  throw ConfigError("config field '" + key + "': " + why + " (expected " + run_schema().at(key) + ")");
}

inline long long int_field(const json& j, const std::string& key, long long lo) {
  if (!j.is_number_integer()) field_error(key, "not an integer");
  const auto v = j.get<long long>();
  if (v < lo) field_error(key, "value " + std::to_string(v) + " out of range");
  return v;
}

inline double number_field(const json& j, const std::string& key, double lo, bool strict) {
  if (!j.is_number()) field_error(key, "not a number");
  const double v = j.get<double>();
  if (!std::isfinite(v) || v < lo || (strict && v == lo)) field_error(key, "value out of range");
  return v;
}

inline std::string string_field(const json& j, const std::string& key) {
  if (!j.is_string()) field_error(key, "not a string");
  return j.get<std::string>();
}

}  // namespace detail

/// Applies a config document on top of `base`, rejecting unknown fields and
/// wrong types with the offending field name.
inline RunConfig apply_config(const json& doc, RunConfig base = {}) {
  if (!doc.is_object()) throw ConfigError("config must be a JSON object");
  for (auto it = doc.begin(); it != doc.end(); ++it)
    if (!run_schema().contains(it.key())) throw ConfigError("config field '" + it.key() + "': unknown field");
  auto& c = base.sim;
  auto pick = [&](const char* key, auto&& fn) {
    if (doc.contains(key)) fn(doc.at(key), std::string(key));
  };
  using namespace detail;
  pick("drivers", [&](const json& j, const std::string& k) { c.num_drivers = static_cast<int>(int_field(j, k, 1)); });
  pick("scenario", [&](const json& j, const std::string& k) {
    try {
      c.scenario = parse_scenario(string_field(j, k));
    } catch (const ConfigError&) {
      field_error(k, "unknown value");
    }
  });
  pick("jam_center", [&](const json& j, const std::string& k) { c.jam_center = static_cast<int>(int_field(j, k, -1)); });
  pick("jam_k", [&](const json& j, const std::string& k) { c.jam_k = static_cast<int>(int_field(j, k, 1)); });
  pick("requests", [&](const json& j, const std::string& k) { c.num_requests = static_cast<int>(int_field(j, k, 0)); });
  pick("control", [&](const json& j, const std::string& k) {
    try {
      c.control = parse_control(string_field(j, k));
    } catch (const ConfigError&) {
      field_error(k, "unknown value");
    }
  });
  pick("beta", [&](const json& j, const std::string& k) { c.beta = number_field(j, k, 0.0, false); });
  pick("seed", [&](const json& j, const std::string& k) {
    if (!j.is_number_unsigned()) field_error(k, "not an unsigned integer");
    c.seed = j.get<std::uint64_t>();
  });
  pick("reps", [&](const json& j, const std::string& k) { base.reps = static_cast<int>(int_field(j, k, 1)); });
  pick("budget", [&](const json& j, const std::string& k) { c.budget = number_field(j, k, 0.0, false); });
  pick("order", [&](const json& j, const std::string& k) {
    try {
      c.order = parse_order(string_field(j, k));
    } catch (const ConfigError&) {
      field_error(k, "unknown value");
    }
  });
  pick("relocation_uses_budget", [&](const json& j, const std::string& k) {
    if (!j.is_boolean()) field_error(k, "not a boolean");
    c.relocation_uses_budget = j.get<bool>();
  });
  pick("drive_cost_per_min",
       [&](const json& j, const std::string& k) { c.params.drive_cost_per_min = number_field(j, k, 0.0, true); });
  pick("fare_per_min", [&](const json& j, const std::string& k) { c.params.fare_per_min = number_field(j, k, 0.0, true); });
  pick("budget_quantum",
       [&](const json& j, const std::string& k) { c.params.budget_quantum = number_field(j, k, 0.0, true); });
  return base;
}

/// Canonical form of a resolved run, the input to the config digest.
inline json canonical_config(const RunConfig& r) {
  json j = r.sim;
  j["reps"] = r.reps;
  return j;
}

// ---------------------------------------------------------------------------
// run

struct RunOptions {
  fs::path graph;
  std::optional<fs::path> config;
  fs::path out;
  json overrides = json::object();  // flag values, same schema as the file
  unsigned threads = 0;
  bool force = false;
};

inline const char* kManifestName = "manifest.json";

inline RunConfig resolve_run(const RunOptions& o) {
  RunConfig r;
  if (o.config) {
    json doc;
    try {
      doc = json::parse(read_file(*o.config));
    } catch (const json::parse_error& e) {
      throw ConfigError("config is not valid JSON: " + std::string(e.what()));
    } catch (const DataError& e) {
      throw ConfigError(e.what());
    }
    r = apply_config(doc, r);
  }
  r = apply_config(o.overrides, r);
  r.threads = o.threads;
  return r;
}

namespace detail {

inline json batch_row_document(const BatchRow& row) {
  json j = row;
  j["per_repetition"] = {{"improvement", row.improvement},
                         {"total_pay", row.total_pay},
                         {"informed_fraction", row.informed_fraction},
                         {"response_none", row.response_none},
                         {"response_control", row.response_control}};
  return j;
}

}  // namespace detail

/// Runs one episode (reps = 1, seed used as is) or a matched batch (reps > 1,
/// seed is the master seed) and writes the manifest and outputs into `out`.
/// Returns the names of the files written.
inline std::vector<std::string> cmd_run(const RunOptions& o, std::ostream& log) {
  const RunConfig rc = resolve_run(o);
  const std::string graph_bytes = read_file(o.graph);
  const MetricGraph g = load_graph(graph_bytes);
  check_config(rc.sim, g);

  const json canon = canonical_config(rc);
  const std::string digest = json_digest(canon);
  const bool episode = rc.reps == 1;
  const std::vector<std::string> outputs =
      episode ? std::vector<std::string>{"episode.csv", "episode.json"} : std::vector<std::string>{"batch.csv", "batch.json"};

  refuse_overwrite(o.out / kManifestName, o.force);
  for (const auto& name : outputs) refuse_overwrite(o.out / name, o.force);

  json manifest = {{"config", canon},
                   {"config_path", o.config ? o.config->string() : std::string()},
                   {"master_seed", rc.sim.seed},
                   {"output_dir", o.out.string()},
                   {"graph_path", o.graph.string()},
                   {"input_digest", "sha256:" + sha256_hex(graph_bytes)},
                   {"mode", episode ? "episode" : "batch"},
                   {"outputs", outputs}};
  // The manifest goes down before any simulation starts.
  write_file(o.out / kManifestName, json_with_digest(manifest, digest));

  if (episode) {
    const auto res = run_episode(rc.sim, g);
    double none = res.mean_response_time;
    if (rc.sim.control != ControlKind::None) {
      SimConfig base = rc.sim;
      base.control = ControlKind::None;
      none = run_episode(base, g).mean_response_time;
    }
    std::ostringstream csv;
    csv << csv_header_comment(digest);
    write_episode_csv(csv, res);
    json doc = res;
    doc["response_none"] = number_or_null(none);
    doc["improvement"] = improvement_of(none, res.mean_response_time);
    write_file(o.out / outputs[0], csv.str());
    write_file(o.out / outputs[1], json_with_digest(doc, digest));
    log << "mean_response_time " << res.mean_response_time << " improvement "
        << improvement_of(none, res.mean_response_time) << " total_pay " << res.total_pay << '\n';
  } else {
    const std::vector<SimConfig> configs{rc.sim};
    const auto rows = run_batch(g, configs, rc.reps, rc.sim.seed, {}, rc.threads);
    std::ostringstream csv;
    csv << csv_header_comment(digest);
    write_batch_csv(csv, rows);
    json doc = {{"rows", json::array()}};
    for (const auto& row : rows) doc["rows"].push_back(detail::batch_row_document(row));
    write_file(o.out / outputs[0], csv.str());
    write_file(o.out / outputs[1], json_with_digest(doc, digest));
    const auto s = rows[0].improvement_summary();
    log << "improvement mean " << s.mean << " median " << s.median << " total_pay mean " << rows[0].pay_summary().mean
        << '\n';
  }
  return outputs;
}

// ---------------------------------------------------------------------------
// report

struct ReportOptions {
  fs::path results;
  fs::path out;  // defaults to <results>/report.csv
  bool force = false;
};

struct ReportResult {
  int runs = 0;
  std::vector<std::string> missing;
  int rows = 0;
};

inline const char* kReportCsvHeader =
    "control,drivers,scenario,beta,runs,repetitions,"
    "improvement_mean,improvement_q1,improvement_median,improvement_q3,"
    "pay_mean,pay_q1,pay_median,pay_q3,"
    "informed_mean,informed_q1,informed_median,informed_q3,"
    "response_none_median,response_control_median";

/// Pools per-repetition values of every run under `results` (the directory
/// itself or its immediate subdirectories) into one row per control, fleet
/// size, scenario and, for pay control, beta. Runs whose outputs are missing
/// are listed and skipped.
inline ReportResult cmd_report(const ReportOptions& o, std::ostream& log) {
  if (!fs::is_directory(o.results)) throw DataError(o.results.string() + " is not a directory");
  const fs::path out = o.out.empty() ? o.results / "report.csv" : o.out;
  refuse_overwrite(out, o.force);

  std::vector<fs::path> dirs{o.results};
  std::vector<fs::path> subs;
  for (const auto& e : fs::directory_iterator(o.results))
    if (e.is_directory()) subs.push_back(e.path());
  std::sort(subs.begin(), subs.end());
  dirs.insert(dirs.end(), subs.begin(), subs.end());

  struct Group {
    int runs = 0;
    std::vector<double> improvement, pay, informed, none, control;
  };
  std::map<std::tuple<std::string, int, std::string, double>, Group> groups;
  std::vector<std::string> digests;
  ReportResult rr;

  for (const auto& d : dirs) {
    const fs::path mpath = d / kManifestName;
    if (!fs::exists(mpath)) continue;
    json m;
    try {
      m = json::parse(read_file(mpath));
    } catch (const json::exception&) {
      rr.missing.push_back(mpath.string() + " (unreadable manifest)");
      continue;
    }
    const std::string result_name = m.value("mode", "") == "batch" ? "batch.json" : "episode.json";
    const fs::path rpath = d / result_name;
    if (!fs::exists(rpath)) {
      rr.missing.push_back(rpath.string());
      continue;
    }
    json r;
    try {
      r = json::parse(read_file(rpath));
    } catch (const json::exception&) {
      rr.missing.push_back(rpath.string() + " (unreadable)");
      continue;
    }
    const json& cfg = m.at("config");
    const std::string control = cfg.at("control");
    const double beta = control == "pay" ? cfg.at("beta").get<double>() : 0.0;
    auto& grp = groups[{control, cfg.at("drivers").get<int>(), cfg.at("scenario").get<std::string>(), beta}];
    ++grp.runs;
    digests.push_back(m.at("config_digest"));
    auto num = [](const json& j) { return j.is_null() ? std::numeric_limits<double>::quiet_NaN() : j.get<double>(); };
    if (result_name == "episode.json") {
      grp.improvement.push_back(r.at("improvement").get<double>());
      grp.pay.push_back(r.at("total_pay").get<double>());
      grp.informed.push_back(r.at("informed_fraction").get<double>());
      grp.none.push_back(num(r.at("response_none")));
      grp.control.push_back(num(r.at("mean_response_time")));
    } else {
      for (const auto& row : r.at("rows")) {
        const auto& p = row.at("per_repetition");
        for (const auto& x : p.at("improvement")) grp.improvement.push_back(x.get<double>());
        for (const auto& x : p.at("total_pay")) grp.pay.push_back(x.get<double>());
        for (const auto& x : p.at("informed_fraction")) grp.informed.push_back(x.get<double>());
        for (const auto& x : p.at("response_none")) grp.none.push_back(num(x));
        for (const auto& x : p.at("response_control")) grp.control.push_back(num(x));
      }
    }
    ++rr.runs;
  }
  for (const auto& miss : rr.missing) log << "missing " << miss << '\n';
  if (rr.runs == 0) throw DataError("no complete runs under " + o.results.string());

  std::sort(digests.begin(), digests.end());
  std::string joined;
  for (const auto& d : digests) joined += d + "\n";
  std::ostringstream csv;
  csv << csv_header_comment("sha256:" + sha256_hex(joined));
  csv << kReportCsvHeader << '\n';
  using rsctl::detail::csv_number;
  for (const auto& [key, grp] : groups) {
    const auto& [control, drivers, scenario, beta] = key;
    csv << control << ',' << drivers << ',' << scenario << ',' << csv_number(beta) << ',' << grp.runs << ','
        << grp.improvement.size();
    for (const auto* v : {&grp.improvement, &grp.pay, &grp.informed}) {
      const auto s = summarize(*v);
      csv << ',' << csv_number(s.mean) << ',' << csv_number(s.q1) << ',' << csv_number(s.median) << ','
          << csv_number(s.q3);
    }
    csv << ',' << csv_number(quantile(grp.none, 0.5)) << ',' << csv_number(quantile(grp.control, 0.5)) << '\n';
    ++rr.rows;
  }
  write_file(out, csv.str());
  log << "runs " << rr.runs << " rows " << rr.rows << " -> " << out.string() << '\n';
  return rr;
}

}  // namespace rsctl::cli
