#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "rsctl/commands.hpp"

using namespace rsctl;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Fresh scratch directory per test, removed afterwards.
class Scratch : public ::testing::Test {
 protected:
  void SetUp() override {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    dir_ = fs::temp_directory_path() / (std::string("rsctl_") + info->test_suite_name() + "_" + info->name());
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  fs::path path(const std::string& name) const { return dir_ / name; }

  void write(const std::string& name, const std::string& text) const {
    std::ofstream(path(name), std::ios::binary) << text;
  }

  // Runs the tool with `args`; stderr goes to a log file in the scratch dir.
  int tool(const std::string& args) const {
    const std::string cmd =
        std::string(RSCTL_TOOL_PATH) + " " + args + " 2>>" + (dir_ / "tool.log").string() + " >/dev/null";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  }

  std::string graph() const {
    const auto g = path("g.json");
    if (!fs::exists(g)) {
      std::ostringstream log;
      cli::cmd_synth({g, 2024, 3000, 24, 0.03, false}, log);
    }
    return g.string();
  }

  fs::path dir_;
};

std::string first_line(const fs::path& p) {
  std::ifstream in(p);
  std::string l;
  std::getline(in, l);
  return l;
}

std::vector<std::string> lines_of(const fs::path& p) {
  std::ifstream in(p);
  std::vector<std::string> out;
  for (std::string l; std::getline(in, l);) out.push_back(l);
  return out;
}

std::vector<std::string> split(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  for (std::string f; std::getline(ss, f, ',');) out.push_back(f);
  return out;
}

}  // namespace

TEST(Digest, Sha256KnownVectors) {
  EXPECT_EQ(cli::sha256_hex("abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  EXPECT_EQ(cli::sha256_hex(""), "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
}

TEST(PickupCsv, ReadsBothHeaderStyles) {
  std::istringstream plain("lat,lon,timestamp\n40.75,-73.98,1396310400\n\n40.76,-73.97,1396310460\n");
  const auto a = cli::read_pickups_csv(plain);
  ASSERT_EQ(a.pickups.size(), 2u);
  EXPECT_EQ(a.rows, 2u);
  EXPECT_DOUBLE_EQ(a.pickups[1].longitude, -73.97);
  EXPECT_DOUBLE_EQ(a.pickups[1].timestamp - a.pickups[0].timestamp, 60.0);

  std::istringstream uber("\"Date/Time\",\"Lat\",\"Lon\",\"Base\"\n\"4/1/2014 0:11:00\",40.769,-73.9549,\"B02512\"\n");
  const auto b = cli::read_pickups_csv(uber);
  ASSERT_EQ(b.pickups.size(), 1u);
  EXPECT_DOUBLE_EQ(b.pickups[0].timestamp, 1396310400.0 + 11 * 60);  // 2014-04-01 00:11 UTC
}

TEST(PickupCsv, MalformedRowsCarryLineNumbers) {
  std::string text = "lat,lon,timestamp\n";
  for (int k = 0; k < 99; ++k) text += "40.75,-73.98," + std::to_string(k) + "\n";
  text += "north,-73.98,5\n";  // line 101; 1 of 100 is at the limit
  std::istringstream ok(text);
  const auto r = cli::read_pickups_csv(ok);
  EXPECT_EQ(r.pickups.size(), 99u);
  ASSERT_EQ(r.errors.size(), 1u);
  EXPECT_EQ(r.errors[0].rfind("line 101:", 0), 0u) << r.errors[0];

  text += "40.75,-73.98\n";  // 2 of 101, above 1%
  std::istringstream bad(text);
  try {
    cli::read_pickups_csv(bad);
    FAIL() << "expected abort";
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("line 102"), std::string::npos) << e.what();
  }
  std::istringstream header("when,where\n1,2\n");
  EXPECT_THROW(cli::read_pickups_csv(header), DataError);
  std::istringstream empty("");
  EXPECT_THROW(cli::read_pickups_csv(empty), DataError);
}

TEST_F(Scratch, IngestSingleRowGivesOneVertex) {
  write("one.csv", "lat,lon,timestamp\n40.75,-73.98,0\n");
  std::ostringstream log;
  const auto g = cli::cmd_ingest({path("one.csv"), path("g1.json"), 500.0}, log);
  EXPECT_EQ(g.size(), 1);
  EXPECT_NE(log.str().find("clusters 1"), std::string::npos);
  const auto j = json::parse(cli::read_file(path("g1.json")));
  EXPECT_EQ(j["config_digest"].get<std::string>().rfind("sha256:", 0), 0u);
  EXPECT_EQ(cli::load_graph(cli::read_file(path("g1.json"))).size(), 1);
}

TEST_F(Scratch, IngestRadiusZeroKeepsDistinctLocations) {
  write("pts.csv",
        "lat,lon,timestamp\n40.75,-73.98,0\n40.75,-73.98,60\n40.7501,-73.98,120\n40.76,-73.97,180\n");
  std::ostringstream log;
  const auto g = cli::cmd_ingest({path("pts.csv"), path("g0.json"), 0.0}, log);
  EXPECT_EQ(g.size(), 3);
  // Three minutes of data, four pickups.
  double total = 0.0;
  for (const auto& v : g.vertices) total += v.arrival_rate;
  EXPECT_NEAR(total, 4.0 / 3.0, 1e-12);
  EXPECT_THROW(cli::cmd_ingest({path("pts.csv"), path("g0.json"), 0.0}, log), ConfigError);
}

TEST_F(Scratch, IngestExitCodes) {
  write("bad.csv", "lat,lon,timestamp\nx,y,z\n");
  EXPECT_EQ(tool("ingest " + path("bad.csv").string() + " --out " + path("g.json").string()), 3);
  EXPECT_EQ(tool("ingest " + path("missing.csv").string() + " --out " + path("g.json").string()), 3);
  write("ok.csv", "lat,lon,timestamp\n40.75,-73.98,0\n");
  EXPECT_EQ(tool("ingest " + path("ok.csv").string() + " --out " + path("g.json").string() + " --radius -1"), 2);
  EXPECT_EQ(tool("ingest " + path("ok.csv").string() + " --out " + path("g.json").string()), 0);
  EXPECT_EQ(tool("ingest --bogus"), 2);
}

TEST(RunConfig, SchemaErrorsNameTheField) {
  auto expect_field = [](const json& doc, const std::string& field) {
    try {
      cli::apply_config(doc);
      FAIL() << "accepted " << doc.dump();
    } catch (const ConfigError& e) {
      EXPECT_NE(std::string(e.what()).find("'" + field + "'"), std::string::npos) << e.what();
    }
  };
  expect_field({{"drivers", "ten"}}, "drivers");
  expect_field({{"drivers", 0}}, "drivers");
  expect_field({{"scenario", "gridlock"}}, "scenario");
  expect_field({{"beta", -1.0}}, "beta");
  expect_field({{"seed", -3}}, "seed");
  expect_field({{"fare_per_min", 0.0}}, "fare_per_min");
  expect_field({{"relocation_uses_budget", 1}}, "relocation_uses_budget");
  expect_field({{"colour", "red"}}, "colour");
  EXPECT_THROW(cli::apply_config(json::array()), ConfigError);
}

TEST(RunConfig, FlagsOverrideTheFile) {
  const auto file = cli::apply_config({{"drivers", 7}, {"control", "pay"}, {"beta", 2.5}, {"reps", 3}});
  const auto merged = cli::apply_config({{"drivers", 9}}, file);
  EXPECT_EQ(merged.sim.num_drivers, 9);
  EXPECT_EQ(merged.sim.control, ControlKind::Pay);
  EXPECT_EQ(merged.sim.beta, 2.5);
  EXPECT_EQ(merged.reps, 3);
  EXPECT_NE(cli::json_digest(cli::canonical_config(file)), cli::json_digest(cli::canonical_config(merged)));
}

TEST_F(Scratch, RunIsDeterministicAndRefusesOverwrite) {
  const std::string args = "run --graph " + graph() + " --control none --drivers 5 --requests 10 --seed 7 --out ";
  ASSERT_EQ(tool(args + path("a").string()), 0);
  ASSERT_EQ(tool(args + path("b").string()), 0);
  for (const char* f : {"episode.csv", "episode.json", "manifest.json"}) {
    const auto a = cli::read_file(path("a") / f), b = cli::read_file(path("b") / f);
    if (std::string(f) == "manifest.json") {
      // Only the recorded output directory differs.
      auto ja = json::parse(a), jb = json::parse(b);
      ja.erase("output_dir");
      jb.erase("output_dir");
      EXPECT_EQ(ja, jb);
    } else {
      EXPECT_EQ(a, b) << f;
    }
  }
  const auto before = cli::read_file(path("a") / "episode.csv");
  EXPECT_EQ(tool(args + path("a").string()), 2);
  EXPECT_EQ(tool(args + path("a").string() + " --force"), 0);
  EXPECT_EQ(cli::read_file(path("a") / "episode.csv"), before);
  EXPECT_EQ(lines_of(path("a") / "episode.csv").size(), 12u);  // digest, header, 10 rows
}

TEST_F(Scratch, EveryOutputCarriesTheConfigDigest) {
  ASSERT_EQ(tool("run --graph " + graph() + " --control pay --beta 10 --scenario random --drivers 6 --requests 15 "
                 "--seed 3 --out " + path("ep").string()),
            0);
  ASSERT_EQ(tool("run --graph " + graph() + " --control info --scenario jammed --drivers 6 --requests 5 --reps 3 "
                 "--seed 3 --out " + path("ba").string()),
            0);
  for (const auto& dir : {path("ep"), path("ba")}) {
    const auto manifest = json::parse(cli::read_file(dir / "manifest.json"));
    const std::string digest = manifest["config_digest"];
    EXPECT_EQ(digest, cli::json_digest(manifest["config"]));
    EXPECT_EQ(manifest["input_digest"], "sha256:" + cli::sha256_hex(cli::read_file(graph())));
    for (const auto& name : manifest["outputs"]) {
      const fs::path p = dir / name.get<std::string>();
      if (p.extension() == ".csv")
        EXPECT_EQ(first_line(p), cli::csv_header_comment(digest).substr(0, cli::csv_header_comment(digest).size() - 1));
      else
        EXPECT_EQ(json::parse(cli::read_file(p))["config_digest"], digest);
    }
  }
}

TEST_F(Scratch, PayRunPopulatesImprovementAndPay) {
  ASSERT_EQ(tool("run --graph " + graph() + " --control pay --beta 10 --scenario random --drivers 6 --requests 20 "
                 "--seed 11 --out " + path("p").string()),
            0);
  const auto doc = json::parse(cli::read_file(path("p") / "episode.json"));
  EXPECT_GT(doc["total_pay"].get<double>(), 0.0);
  EXPECT_TRUE(doc["improvement"].is_number());
  const auto rows = lines_of(path("p") / "episode.csv");
  const auto header = split(rows[1]);
  const auto pay_col = std::find(header.begin(), header.end(), "payment") - header.begin();
  double pay = 0.0;
  for (std::size_t k = 2; k < rows.size(); ++k) pay += std::stod(split(rows[k])[static_cast<std::size_t>(pay_col)]);
  EXPECT_NEAR(pay, doc["total_pay"].get<double>(), 1e-9);
}

TEST_F(Scratch, RunErrorsMapToExitCodes) {
  write("bad.json", R"({"drivers": "ten"})");
  write("junk.json", "{not json");
  write("graph_junk.json", "[1, 2]");
  const std::string g = graph();
  EXPECT_EQ(tool("run --graph " + g + " --config " + path("bad.json").string() + " --out " + path("x").string()), 2);
  EXPECT_EQ(tool("run --graph " + g + " --config " + path("junk.json").string() + " --out " + path("x").string()), 2);
  EXPECT_EQ(tool("run --graph " + g + " --control bribe --out " + path("x").string()), 2);
  EXPECT_EQ(tool("run --graph " + g + " --scenario jammed --out " + path("x").string() + " --drivers 2 --requests 1 "
                 "--config " + path("k.json").string()),
            2);  // unreadable config is a config error
  EXPECT_EQ(tool("run --graph " + path("nope.json").string() + " --out " + path("x").string()), 3);
  EXPECT_EQ(tool("run --graph " + path("graph_junk.json").string() + " --out " + path("x").string()), 3);
  EXPECT_FALSE(fs::exists(path("x") / "manifest.json"));
}

TEST_F(Scratch, ReportOfOneRunEqualsItsRow) {
  ASSERT_EQ(tool("run --graph " + graph() + " --control pay --beta 1 --scenario jammed --drivers 6 --requests 10 "
                 "--reps 4 --seed 5 --out " + path("r").string()),
            0);
  std::ostringstream log;
  const auto rr = cli::cmd_report({path("r"), path("report.csv")}, log);
  EXPECT_EQ(rr.runs, 1);
  EXPECT_EQ(rr.rows, 1);
  const auto report = lines_of(path("report.csv"));
  const auto batch = lines_of(path("r") / "batch.csv");
  ASSERT_EQ(report.size(), 3u);
  const auto rep = split(report[2]), bat = split(batch[2]);
  const auto rh = split(report[1]), bh = split(batch[1]);
  for (std::size_t k = 0; k < bh.size(); ++k) {
    const auto it = std::find(rh.begin(), rh.end(), bh[k]);
    if (it == rh.end()) continue;
    EXPECT_EQ(rep[static_cast<std::size_t>(it - rh.begin())], bat[k]) << bh[k];
  }
}

TEST_F(Scratch, ReportQuartilesBracketTheMedian) {
  ASSERT_EQ(tool("run --graph " + graph() + " --control pay --scenario random --drivers 4 --requests 3 --reps 100 "
                 "--seed 1 --out " + path("r").string()),
            0);
  std::ostringstream log;
  cli::cmd_report({path("r"), {}}, log);
  const auto rows = lines_of(path("r") / "report.csv");
  const auto h = split(rows[1]), v = split(rows[2]);
  auto col = [&](const std::string& name) {
    return std::stod(v[static_cast<std::size_t>(std::find(h.begin(), h.end(), name) - h.begin())]);
  };
  EXPECT_EQ(col("repetitions"), 100);
  for (const std::string m : {"improvement", "pay", "informed"}) {
    EXPECT_LE(col(m + "_q1"), col(m + "_median"));
    EXPECT_LE(col(m + "_median"), col(m + "_q3"));
  }
}

TEST_F(Scratch, ReportGroupsMixedControlsAndListsMissingRuns) {
  const std::string base = "run --graph " + graph() + " --drivers 4 --requests 4 --scenario jammed ";
  ASSERT_EQ(tool(base + "--control none --seed 2 --out " + path("res/a").string()), 0);
  ASSERT_EQ(tool(base + "--control none --seed 9 --out " + path("res/b").string()), 0);
  ASSERT_EQ(tool(base + "--control info --seed 2 --out " + path("res/c").string()), 0);
  ASSERT_EQ(tool(base + "--control pay --beta 1 --seed 2 --out " + path("res/d").string()), 0);
  ASSERT_EQ(tool(base + "--control pay --beta 10 --seed 2 --out " + path("res/e").string()), 0);
  std::ostringstream log;
  auto rr = cli::cmd_report({path("res"), {}}, log);
  EXPECT_EQ(rr.runs, 5);
  EXPECT_EQ(rr.rows, 4);  // none pooled, info, pay at two betas
  EXPECT_TRUE(rr.missing.empty());

  fs::remove(path("res/c") / "episode.json");
  EXPECT_EQ(tool("report " + path("res").string() + " --force"), 3);
  rr = cli::cmd_report({path("res"), {}, true}, log);
  EXPECT_EQ(rr.runs, 4);
  ASSERT_EQ(rr.missing.size(), 1u);
  EXPECT_NE(rr.missing[0].find("res/c"), std::string::npos);
  EXPECT_EQ(lines_of(path("res/report.csv")).size(), 5u);  // partial report still written
  EXPECT_EQ(tool("report " + path("empty_dir_that_is_missing").string()), 3);
}

// Runs only when the Uber pickup CSV is available locally.
TEST_F(Scratch, UberAprilClustersNearTheReportedCount) {
  const char* csv = std::getenv("RSCTL_UBER_CSV");
  if (csv == nullptr || !fs::exists(csv)) GTEST_SKIP() << "set RSCTL_UBER_CSV to the Uber pickup CSV";
  std::ostringstream log;
  const auto g = cli::cmd_ingest({csv, path("nyc.json"), 500.0}, log);
  EXPECT_GE(g.size(), 100);
  EXPECT_LE(g.size(), 160);
}
