#include <sys/wait.h>
#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>

#include "doctest.h"
#include "json.hpp"
#include "vloc/config.hpp"
#include "vloc/errors.hpp"
#include "vloc/io.hpp"
#include "vloc/synth.hpp"

namespace fs = std::filesystem;
namespace synth = vloc::synth;

namespace {

// Scratch directory shared by the file-format tests; recreated per process.
const fs::path& scratch_dir() {
  static const fs::path dir = [] {
    const fs::path d = fs::temp_directory_path() /
                       ("vloc_tests_" + std::to_string(::getpid()));
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(VLOC_CLI_PATH) + " " + args +
                          " > /dev/null 2> /dev/null";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

vloc::Traversal sample_traversal() {
  synth::RouteSpec route;
  route.waypoints = {{0.0, 0.0}, {40.0, 30.0}};
  synth::TraversalSpec spec;
  spec.condition = vloc::kSnowy;
  spec.rng_seed = 77;
  vloc::Traversal t = synth::generate_traversal(route, spec, 4);
  synth::CorruptionSpec c;
  c.start_fraction = 0.25;
  c.end_fraction = 0.5;
  return synth::corrupt(t, c);
}

}  // namespace

TEST_CASE("format_double round-trips exactly") {
  for (const double v : {0.0, 0.1, -2.5, 1.0 / 3.0, std::sqrt(2.0), 1e300,
                         1e-300, 12345.6789, -0.0}) {
    const std::string s = vloc::io::format_double(v);
    CHECK(std::stod(s) == v);
  }
  CHECK(vloc::io::format_double(0.1) == "0.1");
  CHECK(vloc::io::format_double(2.0) == "2");  // shortest exact form
}

TEST_CASE("traversal files round-trip bit-exactly") {
  const vloc::Traversal t = sample_traversal();
  const fs::path path = scratch_dir() / "traversal.jsonl";
  vloc::io::write_traversal(path, t);
  const vloc::Traversal back = vloc::io::read_traversal(path);

  CHECK(back.traversal_id == t.traversal_id);
  REQUIRE(back.frames.size() == t.frames.size());
  for (std::size_t i = 0; i < t.frames.size(); ++i) {
    const vloc::Frame& a = t.frames[i];
    const vloc::Frame& b = back.frames[i];
    CHECK(a.frame_id == b.frame_id);
    CHECK(a.t == b.t);  // exact doubles survive the text format
    CHECK(a.pose.x == b.pose.x);
    CHECK(a.pose.y == b.pose.y);
    CHECK(a.pose.heading == b.pose.heading);
    CHECK(a.condition == b.condition);
    CHECK(a.appearance_seed == b.appearance_seed);
    CHECK(a.corruption == b.corruption);
    REQUIRE(a.descriptor.size() == b.descriptor.size());
    CHECK((a.descriptor.array() == b.descriptor.array()).all());
  }

  CHECK_THROWS_AS(vloc::io::read_traversal(scratch_dir() / "absent.jsonl"),
                  vloc::DataError);
}

TEST_CASE("manifest files round-trip") {
  vloc::io::Manifest m;
  m.seed = 99;
  m.route_length = 1234.5;
  vloc::io::ManifestEntry e;
  e.traversal_id = 7;
  e.condition = vloc::kNight;
  e.role = "query";
  e.count = 201;
  e.file = "traversal_7.jsonl";
  e.seed = 4242;
  synth::CorruptionSpec c;
  c.start_fraction = 0.3;
  c.end_fraction = 0.35;
  c.mode = synth::CorruptionMode::kSaltPepperLike;
  c.severity = 0.5;
  e.corruptions.push_back(c);
  m.traversals.push_back(e);

  const fs::path path = scratch_dir() / "manifest.json";
  vloc::io::write_manifest(path, m);
  const vloc::io::Manifest back = vloc::io::read_manifest(path);
  CHECK(back.seed == 99);
  CHECK(back.route_length == 1234.5);
  REQUIRE(back.traversals.size() == 1);
  CHECK(back.traversals[0].traversal_id == 7);
  CHECK(back.traversals[0].role == "query");
  CHECK(back.traversals[0].condition == vloc::kNight);
  CHECK(back.traversals[0].seed == 4242);
  REQUIRE(back.traversals[0].corruptions.size() == 1);
  CHECK(back.traversals[0].corruptions[0].severity == 0.5);
  CHECK(back.traversals[0].corruptions[0].mode ==
        synth::CorruptionMode::kSaltPepperLike);
}

TEST_CASE("trajectory files round-trip including optional fields") {
  std::vector<std::vector<vloc::eval::TrajectoryRecord>> records(1);
  vloc::eval::TrajectoryRecord r;
  r.query_traversal_id = 101;
  r.frame_id = 10100001;
  r.t = 0.1;
  r.meas = {1.0 / 3.0, -2.0 / 7.0};
  r.source_traversal_id = 3;
  r.source_frame_id = 300055;
  r.n_kpm = 1234;
  r.sigma = {0.5, 1.5};
  r.R_world << 1.25, 0.1, 0.1, 2.5;
  r.accepted = true;
  r.d2 = 3.75;
  r.initialized = true;
  r.est_mean << 0.1, 0.2, 0.3, 0.4, 0.5;
  r.est_cov = vloc::ukf::Mat5::Identity() * std::sqrt(3.0);
  records[0].push_back(r);
  r.d2.reset();
  r.accepted = false;
  r.initialized = false;
  records[0].push_back(r);

  const fs::path path = scratch_dir() / "trajectory.jsonl";
  const std::vector<double> grid{0.5, 0.9};
  vloc::io::write_trajectory(path, grid, records);
  const vloc::io::TrajectoryFile back = vloc::io::read_trajectory(path);

  CHECK(back.grid == grid);
  REQUIRE(back.records.size() == 2);
  const vloc::eval::TrajectoryRecord& b0 = back.records[0];
  CHECK(b0.query_traversal_id == 101);
  CHECK(b0.meas.x() == 1.0 / 3.0);
  CHECK(b0.sigma == std::vector<double>{0.5, 1.5});
  CHECK((b0.R_world.array() == r.R_world.array()).all());
  REQUIRE(b0.d2.has_value());
  CHECK(*b0.d2 == 3.75);
  CHECK(b0.initialized);
  CHECK((b0.est_cov.array() ==
         (vloc::ukf::Mat5::Identity() * std::sqrt(3.0)).array())
            .all());
  CHECK(!back.records[1].d2.has_value());
  CHECK(!back.records[1].initialized);
}

TEST_CASE("config documents round-trip through serialization") {
  vloc::RunConfig cfg;
  cfg.seed = 11;
  cfg.scenario.route_length = 500.0;
  cfg.gate = "off";
  cfg.retrieval.pooled = true;
  cfg.filter.reinit_after_rejections = 4;
  synth::CorruptionSpec c;
  c.start_fraction = 0.1;
  c.end_fraction = 0.2;
  cfg.corruptions.push_back(c);

  const std::string text = vloc::serialize_config(cfg);
  const vloc::RunConfig back = vloc::parse_config(text, "test");
  CHECK(back.seed == 11);
  CHECK(back.scenario.route_length == 500.0);
  CHECK(back.gate == "off");
  CHECK(!back.gate_alpha().has_value());
  CHECK(back.retrieval.pooled);
  CHECK(back.filter.reinit_after_rejections == 4);
  REQUIRE(back.corruptions.size() == 1);
  CHECK(back.corruptions[0].end_fraction == 0.2);

  CHECK_THROWS_AS(vloc::parse_config("{\"sede\": 1}", "test"),
                  vloc::ConfigError);
  CHECK_THROWS_AS(vloc::parse_config("{\"gate\": \"1.5\"}", "test"),
                  vloc::ConfigError);
  CHECK_THROWS_AS(vloc::parse_config("not json", "test"), vloc::ConfigError);
}

TEST_CASE("the full pipeline runs end to end and is reproducible") {
  const fs::path dir = scratch_dir() / "pipeline";
  fs::create_directories(dir);
  const std::string base =
      " --dataset-dir " + (dir / "data").string() + " --model-file " +
      (dir / "model.json").string() + " --trajectory-file " +
      (dir / "trajectory.jsonl").string() + " --report-dir " +
      (dir / "report").string() +
      " --route-length 240 --seed 3 --min-bin-count 10";

  REQUIRE(run_cli("simulate" + base) == 0);
  CHECK(fs::exists(dir / "data" / "manifest.json"));
  int n_jsonl = 0;
  for (const auto& entry : fs::directory_iterator(dir / "data")) {
    n_jsonl += entry.path().extension() == ".jsonl" ? 1 : 0;
  }
  CHECK(n_jsonl == 12);  // nine databases plus three queries

  REQUIRE(run_cli("calibrate" + base) == 0);
  CHECK(fs::exists(dir / "model.json"));

  REQUIRE(run_cli("localize" + base + " --gate off") == 0);
  CHECK(fs::exists(dir / "trajectory.jsonl"));

  REQUIRE(run_cli("evaluate" + base) == 0);
  CHECK(fs::exists(dir / "report" / "report.json"));
  CHECK(fs::exists(dir / "report" / "report.csv"));
  CHECK(fs::exists(dir / "report" / "reliability.csv"));

  // Re-running the scoring step must reproduce the reports byte for byte.
  const std::string report = slurp(dir / "report" / "report.json");
  const std::string csv = slurp(dir / "report" / "report.csv");
  REQUIRE(run_cli("evaluate" + base) == 0);
  CHECK(slurp(dir / "report" / "report.json") == report);
  CHECK(slurp(dir / "report" / "report.csv") == csv);

  const auto parsed = nlohmann::json::parse(report);
  CHECK(parsed.contains("grid"));
  CHECK(parsed.contains("overall"));
  CHECK(parsed.contains("per_condition"));
  CHECK(parsed["overall"].contains("d_err_m"));
  CHECK(parsed["per_condition"].size() == 3);

  // The constant baseline path accepts an explicit variance.
  REQUIRE(run_cli("localize" + base +
                  " --gate off --baseline constant --baseline-sigma2 1.0") ==
          0);
}

TEST_CASE("CLI exit codes distinguish config, data and usage errors") {
  CHECK(run_cli("") == 2);            // missing subcommand
  CHECK(run_cli("--help") == 0);
  CHECK(run_cli("frobnicate") == 2);  // unknown subcommand
  CHECK(run_cli("localize --no-such-flag") == 2);
  CHECK(run_cli("localize --gate 0.5") == 2);  // outside the allowed set

  const fs::path dir = scratch_dir() / "errors";
  fs::create_directories(dir);

  // Unknown keys in a config file are config errors.
  {
    std::ofstream out(dir / "bad.json");
    out << "{\"sede\": 1}\n";
  }
  CHECK(run_cli("simulate --config " + (dir / "bad.json").string()) == 2);

  // A missing dataset directory is a data error.
  CHECK(run_cli("calibrate --dataset-dir " + (dir / "absent").string()) == 3);

  // The constant baseline requires its variance.
  CHECK(run_cli("localize --baseline constant --dataset-dir " +
                (dir / "absent").string()) == 2);
}

TEST_CASE("load_dataset splits databases from queries") {
  const fs::path dir = scratch_dir() / "dataset";
  fs::create_directories(dir);
  REQUIRE(run_cli("simulate --dataset-dir " + dir.string() +
                  " --route-length 120 --seed 5") == 0);

  const vloc::io::Dataset ds = vloc::io::load_dataset(dir);
  CHECK(ds.manifest.seed == 5);
  CHECK(ds.databases.size() == 9);
  CHECK(ds.queries.size() == 3);
  CHECK(ds.condition_of(1) == vloc::kSunny);
  CHECK(ds.condition_of(102) == vloc::kNight);
  CHECK_THROWS_AS(ds.condition_of(999), vloc::DataError);
  for (const vloc::Traversal& t : ds.databases) {
    CHECK(!t.frames.empty());
  }

  CHECK_THROWS_AS(vloc::io::load_dataset(scratch_dir() / "nowhere"),
                  vloc::DataError);
}
