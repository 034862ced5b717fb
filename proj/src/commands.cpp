#include "vloc/commands.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <unordered_map>

#include "vloc/errors.hpp"
#include "vloc/eval.hpp"
#include "vloc/io.hpp"

namespace vloc {

namespace {

std::string traversal_file_name(const std::string& role, std::int64_t id) {
  return (role == "database" ? "db_" : "query_") + std::to_string(id) +
         ".jsonl";
}

std::size_t grid_index_at_least(const std::vector<double>& grid, double c) {
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (grid[i] >= c - 1e-12) {
      return i;
    }
  }
  return grid.size() - 1;
}

std::string fixed3(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.3f", v);
  return buf;
}

}  // namespace

void cmd_simulate(const RunConfig& cfg, std::ostream& out) {
  cfg.validate();
  synth::ScenarioConfig scenario_cfg = cfg.scenario;
  scenario_cfg.seed = cfg.seed;
  synth::Scenario scenario = synth::make_paper_scenario(scenario_cfg);

  for (Traversal& q : scenario.queries) {
    for (const synth::CorruptionSpec& c : cfg.corruptions) {
      q = synth::corrupt(q, c);
    }
  }

  io::Manifest manifest;
  manifest.seed = cfg.seed;
  manifest.route_length = cfg.scenario.route_length;

  const auto add_entry = [&](const Traversal& t, const std::string& role) {
    io::ManifestEntry e;
    e.traversal_id = t.traversal_id;
    e.condition = t.frames.front().condition;
    e.role = role;
    e.count = static_cast<std::int64_t>(t.frames.size());
    e.file = traversal_file_name(role, t.traversal_id);
    e.seed = synth::scenario_traversal_seed(cfg.seed, t.traversal_id);
    if (role == "query") {
      e.corruptions = cfg.corruptions;
    }
    manifest.traversals.push_back(e);
    io::write_traversal(cfg.paths.dataset_dir / e.file, t);
  };

  for (const Traversal& db : scenario.databases) {
    add_entry(db, "database");
  }
  for (const Traversal& q : scenario.queries) {
    add_entry(q, "query");
  }
  io::write_manifest(cfg.paths.dataset_dir / "manifest.json", manifest);

  out << "simulate: wrote " << manifest.traversals.size()
      << " traversals (" << scenario.databases.size() << " database, "
      << scenario.queries.size() << " query) to "
      << cfg.paths.dataset_dir.string() << "\n";
}

void cmd_calibrate(const RunConfig& cfg, std::ostream& out) {
  cfg.validate();
  const io::Dataset ds = io::load_dataset(cfg.paths.dataset_dir);
  const SyntheticMatcher matcher(cfg.matcher);

  const auto samples = cross_validate(ds.databases, cfg.retrieval, matcher);
  const SensorErrorModelSet set = fit_model_set(samples, cfg.error_model);
  io::write_model_file(cfg.paths.model_file, set);

  const std::size_t i68 = grid_index_at_least(set.confidence_grid, 0.68);
  const std::size_t i95 = grid_index_at_least(set.confidence_grid, 0.95);
  out << "calibrate: fitted " << set.models.size() << " models, wrote "
      << cfg.paths.model_file.string() << "\n";
  for (const SensorErrorModel& model : set.models) {
    std::int64_t total = 0;
    for (const ModelBin& bin : model.bins) {
      total += bin.count;
    }
    out << "  traversal " << model.traversal_id << ": " << model.bins.size()
        << " bins, " << total << " samples\n";
    for (const ModelBin& bin : model.bins) {
      out << "    [" << bin.lo << ", ";
      if (bin.hi.has_value()) {
        out << *bin.hi;
      } else {
        out << "inf";
      }
      out << ")  count=" << bin.count << "  sigma"
          << std::lround(100.0 * set.confidence_grid[i68]) << "="
          << fixed3(bin.sigma[i68]) << "  sigma"
          << std::lround(100.0 * set.confidence_grid[i95]) << "="
          << fixed3(bin.sigma[i95]) << "\n";
    }
  }
}

void cmd_localize(const RunConfig& cfg, std::ostream& out) {
  cfg.validate();
  const io::Dataset ds = io::load_dataset(cfg.paths.dataset_dir);
  if (ds.queries.empty()) {
    throw DataError("localize: dataset has no query traversals");
  }
  const SensorErrorModelSet models = io::read_model_file(cfg.paths.model_file);
  const SyntheticMatcher matcher(cfg.matcher);
  const ukf::FilterConfig filter_cfg = cfg.resolved_filter();

  std::vector<std::vector<eval::TrajectoryRecord>> groups;
  std::int64_t accepted = 0;
  std::int64_t total = 0;
  for (const Traversal& q : ds.queries) {
    const eval::TraversalRun run = eval::compute_measurements(
        q, ds.databases, models, cfg.retrieval, matcher);
    groups.push_back(eval::run_filter(run, filter_cfg));
    for (const eval::TrajectoryRecord& r : groups.back()) {
      total += 1;
      accepted += r.accepted ? 1 : 0;
    }
  }
  io::write_trajectory(cfg.paths.trajectory_file, models.confidence_grid,
                       groups);

  out << "localize: " << total << " measurements over " << groups.size()
      << " query traversals, " << accepted << " accepted, wrote "
      << cfg.paths.trajectory_file.string() << "\n";
}

void cmd_evaluate(const RunConfig& cfg, std::ostream& out) {
  cfg.validate();
  const io::Dataset ds = io::load_dataset(cfg.paths.dataset_dir);
  const io::TrajectoryFile tf = io::read_trajectory(cfg.paths.trajectory_file);

  // Regroup the flat record stream by query traversal, preserving file order.
  std::vector<std::vector<eval::TrajectoryRecord>> groups;
  std::map<std::int64_t, std::size_t> group_of;
  for (const eval::TrajectoryRecord& r : tf.records) {
    const auto [it, inserted] =
        group_of.try_emplace(r.query_traversal_id, groups.size());
    if (inserted) {
      groups.emplace_back();
    }
    groups[it->second].push_back(r);
  }

  const auto find_traversal = [&ds](std::int64_t id) -> const Traversal& {
    for (const Traversal& t : ds.queries) {
      if (t.traversal_id == id) {
        return t;
      }
    }
    for (const Traversal& t : ds.databases) {
      if (t.traversal_id == id) {
        return t;
      }
    }
    throw DataError("evaluate: trajectory references traversal " +
                    std::to_string(id) + " absent from the dataset");
  };

  std::vector<eval::TraversalRun> runs;
  for (const auto& group : groups) {
    const Traversal& gt = find_traversal(group.front().query_traversal_id);
    std::unordered_map<std::int64_t, const Frame*> by_frame;
    for (const Frame& f : gt.frames) {
      by_frame.emplace(f.frame_id, &f);
    }

    eval::TraversalRun run;
    run.query_traversal_id = gt.traversal_id;
    run.condition = ds.condition_of(gt.traversal_id);
    run.grid = tf.grid;
    for (const eval::TrajectoryRecord& r : group) {
      const auto it = by_frame.find(r.frame_id);
      if (it == by_frame.end()) {
        throw DataError("evaluate: trajectory frame " +
                        std::to_string(r.frame_id) +
                        " is not part of traversal " +
                        std::to_string(gt.traversal_id));
      }
      eval::MeasurementBundle b;
      b.frame_id = r.frame_id;
      b.t = r.t;
      b.gt = it->second->pose;
      b.meas = r.meas;
      b.source_traversal_id = r.source_traversal_id;
      b.source_frame_id = r.source_frame_id;
      b.n_kpm = r.n_kpm;
      b.sigma = r.sigma;
      run.bundles.push_back(std::move(b));
    }
    runs.push_back(std::move(run));
  }

  const eval::EvalReport report = eval::build_report(runs, groups);
  io::write_report_json(cfg.paths.report_dir / "report.json", report);
  io::write_report_csv(cfg.paths.report_dir / "report.csv", report);
  io::write_reliability_csv(cfg.paths.report_dir / "reliability.csv", report);

  out << "evaluate: " << report.overall.n_measurements
      << " measurements, d_err=" << io::format_double(report.overall.d_err)
      << " m, n_r=" << io::format_double(report.overall.n_r)
      << "%, wrote reports to " << cfg.paths.report_dir.string() << "\n";
}

}  // namespace vloc
