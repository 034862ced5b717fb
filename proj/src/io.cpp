#include "vloc/io.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "vloc/errors.hpp"

namespace vloc::io {

namespace {

using ordered_json = nlohmann::ordered_json;

std::string double_key(double v) { return ordered_json(v).dump(); }

std::ofstream open_out(const std::filesystem::path& path) {
  if (path.has_parent_path()) {
    std::filesystem::create_directories(path.parent_path());
  }
  std::ofstream out(path, std::ios::binary);
  if (!out.is_open()) {
    throw DataError("cannot open for writing: " + path.string());
  }
  return out;
}

std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in.is_open()) {
    throw DataError("cannot open for reading: " + path.string());
  }
  return in;
}

ordered_json parse_line(const std::string& line,
                        const std::filesystem::path& path, std::size_t lineno) {
  try {
    return ordered_json::parse(line);
  } catch (const nlohmann::json::parse_error& e) {
    throw DataError(path.string() + ":" + std::to_string(lineno) + ": " +
                    e.what());
  }
}

const char* corruption_mode_name(synth::CorruptionMode mode) {
  return mode == synth::CorruptionMode::kBlurLike ? "blur_like"
                                                  : "saltpepper_like";
}

synth::CorruptionMode corruption_mode_from(const std::string& name) {
  if (name == "blur_like") {
    return synth::CorruptionMode::kBlurLike;
  }
  if (name == "saltpepper_like") {
    return synth::CorruptionMode::kSaltPepperLike;
  }
  throw DataError("unknown corruption mode: " + name);
}

ordered_json corruption_to_json(const synth::CorruptionSpec& c) {
  ordered_json j;
  j["start"] = c.start_fraction;
  j["end"] = c.end_fraction;
  j["mode"] = corruption_mode_name(c.mode);
  j["severity"] = c.severity;
  return j;
}

synth::CorruptionSpec corruption_from_json(const ordered_json& j) {
  synth::CorruptionSpec c;
  c.start_fraction = j.at("start").get<double>();
  c.end_fraction = j.at("end").get<double>();
  c.mode = corruption_mode_from(j.at("mode").get<std::string>());
  c.severity = j.at("severity").get<double>();
  return c;
}

ordered_json cov2_to_json(const Cov2& c) {
  return ordered_json{{c(0, 0), c(0, 1)}, {c(1, 0), c(1, 1)}};
}

Cov2 cov2_from_json(const ordered_json& j) {
  Cov2 c;
  c << j.at(0).at(0).get<double>(), j.at(0).at(1).get<double>(),
      j.at(1).at(0).get<double>(), j.at(1).at(1).get<double>();
  return c;
}

}  // namespace

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

void write_traversal(const std::filesystem::path& path, const Traversal& t) {
  t.validate();
  std::ofstream out = open_out(path);
  for (const Frame& f : t.frames) {
    ordered_json j;
    j["frame_id"] = f.frame_id;
    j["traversal_id"] = f.traversal_id;
    j["t"] = f.t;
    j["x"] = f.pose.x;
    j["y"] = f.pose.y;
    j["heading"] = f.pose.heading;
    j["condition"] = f.condition;
    ordered_json desc = ordered_json::array();
    for (int d = 0; d < f.descriptor.size(); ++d) {
      desc.push_back(f.descriptor(d));
    }
    j["descriptor"] = std::move(desc);
    j["appearance_seed"] = f.appearance_seed;
    j["corruption"] = f.corruption;
    out << j.dump() << "\n";
  }
  if (!out.good()) {
    throw DataError("write failed: " + path.string());
  }
}

Traversal read_traversal(const std::filesystem::path& path) {
  std::ifstream in = open_in(path);
  Traversal t;
  std::string line;
  std::size_t lineno = 0;
  bool first = true;
  std::size_t descriptor_len = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) {
      continue;
    }
    const ordered_json j = parse_line(line, path, lineno);
    try {
      Frame f;
      f.frame_id = j.at("frame_id").get<std::int64_t>();
      f.traversal_id = j.at("traversal_id").get<std::int64_t>();
      f.t = j.at("t").get<double>();
      f.pose.x = j.at("x").get<double>();
      f.pose.y = j.at("y").get<double>();
      f.pose.heading = j.at("heading").get<double>();
      f.condition = j.at("condition").get<std::string>();
      const auto& desc = j.at("descriptor");
      f.descriptor = Eigen::VectorXd(desc.size());
      for (std::size_t d = 0; d < desc.size(); ++d) {
        f.descriptor(static_cast<int>(d)) = desc.at(d).get<double>();
      }
      f.appearance_seed = j.at("appearance_seed").get<std::uint64_t>();
      f.corruption = j.at("corruption").get<double>();

      if (first) {
        t.traversal_id = f.traversal_id;
        descriptor_len = desc.size();
        first = false;
      } else if (desc.size() != descriptor_len) {
        throw DataError(path.string() + ":" + std::to_string(lineno) +
                        ": descriptor length changed mid-file");
      }
      t.frames.push_back(std::move(f));
    } catch (const nlohmann::json::exception& e) {
      throw DataError(path.string() + ":" + std::to_string(lineno) + ": " +
                      e.what());
    }
  }
  if (t.frames.empty()) {
    throw DataError(path.string() + ": no frames");
  }
  t.validate();
  return t;
}

void write_manifest(const std::filesystem::path& path, const Manifest& m) {
  ordered_json j;
  j["seed"] = m.seed;
  j["route_length"] = m.route_length;
  j["traversals"] = ordered_json::array();
  for (const ManifestEntry& e : m.traversals) {
    ordered_json je;
    je["traversal_id"] = e.traversal_id;
    je["condition"] = e.condition;
    je["role"] = e.role;
    je["count"] = e.count;
    je["file"] = e.file;
    je["seed"] = e.seed;
    je["corruptions"] = ordered_json::array();
    for (const synth::CorruptionSpec& c : e.corruptions) {
      je["corruptions"].push_back(corruption_to_json(c));
    }
    j["traversals"].push_back(std::move(je));
  }
  std::ofstream out = open_out(path);
  out << j.dump(2) << "\n";
  if (!out.good()) {
    throw DataError("write failed: " + path.string());
  }
}

Manifest read_manifest(const std::filesystem::path& path) {
  std::ifstream in = open_in(path);
  std::stringstream ss;
  ss << in.rdbuf();
  ordered_json j;
  try {
    j = ordered_json::parse(ss.str());
  } catch (const nlohmann::json::parse_error& e) {
    throw DataError(path.string() + ": " + e.what());
  }
  Manifest m;
  try {
    m.seed = j.at("seed").get<std::uint64_t>();
    m.route_length = j.at("route_length").get<double>();
    for (const auto& je : j.at("traversals")) {
      ManifestEntry e;
      e.traversal_id = je.at("traversal_id").get<std::int64_t>();
      e.condition = je.at("condition").get<std::string>();
      e.role = je.at("role").get<std::string>();
      if (e.role != "database" && e.role != "query") {
        throw DataError(path.string() + ": unknown role " + e.role);
      }
      e.count = je.at("count").get<std::int64_t>();
      e.file = je.at("file").get<std::string>();
      e.seed = je.at("seed").get<std::uint64_t>();
      for (const auto& jc : je.at("corruptions")) {
        e.corruptions.push_back(corruption_from_json(jc));
      }
      m.traversals.push_back(std::move(e));
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError(path.string() + ": " + e.what());
  }
  return m;
}

const std::string& Dataset::condition_of(std::int64_t traversal_id) const {
  for (const ManifestEntry& e : manifest.traversals) {
    if (e.traversal_id == traversal_id) {
      return e.condition;
    }
  }
  throw DataError("traversal " + std::to_string(traversal_id) +
                  " not in manifest");
}

Dataset load_dataset(const std::filesystem::path& dir) {
  Dataset ds;
  ds.manifest = read_manifest(dir / "manifest.json");
  for (const ManifestEntry& e : ds.manifest.traversals) {
    Traversal t = read_traversal(dir / e.file);
    if (t.traversal_id != e.traversal_id) {
      throw DataError(e.file + ": traversal id does not match manifest");
    }
    if (static_cast<std::int64_t>(t.frames.size()) != e.count) {
      throw DataError(e.file + ": frame count does not match manifest");
    }
    (e.role == "database" ? ds.databases : ds.queries).push_back(std::move(t));
  }
  if (ds.databases.empty()) {
    throw DataError(dir.string() + ": dataset has no database traversals");
  }
  return ds;
}

void write_model_file(const std::filesystem::path& path,
                      const SensorErrorModelSet& set) {
  std::ofstream out = open_out(path);
  out << serialize_model_set(set);
  if (!out.good()) {
    throw DataError("write failed: " + path.string());
  }
}

SensorErrorModelSet read_model_file(const std::filesystem::path& path) {
  std::ifstream in = open_in(path);
  std::stringstream ss;
  ss << in.rdbuf();
  return deserialize_model_set(ss.str());
}

void write_trajectory(
    const std::filesystem::path& path, const std::vector<double>& grid,
    const std::vector<std::vector<eval::TrajectoryRecord>>& records) {
  std::ofstream out = open_out(path);
  for (const auto& group : records) {
    for (const eval::TrajectoryRecord& r : group) {
      ordered_json j;
      j["query_traversal_id"] = r.query_traversal_id;
      j["frame_id"] = r.frame_id;
      j["t"] = r.t;
      j["meas_x"] = r.meas.x();
      j["meas_y"] = r.meas.y();
      j["source_traversal_id"] = r.source_traversal_id;
      j["source_frame_id"] = r.source_frame_id;
      j["n_kpm"] = r.n_kpm;
      ordered_json sig = ordered_json::object();
      for (std::size_t g = 0; g < grid.size(); ++g) {
        sig[double_key(grid[g])] = r.sigma[g];
      }
      j["sigma"] = std::move(sig);
      j["R"] = cov2_to_json(r.R_world);
      j["accepted"] = r.accepted;
      j["d2"] = r.d2.has_value() ? ordered_json(*r.d2) : ordered_json(nullptr);
      if (r.initialized) {
        ordered_json est;
        est["x"] = r.est_mean(0);
        est["y"] = r.est_mean(1);
        est["heading"] = r.est_mean(2);
        est["v"] = r.est_mean(3);
        est["heading_rate"] = r.est_mean(4);
        j["est"] = std::move(est);
        ordered_json cov = ordered_json::array();
        for (int a = 0; a < 5; ++a) {
          ordered_json row = ordered_json::array();
          for (int b = 0; b < 5; ++b) {
            row.push_back(r.est_cov(a, b));
          }
          cov.push_back(std::move(row));
        }
        j["cov"] = std::move(cov);
      } else {
        j["est"] = nullptr;
        j["cov"] = nullptr;
      }
      out << j.dump() << "\n";
    }
  }
  if (!out.good()) {
    throw DataError("write failed: " + path.string());
  }
}

TrajectoryFile read_trajectory(const std::filesystem::path& path) {
  std::ifstream in = open_in(path);
  TrajectoryFile tf;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) {
      continue;
    }
    const ordered_json j = parse_line(line, path, lineno);
    try {
      eval::TrajectoryRecord r;
      r.query_traversal_id = j.at("query_traversal_id").get<std::int64_t>();
      r.frame_id = j.at("frame_id").get<std::int64_t>();
      r.t = j.at("t").get<double>();
      r.meas = {j.at("meas_x").get<double>(), j.at("meas_y").get<double>()};
      r.source_traversal_id = j.at("source_traversal_id").get<std::int64_t>();
      r.source_frame_id = j.at("source_frame_id").get<std::int64_t>();
      r.n_kpm = j.at("n_kpm").get<int>();

      std::vector<double> grid;
      for (const auto& [key, value] : j.at("sigma").items()) {
        grid.push_back(std::stod(key));
        r.sigma.push_back(value.get<double>());
      }
      if (tf.grid.empty()) {
        tf.grid = grid;
      } else if (grid != tf.grid) {
        throw DataError(path.string() + ":" + std::to_string(lineno) +
                        ": confidence grid changed mid-file");
      }

      r.R_world = cov2_from_json(j.at("R"));
      r.accepted = j.at("accepted").get<bool>();
      if (!j.at("d2").is_null()) {
        r.d2 = j.at("d2").get<double>();
      }
      if (!j.at("est").is_null()) {
        r.initialized = true;
        const auto& est = j.at("est");
        r.est_mean << est.at("x").get<double>(), est.at("y").get<double>(),
            est.at("heading").get<double>(), est.at("v").get<double>(),
            est.at("heading_rate").get<double>();
        const auto& cov = j.at("cov");
        for (int a = 0; a < 5; ++a) {
          for (int b = 0; b < 5; ++b) {
            r.est_cov(a, b) = cov.at(a).at(b).get<double>();
          }
        }
      }
      tf.records.push_back(std::move(r));
    } catch (const nlohmann::json::exception& e) {
      throw DataError(path.string() + ":" + std::to_string(lineno) + ": " +
                      e.what());
    }
  }
  if (tf.records.empty()) {
    throw DataError(path.string() + ": no trajectory records");
  }
  return tf;
}

namespace {

ordered_json metric_to_json(const eval::MetricBlock& m) {
  ordered_json j;
  j["d_err_m"] = m.d_err;
  j["credibility_pct"] = {m.credibility[0], m.credibility[1], m.credibility[2]};
  j["n_r_pct"] = m.n_r;
  j["n_measurements"] = m.n_measurements;
  j["n_gated"] = m.n_gated;
  j["n_rejected"] = m.n_rejected;
  j["reliability"] = ordered_json::array();
  for (const eval::ReliabilityPoint& p : m.reliability) {
    ordered_json jp;
    jp["c"] = p.c;
    jp["p_hat"] = p.p_hat;
    jp["n"] = p.n;
    j["reliability"].push_back(std::move(jp));
  }
  return j;
}

}  // namespace

void write_report_json(const std::filesystem::path& path,
                       const eval::EvalReport& report) {
  ordered_json j;
  j["grid"] = report.grid;
  j["overall"] = metric_to_json(report.overall);
  j["per_condition"] = ordered_json::object();
  for (const auto& [condition, block] : report.per_condition) {
    j["per_condition"][condition] = metric_to_json(block);
  }
  std::ofstream out = open_out(path);
  out << j.dump(2) << "\n";
  if (!out.good()) {
    throw DataError("write failed: " + path.string());
  }
}

void write_report_csv(const std::filesystem::path& path,
                      const eval::EvalReport& report) {
  std::ofstream out = open_out(path);
  out << "scope,d_err_m,cred_68_pct,cred_95_pct,cred_997_pct,n_r_pct,"
         "n_measurements\n";
  const auto row = [&out](const std::string& scope,
                          const eval::MetricBlock& m) {
    out << scope << "," << format_double(m.d_err) << ","
        << format_double(m.credibility[0]) << ","
        << format_double(m.credibility[1]) << ","
        << format_double(m.credibility[2]) << "," << format_double(m.n_r)
        << "," << m.n_measurements << "\n";
  };
  row("overall", report.overall);
  for (const auto& [condition, block] : report.per_condition) {
    row(condition, block);
  }
  if (!out.good()) {
    throw DataError("write failed: " + path.string());
  }
}

void write_reliability_csv(const std::filesystem::path& path,
                           const eval::EvalReport& report) {
  std::ofstream out = open_out(path);
  out << "scope,confidence,observed,count\n";
  const auto rows = [&out](const std::string& scope,
                           const eval::MetricBlock& m) {
    for (const eval::ReliabilityPoint& p : m.reliability) {
      out << scope << "," << format_double(p.c) << "," << format_double(p.p_hat)
          << "," << p.n << "\n";
    }
  };
  rows("overall", report.overall);
  for (const auto& [condition, block] : report.per_condition) {
    rows(condition, block);
  }
  if (!out.good()) {
    throw DataError("write failed: " + path.string());
  }
}

}  // namespace vloc::io
