#include "vloc/error_model.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <tuple>

#include "json.hpp"
#include "vloc/errors.hpp"

namespace vloc {

namespace {

using ordered_json = nlohmann::ordered_json;

// Shortest decimal representation that parses back to the same double.
std::string double_key(double v) { return ordered_json(v).dump(); }

void sort_canonically(std::vector<CalibrationSample>& samples) {
  std::sort(samples.begin(), samples.end(),
            [](const CalibrationSample& a, const CalibrationSample& b) {
              return std::tie(a.query_traversal_id, a.n_kpm, a.error_norm,
                              a.error_ego.x(), a.error_ego.y()) <
                     std::tie(b.query_traversal_id, b.n_kpm, b.error_norm,
                              b.error_ego.x(), b.error_ego.y());
            });
}

}  // namespace

std::vector<double> default_confidence_grid() {
  std::vector<double> grid;
  for (int i = 1; i <= 19; ++i) {
    grid.push_back(static_cast<double>(i) / 20.0);
  }
  grid.push_back(0.99);
  return grid;
}

std::vector<double> ErrorModelConfig::grid_or_default() const {
  return confidence_grid.empty() ? default_confidence_grid() : confidence_grid;
}

const SensorErrorModel& SensorErrorModelSet::model_for(
    std::int64_t traversal_id) const {
  for (const SensorErrorModel& m : models) {
    if (m.traversal_id == traversal_id) {
      return m;
    }
  }
  throw DataError("no sensor error model for traversal " +
                  std::to_string(traversal_id));
}

std::map<std::int64_t, std::vector<CalibrationSample>> cross_validate(
    std::span<const Traversal> databases, const RetrievalConfig& retrieval,
    const Matcher& matcher) {
  if (databases.size() < 2) {
    throw DataError("cross_validate: multiple traversals required");
  }
  RetrievalConfig single = retrieval;
  single.pooled = false;

  std::map<std::int64_t, std::vector<CalibrationSample>> out;
  for (const Traversal& db : databases) {
    std::vector<CalibrationSample>& samples = out[db.traversal_id];
    for (const Traversal& other : databases) {
      if (other.traversal_id == db.traversal_id) {
        continue;
      }
      for (const Frame& q : other.frames) {
        const Prediction pred =
            predict_location(q, std::span<const Traversal>(&db, 1), single,
                             matcher);
        CalibrationSample s;
        s.n_kpm = pred.n_kpm;
        const Eigen::Vector2d residual =
            pred.predicted_location - q.pose.position();
        s.error_ego = rotation2(-q.pose.heading) * residual;
        s.error_norm = s.error_ego.norm();
        s.query_traversal_id = other.traversal_id;
        s.database_traversal_id = db.traversal_id;
        samples.push_back(s);
      }
    }
  }
  return out;
}

int bin_index(int n_kpm, int bin_width) {
  if (bin_width <= 0) {
    throw ConfigError("bin_index: bin_width must be positive");
  }
  if (n_kpm < 0) {
    throw DataError("bin_index: negative match count");
  }
  return n_kpm / bin_width;
}

double empirical_sigma(std::vector<double> errors, double c) {
  if (errors.empty()) {
    throw DataError("empirical_sigma: empty sample list");
  }
  if (!(c > 0.0) || c > 1.0) {
    throw std::invalid_argument("empirical_sigma: c must be in (0, 1]");
  }
  std::sort(errors.begin(), errors.end());
  const double n = static_cast<double>(errors.size());
  // Index of the smallest order statistic whose cumulative share reaches c.
  // The slack absorbs rounding in c * n without ever crossing a whole count.
  const auto k = static_cast<std::size_t>(std::ceil(c * n - 1e-9));
  return errors[k - 1];
}

SensorErrorModel fit_model(std::vector<CalibrationSample> samples,
                           std::int64_t traversal_id,
                           const ErrorModelConfig& cfg) {
  if (cfg.bin_width <= 0) {
    throw ConfigError("fit_model: bin_width must be positive");
  }
  if (cfg.min_bin_count < 1) {
    throw ConfigError("fit_model: min_bin_count must be >= 1");
  }
  const auto min_count = static_cast<std::size_t>(cfg.min_bin_count);
  if (samples.size() < min_count) {
    throw DataError("fit_model: traversal " + std::to_string(traversal_id) +
                    ": " + std::to_string(samples.size()) +
                    " calibration samples, need at least " +
                    std::to_string(min_count));
  }
  // Canonical ordering makes the fit invariant to the input permutation.
  sort_canonically(samples);

  std::map<int, std::size_t> raw_counts;
  for (const CalibrationSample& s : samples) {
    raw_counts[bin_index(s.n_kpm, cfg.bin_width)] += 1;
  }

  // Bins below min_bin_count are merged into the nearest populated bin below
  // them; anything below the first populated bin merges upward into it. The
  // resulting edges are the lower edges of the populated bins.
  std::vector<int> edges{0};
  bool seen_first = false;
  for (const auto& [idx, count] : raw_counts) {
    if (count < min_count) {
      continue;
    }
    if (seen_first) {
      edges.push_back(idx * cfg.bin_width);
    }
    seen_first = true;
  }

  SensorErrorModel model;
  model.traversal_id = traversal_id;
  const std::vector<double> grid = cfg.grid_or_default();
  for (std::size_t i = 0; i < edges.size(); ++i) {
    ModelBin bin;
    bin.lo = edges[i];
    if (i + 1 < edges.size()) {
      bin.hi = edges[i + 1];
    }

    std::vector<double> norms;
    Eigen::Vector2d mean = Eigen::Vector2d::Zero();
    for (const CalibrationSample& s : samples) {
      if (!bin.contains(s.n_kpm)) {
        continue;
      }
      norms.push_back(s.error_norm);
      mean += s.error_ego;
    }
    bin.count = static_cast<std::int64_t>(norms.size());
    mean /= static_cast<double>(bin.count);

    std::sort(norms.begin(), norms.end());
    bin.sigma.reserve(grid.size());
    for (const double c : grid) {
      bin.sigma.push_back(empirical_sigma(norms, c));
    }

    Cov2 scatter = Cov2::Zero();
    for (const CalibrationSample& s : samples) {
      if (!bin.contains(s.n_kpm)) {
        continue;
      }
      const Eigen::Vector2d d = s.error_ego - mean;
      scatter += d * d.transpose();
    }
    const double denom =
        (bin.count > 1) ? static_cast<double>(bin.count - 1) : 1.0;
    bin.R_ego = psd_repair<2>(Cov2(scatter / denom));
    model.bins.push_back(std::move(bin));
  }
  return model;
}

SensorErrorModelSet fit_model_set(
    const std::map<std::int64_t, std::vector<CalibrationSample>>& samples,
    const ErrorModelConfig& cfg) {
  SensorErrorModelSet set;
  set.bin_width = cfg.bin_width;
  set.confidence_grid = cfg.grid_or_default();
  for (const auto& [tid, group] : samples) {
    set.models.push_back(fit_model(group, tid, cfg));
  }
  return set;
}

const ModelBin& lookup_bin(const SensorErrorModelSet& set,
                           std::int64_t traversal_id, int n_kpm) {
  if (n_kpm < 0) {
    throw DataError("lookup_bin: negative match count");
  }
  const SensorErrorModel& model = set.model_for(traversal_id);
  for (const ModelBin& bin : model.bins) {
    if (bin.contains(n_kpm)) {
      return bin;
    }
  }
  // Bins cover [0, inf) by construction, so this is unreachable for valid
  // models; guard against hand-edited files anyway.
  throw DataError("lookup_bin: no bin covers match count " +
                  std::to_string(n_kpm) + " in traversal " +
                  std::to_string(traversal_id));
}

std::pair<double, Cov2> lookup(const SensorErrorModelSet& set,
                               const Prediction& prediction, double c) {
  if (!(c > 0.0) || c > 1.0) {
    throw std::invalid_argument("lookup: c must be in (0, 1]");
  }
  const ModelBin& bin =
      lookup_bin(set, prediction.source_traversal_id, prediction.n_kpm);
  // Snap to the smallest calibrated grid point >= c; c above the top of the
  // grid falls back to the top point.
  std::size_t pick = set.confidence_grid.size() - 1;
  for (std::size_t i = 0; i < set.confidence_grid.size(); ++i) {
    if (set.confidence_grid[i] >= c - 1e-12) {
      pick = i;
      break;
    }
  }
  return {bin.sigma[pick], bin.R_ego};
}

std::string serialize_model_set(const SensorErrorModelSet& set) {
  ordered_json root;
  root["bin_width"] = set.bin_width;
  root["models"] = ordered_json::array();

  std::vector<const SensorErrorModel*> models;
  for (const SensorErrorModel& m : set.models) {
    models.push_back(&m);
  }
  std::sort(models.begin(), models.end(),
            [](const SensorErrorModel* a, const SensorErrorModel* b) {
              return a->traversal_id < b->traversal_id;
            });

  for (const SensorErrorModel* m : models) {
    ordered_json jm;
    jm["traversal_id"] = m->traversal_id;
    jm["bins"] = ordered_json::array();
    for (const ModelBin& bin : m->bins) {
      ordered_json jb;
      jb["lo"] = bin.lo;
      jb["hi"] = bin.hi.has_value() ? ordered_json(*bin.hi)
                                    : ordered_json(nullptr);
      jb["count"] = bin.count;
      ordered_json sig = ordered_json::object();
      for (std::size_t i = 0; i < set.confidence_grid.size(); ++i) {
        sig[double_key(set.confidence_grid[i])] = bin.sigma[i];
      }
      jb["sigma"] = std::move(sig);
      jb["R"] = {{bin.R_ego(0, 0), bin.R_ego(0, 1)},
                 {bin.R_ego(1, 0), bin.R_ego(1, 1)}};
      jm["bins"].push_back(std::move(jb));
    }
    root["models"].push_back(std::move(jm));
  }
  return root.dump(2) + "\n";
}

SensorErrorModelSet deserialize_model_set(const std::string& text) {
  ordered_json root;
  try {
    root = ordered_json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw DataError(std::string("model file: ") + e.what());
  }

  SensorErrorModelSet set;
  try {
    set.bin_width = root.at("bin_width").get<int>();
    if (set.bin_width <= 0) {
      throw DataError("model file: bin_width must be positive");
    }
    for (const auto& jm : root.at("models")) {
      SensorErrorModel model;
      model.traversal_id = jm.at("traversal_id").get<std::int64_t>();
      for (const auto& jb : jm.at("bins")) {
        ModelBin bin;
        bin.lo = jb.at("lo").get<int>();
        if (!jb.at("hi").is_null()) {
          bin.hi = jb.at("hi").get<int>();
        }
        bin.count = jb.at("count").get<std::int64_t>();

        std::vector<double> grid;
        for (const auto& [key, value] : jb.at("sigma").items()) {
          grid.push_back(std::stod(key));
          bin.sigma.push_back(value.get<double>());
        }
        if (!std::is_sorted(grid.begin(), grid.end())) {
          throw DataError("model file: sigma grid not ascending in traversal " +
                          std::to_string(model.traversal_id));
        }
        if (set.confidence_grid.empty()) {
          set.confidence_grid = grid;
        } else if (grid != set.confidence_grid) {
          throw DataError(
              "model file: inconsistent confidence grids across bins");
        }

        const auto& jr = jb.at("R");
        bin.R_ego << jr.at(0).at(0).get<double>(), jr.at(0).at(1).get<double>(),
            jr.at(1).at(0).get<double>(), jr.at(1).at(1).get<double>();
        if (std::abs(bin.R_ego(0, 1) - bin.R_ego(1, 0)) > 1e-12) {
          throw DataError("model file: asymmetric R in traversal " +
                          std::to_string(model.traversal_id));
        }
        model.bins.push_back(std::move(bin));
      }

      if (model.bins.empty()) {
        throw DataError("model file: traversal " +
                        std::to_string(model.traversal_id) + " has no bins");
      }
      if (model.bins.front().lo != 0) {
        throw DataError("model file: first bin must start at 0 in traversal " +
                        std::to_string(model.traversal_id));
      }
      for (std::size_t i = 0; i + 1 < model.bins.size(); ++i) {
        if (!model.bins[i].hi.has_value() ||
            *model.bins[i].hi != model.bins[i + 1].lo) {
          throw DataError(
              "model file: bins overlap or leave gaps in traversal " +
              std::to_string(model.traversal_id));
        }
      }
      if (model.bins.back().hi.has_value()) {
        throw DataError("model file: last bin must be open-ended in traversal " +
                        std::to_string(model.traversal_id));
      }
      for (const SensorErrorModel& existing : set.models) {
        if (existing.traversal_id == model.traversal_id) {
          throw DataError("model file: duplicate traversal " +
                          std::to_string(model.traversal_id));
        }
      }
      set.models.push_back(std::move(model));
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("model file: ") + e.what());
  }
  return set;
}

}  // namespace vloc
