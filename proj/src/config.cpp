#include "vloc/config.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "vloc/errors.hpp"

namespace vloc {

namespace {

using ordered_json = nlohmann::ordered_json;

void check_keys(const ordered_json& j, const std::string& where,
                std::initializer_list<const char*> allowed) {
  for (const auto& [key, value] : j.items()) {
    bool known = false;
    for (const char* a : allowed) {
      if (key == a) {
        known = true;
        break;
      }
    }
    if (!known) {
      throw ConfigError(where + ": unknown key \"" + key + "\"");
    }
  }
}

template <typename T>
void read_field(const ordered_json& j, const char* key, T& out) {
  if (const auto it = j.find(key); it != j.end()) {
    out = it->get<T>();
  }
}

std::string mode_name(synth::CorruptionMode mode) {
  return mode == synth::CorruptionMode::kBlurLike ? "blur_like"
                                                  : "saltpepper_like";
}

synth::CorruptionMode mode_from(const std::string& name,
                                const std::string& where) {
  if (name == "blur_like") {
    return synth::CorruptionMode::kBlurLike;
  }
  if (name == "saltpepper_like") {
    return synth::CorruptionMode::kSaltPepperLike;
  }
  throw ConfigError(where + ": unknown corruption mode \"" + name + "\"");
}

std::pair<std::string, std::string> split_pair_key(const std::string& key,
                                                   const std::string& where) {
  const auto bar = key.find('|');
  if (bar == std::string::npos || bar == 0 || bar + 1 == key.size()) {
    throw ConfigError(where + ": compat key must look like \"a|b\", got \"" +
                      key + "\"");
  }
  return {key.substr(0, bar), key.substr(bar + 1)};
}

void parse_into(const ordered_json& root, const std::string& origin,
                RunConfig& cfg) {
  check_keys(root, origin,
             {"paths", "seed", "scenario", "corruptions", "matcher",
              "retrieval", "error_model", "filter", "gate", "baseline"});

  if (const auto it = root.find("paths"); it != root.end()) {
    check_keys(*it, origin + ".paths",
               {"dataset_dir", "model_file", "trajectory_file", "report_dir"});
    if (it->contains("dataset_dir")) {
      cfg.paths.dataset_dir = it->at("dataset_dir").get<std::string>();
    }
    if (it->contains("model_file")) {
      cfg.paths.model_file = it->at("model_file").get<std::string>();
    }
    if (it->contains("trajectory_file")) {
      cfg.paths.trajectory_file = it->at("trajectory_file").get<std::string>();
    }
    if (it->contains("report_dir")) {
      cfg.paths.report_dir = it->at("report_dir").get<std::string>();
    }
  }

  read_field(root, "seed", cfg.seed);
  cfg.scenario.seed = cfg.seed;

  if (const auto it = root.find("scenario"); it != root.end()) {
    check_keys(*it, origin + ".scenario",
               {"route_length", "sample_spacing", "gps_jitter_sigma",
                "lateral_offset_sigma", "speed"});
    read_field(*it, "route_length", cfg.scenario.route_length);
    read_field(*it, "sample_spacing", cfg.scenario.sample_spacing);
    read_field(*it, "gps_jitter_sigma", cfg.scenario.gps_jitter_sigma);
    read_field(*it, "lateral_offset_sigma", cfg.scenario.lateral_offset_sigma);
    read_field(*it, "speed", cfg.scenario.speed);
  }

  if (const auto it = root.find("corruptions"); it != root.end()) {
    cfg.corruptions.clear();
    for (const auto& jc : *it) {
      check_keys(jc, origin + ".corruptions[]",
                 {"start", "end", "mode", "severity"});
      synth::CorruptionSpec c;
      read_field(jc, "start", c.start_fraction);
      read_field(jc, "end", c.end_fraction);
      if (jc.contains("mode")) {
        c.mode = mode_from(jc.at("mode").get<std::string>(),
                           origin + ".corruptions[]");
      }
      read_field(jc, "severity", c.severity);
      cfg.corruptions.push_back(c);
    }
  }

  if (const auto it = root.find("matcher"); it != root.end()) {
    check_keys(*it, origin + ".matcher",
               {"n_max", "length_scale", "noise_sigma", "rng_seed", "compat"});
    read_field(*it, "n_max", cfg.matcher.n_max);
    read_field(*it, "length_scale", cfg.matcher.length_scale);
    read_field(*it, "noise_sigma", cfg.matcher.noise_sigma);
    read_field(*it, "rng_seed", cfg.matcher.rng_seed);
    if (const auto ct = it->find("compat"); ct != it->end()) {
      check_keys(*ct, origin + ".matcher.compat", {"cross_fallback", "pairs"});
      read_field(*ct, "cross_fallback",
                 cfg.matcher.condition_compat.cross_fallback);
      if (const auto pt = ct->find("pairs"); pt != ct->end()) {
        cfg.matcher.condition_compat.pairs.clear();
        for (const auto& [key, value] : pt->items()) {
          auto [a, b] = split_pair_key(key, origin + ".matcher.compat.pairs");
          if (a > b) {
            std::swap(a, b);
          }
          cfg.matcher.condition_compat.pairs[{a, b}] = value.get<double>();
        }
      }
    }
  }

  if (const auto it = root.find("retrieval"); it != root.end()) {
    check_keys(*it, origin + ".retrieval",
               {"candidates_per_traversal", "pooled"});
    read_field(*it, "candidates_per_traversal",
               cfg.retrieval.candidates_per_traversal);
    read_field(*it, "pooled", cfg.retrieval.pooled);
  }

  if (const auto it = root.find("error_model"); it != root.end()) {
    check_keys(*it, origin + ".error_model",
               {"bin_width", "min_bin_count", "confidence_grid"});
    read_field(*it, "bin_width", cfg.error_model.bin_width);
    read_field(*it, "min_bin_count", cfg.error_model.min_bin_count);
    read_field(*it, "confidence_grid", cfg.error_model.confidence_grid);
  }

  if (const auto it = root.find("filter"); it != root.end()) {
    check_keys(*it, origin + ".filter",
               {"alpha_ut", "beta_ut", "kappa_ut", "process_noise_rate",
                "init_heading_sigma", "init_speed_sigma",
                "init_turn_rate_sigma", "reinit_after_rejections"});
    read_field(*it, "alpha_ut", cfg.filter.ut.alpha_ut);
    read_field(*it, "beta_ut", cfg.filter.ut.beta_ut);
    read_field(*it, "kappa_ut", cfg.filter.ut.kappa);
    if (it->contains("process_noise_rate")) {
      const auto& jq = it->at("process_noise_rate");
      if (jq.size() != ukf::kStateDim) {
        throw ConfigError(origin +
                          ".filter.process_noise_rate: expected 5 entries");
      }
      for (int i = 0; i < ukf::kStateDim; ++i) {
        cfg.filter.process_noise_rate(i) = jq.at(i).get<double>();
      }
    }
    read_field(*it, "init_heading_sigma", cfg.filter.init_heading_sigma);
    read_field(*it, "init_speed_sigma", cfg.filter.init_speed_sigma);
    read_field(*it, "init_turn_rate_sigma", cfg.filter.init_turn_rate_sigma);
    read_field(*it, "reinit_after_rejections", cfg.filter.reinit_after_rejections);
  }

  read_field(root, "gate", cfg.gate);

  if (const auto it = root.find("baseline"); it != root.end()) {
    check_keys(*it, origin + ".baseline", {"method", "sigma2"});
    read_field(*it, "method", cfg.baseline.method);
    if (it->contains("sigma2") && !it->at("sigma2").is_null()) {
      cfg.baseline.sigma2 = it->at("sigma2").get<double>();
    }
  }
}

}  // namespace

std::optional<double> RunConfig::gate_alpha() const {
  if (gate == "off") {
    return std::nullopt;
  }
  double a = 0.0;
  std::size_t pos = 0;
  try {
    a = std::stod(gate, &pos);
  } catch (const std::exception&) {
    throw ConfigError("gate: expected \"off\" or a confidence, got \"" + gate +
                      "\"");
  }
  if (pos != gate.size() || !std::isfinite(a) || !(a > 0.0) || !(a < 1.0)) {
    throw ConfigError("gate: confidence must lie strictly inside (0, 1), got \"" +
                      gate + "\"");
  }
  return a;
}

ukf::FilterConfig RunConfig::resolved_filter() const {
  ukf::FilterConfig f = filter;
  f.gate.alpha = gate_alpha();
  if (baseline.method == "constant") {
    if (!baseline.sigma2.has_value()) {
      throw ConfigError(
          "baseline.sigma2 is required when baseline.method is \"constant\"");
    }
    f.constant_R = Cov2(*baseline.sigma2 * Cov2::Identity());
  }
  return f;
}

void RunConfig::validate() const {
  const auto require = [](bool ok, const std::string& msg) {
    if (!ok) {
      throw ConfigError(msg);
    }
  };

  require(std::isfinite(scenario.route_length) && scenario.route_length > 0.0,
          "scenario.route_length must be positive");
  require(std::isfinite(scenario.sample_spacing) &&
              scenario.sample_spacing > 0.0,
          "scenario.sample_spacing must be positive");
  require(scenario.route_length >= scenario.sample_spacing,
          "scenario.route_length must cover at least one sample spacing");
  require(std::isfinite(scenario.gps_jitter_sigma) &&
              scenario.gps_jitter_sigma >= 0.0,
          "scenario.gps_jitter_sigma must be >= 0");
  require(std::isfinite(scenario.lateral_offset_sigma) &&
              scenario.lateral_offset_sigma >= 0.0,
          "scenario.lateral_offset_sigma must be >= 0");
  require(std::isfinite(scenario.speed) && scenario.speed > 0.0,
          "scenario.speed must be positive");

  for (const synth::CorruptionSpec& c : corruptions) {
    require(std::isfinite(c.start_fraction) && std::isfinite(c.end_fraction) &&
                0.0 <= c.start_fraction && c.start_fraction < c.end_fraction &&
                c.end_fraction <= 1.0,
            "corruption segment must satisfy 0 <= start < end <= 1");
    require(std::isfinite(c.severity) && c.severity >= 0.0 && c.severity <= 1.0,
            "corruption severity must lie in [0, 1]");
  }

  require(matcher.n_max >= 1, "matcher.n_max must be >= 1");
  require(std::isfinite(matcher.length_scale) && matcher.length_scale > 0.0,
          "matcher.length_scale must be positive");
  require(std::isfinite(matcher.noise_sigma) && matcher.noise_sigma >= 0.0,
          "matcher.noise_sigma must be >= 0");
  require(std::isfinite(matcher.condition_compat.cross_fallback) &&
              matcher.condition_compat.cross_fallback >= 0.0 &&
              matcher.condition_compat.cross_fallback <= 1.0,
          "matcher.compat.cross_fallback must lie in [0, 1]");
  for (const auto& [key, value] : matcher.condition_compat.pairs) {
    require(std::isfinite(value) && value >= 0.0 && value <= 1.0,
            "matcher.compat pair factors must lie in [0, 1]");
  }

  require(retrieval.candidates_per_traversal >= 1,
          "retrieval.candidates_per_traversal must be >= 1");

  require(error_model.bin_width >= 1, "error_model.bin_width must be >= 1");
  require(error_model.min_bin_count >= 1,
          "error_model.min_bin_count must be >= 1");
  const auto& grid = error_model.confidence_grid;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    require(std::isfinite(grid[i]) && grid[i] > 0.0 && grid[i] <= 1.0,
            "error_model.confidence_grid values must lie in (0, 1]");
    require(i == 0 || grid[i - 1] < grid[i],
            "error_model.confidence_grid must be strictly ascending");
  }

  try {
    filter.ut.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("filter: ") + e.what());
  }
  require(filter.process_noise_rate.allFinite() &&
              (filter.process_noise_rate.array() >= 0.0).all(),
          "filter.process_noise_rate entries must be finite and >= 0");
  require(std::isfinite(filter.init_heading_sigma) &&
              filter.init_heading_sigma > 0.0,
          "filter.init_heading_sigma must be positive");
  require(std::isfinite(filter.init_speed_sigma) &&
              filter.init_speed_sigma > 0.0,
          "filter.init_speed_sigma must be positive");
  require(std::isfinite(filter.init_turn_rate_sigma) &&
              filter.init_turn_rate_sigma > 0.0,
          "filter.init_turn_rate_sigma must be positive");

  gate_alpha();  // throws on malformed gate strings

  require(baseline.method == "adaptive" || baseline.method == "constant",
          "baseline.method must be \"adaptive\" or \"constant\"");
  if (baseline.method == "constant") {
    require(baseline.sigma2.has_value(),
            "baseline.sigma2 is required when baseline.method is \"constant\"");
  }
  if (baseline.sigma2.has_value()) {
    require(std::isfinite(*baseline.sigma2) && *baseline.sigma2 > 0.0,
            "baseline.sigma2 must be positive");
  }
}

RunConfig parse_config(const std::string& text, const std::string& origin) {
  ordered_json root;
  try {
    root = ordered_json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(origin + ": " + e.what());
  }
  if (!root.is_object()) {
    throw ConfigError(origin + ": config must be a JSON object");
  }
  RunConfig cfg;
  try {
    parse_into(root, origin, cfg);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(origin + ": " + e.what());
  }
  cfg.validate();
  return cfg;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in.is_open()) {
    throw ConfigError("cannot open config file: " + path.string());
  }
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), path.string());
}

std::string serialize_config(const RunConfig& cfg) {
  ordered_json j;
  j["paths"] = {{"dataset_dir", cfg.paths.dataset_dir.generic_string()},
                {"model_file", cfg.paths.model_file.generic_string()},
                {"trajectory_file", cfg.paths.trajectory_file.generic_string()},
                {"report_dir", cfg.paths.report_dir.generic_string()}};
  j["seed"] = cfg.seed;
  j["scenario"] = {{"route_length", cfg.scenario.route_length},
                   {"sample_spacing", cfg.scenario.sample_spacing},
                   {"gps_jitter_sigma", cfg.scenario.gps_jitter_sigma},
                   {"lateral_offset_sigma", cfg.scenario.lateral_offset_sigma},
                   {"speed", cfg.scenario.speed}};
  j["corruptions"] = ordered_json::array();
  for (const synth::CorruptionSpec& c : cfg.corruptions) {
    j["corruptions"].push_back({{"start", c.start_fraction},
                                {"end", c.end_fraction},
                                {"mode", mode_name(c.mode)},
                                {"severity", c.severity}});
  }
  ordered_json pairs = ordered_json::object();
  for (const auto& [key, value] : cfg.matcher.condition_compat.pairs) {
    pairs[key.first + "|" + key.second] = value;
  }
  j["matcher"] = {
      {"n_max", cfg.matcher.n_max},
      {"length_scale", cfg.matcher.length_scale},
      {"noise_sigma", cfg.matcher.noise_sigma},
      {"rng_seed", cfg.matcher.rng_seed},
      {"compat",
       {{"cross_fallback", cfg.matcher.condition_compat.cross_fallback},
        {"pairs", std::move(pairs)}}}};
  j["retrieval"] = {
      {"candidates_per_traversal", cfg.retrieval.candidates_per_traversal},
      {"pooled", cfg.retrieval.pooled}};
  j["error_model"] = {{"bin_width", cfg.error_model.bin_width},
                      {"min_bin_count", cfg.error_model.min_bin_count},
                      {"confidence_grid", cfg.error_model.confidence_grid}};
  std::vector<double> q(cfg.filter.process_noise_rate.data(),
                        cfg.filter.process_noise_rate.data() + ukf::kStateDim);
  j["filter"] = {{"alpha_ut", cfg.filter.ut.alpha_ut},
                 {"beta_ut", cfg.filter.ut.beta_ut},
                 {"kappa_ut", cfg.filter.ut.kappa},
                 {"process_noise_rate", q},
                 {"init_heading_sigma", cfg.filter.init_heading_sigma},
                 {"init_speed_sigma", cfg.filter.init_speed_sigma},
                 {"init_turn_rate_sigma", cfg.filter.init_turn_rate_sigma},
                 {"reinit_after_rejections", cfg.filter.reinit_after_rejections}};
  j["gate"] = cfg.gate;
  j["baseline"] = {{"method", cfg.baseline.method},
                   {"sigma2", cfg.baseline.sigma2.has_value()
                                  ? ordered_json(*cfg.baseline.sigma2)
                                  : ordered_json(nullptr)}};
  return j.dump(2) + "\n";
}

}  // namespace vloc
