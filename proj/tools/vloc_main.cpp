#include <cstdint>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "vloc/commands.hpp"
#include "vloc/config.hpp"
#include "vloc/errors.hpp"

namespace {

using vloc::ConfigError;

double parse_number(const std::string& text, const std::string& what) {
  std::size_t pos = 0;
  double v = 0.0;
  try {
    v = std::stod(text, &pos);
  } catch (const std::exception&) {
    throw ConfigError(what + ": expected a number, got \"" + text + "\"");
  }
  if (pos != text.size()) {
    throw ConfigError(what + ": trailing characters in \"" + text + "\"");
  }
  return v;
}

std::vector<std::string> split(const std::string& text, char sep) {
  std::vector<std::string> parts;
  std::size_t start = 0;
  while (true) {
    const std::size_t end = text.find(sep, start);
    parts.push_back(text.substr(start, end - start));
    if (end == std::string::npos) {
      break;
    }
    start = end + 1;
  }
  return parts;
}

vloc::synth::CorruptionSpec parse_corruption(const std::string& text) {
  const auto parts = split(text, ':');
  if (parts.size() != 4) {
    throw ConfigError(
        "--corruption expects start:end:mode:severity, got \"" + text + "\"");
  }
  vloc::synth::CorruptionSpec c;
  c.start_fraction = parse_number(parts[0], "--corruption start");
  c.end_fraction = parse_number(parts[1], "--corruption end");
  if (parts[2] == "blur_like") {
    c.mode = vloc::synth::CorruptionMode::kBlurLike;
  } else if (parts[2] == "saltpepper_like") {
    c.mode = vloc::synth::CorruptionMode::kSaltPepperLike;
  } else {
    throw ConfigError("--corruption mode must be blur_like or saltpepper_like");
  }
  c.severity = parse_number(parts[3], "--corruption severity");
  return c;
}

std::vector<double> parse_number_list(const std::string& text,
                                      const std::string& what) {
  std::vector<double> out;
  for (const std::string& part : split(text, ',')) {
    out.push_back(parse_number(part, what));
  }
  return out;
}

// Every config leaf has a flag; flags win over the config file.
struct Overrides {
  std::optional<std::string> dataset_dir;
  std::optional<std::string> model_file;
  std::optional<std::string> trajectory_file;
  std::optional<std::string> report_dir;
  std::optional<std::uint64_t> seed;
  std::optional<double> route_length;
  std::optional<double> sample_spacing;
  std::optional<double> gps_jitter_sigma;
  std::optional<double> lateral_offset_sigma;
  std::optional<double> speed;
  std::vector<std::string> corruptions;
  std::optional<int> matcher_n_max;
  std::optional<double> matcher_length_scale;
  std::optional<double> matcher_noise_sigma;
  std::optional<std::uint64_t> matcher_rng_seed;
  std::optional<double> compat_cross_fallback;
  std::vector<std::string> compat_pairs;
  std::optional<int> candidates_per_traversal;
  bool pooled_on = false;
  bool pooled_off = false;
  std::optional<int> bin_width;
  std::optional<int> min_bin_count;
  std::optional<std::string> confidence_grid;
  std::optional<double> alpha_ut;
  std::optional<double> beta_ut;
  std::optional<double> kappa_ut;
  std::optional<std::string> process_noise_rate;
  std::optional<double> init_heading_sigma;
  std::optional<double> init_speed_sigma;
  std::optional<double> init_turn_rate_sigma;
  std::optional<int> reinit_after_rejections;
  std::optional<std::string> gate;
  std::optional<std::string> baseline;
  std::optional<double> baseline_sigma2;
};

void add_common_options(CLI::App* sub, std::string& config_path,
                        Overrides& o) {
  sub->add_option("--config", config_path, "JSON config file");
  sub->add_option("--dataset-dir", o.dataset_dir, "dataset directory");
  sub->add_option("--model-file", o.model_file, "sensor error model file");
  sub->add_option("--trajectory-file", o.trajectory_file,
                  "trajectory JSONL file");
  sub->add_option("--report-dir", o.report_dir, "report output directory");
  sub->add_option("--seed", o.seed, "master scenario seed");
  sub->add_option("--route-length", o.route_length, "route length in meters");
  sub->add_option("--sample-spacing", o.sample_spacing,
                  "meters between frames");
  sub->add_option("--gps-jitter-sigma", o.gps_jitter_sigma,
                  "per-frame position noise sigma");
  sub->add_option("--lateral-offset-sigma", o.lateral_offset_sigma,
                  "per-traversal lateral offset sigma");
  sub->add_option("--speed", o.speed, "vehicle speed in m/s");
  sub->add_option("--corruption", o.corruptions,
                  "query corruption start:end:mode:severity (repeatable, "
                  "replaces the configured list)");
  sub->add_option("--matcher-n-max", o.matcher_n_max,
                  "maximum keypoint match count");
  sub->add_option("--matcher-length-scale", o.matcher_length_scale,
                  "match count decay length in meters");
  sub->add_option("--matcher-noise-sigma", o.matcher_noise_sigma,
                  "log-space match noise sigma");
  sub->add_option("--matcher-rng-seed", o.matcher_rng_seed,
                  "matcher noise seed");
  sub->add_option("--compat-cross-fallback", o.compat_cross_fallback,
                  "compatibility for unlisted condition pairs");
  sub->add_option("--compat", o.compat_pairs,
                  "condition pair compatibility a|b=f (repeatable)");
  sub->add_option("--candidates-per-traversal", o.candidates_per_traversal,
                  "retrieval candidates per database traversal");
  sub->add_flag("--pooled-retrieval", o.pooled_on,
                "pool all databases into one retrieval index (ablation)");
  sub->add_flag("--per-traversal-retrieval", o.pooled_off,
                "force per-traversal retrieval");
  sub->add_option("--bin-width", o.bin_width, "match count bin width");
  sub->add_option("--min-bin-count", o.min_bin_count,
                  "minimum calibration samples per bin");
  sub->add_option("--confidence-grid", o.confidence_grid,
                  "comma-separated confidence grid");
  sub->add_option("--alpha-ut", o.alpha_ut, "unscented transform alpha");
  sub->add_option("--beta-ut", o.beta_ut, "unscented transform beta");
  sub->add_option("--kappa-ut", o.kappa_ut, "unscented transform kappa");
  sub->add_option("--process-noise-rate", o.process_noise_rate,
                  "comma-separated per-second variances for x,y,heading,"
                  "speed,turn rate");
  sub->add_option("--init-heading-sigma", o.init_heading_sigma,
                  "initial heading prior sigma");
  sub->add_option("--init-speed-sigma", o.init_speed_sigma,
                  "initial speed prior sigma");
  sub->add_option("--init-turn-rate-sigma", o.init_turn_rate_sigma,
                  "initial turn rate prior sigma");
  sub->add_option("--reinit-after", o.reinit_after_rejections,
                  "consecutive gate rejections before a track reset, <= 0 off");
  sub->add_option("--gate", o.gate, "measurement gate confidence or off")
      ->check(CLI::IsMember({"off", "0.99", "0.975", "0.95"}));
  sub->add_option("--baseline", o.baseline,
                  "measurement covariance source: adaptive or constant")
      ->check(CLI::IsMember({"adaptive", "constant"}));
  sub->add_option("--baseline-sigma2", o.baseline_sigma2,
                  "isotropic variance of the constant baseline");
}

vloc::RunConfig resolve_config(const std::string& config_path,
                               const Overrides& o) {
  vloc::RunConfig cfg;
  if (!config_path.empty()) {
    cfg = vloc::load_config(config_path);
  }

  const auto apply = [](const auto& src, auto& dst) {
    if (src.has_value()) {
      dst = *src;
    }
  };
  apply(o.dataset_dir, cfg.paths.dataset_dir);
  apply(o.model_file, cfg.paths.model_file);
  apply(o.trajectory_file, cfg.paths.trajectory_file);
  apply(o.report_dir, cfg.paths.report_dir);
  apply(o.seed, cfg.seed);
  apply(o.route_length, cfg.scenario.route_length);
  apply(o.sample_spacing, cfg.scenario.sample_spacing);
  apply(o.gps_jitter_sigma, cfg.scenario.gps_jitter_sigma);
  apply(o.lateral_offset_sigma, cfg.scenario.lateral_offset_sigma);
  apply(o.speed, cfg.scenario.speed);
  if (!o.corruptions.empty()) {
    cfg.corruptions.clear();
    for (const std::string& text : o.corruptions) {
      cfg.corruptions.push_back(parse_corruption(text));
    }
  }
  apply(o.matcher_n_max, cfg.matcher.n_max);
  apply(o.matcher_length_scale, cfg.matcher.length_scale);
  apply(o.matcher_noise_sigma, cfg.matcher.noise_sigma);
  apply(o.matcher_rng_seed, cfg.matcher.rng_seed);
  apply(o.compat_cross_fallback, cfg.matcher.condition_compat.cross_fallback);
  for (const std::string& text : o.compat_pairs) {
    const auto eq = text.find('=');
    const auto bar = text.find('|');
    if (eq == std::string::npos || bar == std::string::npos || bar > eq ||
        bar == 0 || bar + 1 == eq) {
      throw ConfigError("--compat expects a|b=f, got \"" + text + "\"");
    }
    std::string a = text.substr(0, bar);
    std::string b = text.substr(bar + 1, eq - bar - 1);
    if (a > b) {
      std::swap(a, b);
    }
    cfg.matcher.condition_compat.pairs[{a, b}] =
        parse_number(text.substr(eq + 1), "--compat factor");
  }
  apply(o.candidates_per_traversal, cfg.retrieval.candidates_per_traversal);
  if (o.pooled_on && o.pooled_off) {
    throw ConfigError(
        "--pooled-retrieval and --per-traversal-retrieval conflict");
  }
  if (o.pooled_on) {
    cfg.retrieval.pooled = true;
  }
  if (o.pooled_off) {
    cfg.retrieval.pooled = false;
  }
  apply(o.bin_width, cfg.error_model.bin_width);
  apply(o.min_bin_count, cfg.error_model.min_bin_count);
  if (o.confidence_grid.has_value()) {
    cfg.error_model.confidence_grid =
        parse_number_list(*o.confidence_grid, "--confidence-grid");
  }
  apply(o.alpha_ut, cfg.filter.ut.alpha_ut);
  apply(o.beta_ut, cfg.filter.ut.beta_ut);
  apply(o.kappa_ut, cfg.filter.ut.kappa);
  if (o.process_noise_rate.has_value()) {
    const auto rates =
        parse_number_list(*o.process_noise_rate, "--process-noise-rate");
    if (rates.size() != vloc::ukf::kStateDim) {
      throw ConfigError("--process-noise-rate expects 5 entries");
    }
    for (int i = 0; i < vloc::ukf::kStateDim; ++i) {
      cfg.filter.process_noise_rate(i) = rates[static_cast<std::size_t>(i)];
    }
  }
  apply(o.init_heading_sigma, cfg.filter.init_heading_sigma);
  apply(o.init_speed_sigma, cfg.filter.init_speed_sigma);
  apply(o.init_turn_rate_sigma, cfg.filter.init_turn_rate_sigma);
  apply(o.reinit_after_rejections, cfg.filter.reinit_after_rejections);
  apply(o.gate, cfg.gate);
  apply(o.baseline, cfg.baseline.method);
  apply(o.baseline_sigma2, cfg.baseline.sigma2);

  cfg.validate();
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "Place-recognition localization pipeline: synthetic traversals, "
      "calibrated sensor error models and a gated unscented Kalman filter"};
  app.require_subcommand(1);

  std::string config_path;
  Overrides o;
  CLI::App* sim = app.add_subcommand(
      "simulate", "generate the synthetic dataset and manifest");
  CLI::App* cal = app.add_subcommand(
      "calibrate", "fit per-database sensor error models");
  CLI::App* loc = app.add_subcommand(
      "localize", "retrieve, look up covariances and run the filter");
  CLI::App* eva = app.add_subcommand(
      "evaluate", "score the trajectory against ground truth");
  for (CLI::App* sub : {sim, cal, loc, eva}) {
    add_common_options(sub, config_path, o);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    const vloc::RunConfig cfg = resolve_config(config_path, o);
    if (sim->parsed()) {
      vloc::cmd_simulate(cfg, std::cout);
    } else if (cal->parsed()) {
      vloc::cmd_calibrate(cfg, std::cout);
    } else if (loc->parsed()) {
      vloc::cmd_localize(cfg, std::cout);
    } else {
      vloc::cmd_evaluate(cfg, std::cout);
    }
  } catch (const vloc::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const vloc::DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  } catch (const vloc::NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return 4;
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
