#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "doctest.h"
#include "json.hpp"
#include "vloc/error_model.hpp"
#include "vloc/errors.hpp"
#include "vloc/matcher.hpp"

namespace {

// Reference implementation by direct definition: the smallest sample value v
// with count(errors <= v) / N >= c, found by scanning the sorted list.
double sigma_oracle(std::vector<double> errors, double c) {
  std::sort(errors.begin(), errors.end());
  const double n = static_cast<double>(errors.size());
  for (std::size_t i = 0; i < errors.size(); ++i) {
    std::size_t upper = i;
    while (upper + 1 < errors.size() && errors[upper + 1] <= errors[i]) {
      ++upper;  // count duplicates of errors[i] as well
    }
    if (static_cast<double>(upper + 1) / n >= c) {
      return errors[i];
    }
  }
  return errors.back();
}

vloc::CalibrationSample make_sample(int n_kpm, double lon, double lat) {
  vloc::CalibrationSample s;
  s.n_kpm = n_kpm;
  s.error_ego = {lon, lat};
  s.error_norm = s.error_ego.norm();
  return s;
}

vloc::Frame route_frame(std::int64_t traversal_id, std::int64_t index,
                        double y_offset) {
  vloc::Frame f;
  f.frame_id = traversal_id * 100000 + index;
  f.traversal_id = traversal_id;
  f.t = static_cast<double>(index);
  f.pose = {static_cast<double>(index), y_offset, 0.0};
  f.condition = vloc::kSunny;
  // Descriptor tracks the along-route position, so retrieval is geometric.
  f.descriptor = (Eigen::VectorXd(2) << static_cast<double>(index), 0.0)
                     .finished();
  return f;
}

}  // namespace

TEST_CASE("default confidence grid covers 5 to 99 percent") {
  const std::vector<double> grid = vloc::default_confidence_grid();
  REQUIRE(grid.size() == 20);
  CHECK(grid.front() == doctest::Approx(0.05));
  CHECK(grid[18] == doctest::Approx(0.95));
  CHECK(grid.back() == doctest::Approx(0.99));
  CHECK(std::is_sorted(grid.begin(), grid.end()));
}

TEST_CASE("bin_index uses half-open bins") {
  CHECK(vloc::bin_index(0, 200) == 0);
  CHECK(vloc::bin_index(199, 200) == 0);
  CHECK(vloc::bin_index(200, 200) == 1);
  CHECK(vloc::bin_index(1999, 200) == 9);
  CHECK(vloc::bin_index(2000, 200) == 10);
  CHECK_THROWS_AS(vloc::bin_index(5, 0), vloc::ConfigError);
  CHECK_THROWS_AS(vloc::bin_index(-1, 200), vloc::DataError);
}

TEST_CASE("empirical_sigma on a known list") {
  const std::vector<double> ten{1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
  CHECK(vloc::empirical_sigma(ten, 0.9) == 9.0);
  CHECK(vloc::empirical_sigma(ten, 1.0) == 10.0);
  CHECK(vloc::empirical_sigma(ten, 0.05) == 1.0);
  CHECK(vloc::empirical_sigma(ten, 0.11) == 2.0);
  CHECK(vloc::empirical_sigma({3.5}, 0.5) == 3.5);

  CHECK_THROWS_AS(vloc::empirical_sigma({}, 0.5), vloc::DataError);
  CHECK_THROWS_AS(vloc::empirical_sigma(ten, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(vloc::empirical_sigma(ten, 1.5), std::invalid_argument);
}

TEST_CASE("empirical_sigma matches the scanning oracle on random lists") {
  std::mt19937 gen(2024);
  std::uniform_int_distribution<int> size_dist(1, 60);
  std::uniform_real_distribution<double> value(0.0, 10.0);
  std::vector<double> cs = vloc::default_confidence_grid();
  cs.push_back(1.0);

  for (int trial = 0; trial < 300; ++trial) {
    std::vector<double> errors(static_cast<std::size_t>(size_dist(gen)));
    for (double& e : errors) {
      // Duplicates are common on purpose: ties are the tricky case.
      e = std::round(value(gen) * 4.0) / 4.0;
    }
    for (const double c : cs) {
      CHECK(vloc::empirical_sigma(errors, c) == sigma_oracle(errors, c));
    }
  }
}

TEST_CASE("empirical_sigma is invariant to input permutation") {
  std::mt19937 gen(5);
  std::vector<double> errors(37);
  std::uniform_real_distribution<double> value(0.0, 3.0);
  for (double& e : errors) {
    e = value(gen);
  }
  std::vector<double> shuffled = errors;
  std::shuffle(shuffled.begin(), shuffled.end(), gen);
  for (const double c : vloc::default_confidence_grid()) {
    CHECK(vloc::empirical_sigma(errors, c) ==
          vloc::empirical_sigma(shuffled, c));
  }
}

TEST_CASE("cross_validate pairs every traversal against the others") {
  vloc::SyntheticMatcherConfig mcfg;
  mcfg.noise_sigma = 0.0;
  const vloc::SyntheticMatcher matcher(mcfg);

  // Three parallel traversals with distinct constant lateral offsets; with
  // geometric descriptors the frame of matching index always wins.
  std::vector<vloc::Traversal> dbs(3);
  const double offsets[3] = {0.0, 0.3, -0.3};
  for (int t = 0; t < 3; ++t) {
    dbs[t].traversal_id = t + 1;
    for (int i = 0; i < 5; ++i) {
      dbs[t].frames.push_back(route_frame(t + 1, i, offsets[t]));
    }
  }

  vloc::RetrievalConfig rcfg;
  const auto samples = vloc::cross_validate(dbs, rcfg, matcher);
  REQUIRE(samples.size() == 3);
  for (int t = 0; t < 3; ++t) {
    REQUIRE(samples.count(t + 1) == 1);
    const auto& group = samples.at(t + 1);
    // Two other traversals with five frames each.
    CHECK(group.size() == 10);
    for (const auto& s : group) {
      CHECK(s.database_traversal_id == t + 1);
      CHECK(s.query_traversal_id != t + 1);
      CHECK(s.n_kpm > 0);
    }
  }

  // Query from traversal 2 (offset +0.3) against database 1 (offset 0):
  // the residual is purely lateral and equals -0.3 in the ego frame.
  for (const auto& s : samples.at(1)) {
    if (s.query_traversal_id != 2) {
      continue;
    }
    CHECK(s.error_ego.x() == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(s.error_ego.y() == doctest::Approx(-0.3));
    CHECK(s.error_norm == doctest::Approx(0.3));
  }

  std::vector<vloc::Traversal> one{dbs[0]};
  CHECK_THROWS_AS(vloc::cross_validate(one, rcfg, matcher), vloc::DataError);
}

TEST_CASE("fit_model merges sparse bins into the populated bin below") {
  vloc::ErrorModelConfig cfg;
  cfg.bin_width = 200;
  cfg.min_bin_count = 20;

  std::vector<vloc::CalibrationSample> samples;
  std::mt19937 gen(11);
  std::uniform_real_distribution<double> e(0.1, 2.0);
  for (int i = 0; i < 30; ++i) {
    samples.push_back(make_sample(50, e(gen), e(gen)));
  }
  for (int i = 0; i < 30; ++i) {
    samples.push_back(make_sample(250, e(gen), e(gen)));
  }
  for (int i = 0; i < 5; ++i) {  // below min_bin_count, merges downward
    samples.push_back(make_sample(450, e(gen), e(gen)));
  }

  const vloc::SensorErrorModel model = vloc::fit_model(samples, 7, cfg);
  REQUIRE(model.bins.size() == 2);
  CHECK(model.traversal_id == 7);
  CHECK(model.bins[0].lo == 0);
  REQUIRE(model.bins[0].hi.has_value());
  CHECK(*model.bins[0].hi == 200);
  CHECK(model.bins[0].count == 30);
  CHECK(model.bins[1].lo == 200);
  CHECK(!model.bins[1].hi.has_value());
  CHECK(model.bins[1].count == 35);
}

TEST_CASE("fit_model merges a sparse leading bin upward") {
  vloc::ErrorModelConfig cfg;
  cfg.min_bin_count = 20;
  std::vector<vloc::CalibrationSample> samples;
  std::mt19937 gen(12);
  std::uniform_real_distribution<double> e(0.1, 2.0);
  for (int i = 0; i < 5; ++i) {
    samples.push_back(make_sample(50, e(gen), e(gen)));
  }
  for (int i = 0; i < 30; ++i) {
    samples.push_back(make_sample(250, e(gen), e(gen)));
  }
  for (int i = 0; i < 30; ++i) {
    samples.push_back(make_sample(450, e(gen), e(gen)));
  }

  const vloc::SensorErrorModel model = vloc::fit_model(samples, 1, cfg);
  REQUIRE(model.bins.size() == 2);
  // The first bin always starts at 0 so every match count has a home.
  CHECK(model.bins[0].lo == 0);
  CHECK(*model.bins[0].hi == 400);
  CHECK(model.bins[0].count == 35);
  CHECK(model.bins[1].lo == 400);
  CHECK(model.bins[1].count == 30);
}

TEST_CASE("fit_model sigma columns are empirical quantiles per bin") {
  vloc::ErrorModelConfig cfg;
  cfg.min_bin_count = 5;
  std::vector<vloc::CalibrationSample> samples;
  std::vector<double> norms;
  std::mt19937 gen(13);
  std::uniform_real_distribution<double> e(0.1, 4.0);
  for (int i = 0; i < 57; ++i) {
    const double lon = e(gen);
    const double lat = e(gen);
    samples.push_back(make_sample(100 + (i % 3), lon, lat));
    norms.push_back(samples.back().error_norm);
  }

  const vloc::SensorErrorModel model = vloc::fit_model(samples, 3, cfg);
  REQUIRE(model.bins.size() == 1);
  const std::vector<double> grid = cfg.grid_or_default();
  REQUIRE(model.bins[0].sigma.size() == grid.size());
  for (std::size_t g = 0; g < grid.size(); ++g) {
    CHECK(model.bins[0].sigma[g] == sigma_oracle(norms, grid[g]));
  }
  CHECK(std::is_sorted(model.bins[0].sigma.begin(),
                       model.bins[0].sigma.end()));
}

TEST_CASE("fit_model computes the Bessel-corrected ego covariance") {
  vloc::ErrorModelConfig cfg;
  cfg.min_bin_count = 2;
  // Zero-mean cross: scatter diag(2, 8) over n - 1 = 3.
  std::vector<vloc::CalibrationSample> samples{
      make_sample(10, 1.0, 0.0), make_sample(10, -1.0, 0.0),
      make_sample(10, 0.0, 2.0), make_sample(10, 0.0, -2.0)};

  const vloc::SensorErrorModel model = vloc::fit_model(samples, 4, cfg);
  REQUIRE(model.bins.size() == 1);
  const vloc::Cov2& r = model.bins[0].R_ego;
  CHECK(r(0, 0) == doctest::Approx(2.0 / 3.0));
  CHECK(r(1, 1) == doctest::Approx(8.0 / 3.0));
  CHECK(r(0, 1) == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("fit_model recovers a known Gaussian error scale") {
  vloc::ErrorModelConfig cfg;
  std::mt19937 gen(321);
  std::normal_distribution<double> n01(0.0, 1.0);
  std::vector<vloc::CalibrationSample> samples;
  for (int i = 0; i < 5000; ++i) {
    samples.push_back(make_sample(100, n01(gen), n01(gen)));
  }
  const vloc::SensorErrorModel model = vloc::fit_model(samples, 2, cfg);
  REQUIRE(model.bins.size() == 1);
  const vloc::Cov2& r = model.bins[0].R_ego;
  CHECK(r(0, 0) == doctest::Approx(1.0).epsilon(0.08));
  CHECK(r(1, 1) == doctest::Approx(1.0).epsilon(0.08));
  CHECK(std::abs(r(0, 1)) < 0.08);

  // The norm of an isotropic unit Gaussian is Rayleigh: its 68% quantile
  // is sqrt(-2 ln 0.32) = 1.5096.
  const std::vector<double> grid = cfg.grid_or_default();
  std::size_t i70 = 0;
  while (grid[i70] < 0.70 - 1e-12) {
    ++i70;
  }
  const double q70 = std::sqrt(-2.0 * std::log(0.30));
  CHECK(model.bins[0].sigma[i70] == doctest::Approx(q70).epsilon(0.05));
}

TEST_CASE("fit_model is invariant to sample order and checks its inputs") {
  vloc::ErrorModelConfig cfg;
  cfg.min_bin_count = 5;
  std::vector<vloc::CalibrationSample> samples;
  std::mt19937 gen(77);
  std::uniform_real_distribution<double> e(0.1, 2.0);
  std::uniform_int_distribution<int> nk(0, 700);
  for (int i = 0; i < 80; ++i) {
    samples.push_back(make_sample(nk(gen), e(gen), e(gen)));
  }
  std::vector<vloc::CalibrationSample> shuffled = samples;
  std::shuffle(shuffled.begin(), shuffled.end(), gen);

  const auto a = vloc::fit_model(samples, 1, cfg);
  const auto b = vloc::fit_model(shuffled, 1, cfg);
  REQUIRE(a.bins.size() == b.bins.size());
  for (std::size_t i = 0; i < a.bins.size(); ++i) {
    CHECK(a.bins[i].lo == b.bins[i].lo);
    CHECK(a.bins[i].count == b.bins[i].count);
    CHECK(a.bins[i].sigma == b.bins[i].sigma);
    CHECK((a.bins[i].R_ego - b.bins[i].R_ego).norm() == 0.0);
  }

  CHECK_THROWS_AS(
      vloc::fit_model({make_sample(10, 1.0, 1.0)}, 1, cfg),
      vloc::DataError);  // fewer samples than min_bin_count
}

TEST_CASE("model set lookup selects by traversal and match count") {
  vloc::SensorErrorModelSet set;
  set.bin_width = 200;
  set.confidence_grid = {0.5, 0.9};

  vloc::SensorErrorModel m;
  m.traversal_id = 42;
  vloc::ModelBin low;
  low.lo = 0;
  low.hi = 200;
  low.count = 30;
  low.sigma = {1.0, 2.0};
  low.R_ego = vloc::Cov2::Identity();
  vloc::ModelBin high;
  high.lo = 200;
  high.count = 30;
  high.sigma = {0.5, 0.8};
  high.R_ego = 0.25 * vloc::Cov2::Identity();
  m.bins = {low, high};
  set.models.push_back(m);

  CHECK(vloc::lookup_bin(set, 42, 0).lo == 0);
  CHECK(vloc::lookup_bin(set, 42, 199).lo == 0);
  CHECK(vloc::lookup_bin(set, 42, 200).lo == 200);
  CHECK(vloc::lookup_bin(set, 42, 100000).lo == 200);
  CHECK_THROWS_AS(vloc::lookup_bin(set, 42, -1), vloc::DataError);
  CHECK_THROWS_AS(vloc::lookup_bin(set, 7, 100), vloc::DataError);

  vloc::Prediction pred;
  pred.source_traversal_id = 42;
  pred.n_kpm = 350;

  // c snaps up to the nearest calibrated grid point; above the top it
  // falls back to the top point.
  CHECK(vloc::lookup(set, pred, 0.5).first == 0.5);
  CHECK(vloc::lookup(set, pred, 0.7).first == 0.8);
  CHECK(vloc::lookup(set, pred, 0.9).first == 0.8);
  CHECK(vloc::lookup(set, pred, 0.99).first == 0.8);
  CHECK(vloc::lookup(set, pred, 0.1).first == 0.5);
  CHECK(vloc::lookup(set, pred, 0.5).second(0, 0) == 0.25);
  CHECK_THROWS_AS(vloc::lookup(set, pred, 0.0), std::invalid_argument);
}

TEST_CASE("model serialization round-trips bit-exactly") {
  vloc::ErrorModelConfig cfg;
  cfg.min_bin_count = 10;
  std::map<std::int64_t, std::vector<vloc::CalibrationSample>> groups;
  std::mt19937 gen(55);
  std::normal_distribution<double> n01(0.0, 1.0);
  std::uniform_int_distribution<int> nk(0, 999);
  for (const std::int64_t tid : {3, 1, 2}) {
    for (int i = 0; i < 200; ++i) {
      // Irrational-looking doubles exercise the shortest-round-trip format.
      groups[tid].push_back(
          make_sample(nk(gen), n01(gen) / 3.0, n01(gen) * std::sqrt(2.0)));
    }
  }

  const vloc::SensorErrorModelSet set = vloc::fit_model_set(groups, cfg);
  REQUIRE(set.models.size() == 3);
  const std::string text = vloc::serialize_model_set(set);
  const vloc::SensorErrorModelSet back = vloc::deserialize_model_set(text);

  CHECK(back.bin_width == set.bin_width);
  CHECK(back.confidence_grid == set.confidence_grid);
  REQUIRE(back.models.size() == set.models.size());
  for (const vloc::SensorErrorModel& m : set.models) {
    const vloc::SensorErrorModel& bm = back.model_for(m.traversal_id);
    REQUIRE(bm.bins.size() == m.bins.size());
    for (std::size_t i = 0; i < m.bins.size(); ++i) {
      CHECK(bm.bins[i].lo == m.bins[i].lo);
      CHECK(bm.bins[i].hi == m.bins[i].hi);
      CHECK(bm.bins[i].count == m.bins[i].count);
      CHECK(bm.bins[i].sigma == m.bins[i].sigma);  // exact doubles
      CHECK((bm.bins[i].R_ego - m.bins[i].R_ego).norm() == 0.0);
    }
  }

  // A second serialization of the deserialized set is byte-identical.
  CHECK(vloc::serialize_model_set(back) == text);
}

TEST_CASE("deserialization rejects structurally broken models") {
  vloc::ErrorModelConfig cfg;
  cfg.min_bin_count = 10;
  std::map<std::int64_t, std::vector<vloc::CalibrationSample>> groups;
  std::mt19937 gen(66);
  std::uniform_real_distribution<double> e(0.1, 2.0);
  for (int i = 0; i < 40; ++i) {
    groups[1].push_back(make_sample(i % 2 == 0 ? 50 : 250, e(gen), e(gen)));
  }
  const std::string good =
      vloc::serialize_model_set(vloc::fit_model_set(groups, cfg));

  using nlohmann::ordered_json;
  const auto mutate = [&good](auto&& f) {
    ordered_json j = ordered_json::parse(good);
    f(j);
    return j.dump();
  };

  CHECK_THROWS_AS(vloc::deserialize_model_set("not json"), vloc::DataError);
  CHECK_THROWS_AS(vloc::deserialize_model_set(mutate([](ordered_json& j) {
                    j["models"][0]["bins"][1]["lo"] = 300;  // gap after bin 0
                  })),
                  vloc::DataError);
  CHECK_THROWS_AS(vloc::deserialize_model_set(mutate([](ordered_json& j) {
                    j["models"][0]["bins"][0]["lo"] = 50;
                  })),
                  vloc::DataError);
  CHECK_THROWS_AS(vloc::deserialize_model_set(mutate([](ordered_json& j) {
                    j["models"][0]["bins"][1]["hi"] = 900;  // last bin closed
                  })),
                  vloc::DataError);
  CHECK_THROWS_AS(vloc::deserialize_model_set(mutate([](ordered_json& j) {
                    j["models"][0]["bins"][0]["R"][0][1] = 5.0;  // asymmetric
                  })),
                  vloc::DataError);
  CHECK_THROWS_AS(vloc::deserialize_model_set(mutate([](ordered_json& j) {
                    j["models"].push_back(j["models"][0]);  // duplicate id
                  })),
                  vloc::DataError);
  CHECK_THROWS_AS(vloc::deserialize_model_set(mutate([](ordered_json& j) {
                    j["bin_width"] = 0;
                  })),
                  vloc::DataError);
}
