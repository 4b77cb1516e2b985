#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "rivercast/errors.hpp"
#include "rivercast/residual.hpp"
#include "rivercast/seeding.hpp"

using namespace rivercast;

namespace {

const double kNaN = std::nan("");

// Hourly series with floods, sparse measurements and a stage-dependent
// rating error.
ResidualSeries make_series(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> z(0.0, 1.0);
  ResidualSeries s;
  const Timestamp t0 = parse_iso8601("2021-03-01T00:00:00Z");
  double stage = 4.0;
  for (std::size_t i = 0; i < n; ++i) {
    s.times.push_back(t0 + Hours(static_cast<long>(i)));
    stage = std::clamp(stage + 0.4 * z(rng) + 0.2 * std::sin(static_cast<double>(i) / 15.0), 1.5,
                       16.0);
    s.stage_forecast.push_back(stage);
    const double rep = 30.0 * std::pow(stage - 1.0, 1.8);
    s.reported.push_back(rep);
    s.forecast.push_back(rep * (1.0 + 0.05 * z(rng)));
    s.measured.push_back(i % 6 == 0 ? rep * (1.0 + 0.02 * (stage - 8.0) / 8.0) : kNaN);
    s.fit_mask.push_back(i < n * 3 / 4);
    s.curve_extrapolated.push_back(0);
  }
  s.stage_delta = stage_deltas(s.stage_forecast);
  return s;
}

}  // namespace

TEST_CASE("stage deltas") {
  const double st[] = {1.0, 1.5, kNaN, 3.0, 2.0};
  auto d = stage_deltas(st);
  REQUIRE(d.size() == 5);
  CHECK(d[0] == 0.0);
  CHECK(d[1] == 0.5);
  CHECK(d[2] == 0.0);
  CHECK(d[3] == 0.0);
  CHECK(d[4] == -1.0);
}

TEST_CASE("ar correction on zero errors is the identity") {
  std::vector<double> f = {10, 12, 15, 11, 9, 13, 14};
  auto r = ar_correct(f, f, 2);
  for (std::size_t i = 0; i < f.size(); ++i) CHECK(r.corrected[i] == f[i]);
}

TEST_CASE("ar correction recovers an exact lag relation") {
  for (int h : {1, 3, 6}) {
    std::mt19937_64 rng(static_cast<std::uint64_t>(h));
    std::uniform_real_distribution<double> u(-5, 5);
    const std::size_t n = 200;
    std::vector<double> e(n), rep(n), f(n);
    for (std::size_t i = 0; i < n; ++i) {
      e[i] = i < static_cast<std::size_t>(h) ? u(rng) : 0.8 * e[i - static_cast<std::size_t>(h)];
      rep[i] = 100.0 + 10.0 * std::sin(0.1 * static_cast<double>(i));
      f[i] = rep[i] - e[i];
    }
    auto r = ar_correct(f, rep, h);
    CHECK(std::abs(r.state.rho - 0.8) < 1e-10);
    CHECK(std::abs(r.state.intercept) < 1e-10);
    for (std::size_t i = 4 * static_cast<std::size_t>(h); i < n; ++i) {
      CHECK(std::abs(r.corrected[i] - rep[i]) < 1e-8);
    }
  }
}

TEST_CASE("ar fallback on constant errors adds the mean error") {
  std::vector<double> rep(30), f(30);
  for (std::size_t i = 0; i < 30; ++i) {
    rep[i] = 50.0 + static_cast<double>(i);
    f[i] = rep[i] - 3.0;
  }
  auto r = ar_correct(f, rep, 2);
  CHECK(r.state.fallbacks > 0);
  for (std::size_t i = 2; i < 30; ++i) CHECK(r.corrected[i] == doctest::Approx(rep[i]));
  CHECK_THROWS_AS(ar_correct(f, std::vector<double>(3, 1.0), 1), ContractError);
  CHECK_THROWS_AS(ar_correct(f, rep, 0), ContractError);
}

TEST_CASE("confidence index") {
  CHECK(confidence_index(7.0, 7.0) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(confidence_index(0.0, 0.0) == 0.0);
  CHECK(confidence_index(3.0, 1.0) == doctest::Approx(0.75));
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.0, 50.0);
  for (int i = 0; i < 1000; ++i) {
    const double c = confidence_index(u(rng), u(rng));
    CHECK(c >= 0.0);
    CHECK(c <= 1.0);
  }
}

TEST_CASE("stage 1 fit examples") {
  MeasuredPoints p;
  for (int i = 0; i < 100; ++i) {
    const double stage = i < 20 ? 9.0 + 0.05 * i : 3.0 + 0.04 * i;
    const double delta = 1.0 - 0.02 * i;
    p.stage.push_back(stage);
    p.delta.push_back(delta);
    p.corrected.push_back(200.0 + i);
    p.reported.push_back(200.0 + i);
    p.measured.push_back(0.0);
  }
  // Measured values chosen so r1 = 0.1 * delta exactly.
  for (int i = 0; i < 100; ++i) p.measured[i] = p.corrected[i] * (1.0 - 0.1 * p.delta[i]);
  auto s = stage1_fit(p, 9.0);
  CHECK(s.e_action == doctest::Approx(20.0));
  REQUIRE(s.enabled);
  CHECK(std::abs(s.rho - 0.1) < 1e-8);
  CHECK(std::abs(s.intercept) < 1e-8);

  // Equal forecast and reported MAPE give c1 = 0.5.
  MeasuredPoints q = p;
  for (int i = 0; i < 100; ++i) {
    q.reported[i] = q.measured[i] * 1.1;
    q.corrected[i] = q.measured[i] * (i % 2 ? 1.2 : 1.0);
  }
  CHECK(stage1_fit(q, 9.0, ConfidenceReference::measured).confidence ==
        doctest::Approx(0.5).epsilon(1e-12));

  MeasuredPoints few = p;
  for (auto& st : few.stage) st = 1.0;
  auto off = stage1_fit(few, 9.0);
  CHECK_FALSE(off.enabled);
  CHECK(off.confidence == 0.0);
  CHECK_FALSE(off.warning.empty());
}

TEST_CASE("confidence indices ignore a common scale") {
  auto s = make_series(800, 3);
  ResidualConfig cfg;
  cfg.action_stage = 8.0;
  cfg.bootstrap_replicates = 2;
  auto a = run_pipeline(s, 1, cfg);
  ResidualSeries scaled = s;
  for (auto* v : {&scaled.forecast, &scaled.reported, &scaled.measured})
    for (double& x : *v) x *= 35.3;
  auto b = run_pipeline(scaled, 1, cfg);
  CHECK(b.state.stage1.confidence == doctest::Approx(a.state.stage1.confidence).epsilon(1e-10));
  CHECK(b.state.stage2.confidence == doctest::Approx(a.state.stage2.confidence).epsilon(1e-10));
}

TEST_CASE("stage 1 application and gating") {
  Stage1State s;
  s.enabled = true;
  s.rho = 0.05;
  s.intercept = 0.0;
  s.confidence = 1.0;
  s.action_stage = 5.0;
  s.delta_threshold = 0.2;
  const double x[] = {100.0, 100.0, 100.0}, st[] = {6.0, 4.0, 6.0}, d[] = {1.0, 1.0, 0.1};
  auto out = stage1_apply(x, st, d, s);
  CHECK(out.values[0] == doctest::Approx(95.0).epsilon(1e-15));
  CHECK(out.values[1] == 100.0);
  CHECK(out.values[2] == 100.0);
  CHECK(out.filter_pass[0] == 1);
  CHECK(out.filter_pass[1] == 0);

  s.confidence = 0.0;
  CHECK(stage1_apply(x, st, d, s).values[0] == 100.0);

  // Extreme corrections are clamped to keep discharge positive.
  s.confidence = 1.0;
  s.rho = 50.0;
  auto clamped = stage1_apply(x, st, d, s, 0.01);
  CHECK(clamped.values[0] == doctest::Approx(1.0));
  CHECK(clamped.clamped[0] == 1);
}

TEST_CASE("stage 1 removes an exactly linear error when fully trusted") {
  MeasuredPoints p;
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> st(2.0, 14.0), dd(-0.5, 0.8);
  for (int i = 0; i < 300; ++i) {
    p.stage.push_back(st(rng));
    p.delta.push_back(dd(rng));
    p.corrected.push_back(50.0 + 20.0 * p.stage.back());
    p.measured.push_back(p.corrected.back() * (1.0 - (-0.3 * p.delta.back() + 0.02)));
    p.reported.push_back(p.corrected.back());
  }
  auto s = stage1_fit(p, 8.0);
  REQUIRE(s.enabled);
  s.confidence = 1.0;
  auto out = stage1_apply(p.corrected, p.stage, p.delta, s);
  for (std::size_t i = 0; i < p.stage.size(); ++i) {
    if (!out.filter_pass[i]) continue;
    CHECK(std::abs((out.values[i] - p.measured[i]) / p.measured[i]) < 1e-6);
  }
}

TEST_CASE("stage 2 and 3 disabled paths") {
  const double x[] = {10.0, 20.0}, st[] = {3.0, 4.0}, d[] = {0.0, 0.1};
  Stage2State off;
  CHECK(stage2_apply(x, st, off).values == std::vector<double>{10.0, 20.0});
  auto s2 = stage2_fit(std::vector<double>{0.1, 0.2}, std::vector<double>{1, 2},
                       std::vector<double>{1, 2}, std::vector<double>{1, 2},
                       std::vector<double>{1, 2}, 0.5);
  CHECK_FALSE(s2.enabled);
  CHECK(s2.confidence == 0.0);
  Stage3State none;
  CHECK(stage3_apply(x, st, d, none) == std::vector<double>{10.0, 20.0});
  auto s3 = stage3_fit(std::vector<double>{1, 2, 3}, std::vector<double>{1, 2, 3},
                       std::vector<double>{0, 0, 0}, BoostParams{}, 3, 1);
  CHECK_FALSE(s3.enabled);
}

TEST_CASE("stage 3 learns a constant residual") {
  std::vector<double> r3(40, 4.0), st, d;
  for (int i = 0; i < 40; ++i) {
    st.push_back(2.0 + 0.3 * i);
    d.push_back(std::sin(i));
  }
  auto s = stage3_fit(r3, st, d, BoostParams{}, 20, 9);
  REQUIRE(s.enabled);
  CHECK(stage3_predict(s, 50.0, -3.0) == doctest::Approx(4.0).epsilon(1e-12));
  const double x[] = {100.0}, s1[] = {5.0}, d1[] = {0.0};
  CHECK(stage3_apply(x, s1, d1, s)[0] == doctest::Approx(104.0));
}

TEST_CASE("pipeline with all stages disabled is the identity") {
  auto s = make_series(300, 1);
  ResidualConfig cfg;
  cfg.ar_enabled = cfg.stage1_enabled = cfg.stage2_enabled = cfg.stage3_enabled = false;
  cfg.action_stage = 8.0;
  auto r = run_pipeline(s, 2, cfg);
  CHECK(r.stage3 == s.forecast);
}

TEST_CASE("pipeline without measurements only applies the ar step") {
  auto s = make_series(300, 2);
  std::fill(s.measured.begin(), s.measured.end(), kNaN);
  ResidualConfig cfg;
  cfg.action_stage = 8.0;
  auto r = run_pipeline(s, 1, cfg);
  auto ar = ar_correct(s.forecast, s.reported, 1);
  CHECK_FALSE(r.state.stage1.enabled);
  CHECK_FALSE(r.state.stage2.enabled);
  CHECK_FALSE(r.state.stage3.enabled);
  for (std::size_t i = 0; i < s.size(); ++i) CHECK(r.stage3[i] == ar.corrected[i]);
}

TEST_CASE("pipeline equals manual chaining") {
  auto s = make_series(900, 4);
  ResidualConfig cfg;
  cfg.action_stage = 8.0;
  cfg.bootstrap_replicates = 4;
  cfg.seed = 77;
  const int h = 3;
  auto r = run_pipeline(s, h, cfg);

  auto ar = ar_correct(s.forecast, s.reported, h).corrected;
  MeasuredPoints p;
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (!s.fit_mask[i] || std::isnan(s.measured[i]) || std::isnan(ar[i])) continue;
    rows.push_back(i);
    p.corrected.push_back(ar[i]);
    p.measured.push_back(s.measured[i]);
    p.reported.push_back(s.reported[i]);
    p.stage.push_back(s.stage_forecast[i]);
    p.delta.push_back(s.stage_delta[i]);
  }
  auto st1 = stage1_fit(p, cfg.action_stage);
  auto x1 = stage1_apply(ar, s.stage_forecast, s.stage_delta, st1).values;
  std::vector<double> r2, x1m;
  for (std::size_t k = 0; k < rows.size(); ++k) {
    x1m.push_back(x1[rows[k]]);
    r2.push_back((x1[rows[k]] - p.measured[k]) / p.corrected[k]);
  }
  auto st2 = stage2_fit(r2, p.stage, x1m, p.measured, p.reported, 0.5, 3);
  auto x2 = stage2_apply(x1, s.stage_forecast, st2).values;
  std::vector<double> r3;
  for (std::size_t k = 0; k < rows.size(); ++k) r3.push_back(p.measured[k] - x2[rows[k]]);
  auto st3 = stage3_fit(r3, p.stage, p.delta, cfg.boost, 4, derive_seed(77, "stage3"));
  auto x3 = stage3_apply(x2, s.stage_forecast, s.stage_delta, st3);

  CHECK(r.ar == ar);
  CHECK(r.stage1 == x1);
  CHECK(r.stage2 == x2);
  CHECK(r.stage3 == x3);
  CHECK(r.state.stage1.confidence >= 0.0);
  CHECK(r.state.stage1.confidence <= 1.0);
  CHECK(r.state.stage2.confidence >= 0.0);
  CHECK(r.state.stage2.confidence <= 1.0);
}

TEST_CASE("audit csv and state json") {
  auto s = make_series(120, 5);
  ResidualConfig cfg;
  cfg.action_stage = 8.0;
  cfg.bootstrap_replicates = 2;
  auto r = run_pipeline(s, 1, cfg);
  auto path = std::filesystem::temp_directory_path() / "rivercast_audit_test.csv";
  write_audit_csv(s, r, path);
  std::ifstream in(path);
  std::string header;
  std::getline(in, header);
  CHECK(header == "timestamp,base,ar_corrected,stage1,stage2,stage3,reported,measured,flags");
  std::size_t lines = 0;
  for (std::string line; std::getline(in, line);) ++lines;
  CHECK(lines == s.size());
  std::filesystem::remove(path);
  auto j = to_json(r.state);
  CHECK(j.at("stage1").contains("c1"));
  CHECK(j.at("stage2").at("robustness_iterations") == 3);
}
