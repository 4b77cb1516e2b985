#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <random>

#include "rivercast/experiment.hpp"

using namespace rivercast;

namespace {

ExperimentConfig small_config() {
  ExperimentConfig c;
  c.synth.n_days = 45;
  c.synth.kappa = 0.3;
  c.grid = {GridPoint{64, 3e-3, 4, 1}};
  c.max_epochs = 2;
  c.patience = 2;
  c.baselines = {"persistence", "linear", "gbt", "dcrnn_direct"};
  c.gbt_params = {10, 2, 0.1, 2};
  c.residual.bootstrap_replicates = 2;
  finalize(c);
  return c;
}

struct Fixture {
  ExperimentConfig config = small_config();
  Dataset dataset = dataset_from_synth(generate(config.synth));
};

Fixture& fixture() {
  static Fixture f;
  return f;
}

}  // namespace

TEST_CASE("linear baseline is exact on linear data") {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> n(0.0, 1.0);
  Matrix x(200, 5);
  std::vector<double> y;
  for (Eigen::Index i = 0; i < 200; ++i) {
    for (Eigen::Index j = 0; j < 5; ++j) x(i, j) = n(rng);
    y.push_back(3.0 - x(i, 0) + 0.5 * x(i, 3) + 2.0 * x(i, 4));
  }
  LinearBaseline lin;
  lin.fit(x, y);
  auto p = lin.predict(x);
  double mae = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) mae += std::abs(p[i] - y[i]) / 200.0;
  CHECK(mae < 1e-8);
  CHECK(LinearBaseline::from_json(lin.to_json()).predict(x) == p);
}

TEST_CASE("stage to discharge clamps below the offset") {
  const Timestamp t = parse_iso8601("2020-01-01T00:00:00Z");
  RatingCurveSet c("s", {{t, t + Hours(10), {CurvePiece{1.5, 20.0, 1.0, 2.0, 1.5}}}});
  bool ex = false;
  CHECK(stage_to_discharge(c, 5.0, t, &ex) == doctest::Approx(16.0));
  CHECK_FALSE(ex);
  const double low = stage_to_discharge(c, 0.5, t, &ex);
  CHECK(ex);
  CHECK(low > 0.0);
  CHECK(low < 1e-3);
}

TEST_CASE("flattened windows follow the step layout") {
  SequenceData d{Matrix(5, 2), {10, 11, 12, 13, 14}};
  d.stage << 0, 1, 2, 3, 4, 5, 6, 7, 8, 9;
  const std::size_t origins[] = {2, 4};
  Matrix f = flatten_windows(d, origins, 2);
  REQUIRE(f.cols() == 6);
  CHECK(f(0, 0) == 2.0);
  CHECK(f(0, 2) == 11.0);
  CHECK(f(0, 3) == 4.0);
  CHECK(f(1, 5) == 14.0);
}

TEST_CASE("horizon preparation") {
  auto& fx = fixture();
  const double pct[] = {60, 15, 25};
  auto hd = prepare_horizon(fx.dataset, 24, 3, pct);
  CHECK(hd.windows.size() == fx.dataset.frame.hours() - 24 - 3 + 1);
  CHECK(hd.split_of.size() == hd.windows.size());
  std::size_t total = 0;
  for (auto s : {SplitName::train, SplitName::val, SplitName::test}) total += hd.rows(s).size();
  CHECK(total == hd.windows.size());
}

TEST_CASE("end-to-end forecasts for one horizon") {
  auto& fx = fixture();
  const int h = 2;
  const double pct[] = {60, 15, 25};
  auto hd = prepare_horizon(fx.dataset, 24, h, pct);
  ModelSet models = train_models(fx.dataset, hd, fx.config);
  auto tr = build_transitions(fx.dataset.graph, fx.config.diffusion_steps);
  auto table = make_forecasts(fx.dataset, hd, models, tr);
  REQUIRE(table.size() == hd.windows.size());
  CHECK(table.names.front() == "base");

  // Persistence carries the reported discharge h hours forward.
  const auto& pers = table.column("persistence");
  const auto& rep = fx.dataset.frame.reported[fx.dataset.target()];
  for (std::size_t i = 0; i < table.size(); ++i) {
    const auto t = static_cast<std::size_t>(hours_between(fx.dataset.frame.start, table.time[i]));
    CHECK(pers[i] == rep[t - h]);
  }
  for (const auto& name : table.names)
    for (double v : table.column(name)) CHECK(std::isfinite(v));

  apply_residual(table, fx.config.residual);
  auto dir = std::filesystem::temp_directory_path() / "rivercast_experiment_test";
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  write_forecast_csv(table, dir / "f.csv");
  auto back = read_forecast_csv(dir / "f.csv", h);
  CHECK(back.names == table.names);
  CHECK(back.stage3 == table.stage3);
  CHECK(back.column("dcrnn_direct") == table.column("dcrnn_direct"));
  CHECK(evaluate_table(back, fx.config.residual.action_stage) ==
        evaluate_table(table, fx.config.residual.action_stage));

  save_models(models, dir);
  ModelSet loaded = load_models(dir, h, fx.config.baselines);
  auto again = make_forecasts(fx.dataset, hd, loaded, tr);
  for (const auto& name : table.names) CHECK(again.column(name) == table.column(name));
  std::filesystem::remove_all(dir);

  auto report = evaluate_table(table, fx.config.residual.action_stage);
  const auto& test = report.at("splits").at("test");
  CHECK(test.at("reported_space").contains("base"));
  CHECK(test.at("reported_space").contains("persistence"));
  CHECK(test.at("measured_space").contains("stage3"));
}

TEST_CASE("persistence on a short series") {
  // Reported [5, 6, 7] at the origin hours: the h=2 forecast issued at 7 is 7.
  auto& fx = fixture();
  Dataset d = fx.dataset;
  auto& rep = d.frame.reported[d.target()];
  for (std::size_t i = 0; i < rep.size(); ++i) rep[i] = 5.0 + static_cast<double>(i);
  const double pct[] = {60, 15, 25};
  auto hd = prepare_horizon(d, 3, 2, pct);
  ExperimentConfig c = fx.config;
  c.baselines = {"persistence"};
  c.max_epochs = 0;
  ModelSet models = train_models(d, hd, c);
  auto table = make_forecasts(d, hd, models, build_transitions(d.graph, c.diffusion_steps));
  CHECK(table.time[0] == d.frame.time(4));
  CHECK(table.column("persistence")[0] == 7.0);
}
