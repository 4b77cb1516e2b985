#include <doctest.h>

#include <cmath>
#include <random>

#include "rivercast/errors.hpp"
#include "rivercast/graph.hpp"
#include "rivercast/seeding.hpp"
#include "rivercast/training.hpp"

using namespace rivercast;

namespace {

struct Ar1 {
  SequenceData data;
  TrainingData td;
  std::vector<std::size_t> test_origins;
  std::vector<double> test_targets;
};

Ar1 make_ar1(double phi, std::size_t n, int window) {
  Ar1 s;
  std::mt19937_64 rng(99);
  std::normal_distribution<double> eps(0.0, 1.0);
  s.data.stage.resize(static_cast<Eigen::Index>(n), 1);
  double x = 0.0;
  for (std::size_t t = 0; t < n; ++t) {
    x = phi * x + eps(rng);
    s.data.stage(static_cast<Eigen::Index>(t), 0) = x;
    s.data.rain.push_back(0.0);
  }
  s.td.data = &s.data;
  for (std::size_t o = static_cast<std::size_t>(window) - 1; o + 1 < n; ++o) {
    const double y = s.data.stage(static_cast<Eigen::Index>(o + 1), 0);
    if (o < n * 6 / 10) {
      s.td.train_origins.push_back(o);
      s.td.train_targets.push_back(y);
    } else if (o < n * 8 / 10) {
      s.td.val_origins.push_back(o);
      s.td.val_targets.push_back(y);
    } else {
      s.test_origins.push_back(o);
      s.test_targets.push_back(y);
    }
  }
  return s;
}

ModelConfig single_node(int window) {
  ModelConfig c;
  c.n_nodes = 1;
  c.diffusion_steps = 1;
  c.hidden = 4;
  c.window = window;
  return c;
}

NormStats identity_norm() {
  NormStats n;
  n.stage_mean = {0.0};
  n.stage_std = {1.0};
  return n;
}

TransitionSet single_transitions() { return build_transitions(WatershedGraph({"a"}, 0, {}), 1); }

}  // namespace

TEST_CASE("default grid has sixteen points") {
  auto g = default_grid();
  CHECK(g.size() == 16);
}

TEST_CASE("zero epochs returns the initialized parameters") {
  auto s = make_ar1(0.5, 200, 4);
  TrainOptions opt;
  opt.grid = {GridPoint{}};
  opt.max_epochs = 0;
  opt.seed = 5;
  auto r = train(single_node(4), identity_norm(), single_transitions(), s.td, opt);
  ModelConfig cfg = single_node(4);
  cfg.hidden = GridPoint{}.hidden;
  cfg.decoder_layers = GridPoint{}.decoder_layers;
  BaseModel init = BaseModel::initialize(cfg, identity_norm(),
                                         derive_seed(derive_seed(5, "grid/0"), "init"));
  for (const auto& [name, t] : init.params) {
    CHECK((r.model.params.at(name).value.array() == t.value.array()).all());
  }
  CHECK(r.records.at(0).epochs_run == 0);
}

TEST_CASE("errors") {
  auto s = make_ar1(0.5, 200, 4);
  TrainOptions opt;
  CHECK_THROWS_AS(train(single_node(4), identity_norm(), single_transitions(), s.td, opt),
                  ContractError);
  opt.grid = {GridPoint{}};
  TrainingData empty = s.td;
  empty.train_origins.clear();
  empty.train_targets.clear();
  CHECK_THROWS_AS(train(single_node(4), identity_norm(), single_transitions(), empty, opt),
                  ContractError);
}

TEST_CASE("diverging grid points are recorded and skipped") {
  auto s = make_ar1(0.5, 300, 4);
  TrainOptions opt;
  opt.grid = {GridPoint{16, 1e300, 4, 1}, GridPoint{16, 1e-2, 4, 1}};
  opt.max_epochs = 3;
  opt.clip_norm = 0.0;
  // An absurd learning rate overflows the parameters.
  auto r = train(single_node(4), identity_norm(), single_transitions(), s.td, opt);
  CHECK(r.records[0].diverged);
  CHECK(r.selected == 1);
}

TEST_CASE("training on AR(1) beats persistence and is deterministic") {
  auto s = make_ar1(0.5, 1500, 4);
  TrainOptions opt;
  opt.grid = {GridPoint{32, 1e-2, 4, 1}, GridPoint{64, 3e-3, 4, 0}};
  opt.max_epochs = 25;
  opt.patience = 5;
  opt.seed = 1;
  auto tr = single_transitions();
  auto a = train(single_node(4), identity_norm(), tr, s.td, opt);
  auto b = train(single_node(4), identity_norm(), tr, s.td, opt);
  CHECK(a.selected == b.selected);
  CHECK(a.records[a.selected].best_val_loss == b.records[b.selected].best_val_loss);

  auto pred = predict(a.model, tr, s.data, s.test_origins);
  double mae_model = 0.0, mae_persist = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    mae_model += std::abs(pred[i] - s.test_targets[i]);
    const auto o = static_cast<Eigen::Index>(s.test_origins[i]);
    mae_persist += std::abs(s.data.stage(o, 0) - s.test_targets[i]);
  }
  CHECK(mae_model < mae_persist);

  for (const auto& rec : a.records) {
    for (std::size_t i = 1; i < rec.best_sequence.size(); ++i) {
      CHECK(rec.best_sequence[i] <= rec.best_sequence[i - 1]);
    }
    CHECK(rec.log.size() == static_cast<std::size_t>(rec.epochs_run));
  }
}
