#pragma once

#include <random>
#include <string>
#include <vector>

#include "rivercast/graph.hpp"
#include "rivercast/model.hpp"

namespace rivercast::testing {

/// Random tree draining into node 0: node i flows to a random earlier node.
inline WatershedGraph random_graph(std::size_t n, std::mt19937_64& rng) {
  std::vector<std::string> ids;
  std::vector<Edge> edges;
  std::uniform_real_distribution<double> dist(1.0, 50.0);
  for (std::size_t i = 0; i < n; ++i) {
    ids.push_back("n" + std::to_string(i));
    if (i > 0) {
      std::uniform_int_distribution<std::size_t> parent(0, i - 1);
      edges.push_back({i, parent(rng), dist(rng)});
    }
  }
  return WatershedGraph(ids, 0, edges);
}

inline void randomize(nn::ParameterMap& params, std::mt19937_64& rng, double scale = 1.0) {
  std::uniform_real_distribution<double> u(-scale, scale);
  for (auto& [name, t] : params)
    for (Eigen::Index i = 0; i < t.value.size(); ++i) t.value.data()[i] = u(rng);
}

inline NormStats random_norm(std::size_t n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> mean(2.0, 10.0), sd(0.5, 3.0);
  NormStats s;
  for (std::size_t i = 0; i < n; ++i) {
    s.stage_mean.push_back(mean(rng));
    s.stage_std.push_back(sd(rng));
  }
  s.rain_mean = 0.3;
  s.rain_std = 1.7;
  s.target_mean = s.stage_mean[0];
  s.target_std = s.stage_std[0];
  return s;
}

struct RandomWindow {
  Matrix stage;
  std::vector<double> rain;
};

inline RandomWindow random_window(int window, std::size_t n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> st(1.0, 15.0), rn(0.0, 5.0);
  RandomWindow w{Matrix(window, static_cast<Eigen::Index>(n)), {}};
  for (Eigen::Index i = 0; i < w.stage.size(); ++i) w.stage.data()[i] = st(rng);
  for (int s = 0; s < window; ++s) w.rain.push_back(rn(rng));
  return w;
}

}  // namespace rivercast::testing
