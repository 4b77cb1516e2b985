#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include <json.hpp>

#include "rivercast/linalg.hpp"

namespace rivercast {

struct BoostParams {
  int n_trees = 50;
  int max_depth = 3;
  double learning_rate = 0.1;
  std::size_t min_samples_leaf = 2;
};

/// Axis-aligned regression tree grown with exact greedy squared-error splits.
class RegressionTree {
 public:
  struct Node {
    int feature = -1;  // -1 marks a leaf
    double threshold = 0.0;
    int left = -1;
    int right = -1;
    double value = 0.0;
  };

  /// Fits rows `x` (n x d) to `target` using sample multiplicities `counts`
  /// (bootstrap weights; zero excludes a row).
  void fit(const Matrix& x, std::span<const double> target, std::span<const double> counts,
           int max_depth, std::size_t min_samples_leaf);

  double predict(std::span<const double> row) const;
  const std::vector<Node>& nodes() const { return nodes_; }

  nlohmann::json to_json() const;
  static RegressionTree from_json(const nlohmann::json& doc);

 private:
  std::vector<Node> nodes_;
};

/// Gradient-boosted regression trees for squared error: starts from the
/// weighted mean and adds shrunken trees fitted to the current residuals.
class BoostedTrees {
 public:
  void fit(const Matrix& x, std::span<const double> target, const BoostParams& params,
           std::span<const double> counts = {});
  double predict(std::span<const double> row) const;
  std::vector<double> predict(const Matrix& x) const;

  nlohmann::json to_json() const;
  static BoostedTrees from_json(const nlohmann::json& doc);

 private:
  double base_ = 0.0;
  double learning_rate_ = 0.1;
  std::vector<RegressionTree> trees_;
};

/// Mean of `replicates` boosted ensembles, each fitted to a bootstrap
/// resample of the rows. Replicate r draws from a seed derived from `seed`
/// and r.
class BaggedBoostedTrees {
 public:
  void fit(const Matrix& x, std::span<const double> target, const BoostParams& params,
           int replicates, std::uint64_t seed);
  double predict(std::span<const double> row) const;
  std::size_t size() const { return members_.size(); }

  nlohmann::json to_json() const;

 private:
  std::vector<BoostedTrees> members_;
};

}  // namespace rivercast
