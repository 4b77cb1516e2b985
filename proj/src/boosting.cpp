#include "rivercast/boosting.hpp"

#include <algorithm>
#include <numeric>
#include <random>

#include "rivercast/errors.hpp"
#include "rivercast/seeding.hpp"

namespace rivercast {
namespace {

struct SplitChoice {
  int feature = -1;
  double threshold = 0.0;
  double gain = 0.0;
};

/// Grows the tree depth-first. `sorted[f]` lists the node's rows ordered by
/// feature f; children inherit that order through a stable partition.
class TreeBuilder {
 public:
  TreeBuilder(const Matrix& x, std::span<const double> y, std::span<const double> w,
              int max_depth, std::size_t min_leaf, std::vector<RegressionTree::Node>& nodes)
      : x_(x), y_(y), w_(w), max_depth_(max_depth), min_leaf_(min_leaf), nodes_(nodes) {}

  int build(std::vector<std::vector<int>> sorted, int depth) {
    const auto& rows = sorted.front();
    double sw = 0.0, swy = 0.0;
    for (int r : rows) {
      sw += w_[static_cast<std::size_t>(r)];
      swy += w_[static_cast<std::size_t>(r)] * y_[static_cast<std::size_t>(r)];
    }
    const int id = static_cast<int>(nodes_.size());
    nodes_.push_back({});
    nodes_[static_cast<std::size_t>(id)].value = sw > 0.0 ? swy / sw : 0.0;
    if (depth >= max_depth_ || sw < 2.0 * static_cast<double>(min_leaf_)) return id;

    const SplitChoice split = best_split(sorted, sw, swy);
    if (split.feature < 0) return id;

    std::vector<char> goes_left(static_cast<std::size_t>(x_.rows()), 0);
    for (int r : rows) goes_left[static_cast<std::size_t>(r)] = x_(r, split.feature) <= split.threshold;
    std::vector<std::vector<int>> left(sorted.size()), right(sorted.size());
    for (std::size_t f = 0; f < sorted.size(); ++f) {
      for (int r : sorted[f]) (goes_left[static_cast<std::size_t>(r)] ? left[f] : right[f]).push_back(r);
    }
    sorted.clear();
    const int l = build(std::move(left), depth + 1);
    const int rgt = build(std::move(right), depth + 1);
    auto& node = nodes_[static_cast<std::size_t>(id)];
    node.feature = split.feature;
    node.threshold = split.threshold;
    node.left = l;
    node.right = rgt;
    return id;
  }

 private:
  SplitChoice best_split(const std::vector<std::vector<int>>& sorted, double sw, double swy) const {
    SplitChoice best;
    const double parent = swy * swy / sw;
    const double min_leaf = static_cast<double>(min_leaf_);
    for (std::size_t f = 0; f < sorted.size(); ++f) {
      const auto& order = sorted[f];
      double lw = 0.0, lwy = 0.0;
      for (std::size_t i = 0; i + 1 < order.size(); ++i) {
        const auto r = static_cast<std::size_t>(order[i]);
        lw += w_[r];
        lwy += w_[r] * y_[r];
        const double xv = x_(order[i], static_cast<Eigen::Index>(f));
        const double xn = x_(order[i + 1], static_cast<Eigen::Index>(f));
        if (!(xv < xn)) continue;
        const double rw = sw - lw;
        if (lw < min_leaf || rw < min_leaf) continue;
        const double rwy = swy - lwy;
        const double gain = lwy * lwy / lw + rwy * rwy / rw - parent;
        if (gain > best.gain * (1.0 + 1e-12) + 1e-12 * std::abs(parent)) {
          best = {static_cast<int>(f), 0.5 * (xv + xn), gain};
        }
      }
    }
    return best;
  }

  const Matrix& x_;
  std::span<const double> y_;
  std::span<const double> w_;
  int max_depth_;
  std::size_t min_leaf_;
  std::vector<RegressionTree::Node>& nodes_;
};

}  // namespace

void RegressionTree::fit(const Matrix& x, std::span<const double> target,
                         std::span<const double> counts, int max_depth,
                         std::size_t min_samples_leaf) {
  if (static_cast<std::size_t>(x.rows()) != target.size() || target.size() != counts.size()) {
    throw DimensionError("regression tree: rows, targets and weights differ in length");
  }
  if (x.cols() == 0) throw DimensionError("regression tree: no features");
  nodes_.clear();
  std::vector<int> rows;
  for (std::size_t i = 0; i < counts.size(); ++i) {
    if (counts[i] > 0.0) rows.push_back(static_cast<int>(i));
  }
  if (rows.empty()) throw ContractError("regression tree: no rows to fit");
  std::vector<std::vector<int>> sorted(static_cast<std::size_t>(x.cols()), rows);
  for (Eigen::Index f = 0; f < x.cols(); ++f) {
    auto& s = sorted[static_cast<std::size_t>(f)];
    std::stable_sort(s.begin(), s.end(), [&](int a, int b) { return x(a, f) < x(b, f); });
  }
  TreeBuilder(x, target, counts, max_depth, min_samples_leaf, nodes_).build(std::move(sorted), 0);
}

double RegressionTree::predict(std::span<const double> row) const {
  std::size_t i = 0;
  while (nodes_[i].feature >= 0) {
    const auto& n = nodes_[i];
    i = static_cast<std::size_t>(row[static_cast<std::size_t>(n.feature)] <= n.threshold ? n.left
                                                                                           : n.right);
  }
  return nodes_[i].value;
}

nlohmann::json RegressionTree::to_json() const {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& n : nodes_) {
    out.push_back({n.feature, n.threshold, n.left, n.right, n.value});
  }
  return out;
}

RegressionTree RegressionTree::from_json(const nlohmann::json& doc) {
  RegressionTree t;
  for (const auto& n : doc) {
    t.nodes_.push_back({n.at(0).get<int>(), n.at(1).get<double>(), n.at(2).get<int>(),
                        n.at(3).get<int>(), n.at(4).get<double>()});
  }
  return t;
}

void BoostedTrees::fit(const Matrix& x, std::span<const double> target, const BoostParams& params,
                       std::span<const double> counts) {
  const auto n = static_cast<std::size_t>(x.rows());
  if (n != target.size()) throw DimensionError("boosted trees: rows and targets differ in length");
  if (n == 0) throw ContractError("boosted trees: empty training set");
  std::vector<double> w(counts.begin(), counts.end());
  if (w.empty()) w.assign(n, 1.0);
  if (w.size() != n) throw DimensionError("boosted trees: weight vector length mismatch");

  double sw = 0.0, swy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sw += w[i];
    swy += w[i] * target[i];
  }
  base_ = swy / sw;
  learning_rate_ = params.learning_rate;
  trees_.clear();
  std::vector<double> pred(n, base_);
  std::vector<double> residual(n);
  std::vector<double> row(static_cast<std::size_t>(x.cols()));
  for (int t = 0; t < params.n_trees; ++t) {
    for (std::size_t i = 0; i < n; ++i) residual[i] = target[i] - pred[i];
    RegressionTree tree;
    tree.fit(x, residual, w, params.max_depth, params.min_samples_leaf);
    for (std::size_t i = 0; i < n; ++i) {
      for (Eigen::Index f = 0; f < x.cols(); ++f) row[static_cast<std::size_t>(f)] = x(static_cast<Eigen::Index>(i), f);
      pred[i] += learning_rate_ * tree.predict(row);
    }
    trees_.push_back(std::move(tree));
  }
}

double BoostedTrees::predict(std::span<const double> row) const {
  double out = base_;
  for (const auto& t : trees_) out += learning_rate_ * t.predict(row);
  return out;
}

std::vector<double> BoostedTrees::predict(const Matrix& x) const {
  std::vector<double> out(static_cast<std::size_t>(x.rows()));
  std::vector<double> row(static_cast<std::size_t>(x.cols()));
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    for (Eigen::Index f = 0; f < x.cols(); ++f) row[static_cast<std::size_t>(f)] = x(i, f);
    out[static_cast<std::size_t>(i)] = predict(row);
  }
  return out;
}

nlohmann::json BoostedTrees::to_json() const {
  nlohmann::json trees = nlohmann::json::array();
  for (const auto& t : trees_) trees.push_back(t.to_json());
  return {{"base", base_}, {"learning_rate", learning_rate_}, {"trees", trees}};
}

BoostedTrees BoostedTrees::from_json(const nlohmann::json& doc) {
  BoostedTrees b;
  b.base_ = doc.at("base").get<double>();
  b.learning_rate_ = doc.at("learning_rate").get<double>();
  for (const auto& t : doc.at("trees")) b.trees_.push_back(RegressionTree::from_json(t));
  return b;
}

void BaggedBoostedTrees::fit(const Matrix& x, std::span<const double> target,
                             const BoostParams& params, int replicates, std::uint64_t seed) {
  if (replicates < 1) throw ContractError("bootstrap replicate count must be positive");
  const auto n = static_cast<std::size_t>(x.rows());
  members_.clear();
  for (int r = 0; r < replicates; ++r) {
    std::mt19937_64 rng(derive_seed(seed, "bootstrap/" + std::to_string(r)));
    std::uniform_int_distribution<std::size_t> pick(0, n - 1);
    std::vector<double> counts(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) counts[pick(rng)] += 1.0;
    BoostedTrees member;
    member.fit(x, target, params, counts);
    members_.push_back(std::move(member));
  }
}

double BaggedBoostedTrees::predict(std::span<const double> row) const {
  if (members_.empty()) return 0.0;
  double acc = 0.0;
  for (const auto& m : members_) acc += m.predict(row);
  return acc / static_cast<double>(members_.size());
}

nlohmann::json BaggedBoostedTrees::to_json() const {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& m : members_) out.push_back(m.to_json());
  return out;
}

}  // namespace rivercast
