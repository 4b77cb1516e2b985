#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "rivercast/linalg.hpp"

namespace rivercast {

/// A directed river reach between two gauging stations.
struct Edge {
  std::size_t from = 0;  // upstream node
  std::size_t to = 0;    // downstream node
  double distance_km = 0.0;
};

/// Gauging stations connected by downstream-pointing reaches.
///
/// `proximity(i, j)` is exp(-d) for the min-max standardized along-channel
/// distance d of edge i -> j and zero where no edge exists.
class WatershedGraph {
 public:
  WatershedGraph(std::vector<std::string> node_ids, std::size_t target, std::vector<Edge> edges);

  std::size_t n_nodes() const { return node_ids_.size(); }
  std::size_t target() const { return target_; }
  const std::vector<std::string>& node_ids() const { return node_ids_; }
  const std::vector<Edge>& edges() const { return edges_; }
  const Matrix& proximity() const { return proximity_; }

  /// Index of a station id, or throws InvalidGraphError.
  std::size_t index_of(const std::string& id) const;

 private:
  std::vector<std::string> node_ids_;
  std::size_t target_;
  std::vector<Edge> edges_;
  Matrix proximity_;
};

/// Random-walk transition matrix D_I^-1 A^T and its powers 0..K-1.
struct TransitionSet {
  Matrix transition;
  std::vector<Matrix> powers;
  int steps = 1;
};

/// Weighted adjacency from edges. Throws InvalidGraphError for an empty node
/// set, bad endpoints, self edges or non-positive distances, and
/// DuplicateEdgeError for repeated (from, to) pairs.
Matrix build_proximity(std::size_t n_nodes, std::span<const Edge> edges);

TransitionSet build_transitions(const WatershedGraph& graph, int steps);

WatershedGraph load_graph(const std::filesystem::path& path);
void save_graph(const WatershedGraph& graph, const std::filesystem::path& path);

}  // namespace rivercast
