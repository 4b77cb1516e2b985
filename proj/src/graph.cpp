#include "rivercast/graph.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <utility>

#include <json.hpp>

#include "rivercast/errors.hpp"

namespace rivercast {
namespace {

void check_acyclic(std::size_t n, std::span<const Edge> edges) {
  std::vector<std::size_t> indegree(n, 0);
  std::vector<std::vector<std::size_t>> out(n);
  for (const auto& e : edges) {
    out[e.from].push_back(e.to);
    ++indegree[e.to];
  }
  std::vector<std::size_t> ready;
  for (std::size_t i = 0; i < n; ++i) {
    if (indegree[i] == 0) ready.push_back(i);
  }
  std::size_t visited = 0;
  while (!ready.empty()) {
    const std::size_t v = ready.back();
    ready.pop_back();
    ++visited;
    for (std::size_t w : out[v]) {
      if (--indegree[w] == 0) ready.push_back(w);
    }
  }
  if (visited != n) throw InvalidGraphError("river network contains a cycle");
}

}  // namespace

Matrix build_proximity(std::size_t n_nodes, std::span<const Edge> edges) {
  if (n_nodes == 0) throw InvalidGraphError("graph has no nodes");
  std::set<std::pair<std::size_t, std::size_t>> seen;
  double lo = 0.0;
  double hi = 0.0;
  for (std::size_t k = 0; k < edges.size(); ++k) {
    const Edge& e = edges[k];
    if (e.from >= n_nodes || e.to >= n_nodes) {
      throw InvalidGraphError("edge endpoint out of range");
    }
    if (e.from == e.to) throw InvalidGraphError("self edge on node " + std::to_string(e.from));
    if (!(e.distance_km > 0.0) || !std::isfinite(e.distance_km)) {
      throw InvalidGraphError("edge distance must be positive and finite");
    }
    if (!seen.emplace(e.from, e.to).second) {
      throw DuplicateEdgeError("duplicate edge " + std::to_string(e.from) + " -> " +
                               std::to_string(e.to));
    }
    lo = k == 0 ? e.distance_km : std::min(lo, e.distance_km);
    hi = k == 0 ? e.distance_km : std::max(hi, e.distance_km);
  }

  Matrix a = Matrix::Zero(static_cast<Eigen::Index>(n_nodes), static_cast<Eigen::Index>(n_nodes));
  const double range = hi - lo;
  for (const auto& e : edges) {
    // All-equal distances standardize to 0.
    const double scaled = range > 0.0 ? (e.distance_km - lo) / range : 0.0;
    a(static_cast<Eigen::Index>(e.from), static_cast<Eigen::Index>(e.to)) = std::exp(-scaled);
  }
  return a;
}

WatershedGraph::WatershedGraph(std::vector<std::string> node_ids, std::size_t target,
                               std::vector<Edge> edges)
    : node_ids_(std::move(node_ids)), target_(target), edges_(std::move(edges)) {
  proximity_ = build_proximity(node_ids_.size(), edges_);
  if (target_ >= node_ids_.size()) throw InvalidGraphError("target node out of range");
  std::set<std::string> unique(node_ids_.begin(), node_ids_.end());
  if (unique.size() != node_ids_.size()) throw InvalidGraphError("duplicate node id");
  check_acyclic(node_ids_.size(), edges_);
}

std::size_t WatershedGraph::index_of(const std::string& id) const {
  auto it = std::find(node_ids_.begin(), node_ids_.end(), id);
  if (it == node_ids_.end()) throw InvalidGraphError("unknown node id '" + id + "'");
  return static_cast<std::size_t>(it - node_ids_.begin());
}

TransitionSet build_transitions(const WatershedGraph& graph, int steps) {
  if (steps < 1) throw ContractError("diffusion steps must be >= 1");
  const Matrix at = graph.proximity().transpose();
  const Eigen::Index n = at.rows();
  TransitionSet out;
  out.steps = steps;
  out.transition = Matrix::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double inflow = at.row(i).sum();
    // Headwater nodes keep an all-zero row.
    if (inflow > 0.0) out.transition.row(i) = at.row(i) / inflow;
  }
  out.powers.reserve(static_cast<std::size_t>(steps));
  out.powers.push_back(Matrix::Identity(n, n));
  for (int k = 1; k < steps; ++k) {
    out.powers.push_back(out.powers.back() * out.transition);
  }
  return out;
}

WatershedGraph load_graph(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open graph file " + path.string());
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("graph file " + path.string() + ": " + e.what());
  }
  try {
    std::vector<std::string> ids;
    std::size_t target = 0;
    std::size_t n_targets = 0;
    for (const auto& node : doc.at("nodes")) {
      if (node.value("is_target", false)) {
        target = ids.size();
        ++n_targets;
      }
      ids.push_back(node.at("id").get<std::string>());
    }
    if (n_targets != 1) throw InvalidGraphError("graph must mark exactly one target node");
    std::vector<Edge> edges;
    WatershedGraph probe_ids(ids, target, {});
    for (const auto& e : doc.at("edges")) {
      edges.push_back({probe_ids.index_of(e.at("from").get<std::string>()),
                       probe_ids.index_of(e.at("to").get<std::string>()),
                       e.at("distance_km").get<double>()});
    }
    return WatershedGraph(std::move(ids), target, std::move(edges));
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("graph file " + path.string() + ": " + e.what());
  }
}

void save_graph(const WatershedGraph& graph, const std::filesystem::path& path) {
  nlohmann::json doc;
  doc["nodes"] = nlohmann::json::array();
  for (std::size_t i = 0; i < graph.n_nodes(); ++i) {
    doc["nodes"].push_back({{"id", graph.node_ids()[i]}, {"is_target", i == graph.target()}});
  }
  doc["edges"] = nlohmann::json::array();
  for (const auto& e : graph.edges()) {
    doc["edges"].push_back({{"from", graph.node_ids()[e.from]},
                            {"to", graph.node_ids()[e.to]},
                            {"distance_km", e.distance_km}});
  }
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write graph file " + path.string());
  out << doc.dump(2) << '\n';
}

}  // namespace rivercast
