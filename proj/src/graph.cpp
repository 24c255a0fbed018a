#include "nodepfn/graph.hpp"

#include <algorithm>
#include <string>

namespace nodepfn {

void canonicalize_edges(EdgeList& edges, int n) {
  for (auto& [u, v] : edges) {
    if (u == v) throw ValidationError("edges: self-loop at node " + std::to_string(u));
    if (u < 0 || v < 0 || u >= n || v >= n)
      throw ValidationError("edges: endpoint out of range: (" + std::to_string(u) + "," + std::to_string(v) + ")");
    if (u > v) std::swap(u, v);
  }
  std::sort(edges.begin(), edges.end());
  edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
}

void Graph::validate() const {
  if (n < 0) throw ValidationError("graph: negative node count");
  if (static_cast<int>(y.size()) != n) throw ValidationError("graph: label count != n");
  if (x.defined() && x.rows() != n && n > 0) throw ValidationError("graph: feature row count != n");
  for (int i = 0; i < n; ++i) {
    if (y[i] < -1 || y[i] >= n_classes)
      throw ValidationError("graph: label out of range at node " + std::to_string(i));
  }
  EdgeList copy = edges;
  canonicalize_edges(copy, n);
  if (copy != edges) throw ValidationError("graph: edge list not canonical");
}

void Task::validate() const {
  graph.validate();
  validate_split();
}

void Task::validate_split() const {
  if (train_ids.empty()) throw ValidationError("task: empty train split");
  std::vector<char> seen(static_cast<std::size_t>(graph.n), 0);
  for (int id : train_ids) {
    if (id < 0 || id >= graph.n) throw ValidationError("task: train id out of range");
    if (seen[id]++) throw ValidationError("task: duplicate node in splits");
  }
  for (int id : test_ids) {
    if (id < 0 || id >= graph.n) throw ValidationError("task: test id out of range");
    if (seen[id]++) throw ValidationError("task: train/test overlap at node " + std::to_string(id));
  }
  for (int i = 0; i < graph.n; ++i)
    if (!seen[i]) throw ValidationError("task: node " + std::to_string(i) + " in neither split");
}

double edge_homophily(const Graph& g) {
  if (g.edges.empty()) throw ValidationError("edge_homophily: empty edge set");
  std::size_t same = 0;
  for (const auto& [u, v] : g.edges)
    if (g.y[u] == g.y[v]) ++same;
  return static_cast<double>(same) / static_cast<double>(g.edges.size());
}

std::vector<int> node_degrees(const Graph& g) {
  std::vector<int> deg(static_cast<std::size_t>(g.n), 0);
  for (const auto& [u, v] : g.edges) {
    ++deg[u];
    ++deg[v];
  }
  return deg;
}

}  // namespace nodepfn
