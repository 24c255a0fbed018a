#pragma once

#include <utility>
#include <vector>

#include "nodepfn/tensor.hpp"

namespace nodepfn {

using EdgeList = std::vector<std::pair<int, int>>;

// Undirected attributed graph. Edges are canonical: i < j, sorted, unique,
// no self-loops. Labels live in [0, n_classes); -1 marks an unknown label
// (only meaningful for datasets loaded from file).
struct Graph {
  int n = 0;
  EdgeList edges;
  Tensor x;                // n x d feature matrix
  std::vector<int> y;      // length n
  int n_classes = 0;

  int feature_dim() const { return n > 0 ? x.cols() : 0; }
  void validate() const;   // throws ValidationError on any broken invariant
};

// One graph plus a train/test node partition; the unit of both pre-training
// and inference.
struct Task {
  Graph graph;
  std::vector<int> train_ids;
  std::vector<int> test_ids;

  void validate() const;        // full check including graph invariants
  void validate_split() const;  // partition/disjointness only (cheap, per-forward)
};

// Sorts, deduplicates, normalizes orientation to i < j; rejects self-loops
// and out-of-range endpoints.
void canonicalize_edges(EdgeList& edges, int n);

// Fraction of edges whose endpoints share a label. Requires >= 1 edge.
double edge_homophily(const Graph& g);

std::vector<int> node_degrees(const Graph& g);

}  // namespace nodepfn
