#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <vector>

#include "nodepfn/graph.hpp"
#include "nodepfn/rng.hpp"

namespace nodepfn {

struct Interval {
  double lo = 0, hi = 0;
  bool contains(double v) const { return v >= lo && v <= hi; }
};

struct IntRange {
  int lo = 0, hi = 0;  // inclusive
};

enum class Activation { tanh, leaky_relu, elu, identity };
constexpr int kActivationCount = 4;

struct ScmConfig {
  // Discretized noisy log-normal draws for depth and width.
  double layer_mu = std::log(3.0), layer_sigma = 0.5;
  double hidden_mu = std::log(16.0), hidden_sigma = 0.7;
  // Per-layer edge-drop probability ~ Beta(alpha, beta).
  double edge_drop_alpha = 1.0, edge_drop_beta = 3.0;
  // Per-node noise scale ~ log-normal.
  double noise_mu = std::log(0.1), noise_sigma = 0.5;
};

struct CsbmConfig {
  Interval h_range{0.1, 0.9};
  Interval p_in_range{0.01, 0.1};
};

struct ErConfig {
  Interval p_er_range{0.01, 0.05};
};

struct BaConfig {
  IntRange attachment_m_range{1, 5};
  bool enabled = false;  // when on, every graph uses preferential attachment (ablation)
};

struct PriorConfig {
  int n_nodes = 1024;
  int max_classes = 20;
  IntRange feature_dim_range{3, 100};
  double er_fraction = 0.5;  // probability of ER structure; otherwise cSBM
  CsbmConfig csbm;
  ErConfig er;
  BaConfig ba;
  ScmConfig scm;
  Interval split_fraction_range{0.2, 0.8};
  // Class count = 1 + truncated geometric over [0, max_classes-1].
  double class_geometric_p = 0.08;
  int max_retries = 10;

  void validate() const;
};

// Sampled random causal network: a layered MLP with dropped edges. Layer 0 is
// the noise-source layer; values propagate forward only, so the retained-edge
// masks always describe a DAG. Node ids are global across layers.
struct ScmSpec {
  std::vector<int> layer_sizes;
  // edge_mask[l] / weights[l]: layer_sizes[l+1] x layer_sizes[l], row-major.
  std::vector<std::vector<uint8_t>> edge_mask;
  std::vector<std::vector<double>> weights;
  std::vector<Activation> activations;  // applied to the output of layer l+1
  std::vector<double> noise_scales;     // per global node
  std::vector<int> feature_nodes;       // shuffled pool of intermediate nodes
  int label_node = -1;

  int node_count() const;
  int node_offset(int layer) const;
  void validate() const;
};

ScmSpec sample_scm(const PriorConfig& cfg, Rng& rng);

// Propagates per-sample Gaussian noise through the causal network.
// X columns read from the first n_features feature nodes and standardized;
// the label-node output is quantile-binned into n_classes balanced bins whose
// indices are then randomly permuted. Throws NumericalError on non-finite
// propagation or a degenerate (constant) label signal with n_classes > 1.
void run_scm(const ScmSpec& spec, int n_nodes, int n_classes, int n_features, Rng& rng,
             Tensor& x_out, std::vector<int>& y_out);

// Inter-community probability implied by the homophily level.
inline double csbm_p_out(double p_in, double h) { return p_in * (1.0 - h); }

// Contextual SBM: communities are the labels. p_out = p_in * (1 - h); block
// probability matrix has off-diagonals Power(5)*p_out and diagonals
// p_out + Power(2)*(p_in - p_out), sampled once per block pair and mirrored.
EdgeList sample_csbm_edges(const std::vector<int>& y, double h, double p_in, Rng& rng);

// Erdos-Renyi: each of the n(n-1)/2 pairs appears independently with p_er.
EdgeList sample_er_edges(int n, double p_er, Rng& rng);

// Barabasi-Albert growth from a complete seed graph on m+1 nodes; every new
// node attaches to m distinct existing nodes with degree-proportional odds.
EdgeList sample_ba_edges(int n, int m, Rng& rng);

int sample_class_count(const PriorConfig& cfg, Rng& rng);

// Full pipeline: class count, SCM features/labels, structure family, split.
// Every class present in the test split is guaranteed present in the train
// split. Degenerate SCM outputs are retried on derived sub-seeds up to
// cfg.max_retries before giving up with NumericalError.
Task assemble_task(const PriorConfig& cfg, Rng& rng);

// Convenience wrapper making determinism explicit: task is a pure function
// of (cfg, seed).
Task task_for_seed(const PriorConfig& cfg, uint64_t seed);

// Stream abstraction shared by training and evaluation; returns the task for
// a derived seed.
using TaskSampler = std::function<Task(uint64_t seed)>;

TaskSampler prior_task_sampler(const PriorConfig& cfg);

}  // namespace nodepfn
