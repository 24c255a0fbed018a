#pragma once

#include <vector>

#include "nodepfn/inference.hpp"
#include "nodepfn/model.hpp"

namespace nodepfn {

// Iterative label spreading over the normalized adjacency with clamped train
// rows; output rows normalized to probabilities (all-zero rows -> uniform).
PpdMatrix label_propagation(const Graph& g, const std::vector<int>& train_ids,
                            const std::vector<int>& train_labels, double alpha = 0.9,
                            int iters = 100);

enum class FilterKind { identity, low_pass, high_pass };

// Feature filter applied before the closed-form solve: identity, Adj^k
// (low-pass, SGC-style) or I - Adj (high-pass).
struct FilterMatrix {
  FilterKind kind = FilterKind::identity;
  int k = 2;  // low-pass depth
};

Tensor apply_filter(const Tensor& x, const Graph& g, const FilterMatrix& filter);

// Ridge solution W of (F_train^T F_train + ridge I) W = F_train^T Y_onehot
// over the filtered features; columns follow canonical class order. ridge = 0
// uses an exact pseudo-inverse when allowed, otherwise signals a singular
// system.
Tensor closed_form_weights(const Graph& g, const std::vector<int>& train_ids,
                           const std::vector<int>& train_labels, const FilterMatrix& filter,
                           double ridge = 1e-4, bool exact_pinv = false);

// argmax(F_test W) labels with ties broken toward the smaller class index.
std::vector<int> closed_form_classify(const Graph& g, const std::vector<int>& train_ids,
                                      const std::vector<int>& train_labels, const FilterMatrix& filter,
                                      double ridge = 1e-4, bool exact_pinv = false);

// One enumerable generative hypothesis: iid class prior, isotropic Gaussian
// class-conditional features, cSBM edges with p_out = p_in * (1 - h).
struct CsbmHypothesis {
  double weight = 1.0;
  double h = 0.5;
  double p_in = 0.5;
  Tensor class_means;               // C x d
  double feature_std = 1.0;
  std::vector<double> class_prior;  // size C, sums to 1

  int n_classes() const { return class_means.rows(); }
  void validate() const;
};

struct HypothesisSet {
  std::vector<CsbmHypothesis> hypotheses;
  void validate() const;
};

// Exact transductive posterior predictive: enumerates every assignment of
// test labels per hypothesis in log space, conditioning on all observed
// evidence (features of every node, train labels, presence and absence of
// every edge). Cost is C^|test| per hypothesis; guarded at 2^22 states.
PpdMatrix exact_ppd(const Task& task, const HypothesisSet& hyps);

// Samples a task from the hypothesis mixture (the matching generative
// process for exact_ppd). Split fraction uniform over the given interval;
// test-class coverage enforced as in the synthetic prior.
Task sample_hypothesis_task(const HypothesisSet& hyps, int n_nodes, double split_lo, double split_hi,
                            Rng& rng);

// Majority train label (smallest index on ties) applied to every test node.
double majority_class_accuracy(const Task& task);

double ppd_accuracy(const PpdMatrix& ppd, const Task& task);

// Half L1 distance between PPD rows, averaged over test nodes.
double mean_total_variation(const PpdMatrix& a, const PpdMatrix& b);

}  // namespace nodepfn
