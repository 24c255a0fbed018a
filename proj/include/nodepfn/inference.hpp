#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "nodepfn/model.hpp"

namespace nodepfn {

struct InferenceConfig {
  std::optional<int> n_components;  // truncated-SVD target width
  int smoothing_steps = 0;
  int ensemble_size = 32;
  uint64_t seed = 0;

  void validate(int d_feat_max) const;
};

// Per-test-node class distribution plus the mapping from canonical class
// index back to the caller's original labels.
struct PpdMatrix {
  Tensor probs;                  // |test| x C, rows sum to 1
  std::vector<int> class_labels; // canonical index -> original label

  std::vector<int> argmax_labels() const;  // in original label space
};

// Zero-pads feature columns to d_max and rescales every entry by d_max/d so
// the expected total feature magnitude is preserved.
Tensor pad_features(const Tensor& x, int d_max);

// Top-k left singular directions scaled by singular values (U_k * S_k).
// Randomized subspace iteration (oversampling 8, 4 power iterations) with a
// dense path when min(n, d) <= 64; the sign of each singular vector is fixed
// so its largest-magnitude entry is positive.
Tensor truncated_svd(const Tensor& x, int k, uint64_t seed = 0);

// `steps` rounds of self-plus-neighbor-sum aggregation, then per-column
// re-standardization.
Tensor smooth_features(const Tensor& x, const Graph& g, int steps);

// Distinct train labels in first-appearance order over train_ids.
struct LabelCanonicalization {
  std::vector<int> canonical_of;   // original label value -> canonical index (dense map)
  std::vector<int> original_of;    // canonical index -> original label value
  int n_classes = 0;
};
LabelCanonicalization canonicalize_labels(const std::vector<int>& train_labels);

// Seeded feature-column permutation of ensemble member `index`; odd members
// additionally apply the signed power transform x -> sign(x)|x|^0.9.
std::vector<int> member_permutation(uint64_t seed, int member_index, int d);
Tensor apply_member_transform(const Tensor& x, const std::vector<int>& perm, bool power_scale);

// Training-free prediction: canonicalize labels, smooth, reduce, pad, run
// the seeded ensemble of forward passes and average the restricted softmax
// outputs. Read-only with respect to params.
PpdMatrix predict(const Graph& g, const std::vector<int>& train_ids,
                  const std::vector<int>& train_labels, const ModelParams& params,
                  const InferenceConfig& icfg);

// Same pipeline evaluated on a labeled task (test ids from the task).
PpdMatrix predict_task(const Task& task, const ModelParams& params, const InferenceConfig& icfg);

}  // namespace nodepfn
