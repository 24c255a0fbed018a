#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "nodepfn/graph.hpp"
#include "nodepfn/tensor.hpp"

namespace nodepfn {

enum class FusionMode { parallel, sequential };

// Which layer branches participate; `mpnn_only` exists for the complexity
// measurements and is not reachable from the public config (use
// mpnn_enabled=false for the attention-only model).
enum class BranchMode { full, attention_only, mpnn_only };

struct ModelConfig {
  int d_embed = 512;
  int n_layers = 12;
  int n_heads = 4;
  double dropout = 0.0;
  int d_feat_max = 100;
  int max_classes = 20;
  FusionMode fusion_mode = FusionMode::parallel;
  bool mpnn_enabled = true;
  bool ffn_enabled = false;
  bool adjacency_self_loops = false;  // GCN-with-self-loops variant, off per Eq. 8

  int d_head() const { return d_embed / n_heads; }
  void validate() const;
};

struct AttentionHeadParams {
  Tensor w_q, w_k, w_v;  // each [d_head, d_embed]
};

struct LayerParams {
  std::vector<AttentionHeadParams> heads;
  Tensor w_o;                  // [d_embed, d_embed]
  Tensor w_m;                  // [d_embed, d_embed]; undefined when mpnn disabled
  Tensor ln_gamma, ln_beta;    // [d_embed]
  Tensor ffn_w1, ffn_w2;       // [4*d_embed, d_embed], [d_embed, 4*d_embed]; optional
  Tensor ffn_ln_gamma, ffn_ln_beta;
};

struct ModelParams {
  ModelConfig config;
  Tensor w_x;    // [d_embed, d_feat_max]
  Tensor w_y;    // [d_embed, max_classes]
  std::vector<LayerParams> layers;
  Tensor w_out;  // [max_classes, d_embed]

  // Visits every tensor in a fixed, checkpoint-stable order.
  void for_each(const std::function<void(const std::string&, Tensor&)>& fn);
  void for_each(const std::function<void(const std::string&, const Tensor&)>& fn) const;
  std::size_t parameter_count() const;
  void zero_grad();
};

// Scaled-uniform fan-in initialization; gamma=1, beta=0.
ModelParams init_params(const ModelConfig& cfg, Rng& rng);

// Sparse symmetric D^(-1/2) A D^(-1/2) in CSR form. Rows of isolated nodes
// are zero; no self-loops unless requested.
struct NormalizedAdjacency {
  int n = 0;
  std::vector<int> row_ptr;
  std::vector<int> col_idx;
  std::vector<real> values;

  real at(int i, int j) const;
  bool empty() const { return col_idx.empty(); }
};

NormalizedAdjacency normalize_adjacency(const Graph& g, bool self_loops = false);

// adj * x with gradient support (adjacency is constant).
Tensor spmm(const NormalizedAdjacency& adj, const Tensor& x, GradTape* tape = nullptr);

// Row-wise train/test membership of a task, in graph node order.
struct SplitInfo {
  std::vector<int> train_rows;  // ascending
  std::vector<int> test_rows;   // ascending
};

// H0: train rows get X*W_x^T + Y_onehot*W_y^T, test rows X*W_x^T only.
// Features may be natively sized (d <= d_feat_max); the matching leading
// columns of w_x are used. No bias terms anywhere.
Tensor embed(const Task& task, const ModelParams& params, GradTape* tape = nullptr);

struct ForwardOptions {
  BranchMode branch_mode = BranchMode::full;
  Rng* dropout_rng = nullptr;  // required when config.dropout > 0 and tape != nullptr
};

// Multi-head attention with the train rows as the only keys: train queries
// self-attend, test queries cross-attend, one code path.
Tensor attention_branch(const Tensor& h, const SplitInfo& split, const LayerParams& lp,
                        const ModelConfig& cfg, GradTape* tape = nullptr);

// GCN-style message passing: GELU(adj * h * W_m^T).
Tensor mpnn_branch(const Tensor& h, const NormalizedAdjacency& adj, const LayerParams& lp,
                   GradTape* tape = nullptr);

// One dual-branch block: masked multi-head attention where train rows are
// the only keys, GCN-style message passing over the normalized adjacency,
// fused through a residual layer norm.
Tensor dual_branch_layer(const Tensor& h, const NormalizedAdjacency& adj, const SplitInfo& split,
                         const LayerParams& lp, const ModelConfig& cfg, GradTape* tape = nullptr,
                         const ForwardOptions& opts = {});

// Full pass: embed, n_layers blocks, then logits for the test rows
// ([|test|, max_classes]). Downstream softmax is restricted to the task's
// first n_classes columns.
Tensor forward(const Task& task, const ModelParams& params, GradTape* tape = nullptr,
               const ForwardOptions& opts = {});

// PPD of the test rows: restricted softmax of forward logits over the
// task's class count.
Tensor forward_ppd(const Task& task, const ModelParams& params);

}  // namespace nodepfn
