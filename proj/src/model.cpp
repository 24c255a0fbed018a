#include "nodepfn/model.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <string>

namespace nodepfn {

void ModelConfig::validate() const {
  if (d_embed < 1 || n_layers < 1 || n_heads < 1) throw ValidationError("model config: sizes must be positive");
  if (d_embed % n_heads != 0) throw ValidationError("model config: d_embed must be divisible by n_heads");
  if (max_classes < 1 || max_classes > 20) throw ValidationError("model config: max_classes must be in [1,20]");
  if (d_feat_max < 1) throw ValidationError("model config: d_feat_max must be >= 1");
  if (dropout < 0 || dropout >= 1) throw ValidationError("model config: dropout must be in [0,1)");
}

namespace {

Tensor fan_in_uniform(int rows, int cols, Rng& rng) {
  const real bound = static_cast<real>(1.0 / std::sqrt(static_cast<double>(cols)));
  return Tensor::uniform({rows, cols}, -bound, bound, rng, true);
}

}  // namespace

ModelParams init_params(const ModelConfig& cfg, Rng& rng) {
  cfg.validate();
  ModelParams p;
  p.config = cfg;
  p.w_x = fan_in_uniform(cfg.d_embed, cfg.d_feat_max, rng);
  p.w_y = fan_in_uniform(cfg.d_embed, cfg.max_classes, rng);
  p.layers.resize(static_cast<std::size_t>(cfg.n_layers));
  for (LayerParams& lp : p.layers) {
    lp.heads.resize(static_cast<std::size_t>(cfg.n_heads));
    for (AttentionHeadParams& h : lp.heads) {
      h.w_q = fan_in_uniform(cfg.d_head(), cfg.d_embed, rng);
      h.w_k = fan_in_uniform(cfg.d_head(), cfg.d_embed, rng);
      h.w_v = fan_in_uniform(cfg.d_head(), cfg.d_embed, rng);
    }
    lp.w_o = fan_in_uniform(cfg.d_embed, cfg.d_embed, rng);
    if (cfg.mpnn_enabled) lp.w_m = fan_in_uniform(cfg.d_embed, cfg.d_embed, rng);
    lp.ln_gamma = Tensor::from({cfg.d_embed}, std::vector<real>(cfg.d_embed, real(1)), true);
    lp.ln_beta = Tensor::zeros({cfg.d_embed}, true);
    if (cfg.ffn_enabled) {
      lp.ffn_w1 = fan_in_uniform(4 * cfg.d_embed, cfg.d_embed, rng);
      lp.ffn_w2 = fan_in_uniform(cfg.d_embed, 4 * cfg.d_embed, rng);
      lp.ffn_ln_gamma = Tensor::from({cfg.d_embed}, std::vector<real>(cfg.d_embed, real(1)), true);
      lp.ffn_ln_beta = Tensor::zeros({cfg.d_embed}, true);
    }
  }
  p.w_out = fan_in_uniform(cfg.max_classes, cfg.d_embed, rng);
  return p;
}

void ModelParams::for_each(const std::function<void(const std::string&, Tensor&)>& fn) {
  fn("w_x", w_x);
  fn("w_y", w_y);
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const std::string base = "layers." + std::to_string(l) + ".";
    LayerParams& lp = layers[l];
    for (std::size_t h = 0; h < lp.heads.size(); ++h) {
      const std::string hb = base + "heads." + std::to_string(h) + ".";
      fn(hb + "w_q", lp.heads[h].w_q);
      fn(hb + "w_k", lp.heads[h].w_k);
      fn(hb + "w_v", lp.heads[h].w_v);
    }
    fn(base + "w_o", lp.w_o);
    if (lp.w_m.defined()) fn(base + "w_m", lp.w_m);
    fn(base + "ln_gamma", lp.ln_gamma);
    fn(base + "ln_beta", lp.ln_beta);
    if (lp.ffn_w1.defined()) {
      fn(base + "ffn_w1", lp.ffn_w1);
      fn(base + "ffn_w2", lp.ffn_w2);
      fn(base + "ffn_ln_gamma", lp.ffn_ln_gamma);
      fn(base + "ffn_ln_beta", lp.ffn_ln_beta);
    }
  }
  fn("w_out", w_out);
}

void ModelParams::for_each(const std::function<void(const std::string&, const Tensor&)>& fn) const {
  const_cast<ModelParams*>(this)->for_each(
      [&fn](const std::string& name, Tensor& t) { fn(name, t); });
}

std::size_t ModelParams::parameter_count() const {
  std::size_t n = 0;
  for_each([&n](const std::string&, const Tensor& t) { n += t.size(); });
  return n;
}

void ModelParams::zero_grad() {
  for_each([](const std::string&, Tensor& t) { t.zero_grad(); });
}

// ---- adjacency ---------------------------------------------------------------

real NormalizedAdjacency::at(int i, int j) const {
  for (int k = row_ptr[i]; k < row_ptr[i + 1]; ++k)
    if (col_idx[k] == j) return values[k];
  return real(0);
}

NormalizedAdjacency normalize_adjacency(const Graph& g, bool self_loops) {
  std::vector<int> deg(static_cast<std::size_t>(g.n), self_loops ? 1 : 0);
  for (const auto& [u, v] : g.edges) {
    ++deg[u];
    ++deg[v];
  }
  NormalizedAdjacency adj;
  adj.n = g.n;
  adj.row_ptr.assign(static_cast<std::size_t>(g.n) + 1, 0);
  for (const auto& [u, v] : g.edges) {
    ++adj.row_ptr[u + 1];
    ++adj.row_ptr[v + 1];
  }
  if (self_loops)
    for (int i = 0; i < g.n; ++i) ++adj.row_ptr[i + 1];
  for (int i = 0; i < g.n; ++i) adj.row_ptr[i + 1] += adj.row_ptr[i];
  adj.col_idx.resize(static_cast<std::size_t>(adj.row_ptr[g.n]));
  adj.values.resize(adj.col_idx.size());
  std::vector<int> cursor(adj.row_ptr.begin(), adj.row_ptr.end() - 1);
  auto push = [&](int i, int j) {
    const real w = static_cast<real>(1.0 / std::sqrt(static_cast<double>(deg[i]) * deg[j]));
    adj.col_idx[cursor[i]] = j;
    adj.values[cursor[i]++] = w;
  };
  for (const auto& [u, v] : g.edges) {
    push(u, v);
    push(v, u);
  }
  if (self_loops)
    for (int i = 0; i < g.n; ++i) push(i, i);
  // canonical column order within each row
  for (int i = 0; i < g.n; ++i) {
    std::vector<std::pair<int, real>> row;
    for (int k = adj.row_ptr[i]; k < adj.row_ptr[i + 1]; ++k) row.emplace_back(adj.col_idx[k], adj.values[k]);
    std::sort(row.begin(), row.end());
    for (int k = adj.row_ptr[i]; k < adj.row_ptr[i + 1]; ++k) {
      adj.col_idx[k] = row[k - adj.row_ptr[i]].first;
      adj.values[k] = row[k - adj.row_ptr[i]].second;
    }
  }
  return adj;
}

namespace {

void spmm_accumulate(const NormalizedAdjacency& adj, std::span<const real> in, std::span<real> acc,
                     int d) {
  const int n = adj.n;
#pragma omp parallel for schedule(static)
  for (int i = 0; i < n; ++i) {
    real* orow = acc.data() + static_cast<std::size_t>(i) * d;
    for (int k = adj.row_ptr[i]; k < adj.row_ptr[i + 1]; ++k) {
      const real w = adj.values[k];
      const real* src = in.data() + static_cast<std::size_t>(adj.col_idx[k]) * d;
      for (int j = 0; j < d; ++j) orow[j] += w * src[j];
    }
  }
}

}  // namespace

Tensor spmm(const NormalizedAdjacency& adj, const Tensor& x, GradTape* tape) {
  if (x.rows() != adj.n) throw ValidationError("spmm: row count mismatch");
  const int n = adj.n, d = x.cols();
  Tensor out = Tensor::zeros({n, d}, x.requires_grad());
  spmm_accumulate(adj, x.values(), out.values_mut(), d);
  ensure_all_finite(out.values(), "spmm");
  if (tape && out.requires_grad()) {
    // the tape entry may outlive the caller's adjacency, so own a copy
    auto held = std::make_shared<NormalizedAdjacency>(adj);
    Tensor xc = x, oc = out;
    tape->record("spmm", [xc, oc, held, d]() mutable {
      const auto go = oc.grad();
      if (go.empty()) return;
      spmm_accumulate(*held, go, xc.grad_mut(), d);  // adjacency is symmetric
    });
  }
  return out;
}

// ---- forward ---------------------------------------------------------------

namespace {

// Row order follows the task's id lists, so output logits align with
// task.test_ids as given.
SplitInfo make_split(const Task& task) {
  return SplitInfo{task.train_ids, task.test_ids};
}

}  // namespace

Tensor attention_branch(const Tensor& h, const SplitInfo& split, const LayerParams& lp,
                        const ModelConfig& cfg, GradTape* tape) {
  if (split.train_rows.empty()) throw ValidationError("attention: empty train split");
  Tensor h_train = gather_rows(h, split.train_rows, tape);
  const real inv_sqrt_dh = static_cast<real>(1.0 / std::sqrt(static_cast<double>(cfg.d_head())));
  std::vector<Tensor> head_outputs;
  head_outputs.reserve(lp.heads.size());
  for (const AttentionHeadParams& head : lp.heads) {
    Tensor q = matmul_nt(h, head.w_q, tape);              // [n, d_head]
    Tensor k = matmul_nt(h_train, head.w_k, tape);        // [n_train, d_head]
    Tensor v = matmul_nt(h_train, head.w_v, tape);        // [n_train, d_head]
    Tensor scores = scale(matmul_nt(q, k, tape), inv_sqrt_dh, tape);
    Tensor attn = softmax_rows(scores, tape);
    head_outputs.push_back(matmul(attn, v, tape));
  }
  Tensor merged = concat_cols(head_outputs, tape);
  return matmul_nt(merged, lp.w_o, tape);
}

Tensor mpnn_branch(const Tensor& h, const NormalizedAdjacency& adj, const LayerParams& lp,
                   GradTape* tape) {
  Tensor agg = spmm(adj, h, tape);
  return gelu(matmul_nt(agg, lp.w_m, tape), tape);
}

namespace {

Tensor maybe_dropout(Tensor t, const ModelConfig& cfg, GradTape* tape, const ForwardOptions& opts) {
  if (cfg.dropout <= 0) return t;
  if (!opts.dropout_rng) {
    if (tape) throw ValidationError("forward: dropout > 0 requires a dropout rng during training");
    return t;  // inference runs without dropout
  }
  return dropout(t, static_cast<real>(cfg.dropout), *opts.dropout_rng, tape);
}

Tensor ffn_sublayer(const Tensor& h, const LayerParams& lp, const ModelConfig& cfg, GradTape* tape,
                    const ForwardOptions& opts) {
  Tensor mid = gelu(matmul_nt(h, lp.ffn_w1, tape), tape);
  Tensor out = maybe_dropout(matmul_nt(mid, lp.ffn_w2, tape), cfg, tape, opts);
  return layer_norm(add(h, out, tape), lp.ffn_ln_gamma, lp.ffn_ln_beta, tape);
}

}  // namespace

Tensor dual_branch_layer(const Tensor& h, const NormalizedAdjacency& adj, const SplitInfo& split,
                         const LayerParams& lp, const ModelConfig& cfg, GradTape* tape,
                         const ForwardOptions& opts) {
  const bool use_attn = opts.branch_mode != BranchMode::mpnn_only;
  const bool use_mpnn = cfg.mpnn_enabled && opts.branch_mode != BranchMode::attention_only;
  Tensor fused;
  if (cfg.fusion_mode == FusionMode::parallel || !(use_attn && use_mpnn)) {
    Tensor acc = h;
    if (use_attn) acc = add(acc, maybe_dropout(attention_branch(h, split, lp, cfg, tape), cfg, tape, opts), tape);
    if (use_mpnn) acc = add(acc, maybe_dropout(mpnn_branch(h, adj, lp, tape), cfg, tape, opts), tape);
    fused = layer_norm(acc, lp.ln_gamma, lp.ln_beta, tape);
  } else {
    // sequential ablation: attention stage, then message passing, each with
    // its own residual; layer-norm parameters are shared across the stages
    Tensor stage1 = layer_norm(
        add(h, maybe_dropout(attention_branch(h, split, lp, cfg, tape), cfg, tape, opts), tape),
        lp.ln_gamma, lp.ln_beta, tape);
    fused = layer_norm(
        add(stage1, maybe_dropout(mpnn_branch(stage1, adj, lp, tape), cfg, tape, opts), tape),
        lp.ln_gamma, lp.ln_beta, tape);
  }
  if (cfg.ffn_enabled) fused = ffn_sublayer(fused, lp, cfg, tape, opts);
  return fused;
}

Tensor embed(const Task& task, const ModelParams& params, GradTape* tape) {
  const ModelConfig& cfg = params.config;
  const Graph& g = task.graph;
  const int d = g.feature_dim();
  if (d > cfg.d_feat_max) throw ValidationError("embed: feature width exceeds model capacity");
  if (g.n_classes > cfg.max_classes) throw ValidationError("embed: class count exceeds model capacity");
  Tensor w_x_used = d == cfg.d_feat_max ? params.w_x : slice_cols(params.w_x, 0, d, tape);
  Tensor h = matmul_nt(g.x, w_x_used, tape);

  // One-hot label rows for train nodes, zero rows for test nodes; the label
  // embedding is added in, never concatenated.
  Tensor y_onehot = Tensor::zeros({g.n, cfg.max_classes});
  for (int id : task.train_ids) {
    const int label = g.y[id];
    if (label < 0 || label >= g.n_classes) throw ValidationError("embed: train label out of range");
    y_onehot(id, label) = real(1);
  }
  return add(h, matmul_nt(y_onehot, params.w_y, tape), tape);
}

Tensor forward(const Task& task, const ModelParams& params, GradTape* tape, const ForwardOptions& opts) {
  task.validate_split();
  const ModelConfig& cfg = params.config;
  const SplitInfo split = make_split(task);
  const NormalizedAdjacency adj = normalize_adjacency(task.graph, cfg.adjacency_self_loops);
  Tensor h = embed(task, params, tape);
  for (const LayerParams& lp : params.layers) h = dual_branch_layer(h, adj, split, lp, cfg, tape, opts);
  Tensor h_test = gather_rows(h, split.test_rows, tape);
  return matmul_nt(h_test, params.w_out, tape);
}

Tensor forward_ppd(const Task& task, const ModelParams& params) {
  Tensor logits = forward(task, params);
  Tensor restricted = slice_cols(logits, 0, task.graph.n_classes);
  return softmax_rows(restricted);
}

}  // namespace nodepfn
