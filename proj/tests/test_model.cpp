#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "nodepfn/model.hpp"
#include "nodepfn/prior.hpp"
#include "test_support.hpp"

using namespace nodepfn;

namespace {

Task random_task(int n, int n_classes, int d, uint64_t seed, double edge_p = 0.2) {
  Rng rng(seed);
  Task task;
  task.graph.n = n;
  task.graph.n_classes = n_classes;
  task.graph.x = test_support::random_tensor({n, d}, rng);
  task.graph.y.resize(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) task.graph.y[i] = static_cast<int>(rng.uniform_int(static_cast<uint64_t>(n_classes)));
  // ensure every class appears among train nodes
  for (int c = 0; c < n_classes; ++c) task.graph.y[c] = c;
  task.graph.edges = sample_er_edges(n, edge_p, rng);
  const int k = std::max(n_classes, n / 2);
  for (int i = 0; i < n; ++i) (i < k ? task.train_ids : task.test_ids).push_back(i);
  task.validate();
  return task;
}

// Slow reference: explicit per-head loops in double precision, fully
// independent of the tensor kernels.
struct SlowLayerResult {
  std::vector<std::vector<double>> attn_weights_per_head;  // [head][row * n_train + j]
  std::vector<double> attn_out;                            // n x d
  std::vector<double> mpnn_out;                            // n x d
  std::vector<double> fused;                               // n x d
};

SlowLayerResult slow_dual_branch(const Tensor& h, const Graph& g, const std::vector<int>& train_rows,
                                 const LayerParams& lp, const ModelConfig& cfg) {
  const int n = h.rows(), d = cfg.d_embed, dh = cfg.d_head(), n_train = static_cast<int>(train_rows.size());
  SlowLayerResult result;
  std::vector<double> merged(static_cast<std::size_t>(n) * d, 0.0);
  for (int head = 0; head < cfg.n_heads; ++head) {
    const AttentionHeadParams& hp = lp.heads[head];
    auto project = [&](int row, const Tensor& w, int out_dim, std::vector<double>& dst) {
      for (int o = 0; o < out_dim; ++o) {
        double acc = 0;
        for (int c = 0; c < d; ++c) acc += static_cast<double>(w(o, c)) * h(row, c);
        dst[o] = acc;
      }
    };
    std::vector<double> weights(static_cast<std::size_t>(n) * n_train);
    std::vector<double> q(dh), k(dh), v(dh);
    for (int row = 0; row < n; ++row) {
      project(row, hp.w_q, dh, q);
      std::vector<double> scores(n_train);
      for (int j = 0; j < n_train; ++j) {
        project(train_rows[j], hp.w_k, dh, k);
        double dot = 0;
        for (int c = 0; c < dh; ++c) dot += q[c] * k[c];
        scores[j] = dot / std::sqrt(static_cast<double>(dh));
      }
      const double mx = *std::max_element(scores.begin(), scores.end());
      double z = 0;
      for (double& s : scores) {
        s = std::exp(s - mx);
        z += s;
      }
      for (int j = 0; j < n_train; ++j) weights[static_cast<std::size_t>(row) * n_train + j] = scores[j] / z;
      for (int c = 0; c < dh; ++c) {
        double acc = 0;
        for (int j = 0; j < n_train; ++j) {
          project(train_rows[j], hp.w_v, dh, v);
          acc += weights[static_cast<std::size_t>(row) * n_train + j] * v[c];
        }
        merged[static_cast<std::size_t>(row) * d + head * dh + c] = acc;
      }
    }
    result.attn_weights_per_head.push_back(std::move(weights));
  }
  result.attn_out.assign(static_cast<std::size_t>(n) * d, 0.0);
  for (int row = 0; row < n; ++row)
    for (int o = 0; o < d; ++o) {
      double acc = 0;
      for (int c = 0; c < d; ++c) acc += static_cast<double>(lp.w_o(o, c)) * merged[static_cast<std::size_t>(row) * d + c];
      result.attn_out[static_cast<std::size_t>(row) * d + o] = acc;
    }

  // mpnn: normalized adjacency aggregation then W_m then gelu
  std::vector<int> deg(static_cast<std::size_t>(n), 0);
  for (const auto& [u, v2] : g.edges) {
    ++deg[u];
    ++deg[v2];
  }
  std::vector<double> agg(static_cast<std::size_t>(n) * d, 0.0);
  for (const auto& [u, v2] : g.edges) {
    const double w = 1.0 / std::sqrt(static_cast<double>(deg[u]) * deg[v2]);
    for (int c = 0; c < d; ++c) {
      agg[static_cast<std::size_t>(u) * d + c] += w * h(v2, c);
      agg[static_cast<std::size_t>(v2) * d + c] += w * h(u, c);
    }
  }
  result.mpnn_out.assign(static_cast<std::size_t>(n) * d, 0.0);
  if (cfg.mpnn_enabled) {
    for (int row = 0; row < n; ++row)
      for (int o = 0; o < d; ++o) {
        double acc = 0;
        for (int c = 0; c < d; ++c) acc += static_cast<double>(lp.w_m(o, c)) * agg[static_cast<std::size_t>(row) * d + c];
        result.mpnn_out[static_cast<std::size_t>(row) * d + o] =
            0.5 * acc * (1.0 + std::erf(acc / std::sqrt(2.0)));
      }
  }

  result.fused.assign(static_cast<std::size_t>(n) * d, 0.0);
  for (int row = 0; row < n; ++row) {
    std::vector<double> pre(static_cast<std::size_t>(d));
    for (int c = 0; c < d; ++c)
      pre[c] = h(row, c) + result.attn_out[static_cast<std::size_t>(row) * d + c] +
               result.mpnn_out[static_cast<std::size_t>(row) * d + c];
    double mu = std::accumulate(pre.begin(), pre.end(), 0.0) / d;
    double var = 0;
    for (double p : pre) var += (p - mu) * (p - mu);
    var /= d;
    const double inv = 1.0 / std::sqrt(var + 1e-5);
    for (int c = 0; c < d; ++c)
      result.fused[static_cast<std::size_t>(row) * d + c] =
          static_cast<double>(lp.ln_gamma.values()[c]) * (pre[c] - mu) * inv +
          static_cast<double>(lp.ln_beta.values()[c]);
  }
  return result;
}

ModelConfig small_config(int d_embed = 16, int n_layers = 2, int d_feat = 6, int max_classes = 4) {
  ModelConfig cfg;
  cfg.d_embed = d_embed;
  cfg.n_layers = n_layers;
  cfg.n_heads = 4;
  cfg.d_feat_max = d_feat;
  cfg.max_classes = max_classes;
  return cfg;
}

}  // namespace

TEST_CASE("normalize_adjacency: unit degrees, triangle, isolated node") {
  Graph pair;
  pair.n = 2;
  pair.n_classes = 1;
  pair.y = {0, 0};
  pair.edges = {{0, 1}};
  NormalizedAdjacency adj = normalize_adjacency(pair);
  CHECK(adj.at(0, 1) == doctest::Approx(1.0));
  CHECK(adj.at(1, 0) == doctest::Approx(1.0));
  CHECK(adj.at(0, 0) == doctest::Approx(0.0));

  Graph tri;
  tri.n = 3;
  tri.n_classes = 1;
  tri.y = {0, 0, 0};
  tri.edges = {{0, 1}, {0, 2}, {1, 2}};
  NormalizedAdjacency a2 = normalize_adjacency(tri);
  for (const auto& [i, j] : std::vector<std::pair<int, int>>{{0, 1}, {0, 2}, {1, 2}}) {
    CHECK(a2.at(i, j) == doctest::Approx(0.5));
    CHECK(a2.at(j, i) == doctest::Approx(0.5));
  }

  Graph iso;
  iso.n = 3;
  iso.n_classes = 1;
  iso.y = {0, 0, 0};
  iso.edges = {{0, 1}};
  NormalizedAdjacency a3 = normalize_adjacency(iso);
  for (int j = 0; j < 3; ++j) {
    CHECK(a3.at(2, j) == doctest::Approx(0.0));
    CHECK(a3.at(j, 2) == doctest::Approx(0.0));
  }

  // symmetry within 1e-12 on a random graph
  Rng rng(3);
  Graph rand_g;
  rand_g.n = 40;
  rand_g.n_classes = 1;
  rand_g.y.assign(40, 0);
  rand_g.edges = sample_er_edges(40, 0.2, rng);
  NormalizedAdjacency a4 = normalize_adjacency(rand_g);
  for (int i = 0; i < 40; ++i)
    for (int j = 0; j < 40; ++j) CHECK(std::abs(a4.at(i, j) - a4.at(j, i)) < 1e-12);

  // self-loop variant adds diagonal mass
  NormalizedAdjacency a5 = normalize_adjacency(pair, true);
  CHECK(a5.at(0, 0) == doctest::Approx(0.5));
  CHECK(a5.at(0, 1) == doctest::Approx(0.5));
}

TEST_CASE("embed: zero test row, label column difference, direct recomputation") {
  ModelConfig cfg = small_config();
  Rng rng(5);
  ModelParams params = init_params(cfg, rng);

  Task task = random_task(6, 3, cfg.d_feat_max, 7);
  // force node 5 into the test split with zero features
  for (int j = 0; j < cfg.d_feat_max; ++j) task.graph.x(5, j) = 0;
  Tensor h0 = embed(task, params);
  for (int c = 0; c < cfg.d_embed; ++c) CHECK(h0(5, c) == doctest::Approx(0.0));  // no bias anywhere

  // same features as train (label c) vs as test: difference = column c of W_Y
  Task as_train = task;
  const int probe = task.train_ids.front();
  const int label = task.graph.y[probe];
  Task as_test = task;
  as_test.train_ids.erase(as_test.train_ids.begin());
  as_test.test_ids.push_back(probe);
  Tensor h_train = embed(as_train, params);
  Tensor h_test = embed(as_test, params);
  for (int c = 0; c < cfg.d_embed; ++c)
    CHECK(h_train(probe, c) - h_test(probe, c) == doctest::Approx(params.w_y(c, label)).epsilon(1e-9));

  // random case matches a direct double-loop recomputation
  const int d = task.graph.feature_dim();
  for (int i = 0; i < task.graph.n; ++i) {
    const bool is_train = std::find(task.train_ids.begin(), task.train_ids.end(), i) != task.train_ids.end();
    for (int c = 0; c < cfg.d_embed; ++c) {
      double expected = 0;
      for (int j = 0; j < d; ++j) expected += static_cast<double>(params.w_x(c, j)) * task.graph.x(i, j);
      if (is_train) expected += static_cast<double>(params.w_y(c, task.graph.y[i]));
      CHECK(std::abs(h0(i, c) - expected) < 1e-10);
    }
  }
}

TEST_CASE("dual_branch_layer matches the slow per-head reference") {
  for (bool mpnn : {true, false}) {
    ModelConfig cfg = small_config();
    cfg.mpnn_enabled = mpnn;
    Rng rng(11);
    ModelParams params = init_params(cfg, rng);
    Task task = random_task(8, 2, cfg.d_feat_max, 13, 0.4);
    Tensor h = embed(task, params);
    NormalizedAdjacency adj = normalize_adjacency(task.graph);
    SplitInfo split{task.train_ids, task.test_ids};
    Tensor fast = dual_branch_layer(h, adj, split, params.layers[0], cfg);
    SlowLayerResult slow = slow_dual_branch(h, task.graph, task.train_ids, params.layers[0], cfg);
    for (std::size_t i = 0; i < fast.size(); ++i)
      CHECK(std::abs(static_cast<double>(fast.values()[i]) - slow.fused[i]) < 1e-10);
  }
}

TEST_CASE("attention weights on an edgeless graph are convex per head") {
  ModelConfig cfg = small_config();
  Rng rng(17);
  ModelParams params = init_params(cfg, rng);
  Task task = random_task(7, 2, cfg.d_feat_max, 19, 0.0);
  CHECK(task.graph.edges.empty());
  Tensor h = embed(task, params);
  SlowLayerResult slow = slow_dual_branch(h, task.graph, task.train_ids, params.layers[0], cfg);
  const int n_train = static_cast<int>(task.train_ids.size());
  for (const auto& weights : slow.attn_weights_per_head) {
    for (int row = 0; row < task.graph.n; ++row) {
      double sum = 0;
      for (int j = 0; j < n_train; ++j) {
        const double w = weights[static_cast<std::size_t>(row) * n_train + j];
        CHECK(w >= 0.0);
        sum += w;
      }
      CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
    }
  }
  // and the fast path agrees with the reference on the edgeless graph, where
  // the mpnn branch contributes exactly zero
  NormalizedAdjacency adj = normalize_adjacency(task.graph);
  SplitInfo split{task.train_ids, task.test_ids};
  Tensor with_mpnn = dual_branch_layer(h, adj, split, params.layers[0], cfg);
  ForwardOptions attn_only;
  attn_only.branch_mode = BranchMode::attention_only;
  Tensor without = dual_branch_layer(h, adj, split, params.layers[0], cfg, nullptr, attn_only);
  CHECK(max_abs_diff(with_mpnn, without) == doctest::Approx(0.0));
}

TEST_CASE("single train node: attention output is that node's value projection") {
  ModelConfig cfg = small_config();
  Rng rng(23);
  ModelParams params = init_params(cfg, rng);
  Task task = random_task(5, 1, cfg.d_feat_max, 29);
  task.train_ids = {2};
  task.test_ids = {0, 1, 3, 4};
  task.graph.n_classes = 1;
  for (int& label : task.graph.y) label = 0;
  Tensor h = embed(task, params);
  SplitInfo split{task.train_ids, task.test_ids};
  Tensor attn = attention_branch(h, split, params.layers[0], cfg);
  // expected: concat over heads of W_V h_2, then W_O; identical for all rows
  for (int row = 1; row < 5; ++row)
    for (int c = 0; c < cfg.d_embed; ++c) CHECK(attn(row, c) == doctest::Approx(attn(0, c)).epsilon(1e-9));
  const LayerParams& lp = params.layers[0];
  std::vector<double> merged(static_cast<std::size_t>(cfg.d_embed));
  for (int head = 0; head < cfg.n_heads; ++head)
    for (int o = 0; o < cfg.d_head(); ++o) {
      double acc = 0;
      for (int c = 0; c < cfg.d_embed; ++c) acc += static_cast<double>(lp.heads[head].w_v(o, c)) * h(2, c);
      merged[static_cast<std::size_t>(head * cfg.d_head() + o)] = acc;
    }
  for (int o = 0; o < cfg.d_embed; ++o) {
    double acc = 0;
    for (int c = 0; c < cfg.d_embed; ++c) acc += static_cast<double>(lp.w_o(o, c)) * merged[c];
    CHECK(attn(0, o) == doctest::Approx(acc).epsilon(1e-9));
  }
}

TEST_CASE("forward: permutation equivariance") {
  ModelConfig cfg = small_config(16, 2, 5, 4);
  Rng rng(31);
  ModelParams params = init_params(cfg, rng);
  for (uint64_t seed = 0; seed < 5; ++seed) {
    Task task = random_task(10, 3, 5, 100 + seed, 0.3);
    Tensor base = forward(task, params);

    // random node permutation applied jointly to features, labels, edges, splits
    Rng perm_rng(seed);
    std::vector<int> perm(static_cast<std::size_t>(task.graph.n));
    std::iota(perm.begin(), perm.end(), 0);
    perm_rng.shuffle(perm);  // perm[old] = new id
    Task permuted;
    permuted.graph.n = task.graph.n;
    permuted.graph.n_classes = task.graph.n_classes;
    permuted.graph.x = Tensor::zeros({task.graph.n, 5});
    permuted.graph.y.resize(static_cast<std::size_t>(task.graph.n));
    for (int i = 0; i < task.graph.n; ++i) {
      for (int j = 0; j < 5; ++j) permuted.graph.x(perm[i], j) = task.graph.x(i, j);
      permuted.graph.y[perm[i]] = task.graph.y[i];
    }
    for (const auto& [u, v] : task.graph.edges) permuted.graph.edges.emplace_back(perm[u], perm[v]);
    canonicalize_edges(permuted.graph.edges, permuted.graph.n);
    for (int id : task.train_ids) permuted.train_ids.push_back(perm[id]);
    for (int id : task.test_ids) permuted.test_ids.push_back(perm[id]);
    Tensor out = forward(permuted, params);

    // rows of `out` follow permuted.test_ids, which are perm[task.test_ids]
    for (std::size_t r = 0; r < task.test_ids.size(); ++r)
      for (int c = 0; c < cfg.max_classes; ++c)
        CHECK(std::abs(out(static_cast<int>(r), c) - base(static_cast<int>(r), c)) < 1e-5);
  }
}

TEST_CASE("forward: deleting a test node leaves others unchanged when mpnn is off") {
  ModelConfig cfg = small_config(16, 3, 5, 4);
  cfg.mpnn_enabled = false;
  Rng rng(37);
  ModelParams params = init_params(cfg, rng);
  Task task = random_task(9, 3, 5, 41, 0.0);
  Tensor base = forward(task, params);

  const int victim = task.test_ids[1];
  Task smaller;
  smaller.graph.n = task.graph.n - 1;
  smaller.graph.n_classes = task.graph.n_classes;
  smaller.graph.x = Tensor::zeros({smaller.graph.n, 5});
  std::vector<int> remap(static_cast<std::size_t>(task.graph.n), -1);
  int next = 0;
  for (int i = 0; i < task.graph.n; ++i) {
    if (i == victim) continue;
    remap[i] = next;
    for (int j = 0; j < 5; ++j) smaller.graph.x(next, j) = task.graph.x(i, j);
    smaller.graph.y.push_back(task.graph.y[i]);
    ++next;
  }
  for (int id : task.train_ids) smaller.train_ids.push_back(remap[id]);
  for (int id : task.test_ids)
    if (id != victim) smaller.test_ids.push_back(remap[id]);
  Tensor out = forward(smaller, params);

  int out_row = 0;
  for (std::size_t r = 0; r < task.test_ids.size(); ++r) {
    if (task.test_ids[r] == victim) continue;
    for (int c = 0; c < cfg.max_classes; ++c)
      CHECK(std::abs(out(out_row, c) - base(static_cast<int>(r), c)) < 1e-6);
    ++out_row;
  }
}

TEST_CASE("forward: relabeling classes permutes output columns") {
  ModelConfig cfg = small_config(16, 2, 5, 4);
  Rng rng(43);
  ModelParams params = init_params(cfg, rng);
  Task task = random_task(10, 3, 5, 47, 0.3);
  Tensor base = forward(task, params);

  const std::vector<int> pi = {2, 0, 1};  // class c -> pi[c]
  Task relabeled = task;
  for (int& label : relabeled.graph.y) label = pi[label];
  ModelParams permuted = params;
  permuted.w_y = params.w_y.clone();
  permuted.w_out = params.w_out.clone();
  for (int c = 0; c < 3; ++c) {
    for (int r = 0; r < cfg.d_embed; ++r) permuted.w_y(r, pi[c]) = params.w_y(r, c);
    for (int r = 0; r < cfg.d_embed; ++r) permuted.w_out(pi[c], r) = params.w_out(c, r);
  }
  Tensor out = forward(relabeled, permuted);
  for (int r = 0; r < base.rows(); ++r)
    for (int c = 0; c < 3; ++c)
      CHECK(std::abs(out(r, pi[c]) - base(r, c)) < 1e-9);
}

TEST_CASE("gradients of test logits w.r.t. other test features are zero (mpnn off)") {
  ModelConfig cfg = small_config(16, 2, 5, 4);
  cfg.mpnn_enabled = false;
  Rng rng(53);
  ModelParams params = init_params(cfg, rng);
  Task task = random_task(8, 2, 5, 59, 0.5);
  task.graph.x.set_requires_grad(true);

  GradTape tape;
  Tensor logits = forward(task, params, &tape);
  // loss: sum of the first test row's logits
  Tensor first_row = gather_rows(logits, {0}, &tape);
  Tensor loss = sum_all(first_row, &tape);
  backward(loss, tape);

  const auto grad = task.graph.x.grad();
  const int d = task.graph.feature_dim();
  for (std::size_t r = 1; r < task.test_ids.size(); ++r) {
    const int node = task.test_ids[r];
    for (int j = 0; j < d; ++j)
      CHECK(grad[static_cast<std::size_t>(node) * d + j] == real(0));
  }
  // train features do influence the prediction
  double train_grad_mass = 0;
  for (int id : task.train_ids)
    for (int j = 0; j < d; ++j) train_grad_mass += std::abs(grad[static_cast<std::size_t>(id) * d + j]);
  CHECK(train_grad_mass > 0);
}

TEST_CASE("forward shape contract across n, C, d") {
  ModelConfig cfg = small_config(16, 2, 8, 6);
  Rng rng(61);
  ModelParams params = init_params(cfg, rng);
  for (int n : {2, 5, 17}) {
    for (int c : {1, 3, 6}) {
      for (int d : {1, 4, 8}) {
        if (c >= n) continue;
        Task task = random_task(n, c, d, static_cast<uint64_t>(n * 100 + c * 10 + d), 0.3);
        Tensor logits = forward(task, params);
        CHECK(logits.rows() == static_cast<int>(task.test_ids.size()));
        CHECK(logits.cols() == cfg.max_classes);
        Tensor ppd = forward_ppd(task, params);
        CHECK(ppd.cols() == c);
        for (int i = 0; i < ppd.rows(); ++i) {
          real sum = 0;
          for (int j = 0; j < c; ++j) sum += ppd(i, j);
          CHECK(std::abs(sum - real(1)) < 1e-9);
        }
      }
    }
  }
}

TEST_CASE("fusion modes and ffn variant run and differ") {
  ModelConfig cfg = small_config();
  Rng rng(67);
  ModelParams parallel_params = init_params(cfg, rng);
  Task task = random_task(8, 2, cfg.d_feat_max, 71, 0.4);
  Tensor base = forward(task, parallel_params);

  ModelConfig seq_cfg = cfg;
  seq_cfg.fusion_mode = FusionMode::sequential;
  ModelParams seq_params = parallel_params;
  seq_params.config = seq_cfg;
  Tensor seq_out = forward(task, seq_params);
  CHECK(max_abs_diff(base, seq_out) > 1e-8);

  ModelConfig ffn_cfg = cfg;
  ffn_cfg.ffn_enabled = true;
  Rng rng2(73);
  ModelParams ffn_params = init_params(ffn_cfg, rng2);
  Tensor ffn_out = forward(task, ffn_params);
  CHECK(ffn_out.rows() == static_cast<int>(task.test_ids.size()));
}

TEST_CASE("model config validation and named parameter walk") {
  ModelConfig bad = small_config();
  bad.d_embed = 15;  // not divisible by 4 heads
  CHECK_THROWS_AS(bad.validate(), ValidationError);

  ModelConfig cfg = small_config();
  Rng rng(79);
  ModelParams params = init_params(cfg, rng);
  std::vector<std::string> names;
  params.for_each([&names](const std::string& name, Tensor&) { names.push_back(name); });
  CHECK(names.front() == "w_x");
  CHECK(names.back() == "w_out");
  CHECK(std::count(names.begin(), names.end(), "layers.0.heads.0.w_q") == 1);
  CHECK(std::count(names.begin(), names.end(), "layers.1.w_m") == 1);

  // identical seeds give identical parameters
  Rng rng_a(81), rng_b(81);
  ModelParams a = init_params(cfg, rng_a), b = init_params(cfg, rng_b);
  bool equal = true;
  a.for_each([&](const std::string& name, Tensor& t) {
    b.for_each([&](const std::string& name2, Tensor& t2) {
      if (name == name2 && max_abs_diff(t, t2) != 0) equal = false;
    });
  });
  CHECK(equal);
}
