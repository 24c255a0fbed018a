#include "nodepfn/prior.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace nodepfn {

namespace {

void require_interval(const Interval& iv, double lo, double hi, const char* name) {
  if (!(iv.lo <= iv.hi) || iv.lo < lo || iv.hi > hi)
    throw ValidationError(std::string("prior config: bad range for ") + name);
}

int clamp_int(int v, int lo, int hi) { return std::min(std::max(v, lo), hi); }

double activation_apply(Activation a, double v) {
  switch (a) {
    case Activation::tanh: return std::tanh(v);
    case Activation::leaky_relu: return v > 0 ? v : 0.01 * v;
    case Activation::elu: return v > 0 ? v : std::expm1(v);
    case Activation::identity: return v;
  }
  return v;
}

}  // namespace

void PriorConfig::validate() const {
  if (n_nodes < 2) throw ValidationError("prior config: n_nodes must be >= 2");
  if (max_classes < 1 || max_classes > 20) throw ValidationError("prior config: max_classes must be in [1,20]");
  if (er_fraction < 0 || er_fraction > 1) throw ValidationError("prior config: er_fraction must be in [0,1]");
  if (feature_dim_range.lo < 1 || feature_dim_range.lo > feature_dim_range.hi)
    throw ValidationError("prior config: bad feature_dim_range");
  require_interval(csbm.h_range, 1e-9, 1.0, "csbm.h");
  require_interval(csbm.p_in_range, 0.0, 1.0, "csbm.p_in");
  require_interval(er.p_er_range, 0.0, 1.0, "er.p_er");
  require_interval(split_fraction_range, 0.0, 1.0, "split_fraction");
  if (ba.attachment_m_range.lo < 1 || ba.attachment_m_range.lo > ba.attachment_m_range.hi)
    throw ValidationError("prior config: bad ba.attachment_m_range");
  if (class_geometric_p <= 0 || class_geometric_p >= 1)
    throw ValidationError("prior config: class_geometric_p must be in (0,1)");
  if (max_retries < 1) throw ValidationError("prior config: max_retries must be >= 1");
}

int ScmSpec::node_count() const {
  return std::accumulate(layer_sizes.begin(), layer_sizes.end(), 0);
}

int ScmSpec::node_offset(int layer) const {
  int off = 0;
  for (int l = 0; l < layer; ++l) off += layer_sizes[l];
  return off;
}

void ScmSpec::validate() const {
  if (layer_sizes.size() < 3) throw ValidationError("scm spec: needs at least one intermediate layer");
  const int transitions = static_cast<int>(layer_sizes.size()) - 1;
  if (static_cast<int>(edge_mask.size()) != transitions || static_cast<int>(weights.size()) != transitions ||
      static_cast<int>(activations.size()) != transitions)
    throw ValidationError("scm spec: per-transition arrays inconsistent");
  for (int l = 0; l < transitions; ++l) {
    const std::size_t want = static_cast<std::size_t>(layer_sizes[l]) * layer_sizes[l + 1];
    if (edge_mask[l].size() != want || weights[l].size() != want)
      throw ValidationError("scm spec: mask/weight size mismatch at layer " + std::to_string(l));
  }
  if (static_cast<int>(noise_scales.size()) != node_count())
    throw ValidationError("scm spec: noise scale count mismatch");
  const int label_layer_start = node_offset(static_cast<int>(layer_sizes.size()) - 1);
  if (label_node < label_layer_start || label_node >= node_count())
    throw ValidationError("scm spec: label node must sit in the last layer");
  for (int f : feature_nodes) {
    if (f < layer_sizes[0] || f >= label_layer_start)
      throw ValidationError("scm spec: feature nodes must be intermediate");
  }
}

ScmSpec sample_scm(const PriorConfig& cfg, Rng& rng) {
  cfg.validate();
  const ScmConfig& sc = cfg.scm;
  const int transitions = clamp_int(static_cast<int>(std::lround(rng.lognormal(sc.layer_mu, sc.layer_sigma))) + 1, 2, 6);
  const int hidden = clamp_int(static_cast<int>(std::lround(rng.lognormal(sc.hidden_mu, sc.hidden_sigma))), 4, 64);

  ScmSpec spec;
  spec.layer_sizes.assign(static_cast<std::size_t>(transitions) + 1, hidden);
  spec.layer_sizes.back() = 1;  // label layer

  for (int l = 0; l < transitions; ++l) {
    const int in = spec.layer_sizes[l], out = spec.layer_sizes[l + 1];
    const double drop = rng.beta(sc.edge_drop_alpha, sc.edge_drop_beta);
    std::vector<uint8_t> mask(static_cast<std::size_t>(in) * out, 1);
    std::vector<double> w(mask.size());
    const double w_scale = 1.0 / std::sqrt(static_cast<double>(in));
    for (int o = 0; o < out; ++o) {
      int kept = 0;
      for (int i = 0; i < in; ++i) {
        const std::size_t idx = static_cast<std::size_t>(o) * in + i;
        mask[idx] = rng.bernoulli(drop) ? 0 : 1;
        kept += mask[idx];
        w[idx] = rng.normal() * w_scale;
      }
      if (kept == 0) mask[static_cast<std::size_t>(o) * in + rng.uniform_int(0, in - 1)] = 1;
    }
    spec.edge_mask.push_back(std::move(mask));
    spec.weights.push_back(std::move(w));
    spec.activations.push_back(static_cast<Activation>(rng.uniform_int(0, kActivationCount - 1)));
  }

  spec.noise_scales.resize(static_cast<std::size_t>(spec.node_count()));
  for (double& s : spec.noise_scales) s = rng.lognormal(sc.noise_mu, sc.noise_sigma);

  // Intermediate nodes (layers 1..L-1), shuffled; run_scm reads a prefix.
  const int label_layer_start = spec.node_offset(transitions);
  for (int v = spec.layer_sizes[0]; v < label_layer_start; ++v) spec.feature_nodes.push_back(v);
  rng.shuffle(spec.feature_nodes);
  spec.label_node = label_layer_start + static_cast<int>(rng.uniform_int(static_cast<uint64_t>(spec.layer_sizes.back())));
  return spec;
}

void run_scm(const ScmSpec& spec, int n_nodes, int n_classes, int n_features, Rng& rng,
             Tensor& x_out, std::vector<int>& y_out) {
  spec.validate();
  if (n_nodes < 1) throw ValidationError("run_scm: n_nodes must be >= 1");
  if (n_classes < 1) throw ValidationError("run_scm: n_classes must be >= 1");
  if (n_features < 1 || n_features > static_cast<int>(spec.feature_nodes.size()))
    throw ValidationError("run_scm: n_features exceeds available feature nodes");

  const int layers = static_cast<int>(spec.layer_sizes.size());
  // values[l]: n_nodes x layer_sizes[l]
  std::vector<std::vector<double>> values(static_cast<std::size_t>(layers));
  int offset = 0;
  for (int l = 0; l < layers; ++l) {
    const int width = spec.layer_sizes[l];
    auto& z = values[l];
    z.assign(static_cast<std::size_t>(n_nodes) * width, 0.0);
    for (int i = 0; i < n_nodes; ++i) {
      for (int v = 0; v < width; ++v) {
        const double noise = spec.noise_scales[static_cast<std::size_t>(offset) + v] * rng.normal();
        if (l == 0) {
          z[static_cast<std::size_t>(i) * width + v] = noise;
        } else {
          const auto& prev = values[l - 1];
          const int in = spec.layer_sizes[l - 1];
          const auto& w = spec.weights[l - 1];
          const auto& mask = spec.edge_mask[l - 1];
          double acc = 0;
          for (int p = 0; p < in; ++p) {
            const std::size_t idx = static_cast<std::size_t>(v) * in + p;
            if (mask[idx]) acc += w[idx] * prev[static_cast<std::size_t>(i) * in + p];
          }
          z[static_cast<std::size_t>(i) * width + v] =
              activation_apply(spec.activations[l - 1], acc) + noise;
        }
      }
    }
    offset += width;
  }

  for (const auto& z : values) {
    for (double v : z)
      if (!std::isfinite(v)) throw NumericalError("run_scm: non-finite propagation");
  }

  // Feature matrix from the designated intermediate nodes, standardized.
  x_out = Tensor::zeros({n_nodes, n_features});
  for (int j = 0; j < n_features; ++j) {
    const int node = spec.feature_nodes[j];
    int layer = 0, off = 0;
    while (node >= off + spec.layer_sizes[layer]) off += spec.layer_sizes[layer++];
    const int width = spec.layer_sizes[layer];
    double mean = 0;
    for (int i = 0; i < n_nodes; ++i) mean += values[layer][static_cast<std::size_t>(i) * width + (node - off)];
    mean /= n_nodes;
    double var = 0;
    for (int i = 0; i < n_nodes; ++i) {
      const double d = values[layer][static_cast<std::size_t>(i) * width + (node - off)] - mean;
      var += d * d;
    }
    var /= n_nodes;
    const double inv = var > 1e-24 ? 1.0 / std::sqrt(var) : 0.0;
    for (int i = 0; i < n_nodes; ++i)
      x_out(i, j) = static_cast<real>((values[layer][static_cast<std::size_t>(i) * width + (node - off)] - mean) * inv);
  }

  // Quantile-binned labels over the label-node output, bin ids permuted so
  // class indices carry no ordinal information.
  const int last = layers - 1;
  const int width = spec.layer_sizes[last];
  const int label_idx = spec.label_node - spec.node_offset(last);
  std::vector<double> signal(static_cast<std::size_t>(n_nodes));
  for (int i = 0; i < n_nodes; ++i) signal[i] = values[last][static_cast<std::size_t>(i) * width + label_idx];

  if (n_classes > 1) {
    const auto [mn, mx] = std::minmax_element(signal.begin(), signal.end());
    if (*mx - *mn < 1e-9) throw NumericalError("run_scm: degenerate constant label signal");
  }

  std::vector<int> order(static_cast<std::size_t>(n_nodes));
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](int a, int b) { return signal[a] != signal[b] ? signal[a] < signal[b] : a < b; });
  std::vector<int> bin_to_class(static_cast<std::size_t>(n_classes));
  std::iota(bin_to_class.begin(), bin_to_class.end(), 0);
  rng.shuffle(bin_to_class);
  y_out.assign(static_cast<std::size_t>(n_nodes), 0);
  for (int rank = 0; rank < n_nodes; ++rank) {
    const int bin = static_cast<int>((static_cast<int64_t>(rank) * n_classes) / n_nodes);
    y_out[order[rank]] = bin_to_class[bin];
  }
}

EdgeList sample_csbm_edges(const std::vector<int>& y, double h, double p_in, Rng& rng) {
  if (y.empty()) throw ValidationError("sample_csbm_edges: labels empty");
  if (!(h > 0 && h <= 1)) throw ValidationError("sample_csbm_edges: h must be in (0,1]");
  if (!(p_in > 0 && p_in < 1)) throw ValidationError("sample_csbm_edges: p_in must be in (0,1)");
  const int n = static_cast<int>(y.size());
  const int c = *std::max_element(y.begin(), y.end()) + 1;
  const double p_out = csbm_p_out(p_in, h);

  // Perturbed block-probability matrix, sampled on the upper triangle and
  // mirrored for symmetry.
  std::vector<double> block(static_cast<std::size_t>(c) * c, 0.0);
  for (int a = 0; a < c; ++a) {
    for (int b = a; b < c; ++b) {
      double p = (a == b) ? p_out + rng.power(2.0) * (p_in - p_out) : rng.power(5.0) * p_out;
      p = std::min(std::max(p, 0.0), 1.0);
      block[static_cast<std::size_t>(a) * c + b] = p;
      block[static_cast<std::size_t>(b) * c + a] = p;
    }
  }

  EdgeList edges;
  for (int u = 0; u < n; ++u) {
    for (int v = u + 1; v < n; ++v) {
      if (rng.bernoulli(block[static_cast<std::size_t>(y[u]) * c + y[v]])) edges.emplace_back(u, v);
    }
  }
  return edges;
}

EdgeList sample_er_edges(int n, double p_er, Rng& rng) {
  if (p_er < 0 || p_er > 1) throw ValidationError("sample_er_edges: p_er must be in [0,1]");
  EdgeList edges;
  if (n < 2 || p_er <= 0) return edges;
  if (p_er >= 1) {
    for (int u = 0; u < n; ++u)
      for (int v = u + 1; v < n; ++v) edges.emplace_back(u, v);
    return edges;
  }
  // Geometric skip over the pair sequence (exact Bernoulli process).
  const double lp = std::log1p(-p_er);
  int v = 1;
  int64_t w = -1;
  while (v < n) {
    const double lr = std::log1p(-rng.uniform());
    w += 1 + static_cast<int64_t>(std::floor(lr / lp));
    while (w >= v && v < n) {
      w -= v;
      ++v;
    }
    if (v < n) edges.emplace_back(static_cast<int>(w), v);
  }
  std::sort(edges.begin(), edges.end());  // skip order is by second endpoint
  return edges;
}

EdgeList sample_ba_edges(int n, int m, Rng& rng) {
  if (m < 1 || m >= n) throw ValidationError("sample_ba_edges: need 1 <= m < n");
  EdgeList edges;
  std::vector<int> repeated;  // one entry per edge endpoint; degree-proportional pool
  for (int u = 0; u <= m; ++u) {
    for (int v = u + 1; v <= m; ++v) {
      edges.emplace_back(u, v);
      repeated.push_back(u);
      repeated.push_back(v);
    }
  }
  std::vector<int> targets;
  for (int t = m + 1; t < n; ++t) {
    targets.clear();
    while (static_cast<int>(targets.size()) < m) {
      const int cand = repeated[rng.uniform_int(static_cast<uint64_t>(repeated.size()))];
      if (std::find(targets.begin(), targets.end(), cand) == targets.end()) targets.push_back(cand);
    }
    for (int tgt : targets) {
      edges.emplace_back(tgt, t);
      repeated.push_back(tgt);
      repeated.push_back(t);
    }
  }
  canonicalize_edges(edges, n);
  return edges;
}

int sample_class_count(const PriorConfig& cfg, Rng& rng) {
  if (cfg.max_classes == 1) return 1;
  const double log_q = std::log1p(-cfg.class_geometric_p);
  for (;;) {
    double u = rng.uniform();
    while (u <= 0) u = rng.uniform();
    const int g = static_cast<int>(std::floor(std::log(u) / log_q));
    if (g <= cfg.max_classes - 1) return 1 + g;
  }
}

namespace {

// Guarantees every class that appears among test labels also appears among
// train labels, preferring swaps that keep split sizes intact.
void fix_class_coverage(const std::vector<int>& y, std::vector<int>& train, std::vector<int>& test) {
  const int c = *std::max_element(y.begin(), y.end()) + 1;
  std::vector<int> count(static_cast<std::size_t>(c), 0);
  for (int id : train) ++count[y[id]];
  for (std::size_t ti = 0; ti < test.size();) {
    const int label = y[test[ti]];
    if (count[label] > 0) {
      ++ti;
      continue;
    }
    // donor: a train node whose class stays covered after removal
    int donor = -1;
    for (std::size_t k = 0; k < train.size(); ++k) {
      if (count[y[train[k]]] >= 2) {
        donor = static_cast<int>(k);
        break;
      }
    }
    if (donor >= 0) {
      --count[y[train[donor]]];
      ++count[label];
      std::swap(train[donor], test[ti]);
      ++ti;
    } else {
      // no safe swap partner; grow the train split instead
      ++count[label];
      train.push_back(test[ti]);
      test.erase(test.begin() + static_cast<std::ptrdiff_t>(ti));
    }
  }
}

}  // namespace

Task assemble_task(const PriorConfig& cfg, Rng& rng) {
  cfg.validate();
  for (int attempt = 0; attempt < cfg.max_retries; ++attempt) {
    Rng r(rng.next_u64());  // fresh sub-seed per attempt
    try {
      const int n = cfg.n_nodes;
      const int n_classes = sample_class_count(cfg, r);
      int d = r.uniform_int(cfg.feature_dim_range.lo, cfg.feature_dim_range.hi);

      ScmSpec spec = sample_scm(cfg, r);
      d = std::min(d, static_cast<int>(spec.feature_nodes.size()));

      Graph g;
      g.n = n;
      g.n_classes = n_classes;
      run_scm(spec, n, n_classes, d, r, g.x, g.y);

      if (cfg.ba.enabled) {
        const int m = std::min(r.uniform_int(cfg.ba.attachment_m_range.lo, cfg.ba.attachment_m_range.hi), n - 1);
        g.edges = sample_ba_edges(n, m, r);
      } else if (r.bernoulli(cfg.er_fraction)) {
        g.edges = sample_er_edges(n, r.uniform(cfg.er.p_er_range.lo, cfg.er.p_er_range.hi), r);
      } else {
        const double h = r.uniform(cfg.csbm.h_range.lo, cfg.csbm.h_range.hi);
        const double p_in = r.uniform(cfg.csbm.p_in_range.lo, cfg.csbm.p_in_range.hi);
        g.edges = sample_csbm_edges(g.y, h, p_in, r);
      }
      canonicalize_edges(g.edges, n);

      const double frac = r.uniform(cfg.split_fraction_range.lo, cfg.split_fraction_range.hi);
      const int k = clamp_int(static_cast<int>(std::lround(frac * n)), 1, n - 1);
      std::vector<int> perm(static_cast<std::size_t>(n));
      std::iota(perm.begin(), perm.end(), 0);
      r.shuffle(perm);
      std::vector<int> train(perm.begin(), perm.begin() + k);
      std::vector<int> test(perm.begin() + k, perm.end());
      fix_class_coverage(g.y, train, test);
      if (test.empty()) throw NumericalError("assemble_task: degenerate split");
      std::sort(train.begin(), train.end());
      std::sort(test.begin(), test.end());

      Task task{std::move(g), std::move(train), std::move(test)};
      task.validate();
      return task;
    } catch (const NumericalError&) {
      continue;
    }
  }
  throw NumericalError("assemble_task: retry budget exhausted on degenerate prior draws");
}

Task task_for_seed(const PriorConfig& cfg, uint64_t seed) {
  Rng rng(seed);
  return assemble_task(cfg, rng);
}

TaskSampler prior_task_sampler(const PriorConfig& cfg) {
  return [cfg](uint64_t seed) { return task_for_seed(cfg, seed); };
}

}  // namespace nodepfn
