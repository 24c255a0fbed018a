#include "nodepfn/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace nodepfn {

PpdMatrix label_propagation(const Graph& g, const std::vector<int>& train_ids,
                            const std::vector<int>& train_labels, double alpha, int iters) {
  if (!(alpha > 0 && alpha < 1)) throw ValidationError("label_propagation: alpha must be in (0,1)");
  if (train_ids.size() != train_labels.size())
    throw ValidationError("label_propagation: train_ids/train_labels size mismatch");
  const LabelCanonicalization lc = canonicalize_labels(train_labels);
  const int n = g.n, c = lc.n_classes;
  const NormalizedAdjacency adj = normalize_adjacency(g);

  std::vector<double> seed(static_cast<std::size_t>(n) * c, 0.0);
  for (std::size_t i = 0; i < train_ids.size(); ++i)
    seed[static_cast<std::size_t>(train_ids[i]) * c + lc.canonical_of[train_labels[i]]] = 1.0;
  std::vector<double> f = seed;
  std::vector<double> next(f.size());
  for (int it = 0; it < iters; ++it) {
    std::fill(next.begin(), next.end(), 0.0);
    for (int i = 0; i < n; ++i) {
      double* row = next.data() + static_cast<std::size_t>(i) * c;
      for (int k = adj.row_ptr[i]; k < adj.row_ptr[i + 1]; ++k) {
        const double w = alpha * static_cast<double>(adj.values[k]);
        const double* src = f.data() + static_cast<std::size_t>(adj.col_idx[k]) * c;
        for (int j = 0; j < c; ++j) row[j] += w * src[j];
      }
      const double* s = seed.data() + static_cast<std::size_t>(i) * c;
      for (int j = 0; j < c; ++j) row[j] += (1.0 - alpha) * s[j];
    }
    // clamp train rows back to their one-hot labels
    for (std::size_t t = 0; t < train_ids.size(); ++t) {
      double* row = next.data() + static_cast<std::size_t>(train_ids[t]) * c;
      std::fill(row, row + c, 0.0);
      row[lc.canonical_of[train_labels[t]]] = 1.0;
    }
    double max_change = 0;
    for (std::size_t i = 0; i < f.size(); ++i) max_change = std::max(max_change, std::abs(next[i] - f[i]));
    f = next;
    if (max_change < 1e-9) break;
  }

  std::vector<char> is_train(static_cast<std::size_t>(n), 0);
  for (int id : train_ids) is_train[id] = 1;
  std::vector<int> test_ids;
  for (int i = 0; i < n; ++i)
    if (!is_train[i]) test_ids.push_back(i);

  PpdMatrix ppd;
  ppd.probs = Tensor::zeros({static_cast<int>(test_ids.size()), c});
  for (std::size_t r = 0; r < test_ids.size(); ++r) {
    const double* row = f.data() + static_cast<std::size_t>(test_ids[r]) * c;
    double total = 0;
    for (int j = 0; j < c; ++j) total += row[j];
    // rows no label mass ever reached stay uniform
    for (int j = 0; j < c; ++j)
      ppd.probs(static_cast<int>(r), j) = static_cast<real>(total > 1e-9 ? row[j] / total : 1.0 / c);
  }
  ppd.class_labels = lc.original_of;
  return ppd;
}

Tensor apply_filter(const Tensor& x, const Graph& g, const FilterMatrix& filter) {
  switch (filter.kind) {
    case FilterKind::identity:
      return x;
    case FilterKind::low_pass: {
      const NormalizedAdjacency adj = normalize_adjacency(g);
      Tensor f = x;
      for (int i = 0; i < filter.k; ++i) f = spmm(adj, f);
      return f;
    }
    case FilterKind::high_pass: {
      const NormalizedAdjacency adj = normalize_adjacency(g);
      Tensor low = spmm(adj, x);
      Tensor out = Tensor::zeros({x.rows(), x.cols()});
      for (std::size_t i = 0; i < out.size(); ++i) out.values_mut()[i] = x.values()[i] - low.values()[i];
      return out;
    }
  }
  throw ValidationError("apply_filter: unknown filter kind");
}

namespace {

// Cholesky solve of (A + ridge*I) W = B for symmetric A (d x d), B (d x c).
// Returns false when the factorization breaks down.
bool cholesky_solve(std::vector<double> a, int d, std::vector<double>& b, int c, double ridge) {
  for (int i = 0; i < d; ++i) a[static_cast<std::size_t>(i) * d + i] += ridge;
  // in-place LL^T
  for (int i = 0; i < d; ++i) {
    for (int j = 0; j <= i; ++j) {
      double sum = a[static_cast<std::size_t>(i) * d + j];
      for (int k = 0; k < j; ++k)
        sum -= a[static_cast<std::size_t>(i) * d + k] * a[static_cast<std::size_t>(j) * d + k];
      if (i == j) {
        if (sum <= 1e-300) return false;
        a[static_cast<std::size_t>(i) * d + j] = std::sqrt(sum);
      } else {
        a[static_cast<std::size_t>(i) * d + j] = sum / a[static_cast<std::size_t>(j) * d + j];
      }
    }
  }
  // forward/back substitution per column of B
  for (int col = 0; col < c; ++col) {
    for (int i = 0; i < d; ++i) {
      double sum = b[static_cast<std::size_t>(i) * c + col];
      for (int k = 0; k < i; ++k) sum -= a[static_cast<std::size_t>(i) * d + k] * b[static_cast<std::size_t>(k) * c + col];
      b[static_cast<std::size_t>(i) * c + col] = sum / a[static_cast<std::size_t>(i) * d + i];
    }
    for (int i = d - 1; i >= 0; --i) {
      double sum = b[static_cast<std::size_t>(i) * c + col];
      for (int k = i + 1; k < d; ++k) sum -= a[static_cast<std::size_t>(k) * d + i] * b[static_cast<std::size_t>(k) * c + col];
      b[static_cast<std::size_t>(i) * c + col] = sum / a[static_cast<std::size_t>(i) * d + i];
    }
  }
  return true;
}

// Minimum-norm least squares via SVD of the normal matrix; used for the
// exact pseudo-inverse route (ridge = 0, exact_pinv = true).
std::vector<double> pinv_solve(const std::vector<double>& ft_f, int d, const std::vector<double>& ft_y,
                               int c) {
  // eigendecompose ft_f = V L V^T with the same Jacobi routine the SVD uses;
  // here inline a tiny power-free cyclic Jacobi to avoid a dependency loop
  std::vector<double> a = ft_f;
  std::vector<double> v(static_cast<std::size_t>(d) * d, 0.0);
  for (int i = 0; i < d; ++i) v[static_cast<std::size_t>(i) * d + i] = 1.0;
  for (int sweep = 0; sweep < 64; ++sweep) {
    double off = 0;
    for (int p = 0; p < d; ++p)
      for (int q = p + 1; q < d; ++q) off += a[static_cast<std::size_t>(p) * d + q] * a[static_cast<std::size_t>(p) * d + q];
    if (off < 1e-26) break;
    if (sweep == 63) throw NumericalError("pinv_solve: eigen iteration failed to converge");
    for (int p = 0; p < d; ++p) {
      for (int q = p + 1; q < d; ++q) {
        const double apq = a[static_cast<std::size_t>(p) * d + q];
        if (std::abs(apq) < 1e-300) continue;
        const double theta = (a[static_cast<std::size_t>(q) * d + q] - a[static_cast<std::size_t>(p) * d + p]) / (2 * apq);
        const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1));
        const double cs = 1.0 / std::sqrt(t * t + 1), sn = t * cs;
        for (int i = 0; i < d; ++i) {
          const double aip = a[static_cast<std::size_t>(i) * d + p], aiq = a[static_cast<std::size_t>(i) * d + q];
          a[static_cast<std::size_t>(i) * d + p] = cs * aip - sn * aiq;
          a[static_cast<std::size_t>(i) * d + q] = sn * aip + cs * aiq;
        }
        for (int j = 0; j < d; ++j) {
          const double apj = a[static_cast<std::size_t>(p) * d + j], aqj = a[static_cast<std::size_t>(q) * d + j];
          a[static_cast<std::size_t>(p) * d + j] = cs * apj - sn * aqj;
          a[static_cast<std::size_t>(q) * d + j] = sn * apj + cs * aqj;
        }
        for (int i = 0; i < d; ++i) {
          const double vip = v[static_cast<std::size_t>(i) * d + p], viq = v[static_cast<std::size_t>(i) * d + q];
          v[static_cast<std::size_t>(i) * d + p] = cs * vip - sn * viq;
          v[static_cast<std::size_t>(i) * d + q] = sn * vip + cs * viq;
        }
      }
    }
  }
  double max_eig = 0;
  for (int i = 0; i < d; ++i) max_eig = std::max(max_eig, std::abs(a[static_cast<std::size_t>(i) * d + i]));
  const double cutoff = max_eig * d * 1e-12;
  // W = V L^+ V^T (F^T Y)
  std::vector<double> tmp(static_cast<std::size_t>(d) * c, 0.0);
  for (int i = 0; i < d; ++i) {
    const double lam = a[static_cast<std::size_t>(i) * d + i];
    if (std::abs(lam) <= cutoff) continue;
    for (int col = 0; col < c; ++col) {
      double dot = 0;
      for (int r = 0; r < d; ++r) dot += v[static_cast<std::size_t>(r) * d + i] * ft_y[static_cast<std::size_t>(r) * c + col];
      tmp[static_cast<std::size_t>(i) * c + col] = dot / lam;
    }
  }
  std::vector<double> w(static_cast<std::size_t>(d) * c, 0.0);
  for (int r = 0; r < d; ++r)
    for (int col = 0; col < c; ++col) {
      double dot = 0;
      for (int i = 0; i < d; ++i) dot += v[static_cast<std::size_t>(r) * d + i] * tmp[static_cast<std::size_t>(i) * c + col];
      w[static_cast<std::size_t>(r) * c + col] = dot;
    }
  return w;
}

}  // namespace

Tensor closed_form_weights(const Graph& g, const std::vector<int>& train_ids,
                           const std::vector<int>& train_labels, const FilterMatrix& filter,
                           double ridge, bool exact_pinv) {
  if (ridge < 0) throw ValidationError("closed_form_classify: ridge must be >= 0");
  if (train_ids.size() != train_labels.size())
    throw ValidationError("closed_form_classify: train_ids/train_labels size mismatch");
  const LabelCanonicalization lc = canonicalize_labels(train_labels);
  const int c = lc.n_classes, d = g.feature_dim();

  const Tensor f = apply_filter(g.x, g, filter);
  const int n_train = static_cast<int>(train_ids.size());
  std::vector<double> f_train(static_cast<std::size_t>(n_train) * d);
  std::vector<double> y(static_cast<std::size_t>(n_train) * c, 0.0);
  for (int i = 0; i < n_train; ++i) {
    for (int j = 0; j < d; ++j) f_train[static_cast<std::size_t>(i) * d + j] = f(train_ids[i], j);
    y[static_cast<std::size_t>(i) * c + lc.canonical_of[train_labels[i]]] = 1.0;
  }
  // normal equations
  std::vector<double> ft_f(static_cast<std::size_t>(d) * d, 0.0);
  for (int i = 0; i < n_train; ++i)
    for (int p = 0; p < d; ++p) {
      const double fp = f_train[static_cast<std::size_t>(i) * d + p];
      for (int q = 0; q < d; ++q) ft_f[static_cast<std::size_t>(p) * d + q] += fp * f_train[static_cast<std::size_t>(i) * d + q];
    }
  std::vector<double> ft_y(static_cast<std::size_t>(d) * c, 0.0);
  for (int i = 0; i < n_train; ++i)
    for (int p = 0; p < d; ++p) {
      const double fp = f_train[static_cast<std::size_t>(i) * d + p];
      for (int col = 0; col < c; ++col) ft_y[static_cast<std::size_t>(p) * c + col] += fp * y[static_cast<std::size_t>(i) * c + col];
    }

  std::vector<double> w = ft_y;
  if (ridge > 0) {
    if (!cholesky_solve(ft_f, d, w, c, ridge))
      throw NumericalError("closed_form_classify: factorization failed despite ridge");
  } else if (exact_pinv) {
    w = pinv_solve(ft_f, d, ft_y, c);
  } else {
    if (!cholesky_solve(ft_f, d, w, c, 0.0))
      throw NumericalError("closed_form_classify: singular system with ridge=0; increase ridge");
  }
  Tensor weights = Tensor::zeros({d, c});
  for (std::size_t i = 0; i < w.size(); ++i) weights.values_mut()[i] = static_cast<real>(w[i]);
  return weights;
}

std::vector<int> closed_form_classify(const Graph& g, const std::vector<int>& train_ids,
                                      const std::vector<int>& train_labels, const FilterMatrix& filter,
                                      double ridge, bool exact_pinv) {
  const LabelCanonicalization lc = canonicalize_labels(train_labels);
  const Tensor w = closed_form_weights(g, train_ids, train_labels, filter, ridge, exact_pinv);
  const Tensor f = apply_filter(g.x, g, filter);
  const int c = lc.n_classes, d = g.feature_dim();

  std::vector<char> is_train(static_cast<std::size_t>(g.n), 0);
  for (int id : train_ids) is_train[id] = 1;
  std::vector<int> labels;
  for (int i = 0; i < g.n; ++i) {
    if (is_train[i]) continue;
    int best = 0;
    double best_score = -1e300;
    for (int col = 0; col < c; ++col) {
      double score = 0;
      for (int j = 0; j < d; ++j) score += static_cast<double>(f(i, j)) * w(j, col);
      if (score > best_score) {  // ties stay with the smaller class index
        best_score = score;
        best = col;
      }
    }
    labels.push_back(lc.original_of[best]);
  }
  return labels;
}

// ---- exact oracle ----------------------------------------------------------

void CsbmHypothesis::validate() const {
  if (weight <= 0) throw ValidationError("hypothesis: weight must be positive");
  if (!(h > 0 && h <= 1)) throw ValidationError("hypothesis: h must be in (0,1]");
  if (!(p_in > 0 && p_in < 1)) throw ValidationError("hypothesis: p_in must be in (0,1)");
  if (feature_std <= 0) throw ValidationError("hypothesis: feature_std must be positive");
  if (!class_means.defined() || class_means.rows() < 1)
    throw ValidationError("hypothesis: class_means required");
  if (static_cast<int>(class_prior.size()) != n_classes())
    throw ValidationError("hypothesis: class_prior size mismatch");
  double total = 0;
  for (double p : class_prior) {
    if (p <= 0) throw ValidationError("hypothesis: class_prior entries must be positive");
    total += p;
  }
  if (std::abs(total - 1.0) > 1e-9) throw ValidationError("hypothesis: class_prior must sum to 1");
}

void HypothesisSet::validate() const {
  if (hypotheses.empty()) throw ValidationError("hypothesis set: empty");
  const int c = hypotheses.front().n_classes();
  const int d = hypotheses.front().class_means.cols();
  for (const CsbmHypothesis& hyp : hypotheses) {
    hyp.validate();
    if (hyp.n_classes() != c || hyp.class_means.cols() != d)
      throw ValidationError("hypothesis set: inconsistent class/feature dimensions");
  }
  // weights need only be positive: every consumer normalizes, so the
  // posterior is invariant to positive rescaling
}

namespace {

double log_sum_exp(const std::vector<double>& xs) {
  double mx = -1e300;
  for (double x : xs) mx = std::max(mx, x);
  if (mx <= -1e300) return -1e300;
  double acc = 0;
  for (double x : xs) acc += std::exp(x - mx);
  return mx + std::log(acc);
}

// Streaming log-sum-exp: constant memory over any number of terms.
struct LogAccumulator {
  double max_log = -1e300;
  double sum = 0;

  void add(double ll) {
    if (ll <= -1e300) return;
    if (ll > max_log) {
      sum = sum * std::exp(max_log - ll) + 1.0;
      max_log = ll;
    } else {
      sum += std::exp(ll - max_log);
    }
  }
  double value() const { return sum > 0 ? max_log + std::log(sum) : -1e300; }
};

// log N(x | mu, std^2 I) summed over dimensions
double gaussian_loglik(const Tensor& x, int row, const Tensor& means, int cls, double stddev) {
  const int d = x.cols();
  const double inv_var = 1.0 / (stddev * stddev);
  double acc = -0.5 * d * std::log(2.0 * 3.14159265358979323846 * stddev * stddev);
  for (int j = 0; j < d; ++j) {
    const double diff = static_cast<double>(x(row, j)) - static_cast<double>(means(cls, j));
    acc -= 0.5 * diff * diff * inv_var;
  }
  return acc;
}

}  // namespace

PpdMatrix exact_ppd(const Task& task, const HypothesisSet& hyps) {
  hyps.validate();
  task.validate_split();
  const Graph& g = task.graph;
  const int c = hyps.hypotheses.front().n_classes();
  const int n_test = static_cast<int>(task.test_ids.size());

  double states = 1;
  for (int i = 0; i < n_test; ++i) {
    states *= c;
    if (states > double(1 << 22))
      throw ValidationError("exact_ppd: test assignment space too large to enumerate");
  }
  const int64_t n_states = static_cast<int64_t>(states);

  // dense pair lookup for edge evidence
  std::vector<char> adjacency(static_cast<std::size_t>(g.n) * g.n, 0);
  for (const auto& [u, v] : g.edges) {
    adjacency[static_cast<std::size_t>(u) * g.n + v] = 1;
    adjacency[static_cast<std::size_t>(v) * g.n + u] = 1;
  }

  std::vector<int> assignment(static_cast<std::size_t>(g.n), -1);
  for (int id : task.train_ids) assignment[id] = g.y[id];

  // accumulate per hypothesis: total evidence and per (test node, class)
  std::vector<double> hyp_log_evidence;
  std::vector<std::vector<double>> hyp_class_logs;  // [hyp][test*c + cls]
  for (const CsbmHypothesis& hyp : hyps.hypotheses) {
    const double p_out = hyp.p_in * (1.0 - hyp.h);
    const double log_in = std::log(hyp.p_in), log_in_c = std::log1p(-hyp.p_in);
    const double log_out = p_out > 0 ? std::log(p_out) : -1e300;
    const double log_out_c = std::log1p(-p_out);

    // feature log-likelihood per node per class (test features are evidence)
    std::vector<double> feat_ll(static_cast<std::size_t>(g.n) * c);
    for (int v = 0; v < g.n; ++v)
      for (int cls = 0; cls < c; ++cls)
        feat_ll[static_cast<std::size_t>(v) * c + cls] =
            gaussian_loglik(g.x, v, hyp.class_means, cls, hyp.feature_std) + std::log(hyp.class_prior[cls]);

    // fixed contribution: train nodes' features/labels and train-train edges
    double base = 0;
    for (int id : task.train_ids) base += feat_ll[static_cast<std::size_t>(id) * c + g.y[id]];
    for (std::size_t a = 0; a < task.train_ids.size(); ++a)
      for (std::size_t b = a + 1; b < task.train_ids.size(); ++b) {
        const int u = task.train_ids[a], v = task.train_ids[b];
        const bool same = g.y[u] == g.y[v];
        const bool edge = adjacency[static_cast<std::size_t>(u) * g.n + v];
        base += same ? (edge ? log_in : log_in_c) : (edge ? log_out : log_out_c);
      }

    // Pre-aggregate each test node's evidence against train nodes per class;
    // only test-test pairs depend on the joint assignment.
    std::vector<double> unary(static_cast<std::size_t>(n_test) * c);
    for (int t = 0; t < n_test; ++t) {
      const int v = task.test_ids[t];
      for (int cls = 0; cls < c; ++cls) {
        double ll = feat_ll[static_cast<std::size_t>(v) * c + cls];
        for (int id : task.train_ids) {
          const bool same = cls == g.y[id];
          const bool edge = adjacency[static_cast<std::size_t>(v) * g.n + id];
          ll += same ? (edge ? log_in : log_in_c) : (edge ? log_out : log_out_c);
        }
        unary[static_cast<std::size_t>(t) * c + cls] = ll;
      }
    }

    LogAccumulator evidence;
    std::vector<LogAccumulator> per_class(static_cast<std::size_t>(n_test) * c);
    for (int64_t code = 0; code < n_states; ++code) {
      int64_t rem = code;
      for (int t = 0; t < n_test; ++t) {
        assignment[task.test_ids[t]] = static_cast<int>(rem % c);
        rem /= c;
      }
      double ll = base;
      for (int t = 0; t < n_test; ++t) {
        const int v = task.test_ids[t];
        ll += unary[static_cast<std::size_t>(t) * c + assignment[v]];
        for (int t2 = 0; t2 < t; ++t2) {
          const int v2 = task.test_ids[t2];
          const bool same = assignment[v] == assignment[v2];
          const bool edge = adjacency[static_cast<std::size_t>(v) * g.n + v2];
          ll += same ? (edge ? log_in : log_in_c) : (edge ? log_out : log_out_c);
        }
      }
      evidence.add(ll);
      for (int t = 0; t < n_test; ++t)
        per_class[static_cast<std::size_t>(t) * c + assignment[task.test_ids[t]]].add(ll);
    }

    hyp_log_evidence.push_back(evidence.value());
    std::vector<double> class_logs(static_cast<std::size_t>(n_test) * c);
    for (std::size_t i = 0; i < class_logs.size(); ++i) class_logs[i] = per_class[i].value();
    hyp_class_logs.push_back(std::move(class_logs));
  }

  // posterior over hypotheses; weights invariant to positive rescaling
  std::vector<double> log_post(hyps.hypotheses.size());
  for (std::size_t i = 0; i < log_post.size(); ++i)
    log_post[i] = std::log(hyps.hypotheses[i].weight) + hyp_log_evidence[i];
  const double log_norm = log_sum_exp(log_post);
  if (log_norm <= -1e300) throw NumericalError("exact_ppd: all hypothesis posteriors underflowed");

  PpdMatrix ppd;
  ppd.probs = Tensor::zeros({n_test, c});
  for (int t = 0; t < n_test; ++t) {
    std::vector<double> logs(static_cast<std::size_t>(c));
    for (int cls = 0; cls < c; ++cls) {
      std::vector<double> parts;
      for (std::size_t i = 0; i < hyps.hypotheses.size(); ++i)
        parts.push_back(log_post[i] - log_norm +
                        hyp_class_logs[i][static_cast<std::size_t>(t) * c + cls] - hyp_log_evidence[i]);
      logs[cls] = log_sum_exp(parts);
    }
    const double z = log_sum_exp(logs);
    for (int cls = 0; cls < c; ++cls) ppd.probs(t, cls) = static_cast<real>(std::exp(logs[cls] - z));
  }
  ppd.class_labels.resize(static_cast<std::size_t>(c));
  std::iota(ppd.class_labels.begin(), ppd.class_labels.end(), 0);
  return ppd;
}

Task sample_hypothesis_task(const HypothesisSet& hyps, int n_nodes, double split_lo, double split_hi,
                            Rng& rng) {
  hyps.validate();
  if (n_nodes < 2) throw ValidationError("sample_hypothesis_task: n_nodes must be >= 2");

  // pick a hypothesis by normalized weight
  double total_weight = 0;
  for (const CsbmHypothesis& hyp : hyps.hypotheses) total_weight += hyp.weight;
  double u = rng.uniform() * total_weight;
  std::size_t pick = 0;
  for (; pick + 1 < hyps.hypotheses.size(); ++pick) {
    u -= hyps.hypotheses[pick].weight;
    if (u < 0) break;
  }
  const CsbmHypothesis& hyp = hyps.hypotheses[pick];
  const int c = hyp.n_classes(), d = hyp.class_means.cols();
  const double p_out = hyp.p_in * (1.0 - hyp.h);

  Graph g;
  g.n = n_nodes;
  g.n_classes = c;
  g.y.resize(static_cast<std::size_t>(n_nodes));
  for (int i = 0; i < n_nodes; ++i) {
    double r = rng.uniform();
    int cls = 0;
    for (; cls + 1 < c; ++cls) {
      r -= hyp.class_prior[cls];
      if (r < 0) break;
    }
    g.y[i] = cls;
  }
  g.x = Tensor::zeros({n_nodes, d});
  for (int i = 0; i < n_nodes; ++i)
    for (int j = 0; j < d; ++j)
      g.x(i, j) = static_cast<real>(hyp.class_means(g.y[i], j) + hyp.feature_std * rng.normal());
  for (int a = 0; a < n_nodes; ++a)
    for (int b = a + 1; b < n_nodes; ++b)
      if (rng.bernoulli(g.y[a] == g.y[b] ? hyp.p_in : p_out)) g.edges.emplace_back(a, b);

  const double frac = rng.uniform(split_lo, split_hi);
  const int k = std::min(std::max(static_cast<int>(std::lround(frac * n_nodes)), 1), n_nodes - 1);
  std::vector<int> perm(static_cast<std::size_t>(n_nodes));
  std::iota(perm.begin(), perm.end(), 0);
  rng.shuffle(perm);
  std::vector<int> train(perm.begin(), perm.begin() + k);
  std::vector<int> test(perm.begin() + k, perm.end());
  // coverage: every test class must appear in train (swap when possible)
  std::vector<int> count(static_cast<std::size_t>(c), 0);
  for (int id : train) ++count[g.y[id]];
  for (std::size_t ti = 0; ti < test.size();) {
    if (count[g.y[test[ti]]] > 0) {
      ++ti;
      continue;
    }
    int donor = -1;
    for (std::size_t kk = 0; kk < train.size(); ++kk)
      if (count[g.y[train[kk]]] >= 2) {
        donor = static_cast<int>(kk);
        break;
      }
    if (donor >= 0) {
      --count[g.y[train[donor]]];
      ++count[g.y[test[ti]]];
      std::swap(train[donor], test[ti]);
      ++ti;
    } else {
      ++count[g.y[test[ti]]];
      train.push_back(test[ti]);
      test.erase(test.begin() + static_cast<std::ptrdiff_t>(ti));
    }
  }
  std::sort(train.begin(), train.end());
  std::sort(test.begin(), test.end());
  if (test.empty()) {
    // exceedingly rare at sensible sizes: move one safely-covered node back
    std::vector<int> recount(static_cast<std::size_t>(c), 0);
    for (int id : train) ++recount[g.y[id]];
    std::size_t pick_idx = train.size() - 1;
    for (std::size_t kk = 0; kk < train.size(); ++kk)
      if (recount[g.y[train[kk]]] >= 2) {
        pick_idx = kk;
        break;
      }
    test.push_back(train[pick_idx]);
    train.erase(train.begin() + static_cast<std::ptrdiff_t>(pick_idx));
    std::sort(test.begin(), test.end());
  }
  Task task{std::move(g), std::move(train), std::move(test)};
  task.validate();
  return task;
}

double majority_class_accuracy(const Task& task) {
  std::vector<int> count(static_cast<std::size_t>(task.graph.n_classes), 0);
  for (int id : task.train_ids) ++count[task.graph.y[id]];
  const int majority = static_cast<int>(std::max_element(count.begin(), count.end()) - count.begin());
  int correct = 0;
  for (int id : task.test_ids)
    if (task.graph.y[id] == majority) ++correct;
  return static_cast<double>(correct) / static_cast<double>(task.test_ids.size());
}

double ppd_accuracy(const PpdMatrix& ppd, const Task& task) {
  const std::vector<int> pred = ppd.argmax_labels();
  if (pred.size() != task.test_ids.size()) throw ValidationError("ppd_accuracy: row count mismatch");
  int correct = 0;
  for (std::size_t i = 0; i < pred.size(); ++i)
    if (pred[i] == task.graph.y[task.test_ids[i]]) ++correct;
  return static_cast<double>(correct) / static_cast<double>(pred.size());
}

double mean_total_variation(const PpdMatrix& a, const PpdMatrix& b) {
  if (a.probs.rows() != b.probs.rows() || a.probs.cols() != b.probs.cols())
    throw ValidationError("mean_total_variation: shape mismatch");
  double total = 0;
  for (int i = 0; i < a.probs.rows(); ++i) {
    double l1 = 0;
    for (int c = 0; c < a.probs.cols(); ++c) l1 += std::abs(static_cast<double>(a.probs(i, c)) - b.probs(i, c));
    total += 0.5 * l1;
  }
  return total / a.probs.rows();
}

}  // namespace nodepfn
