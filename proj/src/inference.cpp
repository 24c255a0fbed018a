#include "nodepfn/inference.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <unordered_map>

namespace nodepfn {

void InferenceConfig::validate(int d_feat_max) const {
  if (ensemble_size < 1) throw ValidationError("inference config: ensemble_size must be >= 1");
  if (smoothing_steps < 0) throw ValidationError("inference config: smoothing_steps must be >= 0");
  if (n_components && (*n_components < 1 || *n_components > d_feat_max))
    throw ValidationError("inference config: n_components must be in [1, d_feat_max]");
}

std::vector<int> PpdMatrix::argmax_labels() const {
  std::vector<int> out;
  out.reserve(static_cast<std::size_t>(probs.rows()));
  for (int i = 0; i < probs.rows(); ++i) {
    int best = 0;
    for (int c = 1; c < probs.cols(); ++c)
      if (probs(i, c) > probs(i, best)) best = c;
    out.push_back(class_labels[best]);
  }
  return out;
}

Tensor pad_features(const Tensor& x, int d_max) {
  const int n = x.rows(), d = x.cols();
  if (d > d_max) throw ValidationError("pad_features: width exceeds capacity; reduce first");
  if (d == d_max) return x;
  const real factor = static_cast<real>(d_max) / static_cast<real>(d);
  Tensor out = Tensor::zeros({n, d_max});
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j) out(i, j) = x(i, j) * factor;
  return out;
}

// ---- dense helpers (double precision regardless of build real) -------------

namespace {

using DVec = std::vector<double>;

// Cyclic Jacobi eigensolver for a symmetric m x m matrix (row-major).
// Eigenpairs returned in descending eigenvalue order.
void jacobi_eigen(DVec a, int m, DVec& eigenvalues, DVec& eigenvectors) {
  DVec v(static_cast<std::size_t>(m) * m, 0.0);
  for (int i = 0; i < m; ++i) v[static_cast<std::size_t>(i) * m + i] = 1.0;
  const int max_sweeps = 64;
  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    double off = 0;
    for (int p = 0; p < m; ++p)
      for (int q = p + 1; q < m; ++q) off += a[static_cast<std::size_t>(p) * m + q] * a[static_cast<std::size_t>(p) * m + q];
    if (off < 1e-28) break;
    if (sweep == max_sweeps - 1) throw NumericalError("jacobi_eigen: no convergence");
    for (int p = 0; p < m; ++p) {
      for (int q = p + 1; q < m; ++q) {
        const double apq = a[static_cast<std::size_t>(p) * m + q];
        if (std::abs(apq) < 1e-300) continue;
        const double app = a[static_cast<std::size_t>(p) * m + p];
        const double aqq = a[static_cast<std::size_t>(q) * m + q];
        const double theta = (aqq - app) / (2.0 * apq);
        const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (int i = 0; i < m; ++i) {
          const double aip = a[static_cast<std::size_t>(i) * m + p];
          const double aiq = a[static_cast<std::size_t>(i) * m + q];
          a[static_cast<std::size_t>(i) * m + p] = c * aip - s * aiq;
          a[static_cast<std::size_t>(i) * m + q] = s * aip + c * aiq;
        }
        for (int j = 0; j < m; ++j) {
          const double apj = a[static_cast<std::size_t>(p) * m + j];
          const double aqj = a[static_cast<std::size_t>(q) * m + j];
          a[static_cast<std::size_t>(p) * m + j] = c * apj - s * aqj;
          a[static_cast<std::size_t>(q) * m + j] = s * apj + c * aqj;
        }
        for (int i = 0; i < m; ++i) {
          const double vip = v[static_cast<std::size_t>(i) * m + p];
          const double viq = v[static_cast<std::size_t>(i) * m + q];
          v[static_cast<std::size_t>(i) * m + p] = c * vip - s * viq;
          v[static_cast<std::size_t>(i) * m + q] = s * vip + c * viq;
        }
      }
    }
  }
  std::vector<int> order(static_cast<std::size_t>(m));
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int i, int j) {
    return a[static_cast<std::size_t>(i) * m + i] > a[static_cast<std::size_t>(j) * m + j];
  });
  eigenvalues.resize(static_cast<std::size_t>(m));
  eigenvectors.assign(static_cast<std::size_t>(m) * m, 0.0);  // column j = j-th eigenvector
  for (int j = 0; j < m; ++j) {
    eigenvalues[j] = a[static_cast<std::size_t>(order[j]) * m + order[j]];
    for (int i = 0; i < m; ++i)
      eigenvectors[static_cast<std::size_t>(i) * m + j] = v[static_cast<std::size_t>(i) * m + order[j]];
  }
}

void dmm_nn(const DVec& a, const DVec& b, DVec& c, int m, int k, int n) {
  c.assign(static_cast<std::size_t>(m) * n, 0.0);
#pragma omp parallel for schedule(static)
  for (int i = 0; i < m; ++i) {
    for (int kk = 0; kk < k; ++kk) {
      const double aik = a[static_cast<std::size_t>(i) * k + kk];
      const double* brow = b.data() + static_cast<std::size_t>(kk) * n;
      double* crow = c.data() + static_cast<std::size_t>(i) * n;
      for (int j = 0; j < n; ++j) crow[j] += aik * brow[j];
    }
  }
}

// c[k,n] = a[m,k]^T b[m,n]
void dmm_tn(const DVec& a, const DVec& b, DVec& c, int m, int k, int n) {
  c.assign(static_cast<std::size_t>(k) * n, 0.0);
#pragma omp parallel for schedule(static)
  for (int p = 0; p < k; ++p) {
    for (int i = 0; i < m; ++i) {
      const double aip = a[static_cast<std::size_t>(i) * k + p];
      const double* brow = b.data() + static_cast<std::size_t>(i) * n;
      double* crow = c.data() + static_cast<std::size_t>(p) * n;
      for (int j = 0; j < n; ++j) crow[j] += aip * brow[j];
    }
  }
}

// Modified Gram-Schmidt with re-orthogonalization over the columns of
// a (m x q, row-major); rank-deficient columns become zero.
void orthonormalize_cols(DVec& a, int m, int q) {
  for (int j = 0; j < q; ++j) {
    for (int pass = 0; pass < 2; ++pass) {
      for (int p = 0; p < j; ++p) {
        double dot = 0;
        for (int i = 0; i < m; ++i)
          dot += a[static_cast<std::size_t>(i) * q + p] * a[static_cast<std::size_t>(i) * q + j];
        for (int i = 0; i < m; ++i)
          a[static_cast<std::size_t>(i) * q + j] -= dot * a[static_cast<std::size_t>(i) * q + p];
      }
    }
    double norm = 0;
    for (int i = 0; i < m; ++i) norm += a[static_cast<std::size_t>(i) * q + j] * a[static_cast<std::size_t>(i) * q + j];
    norm = std::sqrt(norm);
    if (norm < 1e-150) {
      for (int i = 0; i < m; ++i) a[static_cast<std::size_t>(i) * q + j] = 0.0;
    } else {
      for (int i = 0; i < m; ++i) a[static_cast<std::size_t>(i) * q + j] /= norm;
    }
  }
}

// Flips each column so its largest-magnitude entry is positive.
void fix_column_signs(DVec& u, int m, int k) {
  for (int j = 0; j < k; ++j) {
    int arg = 0;
    double best = -1;
    for (int i = 0; i < m; ++i) {
      const double mag = std::abs(u[static_cast<std::size_t>(i) * k + j]);
      if (mag > best) {
        best = mag;
        arg = i;
      }
    }
    if (u[static_cast<std::size_t>(arg) * k + j] < 0)
      for (int i = 0; i < m; ++i) u[static_cast<std::size_t>(i) * k + j] = -u[static_cast<std::size_t>(i) * k + j];
  }
}

}  // namespace

Tensor truncated_svd(const Tensor& x, int k, uint64_t seed) {
  const int n = x.rows(), d = x.cols();
  if (k < 1 || k > std::min(n, d)) throw ValidationError("truncated_svd: k must be in [1, min(n,d)]");
  DVec xd(x.values().begin(), x.values().end());

  DVec us;  // n x k result = U_k * S_k
  if (std::min(n, d) <= 64) {
    // dense path via the Gram matrix of the smaller side
    if (d <= n) {
      DVec gram, evals, evecs;
      dmm_tn(xd, xd, gram, n, d, d);
      jacobi_eigen(std::move(gram), d, evals, evecs);
      // X * V_k is exactly U_k * S_k
      DVec vk(static_cast<std::size_t>(d) * k);
      for (int i = 0; i < d; ++i)
        for (int j = 0; j < k; ++j) vk[static_cast<std::size_t>(i) * k + j] = evecs[static_cast<std::size_t>(i) * d + j];
      dmm_nn(xd, vk, us, n, d, k);
    } else {
      DVec gram, evals, evecs;
      // X X^T via transpose trick: gram[i,j] = row_i . row_j
      gram.assign(static_cast<std::size_t>(n) * n, 0.0);
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
          double acc = 0;
          for (int p = 0; p < d; ++p)
            acc += xd[static_cast<std::size_t>(i) * d + p] * xd[static_cast<std::size_t>(j) * d + p];
          gram[static_cast<std::size_t>(i) * n + j] = acc;
        }
      jacobi_eigen(std::move(gram), n, evals, evecs);
      us.assign(static_cast<std::size_t>(n) * k, 0.0);
      for (int j = 0; j < k; ++j) {
        const double sigma = std::sqrt(std::max(evals[j], 0.0));
        for (int i = 0; i < n; ++i)
          us[static_cast<std::size_t>(i) * k + j] = evecs[static_cast<std::size_t>(i) * n + j] * sigma;
      }
    }
  } else {
    // randomized subspace iteration
    const int q = std::min(k + 8, std::min(n, d));
    Rng rng(derive_seed(seed, "svd"));
    DVec omega(static_cast<std::size_t>(d) * q);
    for (double& v : omega) v = rng.normal();
    DVec y;
    dmm_nn(xd, omega, y, n, d, q);  // n x q
    orthonormalize_cols(y, n, q);
    for (int it = 0; it < 4; ++it) {
      DVec z;
      dmm_tn(xd, y, z, n, d, q);  // d x q
      orthonormalize_cols(z, d, q);
      dmm_nn(xd, z, y, n, d, q);
      orthonormalize_cols(y, n, q);
    }
    DVec b;
    dmm_tn(y, xd, b, n, q, d);  // q x d  (B = Q^T X)
    DVec small, evals, evecs;
    // B B^T (q x q)
    small.assign(static_cast<std::size_t>(q) * q, 0.0);
    for (int i = 0; i < q; ++i)
      for (int j = 0; j < q; ++j) {
        double acc = 0;
        for (int p = 0; p < d; ++p)
          acc += b[static_cast<std::size_t>(i) * d + p] * b[static_cast<std::size_t>(j) * d + p];
        small[static_cast<std::size_t>(i) * q + j] = acc;
      }
    jacobi_eigen(std::move(small), q, evals, evecs);
    DVec wk(static_cast<std::size_t>(q) * k);
    for (int i = 0; i < q; ++i)
      for (int j = 0; j < k; ++j) wk[static_cast<std::size_t>(i) * k + j] = evecs[static_cast<std::size_t>(i) * q + j];
    DVec uk;
    dmm_nn(y, wk, uk, n, q, k);  // n x k orthonormal
    us.assign(static_cast<std::size_t>(n) * k, 0.0);
    for (int j = 0; j < k; ++j) {
      const double sigma = std::sqrt(std::max(evals[j], 0.0));
      for (int i = 0; i < n; ++i) us[static_cast<std::size_t>(i) * k + j] = uk[static_cast<std::size_t>(i) * k + j] * sigma;
    }
  }
  fix_column_signs(us, n, k);
  Tensor out = Tensor::zeros({n, k});
  for (std::size_t i = 0; i < us.size(); ++i) out.values_mut()[i] = static_cast<real>(us[i]);
  ensure_all_finite(out.values(), "truncated_svd");
  return out;
}

Tensor smooth_features(const Tensor& x, const Graph& g, int steps) {
  if (steps < 0) throw ValidationError("smooth_features: steps must be >= 0");
  const int n = x.rows(), d = x.cols();
  if (n != g.n) throw ValidationError("smooth_features: feature rows != node count");
  DVec cur(x.values().begin(), x.values().end());
  for (int s = 0; s < steps; ++s) {
    DVec next = cur;  // self term
    for (const auto& [u, v] : g.edges) {
      for (int j = 0; j < d; ++j) {
        next[static_cast<std::size_t>(u) * d + j] += cur[static_cast<std::size_t>(v) * d + j];
        next[static_cast<std::size_t>(v) * d + j] += cur[static_cast<std::size_t>(u) * d + j];
      }
    }
    cur = std::move(next);
  }
  // re-standardize columns
  Tensor out = Tensor::zeros({n, d});
  for (int j = 0; j < d; ++j) {
    double mean = 0;
    for (int i = 0; i < n; ++i) mean += cur[static_cast<std::size_t>(i) * d + j];
    mean /= n;
    double var = 0;
    for (int i = 0; i < n; ++i) {
      const double dv = cur[static_cast<std::size_t>(i) * d + j] - mean;
      var += dv * dv;
    }
    var /= n;
    const double inv = var > 1e-24 ? 1.0 / std::sqrt(var) : 0.0;
    for (int i = 0; i < n; ++i)
      out(i, j) = static_cast<real>((cur[static_cast<std::size_t>(i) * d + j] - mean) * inv);
  }
  ensure_all_finite(out.values(), "smooth_features");
  return out;
}

LabelCanonicalization canonicalize_labels(const std::vector<int>& train_labels) {
  LabelCanonicalization lc;
  std::unordered_map<int, int> seen;
  for (int label : train_labels) {
    if (label < 0) throw ValidationError("canonicalize_labels: negative train label");
    if (seen.emplace(label, lc.n_classes).second) {
      lc.original_of.push_back(label);
      ++lc.n_classes;
    }
  }
  if (lc.n_classes == 0) throw ValidationError("canonicalize_labels: no train labels");
  const int max_label = *std::max_element(lc.original_of.begin(), lc.original_of.end());
  lc.canonical_of.assign(static_cast<std::size_t>(max_label) + 1, -1);
  for (int c = 0; c < lc.n_classes; ++c) lc.canonical_of[lc.original_of[c]] = c;
  return lc;
}

std::vector<int> member_permutation(uint64_t seed, int member_index, int d) {
  Rng rng(derive_seed(seed, "member", {static_cast<uint64_t>(member_index)}));
  std::vector<int> perm(static_cast<std::size_t>(d));
  std::iota(perm.begin(), perm.end(), 0);
  rng.shuffle(perm);
  return perm;
}

Tensor apply_member_transform(const Tensor& x, const std::vector<int>& perm, bool power_scale) {
  const int n = x.rows(), d = x.cols();
  if (static_cast<int>(perm.size()) != d) throw ValidationError("apply_member_transform: bad permutation size");
  Tensor out = Tensor::zeros({n, d});
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j) out(i, j) = x(i, perm[j]);
  if (power_scale) {
    for (real& v : out.values_mut())
      v = static_cast<real>((v < 0 ? -1.0 : 1.0) * std::pow(std::abs(static_cast<double>(v)), 0.9));
  }
  return out;
}

namespace {

PpdMatrix single_class_ppd(int n_test, int original_label) {
  PpdMatrix ppd;
  ppd.probs = Tensor::from({n_test, 1}, std::vector<real>(static_cast<std::size_t>(n_test), real(1)));
  ppd.class_labels = {original_label};
  return ppd;
}

}  // namespace

PpdMatrix predict(const Graph& g, const std::vector<int>& train_ids,
                  const std::vector<int>& train_labels, const ModelParams& params,
                  const InferenceConfig& icfg) {
  const ModelConfig& cfg = params.config;
  icfg.validate(cfg.d_feat_max);
  if (train_ids.empty()) throw ValidationError("predict: train_ids must be nonempty");
  if (train_ids.size() != train_labels.size())
    throw ValidationError("predict: train_ids/train_labels size mismatch");

  const LabelCanonicalization lc = canonicalize_labels(train_labels);
  if (lc.n_classes > cfg.max_classes)
    throw ValidationError("predict: " + std::to_string(lc.n_classes) + " classes exceed model capacity " +
                          std::to_string(cfg.max_classes));

  // test set: complement of train_ids, ascending
  std::vector<char> is_train(static_cast<std::size_t>(g.n), 0);
  for (int id : train_ids) {
    if (id < 0 || id >= g.n) throw ValidationError("predict: train id out of range");
    is_train[id] = 1;
  }
  std::vector<int> test_ids;
  for (int i = 0; i < g.n; ++i)
    if (!is_train[i]) test_ids.push_back(i);
  if (test_ids.empty()) throw ValidationError("predict: no test nodes");

  if (lc.n_classes == 1) return single_class_ppd(static_cast<int>(test_ids.size()), lc.original_of[0]);

  Tensor x = g.x;
  if (icfg.smoothing_steps > 0) x = smooth_features(x, g, icfg.smoothing_steps);
  if (icfg.n_components) {
    const int k = std::min(*icfg.n_components, std::min(x.rows(), x.cols()));
    if (k < x.cols()) x = truncated_svd(x, k, derive_seed(icfg.seed, "svd"));
  } else if (x.cols() > cfg.d_feat_max) {
    throw ValidationError("predict: feature width " + std::to_string(x.cols()) +
                          " exceeds capacity " + std::to_string(cfg.d_feat_max) +
                          " and SVD is disabled");
  }

  Task task;
  task.graph.n = g.n;
  task.graph.edges = g.edges;
  task.graph.n_classes = lc.n_classes;
  task.graph.y.assign(static_cast<std::size_t>(g.n), -1);
  for (std::size_t i = 0; i < train_ids.size(); ++i)
    task.graph.y[train_ids[i]] = lc.canonical_of[train_labels[i]];
  task.train_ids = train_ids;
  task.test_ids = test_ids;

  const int d = x.cols();
  Tensor acc = Tensor::zeros({static_cast<int>(test_ids.size()), lc.n_classes});
  for (int member = 0; member < icfg.ensemble_size; ++member) {
    const std::vector<int> perm = member_permutation(icfg.seed, member, d);
    Tensor xm = apply_member_transform(x, perm, member % 2 == 1);
    task.graph.x = pad_features(xm, cfg.d_feat_max);
    Tensor probs = softmax_rows(slice_cols(forward(task, params), 0, lc.n_classes));
    auto av = acc.values_mut();
    for (std::size_t i = 0; i < av.size(); ++i) av[i] += probs.values()[i];
  }
  // mean in probability space, rows renormalized exactly
  for (int i = 0; i < acc.rows(); ++i) {
    real row_sum = 0;
    for (int c = 0; c < acc.cols(); ++c) row_sum += acc(i, c);
    for (int c = 0; c < acc.cols(); ++c) acc(i, c) /= row_sum;
  }
  PpdMatrix ppd;
  ppd.probs = acc;
  ppd.class_labels = lc.original_of;
  return ppd;
}

PpdMatrix predict_task(const Task& task, const ModelParams& params, const InferenceConfig& icfg) {
  std::vector<int> train_labels;
  train_labels.reserve(task.train_ids.size());
  for (int id : task.train_ids) train_labels.push_back(task.graph.y[id]);

  PpdMatrix ppd = predict(task.graph, task.train_ids, train_labels, params, icfg);
  // predict() rows follow the ascending complement of train_ids; reorder to
  // the task's own test order when they differ
  std::vector<int> ascending = task.test_ids;
  std::sort(ascending.begin(), ascending.end());
  if (ascending == task.test_ids) return ppd;
  std::unordered_map<int, int> row_of;
  for (std::size_t i = 0; i < ascending.size(); ++i) row_of[ascending[i]] = static_cast<int>(i);
  Tensor reordered = Tensor::zeros({ppd.probs.rows(), ppd.probs.cols()});
  for (std::size_t i = 0; i < task.test_ids.size(); ++i) {
    const int src = row_of.at(task.test_ids[i]);
    for (int c = 0; c < ppd.probs.cols(); ++c) reordered(static_cast<int>(i), c) = ppd.probs(src, c);
  }
  ppd.probs = reordered;
  return ppd;
}

}  // namespace nodepfn
