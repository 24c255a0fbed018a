#include "nodepfn/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <utility>

namespace nodepfn {

namespace {

std::size_t shape_numel(const std::vector<int>& shape) {
  std::size_t n = 1;
  for (int s : shape) {
    if (s < 0) throw ValidationError("tensor: negative dimension");
    n *= static_cast<std::size_t>(s);
  }
  return n;
}

// Raw accumulate kernels, fixed inner reduction order (ascending k / i).
// Parallelism is over independent output rows only, so results are bitwise
// identical for any thread count.

void k_mm_nn(const real* a, const real* b, real* c, int m, int k, int n) {
#pragma omp parallel for schedule(static)
  for (int i = 0; i < m; ++i) {
    real* crow = c + static_cast<std::size_t>(i) * n;
    const real* arow = a + static_cast<std::size_t>(i) * k;
    for (int kk = 0; kk < k; ++kk) {
      const real aik = arow[kk];
      const real* brow = b + static_cast<std::size_t>(kk) * n;
      for (int j = 0; j < n; ++j) crow[j] += aik * brow[j];
    }
  }
}

void k_mm_nt(const real* a, const real* b, real* c, int m, int k, int n) {
#pragma omp parallel for schedule(static)
  for (int i = 0; i < m; ++i) {
    const real* arow = a + static_cast<std::size_t>(i) * k;
    real* crow = c + static_cast<std::size_t>(i) * n;
    for (int j = 0; j < n; ++j) {
      const real* brow = b + static_cast<std::size_t>(j) * k;
      real acc = 0;
      for (int kk = 0; kk < k; ++kk) acc += arow[kk] * brow[kk];
      crow[j] += acc;
    }
  }
}

// c[k,n] += a[m,k]^T * b[m,n]
void k_mm_tn(const real* a, const real* b, real* c, int m, int k, int n) {
#pragma omp parallel for schedule(static)
  for (int p = 0; p < k; ++p) {
    real* crow = c + static_cast<std::size_t>(p) * n;
    for (int i = 0; i < m; ++i) {
      const real aip = a[static_cast<std::size_t>(i) * k + p];
      const real* brow = b + static_cast<std::size_t>(i) * n;
      for (int j = 0; j < n; ++j) crow[j] += aip * brow[j];
    }
  }
}

void require_matrix(const Tensor& t, const char* op) {
  if (!t.defined() || t.rank() > 2) throw ValidationError(std::string(op) + ": expects rank <= 2");
}

bool want_grad(const Tensor& t) { return t.requires_grad(); }

}  // namespace

// ---- Tensor ----------------------------------------------------------------

Tensor Tensor::zeros(std::vector<int> shape, bool requires_grad) {
  Tensor t;
  t.d_ = std::make_shared<Data>();
  const std::size_t n = shape_numel(shape);
  t.d_->shape = std::move(shape);
  t.d_->values.assign(n, real(0));
  t.d_->requires_grad = requires_grad;
  if (requires_grad) t.d_->grad.assign(n, real(0));
  return t;
}

Tensor Tensor::scalar(real value, bool requires_grad) {
  Tensor t = zeros({}, requires_grad);
  t.d_->values.assign(1, value);
  if (requires_grad) t.d_->grad.assign(1, real(0));
  return t;
}

Tensor Tensor::from(std::vector<int> shape, std::vector<real> values, bool requires_grad) {
  if (shape_numel(shape) != values.size()) throw ValidationError("tensor: shape does not match value count");
  Tensor t = zeros(std::move(shape), requires_grad);
  t.d_->values = std::move(values);
  return t;
}

Tensor Tensor::uniform(std::vector<int> shape, real lo, real hi, Rng& rng, bool requires_grad) {
  Tensor t = zeros(std::move(shape), requires_grad);
  for (real& v : t.d_->values) v = static_cast<real>(rng.uniform(lo, hi));
  return t;
}

int Tensor::rows() const {
  if (rank() <= 1) return 1;
  return d_->shape[0];
}

int Tensor::cols() const {
  if (rank() == 0) return 1;
  return d_->shape.back();
}

real Tensor::item() const {
  if (size() != 1) throw ValidationError("tensor: item() on non-scalar");
  return d_->values[0];
}

std::span<const real> Tensor::grad() const {
  if (d_->grad.empty()) {
    static const std::vector<real> empty;
    return empty;
  }
  return d_->grad;
}

std::span<real> Tensor::grad_mut() {
  if (d_->grad.size() != d_->values.size()) d_->grad.assign(d_->values.size(), real(0));
  return d_->grad;
}

void Tensor::zero_grad() {
  std::fill(d_->grad.begin(), d_->grad.end(), real(0));
}

Tensor Tensor::clone() const {
  Tensor t;
  t.d_ = std::make_shared<Data>(*d_);
  return t;
}

// ---- GradTape ---------------------------------------------------------------

void GradTape::clear() {
  entries_.clear();
  consumed_ = false;
}

void GradTape::record(std::string op, std::function<void()> fn) {
  entries_.push_back({std::move(op), std::move(fn)});
}

void backward(const Tensor& loss, GradTape& tape) {
  if (tape.consumed_) throw ValidationError("backward: tape already consumed");
  if (!loss.defined() || loss.size() != 1) throw ValidationError("backward: loss must be scalar");
  tape.consumed_ = true;
  Tensor l = loss;
  l.grad_mut()[0] = real(1);
  for (auto it = tape.entries_.rbegin(); it != tape.entries_.rend(); ++it) it->fn();
}

// ---- kernel helpers ---------------------------------------------------------

void ensure_all_finite(std::span<const real> v, const char* op) {
  for (real x : v) {
    if (!std::isfinite(x)) throw NumericalError(std::string(op) + ": non-finite value");
  }
}

real max_abs_diff(const Tensor& a, const Tensor& b) {
  if (a.size() != b.size()) throw ValidationError("max_abs_diff: size mismatch");
  real m = 0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a.values()[i] - b.values()[i]));
  return m;
}

namespace {

Tensor make_output(std::vector<int> shape, bool requires_grad) {
  return Tensor::zeros(std::move(shape), requires_grad);
}

// Accumulates src into dst.grad when dst wants one.
void accum(Tensor& dst, std::span<const real> src) {
  auto g = dst.grad_mut();
  for (std::size_t i = 0; i < src.size(); ++i) g[i] += src[i];
}

}  // namespace

// ---- kernels ---------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b, GradTape* tape) {
  require_matrix(a, "matmul");
  require_matrix(b, "matmul");
  const int m = a.rows(), k = a.cols(), k2 = b.rows(), n = b.cols();
  if (k != k2) throw ValidationError("matmul: inner dimensions disagree");
  Tensor out = make_output({m, n}, want_grad(a) || want_grad(b));
  k_mm_nn(a.values().data(), b.values().data(), out.values_mut().data(), m, k, n);
  ensure_all_finite(out.values(), "matmul");
  if (tape && out.requires_grad()) {
    Tensor ac = a, bc = b, oc = out;
    tape->record("matmul", [ac, bc, oc, m, k, n]() mutable {
      const auto go = oc.grad();
      if (go.empty()) return;
      if (ac.requires_grad()) k_mm_nt(go.data(), bc.values().data(), ac.grad_mut().data(), m, n, k);
      if (bc.requires_grad()) k_mm_tn(ac.values().data(), go.data(), bc.grad_mut().data(), m, k, n);
    });
  }
  return out;
}

Tensor matmul_nt(const Tensor& a, const Tensor& b, GradTape* tape) {
  require_matrix(a, "matmul_nt");
  require_matrix(b, "matmul_nt");
  const int m = a.rows(), k = a.cols(), n = b.rows();
  if (k != b.cols()) throw ValidationError("matmul_nt: inner dimensions disagree");
  Tensor out = make_output({m, n}, want_grad(a) || want_grad(b));
  k_mm_nt(a.values().data(), b.values().data(), out.values_mut().data(), m, k, n);
  ensure_all_finite(out.values(), "matmul_nt");
  if (tape && out.requires_grad()) {
    Tensor ac = a, bc = b, oc = out;
    tape->record("matmul_nt", [ac, bc, oc, m, k, n]() mutable {
      const auto go = oc.grad();
      if (go.empty()) return;
      if (ac.requires_grad()) k_mm_nn(go.data(), bc.values().data(), ac.grad_mut().data(), m, n, k);
      if (bc.requires_grad()) k_mm_tn(go.data(), ac.values().data(), bc.grad_mut().data(), m, n, k);
    });
  }
  return out;
}

Tensor add(const Tensor& a, const Tensor& b, GradTape* tape) {
  if (a.shape() != b.shape()) throw ValidationError("add: shape mismatch");
  Tensor out = make_output(a.shape(), want_grad(a) || want_grad(b));
  auto ov = out.values_mut();
  for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = a.values()[i] + b.values()[i];
  ensure_all_finite(out.values(), "add");
  if (tape && out.requires_grad()) {
    Tensor ac = a, bc = b, oc = out;
    tape->record("add", [ac, bc, oc]() mutable {
      const auto go = oc.grad();
      if (go.empty()) return;
      if (ac.requires_grad()) accum(ac, go);
      if (bc.requires_grad()) accum(bc, go);
    });
  }
  return out;
}

Tensor scale(const Tensor& a, real s, GradTape* tape) {
  Tensor out = make_output(a.shape(), want_grad(a));
  auto ov = out.values_mut();
  for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = a.values()[i] * s;
  ensure_all_finite(out.values(), "scale");
  if (tape && out.requires_grad()) {
    Tensor ac = a, oc = out;
    tape->record("scale", [ac, oc, s]() mutable {
      const auto go = oc.grad();
      if (go.empty()) return;
      auto g = ac.grad_mut();
      for (std::size_t i = 0; i < go.size(); ++i) g[i] += go[i] * s;
    });
  }
  return out;
}

Tensor gelu(const Tensor& a, GradTape* tape) {
  constexpr real inv_sqrt2 = real(0.7071067811865475244);
  constexpr real inv_sqrt2pi = real(0.3989422804014326779);
  Tensor out = make_output(a.shape(), want_grad(a));
  auto ov = out.values_mut();
  const auto av = a.values();
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(ov.size()); ++i) {
    const real x = av[i];
    ov[i] = real(0.5) * x * (real(1) + std::erf(x * inv_sqrt2));
  }
  ensure_all_finite(out.values(), "gelu");
  if (tape && out.requires_grad()) {
    Tensor ac = a, oc = out;
    tape->record("gelu", [ac, oc]() mutable {
      const auto go = oc.grad();
      if (go.empty()) return;
      auto g = ac.grad_mut();
      const auto av2 = ac.values();
      for (std::size_t i = 0; i < go.size(); ++i) {
        const real x = av2[i];
        const real cdf = real(0.5) * (real(1) + std::erf(x * inv_sqrt2));
        const real pdf = inv_sqrt2pi * std::exp(real(-0.5) * x * x);
        g[i] += go[i] * (cdf + x * pdf);
      }
    });
  }
  return out;
}

Tensor softmax_rows(const Tensor& x, GradTape* tape) {
  require_matrix(x, "softmax_rows");
  ensure_all_finite(x.values(), "softmax_rows(input)");
  const int m = x.rows(), n = x.cols();
  if (n < 1) throw ValidationError("softmax_rows: empty rows");
  Tensor out = make_output({m, n}, want_grad(x));
  const auto xv = x.values();
  auto ov = out.values_mut();
#pragma omp parallel for schedule(static)
  for (int i = 0; i < m; ++i) {
    const real* row = xv.data() + static_cast<std::size_t>(i) * n;
    real* orow = ov.data() + static_cast<std::size_t>(i) * n;
    real mx = row[0];
    for (int j = 1; j < n; ++j) mx = std::max(mx, row[j]);
    real z = 0;
    for (int j = 0; j < n; ++j) {
      orow[j] = std::exp(row[j] - mx);
      z += orow[j];
    }
    for (int j = 0; j < n; ++j) orow[j] /= z;
  }
  ensure_all_finite(out.values(), "softmax_rows");
  if (tape && out.requires_grad()) {
    Tensor xc = x, oc = out;
    tape->record("softmax_rows", [xc, oc, m, n]() mutable {
      const auto go = oc.grad();
      if (go.empty()) return;
      auto g = xc.grad_mut();
      const auto p = oc.values();
      for (int i = 0; i < m; ++i) {
        const std::size_t off = static_cast<std::size_t>(i) * n;
        real dot = 0;
        for (int j = 0; j < n; ++j) dot += go[off + j] * p[off + j];
        for (int j = 0; j < n; ++j) g[off + j] += p[off + j] * (go[off + j] - dot);
      }
    });
  }
  return out;
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, GradTape* tape) {
  require_matrix(x, "layer_norm");
  const int m = x.rows(), d = x.cols();
  if (d < 1) throw ValidationError("layer_norm: d must be >= 1");
  if (gamma.size() != static_cast<std::size_t>(d) || beta.size() != static_cast<std::size_t>(d))
    throw ValidationError("layer_norm: gamma/beta size mismatch");
  constexpr real eps = real(1e-5);
  Tensor out = make_output({m, d}, want_grad(x) || want_grad(gamma) || want_grad(beta));
  // per-row inverse stddev, kept for backward
  std::vector<real> inv_std(static_cast<std::size_t>(m));
  std::vector<real> mean(static_cast<std::size_t>(m));
  const auto xv = x.values();
  auto ov = out.values_mut();
#pragma omp parallel for schedule(static)
  for (int i = 0; i < m; ++i) {
    const real* row = xv.data() + static_cast<std::size_t>(i) * d;
    real mu = 0;
    for (int j = 0; j < d; ++j) mu += row[j];
    mu /= d;
    real var = 0;
    for (int j = 0; j < d; ++j) var += (row[j] - mu) * (row[j] - mu);
    var /= d;
    const real inv = real(1) / std::sqrt(var + eps);
    mean[static_cast<std::size_t>(i)] = mu;
    inv_std[static_cast<std::size_t>(i)] = inv;
    real* orow = ov.data() + static_cast<std::size_t>(i) * d;
    for (int j = 0; j < d; ++j) orow[j] = gamma.values()[j] * (row[j] - mu) * inv + beta.values()[j];
  }
  ensure_all_finite(out.values(), "layer_norm");
  if (tape && out.requires_grad()) {
    Tensor xc = x, gc = gamma, bc = beta, oc = out;
    tape->record("layer_norm",
                 [xc, gc, bc, oc, m, d, mean = std::move(mean), inv_std = std::move(inv_std)]() mutable {
      const auto go = oc.grad();
      if (go.empty()) return;
      const auto xv2 = xc.values();
      const auto gv = gc.values();
      for (int i = 0; i < m; ++i) {
        const std::size_t off = static_cast<std::size_t>(i) * d;
        const real mu = mean[static_cast<std::size_t>(i)];
        const real inv = inv_std[static_cast<std::size_t>(i)];
        real sum_dxhat = 0, sum_dxhat_xhat = 0;
        for (int j = 0; j < d; ++j) {
          const real xhat = (xv2[off + j] - mu) * inv;
          const real dxhat = go[off + j] * gv[j];
          sum_dxhat += dxhat;
          sum_dxhat_xhat += dxhat * xhat;
        }
        if (gc.requires_grad()) {
          auto gg = gc.grad_mut();
          for (int j = 0; j < d; ++j) gg[j] += go[off + j] * (xv2[off + j] - mu) * inv;
        }
        if (bc.requires_grad()) {
          auto gb = bc.grad_mut();
          for (int j = 0; j < d; ++j) gb[j] += go[off + j];
        }
        if (xc.requires_grad()) {
          auto gx = xc.grad_mut();
          for (int j = 0; j < d; ++j) {
            const real xhat = (xv2[off + j] - mu) * inv;
            const real dxhat = go[off + j] * gv[j];
            gx[off + j] += inv * (dxhat - sum_dxhat / d - xhat * sum_dxhat_xhat / d);
          }
        }
      }
    });
  }
  return out;
}

Tensor gather_rows(const Tensor& x, const std::vector<int>& ids, GradTape* tape) {
  require_matrix(x, "gather_rows");
  const int n = x.rows(), d = x.cols();
  for (int id : ids) {
    if (id < 0 || id >= n) throw ValidationError("gather_rows: index out of range");
  }
  Tensor out = make_output({static_cast<int>(ids.size()), d}, want_grad(x));
  auto ov = out.values_mut();
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const real* src = x.values().data() + static_cast<std::size_t>(ids[i]) * d;
    std::copy(src, src + d, ov.data() + i * d);
  }
  if (tape && out.requires_grad()) {
    Tensor xc = x, oc = out;
    tape->record("gather_rows", [xc, oc, ids, d]() mutable {
      const auto go = oc.grad();
      if (go.empty()) return;
      auto g = xc.grad_mut();
      for (std::size_t i = 0; i < ids.size(); ++i) {
        const std::size_t src = i * d, dst = static_cast<std::size_t>(ids[i]) * d;
        for (int j = 0; j < d; ++j) g[dst + j] += go[src + j];
      }
    });
  }
  return out;
}

Tensor slice_cols(const Tensor& x, int begin, int end, GradTape* tape) {
  require_matrix(x, "slice_cols");
  const int m = x.rows(), n = x.cols();
  if (begin < 0 || end > n || begin >= end) throw ValidationError("slice_cols: bad range");
  const int w = end - begin;
  Tensor out = make_output({m, w}, want_grad(x));
  auto ov = out.values_mut();
  for (int i = 0; i < m; ++i)
    std::copy(x.values().data() + static_cast<std::size_t>(i) * n + begin,
              x.values().data() + static_cast<std::size_t>(i) * n + end,
              ov.data() + static_cast<std::size_t>(i) * w);
  if (tape && out.requires_grad()) {
    Tensor xc = x, oc = out;
    tape->record("slice_cols", [xc, oc, m, n, w, begin]() mutable {
      const auto go = oc.grad();
      if (go.empty()) return;
      auto g = xc.grad_mut();
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < w; ++j)
          g[static_cast<std::size_t>(i) * n + begin + j] += go[static_cast<std::size_t>(i) * w + j];
    });
  }
  return out;
}

Tensor concat_cols(const std::vector<Tensor>& xs, GradTape* tape) {
  if (xs.empty()) throw ValidationError("concat_cols: empty input");
  const int m = xs.front().rows();
  int total = 0;
  bool rg = false;
  for (const Tensor& t : xs) {
    require_matrix(t, "concat_cols");
    if (t.rows() != m) throw ValidationError("concat_cols: row count mismatch");
    total += t.cols();
    rg = rg || want_grad(t);
  }
  Tensor out = make_output({m, total}, rg);
  auto ov = out.values_mut();
  int at = 0;
  for (const Tensor& t : xs) {
    const int w = t.cols();
    for (int i = 0; i < m; ++i)
      std::copy(t.values().data() + static_cast<std::size_t>(i) * w,
                t.values().data() + static_cast<std::size_t>(i) * w + w,
                ov.data() + static_cast<std::size_t>(i) * total + at);
    at += w;
  }
  if (tape && out.requires_grad()) {
    std::vector<Tensor> xc = xs;
    Tensor oc = out;
    tape->record("concat_cols", [xc, oc, m, total]() mutable {
      const auto go = oc.grad();
      if (go.empty()) return;
      int at2 = 0;
      for (Tensor& t : xc) {
        const int w = t.cols();
        if (t.requires_grad()) {
          auto g = t.grad_mut();
          for (int i = 0; i < m; ++i)
            for (int j = 0; j < w; ++j)
              g[static_cast<std::size_t>(i) * w + j] += go[static_cast<std::size_t>(i) * total + at2 + j];
        }
        at2 += w;
      }
    });
  }
  return out;
}

Tensor sum_all(const Tensor& x, GradTape* tape) {
  real acc = 0;
  for (real v : x.values()) acc += v;
  Tensor out = Tensor::scalar(acc, want_grad(x));
  ensure_all_finite(out.values(), "sum_all");
  if (tape && out.requires_grad()) {
    Tensor xc = x, oc = out;
    tape->record("sum_all", [xc, oc]() mutable {
      const auto go = oc.grad();
      if (go.empty()) return;
      auto g = xc.grad_mut();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += go[0];
    });
  }
  return out;
}

Tensor dropout(const Tensor& x, real p, Rng& rng, GradTape* tape) {
  if (p < 0 || p >= 1) throw ValidationError("dropout: p must be in [0,1)");
  if (p == 0) return x;  // identity; draws nothing from rng
  const real keep = real(1) - p;
  std::vector<real> mask(x.size());
  for (real& m : mask) m = rng.bernoulli(keep) ? real(1) / keep : real(0);
  Tensor out = make_output(x.shape(), want_grad(x));
  auto ov = out.values_mut();
  for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = x.values()[i] * mask[i];
  if (tape && out.requires_grad()) {
    Tensor xc = x, oc = out;
    tape->record("dropout", [xc, oc, mask = std::move(mask)]() mutable {
      const auto go = oc.grad();
      if (go.empty()) return;
      auto g = xc.grad_mut();
      for (std::size_t i = 0; i < go.size(); ++i) g[i] += go[i] * mask[i];
    });
  }
  return out;
}

Tensor softmax_cross_entropy(const Tensor& logits, const std::vector<int>& labels, int n_classes,
                             GradTape* tape) {
  require_matrix(logits, "softmax_cross_entropy");
  const int m = logits.rows(), k = logits.cols();
  if (m == 0) throw ValidationError("softmax_cross_entropy: empty test set");
  if (n_classes < 1 || n_classes > k) throw ValidationError("softmax_cross_entropy: bad class count");
  if (static_cast<int>(labels.size()) != m) throw ValidationError("softmax_cross_entropy: label count mismatch");
  // restricted softmax over the first n_classes columns
  std::vector<real> probs(static_cast<std::size_t>(m) * n_classes);
  real total = 0;
  for (int i = 0; i < m; ++i) {
    const int y = labels[i];
    if (y < 0 || y >= n_classes) throw ValidationError("softmax_cross_entropy: label out of range");
    const real* row = logits.values().data() + static_cast<std::size_t>(i) * k;
    real mx = row[0];
    for (int j = 1; j < n_classes; ++j) mx = std::max(mx, row[j]);
    real z = 0;
    for (int j = 0; j < n_classes; ++j) z += std::exp(row[j] - mx);
    const real log_z = std::log(z) + mx;
    for (int j = 0; j < n_classes; ++j)
      probs[static_cast<std::size_t>(i) * n_classes + j] = std::exp(row[j] - log_z);
    const real p_y = std::max(probs[static_cast<std::size_t>(i) * n_classes + y], real(1e-12));
    total += -std::log(p_y);
  }
  Tensor out = Tensor::scalar(total / m, want_grad(logits));
  ensure_all_finite(out.values(), "softmax_cross_entropy");
  if (tape && out.requires_grad()) {
    Tensor lc = logits, oc = out;
    tape->record("softmax_cross_entropy", [lc, oc, labels, n_classes, m, k, probs = std::move(probs)]() mutable {
      const auto go = oc.grad();
      if (go.empty()) return;
      const real s = go[0] / m;
      auto g = lc.grad_mut();
      for (int i = 0; i < m; ++i) {
        for (int j = 0; j < n_classes; ++j) {
          const real p = probs[static_cast<std::size_t>(i) * n_classes + j];
          g[static_cast<std::size_t>(i) * k + j] += s * (p - (j == labels[i] ? real(1) : real(0)));
        }
      }
    });
  }
  return out;
}

real finite_difference_check(const std::function<Tensor(GradTape*)>& f, std::vector<Tensor> params,
                             real step, int n_samples, Rng& rng) {
  GradTape tape;
  Tensor loss = f(&tape);
  backward(loss, tape);
  std::vector<std::vector<real>> analytic;
  std::size_t total = 0;
  for (Tensor& p : params) {
    auto g = p.grad();
    analytic.emplace_back(g.begin(), g.end());
    if (analytic.back().empty()) analytic.back().assign(p.size(), real(0));
    total += p.size();
  }
  if (total == 0) throw ValidationError("finite_difference_check: no parameters");
  real worst = 0;
  for (int s = 0; s < n_samples; ++s) {
    std::size_t flat = rng.uniform_int(static_cast<uint64_t>(total));
    std::size_t pi = 0;
    while (flat >= params[pi].size()) flat -= params[pi++].size();
    real& slot = params[pi].values_mut()[flat];
    const real orig = slot;
    slot = orig + step;
    const real lp = f(nullptr).item();
    slot = orig - step;
    const real lm = f(nullptr).item();
    slot = orig;
    const real numeric = (lp - lm) / (2 * step);
    const real a = analytic[pi][flat];
    worst = std::max(worst, std::abs(a - numeric) / (std::abs(a) + real(1e-8)));
  }
  return worst;
}

}  // namespace nodepfn
