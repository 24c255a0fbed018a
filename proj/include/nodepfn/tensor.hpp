#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "nodepfn/error.hpp"
#include "nodepfn/rng.hpp"

namespace nodepfn {

// Scalar type of all learnable state. Default is 64-bit; configure with
// -DNODEPFN_REAL32=ON for 32-bit training builds.
#ifdef NODEPFN_REAL32
using real = float;
#else
using real = double;
#endif

// Dense row-major tensor with value semantics over shared storage. Values are
// immutable once a tensor has entered a GradTape op; gradients accumulate in a
// side buffer. Rank 0 (scalar), 1 and 2 are supported.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(std::vector<int> shape, bool requires_grad = false);
  static Tensor scalar(real value, bool requires_grad = false);
  static Tensor from(std::vector<int> shape, std::vector<real> values, bool requires_grad = false);
  static Tensor uniform(std::vector<int> shape, real lo, real hi, Rng& rng, bool requires_grad = false);

  bool defined() const { return static_cast<bool>(d_); }
  const std::vector<int>& shape() const { return d_->shape; }
  int rank() const { return static_cast<int>(d_->shape.size()); }
  // Rows/cols of a matrix; a vector is treated as a single row.
  int rows() const;
  int cols() const;
  std::size_t size() const { return d_->values.size(); }

  std::span<const real> values() const { return d_->values; }
  std::span<real> values_mut() { return d_->values; }
  real operator()(int r, int c) const { return d_->values[static_cast<std::size_t>(r) * cols() + c]; }
  real& operator()(int r, int c) { return d_->values[static_cast<std::size_t>(r) * cols() + c]; }
  real item() const;

  bool requires_grad() const { return d_->requires_grad; }
  void set_requires_grad(bool v) { d_->requires_grad = v; }

  // Gradient accumulated by backward(); zeros when untouched.
  std::span<const real> grad() const;
  std::span<real> grad_mut();
  void zero_grad();

  // Identity of the underlying storage (stable key for optimizer state).
  const void* id() const { return d_.get(); }

  Tensor clone() const;

 private:
  struct Data {
    std::vector<int> shape;
    std::vector<real> values;
    std::vector<real> grad;  // lazily sized
    bool requires_grad = false;
  };
  std::shared_ptr<Data> d_;
  friend class GradTape;
};

// Ordered record of differentiable operations. Single-owner, single-threaded;
// cleared (or destroyed) between training steps. Ops append an entry when any
// input requires a gradient; backward() replays the entries in reverse once.
class GradTape {
 public:
  GradTape() = default;
  GradTape(const GradTape&) = delete;
  GradTape& operator=(const GradTape&) = delete;

  std::size_t size() const { return entries_.size(); }
  bool consumed() const { return consumed_; }
  void clear();

  // Extension point for custom ops: `fn` pulls the output gradient and
  // accumulates into input gradients when invoked during backward().
  void record(std::string op, std::function<void()> fn);

 private:
  struct Entry {
    std::string op;
    std::function<void()> fn;
  };
  std::vector<Entry> entries_;
  bool consumed_ = false;
  friend void backward(const Tensor&, GradTape&);
};

// Replays the tape in reverse from a scalar loss. Every requires_grad tensor
// that participated receives an accumulated gradient; untouched tensors read
// as zero. Throws if the tape was already consumed or loss is not scalar.
void backward(const Tensor& loss, GradTape& tape);

// ---- kernels -------------------------------------------------------------
// Every kernel validates shapes, runs with a fixed reduction order, and
// checks its output for non-finite values (NumericalError on violation).
// Passing a tape records the backward closure when any input requires grad.

Tensor matmul(const Tensor& a, const Tensor& b, GradTape* tape = nullptr);     // a[m,k] * b[k,n]
Tensor matmul_nt(const Tensor& a, const Tensor& b, GradTape* tape = nullptr);  // a[m,k] * b[n,k]^T
Tensor add(const Tensor& a, const Tensor& b, GradTape* tape = nullptr);
Tensor scale(const Tensor& a, real s, GradTape* tape = nullptr);
Tensor gelu(const Tensor& a, GradTape* tape = nullptr);
Tensor softmax_rows(const Tensor& x, GradTape* tape = nullptr);
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, GradTape* tape = nullptr);
Tensor gather_rows(const Tensor& x, const std::vector<int>& ids, GradTape* tape = nullptr);
Tensor slice_cols(const Tensor& x, int begin, int end, GradTape* tape = nullptr);
Tensor concat_cols(const std::vector<Tensor>& xs, GradTape* tape = nullptr);
Tensor sum_all(const Tensor& x, GradTape* tape = nullptr);
// Inverted dropout; keep-probability scaling applied at train time.
Tensor dropout(const Tensor& x, real p, Rng& rng, GradTape* tape = nullptr);

// Fused restricted softmax + mean negative log-likelihood over rows.
// logits[i, labels[i]] participates against the first `n_classes` columns
// only; log probabilities are clamped below at 1e-12.
Tensor softmax_cross_entropy(const Tensor& logits, const std::vector<int>& labels, int n_classes,
                             GradTape* tape = nullptr);

real max_abs_diff(const Tensor& a, const Tensor& b);
void ensure_all_finite(std::span<const real> v, const char* op);

// Max over sampled coordinates of |analytic - central difference| /
// (|analytic| + 1e-8). `f` must rebuild the loss from scratch on every call
// (recording onto the given tape when non-null) and be deterministic.
real finite_difference_check(const std::function<Tensor(GradTape*)>& f, std::vector<Tensor> params,
                             real step, int n_samples, Rng& rng);

}  // namespace nodepfn
