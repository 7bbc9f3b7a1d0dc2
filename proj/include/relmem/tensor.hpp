#pragma once

#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <string>
#include <vector>

#include "relmem/rng.hpp"

namespace relmem {

using Shape = std::vector<int64_t>;

int64_t numel_of(const Shape& shape);

// Dense 64-bit float tensor with an optional gradient buffer. Values are
// written once by the producing op; the gradient buffer is allocated lazily
// on first accumulation. Copying a Tensor copies the handle, not the data.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool needs_grad = false);
  static Tensor full(Shape shape, double value, bool needs_grad = false);
  static Tensor from(Shape shape, std::vector<double> data,
                     bool needs_grad = false);
  static Tensor scalar(double value, bool needs_grad = false);
  static Tensor randn(Shape shape, double stddev, Rng& rng,
                      bool needs_grad = false);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const;
  int64_t numel() const;
  int64_t rows() const;  // dim 0 (1 for scalars)
  int64_t cols() const;  // dim 1 (1 for vectors/scalars)
  bool needs_grad() const;
  void set_needs_grad(bool v);

  std::vector<double>& v();
  const std::vector<double>& v() const;
  // gradient buffer; allocates zeros on first use
  std::vector<double>& g();
  bool grad_allocated() const;
  void zero_grad();

  double item() const;       // value of a 1-element tensor
  double grad_item() const;  // gradient of a 1-element tensor (0 if unset)

  bool same_impl(const Tensor& o) const { return impl_ == o.impl_; }

 private:
  struct Impl {
    Shape shape;
    std::vector<double> v;
    std::vector<double> g;  // empty until first accumulation
    bool needs_grad = false;
  };
  std::shared_ptr<Impl> impl_;
  Impl& ref() const;
};

// Reverse-mode tape. Every op appends at most one node in forward order,
// which is a topological order of the computation by construction;
// backward() replays the nodes once in reverse. A tape is built per segment
// and never shared between threads.
class Tape {
 public:
  explicit Tape(bool recording = true) : recording_(recording) {}

  bool recording() const { return recording_; }
  size_t size() const { return nodes_.size(); }

  // elementwise (shapes must match)
  Tensor add(const Tensor& a, const Tensor& b);
  Tensor sub(const Tensor& a, const Tensor& b);
  Tensor mul(const Tensor& a, const Tensor& b);
  Tensor scale(const Tensor& a, double c);
  Tensor one_minus(const Tensor& a);

  // m[r,c] + row vector v[c] broadcast over rows
  Tensor add_rowvec(const Tensor& m, const Tensor& v);

  // 2-D products
  Tensor matmul(const Tensor& a, const Tensor& b);     // [m,k]x[k,n]
  Tensor matmul_nt(const Tensor& a, const Tensor& b);  // [m,k]x[n,k]^T

  // row gather from a [V,d] table (embedding lookup; scatter-add backward)
  Tensor gather_rows(const Tensor& table, std::vector<int64_t> ids);
  // flat gather src[idx[i]] reshaped to out_shape (scatter-add backward)
  Tensor gather(const Tensor& src, std::vector<int64_t> idx, Shape out_shape);

  Tensor concat_rows(const std::vector<Tensor>& parts);
  Tensor slice_rows(const Tensor& a, int64_t lo, int64_t hi);
  Tensor concat_cols(const std::vector<Tensor>& parts);
  Tensor slice_cols(const Tensor& a, int64_t lo, int64_t hi);

  Tensor sigmoid(const Tensor& a);
  Tensor tanh(const Tensor& a);
  Tensor gelu(const Tensor& a);  // exact erf form x * Phi(x)

  // row-wise normalization with learned gain/bias (eps 1e-5)
  Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias);

  // row-wise softmax of scale*scores; mask (optional) marks admissible
  // entries, masked outputs are exactly 0; throws on a fully masked row
  Tensor softmax(const Tensor& scores, const std::vector<uint8_t>* mask,
                 double scale);

  // inverted dropout; identity when rate == 0 (consumes no rng draws then)
  Tensor dropout(const Tensor& a, double rate, Rng& rng);

  // identity forward, zero gradient backward
  Tensor stop_gradient(const Tensor& a);

  Tensor sum(const Tensor& a);  // scalar

  // mean next-token negative log-likelihood of logits [T,V] against targets
  Tensor cross_entropy_mean(const Tensor& logits,
                            const std::vector<int64_t>& targets);

  // seeds d(loss)/d(loss) = 1 and replays the tape in reverse, accumulating
  // into the grad buffers of every participating tensor
  void backward(const Tensor& loss);

 private:
  struct Node {
    std::function<void()> back;
  };
  bool track(std::initializer_list<const Tensor*> inputs) const;
  void push(std::function<void()> f);
  std::vector<Node> nodes_;
  bool recording_ = true;
};

// forward-only helpers shared by eval paths and tests
std::vector<double> per_token_nll(const Tensor& logits,
                                  const std::vector<int64_t>& targets);
double sigmoid_scalar(double x);
double gelu_scalar(double x);
// softmax of a plain vector (no tape), scale 1
std::vector<double> softmax_vector(const std::vector<double>& scores);

}  // namespace relmem
