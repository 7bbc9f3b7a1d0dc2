#include "relmem/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "relmem/kernels.hpp"

namespace relmem {

namespace {
constexpr double kLayerNormEps = 1e-5;
constexpr double kInvSqrt2 = 0.7071067811865475244;
constexpr double kInvSqrt2Pi = 0.3989422804014326779;

void require(bool ok, const char* msg) {
  if (!ok) throw std::invalid_argument(msg);
}
}  // namespace

int64_t numel_of(const Shape& shape) {
  int64_t n = 1;
  for (int64_t d : shape) {
    if (d <= 0) throw std::invalid_argument("tensor dims must be positive");
    n *= d;
  }
  return n;
}

Tensor::Impl& Tensor::ref() const {
  if (!impl_) throw std::logic_error("use of undefined Tensor");
  return *impl_;
}

Tensor Tensor::zeros(Shape shape, bool needs_grad) {
  Tensor t;
  t.impl_ = std::make_shared<Impl>();
  t.impl_->shape = std::move(shape);
  t.impl_->v.assign(static_cast<size_t>(numel_of(t.impl_->shape)), 0.0);
  t.impl_->needs_grad = needs_grad;
  return t;
}

Tensor Tensor::full(Shape shape, double value, bool needs_grad) {
  Tensor t = zeros(std::move(shape), needs_grad);
  std::fill(t.v().begin(), t.v().end(), value);
  return t;
}

Tensor Tensor::from(Shape shape, std::vector<double> data, bool needs_grad) {
  if (numel_of(shape) != static_cast<int64_t>(data.size())) {
    throw std::invalid_argument("Tensor::from: data length != product(shape)");
  }
  Tensor t;
  t.impl_ = std::make_shared<Impl>();
  t.impl_->shape = std::move(shape);
  t.impl_->v = std::move(data);
  t.impl_->needs_grad = needs_grad;
  return t;
}

Tensor Tensor::scalar(double value, bool needs_grad) {
  return from({}, {value}, needs_grad);
}

Tensor Tensor::randn(Shape shape, double stddev, Rng& rng, bool needs_grad) {
  Tensor t = zeros(std::move(shape), needs_grad);
  for (double& x : t.v()) x = stddev * rng.normal();
  return t;
}

const Shape& Tensor::shape() const { return ref().shape; }
int64_t Tensor::numel() const { return static_cast<int64_t>(ref().v.size()); }
int64_t Tensor::rows() const {
  const Shape& s = ref().shape;
  return s.empty() ? 1 : s[0];
}
int64_t Tensor::cols() const {
  const Shape& s = ref().shape;
  return s.size() < 2 ? 1 : s[1];
}
bool Tensor::needs_grad() const { return ref().needs_grad; }
void Tensor::set_needs_grad(bool v) { ref().needs_grad = v; }

std::vector<double>& Tensor::v() { return ref().v; }
const std::vector<double>& Tensor::v() const { return ref().v; }

std::vector<double>& Tensor::g() {
  Impl& im = ref();
  if (im.g.size() != im.v.size()) im.g.assign(im.v.size(), 0.0);
  return im.g;
}

bool Tensor::grad_allocated() const { return !ref().g.empty(); }

void Tensor::zero_grad() {
  Impl& im = ref();
  std::fill(im.g.begin(), im.g.end(), 0.0);
}

double Tensor::item() const {
  require(numel() == 1, "item(): tensor is not a single element");
  return ref().v[0];
}

double Tensor::grad_item() const {
  require(numel() == 1, "grad_item(): tensor is not a single element");
  return ref().g.empty() ? 0.0 : ref().g[0];
}

double sigmoid_scalar(double x) {
  if (x >= 0) {
    return 1.0 / (1.0 + std::exp(-x));
  }
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double gelu_scalar(double x) {
  return x * 0.5 * std::erfc(-x * kInvSqrt2);
}

std::vector<double> softmax_vector(const std::vector<double>& scores) {
  std::vector<double> out(scores.size());
  kernels::softmax_rows(scores.data(), nullptr, 1.0, out.data(), 1,
                        static_cast<int64_t>(scores.size()));
  return out;
}

bool Tape::track(std::initializer_list<const Tensor*> inputs) const {
  if (!recording_) return false;
  for (const Tensor* t : inputs) {
    if (t->needs_grad()) return true;
  }
  return false;
}

void Tape::push(std::function<void()> f) { nodes_.push_back({std::move(f)}); }

Tensor Tape::add(const Tensor& a, const Tensor& b) {
  require(a.shape() == b.shape(), "add: shape mismatch");
  Tensor out = Tensor::zeros(a.shape());
  const int64_t n = a.numel();
  for (int64_t i = 0; i < n; ++i) out.v()[i] = a.v()[i] + b.v()[i];
  if (track({&a, &b})) {
    out.set_needs_grad(true);
    const bool ta = a.needs_grad(), tb = b.needs_grad();
    push([a, b, out, ta, tb]() mutable {
      const auto& go = out.g();
      if (ta) {
        auto& ga = a.g();
        for (size_t i = 0; i < go.size(); ++i) ga[i] += go[i];
      }
      if (tb) {
        auto& gb = b.g();
        for (size_t i = 0; i < go.size(); ++i) gb[i] += go[i];
      }
    });
  }
  return out;
}

Tensor Tape::sub(const Tensor& a, const Tensor& b) {
  require(a.shape() == b.shape(), "sub: shape mismatch");
  Tensor out = Tensor::zeros(a.shape());
  const int64_t n = a.numel();
  for (int64_t i = 0; i < n; ++i) out.v()[i] = a.v()[i] - b.v()[i];
  if (track({&a, &b})) {
    out.set_needs_grad(true);
    const bool ta = a.needs_grad(), tb = b.needs_grad();
    push([a, b, out, ta, tb]() mutable {
      const auto& go = out.g();
      if (ta) {
        auto& ga = a.g();
        for (size_t i = 0; i < go.size(); ++i) ga[i] += go[i];
      }
      if (tb) {
        auto& gb = b.g();
        for (size_t i = 0; i < go.size(); ++i) gb[i] -= go[i];
      }
    });
  }
  return out;
}

Tensor Tape::mul(const Tensor& a, const Tensor& b) {
  require(a.shape() == b.shape(), "mul: shape mismatch");
  Tensor out = Tensor::zeros(a.shape());
  const int64_t n = a.numel();
  for (int64_t i = 0; i < n; ++i) out.v()[i] = a.v()[i] * b.v()[i];
  if (track({&a, &b})) {
    out.set_needs_grad(true);
    const bool ta = a.needs_grad(), tb = b.needs_grad();
    push([a, b, out, ta, tb]() mutable {
      const auto& go = out.g();
      if (ta) {
        auto& ga = a.g();
        for (size_t i = 0; i < go.size(); ++i) ga[i] += go[i] * b.v()[i];
      }
      if (tb) {
        auto& gb = b.g();
        for (size_t i = 0; i < go.size(); ++i) gb[i] += go[i] * a.v()[i];
      }
    });
  }
  return out;
}

Tensor Tape::scale(const Tensor& a, double c) {
  Tensor out = Tensor::zeros(a.shape());
  const int64_t n = a.numel();
  for (int64_t i = 0; i < n; ++i) out.v()[i] = c * a.v()[i];
  if (track({&a})) {
    out.set_needs_grad(true);
    push([a, out, c]() mutable {
      const auto& go = out.g();
      auto& ga = a.g();
      for (size_t i = 0; i < go.size(); ++i) ga[i] += c * go[i];
    });
  }
  return out;
}

Tensor Tape::one_minus(const Tensor& a) {
  Tensor out = Tensor::zeros(a.shape());
  const int64_t n = a.numel();
  for (int64_t i = 0; i < n; ++i) out.v()[i] = 1.0 - a.v()[i];
  if (track({&a})) {
    out.set_needs_grad(true);
    push([a, out]() mutable {
      const auto& go = out.g();
      auto& ga = a.g();
      for (size_t i = 0; i < go.size(); ++i) ga[i] -= go[i];
    });
  }
  return out;
}

Tensor Tape::add_rowvec(const Tensor& m, const Tensor& vch) {
  require(m.shape().size() == 2, "add_rowvec: matrix must be 2-D");
  require(vch.numel() == m.cols(), "add_rowvec: vector length != cols");
  const int64_t r = m.rows(), c = m.cols();
  Tensor out = Tensor::zeros(m.shape());
  for (int64_t i = 0; i < r; ++i) {
    for (int64_t j = 0; j < c; ++j) {
      out.v()[i * c + j] = m.v()[i * c + j] + vch.v()[j];
    }
  }
  if (track({&m, &vch})) {
    out.set_needs_grad(true);
    const bool tm = m.needs_grad(), tv = vch.needs_grad();
    push([m, vch, out, tm, tv, r, c]() mutable {
      const auto& go = out.g();
      if (tm) {
        auto& gm = m.g();
        for (size_t i = 0; i < go.size(); ++i) gm[i] += go[i];
      }
      if (tv) {
        auto& gv = vch.g();
        for (int64_t i = 0; i < r; ++i) {
          for (int64_t j = 0; j < c; ++j) gv[j] += go[i * c + j];
        }
      }
    });
  }
  return out;
}

Tensor Tape::matmul(const Tensor& a, const Tensor& b) {
  require(a.shape().size() == 2 && b.shape().size() == 2,
          "matmul: operands must be 2-D");
  require(a.cols() == b.rows(), "matmul: inner dims differ");
  const int64_t m = a.rows(), k = a.cols(), n = b.cols();
  Tensor out = Tensor::zeros({m, n});
  kernels::matmul(a.v().data(), b.v().data(), out.v().data(), m, k, n);
  if (track({&a, &b})) {
    out.set_needs_grad(true);
    const bool ta = a.needs_grad(), tb = b.needs_grad();
    push([a, b, out, ta, tb, m, k, n]() mutable {
      const auto& go = out.g();
      if (ta) {
        kernels::matmul_nt(go.data(), b.v().data(), a.g().data(), m, n, k);
      }
      if (tb) {
        kernels::matmul_tn(a.v().data(), go.data(), b.g().data(), k, m, n);
      }
    });
  }
  return out;
}

Tensor Tape::matmul_nt(const Tensor& a, const Tensor& b) {
  require(a.shape().size() == 2 && b.shape().size() == 2,
          "matmul_nt: operands must be 2-D");
  require(a.cols() == b.cols(), "matmul_nt: inner dims differ");
  const int64_t m = a.rows(), k = a.cols(), n = b.rows();
  Tensor out = Tensor::zeros({m, n});
  kernels::matmul_nt(a.v().data(), b.v().data(), out.v().data(), m, k, n);
  if (track({&a, &b})) {
    out.set_needs_grad(true);
    const bool ta = a.needs_grad(), tb = b.needs_grad();
    push([a, b, out, ta, tb, m, k, n]() mutable {
      const auto& go = out.g();
      if (ta) {
        kernels::matmul(go.data(), b.v().data(), a.g().data(), m, n, k);
      }
      if (tb) {
        kernels::matmul_tn(go.data(), a.v().data(), b.g().data(), n, m, k);
      }
    });
  }
  return out;
}

Tensor Tape::gather_rows(const Tensor& table, std::vector<int64_t> ids) {
  require(table.shape().size() == 2, "gather_rows: table must be 2-D");
  const int64_t v = table.rows(), d = table.cols();
  const int64_t t = static_cast<int64_t>(ids.size());
  require(t > 0, "gather_rows: empty id list");
  for (int64_t id : ids) {
    require(id >= 0 && id < v, "gather_rows: id out of range");
  }
  Tensor out = Tensor::zeros({t, d});
  for (int64_t i = 0; i < t; ++i) {
    std::copy_n(table.v().begin() + ids[i] * d, d, out.v().begin() + i * d);
  }
  if (track({&table})) {
    out.set_needs_grad(true);
    push([table, out, ids = std::move(ids), d]() mutable {
      const auto& go = out.g();
      auto& gt = table.g();
      for (size_t i = 0; i < ids.size(); ++i) {
        for (int64_t j = 0; j < d; ++j) {
          gt[ids[i] * d + j] += go[i * d + j];
        }
      }
    });
  }
  return out;
}

Tensor Tape::gather(const Tensor& src, std::vector<int64_t> idx,
                    Shape out_shape) {
  const int64_t n = src.numel();
  const int64_t m = numel_of(out_shape);
  require(m == static_cast<int64_t>(idx.size()),
          "gather: index count != product(out_shape)");
  for (int64_t i : idx) require(i >= 0 && i < n, "gather: index out of range");
  Tensor out = Tensor::zeros(std::move(out_shape));
  for (int64_t i = 0; i < m; ++i) out.v()[i] = src.v()[idx[i]];
  if (track({&src})) {
    out.set_needs_grad(true);
    push([src, out, idx = std::move(idx)]() mutable {
      const auto& go = out.g();
      auto& gs = src.g();
      for (size_t i = 0; i < idx.size(); ++i) gs[idx[i]] += go[i];
    });
  }
  return out;
}

Tensor Tape::concat_rows(const std::vector<Tensor>& parts) {
  require(!parts.empty(), "concat_rows: no parts");
  const int64_t c = parts[0].cols();
  int64_t r = 0;
  for (const Tensor& p : parts) {
    require(p.shape().size() == 2, "concat_rows: parts must be 2-D");
    require(p.cols() == c, "concat_rows: column mismatch");
    r += p.rows();
  }
  Tensor out = Tensor::zeros({r, c});
  int64_t row = 0;
  for (const Tensor& p : parts) {
    std::copy(p.v().begin(), p.v().end(), out.v().begin() + row * c);
    row += p.rows();
  }
  bool any = false;
  for (const Tensor& p : parts) any = any || p.needs_grad();
  if (recording_ && any) {
    out.set_needs_grad(true);
    push([parts, out, c]() mutable {
      const auto& go = out.g();
      int64_t row = 0;
      for (Tensor& p : parts) {
        if (p.needs_grad()) {
          auto& gp = p.g();
          for (size_t i = 0; i < gp.size(); ++i) gp[i] += go[row * c + i];
        }
        row += p.rows();
      }
    });
  }
  return out;
}

Tensor Tape::slice_rows(const Tensor& a, int64_t lo, int64_t hi) {
  require(a.shape().size() == 2, "slice_rows: operand must be 2-D");
  require(0 <= lo && lo < hi && hi <= a.rows(), "slice_rows: bad range");
  const int64_t c = a.cols();
  Tensor out = Tensor::zeros({hi - lo, c});
  std::copy(a.v().begin() + lo * c, a.v().begin() + hi * c, out.v().begin());
  if (track({&a})) {
    out.set_needs_grad(true);
    push([a, out, lo, c]() mutable {
      const auto& go = out.g();
      auto& ga = a.g();
      for (size_t i = 0; i < go.size(); ++i) ga[lo * c + i] += go[i];
    });
  }
  return out;
}

Tensor Tape::concat_cols(const std::vector<Tensor>& parts) {
  require(!parts.empty(), "concat_cols: no parts");
  const int64_t r = parts[0].rows();
  int64_t c = 0;
  for (const Tensor& p : parts) {
    require(p.shape().size() == 2, "concat_cols: parts must be 2-D");
    require(p.rows() == r, "concat_cols: row mismatch");
    c += p.cols();
  }
  Tensor out = Tensor::zeros({r, c});
  int64_t col = 0;
  for (const Tensor& p : parts) {
    const int64_t pc = p.cols();
    for (int64_t i = 0; i < r; ++i) {
      std::copy_n(p.v().begin() + i * pc, pc,
                  out.v().begin() + i * c + col);
    }
    col += pc;
  }
  bool any = false;
  for (const Tensor& p : parts) any = any || p.needs_grad();
  if (recording_ && any) {
    out.set_needs_grad(true);
    push([parts, out, r, c]() mutable {
      const auto& go = out.g();
      int64_t col = 0;
      for (Tensor& p : parts) {
        const int64_t pc = p.cols();
        if (p.needs_grad()) {
          auto& gp = p.g();
          for (int64_t i = 0; i < r; ++i) {
            for (int64_t j = 0; j < pc; ++j) {
              gp[i * pc + j] += go[i * c + col + j];
            }
          }
        }
        col += pc;
      }
    });
  }
  return out;
}

Tensor Tape::slice_cols(const Tensor& a, int64_t lo, int64_t hi) {
  require(a.shape().size() == 2, "slice_cols: operand must be 2-D");
  require(0 <= lo && lo < hi && hi <= a.cols(), "slice_cols: bad range");
  const int64_t r = a.rows(), c = a.cols(), w = hi - lo;
  Tensor out = Tensor::zeros({r, w});
  for (int64_t i = 0; i < r; ++i) {
    std::copy_n(a.v().begin() + i * c + lo, w, out.v().begin() + i * w);
  }
  if (track({&a})) {
    out.set_needs_grad(true);
    push([a, out, lo, r, c, w]() mutable {
      const auto& go = out.g();
      auto& ga = a.g();
      for (int64_t i = 0; i < r; ++i) {
        for (int64_t j = 0; j < w; ++j) ga[i * c + lo + j] += go[i * w + j];
      }
    });
  }
  return out;
}

Tensor Tape::sigmoid(const Tensor& a) {
  Tensor out = Tensor::zeros(a.shape());
  const int64_t n = a.numel();
  for (int64_t i = 0; i < n; ++i) out.v()[i] = sigmoid_scalar(a.v()[i]);
  if (track({&a})) {
    out.set_needs_grad(true);
    push([a, out]() mutable {
      const auto& go = out.g();
      auto& ga = a.g();
      for (size_t i = 0; i < go.size(); ++i) {
        const double y = out.v()[i];
        ga[i] += go[i] * y * (1.0 - y);
      }
    });
  }
  return out;
}

Tensor Tape::tanh(const Tensor& a) {
  Tensor out = Tensor::zeros(a.shape());
  const int64_t n = a.numel();
  for (int64_t i = 0; i < n; ++i) out.v()[i] = std::tanh(a.v()[i]);
  if (track({&a})) {
    out.set_needs_grad(true);
    push([a, out]() mutable {
      const auto& go = out.g();
      auto& ga = a.g();
      for (size_t i = 0; i < go.size(); ++i) {
        const double y = out.v()[i];
        ga[i] += go[i] * (1.0 - y * y);
      }
    });
  }
  return out;
}

Tensor Tape::gelu(const Tensor& a) {
  Tensor out = Tensor::zeros(a.shape());
  const int64_t n = a.numel();
  for (int64_t i = 0; i < n; ++i) out.v()[i] = gelu_scalar(a.v()[i]);
  if (track({&a})) {
    out.set_needs_grad(true);
    push([a, out]() mutable {
      const auto& go = out.g();
      auto& ga = a.g();
      for (size_t i = 0; i < go.size(); ++i) {
        const double x = a.v()[i];
        const double phi = 0.5 * std::erfc(-x * kInvSqrt2);
        const double dens = kInvSqrt2Pi * std::exp(-0.5 * x * x);
        ga[i] += go[i] * (phi + x * dens);
      }
    });
  }
  return out;
}

Tensor Tape::layer_norm(const Tensor& x, const Tensor& gain,
                        const Tensor& bias) {
  require(x.shape().size() == 2, "layer_norm: input must be 2-D");
  const int64_t r = x.rows(), c = x.cols();
  require(gain.numel() == c && bias.numel() == c,
          "layer_norm: gain/bias length != cols");
  Tensor out = Tensor::zeros(x.shape());
  // normalized rows and per-row inverse stddev, saved for backward
  auto xhat = std::make_shared<std::vector<double>>(
      static_cast<size_t>(r * c));
  auto inv_std = std::make_shared<std::vector<double>>(static_cast<size_t>(r));
  for (int64_t i = 0; i < r; ++i) {
    const double* xi = x.v().data() + i * c;
    double mean = 0.0;
    for (int64_t j = 0; j < c; ++j) mean += xi[j];
    mean /= static_cast<double>(c);
    double var = 0.0;
    for (int64_t j = 0; j < c; ++j) {
      const double dlt = xi[j] - mean;
      var += dlt * dlt;
    }
    var /= static_cast<double>(c);
    const double inv = 1.0 / std::sqrt(var + kLayerNormEps);
    (*inv_std)[i] = inv;
    for (int64_t j = 0; j < c; ++j) {
      const double h = (xi[j] - mean) * inv;
      (*xhat)[i * c + j] = h;
      out.v()[i * c + j] = h * gain.v()[j] + bias.v()[j];
    }
  }
  if (track({&x, &gain, &bias})) {
    out.set_needs_grad(true);
    const bool tx = x.needs_grad(), tg = gain.needs_grad(),
               tb = bias.needs_grad();
    push([x, gain, bias, out, xhat, inv_std, tx, tg, tb, r, c]() mutable {
      const auto& go = out.g();
      for (int64_t i = 0; i < r; ++i) {
        const double* goi = go.data() + i * c;
        const double* xh = xhat->data() + i * c;
        if (tg) {
          auto& gg = gain.g();
          for (int64_t j = 0; j < c; ++j) gg[j] += goi[j] * xh[j];
        }
        if (tb) {
          auto& gb = bias.g();
          for (int64_t j = 0; j < c; ++j) gb[j] += goi[j];
        }
        if (tx) {
          auto& gx = x.g();
          double sum_dxhat = 0.0, sum_dxhat_xhat = 0.0;
          for (int64_t j = 0; j < c; ++j) {
            const double dxh = goi[j] * gain.v()[j];
            sum_dxhat += dxh;
            sum_dxhat_xhat += dxh * xh[j];
          }
          const double inv = (*inv_std)[i];
          const double nf = 1.0 / static_cast<double>(c);
          for (int64_t j = 0; j < c; ++j) {
            const double dxh = goi[j] * gain.v()[j];
            gx[i * c + j] +=
                inv * (dxh - nf * sum_dxhat - nf * xh[j] * sum_dxhat_xhat);
          }
        }
      }
    });
  }
  return out;
}

Tensor Tape::softmax(const Tensor& scores, const std::vector<uint8_t>* mask,
                     double scale) {
  require(scores.shape().size() == 2, "softmax: scores must be 2-D");
  const int64_t r = scores.rows(), c = scores.cols();
  if (mask) {
    require(static_cast<int64_t>(mask->size()) == r * c,
            "softmax: mask size mismatch");
  }
  Tensor out = Tensor::zeros(scores.shape());
  kernels::softmax_rows(scores.v().data(), mask ? mask->data() : nullptr,
                        scale, out.v().data(), r, c);
  if (track({&scores})) {
    out.set_needs_grad(true);
    push([scores, out, scale, r, c]() mutable {
      const auto& go = out.g();
      auto& gs = scores.g();
      for (int64_t i = 0; i < r; ++i) {
        const double* yi = out.v().data() + i * c;
        const double* goi = go.data() + i * c;
        double dot = 0.0;
        for (int64_t j = 0; j < c; ++j) dot += goi[j] * yi[j];
        for (int64_t j = 0; j < c; ++j) {
          gs[i * c + j] += scale * yi[j] * (goi[j] - dot);
        }
      }
    });
  }
  return out;
}

Tensor Tape::dropout(const Tensor& a, double rate, Rng& rng) {
  require(rate >= 0.0 && rate < 1.0, "dropout: rate must be in [0,1)");
  if (rate == 0.0) return a;
  const int64_t n = a.numel();
  auto mask = std::make_shared<std::vector<double>>(static_cast<size_t>(n));
  const double keep_scale = 1.0 / (1.0 - rate);
  for (int64_t i = 0; i < n; ++i) {
    (*mask)[i] = rng.uniform() >= rate ? keep_scale : 0.0;
  }
  Tensor out = Tensor::zeros(a.shape());
  for (int64_t i = 0; i < n; ++i) out.v()[i] = a.v()[i] * (*mask)[i];
  if (track({&a})) {
    out.set_needs_grad(true);
    push([a, out, mask]() mutable {
      const auto& go = out.g();
      auto& ga = a.g();
      for (size_t i = 0; i < go.size(); ++i) ga[i] += go[i] * (*mask)[i];
    });
  }
  return out;
}

Tensor Tape::stop_gradient(const Tensor& a) {
  return Tensor::from(a.shape(), a.v(), false);
}

Tensor Tape::sum(const Tensor& a) {
  double acc = 0.0;
  for (double x : a.v()) acc += x;
  Tensor out = Tensor::scalar(acc);
  if (track({&a})) {
    out.set_needs_grad(true);
    push([a, out]() mutable {
      const double go = out.g()[0];
      auto& ga = a.g();
      for (double& g : ga) g += go;
    });
  }
  return out;
}

Tensor Tape::cross_entropy_mean(const Tensor& logits,
                                const std::vector<int64_t>& targets) {
  require(logits.shape().size() == 2, "cross_entropy: logits must be 2-D");
  const int64_t t = logits.rows(), v = logits.cols();
  require(static_cast<int64_t>(targets.size()) == t,
          "cross_entropy: target count != rows");
  for (int64_t id : targets) {
    require(id >= 0 && id < v, "cross_entropy: target out of range");
  }
  // save softmax probabilities for the backward pass
  auto probs = std::make_shared<std::vector<double>>(
      static_cast<size_t>(t * v));
  kernels::softmax_rows(logits.v().data(), nullptr, 1.0, probs->data(), t, v);
  double total = 0.0;
  for (int64_t i = 0; i < t; ++i) {
    total += -std::log((*probs)[i * v + targets[i]]);
  }
  Tensor out = Tensor::scalar(total / static_cast<double>(t));
  if (track({&logits})) {
    out.set_needs_grad(true);
    push([logits, out, probs, targets, t, v]() mutable {
      const double go = out.g()[0] / static_cast<double>(t);
      auto& gl = logits.g();
      for (int64_t i = 0; i < t; ++i) {
        const double* pi = probs->data() + i * v;
        for (int64_t j = 0; j < v; ++j) gl[i * v + j] += go * pi[j];
        gl[i * v + targets[i]] -= go;
      }
    });
  }
  return out;
}

void Tape::backward(const Tensor& loss) {
  if (loss.numel() != 1) {
    throw std::invalid_argument("backward: loss must be a scalar");
  }
  const_cast<Tensor&>(loss).g()[0] += 1.0;
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    it->back();
  }
}

std::vector<double> per_token_nll(const Tensor& logits,
                                  const std::vector<int64_t>& targets) {
  require(logits.shape().size() == 2, "per_token_nll: logits must be 2-D");
  const int64_t t = logits.rows(), v = logits.cols();
  require(static_cast<int64_t>(targets.size()) == t,
          "per_token_nll: target count != rows");
  std::vector<double> out(static_cast<size_t>(t));
  for (int64_t i = 0; i < t; ++i) {
    const double* li = logits.v().data() + i * v;
    double mx = li[0];
    for (int64_t j = 1; j < v; ++j) mx = std::max(mx, li[j]);
    double denom = 0.0;
    for (int64_t j = 0; j < v; ++j) denom += std::exp(li[j] - mx);
    out[i] = std::log(denom) + mx - li[targets[i]];
  }
  return out;
}

}  // namespace relmem
