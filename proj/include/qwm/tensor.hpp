#pragma once

// Minimal dense-tensor numerics with reverse-mode autodiff on a dynamic tape.
// Double precision, row-major, no broadcasting beyond the bias add in affine.
// A tape and its tensors are confined to one thread.

#include <cmath>
#include <cstdint>
#include <cstring>
#include <functional>
#include <memory>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "qwm/common.hpp"

namespace qwm::tensor {

struct ShapeMismatch : Error {
  using Error::Error;
};
struct NumericError : Error {
  using Error::Error;
};
struct NonScalarLoss : Error {
  using Error::Error;
};

// checked forward finiteness (off by default; tests and debug runs enable it)
inline bool& debug_checks() {
  static bool enabled = false;
  return enabled;
}

struct TensorImpl {
  std::vector<int> shape;
  std::vector<double> val;
  std::vector<double> grad;  // lazily sized; zero-initialized accumulator
  bool requires_grad = false;

  void ensure_grad() {
    if (grad.size() != val.size()) grad.assign(val.size(), 0.0);
  }
};

class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(std::vector<int> shape) {
    auto p = std::make_shared<TensorImpl>();
    std::size_t n = numel(shape);
    p->shape = std::move(shape);
    p->val.assign(n, 0.0);
    return Tensor(std::move(p));
  }
  static Tensor full(std::vector<int> shape, double v) {
    Tensor t = zeros(std::move(shape));
    std::fill(t.p_->val.begin(), t.p_->val.end(), v);
    return t;
  }
  static Tensor from_data(std::vector<int> shape, std::vector<double> data) {
    if (numel(shape) != data.size()) throw ShapeMismatch("from_data: shape/data size mismatch");
    auto p = std::make_shared<TensorImpl>();
    p->shape = std::move(shape);
    p->val = std::move(data);
    return Tensor(std::move(p));
  }
  static Tensor scalar(double v) { return from_data({1}, {v}); }

  static std::size_t numel(const std::vector<int>& shape) {
    std::size_t n = 1;
    for (int e : shape) n *= static_cast<std::size_t>(e);
    return n;
  }

  bool defined() const { return static_cast<bool>(p_); }
  const std::vector<int>& shape() const { return p_->shape; }
  std::size_t size() const { return p_->val.size(); }
  std::vector<double>& val() const { return p_->val; }
  std::vector<double>& grad() const {
    p_->ensure_grad();
    return p_->grad;
  }
  bool requires_grad() const { return p_->requires_grad; }
  void set_requires_grad(bool b) const {
    p_->requires_grad = b;
    if (b) p_->ensure_grad();
  }
  void zero_grad() const {
    p_->ensure_grad();
    std::fill(p_->grad.begin(), p_->grad.end(), 0.0);
  }
  double item() const {
    if (size() != 1) throw ShapeMismatch("item() on non-scalar tensor");
    return p_->val[0];
  }
  TensorImpl* impl() const { return p_.get(); }

  bool same_shape(const Tensor& o) const { return p_->shape == o.p_->shape; }

 private:
  explicit Tensor(std::shared_ptr<TensorImpl> p) : p_(std::move(p)) {}
  std::shared_ptr<TensorImpl> p_;
};

class Tape {
 public:
  // RAII activation; ops record onto the innermost active tape
  struct Scope {
    explicit Scope(Tape& t) : prev_(current_ref()) { current_ref() = &t; }
    ~Scope() { current_ref() = prev_; }
    Scope(const Scope&) = delete;
    Scope& operator=(const Scope&) = delete;

   private:
    Tape* prev_;
  };

  static Tape* current() { return current_ref(); }

  void record(const Tensor& out, std::function<void()> backward_fn) {
    nodes_.push_back({out, std::move(backward_fn)});
  }

  std::size_t num_nodes() const { return nodes_.size(); }

  // seeds d(loss)/d(loss) = 1 and walks recorded ops in exact reverse order;
  // leaf gradients accumulate additively across calls (op outputs are
  // re-seeded each traversal, so a repeated call contributes exactly once)
  void backward(const Tensor& loss) {
    if (loss.size() != 1) throw NonScalarLoss("backward needs a scalar loss");
    for (auto& n : nodes_) n.out.zero_grad();
    loss.grad()[0] = 1.0;
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) it->fn();
  }

 private:
  struct Node {
    Tensor out;
    std::function<void()> fn;
  };
  static Tape*& current_ref() {
    thread_local Tape* cur = nullptr;
    return cur;
  }
  std::vector<Node> nodes_;
};

namespace detail {

inline void check_finite(const Tensor& t, const char* op) {
  if (!debug_checks()) return;
  for (double x : t.val())
    if (!std::isfinite(x)) throw NumericError(std::string("non-finite value after op ") + op);
}

inline bool track(std::initializer_list<Tensor> inputs) {
  if (!Tape::current()) return false;
  for (const auto& t : inputs)
    if (t.requires_grad()) return true;
  return false;
}

inline Tensor make_out(std::vector<int> shape, bool tracked) {
  Tensor out = Tensor::zeros(std::move(shape));
  if (tracked) out.set_requires_grad(true);
  return out;
}

inline int last_dim(const Tensor& t) {
  if (t.shape().empty()) throw ShapeMismatch("rank-0 tensor has no last axis");
  return t.shape().back();
}

}  // namespace detail

// ---------------------------------------------------------------- elementwise

namespace detail {

template <class Fwd, class Bwd>
Tensor unary(const Tensor& x, const char* name, Fwd fwd, Bwd dval) {
  bool tracked = track({x});
  Tensor out = make_out(x.shape(), tracked);
  const auto& xv = x.val();
  auto& ov = out.val();
  for (std::size_t i = 0; i < xv.size(); ++i) ov[i] = fwd(xv[i]);
  check_finite(out, name);
  if (tracked)
    Tape::current()->record(out, [x, out, dval]() {
      const auto& og = out.grad();
      const auto& xv = x.val();
      const auto& ov = out.val();
      auto& xg = x.grad();
      for (std::size_t i = 0; i < xv.size(); ++i) xg[i] += og[i] * dval(xv[i], ov[i]);
    });
  return out;
}

}  // namespace detail

inline Tensor add(const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b)) throw ShapeMismatch("add: shape mismatch");
  bool tracked = detail::track({a, b});
  Tensor out = detail::make_out(a.shape(), tracked);
  for (std::size_t i = 0; i < a.size(); ++i) out.val()[i] = a.val()[i] + b.val()[i];
  detail::check_finite(out, "add");
  if (tracked)
    Tape::current()->record(out, [a, b, out]() {
      const auto& og = out.grad();
      if (a.requires_grad()) {
        auto& ag = a.grad();
        for (std::size_t i = 0; i < og.size(); ++i) ag[i] += og[i];
      }
      if (b.requires_grad()) {
        auto& bg = b.grad();
        for (std::size_t i = 0; i < og.size(); ++i) bg[i] += og[i];
      }
    });
  return out;
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b)) throw ShapeMismatch("sub: shape mismatch");
  bool tracked = detail::track({a, b});
  Tensor out = detail::make_out(a.shape(), tracked);
  for (std::size_t i = 0; i < a.size(); ++i) out.val()[i] = a.val()[i] - b.val()[i];
  detail::check_finite(out, "sub");
  if (tracked)
    Tape::current()->record(out, [a, b, out]() {
      const auto& og = out.grad();
      if (a.requires_grad()) {
        auto& ag = a.grad();
        for (std::size_t i = 0; i < og.size(); ++i) ag[i] += og[i];
      }
      if (b.requires_grad()) {
        auto& bg = b.grad();
        for (std::size_t i = 0; i < og.size(); ++i) bg[i] -= og[i];
      }
    });
  return out;
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b)) throw ShapeMismatch("mul: shape mismatch");
  bool tracked = detail::track({a, b});
  Tensor out = detail::make_out(a.shape(), tracked);
  for (std::size_t i = 0; i < a.size(); ++i) out.val()[i] = a.val()[i] * b.val()[i];
  detail::check_finite(out, "mul");
  if (tracked)
    Tape::current()->record(out, [a, b, out]() {
      const auto& og = out.grad();
      if (a.requires_grad()) {
        auto& ag = a.grad();
        for (std::size_t i = 0; i < og.size(); ++i) ag[i] += og[i] * b.val()[i];
      }
      if (b.requires_grad()) {
        auto& bg = b.grad();
        for (std::size_t i = 0; i < og.size(); ++i) bg[i] += og[i] * a.val()[i];
      }
    });
  return out;
}

inline Tensor div(const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b)) throw ShapeMismatch("div: shape mismatch");
  bool tracked = detail::track({a, b});
  Tensor out = detail::make_out(a.shape(), tracked);
  for (std::size_t i = 0; i < a.size(); ++i) out.val()[i] = a.val()[i] / b.val()[i];
  detail::check_finite(out, "div");
  if (tracked)
    Tape::current()->record(out, [a, b, out]() {
      const auto& og = out.grad();
      if (a.requires_grad()) {
        auto& ag = a.grad();
        for (std::size_t i = 0; i < og.size(); ++i) ag[i] += og[i] / b.val()[i];
      }
      if (b.requires_grad()) {
        auto& bg = b.grad();
        for (std::size_t i = 0; i < og.size(); ++i)
          bg[i] -= og[i] * a.val()[i] / (b.val()[i] * b.val()[i]);
      }
    });
  return out;
}

inline Tensor add_scalar(const Tensor& x, double c) {
  return detail::unary(x, "add_scalar", [c](double v) { return v + c; },
                       [](double, double) { return 1.0; });
}
inline Tensor mul_scalar(const Tensor& x, double c) {
  return detail::unary(x, "mul_scalar", [c](double v) { return v * c; },
                       [c](double, double) { return c; });
}
inline Tensor neg(const Tensor& x) { return mul_scalar(x, -1.0); }

inline Tensor sigmoid(const Tensor& x) {
  return detail::unary(x, "sigmoid",
                       [](double v) { return v >= 0 ? 1.0 / (1.0 + std::exp(-v))
                                                    : std::exp(v) / (1.0 + std::exp(v)); },
                       [](double, double o) { return o * (1.0 - o); });
}
inline Tensor tanh(const Tensor& x) {
  return detail::unary(x, "tanh", [](double v) { return std::tanh(v); },
                       [](double, double o) { return 1.0 - o * o; });
}
inline Tensor silu(const Tensor& x) {
  return detail::unary(x, "silu",
                       [](double v) {
                         double s = v >= 0 ? 1.0 / (1.0 + std::exp(-v))
                                           : std::exp(v) / (1.0 + std::exp(v));
                         return v * s;
                       },
                       [](double v, double) {
                         double s = v >= 0 ? 1.0 / (1.0 + std::exp(-v))
                                           : std::exp(v) / (1.0 + std::exp(v));
                         return s * (1.0 + v * (1.0 - s));
                       });
}
inline Tensor softplus(const Tensor& x) {
  return detail::unary(x, "softplus",
                       [](double v) { return v > 30 ? v : std::log1p(std::exp(v)); },
                       [](double v, double) {
                         return v >= 0 ? 1.0 / (1.0 + std::exp(-v))
                                       : std::exp(v) / (1.0 + std::exp(v));
                       });
}
inline Tensor exp(const Tensor& x) {
  return detail::unary(x, "exp", [](double v) { return std::exp(v); },
                       [](double, double o) { return o; });
}
inline Tensor log(const Tensor& x) {
  return detail::unary(x, "log", [](double v) { return std::log(v); },
                       [](double v, double) { return 1.0 / v; });
}

// sign(x) * ln(1 + |x|) and its inverse
inline Tensor symlog(const Tensor& x) {
  return detail::unary(x, "symlog",
                       [](double v) { return std::copysign(std::log1p(std::abs(v)), v); },
                       [](double v, double) { return 1.0 / (1.0 + std::abs(v)); });
}
inline Tensor symexp(const Tensor& x) {
  return detail::unary(x, "symexp",
                       [](double v) { return std::copysign(std::expm1(std::abs(v)), v); },
                       [](double v, double) { return std::exp(std::abs(v)); });
}

inline double symlog_value(double v) { return std::copysign(std::log1p(std::abs(v)), v); }
inline double symexp_value(double v) { return std::copysign(std::expm1(std::abs(v)), v); }

// max(x, c); subgradient 0 on the clamped side
inline Tensor max_scalar(const Tensor& x, double c) {
  return detail::unary(x, "max_scalar", [c](double v) { return std::max(v, c); },
                       [c](double v, double) { return v > c ? 1.0 : 0.0; });
}
inline Tensor min_scalar(const Tensor& x, double c) {
  return detail::unary(x, "min_scalar", [c](double v) { return std::min(v, c); },
                       [c](double v, double) { return v < c ? 1.0 : 0.0; });
}

// forward identity, no gradient flow
inline Tensor stopgrad(const Tensor& x) {
  Tensor out = Tensor::from_data(x.shape(), x.val());
  return out;
}

// forward takes `hard`'s values, backward routes the gradient to `soft`
// (gradient of the sample equals gradient of the probabilities)
inline Tensor straight_through(const Tensor& soft, const Tensor& hard) {
  if (!soft.same_shape(hard)) throw ShapeMismatch("straight_through: shape mismatch");
  bool tracked = detail::track({soft});
  Tensor out = detail::make_out(soft.shape(), tracked);
  out.val() = hard.val();
  if (tracked)
    Tape::current()->record(out, [soft, out]() {
      const auto& og = out.grad();
      auto& sg = soft.grad();
      for (std::size_t i = 0; i < og.size(); ++i) sg[i] += og[i];
    });
  return out;
}

// ------------------------------------------------------------------- linear

inline Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.shape().size() != 2 || b.shape().size() != 2 || a.shape()[1] != b.shape()[0])
    throw ShapeMismatch("matmul: need (m,k)x(k,n)");
  int m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
  bool tracked = detail::track({a, b});
  Tensor out = detail::make_out({m, n}, tracked);
  {
    const double* A = a.val().data();
    const double* B = b.val().data();
    double* O = out.val().data();
    for (int r = 0; r < m; ++r)
      for (int kk = 0; kk < k; ++kk) {
        double av = A[r * k + kk];
        const double* Brow = B + kk * n;
        double* Orow = O + r * n;
        for (int c = 0; c < n; ++c) Orow[c] += av * Brow[c];
      }
  }
  detail::check_finite(out, "matmul");
  if (tracked)
    Tape::current()->record(out, [a, b, out, m, k, n]() {
      const double* G = out.grad().data();
      if (a.requires_grad()) {
        double* Ag = a.grad().data();
        const double* B = b.val().data();
        for (int r = 0; r < m; ++r)
          for (int c = 0; c < n; ++c) {
            double g = G[r * n + c];
            const double* Brow = B + c;  // column c
            for (int kk = 0; kk < k; ++kk) Ag[r * k + kk] += g * Brow[kk * n];
          }
      }
      if (b.requires_grad()) {
        double* Bg = b.grad().data();
        const double* A = a.val().data();
        for (int kk = 0; kk < k; ++kk)
          for (int r = 0; r < m; ++r) {
            double av = A[r * k + kk];
            const double* Grow = G + r * n;
            double* Brow = Bg + kk * n;
            for (int c = 0; c < n; ++c) Brow[c] += av * Grow[c];
          }
      }
    });
  return out;
}

// x (B,in) * W(out,in)^T + b(out) -> (B,out); the hot path of every net
inline Tensor affine(const Tensor& x, const Tensor& W, const Tensor& b) {
  if (x.shape().size() != 2 || W.shape().size() != 2 || b.shape().size() != 1)
    throw ShapeMismatch("affine: x must be (B,in), W (out,in), b (out)");
  int B = x.shape()[0], in = x.shape()[1], out_dim = W.shape()[0];
  if (W.shape()[1] != in || b.shape()[0] != out_dim)
    throw ShapeMismatch("affine: dimension mismatch");
  bool tracked = detail::track({x, W, b});
  Tensor out = detail::make_out({B, out_dim}, tracked);
  {
    const double* X = x.val().data();
    const double* Wv = W.val().data();
    const double* bv = b.val().data();
    double* O = out.val().data();
    for (int r = 0; r < B; ++r) {
      const double* xrow = X + r * in;
      double* orow = O + r * out_dim;
      for (int o = 0; o < out_dim; ++o) {
        const double* wrow = Wv + o * in;
        double acc = bv[o];
        for (int i = 0; i < in; ++i) acc += xrow[i] * wrow[i];
        orow[o] = acc;
      }
    }
  }
  detail::check_finite(out, "affine");
  if (tracked)
    Tape::current()->record(out, [x, W, b, out, B, in, out_dim]() {
      const double* G = out.grad().data();
      if (x.requires_grad()) {
        double* Xg = x.grad().data();
        const double* Wv = W.val().data();
        for (int r = 0; r < B; ++r) {
          const double* grow = G + r * out_dim;
          double* xg = Xg + r * in;
          for (int o = 0; o < out_dim; ++o) {
            double g = grow[o];
            const double* wrow = Wv + o * in;
            for (int i = 0; i < in; ++i) xg[i] += g * wrow[i];
          }
        }
      }
      if (W.requires_grad()) {
        double* Wg = W.grad().data();
        const double* X = x.val().data();
        for (int r = 0; r < B; ++r) {
          const double* grow = G + r * out_dim;
          const double* xrow = X + r * in;
          for (int o = 0; o < out_dim; ++o) {
            double g = grow[o];
            double* wg = Wg + o * in;
            for (int i = 0; i < in; ++i) wg[i] += g * xrow[i];
          }
        }
      }
      if (b.requires_grad()) {
        double* bg = b.grad().data();
        for (int r = 0; r < B; ++r)
          for (int o = 0; o < out_dim; ++o) bg[o] += G[r * out_dim + o];
      }
    });
  return out;
}

// -------------------------------------------------------- shape manipulation

inline Tensor reshape(const Tensor& x, std::vector<int> shape) {
  if (Tensor::numel(shape) != x.size()) throw ShapeMismatch("reshape: element count mismatch");
  bool tracked = detail::track({x});
  Tensor out = detail::make_out(std::move(shape), tracked);
  out.val() = x.val();
  if (tracked)
    Tape::current()->record(out, [x, out]() {
      const auto& og = out.grad();
      auto& xg = x.grad();
      for (std::size_t i = 0; i < og.size(); ++i) xg[i] += og[i];
    });
  return out;
}

inline Tensor concat(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ShapeMismatch("concat: no inputs");
  auto lead = parts[0].shape();
  lead.pop_back();
  int total = 0;
  for (const auto& p : parts) {
    auto l = p.shape();
    int d = l.back();
    l.pop_back();
    if (l != lead) throw ShapeMismatch("concat: leading dims differ");
    total += d;
  }
  std::size_t rows = 1;
  for (int e : lead) rows *= static_cast<std::size_t>(e);
  bool tracked = false;
  for (const auto& p : parts) tracked = tracked || detail::track({p});
  auto out_shape = lead;
  out_shape.push_back(total);
  Tensor out = detail::make_out(std::move(out_shape), tracked);
  {
    double* O = out.val().data();
    for (std::size_t r = 0; r < rows; ++r) {
      int off = 0;
      for (const auto& p : parts) {
        int d = p.shape().back();
        std::memcpy(O + r * total + off, p.val().data() + r * d, sizeof(double) * d);
        off += d;
      }
    }
  }
  if (tracked)
    Tape::current()->record(out, [parts, out, rows, total]() {
      const double* G = out.grad().data();
      for (std::size_t r = 0; r < rows; ++r) {
        int off = 0;
        for (const auto& p : parts) {
          int d = p.shape().back();
          if (p.requires_grad()) {
            double* pg = p.grad().data() + r * d;
            const double* g = G + r * total + off;
            for (int i = 0; i < d; ++i) pg[i] += g[i];
          }
          off += d;
        }
      }
    });
  return out;
}

// contiguous range of the last axis; split is composed from slices
inline Tensor slice_last(const Tensor& x, int start, int len) {
  int d = detail::last_dim(x);
  if (start < 0 || len <= 0 || start + len > d) throw ShapeMismatch("slice_last: out of range");
  auto shape = x.shape();
  shape.back() = len;
  std::size_t rows = x.size() / d;
  bool tracked = detail::track({x});
  Tensor out = detail::make_out(std::move(shape), tracked);
  for (std::size_t r = 0; r < rows; ++r)
    std::memcpy(out.val().data() + r * len, x.val().data() + r * d + start, sizeof(double) * len);
  if (tracked)
    Tape::current()->record(out, [x, out, rows, d, start, len]() {
      const double* G = out.grad().data();
      double* xg = x.grad().data();
      for (std::size_t r = 0; r < rows; ++r)
        for (int i = 0; i < len; ++i) xg[r * d + start + i] += G[r * len + i];
    });
  return out;
}

inline std::vector<Tensor> split(const Tensor& x, const std::vector<int>& sizes) {
  std::vector<Tensor> out;
  int off = 0;
  for (int s : sizes) {
    out.push_back(slice_last(x, off, s));
    off += s;
  }
  if (off != detail::last_dim(x)) throw ShapeMismatch("split: sizes do not cover last axis");
  return out;
}

// ---------------------------------------------------------------- reductions

inline Tensor sum_all(const Tensor& x) {
  bool tracked = detail::track({x});
  Tensor out = detail::make_out({1}, tracked);
  double acc = 0;
  for (double v : x.val()) acc += v;
  out.val()[0] = acc;
  if (tracked)
    Tape::current()->record(out, [x, out]() {
      double g = out.grad()[0];
      auto& xg = x.grad();
      for (std::size_t i = 0; i < xg.size(); ++i) xg[i] += g;
    });
  return out;
}

inline Tensor mean_all(const Tensor& x) {
  return mul_scalar(sum_all(x), 1.0 / static_cast<double>(x.size()));
}

// reduce last axis, keeping it as extent 1
inline Tensor sum_last(const Tensor& x) {
  int d = detail::last_dim(x);
  std::size_t rows = x.size() / d;
  auto shape = x.shape();
  shape.back() = 1;
  bool tracked = detail::track({x});
  Tensor out = detail::make_out(std::move(shape), tracked);
  for (std::size_t r = 0; r < rows; ++r) {
    double acc = 0;
    for (int i = 0; i < d; ++i) acc += x.val()[r * d + i];
    out.val()[r] = acc;
  }
  if (tracked)
    Tape::current()->record(out, [x, out, rows, d]() {
      const auto& og = out.grad();
      auto& xg = x.grad();
      for (std::size_t r = 0; r < rows; ++r)
        for (int i = 0; i < d; ++i) xg[r * d + i] += og[r];
    });
  return out;
}

// ------------------------------------------------------- row-wise primitives

// shift-stabilized softmax along the last axis
inline Tensor softmax(const Tensor& x) {
  int d = detail::last_dim(x);
  std::size_t rows = x.size() / d;
  bool tracked = detail::track({x});
  Tensor out = detail::make_out(x.shape(), tracked);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = x.val().data() + r * d;
    double* or_ = out.val().data() + r * d;
    double mx = xr[0];
    for (int i = 1; i < d; ++i) mx = std::max(mx, xr[i]);
    double z = 0;
    for (int i = 0; i < d; ++i) {
      or_[i] = std::exp(xr[i] - mx);
      z += or_[i];
    }
    for (int i = 0; i < d; ++i) or_[i] /= z;
  }
  detail::check_finite(out, "softmax");
  if (tracked)
    Tape::current()->record(out, [x, out, rows, d]() {
      const auto& og = out.grad();
      const auto& ov = out.val();
      auto& xg = x.grad();
      for (std::size_t r = 0; r < rows; ++r) {
        double dot = 0;
        for (int i = 0; i < d; ++i) dot += og[r * d + i] * ov[r * d + i];
        for (int i = 0; i < d; ++i)
          xg[r * d + i] += ov[r * d + i] * (og[r * d + i] - dot);
      }
    });
  return out;
}

inline Tensor log_softmax(const Tensor& x) {
  int d = detail::last_dim(x);
  std::size_t rows = x.size() / d;
  bool tracked = detail::track({x});
  Tensor out = detail::make_out(x.shape(), tracked);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = x.val().data() + r * d;
    double* or_ = out.val().data() + r * d;
    double mx = xr[0];
    for (int i = 1; i < d; ++i) mx = std::max(mx, xr[i]);
    double z = 0;
    for (int i = 0; i < d; ++i) z += std::exp(xr[i] - mx);
    double lz = mx + std::log(z);
    for (int i = 0; i < d; ++i) or_[i] = xr[i] - lz;
  }
  detail::check_finite(out, "log_softmax");
  if (tracked)
    Tape::current()->record(out, [x, out, rows, d]() {
      const auto& og = out.grad();
      const auto& ov = out.val();
      auto& xg = x.grad();
      for (std::size_t r = 0; r < rows; ++r) {
        double sum = 0;
        for (int i = 0; i < d; ++i) sum += og[r * d + i];
        for (int i = 0; i < d; ++i)
          xg[r * d + i] += og[r * d + i] - std::exp(ov[r * d + i]) * sum;
      }
    });
  return out;
}

// per-last-axis standardization followed by gain/bias
inline Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                         double eps = 1e-5) {
  int d = detail::last_dim(x);
  if (gain.shape() != std::vector<int>{d} || bias.shape() != std::vector<int>{d})
    throw ShapeMismatch("layer_norm: gain/bias must match last axis");
  std::size_t rows = x.size() / d;
  bool tracked = detail::track({x, gain, bias});
  Tensor out = detail::make_out(x.shape(), tracked);
  auto xhat = std::make_shared<std::vector<double>>(x.size());
  auto inv_std = std::make_shared<std::vector<double>>(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = x.val().data() + r * d;
    double m = 0;
    for (int i = 0; i < d; ++i) m += xr[i];
    m /= d;
    double var = 0;
    for (int i = 0; i < d; ++i) var += (xr[i] - m) * (xr[i] - m);
    var /= d;
    double is = 1.0 / std::sqrt(var + eps);
    (*inv_std)[r] = is;
    double* hr = xhat->data() + r * d;
    double* or_ = out.val().data() + r * d;
    for (int i = 0; i < d; ++i) {
      hr[i] = (xr[i] - m) * is;
      or_[i] = gain.val()[i] * hr[i] + bias.val()[i];
    }
  }
  detail::check_finite(out, "layer_norm");
  if (tracked)
    Tape::current()->record(out, [x, gain, bias, out, xhat, inv_std, rows, d]() {
      const auto& og = out.grad();
      for (std::size_t r = 0; r < rows; ++r) {
        const double* hr = xhat->data() + r * d;
        const double* gr = og.data() + r * d;
        if (x.requires_grad()) {
          double* xg = x.grad().data() + r * d;
          double mean_dh = 0, mean_dhh = 0;
          for (int i = 0; i < d; ++i) {
            double dh = gr[i] * gain.val()[i];
            mean_dh += dh;
            mean_dhh += dh * hr[i];
          }
          mean_dh /= d;
          mean_dhh /= d;
          double is = (*inv_std)[r];
          for (int i = 0; i < d; ++i) {
            double dh = gr[i] * gain.val()[i];
            xg[i] += is * (dh - mean_dh - hr[i] * mean_dhh);
          }
        }
        if (gain.requires_grad()) {
          auto& gg = gain.grad();
          for (int i = 0; i < d; ++i) gg[i] += gr[i] * hr[i];
        }
        if (bias.requires_grad()) {
          auto& bg = bias.grad();
          for (int i = 0; i < d; ++i) bg[i] += gr[i];
        }
      }
    });
  return out;
}

// ----------------------------------------------------------- grad utilities

inline double global_grad_norm(const std::vector<Tensor>& params) {
  double ss = 0;
  for (const auto& p : params)
    for (double g : p.grad()) ss += g * g;
  return std::sqrt(ss);
}

// scales gradients so the global norm is at most max_norm (default 100)
inline double clip_gradients(const std::vector<Tensor>& params, double max_norm = 100.0) {
  double norm = global_grad_norm(params);
  if (norm > max_norm && norm > 0) {
    double scale = max_norm / norm;
    for (const auto& p : params)
      for (double& g : p.grad()) g *= scale;
  }
  return norm;
}

inline void zero_gradients(const std::vector<Tensor>& params) {
  for (const auto& p : params) p.zero_grad();
}

// temporarily treats parameters as constants (no gradient accumulation)
class FreezeGuard {
 public:
  explicit FreezeGuard(const std::vector<Tensor>& params) : params_(params) {
    for (const auto& p : params_) {
      saved_.push_back(p.requires_grad());
      p.set_requires_grad(false);
    }
  }
  ~FreezeGuard() {
    for (std::size_t i = 0; i < params_.size(); ++i) params_[i].set_requires_grad(saved_[i]);
  }
  FreezeGuard(const FreezeGuard&) = delete;
  FreezeGuard& operator=(const FreezeGuard&) = delete;

 private:
  std::vector<Tensor> params_;
  std::vector<bool> saved_;
};

// -------------------------------------------------------- binary checkpoints
// magic, version, count, then per block: name length, name, rank, extents,
// little-endian doubles

inline constexpr char kCheckpointMagic[8] = {'Q', 'W', 'M', 'T', 'E', 'N', 'S', '0'};

inline void save_params(const std::string& path,
                        const std::vector<std::pair<std::string, Tensor>>& blocks) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write checkpoint: " + path);
  out.write(kCheckpointMagic, 8);
  std::uint32_t version = 1;
  out.write(reinterpret_cast<const char*>(&version), 4);
  std::uint64_t count = blocks.size();
  out.write(reinterpret_cast<const char*>(&count), 8);
  for (const auto& [name, t] : blocks) {
    std::uint32_t len = static_cast<std::uint32_t>(name.size());
    out.write(reinterpret_cast<const char*>(&len), 4);
    out.write(name.data(), len);
    std::uint32_t rank = static_cast<std::uint32_t>(t.shape().size());
    out.write(reinterpret_cast<const char*>(&rank), 4);
    for (int e : t.shape()) {
      std::uint64_t ext = static_cast<std::uint64_t>(e);
      out.write(reinterpret_cast<const char*>(&ext), 8);
    }
    out.write(reinterpret_cast<const char*>(t.val().data()),
              static_cast<std::streamsize>(sizeof(double) * t.size()));
  }
}

inline std::vector<std::pair<std::string, Tensor>> load_params(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read checkpoint: " + path);
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, kCheckpointMagic, 8) != 0)
    throw Error("bad checkpoint magic in " + path);
  std::uint32_t version = 0;
  in.read(reinterpret_cast<char*>(&version), 4);
  if (version != 1) throw Error("unsupported checkpoint version");
  std::uint64_t count = 0;
  in.read(reinterpret_cast<char*>(&count), 8);
  std::vector<std::pair<std::string, Tensor>> blocks;
  for (std::uint64_t b = 0; b < count; ++b) {
    std::uint32_t len = 0;
    in.read(reinterpret_cast<char*>(&len), 4);
    std::string name(len, '\0');
    in.read(name.data(), len);
    std::uint32_t rank = 0;
    in.read(reinterpret_cast<char*>(&rank), 4);
    std::vector<int> shape(rank);
    for (auto& e : shape) {
      std::uint64_t ext = 0;
      in.read(reinterpret_cast<char*>(&ext), 8);
      e = static_cast<int>(ext);
    }
    std::vector<double> data(Tensor::numel(shape));
    in.read(reinterpret_cast<char*>(data.data()),
            static_cast<std::streamsize>(sizeof(double) * data.size()));
    if (!in) throw Error("truncated checkpoint: " + path);
    blocks.emplace_back(std::move(name), Tensor::from_data(std::move(shape), std::move(data)));
  }
  return blocks;
}

}  // namespace qwm::tensor
