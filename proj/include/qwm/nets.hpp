#pragma once

// Network building blocks: dense stacks (affine -> LayerNorm -> SiLU), gated
// recurrent cell, straight-through categorical latents, two-hot heads.

#include <cmath>
#include <string>
#include <vector>

#include "qwm/common.hpp"
#include "qwm/tensor.hpp"

namespace qwm::nets {

using tensor::Tensor;

// truncated-normal weights scaled by 1/sqrt(fan_in), zero biases
inline Tensor init_weight(int out_dim, int in_dim, Rng& rng) {
  std::vector<double> w(static_cast<std::size_t>(out_dim) * in_dim);
  double scale = 1.0 / std::sqrt(static_cast<double>(in_dim));
  for (auto& x : w) x = rng.truncated_normal(2.0) * scale;
  Tensor t = Tensor::from_data({out_dim, in_dim}, std::move(w));
  t.set_requires_grad(true);
  return t;
}

inline Tensor init_zeros(std::vector<int> shape) {
  Tensor t = Tensor::zeros(std::move(shape));
  t.set_requires_grad(true);
  return t;
}

inline Tensor init_ones(int dim) {
  Tensor t = Tensor::full({dim}, 1.0);
  t.set_requires_grad(true);
  return t;
}

struct DenseLayer {
  Tensor W, b;       // affine
  Tensor gain, bias;  // layer norm (hidden layers only)
  bool normed = false;
};

// hidden layers apply affine -> layer_norm -> SiLU; the output layer is plain
struct DenseStack {
  std::vector<DenseLayer> layers;
  int in_dim = 0, out_dim = 0;

  Tensor forward(const Tensor& x) const {
    Tensor h = x;
    for (const auto& l : layers) {
      h = tensor::affine(h, l.W, l.b);
      if (l.normed) h = tensor::silu(tensor::layer_norm(h, l.gain, l.bias));
    }
    return h;
  }

  void collect(const std::string& prefix, std::vector<std::pair<std::string, Tensor>>& out) const {
    for (std::size_t i = 0; i < layers.size(); ++i) {
      std::string base = prefix + "/l" + std::to_string(i);
      out.emplace_back(base + "/W", layers[i].W);
      out.emplace_back(base + "/b", layers[i].b);
      if (layers[i].normed) {
        out.emplace_back(base + "/gain", layers[i].gain);
        out.emplace_back(base + "/bias", layers[i].bias);
      }
    }
  }
  std::vector<Tensor> params() const {
    std::vector<Tensor> out;
    for (const auto& l : layers) {
      out.push_back(l.W);
      out.push_back(l.b);
      if (l.normed) {
        out.push_back(l.gain);
        out.push_back(l.bias);
      }
    }
    return out;
  }
};

inline DenseStack build_dense_stack(int in_dim, const std::vector<int>& widths, int out_dim,
                                    Rng& rng) {
  DenseStack s;
  s.in_dim = in_dim;
  s.out_dim = out_dim;
  int cur = in_dim;
  for (int w : widths) {
    DenseLayer l;
    l.W = init_weight(w, cur, rng);
    l.b = init_zeros({w});
    l.gain = init_ones(w);
    l.bias = init_zeros({w});
    l.normed = true;
    s.layers.push_back(std::move(l));
    cur = w;
  }
  DenseLayer out;
  out.W = init_weight(out_dim, cur, rng);
  out.b = init_zeros({out_dim});
  s.layers.push_back(std::move(out));
  return s;
}

// ------------------------------------------------------------------ GRU cell

struct GatedRecurrentCell {
  Tensor Wu, Uu, bu;  // update gate
  Tensor Wr, Ur, br;  // reset gate
  Tensor Wc, Uc, bc;  // candidate
  int input_dim = 0, state_dim = 0;

  void collect(const std::string& prefix, std::vector<std::pair<std::string, Tensor>>& out) const {
    out.emplace_back(prefix + "/Wu", Wu);
    out.emplace_back(prefix + "/Uu", Uu);
    out.emplace_back(prefix + "/bu", bu);
    out.emplace_back(prefix + "/Wr", Wr);
    out.emplace_back(prefix + "/Ur", Ur);
    out.emplace_back(prefix + "/br", br);
    out.emplace_back(prefix + "/Wc", Wc);
    out.emplace_back(prefix + "/Uc", Uc);
    out.emplace_back(prefix + "/bc", bc);
  }
  std::vector<Tensor> params() const { return {Wu, Uu, bu, Wr, Ur, br, Wc, Uc, bc}; }
};

inline GatedRecurrentCell build_grucell(int input_dim, int state_dim, Rng& rng) {
  GatedRecurrentCell c;
  c.input_dim = input_dim;
  c.state_dim = state_dim;
  c.Wu = init_weight(state_dim, input_dim, rng);
  c.Uu = init_weight(state_dim, state_dim, rng);
  c.bu = init_zeros({state_dim});
  c.Wr = init_weight(state_dim, input_dim, rng);
  c.Ur = init_weight(state_dim, state_dim, rng);
  c.br = init_zeros({state_dim});
  c.Wc = init_weight(state_dim, input_dim, rng);
  c.Uc = init_weight(state_dim, state_dim, rng);
  c.bc = init_zeros({state_dim});
  return c;
}

// u = sig(xWu + hUu + bu), r = sig(xWr + hUr + br),
// c = tanh(xWc + (r*h)Uc + bc), h' = (1-u)*h + u*c
inline Tensor grucell_step(const GatedRecurrentCell& cell, const Tensor& x,
                           const Tensor& h_prev) {
  if (x.shape().size() != 2 || x.shape()[1] != cell.input_dim ||
      h_prev.shape().size() != 2 || h_prev.shape()[1] != cell.state_dim ||
      x.shape()[0] != h_prev.shape()[0])
    throw tensor::ShapeMismatch("grucell_step: extent mismatch");
  using namespace tensor;
  Tensor zero_b = Tensor::zeros({cell.state_dim});
  Tensor u = sigmoid(add(affine(x, cell.Wu, cell.bu), affine(h_prev, cell.Uu, zero_b)));
  Tensor r = sigmoid(add(affine(x, cell.Wr, cell.br), affine(h_prev, cell.Ur, zero_b)));
  Tensor c = tanh(add(affine(x, cell.Wc, cell.bc), affine(mul(r, h_prev), cell.Uc, zero_b)));
  Tensor keep = mul(add_scalar(neg(u), 1.0), h_prev);
  return add(keep, mul(u, c));
}

// --------------------------------------------------- categorical latents

struct CategoricalLatent {
  int groups = 0, classes = 0;
  Tensor logits;  // (B, G, K)
};

struct CategoricalSample {
  Tensor sample;  // (B, G*K) one-hot per group, straight-through
  Tensor probs;   // (B, G, K) unimix-smoothed
};

inline Tensor unimix_probs(const Tensor& logits, double unimix) {
  int k = logits.shape().back();
  Tensor p = tensor::softmax(logits);
  if (unimix > 0)
    p = tensor::add_scalar(tensor::mul_scalar(p, 1.0 - unimix), unimix / k);
  return p;
}

// probs = (1-unimix)*softmax(logits/temperature) + unimix*uniform; one draw per
// group; the gradient of the sample equals the gradient of the probabilities
inline CategoricalSample sample_categorical(const CategoricalLatent& latent, Rng& rng,
                                            double temperature = 1.0, double unimix = 0.0) {
  const Tensor& logits = latent.logits;
  if (logits.shape().size() != 3 || logits.shape()[1] != latent.groups ||
      logits.shape()[2] != latent.classes)
    throw tensor::ShapeMismatch("sample_categorical: logits must be (B,G,K)");
  int B = logits.shape()[0], G = latent.groups, K = latent.classes;
  Tensor scaled = temperature == 1.0 ? logits : tensor::mul_scalar(logits, 1.0 / temperature);
  Tensor probs = unimix_probs(scaled, unimix);
  Tensor hard = Tensor::zeros({B, G, K});
  for (int b = 0; b < B; ++b)
    for (int g = 0; g < G; ++g) {
      const double* p = probs.val().data() + (static_cast<std::size_t>(b) * G + g) * K;
      double u = rng.uniform();
      double acc = 0;
      int pick = K - 1;
      for (int k = 0; k < K; ++k) {
        acc += p[k];
        if (u < acc) {
          pick = k;
          break;
        }
      }
      hard.val()[(static_cast<std::size_t>(b) * G + g) * K + pick] = 1.0;
    }
  Tensor st = tensor::straight_through(probs, hard);
  return {tensor::reshape(st, {B, G * K}), probs};
}

// deterministic per-group argmax, still straight-through
inline CategoricalSample mode_categorical(const CategoricalLatent& latent, double unimix = 0.0) {
  const Tensor& logits = latent.logits;
  int B = logits.shape()[0], G = latent.groups, K = latent.classes;
  Tensor probs = unimix_probs(logits, unimix);
  Tensor hard = Tensor::zeros({B, G, K});
  for (int b = 0; b < B; ++b)
    for (int g = 0; g < G; ++g) {
      const double* p = probs.val().data() + (static_cast<std::size_t>(b) * G + g) * K;
      int best = 0;
      for (int k = 1; k < K; ++k)
        if (p[k] > p[best]) best = k;
      hard.val()[(static_cast<std::size_t>(b) * G + g) * K + best] = 1.0;
    }
  Tensor st = tensor::straight_through(probs, hard);
  return {tensor::reshape(st, {B, G * K}), probs};
}

// sum over groups of KL(p || q), per batch row -> (B, 1); the same unimix
// smoothing is applied to both arguments
inline Tensor kl_categorical(const Tensor& p_logits, const Tensor& q_logits,
                             double unimix = 0.0) {
  if (p_logits.shape() != q_logits.shape() || p_logits.shape().size() != 3)
    throw tensor::ShapeMismatch("kl_categorical: need matching (B,G,K) logits");
  using namespace tensor;
  int B = p_logits.shape()[0], G = p_logits.shape()[1], K = p_logits.shape()[2];
  Tensor p = unimix_probs(p_logits, unimix);
  Tensor q = unimix_probs(q_logits, unimix);
  Tensor elt = mul(p, sub(log(p), log(q)));
  return sum_last(reshape(elt, {B, G * K}));
}

// ------------------------------------------------------------- two-hot heads

// B bin centers uniformly spaced and symmetric in symlog space
struct TwoHotHead {
  std::vector<double> centers;  // strictly increasing, symlog space

  static TwoHotHead make(int bins, double symlog_limit) {
    TwoHotHead h;
    h.centers.resize(bins);
    for (int i = 0; i < bins; ++i)
      h.centers[i] = -symlog_limit + 2.0 * symlog_limit * i / (bins - 1);
    return h;
  }
  int bins() const { return static_cast<int>(centers.size()); }
};

// raw value -> symlog -> weights on at most 2 adjacent bins summing to 1
inline std::vector<double> twohot_encode(double value, const TwoHotHead& head) {
  int n = head.bins();
  std::vector<double> w(n, 0.0);
  double x = tensor::symlog_value(value);
  if (x <= head.centers.front()) {
    w.front() = 1.0;
    return w;
  }
  if (x >= head.centers.back()) {
    w.back() = 1.0;
    return w;
  }
  int hi = 1;
  while (head.centers[hi] < x) ++hi;
  int lo = hi - 1;
  double span = head.centers[hi] - head.centers[lo];
  double t = (x - head.centers[lo]) / span;
  w[lo] = 1.0 - t;
  w[hi] = t;
  return w;
}

// expected value: sum(probs * centers) mapped back through symexp; (B,bins)->(B,1)
inline Tensor twohot_decode(const Tensor& probs, const TwoHotHead& head) {
  if (probs.shape().size() != 2 || probs.shape()[1] != head.bins())
    throw tensor::ShapeMismatch("twohot_decode: probs must be (B, bins)");
  Tensor centers = Tensor::from_data({head.bins(), 1}, head.centers);
  return tensor::symexp(tensor::matmul(probs, centers));
}

inline double twohot_decode_value(const std::vector<double>& probs, const TwoHotHead& head) {
  double acc = 0;
  for (int i = 0; i < head.bins(); ++i) acc += probs[i] * head.centers[i];
  return tensor::symexp_value(acc);
}

// -NLL of two-hot targets under logits; targets is a (B,bins) constant
inline Tensor twohot_nll(const Tensor& logits, const Tensor& targets) {
  if (logits.shape() != targets.shape())
    throw tensor::ShapeMismatch("twohot_nll: logits/targets mismatch");
  using namespace tensor;
  return neg(sum_last(mul(targets, log_softmax(logits))));
}

}  // namespace qwm::nets
