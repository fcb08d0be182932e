#pragma once

// Morphology-conditioned recurrent state-space world model: dual-tower
// encoder, mu-conditioned recurrent dynamics, categorical prior/posterior,
// decoder, two-hot reward head, continuation head, and the variational loss.

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "qwm/common.hpp"
#include "qwm/nets.hpp"
#include "qwm/optim.hpp"
#include "qwm/tensor.hpp"

namespace qwm::wm {

using nets::DenseStack;
using nets::GatedRecurrentCell;
using nets::TwoHotHead;
using tensor::Tensor;

struct NaNLoss : Error {
  using Error::Error;
};

struct WorldModelConfig {
  int obs_dim = 9;
  int act_dim = 2;
  int mu_dim = 10;
  int deter_dim = 128;  // D_h
  int groups = 16;      // G
  int classes = 16;     // K
  int width = 256;      // dynamic tower / stack width; static tower is half
  int enc_dyn_depth = 2;
  int enc_stat_depth = 2;
  int dec_depth = 2;
  int reward_depth = 4;  // one deeper than the 3-layer critic-style heads
  int cont_depth = 2;    // termination boundary is sharp; shallow suffices
  int bins = 63;
  double symlog_limit = 20.0;
  double beta_dyn = 0.5;
  double beta_rep = 0.1;
  double free_bits = 1.0;
  double w_dec = 1.0, w_rew = 1.0, w_cont = 1.0;
  double unimix = 0.01;
  bool encoder_conditioning = true;
  bool rssm_conditioning = true;

  int z_dim() const { return groups * classes; }
  int feat_dim() const { return deter_dim + z_dim(); }
  int stat_width() const { return width / 2; }

  // full-size dimensions from the reference architecture, for shape tests
  static WorldModelConfig paper_scale() {
    WorldModelConfig c;
    c.obs_dim = 48;
    c.act_dim = 12;
    c.deter_dim = 512;
    c.groups = 32;
    c.classes = 32;
    c.width = 1024;
    c.enc_dyn_depth = 5;
    c.bins = 255;
    return c;
  }
};

struct LatentState {
  Tensor h;         // (B, D_h)
  Tensor z;         // (B, G*K) flattened straight-through one-hot
  Tensor z_logits;  // (B, G, K)

  int batch() const { return h.shape()[0]; }
};

struct WorldModelParams {
  WorldModelConfig cfg;
  DenseStack enc_dyn;     // observation tower
  DenseStack enc_stat;    // morphology tower (present iff encoder conditioning)
  DenseStack enc_fusion;  // fuse + project
  DenseStack rnn_pre;     // pre-net before the recurrent cell
  GatedRecurrentCell cell;
  DenseStack prior_net;
  DenseStack posterior_net;
  DenseStack decoder;
  DenseStack reward_head;
  DenseStack cont_head;
  TwoHotHead reward_bins;

  std::vector<std::pair<std::string, Tensor>> named_params() const {
    std::vector<std::pair<std::string, Tensor>> out;
    enc_dyn.collect("wm/enc_dyn", out);
    if (cfg.encoder_conditioning) enc_stat.collect("wm/enc_stat", out);
    enc_fusion.collect("wm/enc_fusion", out);
    rnn_pre.collect("wm/rnn_pre", out);
    cell.collect("wm/cell", out);
    prior_net.collect("wm/prior", out);
    posterior_net.collect("wm/posterior", out);
    decoder.collect("wm/decoder", out);
    reward_head.collect("wm/reward", out);
    cont_head.collect("wm/cont", out);
    return out;
  }
  std::vector<Tensor> params() const {
    std::vector<Tensor> out;
    for (auto& [n, t] : named_params()) out.push_back(t);
    return out;
  }
};

// towers are stacks of normed layers with no plain output layer
inline DenseStack build_tower(int in_dim, const std::vector<int>& widths, Rng& rng) {
  DenseStack s;
  s.in_dim = in_dim;
  s.out_dim = widths.empty() ? in_dim : widths.back();
  int cur = in_dim;
  for (int w : widths) {
    nets::DenseLayer l;
    l.W = nets::init_weight(w, cur, rng);
    l.b = nets::init_zeros({w});
    l.gain = nets::init_ones(w);
    l.bias = nets::init_zeros({w});
    l.normed = true;
    s.layers.push_back(std::move(l));
    cur = w;
  }
  return s;
}

inline WorldModelParams build_world_model(const WorldModelConfig& cfg, Rng& rng) {
  WorldModelParams p;
  p.cfg = cfg;
  int W = cfg.width, Ws = cfg.stat_width();
  p.enc_dyn = build_tower(cfg.obs_dim, std::vector<int>(cfg.enc_dyn_depth, W), rng);
  int fusion_in = W;
  if (cfg.encoder_conditioning) {
    p.enc_stat = build_tower(cfg.mu_dim, std::vector<int>(cfg.enc_stat_depth, Ws), rng);
    fusion_in += Ws;
  }
  p.enc_fusion = build_tower(fusion_in, {W}, rng);
  int rnn_in = cfg.z_dim() + cfg.act_dim + (cfg.rssm_conditioning ? cfg.mu_dim : 0);
  p.rnn_pre = build_tower(rnn_in, {cfg.deter_dim}, rng);
  p.cell = nets::build_grucell(cfg.deter_dim, cfg.deter_dim, rng);
  p.prior_net = nets::build_dense_stack(cfg.deter_dim, {W}, cfg.z_dim(), rng);
  p.posterior_net = nets::build_dense_stack(cfg.deter_dim + W, {W}, cfg.z_dim(), rng);
  p.decoder = nets::build_dense_stack(cfg.feat_dim(), std::vector<int>(cfg.dec_depth, W),
                                      cfg.obs_dim, rng);
  p.reward_head = nets::build_dense_stack(cfg.feat_dim(), std::vector<int>(cfg.reward_depth, W),
                                          cfg.bins, rng);
  p.cont_head = nets::build_dense_stack(cfg.feat_dim(), std::vector<int>(cfg.cont_depth, W), 1,
                                        rng);
  p.reward_bins = TwoHotHead::make(cfg.bins, cfg.symlog_limit);
  return p;
}

inline LatentState initial_state(const WorldModelConfig& cfg, int batch) {
  return {Tensor::zeros({batch, cfg.deter_dim}), Tensor::zeros({batch, cfg.z_dim()}),
          Tensor::zeros({batch, cfg.groups, cfg.classes})};
}

// e_t = fusion(concat(dyn_tower(o_t), stat_tower(mu))); with encoder
// conditioning off the fusion consumes the dynamic features only
inline Tensor encode(const WorldModelParams& p, const Tensor& obs, const Tensor& mu) {
  Tensor dyn = p.enc_dyn.forward(obs);
  if (!p.cfg.encoder_conditioning) return p.enc_fusion.forward(dyn);
  Tensor stat = p.enc_stat.forward(mu);
  return p.enc_fusion.forward(tensor::concat({dyn, stat}));
}

// h_t = cell(pre(concat(z_prev, a_prev, mu)), h_prev); mu is dropped from the
// concat when recurrent conditioning is off
inline Tensor recurrent_step(const WorldModelParams& p, const LatentState& prev,
                             const Tensor& a_prev, const Tensor& mu) {
  std::vector<Tensor> parts = {prev.z, a_prev};
  if (p.cfg.rssm_conditioning) parts.push_back(mu);
  Tensor x = p.rnn_pre.forward(tensor::concat(parts));
  return nets::grucell_step(p.cell, x, prev.h);
}

struct LatentDraw {
  Tensor z;       // (B, G*K) straight-through sample
  Tensor logits;  // (B, G, K)
};

inline LatentDraw posterior(const WorldModelParams& p, const Tensor& h, const Tensor& e,
                            Rng& rng, bool sample = true) {
  Tensor logits = tensor::reshape(p.posterior_net.forward(tensor::concat({h, e})),
                                  {h.shape()[0], p.cfg.groups, p.cfg.classes});
  nets::CategoricalLatent lat{p.cfg.groups, p.cfg.classes, logits};
  auto s = sample ? nets::sample_categorical(lat, rng, 1.0, p.cfg.unimix)
                  : nets::mode_categorical(lat, p.cfg.unimix);
  return {s.sample, logits};
}

inline LatentDraw prior(const WorldModelParams& p, const Tensor& h, Rng& rng,
                        bool sample = true) {
  Tensor logits = tensor::reshape(p.prior_net.forward(h),
                                  {h.shape()[0], p.cfg.groups, p.cfg.classes});
  nets::CategoricalLatent lat{p.cfg.groups, p.cfg.classes, logits};
  auto s = sample ? nets::sample_categorical(lat, rng, 1.0, p.cfg.unimix)
                  : nets::mode_categorical(lat, p.cfg.unimix);
  return {s.sample, logits};
}

// predicted observation in symlog space
inline Tensor decode(const WorldModelParams& p, const Tensor& h, const Tensor& z) {
  return p.decoder.forward(tensor::concat({h, z}));
}

struct RewardPrediction {
  Tensor logits;  // (B, bins)
  Tensor probs;
  Tensor expected;  // (B, 1), raw reward scale
};

inline RewardPrediction predict_reward(const WorldModelParams& p, const Tensor& h,
                                       const Tensor& z) {
  Tensor logits = p.reward_head.forward(tensor::concat({h, z}));
  Tensor probs = tensor::softmax(logits);
  return {logits, probs, nets::twohot_decode(probs, p.reward_bins)};
}

inline Tensor continuation_logit(const WorldModelParams& p, const Tensor& h, const Tensor& z) {
  return p.cont_head.forward(tensor::concat({h, z}));
}
inline Tensor predict_continuation(const WorldModelParams& p, const Tensor& h, const Tensor& z) {
  return tensor::sigmoid(continuation_logit(p, h, z));
}

// ------------------------------------------------------------- training loss

// time-major sequence batch; actions are aligned so act[t] led to obs[t],
// reward[t] was received with obs[t], cont[t]=0 iff obs[t] is terminal
struct SequenceBatch {
  int batch = 0, steps = 0;
  std::vector<Tensor> obs;     // T x (B, obs_dim)
  std::vector<Tensor> act;     // T x (B, act_dim)
  std::vector<std::vector<double>> reward;  // T x B, already normalized
  std::vector<std::vector<double>> cont;    // T x B, in {0, 1}
  Tensor mu;                   // (B, mu_dim)
  std::vector<int> morph_ids;  // B
};

struct LossTerms {
  double dec = 0, rew = 0, cont = 0, kl_dyn = 0, kl_rep = 0, total = 0;
  Tensor total_loss;
  // per-sequence diagnostics summed over time: two-hot NLL, and the squared
  // error of the expected reward prediction in target space
  std::vector<double> reward_nll_per_row;
  std::vector<double> reward_sqerr_per_row;
};

struct ObserveResult {
  std::vector<LatentState> states;  // posterior states, one per time step
  LossTerms loss;
};

inline ObserveResult observe_sequence(const WorldModelParams& p, const SequenceBatch& batch,
                                      Rng& rng) {
  using namespace tensor;
  const auto& cfg = p.cfg;
  int B = batch.batch, T = batch.steps;
  if (static_cast<int>(batch.obs.size()) != T || static_cast<int>(batch.act.size()) != T)
    throw ShapeMismatch("observe_sequence: misaligned sequence batch");

  ObserveResult out;
  LatentState state = initial_state(cfg, B);
  Tensor dec_acc = Tensor::scalar(0.0);
  Tensor rew_acc = Tensor::scalar(0.0);
  Tensor cont_acc = Tensor::scalar(0.0);
  Tensor kld_acc = Tensor::scalar(0.0);
  Tensor klr_acc = Tensor::scalar(0.0);
  out.loss.reward_nll_per_row.assign(B, 0.0);
  out.loss.reward_sqerr_per_row.assign(B, 0.0);

  for (int t = 0; t < T; ++t) {
    Tensor h = recurrent_step(p, state, batch.act[t], batch.mu);
    Tensor e = encode(p, batch.obs[t], batch.mu);
    LatentDraw post = posterior(p, h, e, rng);
    Tensor prior_logits = reshape(p.prior_net.forward(h), {B, cfg.groups, cfg.classes});

    // reconstruction in symlog space, summed over dims, mean over batch
    Tensor target = symlog(batch.obs[t]);
    Tensor diff = sub(decode(p, h, post.z), target);
    dec_acc = add(dec_acc, mul_scalar(sum_all(mul(diff, diff)), 1.0 / B));

    // two-hot reward NLL
    std::vector<double> tw(static_cast<std::size_t>(B) * cfg.bins);
    for (int b = 0; b < B; ++b) {
      auto w = nets::twohot_encode(batch.reward[t][b], p.reward_bins);
      std::copy(w.begin(), w.end(), tw.begin() + static_cast<std::size_t>(b) * cfg.bins);
    }
    Tensor rew_logits = p.reward_head.forward(concat({h, post.z}));
    Tensor nll = nets::twohot_nll(rew_logits, Tensor::from_data({B, cfg.bins}, std::move(tw)));
    for (int b = 0; b < B; ++b) {
      out.loss.reward_nll_per_row[b] += nll.val()[b];
      // expected reward in target space, computed off-tape
      const double* lg = rew_logits.val().data() + static_cast<std::size_t>(b) * cfg.bins;
      double mx = lg[0];
      for (int i = 1; i < cfg.bins; ++i) mx = std::max(mx, lg[i]);
      double zsum = 0, acc = 0;
      for (int i = 0; i < cfg.bins; ++i) zsum += std::exp(lg[i] - mx);
      for (int i = 0; i < cfg.bins; ++i)
        acc += std::exp(lg[i] - mx) / zsum * p.reward_bins.centers[i];
      double err = tensor::symexp_value(acc) - batch.reward[t][b];
      out.loss.reward_sqerr_per_row[b] += err * err;
    }
    rew_acc = add(rew_acc, mean_all(nll));

    // Bernoulli continuation NLL: softplus(l) - c*l
    Tensor cl = continuation_logit(p, h, post.z);
    Tensor cflag = Tensor::from_data({B, 1}, batch.cont[t]);
    cont_acc = add(cont_acc, mean_all(sub(softplus(cl), mul(cflag, cl))));

    // KL balancing with free bits on the batch mean
    Tensor kl_dyn = mean_all(nets::kl_categorical(stopgrad(post.logits), prior_logits, cfg.unimix));
    Tensor kl_rep = mean_all(nets::kl_categorical(post.logits, stopgrad(prior_logits), cfg.unimix));
    kld_acc = add(kld_acc, max_scalar(kl_dyn, cfg.free_bits));
    klr_acc = add(klr_acc, max_scalar(kl_rep, cfg.free_bits));

    state = {h, post.z, post.logits};
    out.states.push_back(state);
  }

  double inv_t = 1.0 / T;
  Tensor dec = mul_scalar(dec_acc, inv_t);
  Tensor rew = mul_scalar(rew_acc, inv_t);
  Tensor cont = mul_scalar(cont_acc, inv_t);
  Tensor kld = mul_scalar(kld_acc, inv_t);
  Tensor klr = mul_scalar(klr_acc, inv_t);
  Tensor total = add(add(add(mul_scalar(dec, cfg.w_dec), mul_scalar(rew, cfg.w_rew)),
                         mul_scalar(cont, cfg.w_cont)),
                     add(mul_scalar(kld, cfg.beta_dyn), mul_scalar(klr, cfg.beta_rep)));
  out.loss.dec = dec.item();
  out.loss.rew = rew.item();
  out.loss.cont = cont.item();
  out.loss.kl_dyn = kld.item();
  out.loss.kl_rep = klr.item();
  out.loss.total = total.item();
  out.loss.total_loss = total;
  if (!std::isfinite(out.loss.total))
    throw NaNLoss("world-model loss diverged (non-finite total)");
  return out;
}

// ---------------------------------------------------------------- imagination

struct ImaginedTrajectory {
  std::vector<LatentState> states;  // H+1, states[0] = start
  std::vector<Tensor> actions;      // H
  std::vector<Tensor> rewards;      // H, reward predicted at states[t+1], raw scale
  std::vector<Tensor> cont_probs;   // H, continuation predicted at states[t+1]
};

using Policy = std::function<Tensor(const LatentState&, Rng&)>;

// horizon-length latent rollout using the prior only; never reads environment
// observations beyond the start states
inline ImaginedTrajectory imagine(const WorldModelParams& p, const LatentState& start,
                                  const Tensor& mu, const Policy& policy, int horizon,
                                  Rng& rng) {
  ImaginedTrajectory traj;
  traj.states.push_back(start);
  for (int t = 0; t < horizon; ++t) {
    const LatentState& s = traj.states.back();
    Tensor a = policy(s, rng);
    Tensor h = recurrent_step(p, s, a, mu);
    LatentDraw pr = prior(p, h, rng);
    LatentState next{h, pr.z, pr.logits};
    traj.actions.push_back(a);
    traj.rewards.push_back(predict_reward(p, next.h, next.z).expected);
    traj.cont_probs.push_back(predict_continuation(p, next.h, next.z));
    traj.states.push_back(next);
  }
  return traj;
}

// ------------------------------------------------------------ open-loop eval

// posterior inference over the context, then prior-only unrolling driven by
// the action sequence; returns decoded observations (symexp back to raw) for
// every step. Deterministic: uses the latent mode throughout.
inline std::vector<Tensor> open_loop_rollout(const WorldModelParams& p,
                                             const std::vector<Tensor>& context_obs,
                                             const std::vector<Tensor>& actions,
                                             const Tensor& mu) {
  if (context_obs.empty() || actions.size() < context_obs.size())
    throw tensor::ShapeMismatch("open_loop_rollout: need context <= actions length");
  Rng unused(0);
  int B = context_obs[0].shape()[0];
  LatentState state = initial_state(p.cfg, B);
  std::vector<Tensor> preds;
  for (std::size_t t = 0; t < actions.size(); ++t) {
    Tensor h = recurrent_step(p, state, actions[t], mu);
    LatentDraw d;
    if (t < context_obs.size()) {
      Tensor e = encode(p, context_obs[t], mu);
      d = posterior(p, h, e, unused, /*sample=*/false);
    } else {
      d = prior(p, h, unused, /*sample=*/false);
    }
    state = {h, d.z, d.logits};
    preds.push_back(tensor::symexp(decode(p, h, d.z)));
  }
  return preds;
}

// ------------------------------------------------------------------- loss CSV

inline std::string loss_csv_header() { return "step,dec,rew,cont,kl_dyn,kl_rep,total\n"; }
inline std::string loss_csv_row(long long step, const LossTerms& l) {
  std::string out = std::to_string(step);
  for (double v : {l.dec, l.rew, l.cont, l.kl_dyn, l.kl_rep, l.total}) out += "," + fmt_double(v);
  return out + "\n";
}

}  // namespace qwm::wm
