#pragma once

// Actor-critic trained purely in imagination on world-model latents.

#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "qwm/arn.hpp"
#include "qwm/common.hpp"
#include "qwm/nets.hpp"
#include "qwm/optim.hpp"
#include "qwm/tensor.hpp"
#include "qwm/wm.hpp"

namespace qwm::agent {

using nets::DenseStack;
using nets::TwoHotHead;
using tensor::Tensor;
using wm::LatentState;

struct LengthMismatch : Error {
  using Error::Error;
};
struct NaNLoss : Error {
  using Error::Error;
};

struct AgentConfig {
  double gamma = 0.99;
  double lam = 0.95;
  int horizon = 15;
  double entropy_coef = 3e-4;
  double slow_critic_ema = 0.02;
  double actor_lr = 3e-4;
  double critic_lr = 3e-4;
  double min_std = 0.1, max_std = 2.0, std_offset = 0.1;
  int imag_starts = 64;  // start states subsampled per update (0 = all)
};

struct Actor {
  DenseStack trunk;  // 3 hidden layers over feat = concat(h, z)
  Tensor mean_W, mean_b;
  Tensor std_W, std_b;
  int act_dim = 0;
  double min_std = 0.1, max_std = 2.0, std_offset = 0.1;

  std::vector<Tensor> params() const {
    auto out = trunk.params();
    out.insert(out.end(), {mean_W, mean_b, std_W, std_b});
    return out;
  }
  void collect(const std::string& prefix, std::vector<std::pair<std::string, Tensor>>& out) const {
    trunk.collect(prefix + "/trunk", out);
    out.emplace_back(prefix + "/mean_W", mean_W);
    out.emplace_back(prefix + "/mean_b", mean_b);
    out.emplace_back(prefix + "/std_W", std_W);
    out.emplace_back(prefix + "/std_b", std_b);
  }
};

struct Critic {
  DenseStack trunk;  // 3 hidden layers
  Tensor out_W, out_b;
  TwoHotHead bins;

  std::vector<Tensor> params() const {
    auto out = trunk.params();
    out.insert(out.end(), {out_W, out_b});
    return out;
  }
  void collect(const std::string& prefix, std::vector<std::pair<std::string, Tensor>>& out) const {
    trunk.collect(prefix + "/trunk", out);
    out.emplace_back(prefix + "/out_W", out_W);
    out.emplace_back(prefix + "/out_b", out_b);
  }
};

inline Actor build_actor(int feat_dim, int act_dim, int width, const AgentConfig& cfg, Rng& rng) {
  Actor a;
  a.trunk = wm::build_tower(feat_dim, {width, width, width}, rng);
  a.mean_W = nets::init_weight(act_dim, width, rng);
  a.mean_b = nets::init_zeros({act_dim});
  a.std_W = nets::init_weight(act_dim, width, rng);
  a.std_b = nets::init_zeros({act_dim});
  a.act_dim = act_dim;
  a.min_std = cfg.min_std;
  a.max_std = cfg.max_std;
  a.std_offset = cfg.std_offset;
  return a;
}

inline Critic build_critic(int feat_dim, int width, int bins, double symlog_limit, Rng& rng) {
  Critic c;
  c.trunk = wm::build_tower(feat_dim, {width, width, width}, rng);
  c.out_W = nets::init_weight(bins, width, rng);
  c.out_b = nets::init_zeros({bins});
  c.bins = TwoHotHead::make(bins, symlog_limit);
  return c;
}

inline Critic clone_critic(const Critic& c) {
  Critic out;
  out.bins = c.bins;
  out.trunk.in_dim = c.trunk.in_dim;
  out.trunk.out_dim = c.trunk.out_dim;
  for (const auto& l : c.trunk.layers) {
    nets::DenseLayer nl;
    nl.W = Tensor::from_data(l.W.shape(), l.W.val());
    nl.b = Tensor::from_data(l.b.shape(), l.b.val());
    if (l.normed) {
      nl.gain = Tensor::from_data(l.gain.shape(), l.gain.val());
      nl.bias = Tensor::from_data(l.bias.shape(), l.bias.val());
    }
    nl.normed = l.normed;
    out.trunk.layers.push_back(std::move(nl));
  }
  out.out_W = Tensor::from_data(c.out_W.shape(), c.out_W.val());
  out.out_b = Tensor::from_data(c.out_b.shape(), c.out_b.val());
  return out;
}

inline void ema_update(const Critic& slow, const Critic& fast, double rate) {
  auto sp = slow.params();
  auto fp = fast.params();
  for (std::size_t i = 0; i < sp.size(); ++i) {
    auto& sv = sp[i].val();
    const auto& fv = fp[i].val();
    for (std::size_t j = 0; j < sv.size(); ++j) sv[j] = (1.0 - rate) * sv[j] + rate * fv[j];
  }
}

struct ActorOutput {
  Tensor action;  // (B, act) in [-1, 1]
  Tensor mean, std;
  Tensor entropy;  // (B, 1), base Gaussian entropy pre-squash
};

inline Tensor feat_of(const LatentState& s) { return tensor::concat({s.h, s.z}); }

// Gaussian head with softplus + offset std, clamped to [min_std, max_std];
// tanh squashing bounds actions to the env range. Reparameterized sample.
inline ActorOutput act(const Actor& actor, const LatentState& state, Rng& rng,
                       bool deterministic) {
  using namespace tensor;
  Tensor x = actor.trunk.forward(feat_of(state));
  Tensor mean = affine(x, actor.mean_W, actor.mean_b);
  Tensor std_raw = affine(x, actor.std_W, actor.std_b);
  Tensor std = min_scalar(
      max_scalar(add_scalar(softplus(std_raw), actor.std_offset), actor.min_std),
      actor.max_std);
  Tensor pre = mean;
  if (!deterministic) {
    std::vector<double> eps(mean.size());
    for (auto& e : eps) e = rng.normal();
    pre = add(mean, mul(std, Tensor::from_data(mean.shape(), std::move(eps))));
  }
  // entropy of the base Gaussian: sum over dims of 0.5*ln(2*pi*e) + ln std
  Tensor ent = mul_scalar(
      add_scalar(sum_last(log(std)), 1.4189385332046727 * actor.act_dim), 1.0);
  return {tanh(pre), mean, std, ent};
}

// R_t = r_t + gamma*c_t*((1-lam)*v_{t+1} + lam*R_{t+1}), bootstrapped from the
// final value; rewards/continuations have length H, values H+1
inline std::vector<Tensor> lambda_returns(const std::vector<Tensor>& rewards,
                                          const std::vector<Tensor>& continuations,
                                          const std::vector<Tensor>& values, double gamma,
                                          double lam) {
  using namespace tensor;
  std::size_t H = rewards.size();
  if (continuations.size() != H || values.size() != H + 1)
    throw LengthMismatch("lambda_returns: need H rewards, H continuations, H+1 values");
  std::vector<Tensor> targets(H);
  Tensor next = values[H];
  for (std::size_t t = H; t-- > 0;) {
    Tensor mix = add(mul_scalar(values[t + 1], 1.0 - lam), mul_scalar(next, lam));
    targets[t] = add(rewards[t], mul(mul_scalar(continuations[t], gamma), mix));
    next = targets[t];
  }
  return targets;
}

inline Tensor critic_logits(const Critic& c, const Tensor& feat) {
  return tensor::affine(c.trunk.forward(feat), c.out_W, c.out_b);
}
inline Tensor critic_value(const Critic& c, const Tensor& feat) {
  return nets::twohot_decode(tensor::softmax(critic_logits(c, feat)), c.bins);
}

struct TrainStepMetrics {
  double actor_loss = 0, critic_loss = 0, entropy = 0;
  double grad_norm_actor = 0, grad_norm_critic = 0;
  std::map<int, double> mean_return_per_id;  // imagined, normalized reward scale
};

// One imagination-phase update. World-model parameters are frozen for the
// whole computation; start states arrive as detached posterior latents.
inline TrainStepMetrics train_step(Actor& actor, Critic& critic, Critic& slow_critic,
                                   optim::Adam& actor_opt, optim::Adam& critic_opt,
                                   const wm::WorldModelParams& wm_params,
                                   const LatentState& starts, const Tensor& mu,
                                   const std::vector<int>& morph_ids, const AgentConfig& cfg,
                                   arn::RewardNormalizer& return_norm, Rng& rng) {
  using namespace tensor;
  TrainStepMetrics metrics;
  FreezeGuard freeze_wm(wm_params.params());
  FreezeGuard freeze_slow(slow_critic.params());

  int H = cfg.horizon;
  std::vector<std::vector<double>> target_vals;  // H x B, saved for the critic pass
  std::vector<std::vector<double>> feat_vals;    // H x (B*feat) imagined features
  int B = starts.batch();
  int feat_dim = starts.h.shape()[1] + starts.z.shape()[1];

  {  // actor pass
    Tape tape;
    Tape::Scope scope(tape);
    std::vector<Tensor> entropies;
    wm::Policy policy = [&](const LatentState& s, Rng& r) {
      auto out = act(actor, s, r, false);
      entropies.push_back(out.entropy);
      return out.action;
    };
    auto traj = wm::imagine(wm_params, starts, mu, policy, H, rng);

    if (H == 0) {
      metrics.entropy = 0;
      return metrics;
    }
    std::vector<Tensor> values;
    for (const auto& s : traj.states) values.push_back(critic_value(slow_critic, feat_of(s)));
    auto targets = lambda_returns(traj.rewards, traj.cont_probs, values, cfg.gamma, cfg.lam);

    // normalize returns by the same percentile-range device as ARN
    std::vector<double> flat;
    for (const auto& t : targets)
      for (double v : t.val()) flat.push_back(v);
    return_norm.observe(0, flat);
    double scale = std::max(1.0, return_norm.sigma(0));

    Tensor ret_acc = Tensor::scalar(0.0);
    for (const auto& t : targets) ret_acc = add(ret_acc, mean_all(t));
    Tensor ent_acc = Tensor::scalar(0.0);
    for (const auto& e : entropies) ent_acc = add(ent_acc, mean_all(e));
    Tensor mean_ret = mul_scalar(ret_acc, 1.0 / H);
    Tensor mean_ent = mul_scalar(ent_acc, 1.0 / H);
    Tensor actor_loss = sub(mul_scalar(mean_ret, -1.0 / scale),
                            mul_scalar(mean_ent, cfg.entropy_coef));
    if (!std::isfinite(actor_loss.item())) throw NaNLoss("actor loss diverged");
    tape.backward(actor_loss);
    metrics.actor_loss = actor_loss.item();
    metrics.entropy = mean_ent.item();
    metrics.grad_norm_actor = actor_opt.step();

    // per-morphology mean imagined return (first-step targets)
    std::map<int, std::pair<double, int>> acc;
    for (int b = 0; b < B; ++b) {
      acc[morph_ids[b]].first += targets[0].val()[b];
      acc[morph_ids[b]].second += 1;
    }
    for (auto& [id, pr] : acc) metrics.mean_return_per_id[id] = pr.first / pr.second;

    target_vals.reserve(H);
    for (const auto& t : targets) target_vals.push_back(t.val());
    feat_vals.reserve(H);
    for (int t = 0; t < H; ++t) {
      Tensor f = feat_of(traj.states[t]);
      feat_vals.push_back(f.val());
    }
  }

  {  // critic pass on detached imagined features
    Tape tape;
    Tape::Scope scope(tape);
    Tensor loss_acc = Tensor::scalar(0.0);
    int bins = critic.bins.bins();
    for (int t = 0; t < H; ++t) {
      Tensor feat = Tensor::from_data({B, feat_dim}, feat_vals[t]);
      std::vector<double> tw(static_cast<std::size_t>(B) * bins);
      for (int b = 0; b < B; ++b) {
        auto w = nets::twohot_encode(target_vals[t][b], critic.bins);
        std::copy(w.begin(), w.end(), tw.begin() + static_cast<std::size_t>(b) * bins);
      }
      Tensor nll = nets::twohot_nll(critic_logits(critic, feat),
                                    Tensor::from_data({B, bins}, std::move(tw)));
      loss_acc = add(loss_acc, mean_all(nll));
    }
    Tensor critic_loss = mul_scalar(loss_acc, 1.0 / H);
    if (!std::isfinite(critic_loss.item())) throw NaNLoss("critic loss diverged");
    tape.backward(critic_loss);
    metrics.critic_loss = critic_loss.item();
    metrics.grad_norm_critic = critic_opt.step();
  }

  ema_update(slow_critic, critic, cfg.slow_critic_ema);
  return metrics;
}

inline std::string metrics_csv_header() {
  return "step,actor_loss,critic_loss,entropy,mean_imagined_return_per_id\n";
}
inline std::string metrics_csv_row(long long step, const TrainStepMetrics& m) {
  std::string out = std::to_string(step) + "," + fmt_double(m.actor_loss) + "," +
                    fmt_double(m.critic_loss) + "," + fmt_double(m.entropy) + ",";
  bool first = true;
  for (const auto& [id, r] : m.mean_return_per_id) {
    out += (first ? "" : ";") + std::to_string(id) + ":" + fmt_double(r);
    first = false;
  }
  return out + "\n";
}

}  // namespace qwm::agent
