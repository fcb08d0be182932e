#pragma once

// Training loop orchestration: collection with the current policy into
// replay, world-model + actor-critic updates, periodic evaluation,
// checkpointing, and the evaluation protocols used by the CLI.

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "qwm/agent.hpp"
#include "qwm/analysis.hpp"
#include "qwm/arn.hpp"
#include "qwm/config.hpp"
#include "qwm/env.hpp"
#include "qwm/morphfeat.hpp"
#include "qwm/optim.hpp"
#include "qwm/replay.hpp"
#include "qwm/wm.hpp"

namespace qwm::trainer {

using config::RunConfig;
using tensor::Tensor;

struct EvalResult {
  double mean_return_raw = 0;
  double mean_return_normalized = 0;  // raw / reward_scale
  double mean_episode_length = 0;
};

struct RewardLossShare {
  std::map<int, double> share;  // morphology id -> fraction of reward-loss mass
  int largest_scale_id = -1;
};

class Trainer {
 public:
  explicit Trainer(RunConfig cfg)
      : cfg_(std::move(cfg)),
        cohort_(env::load_cohort(cfg_.cohort_path)),
        normalizer_(cfg_.arn_alpha, static_cast<std::size_t>(cfg_.arn_buffer)),
        return_norm_(cfg_.arn_alpha, 4096),
        replay_(cfg_.replay_capacity_per_id),
        master_rng_(cfg_.seed) {
    for (int i = 0; i < static_cast<int>(cohort_.size()); ++i) {
      bool held = false;
      for (int h : cfg_.heldout_ids) held = held || h == i;
      if (!held) train_ids_.push_back(i);
    }
    if (train_ids_.empty()) throw Error("trainer: no training morphologies");

    // morphology features normalized over the training cohort only
    std::vector<morphfeat::MorphologyVector> train_mu;
    for (int id : train_ids_) train_mu.push_back(env::to_morphology_vector(cohort_[id]));
    stats_ = morphfeat::fit_cohort(train_mu);
    for (const auto& m : cohort_)
      mu_rows_.push_back(morphfeat::normalize(env::to_morphology_vector(m), stats_).mu);

    Rng init_rng = master_rng_.fork();
    wm_ = wm::build_world_model(cfg_.wm_config(), init_rng);
    actor_ = agent::build_actor(wm_.cfg.feat_dim(), env::kActDim, cfg_.width,
                                cfg_.agent_config(), init_rng);
    critic_ = agent::build_critic(wm_.cfg.feat_dim(), cfg_.width, cfg_.bins,
                                  cfg_.symlog_limit, init_rng);
    slow_critic_ = agent::clone_critic(critic_);
    wm_opt_ = std::make_unique<optim::Adam>(wm_.params(), cfg_.wm_lr, 0.9, 0.999, 1e-8,
                                            cfg_.grad_clip);
    actor_opt_ = std::make_unique<optim::Adam>(actor_.params(), cfg_.actor_lr, 0.9, 0.999,
                                               1e-8, cfg_.grad_clip);
    critic_opt_ = std::make_unique<optim::Adam>(critic_.params(), cfg_.critic_lr, 0.9, 0.999,
                                                1e-8, cfg_.grad_clip);
    env_rng_ = master_rng_.fork();
    sample_rng_ = master_rng_.fork();
    train_rng_ = master_rng_.fork();
    for (int id : train_ids_) normalizer_.register_id(id);
    return_norm_.register_id(0);
  }

  const RunConfig& cfg() const { return cfg_; }
  const std::vector<env::ToyMorphology>& cohort() const { return cohort_; }
  const std::vector<int>& train_ids() const { return train_ids_; }
  const wm::WorldModelParams& world_model() const { return wm_; }
  const agent::Actor& actor() const { return actor_; }
  const arn::RewardNormalizer& reward_normalizer() const { return normalizer_; }
  long long env_steps() const { return env_steps_; }
  long long updates() const { return updates_; }
  const std::vector<std::array<double, morphfeat::kFeatures>>& mu_rows() const {
    return mu_rows_;
  }
  const morphfeat::CohortStats& cohort_stats() const { return stats_; }

  Tensor mu_tensor(const std::vector<int>& ids) const {
    int B = static_cast<int>(ids.size());
    std::vector<double> data;
    data.reserve(static_cast<std::size_t>(B) * morphfeat::kFeatures);
    for (int id : ids)
      data.insert(data.end(), mu_rows_[id].begin(), mu_rows_[id].end());
    return Tensor::from_data({B, morphfeat::kFeatures}, std::move(data));
  }

  // full loop: collect with the current policy, train, periodically evaluate
  void train(const std::string& log_dir = "") {
    std::ofstream loss_log, metrics_log;
    if (!log_dir.empty()) {
      std::filesystem::create_directories(log_dir);
      loss_log.open(log_dir + "/wm_loss.csv", resume_step_ > 0 ? std::ios::app : std::ios::out);
      metrics_log.open(log_dir + "/agent_metrics.csv",
                       resume_step_ > 0 ? std::ios::app : std::ios::out);
      if (resume_step_ == 0) {
        loss_log << wm::loss_csv_header();
        metrics_log << agent::metrics_csv_header();
      }
    }

    env::BatchedEnv envs = make_training_env();
    int n_slots = envs.n_slots();
    envs.reset(env_rng_, std::vector<bool>(n_slots, true));
    episode_buffers_.assign(n_slots, replay::Episode{});
    for (int i = 0; i < n_slots; ++i) begin_episode(envs, i);
    wm::LatentState act_state = wm::initial_state(wm_.cfg, n_slots);
    Tensor a_prev = Tensor::zeros({n_slots, env::kActDim});
    std::vector<int> slot_ids(n_slots);
    for (int i = 0; i < n_slots; ++i) slot_ids[i] = train_ids_[envs.morph_of_slot(i)];
    Tensor mu = mu_tensor(slot_ids);

    long long vector_steps = 0;
    while (env_steps_ < cfg_.budget_env_steps) {
      // act from filtered posterior state (stochastic policy during collection)
      std::vector<double> obs_flat;
      obs_flat.reserve(static_cast<std::size_t>(n_slots) * env::kObsDim);
      for (int i = 0; i < n_slots; ++i) {
        const auto& o = envs.observe(i);
        obs_flat.insert(obs_flat.end(), o.begin(), o.end());
      }
      Tensor obs = Tensor::from_data({n_slots, env::kObsDim}, std::move(obs_flat));
      Tensor h = wm::recurrent_step(wm_, act_state, a_prev, mu);
      Tensor e = wm::encode(wm_, obs, mu);
      auto post = wm::posterior(wm_, h, e, sample_rng_);
      act_state = {h, post.z, post.logits};
      auto act_out = agent::act(actor_, act_state, sample_rng_, false);

      std::vector<std::vector<double>> actions(n_slots, std::vector<double>(env::kActDim));
      for (int i = 0; i < n_slots; ++i)
        for (int a = 0; a < env::kActDim; ++a)
          actions[i][a] = act_out.action.val()[static_cast<std::size_t>(i) * env::kActDim + a];
      auto res = envs.step(actions);
      env_steps_ += n_slots;
      ++vector_steps;

      // per-id ARN update, one observe call per id per step
      std::map<int, std::vector<double>> by_id;
      for (int i = 0; i < n_slots; ++i) by_id[slot_ids[i]].push_back(res.reward[i]);
      for (const auto& [id, rs] : by_id) normalizer_.observe(id, rs);

      std::vector<bool> reset_mask(n_slots, false);
      for (int i = 0; i < n_slots; ++i) {
        replay::Transition tr;
        tr.obs = res.obs[i];
        tr.act = actions[i];
        tr.reward_raw = res.reward[i];
        tr.cont = res.terminated[i] ? 0.0 : 1.0;
        episode_buffers_[i].steps.push_back(std::move(tr));
        if (res.terminated[i] || res.truncated[i]) {
          replay_.add_episode(std::move(episode_buffers_[i]));
          episode_buffers_[i] = {};
          reset_mask[i] = true;
        }
      }
      bool any_reset = false;
      for (bool b : reset_mask) any_reset = any_reset || b;
      if (any_reset) {
        envs.reset(env_rng_, reset_mask);
        for (int i = 0; i < n_slots; ++i)
          if (reset_mask[i]) {
            begin_episode(envs, i);
            zero_latent_row(act_state, i);
            for (int a = 0; a < env::kActDim; ++a)
              a_prev.val()[static_cast<std::size_t>(i) * env::kActDim + a] = 0;
          }
      }
      for (int i = 0; i < n_slots; ++i)
        if (!reset_mask[i])
          for (int a = 0; a < env::kActDim; ++a)
            a_prev.val()[static_cast<std::size_t>(i) * env::kActDim + a] = actions[i][a];

      if (env_steps_ >= cfg_.prefill_steps && vector_steps % cfg_.train_every == 0 &&
          replay_ready()) {
        auto loss = train_once();
        if (loss_log.is_open()) loss_log << wm::loss_csv_row(resume_step_ + updates_, loss);
        if (metrics_log.is_open())
          metrics_log << agent::metrics_csv_row(resume_step_ + updates_, last_agent_metrics_);
      }
    }
  }

  // one gradient update on a fresh equal-id batch, plus the imagination phase
  wm::LossTerms train_once() {
    auto batch = sample_batch();
    auto seq = to_sequence_batch(batch);
    wm::LossTerms loss;
    std::vector<wm::LatentState> states;
    {
      tensor::Tape tape;
      tensor::Tape::Scope scope(tape);
      auto res = wm::observe_sequence(wm_, seq, train_rng_);
      tape.backward(res.loss.total_loss);
      loss = res.loss;
      states = std::move(res.states);
    }
    wm_opt_->step();

    // imagination phase from detached posterior states
    auto starts = subsample_starts(states, batch);
    last_agent_metrics_ = agent::train_step(actor_, critic_, slow_critic_, *actor_opt_,
                                            *critic_opt_, wm_, starts.state, starts.mu,
                                            starts.ids, cfg_.agent_config(), return_norm_,
                                            train_rng_);
    ++updates_;
    return loss;
  }

  // deterministic evaluation on one morphology (training or held-out; held-out
  // robots differ only in the injected mu)
  EvalResult evaluate(int morph_id, int episodes, std::uint64_t env_seed) const {
    env::BatchedEnv e({cohort_[morph_id]}, 1, cfg_.env_params(), env_seed);
    Rng reset_rng(env_seed + 1);
    Rng dummy(0);
    Tensor mu = mu_tensor({morph_id});
    EvalResult out;
    for (int ep = 0; ep < episodes; ++ep) {
      e.reset(reset_rng, {true});
      wm::LatentState state = wm::initial_state(wm_.cfg, 1);
      Tensor a_prev = Tensor::zeros({1, env::kActDim});
      double ret = 0;
      int len = 0;
      for (;;) {
        Tensor obs = Tensor::from_data({1, env::kObsDim}, e.observe(0));
        Tensor h = wm::recurrent_step(wm_, state, a_prev, mu);
        Tensor emb = wm::encode(wm_, obs, mu);
        auto post = wm::posterior(wm_, h, emb, dummy, /*sample=*/false);
        state = {h, post.z, post.logits};
        auto act_out = agent::act(actor_, state, dummy, /*deterministic=*/true);
        auto res = e.step({act_out.action.val()});
        a_prev = act_out.action;
        ret += res.reward[0];
        ++len;
        if (res.terminated[0] || res.truncated[0]) break;
      }
      out.mean_return_raw += ret;
      out.mean_return_normalized += ret / cohort_[morph_id].reward_scale;
      out.mean_episode_length += len;
    }
    out.mean_return_raw /= episodes;
    out.mean_return_normalized /= episodes;
    out.mean_episode_length /= episodes;
    return out;
  }

  // per-morphology share of the reward-head loss mass: squared error of the
  // expected reward prediction against this configuration's own reward
  // targets (raw rewards when ARN is off, normalized when on), measured on an
  // equal-id probe batch
  RewardLossShare reward_loss_share(int windows_per_id = 8) {
    RewardLossShare out;
    std::map<int, double> mass;
    for (int id : train_ids_) {
      double acc = 0;
      for (int w = 0; w < windows_per_id; ++w) {
        auto batch = sample_batch_for_id(id, 1);
        auto seq = to_sequence_batch(batch);
        auto res = wm::observe_sequence(wm_, seq, train_rng_);
        for (double v : res.loss.reward_sqerr_per_row) acc += v;
      }
      mass[id] = acc;
    }
    double total = 0;
    for (const auto& [id, m] : mass) total += m;
    double best_scale = -1;
    for (int id : train_ids_) {
      out.share[id] = total > 0 ? mass[id] / total : 0.0;
      if (cohort_[id].reward_scale > best_scale) {
        best_scale = cohort_[id].reward_scale;
        out.largest_scale_id = id;
      }
    }
    return out;
  }

  // ---- checkpointing (binary params + JSON sidecar)

  void save_checkpoint(const std::string& path) const {
    std::vector<std::pair<std::string, Tensor>> blocks = wm_.named_params();
    actor_.collect("actor", blocks);
    critic_.collect("critic", blocks);
    slow_critic_.collect("slow_critic", blocks);
    tensor::save_params(path, blocks);
    nlohmann::json side;
    side["env_steps"] = env_steps_;
    side["updates"] = resume_step_ + updates_;
    side["arn"] = nlohmann::json::parse(normalizer_.dump_json());
    side["config"] = config::to_json(cfg_);
    write_file(path + ".json", side.dump(1));
  }

  void load_checkpoint(const std::string& path) {
    auto blocks = tensor::load_params(path);
    std::vector<std::pair<std::string, Tensor>> expected = wm_.named_params();
    actor_.collect("actor", expected);
    critic_.collect("critic", expected);
    slow_critic_.collect("slow_critic", expected);
    if (blocks.size() != expected.size())
      throw Error("checkpoint block count mismatch: " + path);
    for (std::size_t i = 0; i < blocks.size(); ++i) {
      if (blocks[i].first != expected[i].first || blocks[i].second.shape() != expected[i].second.shape())
        throw Error("checkpoint block mismatch at '" + blocks[i].first + "'");
      expected[i].second.val() = blocks[i].second.val();
    }
    std::string side_path = path + ".json";
    if (std::filesystem::exists(side_path)) {
      auto side = nlohmann::json::parse(read_file(side_path));
      env_steps_ = side.value("env_steps", 0LL);
      resume_step_ = side.value("updates", 0LL);
      if (side.contains("arn")) normalizer_.restore_json(side["arn"].dump());
    }
  }

  env::BatchedEnv make_training_env() {
    std::vector<env::ToyMorphology> train_morphs;
    for (int id : train_ids_) train_morphs.push_back(cohort_[id]);
    return env::BatchedEnv(train_morphs, cfg_.n_slots_per_morph, cfg_.env_params(),
                           env_rng_.next_u64());
  }

  replay::ReplayBuffer& replay() { return replay_; }

 private:
  void begin_episode(const env::BatchedEnv& envs, int slot) {
    episode_buffers_[slot].morph_id = train_ids_[envs.morph_of_slot(slot)];
    replay::Transition first;
    first.obs = envs.observe(slot);
    first.act.assign(env::kActDim, 0.0);
    first.reward_raw = 0;
    first.cont = 1;
    first.is_first = true;
    episode_buffers_[slot].steps.push_back(std::move(first));
  }

  static void zero_latent_row(wm::LatentState& s, int row) {
    int dh = s.h.shape()[1], dz = s.z.shape()[1];
    for (int i = 0; i < dh; ++i) s.h.val()[static_cast<std::size_t>(row) * dh + i] = 0;
    for (int i = 0; i < dz; ++i) s.z.val()[static_cast<std::size_t>(row) * dz + i] = 0;
  }

  bool replay_ready() const {
    for (int id : train_ids_)
      if (replay_.transitions(id) < cfg_.seq_len + 1) return false;
    return true;
  }

  replay::EpisodeBatch sample_batch() {
    replay::EpisodeBatch b;
    b.steps = cfg_.seq_len;
    for (int id : train_ids_)
      for (int k = 0; k < cfg_.batch_per_id; ++k) {
        b.rows.push_back(replay_.sample_window(id, cfg_.seq_len, sample_rng_));
        b.morph_ids.push_back(id);
        b.mu.push_back(mu_rows_[id]);
      }
    b.batch = static_cast<int>(b.rows.size());
    fill_r_norm(b);
    return b;
  }

  replay::EpisodeBatch sample_batch_for_id(int id, int windows) {
    replay::EpisodeBatch b;
    b.steps = cfg_.seq_len;
    for (int k = 0; k < windows; ++k) {
      b.rows.push_back(replay_.sample_window(id, cfg_.seq_len, sample_rng_));
      b.morph_ids.push_back(id);
      b.mu.push_back(mu_rows_[id]);
    }
    b.batch = windows;
    fill_r_norm(b);
    return b;
  }

  // reward targets: ARN-normalized when the flag is on, raw otherwise
  void fill_r_norm(replay::EpisodeBatch& b) const {
    b.r_norm.assign(b.batch, std::vector<double>(b.steps));
    for (int r = 0; r < b.batch; ++r) {
      double div = 1.0;
      if (cfg_.arn) div = std::max(1.0, normalizer_.sigma(b.morph_ids[r]));
      for (int t = 0; t < b.steps; ++t) b.r_norm[r][t] = b.rows[r][t].reward_raw / div;
    }
  }

  wm::SequenceBatch to_sequence_batch(const replay::EpisodeBatch& b) const {
    wm::SequenceBatch s;
    s.batch = b.batch;
    s.steps = b.steps;
    s.morph_ids = b.morph_ids;
    std::vector<double> mu_flat;
    for (const auto& row : b.mu) mu_flat.insert(mu_flat.end(), row.begin(), row.end());
    s.mu = Tensor::from_data({b.batch, morphfeat::kFeatures}, std::move(mu_flat));
    for (int t = 0; t < b.steps; ++t) {
      std::vector<double> obs_t, act_t;
      std::vector<double> r_t(b.batch), c_t(b.batch);
      for (int r = 0; r < b.batch; ++r) {
        const auto& tr = b.rows[r][t];
        obs_t.insert(obs_t.end(), tr.obs.begin(), tr.obs.end());
        act_t.insert(act_t.end(), tr.act.begin(), tr.act.end());
        r_t[r] = b.r_norm[r][t];
        c_t[r] = tr.cont;
      }
      s.obs.push_back(Tensor::from_data({b.batch, env::kObsDim}, std::move(obs_t)));
      s.act.push_back(Tensor::from_data({b.batch, env::kActDim}, std::move(act_t)));
      s.reward.push_back(std::move(r_t));
      s.cont.push_back(std::move(c_t));
    }
    return s;
  }

  struct Starts {
    wm::LatentState state;
    Tensor mu;
    std::vector<int> ids;
  };

  // detach a subsample of the posterior states as imagination start points
  Starts subsample_starts(const std::vector<wm::LatentState>& states,
                          const replay::EpisodeBatch& batch) {
    int B = batch.batch, T = static_cast<int>(states.size());
    int total = B * T;
    int n = cfg_.imag_starts > 0 ? std::min(cfg_.imag_starts, total) : total;
    int dh = wm_.cfg.deter_dim, dz = wm_.cfg.z_dim();
    std::vector<double> h(static_cast<std::size_t>(n) * dh), z(static_cast<std::size_t>(n) * dz);
    std::vector<double> mu_flat;
    std::vector<int> ids(n);
    for (int i = 0; i < n; ++i) {
      int pick = static_cast<int>(train_rng_.uniform_int(total));
      int t = pick / B, row = pick % B;
      const auto& st = states[t];
      std::copy_n(st.h.val().begin() + static_cast<std::size_t>(row) * dh, dh,
                  h.begin() + static_cast<std::size_t>(i) * dh);
      std::copy_n(st.z.val().begin() + static_cast<std::size_t>(row) * dz, dz,
                  z.begin() + static_cast<std::size_t>(i) * dz);
      mu_flat.insert(mu_flat.end(), batch.mu[row].begin(), batch.mu[row].end());
      ids[i] = batch.morph_ids[row];
    }
    Starts out{wm::LatentState{Tensor::from_data({n, dh}, std::move(h)),
                               Tensor::from_data({n, dz}, std::move(z)),
                               Tensor::zeros({n, wm_.cfg.groups, wm_.cfg.classes})},
               Tensor::from_data({n, morphfeat::kFeatures}, std::move(mu_flat)), std::move(ids)};
    return out;
  }

  friend struct ProtocolAccess;

  RunConfig cfg_;
  std::vector<env::ToyMorphology> cohort_;
  std::vector<int> train_ids_;
  morphfeat::CohortStats stats_;
  std::vector<std::array<double, morphfeat::kFeatures>> mu_rows_;
  wm::WorldModelParams wm_;
  agent::Actor actor_;
  agent::Critic critic_, slow_critic_;
  std::unique_ptr<optim::Adam> wm_opt_, actor_opt_, critic_opt_;
  arn::RewardNormalizer normalizer_;   // per-morphology reward scaling
  arn::RewardNormalizer return_norm_;  // imagined-return scaling for the actor
  replay::ReplayBuffer replay_;
  std::vector<replay::Episode> episode_buffers_;
  Rng master_rng_, env_rng_, sample_rng_, train_rng_;
  long long env_steps_ = 0;
  long long updates_ = 0;
  long long resume_step_ = 0;
  agent::TrainStepMetrics last_agent_metrics_;
};

// ----------------------------------------------------- evaluation protocols

struct NmseResult {
  std::vector<double> curve;       // NMSE per horizon step (1..horizon)
  int trajectories_used = 0;
};

// open-loop protocol: deterministic-policy trajectories of context+horizon
// steps, posterior inference over the context, prior-only prediction after,
// error normalized by the per-dimension variance of the true motion
inline NmseResult run_nmse_protocol(const Trainer& tr, int morph_id, int n_traj, int context,
                                    int horizon, std::uint64_t seed) {
  const auto& cohort = tr.cohort();
  int T = context + horizon;
  env::BatchedEnv e({cohort[morph_id]}, 1, tr.cfg().env_params(), seed);
  Rng reset_rng(seed ^ 0x9E3779B97F4A7C15ull);
  Rng dummy(0);
  Tensor mu = tr.mu_tensor({morph_id});

  std::vector<std::vector<std::vector<double>>> obs_traj;   // n x T x obs
  std::vector<std::vector<std::vector<double>>> act_traj;   // n x T x act
  int attempts = 0;
  while (static_cast<int>(obs_traj.size()) < n_traj && attempts < 6 * n_traj) {
    ++attempts;
    e.reset(reset_rng, {true});
    wm::LatentState state = wm::initial_state(tr.world_model().cfg, 1);
    Tensor a_prev = Tensor::zeros({1, env::kActDim});
    std::vector<std::vector<double>> obs_seq, act_seq;
    bool dead = false;
    for (int t = 0; t < T && !dead; ++t) {
      obs_seq.push_back(e.observe(0));
      act_seq.push_back(a_prev.val());
      Tensor obs = Tensor::from_data({1, env::kObsDim}, e.observe(0));
      Tensor h = wm::recurrent_step(tr.world_model(), state, a_prev, mu);
      Tensor emb = wm::encode(tr.world_model(), obs, mu);
      auto post = wm::posterior(tr.world_model(), h, emb, dummy, /*sample=*/false);
      state = {h, post.z, post.logits};
      auto act_out = agent::act(tr.actor(), state, dummy, /*deterministic=*/true);
      auto res = e.step({act_out.action.val()});
      a_prev = act_out.action;
      dead = res.terminated[0];
    }
    if (static_cast<int>(obs_seq.size()) == T) {
      obs_traj.push_back(std::move(obs_seq));
      act_traj.push_back(std::move(act_seq));
    }
  }
  if (obs_traj.size() < 4)
    throw Error("nmse protocol: policy cannot sustain " + std::to_string(T) +
                " steps on morphology " + std::to_string(morph_id));
  int N = static_cast<int>(obs_traj.size());

  // batched open-loop rollout over all trajectories at once
  std::vector<Tensor> context_obs, actions;
  for (int t = 0; t < T; ++t) {
    std::vector<double> a_flat;
    for (int n = 0; n < N; ++n)
      a_flat.insert(a_flat.end(), act_traj[n][t].begin(), act_traj[n][t].end());
    actions.push_back(Tensor::from_data({N, env::kActDim}, std::move(a_flat)));
    if (t < context) {
      std::vector<double> o_flat;
      for (int n = 0; n < N; ++n)
        o_flat.insert(o_flat.end(), obs_traj[n][t].begin(), obs_traj[n][t].end());
      context_obs.push_back(Tensor::from_data({N, env::kObsDim}, std::move(o_flat)));
    }
  }
  auto preds = wm::open_loop_rollout(tr.world_model(), context_obs, actions, tr.mu_tensor(
      std::vector<int>(N, morph_id)));

  // per-dim variance of the true motion, pooled over trajectories and steps
  std::vector<double> mean(env::kObsDim, 0.0), var(env::kObsDim, 0.0);
  for (const auto& traj : obs_traj)
    for (const auto& o : traj)
      for (int d = 0; d < env::kObsDim; ++d) mean[d] += o[d];
  double count = static_cast<double>(N) * T;
  for (auto& m : mean) m /= count;
  for (const auto& traj : obs_traj)
    for (const auto& o : traj)
      for (int d = 0; d < env::kObsDim; ++d) {
        double t = o[d] - mean[d];
        var[d] += t * t;
      }
  for (auto& v : var) v /= count;

  std::vector<std::vector<std::vector<double>>> true_h(N), pred_h(N);
  for (int n = 0; n < N; ++n)
    for (int t = context; t < T; ++t) {
      true_h[n].push_back(obs_traj[n][t]);
      std::vector<double> p(env::kObsDim);
      for (int d = 0; d < env::kObsDim; ++d)
        p[d] = preds[t].val()[static_cast<std::size_t>(n) * env::kObsDim + d];
      pred_h[n].push_back(std::move(p));
    }
  NmseResult out;
  out.curve = analysis::nmse_curve(true_h, pred_h, var);
  out.trajectories_used = N;
  return out;
}

// Appendix-F-style probe on the training cohort with the trained policy
inline analysis::ProbeReport run_probe(const Trainer& tr, int traj_per_morph, int steps,
                                       std::uint64_t seed) {
  std::vector<env::ToyMorphology> train_morphs;
  std::vector<std::array<double, morphfeat::kFeatures>> mu_rows;
  for (int id : tr.train_ids()) {
    train_morphs.push_back(tr.cohort()[id]);
    mu_rows.push_back(tr.mu_rows()[id]);
  }
  analysis::ProbeProtocol proto;
  proto.trajectories_per_morph = traj_per_morph;
  proto.steps_per_trajectory = steps;
  proto.seed = seed;
  return analysis::probe_h_vs_z(tr.world_model(), tr.actor(), train_morphs, mu_rows,
                                tr.cfg().env_params(), proto);
}

}  // namespace qwm::trainer
