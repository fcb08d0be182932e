#pragma once

// Run configuration: one JSON document, fully materialized defaults.

#include <string>
#include <vector>

#include "json.hpp"
#include "qwm/agent.hpp"
#include "qwm/common.hpp"
#include "qwm/env.hpp"
#include "qwm/wm.hpp"

namespace qwm::config {

struct RunConfig {
  std::uint64_t seed = 0;
  std::string cohort_path = "data/toy_cohort.json";
  std::vector<int> heldout_ids;  // cohort indices excluded from training/stats
  std::string out_dir = "out";

  // ablation flags; all 8 reference configurations are expressible
  bool pme = true;
  bool arn = true;
  bool rssm_conditioning = true;
  bool encoder_conditioning = true;

  // world model (desk-scale defaults)
  int deter_dim = 128;
  int groups = 16;
  int classes = 16;
  int width = 256;
  int enc_dyn_depth = 2;
  int enc_stat_depth = 2;
  int dec_depth = 2;
  int reward_depth = 4;
  int cont_depth = 2;
  int bins = 63;
  double symlog_limit = 20.0;
  double beta_dyn = 0.5;
  double beta_rep = 0.1;
  double free_bits = 1.0;
  double w_dec = 1.0, w_rew = 1.0, w_cont = 1.0;
  double unimix = 0.01;
  double wm_lr = 3e-4;
  double grad_clip = 100.0;

  // agent
  double gamma = 0.99;
  double lam = 0.95;
  int imag_horizon = 15;
  double entropy_coef = 3e-4;
  double slow_critic_ema = 0.02;
  double actor_lr = 3e-4;
  double critic_lr = 3e-4;
  int imag_starts = 64;

  // environment
  double env_dt = 0.02;
  double env_theta_fall = 0.7;
  int env_horizon = 200;
  double env_sigma_v = 0.6;
  double env_noise_scale = 1.0;
  double env_theta_damp = 2.0;
  double env_reaction_coef = 0.3;
  double arn_alpha = 0.99;
  int arn_buffer = 4096;

  // training loop
  long long budget_env_steps = 200000;  // total transitions collected
  int n_slots_per_morph = 2;
  int seq_len = 32;
  int batch_per_id = 2;   // sequences per morphology per batch (equal-id batching)
  int train_every = 8;    // vector env steps between gradient updates
  long long prefill_steps = 2000;
  int eval_every_updates = 200;
  int eval_episodes = 4;
  long long replay_capacity_per_id = 20000;

  bool effective_encoder_conditioning() const { return pme && encoder_conditioning; }
  bool effective_rssm_conditioning() const { return pme && rssm_conditioning; }

  wm::WorldModelConfig wm_config() const {
    wm::WorldModelConfig c;
    c.obs_dim = env::kObsDim;
    c.act_dim = env::kActDim;
    c.mu_dim = morphfeat::kFeatures;
    c.deter_dim = deter_dim;
    c.groups = groups;
    c.classes = classes;
    c.width = width;
    c.enc_dyn_depth = enc_dyn_depth;
    c.enc_stat_depth = enc_stat_depth;
    c.dec_depth = dec_depth;
    c.reward_depth = reward_depth;
    c.cont_depth = cont_depth;
    c.bins = bins;
    c.symlog_limit = symlog_limit;
    c.beta_dyn = beta_dyn;
    c.beta_rep = beta_rep;
    c.free_bits = free_bits;
    c.w_dec = w_dec;
    c.w_rew = w_rew;
    c.w_cont = w_cont;
    c.unimix = unimix;
    c.encoder_conditioning = effective_encoder_conditioning();
    c.rssm_conditioning = effective_rssm_conditioning();
    return c;
  }

  agent::AgentConfig agent_config() const {
    agent::AgentConfig c;
    c.gamma = gamma;
    c.lam = lam;
    c.horizon = imag_horizon;
    c.entropy_coef = entropy_coef;
    c.slow_critic_ema = slow_critic_ema;
    c.actor_lr = actor_lr;
    c.critic_lr = critic_lr;
    c.imag_starts = imag_starts;
    return c;
  }

  env::EnvParams env_params() const {
    env::EnvParams p;
    p.dt = env_dt;
    p.theta_fall = env_theta_fall;
    p.horizon = env_horizon;
    p.sigma_v = env_sigma_v;
    p.noise_scale = env_noise_scale;
    p.theta_damp = env_theta_damp;
    p.reaction_coef = env_reaction_coef;
    return p;
  }
};

namespace detail {
template <class T>
void get_if(const nlohmann::json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}
}  // namespace detail

inline nlohmann::json to_json(const RunConfig& c) {
  nlohmann::json j;
  j["seed"] = c.seed;
  j["cohort_path"] = c.cohort_path;
  j["heldout_ids"] = c.heldout_ids;
  j["out_dir"] = c.out_dir;
  j["pme"] = c.pme;
  j["arn"] = c.arn;
  j["rssm_conditioning"] = c.rssm_conditioning;
  j["encoder_conditioning"] = c.encoder_conditioning;
  j["deter_dim"] = c.deter_dim;
  j["groups"] = c.groups;
  j["classes"] = c.classes;
  j["width"] = c.width;
  j["enc_dyn_depth"] = c.enc_dyn_depth;
  j["enc_stat_depth"] = c.enc_stat_depth;
  j["dec_depth"] = c.dec_depth;
  j["reward_depth"] = c.reward_depth;
  j["cont_depth"] = c.cont_depth;
  j["bins"] = c.bins;
  j["symlog_limit"] = c.symlog_limit;
  j["beta_dyn"] = c.beta_dyn;
  j["beta_rep"] = c.beta_rep;
  j["free_bits"] = c.free_bits;
  j["w_dec"] = c.w_dec;
  j["w_rew"] = c.w_rew;
  j["w_cont"] = c.w_cont;
  j["unimix"] = c.unimix;
  j["wm_lr"] = c.wm_lr;
  j["grad_clip"] = c.grad_clip;
  j["gamma"] = c.gamma;
  j["lam"] = c.lam;
  j["imag_horizon"] = c.imag_horizon;
  j["entropy_coef"] = c.entropy_coef;
  j["slow_critic_ema"] = c.slow_critic_ema;
  j["actor_lr"] = c.actor_lr;
  j["critic_lr"] = c.critic_lr;
  j["imag_starts"] = c.imag_starts;
  j["env_dt"] = c.env_dt;
  j["env_theta_fall"] = c.env_theta_fall;
  j["env_horizon"] = c.env_horizon;
  j["env_sigma_v"] = c.env_sigma_v;
  j["env_noise_scale"] = c.env_noise_scale;
  j["env_theta_damp"] = c.env_theta_damp;
  j["env_reaction_coef"] = c.env_reaction_coef;
  j["arn_alpha"] = c.arn_alpha;
  j["arn_buffer"] = c.arn_buffer;
  j["budget_env_steps"] = c.budget_env_steps;
  j["n_slots_per_morph"] = c.n_slots_per_morph;
  j["seq_len"] = c.seq_len;
  j["batch_per_id"] = c.batch_per_id;
  j["train_every"] = c.train_every;
  j["prefill_steps"] = c.prefill_steps;
  j["eval_every_updates"] = c.eval_every_updates;
  j["eval_episodes"] = c.eval_episodes;
  j["replay_capacity_per_id"] = c.replay_capacity_per_id;
  return j;
}

inline RunConfig from_json(const nlohmann::json& j) {
  RunConfig c;
  using detail::get_if;
  get_if(j, "seed", c.seed);
  get_if(j, "cohort_path", c.cohort_path);
  get_if(j, "heldout_ids", c.heldout_ids);
  get_if(j, "out_dir", c.out_dir);
  get_if(j, "pme", c.pme);
  get_if(j, "arn", c.arn);
  get_if(j, "rssm_conditioning", c.rssm_conditioning);
  get_if(j, "encoder_conditioning", c.encoder_conditioning);
  get_if(j, "deter_dim", c.deter_dim);
  get_if(j, "groups", c.groups);
  get_if(j, "classes", c.classes);
  get_if(j, "width", c.width);
  get_if(j, "enc_dyn_depth", c.enc_dyn_depth);
  get_if(j, "enc_stat_depth", c.enc_stat_depth);
  get_if(j, "dec_depth", c.dec_depth);
  get_if(j, "reward_depth", c.reward_depth);
  get_if(j, "cont_depth", c.cont_depth);
  get_if(j, "bins", c.bins);
  get_if(j, "symlog_limit", c.symlog_limit);
  get_if(j, "beta_dyn", c.beta_dyn);
  get_if(j, "beta_rep", c.beta_rep);
  get_if(j, "free_bits", c.free_bits);
  get_if(j, "w_dec", c.w_dec);
  get_if(j, "w_rew", c.w_rew);
  get_if(j, "w_cont", c.w_cont);
  get_if(j, "unimix", c.unimix);
  get_if(j, "wm_lr", c.wm_lr);
  get_if(j, "grad_clip", c.grad_clip);
  get_if(j, "gamma", c.gamma);
  get_if(j, "lam", c.lam);
  get_if(j, "imag_horizon", c.imag_horizon);
  get_if(j, "entropy_coef", c.entropy_coef);
  get_if(j, "slow_critic_ema", c.slow_critic_ema);
  get_if(j, "actor_lr", c.actor_lr);
  get_if(j, "critic_lr", c.critic_lr);
  get_if(j, "imag_starts", c.imag_starts);
  get_if(j, "env_dt", c.env_dt);
  get_if(j, "env_theta_fall", c.env_theta_fall);
  get_if(j, "env_horizon", c.env_horizon);
  get_if(j, "env_sigma_v", c.env_sigma_v);
  get_if(j, "env_noise_scale", c.env_noise_scale);
  get_if(j, "env_theta_damp", c.env_theta_damp);
  get_if(j, "env_reaction_coef", c.env_reaction_coef);
  get_if(j, "arn_alpha", c.arn_alpha);
  get_if(j, "arn_buffer", c.arn_buffer);
  get_if(j, "budget_env_steps", c.budget_env_steps);
  get_if(j, "n_slots_per_morph", c.n_slots_per_morph);
  get_if(j, "seq_len", c.seq_len);
  get_if(j, "batch_per_id", c.batch_per_id);
  get_if(j, "train_every", c.train_every);
  get_if(j, "prefill_steps", c.prefill_steps);
  get_if(j, "eval_every_updates", c.eval_every_updates);
  get_if(j, "eval_episodes", c.eval_episodes);
  get_if(j, "replay_capacity_per_id", c.replay_capacity_per_id);
  return c;
}

inline RunConfig load(const std::string& path) {
  return from_json(nlohmann::json::parse(read_file(path)));
}
inline void save(const std::string& path, const RunConfig& c) {
  write_file(path, to_json(c).dump(1) + "\n");
}

// the eight reference configurations, in fixed report order
inline const std::vector<std::string>& ablation_names() {
  static const std::vector<std::string> names = {
      "full",        "no_pme",     "no_arn",     "no_rssm_cond",
      "no_enc_cond", "no_arn_rssm", "no_arn_enc", "baseline"};
  return names;
}

inline RunConfig apply_ablation(RunConfig c, const std::string& name) {
  c.pme = true;
  c.arn = true;
  c.rssm_conditioning = true;
  c.encoder_conditioning = true;
  if (name == "full") {
  } else if (name == "no_pme") {
    c.pme = false;
  } else if (name == "no_arn") {
    c.arn = false;
  } else if (name == "no_rssm_cond") {
    c.rssm_conditioning = false;
  } else if (name == "no_enc_cond") {
    c.encoder_conditioning = false;
  } else if (name == "no_arn_rssm") {
    c.arn = false;
    c.rssm_conditioning = false;
  } else if (name == "no_arn_enc") {
    c.arn = false;
    c.encoder_conditioning = false;
  } else if (name == "baseline") {  // w/o PME & ARN
    c.pme = false;
    c.arn = false;
  } else {
    throw Error("unknown ablation: " + name);
  }
  return c;
}

}  // namespace qwm::config
