#pragma once

// Toy heterogeneous morphology family: a planar hopper-cart whose dynamics
// depend on the morphology parameters, with per-morphology reward weights and
// scales. Torque drives the leg angle, leg thrust accelerates the base, and a
// hidden per-episode damping resists all velocities. There is no passive
// potential-energy storage, so with zero torque kinetic energy only decays.

#include <cmath>
#include <string>
#include <vector>

#include "json.hpp"
#include "qwm/common.hpp"
#include "qwm/morphfeat.hpp"

namespace qwm::env {

struct EmptyCohort : Error {
  using Error::Error;
};
struct NaNState : Error {
  using Error::Error;
};

// Appendix-style reward kernels, shared by the toy reward
namespace kernels {
inline double squared_exp_tracking(double err, double sigma) {
  return std::exp(-(err * err) / (sigma * sigma));
}
inline double torque_penalty(double tau0, double tau1) { return -(tau0 * tau0 + tau1 * tau1); }
inline double action_rate_penalty(double d0, double d1) { return -(d0 * d0 + d1 * d1); }
inline double orientation_penalty(double theta) { return -(theta * theta); }
}  // namespace kernels

inline constexpr int kObsDim = 9;  // [xd, zd, th, thd, v_cmd, a_prev0, a_prev1, sin th, cos th]
inline constexpr int kActDim = 2;  // [thrust torque, leg torque], both in [-1, 1] of tau_max

struct ToyMorphology {
  std::string name;
  double mass = 1.0;          // kg
  double leg_length = 0.3;    // m
  double torque_limit = 5.0;  // Nm
  double stance_width = 0.2;  // m
  int knee_config = 0;        // flips the torque->tilt sign
  double w_track = 1.0;
  double w_torque = 1e-3;
  double w_rate = 0.05;
  double w_orient = 0.25;
  double reward_scale = 1.0;  // s, emulates heterogeneous episode-reward magnitudes
};

// toy analog of the morphology feature vector, using the same formulas where
// they apply (log mass, torque density, aspect ratio); trunk ratio is a
// constant so the degenerate-feature path of the normalizer is exercised
inline morphfeat::MorphologyVector to_morphology_vector(const ToyMorphology& m) {
  morphfeat::MorphologyVector v;
  v.l_hip = 0.25 * m.leg_length;
  v.l_thigh = m.leg_length;
  v.l_shank = m.leg_length;
  v.k_cfg = m.knee_config;
  v.l_stance = 1.6 * m.leg_length;
  v.w_stance = m.stance_width;
  v.aspect_ratio = v.l_stance / v.w_stance;
  v.log_mass = std::log(1.0 + m.mass);
  v.trunk_ratio = 0.6;
  v.torque_density = m.torque_limit / (m.mass * morphfeat::kGravity);
  return v;
}

struct ToyState {
  double x = 0, z = 0;
  double xd = 0, zd = 0;
  double th = 0, thd = 0;
  double damping = 1.0;  // hidden, unobserved
  double v_cmd = 0;
  double a_prev[2] = {0, 0};
};

struct EnvParams {
  double dt = 0.02;           // 50 Hz control
  double theta_fall = 0.7;    // rad
  int horizon = 200;
  double sigma_v = 0.6;       // tracking kernel width
  double thrust_coef = 1.0;   // c_f
  double reaction_coef = 0.3; // thrust torque tilts the leg by this fraction
  double theta_damp = 2.0;
  double damp_lo = 0.5, damp_hi = 1.5;
  double noise_scale = 1.0;   // multiplies the per-dim observation noise below
};

inline const std::array<double, kObsDim>& obs_noise_base() {
  static const std::array<double, kObsDim> n = {0.02, 0.02, 0.01, 0.04, 0.0,
                                                0.0,  0.0,  0.005, 0.005};
  return n;
}

struct StepResult {
  std::vector<std::vector<double>> obs;  // per slot
  std::vector<double> reward;            // raw, per slot
  std::vector<bool> terminated;          // fall / non-finite state
  std::vector<bool> truncated;           // horizon reached
};

class BatchedEnv {
 public:
  BatchedEnv(std::vector<ToyMorphology> cohort, int n_slots_per_morph, EnvParams params,
             std::uint64_t noise_seed)
      : morphs_(std::move(cohort)), params_(params), noise_rng_(noise_seed) {
    if (morphs_.empty()) throw EmptyCohort("make_cohort: empty morphology list");
    int n = static_cast<int>(morphs_.size()) * n_slots_per_morph;
    for (int i = 0; i < n; ++i) slot_morph_.push_back(i % static_cast<int>(morphs_.size()));
    states_.resize(n);
    steps_.assign(n, 0);
    obs_cache_.assign(n, std::vector<double>(kObsDim, 0.0));
  }

  int n_slots() const { return static_cast<int>(slot_morph_.size()); }
  int n_morphs() const { return static_cast<int>(morphs_.size()); }
  int morph_of_slot(int slot) const { return slot_morph_[slot]; }
  const ToyMorphology& morph(int id) const { return morphs_[id]; }
  const std::vector<ToyMorphology>& cohort() const { return morphs_; }
  const ToyState& state(int slot) const { return states_[slot]; }
  ToyState& mutable_state(int slot) { return states_[slot]; }
  const EnvParams& params() const { return params_; }
  int steps_in_episode(int slot) const { return steps_[slot]; }

  // masked slots reinitialized per the reset randomization; returns observations
  std::vector<std::vector<double>> reset(Rng& rng, const std::vector<bool>& mask) {
    for (int i = 0; i < n_slots(); ++i) {
      if (!mask[i]) continue;
      const auto& m = morphs_[slot_morph_[i]];
      ToyState s;
      s.x = 0;
      s.z = m.leg_length;
      s.xd = rng.uniform(-0.5, 0.5);
      s.zd = rng.uniform(-0.5, 0.5);
      s.th = rng.uniform(-0.1, 0.1);
      s.thd = rng.uniform(-0.5, 0.5);
      s.damping = rng.uniform(params_.damp_lo, params_.damp_hi);
      s.v_cmd = rng.uniform(-1.0, 1.0);
      s.a_prev[0] = s.a_prev[1] = 0;
      states_[i] = s;
      steps_[i] = 0;
      obs_cache_[i] = make_obs(i);
    }
    std::vector<std::vector<double>> out;
    out.reserve(n_slots());
    for (int i = 0; i < n_slots(); ++i) out.push_back(obs_cache_[i]);
    return out;
  }

  // one step for every slot; actions are (n_slots x 2), clipped to [-1, 1]
  StepResult step(const std::vector<std::vector<double>>& actions) {
    StepResult r;
    r.obs.resize(n_slots());
    r.reward.resize(n_slots());
    r.terminated.assign(n_slots(), false);
    r.truncated.assign(n_slots(), false);
    for (int i = 0; i < n_slots(); ++i) {
      const auto& m = morphs_[slot_morph_[i]];
      ToyState& s = states_[i];
      double a0 = std::clamp(actions[i][0], -1.0, 1.0);
      double a1 = std::clamp(actions[i][1], -1.0, 1.0);
      double tau0 = a0 * m.torque_limit;
      double tau1 = a1 * m.torque_limit;
      double sign = m.knee_config == 1 ? -1.0 : 1.0;
      double inertia = m.mass * m.leg_length * m.leg_length;
      // narrow stances leverage the thrust reaction harder (aspect-scaled)
      double aspect = 1.6 * m.leg_length / m.stance_width;
      double reaction = params_.reaction_coef * (aspect / 2.5) * tau0;

      double th_acc = sign * (tau1 + reaction) / inertia -
                      params_.theta_damp * s.damping * s.thd;
      double x_acc = params_.thrust_coef * tau0 * std::cos(s.th) / (m.mass * m.leg_length) -
                     s.damping * s.xd;
      double z_acc = -(1.0 + s.damping) * s.zd;

      // semi-implicit Euler
      s.thd += params_.dt * th_acc;
      s.xd += params_.dt * x_acc;
      s.zd += params_.dt * z_acc;
      s.th += params_.dt * s.thd;
      s.x += params_.dt * s.xd;
      s.z = std::max(0.0, s.z + params_.dt * s.zd);

      double track = kernels::squared_exp_tracking(s.xd - s.v_cmd, params_.sigma_v);
      double rate0 = a0 - s.a_prev[0], rate1 = a1 - s.a_prev[1];
      double reward = m.reward_scale *
                      (m.w_track * track + m.w_torque * kernels::torque_penalty(tau0, tau1) +
                       m.w_rate * kernels::action_rate_penalty(rate0, rate1) +
                       m.w_orient * kernels::orientation_penalty(s.th));
      s.a_prev[0] = a0;
      s.a_prev[1] = a1;
      ++steps_[i];

      bool bad = !std::isfinite(s.x) || !std::isfinite(s.xd) || !std::isfinite(s.th) ||
                 !std::isfinite(s.thd) || !std::isfinite(s.z) || !std::isfinite(s.zd);
      if (bad) {
        r.terminated[i] = true;
        reward = 0.0;
      } else if (std::abs(s.th) > params_.theta_fall) {
        r.terminated[i] = true;
      } else if (steps_[i] >= params_.horizon) {
        r.truncated[i] = true;
      }
      r.reward[i] = reward;
      obs_cache_[i] = make_obs(i);
      r.obs[i] = obs_cache_[i];
    }
    return r;
  }

  // most recent cached observation for a slot
  const std::vector<double>& observe(int slot) const { return obs_cache_[slot]; }

 private:
  std::vector<double> make_obs(int slot) {
    const ToyState& s = states_[slot];
    std::vector<double> o = {s.xd,        s.zd,        s.th,          s.thd, s.v_cmd,
                             s.a_prev[0], s.a_prev[1], std::sin(s.th), std::cos(s.th)};
    const auto& base = obs_noise_base();
    if (params_.noise_scale > 0) {
      for (int i = 0; i < kObsDim; ++i) {
        double n = base[i] * params_.noise_scale;
        if (n > 0) o[i] += noise_rng_.uniform(-n, n);
      }
    }
    return o;
  }

  std::vector<ToyMorphology> morphs_;
  EnvParams params_;
  Rng noise_rng_;
  std::vector<int> slot_morph_;
  std::vector<ToyState> states_;
  std::vector<int> steps_;
  std::vector<std::vector<double>> obs_cache_;
};

inline BatchedEnv make_cohort(const std::vector<ToyMorphology>& spec, int n_slots_per_morph,
                              const EnvParams& params = {}, std::uint64_t noise_seed = 0) {
  return BatchedEnv(spec, n_slots_per_morph, params, noise_seed);
}

// ------------------------------------------------------------ cohort spec IO

inline nlohmann::json to_json(const ToyMorphology& m) {
  return {{"name", m.name},
          {"mass", m.mass},
          {"leg_length", m.leg_length},
          {"torque_limit", m.torque_limit},
          {"stance_width", m.stance_width},
          {"knee_config", m.knee_config},
          {"w_track", m.w_track},
          {"w_torque", m.w_torque},
          {"w_rate", m.w_rate},
          {"w_orient", m.w_orient},
          {"reward_scale", m.reward_scale}};
}

inline ToyMorphology morphology_from_json(const nlohmann::json& j) {
  ToyMorphology m;
  m.name = j.at("name").get<std::string>();
  m.mass = j.at("mass").get<double>();
  m.leg_length = j.at("leg_length").get<double>();
  m.torque_limit = j.at("torque_limit").get<double>();
  m.stance_width = j.at("stance_width").get<double>();
  m.knee_config = j.at("knee_config").get<int>();
  m.w_track = j.at("w_track").get<double>();
  m.w_torque = j.at("w_torque").get<double>();
  m.w_rate = j.at("w_rate").get<double>();
  m.w_orient = j.at("w_orient").get<double>();
  m.reward_scale = j.at("reward_scale").get<double>();
  return m;
}

inline std::vector<ToyMorphology> load_cohort(const std::string& path) {
  auto j = nlohmann::json::parse(read_file(path));
  std::vector<ToyMorphology> out;
  for (const auto& item : j.at("morphologies")) out.push_back(morphology_from_json(item));
  if (out.empty()) throw EmptyCohort("cohort file has no morphologies: " + path);
  return out;
}

inline void save_cohort(const std::string& path, const std::vector<ToyMorphology>& cohort) {
  nlohmann::json j;
  j["morphologies"] = nlohmann::json::array();
  for (const auto& m : cohort) j["morphologies"].push_back(to_json(m));
  write_file(path, j.dump(1));
}

// trajectory dump for offline analysis
inline std::string trajectory_csv_header() {
  return "slot,t,x,z,xd,zd,th,thd,v_cmd,a0,a1,reward\n";
}
inline std::string trajectory_csv_row(int slot, int t, const ToyState& s, double a0, double a1,
                                      double reward) {
  std::string out = std::to_string(slot) + "," + std::to_string(t);
  for (double v : {s.x, s.z, s.xd, s.zd, s.th, s.thd, s.v_cmd, a0, a1, reward})
    out += "," + fmt_double(v);
  return out + "\n";
}

}  // namespace qwm::env
