#pragma once

// Evaluation suite: open-loop NMSE, PCA projection, silhouette score,
// between/within-class variance decomposition, and h-vs-z latent probing.

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"
#include "qwm/agent.hpp"
#include "qwm/common.hpp"
#include "qwm/env.hpp"
#include "qwm/wm.hpp"

namespace qwm::analysis {

using tensor::Tensor;

struct DegenerateVariance : Error {
  using Error::Error;
};
struct TooFewRows : Error {
  using Error::Error;
};
struct DegenerateClasses : Error {
  using Error::Error;
};

// ----------------------------------------------------------------- NMSE

// true_obs/pred_obs: [trajectory][t][dim]; variance: per-dim normalizer.
// Dims with variance < 1e-8 are excluded. Returns NMSE per horizon step.
inline std::vector<double> nmse_curve(const std::vector<std::vector<std::vector<double>>>& true_obs,
                                      const std::vector<std::vector<std::vector<double>>>& pred_obs,
                                      const std::vector<double>& per_dim_variance) {
  if (true_obs.size() != pred_obs.size() || true_obs.empty())
    throw Error("nmse_curve: trajectory count mismatch");
  std::vector<int> dims;
  for (std::size_t d = 0; d < per_dim_variance.size(); ++d)
    if (per_dim_variance[d] >= 1e-8) dims.push_back(static_cast<int>(d));
  if (dims.empty()) throw DegenerateVariance("nmse_curve: all dimensions excluded");
  std::size_t T = true_obs[0].size();
  std::vector<double> out(T, 0.0);
  for (std::size_t t = 0; t < T; ++t) {
    double acc = 0;
    std::size_t count = 0;
    for (std::size_t n = 0; n < true_obs.size(); ++n) {
      for (int d : dims) {
        double e = pred_obs[n][t][d] - true_obs[n][t][d];
        acc += e * e / per_dim_variance[d];
        ++count;
      }
    }
    out[t] = acc / count;
  }
  return out;
}

// ------------------------------------------------------------------ PCA

namespace detail {

// cyclic Jacobi eigendecomposition of a symmetric matrix (values + vectors)
inline void jacobi_eigen(std::vector<double>& A, int n, std::vector<double>& eigvals,
                         std::vector<double>& eigvecs) {
  eigvecs.assign(static_cast<std::size_t>(n) * n, 0.0);
  for (int i = 0; i < n; ++i) eigvecs[static_cast<std::size_t>(i) * n + i] = 1.0;
  auto at = [&](int r, int c) -> double& { return A[static_cast<std::size_t>(r) * n + c]; };
  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0;
    for (int p = 0; p < n; ++p)
      for (int q = p + 1; q < n; ++q) off += at(p, q) * at(p, q);
    if (off < 1e-22) break;
    for (int p = 0; p < n; ++p)
      for (int q = p + 1; q < n; ++q) {
        double apq = at(p, q);
        if (std::abs(apq) < 1e-300) continue;
        double theta = (at(q, q) - at(p, p)) / (2.0 * apq);
        double t = std::copysign(1.0, theta) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        double c = 1.0 / std::sqrt(t * t + 1.0);
        double s = t * c;
        for (int k = 0; k < n; ++k) {
          double akp = at(k, p), akq = at(k, q);
          at(k, p) = c * akp - s * akq;
          at(k, q) = s * akp + c * akq;
        }
        for (int k = 0; k < n; ++k) {
          double apk = at(p, k), aqk = at(q, k);
          at(p, k) = c * apk - s * aqk;
          at(q, k) = s * apk + c * aqk;
        }
        for (int k = 0; k < n; ++k) {
          double vkp = eigvecs[static_cast<std::size_t>(k) * n + p];
          double vkq = eigvecs[static_cast<std::size_t>(k) * n + q];
          eigvecs[static_cast<std::size_t>(k) * n + p] = c * vkp - s * vkq;
          eigvecs[static_cast<std::size_t>(k) * n + q] = s * vkp + c * vkq;
        }
      }
  }
  eigvals.resize(n);
  for (int i = 0; i < n; ++i) eigvals[i] = at(i, i);
}

}  // namespace detail

struct PcaResult {
  std::vector<std::vector<double>> projections;  // n x n_components
  std::vector<double> explained_fraction;        // per component, non-increasing
  std::vector<std::vector<double>> components;   // n_components x d loadings
};

// mean-centered covariance eigendecomposition; components sorted by
// eigenvalue; sign fixed so the largest-magnitude loading is positive
inline PcaResult pca_project(const std::vector<std::vector<double>>& rows, int n_components = 2) {
  if (rows.size() < 2) throw TooFewRows("pca_project: need at least 2 rows");
  std::size_t n = rows.size(), d = rows[0].size();
  std::vector<double> mean(d, 0.0);
  for (const auto& r : rows)
    for (std::size_t j = 0; j < d; ++j) mean[j] += r[j];
  for (auto& m : mean) m /= n;
  std::vector<double> cov(d * d, 0.0);
  for (const auto& r : rows)
    for (std::size_t i = 0; i < d; ++i) {
      double xi = r[i] - mean[i];
      for (std::size_t j = i; j < d; ++j) cov[i * d + j] += xi * (r[j] - mean[j]);
    }
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = i; j < d; ++j) {
      cov[i * d + j] /= n;
      cov[j * d + i] = cov[i * d + j];
    }
  std::vector<double> eigvals, eigvecs;
  detail::jacobi_eigen(cov, static_cast<int>(d), eigvals, eigvecs);

  std::vector<int> order(d);
  for (std::size_t i = 0; i < d; ++i) order[i] = static_cast<int>(i);
  std::sort(order.begin(), order.end(), [&](int a, int b) { return eigvals[a] > eigvals[b]; });

  double total = 0;
  for (double v : eigvals) total += std::max(v, 0.0);
  int nc = std::min<int>(n_components, static_cast<int>(d));

  PcaResult out;
  out.components.resize(nc, std::vector<double>(d));
  out.explained_fraction.resize(nc);
  for (int c = 0; c < nc; ++c) {
    int idx = order[c];
    double max_abs = 0;
    std::size_t max_j = 0;
    for (std::size_t j = 0; j < d; ++j) {
      double v = eigvecs[j * d + idx];
      out.components[c][j] = v;
      if (std::abs(v) > max_abs) {
        max_abs = std::abs(v);
        max_j = j;
      }
    }
    if (out.components[c][max_j] < 0)
      for (auto& v : out.components[c]) v = -v;
    out.explained_fraction[c] = total > 0 ? std::max(eigvals[idx], 0.0) / total : 0.0;
  }
  out.projections.resize(n, std::vector<double>(nc));
  for (std::size_t i = 0; i < n; ++i)
    for (int c = 0; c < nc; ++c) {
      double acc = 0;
      for (std::size_t j = 0; j < d; ++j) acc += (rows[i][j] - mean[j]) * out.components[c][j];
      out.projections[i][c] = acc;
    }
  return out;
}

// ------------------------------------------------------------- silhouette

inline double silhouette(const std::vector<std::vector<double>>& rows,
                         const std::vector<int>& labels) {
  if (rows.size() != labels.size() || rows.empty())
    throw Error("silhouette: rows/labels mismatch");
  std::map<int, std::vector<int>> by_class;
  for (std::size_t i = 0; i < labels.size(); ++i) by_class[labels[i]].push_back(static_cast<int>(i));
  if (by_class.size() < 2) throw DegenerateClasses("silhouette: need >= 2 classes");
  for (const auto& [c, members] : by_class)
    if (members.size() < 2)
      throw DegenerateClasses("silhouette: class " + std::to_string(c) + " has < 2 members");

  std::size_t n = rows.size(), d = rows[0].size();
  auto dist = [&](int a, int b) {
    double acc = 0;
    const double* pa = rows[a].data();
    const double* pb = rows[b].data();
    for (std::size_t j = 0; j < d; ++j) {
      double t = pa[j] - pb[j];
      acc += t * t;
    }
    return std::sqrt(acc);
  };

  double total = 0;
  for (std::size_t i = 0; i < n; ++i) {
    std::map<int, double> mean_dist;
    std::map<int, int> count;
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j) continue;
      mean_dist[labels[j]] += dist(static_cast<int>(i), static_cast<int>(j));
      ++count[labels[j]];
    }
    double a = mean_dist[labels[i]] / count[labels[i]];
    double b = std::numeric_limits<double>::infinity();
    for (const auto& [c, s] : mean_dist)
      if (c != labels[i]) b = std::min(b, s / count[c]);
    double m = std::max(a, b);
    total += m > 0 ? (b - a) / m : 0.0;
  }
  return total / n;
}

// -------------------------------------------------- variance decomposition

struct VarianceSplit {
  double between_fraction = 0, within_fraction = 0;
};

inline VarianceSplit variance_decomposition(const std::vector<std::vector<double>>& rows,
                                            const std::vector<int>& labels) {
  if (rows.size() != labels.size() || rows.empty())
    throw Error("variance_decomposition: rows/labels mismatch");
  std::map<int, std::vector<int>> by_class;
  for (std::size_t i = 0; i < labels.size(); ++i) by_class[labels[i]].push_back(static_cast<int>(i));
  if (by_class.size() < 2) throw DegenerateClasses("variance_decomposition: need >= 2 classes");
  std::size_t n = rows.size(), d = rows[0].size();
  std::vector<double> mean(d, 0.0);
  for (const auto& r : rows)
    for (std::size_t j = 0; j < d; ++j) mean[j] += r[j];
  for (auto& m : mean) m /= n;
  double total = 0;
  for (const auto& r : rows)
    for (std::size_t j = 0; j < d; ++j) {
      double t = r[j] - mean[j];
      total += t * t;
    }
  double between = 0;
  for (const auto& [c, members] : by_class) {
    std::vector<double> cmean(d, 0.0);
    for (int i : members)
      for (std::size_t j = 0; j < d; ++j) cmean[j] += rows[i][j];
    for (auto& m : cmean) m /= members.size();
    double ss = 0;
    for (std::size_t j = 0; j < d; ++j) {
      double t = cmean[j] - mean[j];
      ss += t * t;
    }
    between += members.size() * ss;
  }
  if (total <= 0) return {0.0, 1.0};
  return {between / total, 1.0 - between / total};
}

// ------------------------------------------------------------ latent probe

struct LatentDataset {
  std::vector<std::vector<double>> h;
  std::vector<std::vector<double>> z;
  std::vector<int> morphology_id;
  // annotations: forward speed, speed norm, angular speed, mean |joint-analog|
  std::vector<std::array<double, 4>> annotations;
};

struct ProbeProtocol {
  int trajectories_per_morph = 32;
  int steps_per_trajectory = 32;
  std::uint64_t seed = 0;
};

struct ProbeReport {
  double silhouette_h = 0, silhouette_z = 0;
  bool h_above_z = false;
  VarianceSplit z_split, h_split;
  std::vector<double> explained_variance;  // combined [h, z] PCA
  PcaResult pca_h, pca_z, pca_combined;
  LatentDataset dataset;
};

// rolls the policy on every cohort morphology, recording posterior latents
inline LatentDataset collect_latents(const wm::WorldModelParams& params,
                                     const agent::Actor& actor,
                                     const std::vector<env::ToyMorphology>& cohort,
                                     const std::vector<std::array<double, morphfeat::kFeatures>>& mu_rows,
                                     const env::EnvParams& env_params,
                                     const ProbeProtocol& proto) {
  LatentDataset ds;
  Rng rng(proto.seed);
  for (std::size_t mid = 0; mid < cohort.size(); ++mid) {
    env::BatchedEnv e({cohort[mid]}, 1, env_params, rng.next_u64());
    Tensor mu = Tensor::from_data({1, morphfeat::kFeatures},
                                  std::vector<double>(mu_rows[mid].begin(), mu_rows[mid].end()));
    int collected_traj = 0, attempts = 0;
    while (collected_traj < proto.trajectories_per_morph &&
           attempts < 4 * proto.trajectories_per_morph) {
      ++attempts;
      e.reset(rng, {true});
      wm::LatentState state = wm::initial_state(params.cfg, 1);
      Tensor a_prev = Tensor::zeros({1, env::kActDim});
      bool dead = false;
      int steps = 0;
      for (; steps < proto.steps_per_trajectory && !dead; ++steps) {
        Tensor obs = Tensor::from_data({1, env::kObsDim}, e.observe(0));
        Tensor h = wm::recurrent_step(params, state, a_prev, mu);
        Tensor emb = wm::encode(params, obs, mu);
        auto post = wm::posterior(params, h, emb, rng);
        state = {h, post.z, post.logits};

        const auto& st = e.state(0);
        ds.h.push_back(state.h.val());
        ds.z.push_back(state.z.val());
        ds.morphology_id.push_back(static_cast<int>(mid));
        ds.annotations.push_back({st.xd, std::sqrt(st.xd * st.xd + st.zd * st.zd),
                                  std::abs(st.thd), std::abs(st.th)});

        auto act_out = agent::act(actor, state, rng, false);
        a_prev = act_out.action;
        auto res = e.step({act_out.action.val()});
        dead = res.terminated[0] || res.truncated[0];
      }
      if (steps > 0) ++collected_traj;
    }
  }
  return ds;
}

inline ProbeReport probe_report(LatentDataset ds) {
  ProbeReport r;
  r.silhouette_h = silhouette(ds.h, ds.morphology_id);
  r.silhouette_z = silhouette(ds.z, ds.morphology_id);
  r.h_above_z = r.silhouette_h > r.silhouette_z;
  r.z_split = variance_decomposition(ds.z, ds.morphology_id);
  r.h_split = variance_decomposition(ds.h, ds.morphology_id);
  r.pca_h = pca_project(ds.h, 2);
  r.pca_z = pca_project(ds.z, 2);
  std::vector<std::vector<double>> combined(ds.h.size());
  for (std::size_t i = 0; i < ds.h.size(); ++i) {
    combined[i] = ds.h[i];
    combined[i].insert(combined[i].end(), ds.z[i].begin(), ds.z[i].end());
  }
  r.pca_combined = pca_project(combined, 2);
  r.explained_variance = r.pca_combined.explained_fraction;
  r.dataset = std::move(ds);
  return r;
}

// Appendix F style probe: collect, then compare h vs z clustering
inline ProbeReport probe_h_vs_z(const wm::WorldModelParams& params, const agent::Actor& actor,
                                const std::vector<env::ToyMorphology>& cohort,
                                const std::vector<std::array<double, morphfeat::kFeatures>>& mu_rows,
                                const env::EnvParams& env_params, const ProbeProtocol& proto) {
  return probe_report(collect_latents(params, actor, cohort, mu_rows, env_params, proto));
}

// ----------------------------------------------------------------- emitters

inline std::string nmse_csv(const std::map<std::string, std::vector<double>>& per_morph) {
  std::string out = "t";
  for (const auto& [name, curve] : per_morph) out += "," + name;
  out += "\n";
  std::size_t T = per_morph.begin()->second.size();
  for (std::size_t t = 0; t < T; ++t) {
    out += std::to_string(t + 1);
    for (const auto& [name, curve] : per_morph) out += "," + fmt_double(curve[t]);
    out += "\n";
  }
  return out;
}

inline std::string pca_points_csv(const ProbeReport& r) {
  std::string out = "pc1,pc2,label,v_x,speed,angular_speed,mean_joint\n";
  for (std::size_t i = 0; i < r.pca_combined.projections.size(); ++i) {
    out += fmt_double(r.pca_combined.projections[i][0]) + "," +
           fmt_double(r.pca_combined.projections[i][1]) + "," +
           std::to_string(r.dataset.morphology_id[i]);
    for (double a : r.dataset.annotations[i]) out += "," + fmt_double(a);
    out += "\n";
  }
  return out;
}

inline std::string metrics_json(const ProbeReport& r) {
  nlohmann::json j;
  j["silhouette_h"] = r.silhouette_h;
  j["silhouette_z"] = r.silhouette_z;
  j["h_above_z"] = r.h_above_z;
  j["between"] = r.z_split.between_fraction;
  j["within"] = r.z_split.within_fraction;
  j["between_h"] = r.h_split.between_fraction;
  j["within_h"] = r.h_split.within_fraction;
  j["explained_variance"] = r.explained_variance;
  return j.dump(1);
}

}  // namespace qwm::analysis
