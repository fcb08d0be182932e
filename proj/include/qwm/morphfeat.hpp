#pragma once

// Physical morphology encoder: explicit feature extraction from a parsed
// robot description, cohort min-max normalization, z-score distance matrices.

#include <array>
#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "qwm/common.hpp"
#include "qwm/robodesc.hpp"

namespace qwm::morphfeat {

using robodesc::ChainRole;
using robodesc::LegLabel;
using robodesc::RobotDescription;

struct MissingChain : Error {
  using Error::Error;
};
struct DegenerateStance : Error {
  using Error::Error;
};
struct EmptyMass : Error {
  using Error::Error;
};
struct NoActuators : Error {
  using Error::Error;
};
struct TooFewRobots : Error {
  using Error::Error;
};

inline constexpr double kGravity = 9.81;
inline constexpr double kMassFilter = 0.005;  // kg; drops sensor dummy bodies
inline constexpr int kFeatures = 10;

inline const std::array<const char*, kFeatures>& feature_names() {
  static const std::array<const char*, kFeatures> names = {
      "l_hip",    "l_thigh",      "l_shank",     "k_cfg",       "l_stance",
      "w_stance", "aspect_ratio", "log_mass",    "trunk_ratio", "torque_density"};
  return names;
}

struct MorphologyVector {
  double l_hip = 0, l_thigh = 0, l_shank = 0;
  double k_cfg = 0;
  double l_stance = 0, w_stance = 0, aspect_ratio = 0;
  double log_mass = 0, trunk_ratio = 0, torque_density = 0;

  std::array<double, kFeatures> to_array() const {
    return {l_hip,    l_thigh,      l_shank,  k_cfg,       l_stance,
            w_stance, aspect_ratio, log_mass, trunk_ratio, torque_density};
  }
  static MorphologyVector from_array(const std::array<double, kFeatures>& a) {
    MorphologyVector m;
    m.l_hip = a[0];
    m.l_thigh = a[1];
    m.l_shank = a[2];
    m.k_cfg = a[3];
    m.l_stance = a[4];
    m.w_stance = a[5];
    m.aspect_ratio = a[6];
    m.log_mass = a[7];
    m.trunk_ratio = a[8];
    m.torque_density = a[9];
    return m;
  }
};

struct CohortStats {
  std::array<double, kFeatures> min{}, max{}, mean{}, std{};  // population std
  int cohort_size = 0;
};

struct NormalizedMorphology {
  std::array<double, kFeatures> mu{};
};

namespace detail {

inline double norm3(const std::array<double, 3>& v) {
  return std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]);
}

// base-frame position of a link, accumulating parent offsets root-to-link
inline std::array<double, 3> link_position(const RobotDescription& d, const std::string& link) {
  std::array<double, 3> pos{0, 0, 0};
  std::string cur = link;
  int guard = 0;
  while (cur != d.base_link) {
    const auto* l = d.find_link(cur);
    if (!l) throw MissingChain("link '" + cur + "' not found while accumulating position");
    for (int i = 0; i < 3; ++i) pos[i] += l->parent_offset[i];
    const robodesc::JointSpec* parent_joint = nullptr;
    for (const auto& j : d.joints)
      if (j.child == cur) parent_joint = &j;
    if (!parent_joint) throw MissingChain("link '" + cur + "' has no parent joint");
    cur = parent_joint->parent;
    if (++guard > static_cast<int>(d.links.size()))
      throw MissingChain("cycle while accumulating position of '" + link + "'");
  }
  return pos;
}

inline double filtered_total_mass(const RobotDescription& d) {
  double total = 0;
  bool any = false;
  for (const auto& l : d.links)
    if (l.mass > kMassFilter) {
      total += l.mass;
      any = true;
    }
  if (!any) throw EmptyMass("robot '" + d.name + "': no link passes the mass filter");
  return total;
}

}  // namespace detail

// mu_kin = [l_hip, l_thigh, l_shank, k_cfg] from the FL leg chain
struct Kinematics {
  double l_hip, l_thigh, l_shank;
  int k_cfg;
};

inline Kinematics extract_kinematics(const RobotDescription& d) {
  const auto* hfe = d.find_joint(LegLabel::FL, ChainRole::Hfe);
  const auto* kfe = d.find_joint(LegLabel::FL, ChainRole::Kfe);
  if (!hfe || !kfe) throw MissingChain("robot '" + d.name + "': FL chain incomplete");
  const auto* hfe_child = d.find_link(hfe->child);
  const auto* kfe_child = d.find_link(kfe->child);
  if (!hfe_child || !kfe_child)
    throw MissingChain("robot '" + d.name + "': FL chain links missing");
  // shank extent comes from the foot body hanging off the kfe child
  const robodesc::LinkSpec* foot = nullptr;
  int n_children = 0;
  for (const auto& j : d.joints)
    if (j.parent == kfe->child) {
      foot = d.find_link(j.child);
      ++n_children;
    }
  if (n_children != 1 || !foot)
    throw MissingChain("robot '" + d.name + "': FL " + kfe->child +
                       " needs exactly one child (foot), found " + std::to_string(n_children));
  return {detail::norm3(hfe_child->parent_offset), detail::norm3(kfe_child->parent_offset),
          detail::norm3(foot->parent_offset), d.knee_config};
}

struct Geometry {
  double l_stance, w_stance, aspect_ratio;
};

inline Geometry extract_geometry(const RobotDescription& d) {
  double min_x = 0, max_x = 0, min_y = 0, max_y = 0;
  bool first = true;
  for (LegLabel leg : {LegLabel::FL, LegLabel::FR, LegLabel::RL, LegLabel::RR}) {
    const auto* haa = d.find_joint(leg, ChainRole::Haa);
    if (!haa)
      throw MissingChain(std::string("robot '") + d.name + "': missing haa joint for leg " +
                         robodesc::to_string(leg));
    auto pos = detail::link_position(d, haa->child);
    if (first) {
      min_x = max_x = pos[0];
      min_y = max_y = pos[1];
      first = false;
    } else {
      min_x = std::min(min_x, pos[0]);
      max_x = std::max(max_x, pos[0]);
      min_y = std::min(min_y, pos[1]);
      max_y = std::max(max_y, pos[1]);
    }
  }
  double l = max_x - min_x, w = max_y - min_y;
  if (!(w > 0))
    throw DegenerateStance("robot '" + d.name + "': stance width is not positive");
  return {l, w, l / w};
}

struct Dynamics {
  double log_mass, trunk_ratio;
};

inline Dynamics extract_dynamics(const RobotDescription& d) {
  double total = detail::filtered_total_mass(d);
  double heaviest = 0;
  for (const auto& l : d.links) heaviest = std::max(heaviest, l.mass);
  return {std::log(1.0 + total), heaviest / total};
}

inline double extract_actuation(const RobotDescription& d) {
  double total = detail::filtered_total_mass(d);
  double sum = 0;
  int n = 0;
  for (const auto& j : d.joints)
    if (j.actuated) {
      sum += j.effort_limit;
      ++n;
    }
  if (n == 0) throw NoActuators("robot '" + d.name + "': no actuated joints");
  return sum / (static_cast<double>(n) * total * kGravity);
}

inline MorphologyVector extract_morphology(const RobotDescription& d) {
  MorphologyVector m;
  auto kin = extract_kinematics(d);
  m.l_hip = kin.l_hip;
  m.l_thigh = kin.l_thigh;
  m.l_shank = kin.l_shank;
  m.k_cfg = kin.k_cfg;
  auto geo = extract_geometry(d);
  m.l_stance = geo.l_stance;
  m.w_stance = geo.w_stance;
  m.aspect_ratio = geo.aspect_ratio;
  auto dyn = extract_dynamics(d);
  m.log_mass = dyn.log_mass;
  m.trunk_ratio = dyn.trunk_ratio;
  m.torque_density = extract_actuation(d);
  return m;
}

inline CohortStats fit_cohort(const std::vector<MorphologyVector>& vectors) {
  if (vectors.size() < 2)
    throw TooFewRobots("cohort statistics need at least 2 robots, got " +
                       std::to_string(vectors.size()));
  CohortStats s;
  s.cohort_size = static_cast<int>(vectors.size());
  for (int f = 0; f < kFeatures; ++f) {
    double mn = vectors[0].to_array()[f], mx = mn, sum = 0;
    for (const auto& v : vectors) {
      double x = v.to_array()[f];
      mn = std::min(mn, x);
      mx = std::max(mx, x);
      sum += x;
    }
    double mean = sum / vectors.size();
    double ss = 0;
    for (const auto& v : vectors) {
      double dx = v.to_array()[f] - mean;
      ss += dx * dx;
    }
    s.min[f] = mn;
    s.max[f] = mx;
    s.mean[f] = mean;
    // identical values give exactly zero spread (no mean-roundoff residue)
    s.std[f] = mn == mx ? 0.0 : std::sqrt(ss / vectors.size());
  }
  return s;
}

// min-max map to [-1, 1]; degenerate features map to 0; out-of-cohort clamps
inline NormalizedMorphology normalize(const MorphologyVector& mu, const CohortStats& stats) {
  NormalizedMorphology n;
  auto a = mu.to_array();
  for (int f = 0; f < kFeatures; ++f) {
    double range = stats.max[f] - stats.min[f];
    double x = range == 0 ? 0.0 : 2.0 * (a[f] - stats.min[f]) / range - 1.0;
    n.mu[f] = std::clamp(x, -1.0, 1.0);
  }
  return n;
}

inline std::vector<std::array<double, kFeatures>> zscores(
    const std::vector<MorphologyVector>& vectors, const CohortStats& stats) {
  std::vector<std::array<double, kFeatures>> z(vectors.size());
  for (std::size_t i = 0; i < vectors.size(); ++i) {
    auto a = vectors[i].to_array();
    for (int f = 0; f < kFeatures; ++f)
      z[i][f] = stats.std[f] > 0 ? (a[f] - stats.mean[f]) / stats.std[f] : 0.0;
  }
  return z;
}

inline std::vector<std::vector<double>> zscore_distance_matrix(
    const std::vector<MorphologyVector>& vectors, const CohortStats& stats) {
  auto z = zscores(vectors, stats);
  std::size_t n = vectors.size();
  std::vector<std::vector<double>> D(n, std::vector<double>(n, 0.0));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      double ss = 0;
      for (int f = 0; f < kFeatures; ++f) {
        double d = z[i][f] - z[j][f];
        ss += d * d;
      }
      D[i][j] = D[j][i] = std::sqrt(ss);
    }
  return D;
}

// ---- CSV export (header row = feature/robot names, full double precision)

inline std::string features_csv(const std::vector<std::string>& names,
                                const std::vector<MorphologyVector>& vectors) {
  std::string out = "robot";
  for (const char* f : feature_names()) out += std::string(",") + f;
  out += "\n";
  for (std::size_t i = 0; i < vectors.size(); ++i) {
    out += names[i];
    for (double x : vectors[i].to_array()) out += "," + fmt_double(x);
    out += "\n";
  }
  return out;
}

inline std::string normalized_csv(const std::vector<std::string>& names,
                                  const std::vector<NormalizedMorphology>& vectors) {
  std::string out = "robot";
  for (const char* f : feature_names()) out += std::string(",") + f;
  out += "\n";
  for (std::size_t i = 0; i < vectors.size(); ++i) {
    out += names[i];
    for (double x : vectors[i].mu) out += "," + fmt_double(x);
    out += "\n";
  }
  return out;
}

inline std::string distance_csv(const std::vector<std::string>& names,
                                const std::vector<std::vector<double>>& D) {
  std::string out = "robot";
  for (const auto& n : names) out += "," + n;
  out += "\n";
  for (std::size_t i = 0; i < D.size(); ++i) {
    out += names[i];
    for (double x : D[i]) out += "," + fmt_double(x);
    out += "\n";
  }
  return out;
}

}  // namespace qwm::morphfeat
