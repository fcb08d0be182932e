#pragma once

// Command implementations behind the CLI: extract, train, eval, rollout-nmse,
// probe, ablate. Every command is a pure function of (config, checkpoint,
// input files) and writes only under the configured output directory.

#include <filesystem>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "qwm/analysis.hpp"
#include "qwm/config.hpp"
#include "qwm/morphfeat.hpp"
#include "qwm/robodesc.hpp"
#include "qwm/trainer.hpp"

namespace qwm::cli {

namespace fs = std::filesystem;

// parse robot description files, emit features / normalized / distance CSVs.
// `heldout` names a robot excluded from the cohort statistics (it is still
// normalized and measured against them).
inline int cmd_extract(const std::vector<std::string>& paths, const std::string& out_dir,
                       const std::string& heldout = "") {
  std::vector<std::string> names;
  std::vector<morphfeat::MorphologyVector> vecs;
  for (const auto& p : paths) {
    auto desc = robodesc::parse_robot_description(read_file(p));
    names.push_back(desc.name);
    vecs.push_back(morphfeat::extract_morphology(desc));
  }
  fs::create_directories(out_dir);
  write_file(out_dir + "/features.csv", morphfeat::features_csv(names, vecs));
  if (vecs.size() < 2) return 0;  // single file: features only

  std::vector<morphfeat::MorphologyVector> cohort;
  for (std::size_t i = 0; i < vecs.size(); ++i)
    if (names[i] != heldout) cohort.push_back(vecs[i]);
  auto stats = morphfeat::fit_cohort(cohort);
  std::vector<morphfeat::NormalizedMorphology> normed;
  for (const auto& v : vecs) normed.push_back(morphfeat::normalize(v, stats));
  write_file(out_dir + "/normalized.csv", morphfeat::normalized_csv(names, normed));
  auto D = morphfeat::zscore_distance_matrix(vecs, stats);
  write_file(out_dir + "/distances.csv", morphfeat::distance_csv(names, D));
  return 0;
}

inline int cmd_train(const config::RunConfig& cfg, const std::string& resume_checkpoint = "") {
  fs::create_directories(cfg.out_dir);
  config::save(cfg.out_dir + "/config_resolved.json", cfg);
  trainer::Trainer tr(cfg);
  if (!resume_checkpoint.empty()) tr.load_checkpoint(resume_checkpoint);
  tr.train(cfg.out_dir);
  tr.save_checkpoint(cfg.out_dir + "/checkpoint.bin");
  return 0;
}

inline int cmd_eval(const config::RunConfig& cfg, const std::string& checkpoint,
                    int morphology_id, int episodes, const std::string& out_path = "") {
  trainer::Trainer tr(cfg);
  tr.load_checkpoint(checkpoint);
  if (morphology_id < 0 || morphology_id >= static_cast<int>(tr.cohort().size()))
    throw arn::UnknownId("morphology id " + std::to_string(morphology_id) +
                         " outside cohort of size " + std::to_string(tr.cohort().size()));
  auto res = tr.evaluate(morphology_id, episodes, cfg.seed * 7919 + 17);
  nlohmann::json j;
  j["morphology_id"] = morphology_id;
  j["name"] = tr.cohort()[morphology_id].name;
  j["mean_return_raw"] = res.mean_return_raw;
  j["mean_return_normalized"] = res.mean_return_normalized;
  j["mean_episode_length"] = res.mean_episode_length;
  std::string text = j.dump(1) + "\n";
  if (!out_path.empty())
    write_file(out_path, text);
  else
    std::cout << text;
  return 0;
}

inline int cmd_rollout_nmse(const config::RunConfig& cfg, const std::string& checkpoint,
                            bool include_heldout, int n_traj = 32, int context = 5,
                            int horizon = 45) {
  trainer::Trainer tr(cfg);
  tr.load_checkpoint(checkpoint);
  fs::create_directories(cfg.out_dir);
  std::vector<int> ids = tr.train_ids();
  if (include_heldout)
    for (int h : cfg.heldout_ids) ids.push_back(h);
  std::map<std::string, std::vector<double>> curves;
  for (int id : ids) {
    auto res = trainer::run_nmse_protocol(tr, id, n_traj, context, horizon,
                                          cfg.seed * 104729 + id);
    curves[tr.cohort()[id].name] = res.curve;
  }
  write_file(cfg.out_dir + "/nmse_curve.csv", analysis::nmse_csv(curves));
  return 0;
}

inline int cmd_probe(const config::RunConfig& cfg, const std::string& checkpoint,
                     int traj_per_morph = 32, int steps = 32) {
  trainer::Trainer tr(cfg);
  tr.load_checkpoint(checkpoint);
  fs::create_directories(cfg.out_dir);
  auto report = trainer::run_probe(tr, traj_per_morph, steps, cfg.seed * 31337 + 5);
  write_file(cfg.out_dir + "/metrics.json", analysis::metrics_json(report) + "\n");
  write_file(cfg.out_dir + "/pca_points.csv", analysis::pca_points_csv(report));
  return 0;
}

// run the named flag combinations (all 8 by default) with a shared seed and
// emit a fixed-column comparison CSV
inline int cmd_ablate(const config::RunConfig& base, const std::vector<std::string>& names_in) {
  std::vector<std::string> names =
      names_in.empty() ? config::ablation_names() : names_in;
  fs::create_directories(base.out_dir);
  std::string csv =
      "config,seed,pme,arn,rssm_conditioning,encoder_conditioning,"
      "mean_return_normalized,mean_episode_length,largest_scale_reward_loss_share\n";
  for (const auto& name : names) {
    config::RunConfig cfg = config::apply_ablation(base, name);
    cfg.out_dir = base.out_dir + "/" + name;
    fs::create_directories(cfg.out_dir);
    config::save(cfg.out_dir + "/config_resolved.json", cfg);
    trainer::Trainer tr(cfg);
    tr.train(cfg.out_dir);
    tr.save_checkpoint(cfg.out_dir + "/checkpoint.bin");
    double ret = 0, len = 0;
    for (int id : tr.train_ids()) {
      auto r = tr.evaluate(id, cfg.eval_episodes, cfg.seed * 7919 + 17);
      ret += r.mean_return_normalized;
      len += r.mean_episode_length;
    }
    ret /= tr.train_ids().size();
    len /= tr.train_ids().size();
    auto share = tr.reward_loss_share();
    csv += name + "," + std::to_string(cfg.seed) + "," + (cfg.pme ? "1" : "0") + "," +
           (cfg.arn ? "1" : "0") + "," + (cfg.rssm_conditioning ? "1" : "0") + "," +
           (cfg.encoder_conditioning ? "1" : "0") + "," + fmt_double(ret) + "," +
           fmt_double(len) + "," + fmt_double(share.share[share.largest_scale_id]) + "\n";
  }
  write_file(base.out_dir + "/ablation_report.csv", csv);
  return 0;
}

}  // namespace qwm::cli
