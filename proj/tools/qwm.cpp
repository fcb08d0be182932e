// qwm: morphology-conditioned world model CLI.
// Exit codes: 0 success, 1 usage, 2 input error, 3 numerical divergence.

#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "qwm/agent.hpp"
#include "qwm/cli.hpp"

int main(int argc, char** argv) {
  CLI::App app{"qwm: morphology-conditioned quadrupedal world model"};
  app.require_subcommand(1);

  std::string config_path, checkpoint, out_dir, heldout, ablation;
  std::vector<std::string> inputs;
  long long seed = -1;
  int morphology_id = -1;
  int episodes = 8;
  bool include_heldout = false;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", config_path, "run configuration JSON");
    cmd->add_option("--seed", seed, "override the config seed");
    cmd->add_option("--out", out_dir, "override the output directory");
  };

  auto* extract = app.add_subcommand("extract", "extract morphology features from descriptions");
  extract->add_option("paths", inputs, "robot description files")->required();
  extract->add_option("--out", out_dir, "output directory")->required();
  extract->add_option("--heldout", heldout, "robot name excluded from cohort statistics");

  auto* train = app.add_subcommand("train", "train world model + policy on the toy cohort");
  add_common(train);
  train->add_option("--checkpoint", checkpoint, "resume from checkpoint");

  auto* eval = app.add_subcommand("eval", "frozen-model evaluation on one morphology");
  add_common(eval);
  eval->add_option("--checkpoint", checkpoint, "trained checkpoint")->required();
  eval->add_option("--morphology-id", morphology_id, "cohort index (held-out allowed)")
      ->required();
  eval->add_option("--episodes", episodes, "episodes to average");

  auto* nmse = app.add_subcommand("rollout-nmse", "open-loop NMSE protocol (context 5, 45 steps)");
  add_common(nmse);
  nmse->add_option("--checkpoint", checkpoint, "trained checkpoint")->required();
  nmse->add_flag("--include-heldout", include_heldout, "also evaluate held-out morphologies");

  auto* probe = app.add_subcommand("probe", "latent disentanglement probe (h vs z)");
  add_common(probe);
  probe->add_option("--checkpoint", checkpoint, "trained checkpoint")->required();

  auto* ablate = app.add_subcommand("ablate", "run ablation configurations with shared seeds");
  add_common(ablate);
  ablate->add_option("--ablation", ablation, "comma-separated subset of configurations");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    auto load_cfg = [&]() {
      qwm::config::RunConfig cfg;
      if (!config_path.empty()) cfg = qwm::config::load(config_path);
      if (seed >= 0) cfg.seed = static_cast<std::uint64_t>(seed);
      if (!out_dir.empty()) cfg.out_dir = out_dir;
      return cfg;
    };
    if (extract->parsed()) return qwm::cli::cmd_extract(inputs, out_dir, heldout);
    if (train->parsed()) return qwm::cli::cmd_train(load_cfg(), checkpoint);
    if (eval->parsed()) return qwm::cli::cmd_eval(load_cfg(), checkpoint, morphology_id, episodes);
    if (nmse->parsed())
      return qwm::cli::cmd_rollout_nmse(load_cfg(), checkpoint, include_heldout);
    if (probe->parsed()) return qwm::cli::cmd_probe(load_cfg(), checkpoint);
    if (ablate->parsed()) {
      std::vector<std::string> names;
      if (!ablation.empty()) {
        std::size_t pos = 0;
        while (pos < ablation.size()) {
          std::size_t comma = ablation.find(',', pos);
          if (comma == std::string::npos) comma = ablation.size();
          names.push_back(ablation.substr(pos, comma - pos));
          pos = comma + 1;
        }
      }
      return qwm::cli::cmd_ablate(load_cfg(), names);
    }
  } catch (const qwm::wm::NaNLoss& e) {
    std::cerr << "numerical divergence: " << e.what() << "\n";
    return 3;
  } catch (const qwm::agent::NaNLoss& e) {
    std::cerr << "numerical divergence: " << e.what() << "\n";
    return 3;
  } catch (const qwm::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
