#include <catch2/catch_amalgamated.hpp>
#include <cstdlib>
#include <filesystem>

#include "qwm/cli.hpp"
#include "qwm/config.hpp"
#include "qwm/trainer.hpp"
#include "test_util.hpp"

using namespace qwm;
namespace fs = std::filesystem;

namespace {

config::RunConfig tiny_run_config(const std::string& out) {
  config::RunConfig c;
  c.seed = 11;
  c.cohort_path = testutil::data_path("toy_cohort.json");
  c.heldout_ids = {6, 7};
  c.out_dir = out;
  c.deter_dim = 16;
  c.groups = 4;
  c.classes = 4;
  c.width = 16;
  c.bins = 21;
  c.symlog_limit = 10.0;
  c.seq_len = 8;
  c.batch_per_id = 1;
  c.n_slots_per_morph = 1;
  c.train_every = 16;
  c.prefill_steps = 400;
  c.budget_env_steps = 900;
  c.imag_horizon = 5;
  c.imag_starts = 12;
  c.env_horizon = 64;
  c.eval_episodes = 1;
  return c;
}

std::string fresh_dir(const std::string& tag) {
  std::string d = "/tmp/qwm_test_" + tag;
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

}  // namespace

TEST_CASE("config json round-trips with full default materialization", "[trainer]") {
  config::RunConfig c;
  c.seed = 99;
  c.pme = false;
  c.heldout_ids = {3};
  auto j = config::to_json(c);
  auto back = config::from_json(j);
  CHECK(back.seed == 99);
  CHECK(back.pme == false);
  CHECK(back.heldout_ids == std::vector<int>{3});
  CHECK(back.beta_dyn == c.beta_dyn);

  // partial document: missing keys take defaults
  auto partial = config::from_json(nlohmann::json{{"seed", 5}});
  CHECK(partial.seed == 5);
  CHECK(partial.arn == true);
  CHECK(partial.deter_dim == config::RunConfig{}.deter_dim);
}

TEST_CASE("ablation presets cover all eight flag combinations", "[trainer]") {
  config::RunConfig base;
  std::set<std::array<bool, 4>> seen;
  for (const auto& name : config::ablation_names()) {
    auto c = config::apply_ablation(base, name);
    seen.insert({c.pme, c.arn, c.rssm_conditioning, c.encoder_conditioning});
  }
  CHECK(seen.size() == 8);
  auto baseline = config::apply_ablation(base, "baseline");
  CHECK_FALSE(baseline.pme);
  CHECK_FALSE(baseline.arn);
  CHECK_FALSE(baseline.effective_encoder_conditioning());
  CHECK_FALSE(baseline.effective_rssm_conditioning());
  CHECK_THROWS_AS(config::apply_ablation(base, "nope"), Error);
}

TEST_CASE("zero-step budget writes an initial checkpoint and exits", "[trainer]") {
  auto out = fresh_dir("zerostep");
  auto cfg = tiny_run_config(out);
  cfg.budget_env_steps = 0;
  CHECK(cli::cmd_train(cfg) == 0);
  CHECK(fs::exists(out + "/checkpoint.bin"));
  CHECK(fs::exists(out + "/checkpoint.bin.json"));
  CHECK(fs::exists(out + "/config_resolved.json"));
}

TEST_CASE("training writes logs and checkpoints that reload", "[trainer]") {
  auto out = fresh_dir("train");
  auto cfg = tiny_run_config(out);
  trainer::Trainer tr(cfg);
  tr.train(out);
  CHECK(tr.updates() > 0);
  tr.save_checkpoint(out + "/checkpoint.bin");
  CHECK(fs::exists(out + "/wm_loss.csv"));
  CHECK(fs::exists(out + "/agent_metrics.csv"));

  auto csv = read_file(out + "/wm_loss.csv");
  CHECK(csv.rfind("step,dec,rew,cont,kl_dyn,kl_rep,total", 0) == 0);

  trainer::Trainer tr2(cfg);
  tr2.load_checkpoint(out + "/checkpoint.bin");
  auto a = tr.world_model().params();
  auto b = tr2.world_model().params();
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i].val() == b[i].val());
}

TEST_CASE("same seed twice gives bit-identical logs", "[trainer]") {
  auto out1 = fresh_dir("det1");
  auto out2 = fresh_dir("det2");
  auto c1 = tiny_run_config(out1);
  auto c2 = tiny_run_config(out2);
  cli::cmd_train(c1);
  cli::cmd_train(c2);
  CHECK(read_file(out1 + "/wm_loss.csv") == read_file(out2 + "/wm_loss.csv"));
  CHECK(read_file(out1 + "/agent_metrics.csv") == read_file(out2 + "/agent_metrics.csv"));

  auto c3 = tiny_run_config(fresh_dir("det3"));
  c3.seed = 12;
  cli::cmd_train(c3);
  CHECK(read_file(out1 + "/wm_loss.csv") != read_file(c3.out_dir + "/wm_loss.csv"));
}

TEST_CASE("resumed runs continue the loss log monotonically", "[trainer]") {
  auto out = fresh_dir("resume");
  auto cfg = tiny_run_config(out);
  cli::cmd_train(cfg);
  auto first = read_file(out + "/wm_loss.csv");
  // resume with a larger total budget and continue in the same directory
  auto cfg2 = cfg;
  cfg2.budget_env_steps = 2 * cfg.budget_env_steps;
  cli::cmd_train(cfg2, out + "/checkpoint.bin");
  auto second = read_file(out + "/wm_loss.csv");
  CHECK(second.size() > first.size());
  long long prev = -1;
  std::istringstream lines(second);
  std::string line;
  std::getline(lines, line);  // header
  while (std::getline(lines, line)) {
    long long step = std::stoll(line.substr(0, line.find(',')));
    CHECK(step > prev);
    prev = step;
  }
}

TEST_CASE("evaluation is deterministic and per-morphology", "[trainer]") {
  auto cfg = tiny_run_config(fresh_dir("eval"));
  trainer::Trainer tr(cfg);
  auto a = tr.evaluate(0, 2, 555);
  auto b = tr.evaluate(0, 2, 555);
  CHECK(a.mean_return_raw == b.mean_return_raw);
  CHECK(a.mean_episode_length == b.mean_episode_length);
  // held-out morphology works through mu injection only
  auto held = tr.evaluate(7, 1, 555);
  CHECK(std::isfinite(held.mean_return_raw));
}

TEST_CASE("cmd_extract emits table csvs and propagates parse errors", "[trainer]") {
  auto out = fresh_dir("extract");
  std::vector<std::string> paths;
  for (std::string n : {"anymal_b", "anymal_c", "go1"})
    paths.push_back(testutil::data_path("cohort/" + n + ".rbt"));
  CHECK(cli::cmd_extract(paths, out) == 0);
  CHECK(fs::exists(out + "/features.csv"));
  CHECK(fs::exists(out + "/normalized.csv"));
  CHECK(fs::exists(out + "/distances.csv"));

  // a single file produces features only
  auto out1 = fresh_dir("extract1");
  CHECK(cli::cmd_extract({paths[0]}, out1) == 0);
  CHECK(fs::exists(out1 + "/features.csv"));
  CHECK_FALSE(fs::exists(out1 + "/distances.csv"));

  // malformed file raises a syntax error with a line number
  std::string bad = out + "/bad.rbt";
  write_file(bad, "<robot name=\"x\">\n  <link name=\"a\" mass=\"zz\" offset=\"0 0 0\"/>\n</robot>");
  CHECK_THROWS_AS(cli::cmd_extract({bad}, out), robodesc::SyntaxError);
}

TEST_CASE("cli binary: extract runs end to end and bad input exits 2", "[trainer]") {
  // ctest runs unit_tests from build/tests; the cli lives in build/tools
  std::string bin = "../tools/qwm";
  if (!fs::exists(bin)) {
    bin = "./tools/qwm";
    if (!fs::exists(bin)) SKIP("cli binary not found next to the test binary");
  }
  auto out = fresh_dir("cli_extract");
  std::string cmd = bin + " extract";
  for (std::string n : {"anymal_b", "anymal_c"})
    cmd += " " + testutil::data_path("cohort/" + n + ".rbt");
  cmd += " --out " + out + " >/dev/null 2>&1";
  CHECK(std::system(cmd.c_str()) == 0);
  CHECK(fs::exists(out + "/features.csv"));

  std::string bad = out + "/bad.rbt";
  write_file(bad, "<robot name=\"x\">");
  int rc = std::system((bin + " extract " + bad + " --out " + out + " >/dev/null 2>&1").c_str());
  CHECK(WEXITSTATUS(rc) == 2);
  int usage = std::system((bin + " no-such-command >/dev/null 2>&1").c_str());
  CHECK(WEXITSTATUS(usage) == 1);
}

TEST_CASE("reward loss share probe sums to one", "[trainer]") {
  auto cfg = tiny_run_config(fresh_dir("share"));
  cfg.budget_env_steps = 600;
  trainer::Trainer tr(cfg);
  tr.train("");
  auto share = tr.reward_loss_share(2);
  double total = 0;
  for (const auto& [id, s] : share.share) total += s;
  CHECK(total == Catch::Approx(1.0).margin(1e-9));
  CHECK(share.largest_scale_id == 3);  // t3_medium carries scale 30
}

TEST_CASE("all outputs land under the configured directory", "[trainer]") {
  auto out = fresh_dir("confine");
  auto cfg = tiny_run_config(out);
  cfg.budget_env_steps = 500;
  auto cwd = fs::current_path();
  std::vector<fs::path> before;
  for (const auto& e : fs::directory_iterator(cwd)) before.push_back(e.path());
  cli::cmd_train(cfg);
  std::vector<fs::path> after;
  for (const auto& e : fs::directory_iterator(cwd)) after.push_back(e.path());
  CHECK(before == after);
  CHECK(fs::exists(out + "/config_resolved.json"));
}
