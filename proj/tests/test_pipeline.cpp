#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "ptznav/pipeline.hpp"
#include "test_util.hpp"

using namespace ptznav;
using namespace ptznav::pipeline;
namespace fs = std::filesystem;

namespace {

int cli(std::initializer_list<std::string> args) {
  return run_cli(std::vector<std::string>(args));
}

}  // namespace

TEST_CASE("usage errors exit with code 2") {
  CHECK(cli({"no-such-command"}) == kExitUsage);
  CHECK(cli({"gen-noise", "--bogus-flag", "1"}) == kExitUsage);
  CHECK(cli({"gen-noise"}) == kExitUsage);  // missing required --out
  CHECK(cli({"--help"}) == kExitOk);
}

TEST_CASE("gen-noise: dataset, resolved config, byte-stable re-run") {
  const std::string out = testutil::scratch_dir("cli_noise");
  CHECK(cli({"gen-noise", "--kind", "all", "--count", "8", "--seed", "1",
             "--out", out}) == kExitOk);
  CHECK(fs::exists(fs::path(out) / "manifest.jsonl"));
  CHECK(fs::exists(fs::path(out) / "config.resolved.ini"));
  const auto manifest =
      noisegen::read_manifest((fs::path(out) / "manifest.jsonl").string());
  CHECK(manifest.entries.size() == 8);

  // Re-run purely from the stored config into a second directory.
  const std::string out2 = testutil::scratch_dir("cli_noise2");
  std::string config = testutil::slurp(
      (fs::path(out) / "config.resolved.ini").string());
  const std::string marker = "out=\"" + out + "\"";
  config.replace(config.find(marker), marker.size(), "out=\"" + out2 + "\"");
  const std::string config_path = out2 + "_config.ini";
  std::ofstream(config_path, std::ios::binary) << config;
  CHECK(cli({"gen-noise", "--config", config_path}) == kExitOk);
  CHECK(testutil::same_file_bytes((fs::path(out) / "manifest.jsonl").string(),
                                  (fs::path(out2) / "manifest.jsonl").string()));
  for (const auto& e : manifest.entries)
    CHECK(testutil::same_file_bytes((fs::path(out) / e.file).string(),
                                    (fs::path(out2) / e.file).string()));
}

TEST_CASE("eval-ptz on an empty manifest is a usage error") {
  const std::string dir = testutil::scratch_dir("cli_empty_pairs");
  std::ofstream(dir + "/pairs.jsonl", std::ios::binary) << "";
  CHECK(cli({"eval-ptz", "--checkpoint", dir + "/none.nptz", "--pairs", dir,
             "--out", dir}) == kExitUsage);
}

TEST_CASE("full desk-scale mini pipeline") {
  const std::string root = testutil::scratch_dir("cli_mini");
  const std::string noise = root + "/noise";
  const std::string pairs = root + "/pairs";
  const std::string ptz = root + "/ptz";
  const std::string world = root + "/world";
  const std::string data = root + "/interact";
  const std::string policy = root + "/policy";
  const std::string eval = root + "/eval";
  const std::string report_dir = root + "/report";

  CHECK(cli({"gen-noise", "--kind", "fractal", "--count", "6", "--seed", "3",
             "--out", noise}) == kExitOk);
  CHECK(cli({"gen-pairs", "--images", noise, "--count", "120",
             "--nonoverlap-frac", "0.33", "--seed", "4", "--out", pairs}) ==
        kExitOk);
  CHECK(cli({"train-ptz", "--pairs", pairs, "--out", ptz, "--seed", "5",
             "--input-side", "32", "--trunk", "8,16", "--batch", "8",
             "--val-interval", "10", "--phase1-max-steps", "30",
             "--phase2-steps", "15", "--val-subset", "24"}) == kExitOk);
  CHECK(fs::exists(fs::path(ptz) / "encoder.nptz"));
  CHECK(fs::exists(fs::path(ptz) / "train_log.csv"));

  CHECK(cli({"eval-ptz", "--checkpoint", ptz + "/encoder.nptz", "--pairs",
             pairs, "--out", eval, "--source", "fractal", "--seed", "5"}) ==
        kExitOk);
  CHECK(fs::exists(fs::path(eval) / "ptz_eval.csv"));

  CHECK(cli({"gen-world", "--seed", "6", "--out", world}) == kExitOk);
  CHECK(fs::exists(fs::path(world) / "world.json"));
  CHECK(fs::exists(fs::path(world) / "panorama.pgm"));

  CHECK(cli({"collect", "--world", world, "--n-traj", "8", "--steps", "6",
             "--seed", "7", "--out", data}) == kExitOk);
  CHECK(fs::exists(fs::path(data) / "manifest.json"));

  CHECK(cli({"train-policy", "--data", data, "--mode", "oracle", "--steps",
             "30", "--batch", "4", "--hidden", "16", "--seed", "8", "--out",
             policy}) == kExitOk);
  CHECK(fs::exists(fs::path(policy) / "policy.nptz"));

  CHECK(cli({"eval-nav", "--policy", policy + "/policy.nptz", "--worlds-seed",
             "9100", "--n-worlds", "1", "--tasks", "3", "--seed", "9",
             "--tier", "2k", "--out", eval + "/nav"}) == kExitOk);
  CHECK(fs::exists(fs::path(eval) / "nav" / "nav_eval.csv"));

  // Controller-on-oracle-states sanity rollout rendering.
  CHECK(cli({"render-rollout", "--world", world, "--task-seed", "11", "--out",
             root + "/rollout"}) == kExitOk);
  CHECK(fs::exists(fs::path(root) / "rollout" / "rollout.json"));
  CHECK(fs::exists(fs::path(root) / "rollout" / "step_000.pgm"));

  CHECK(cli({"report", "--in", eval, "--out", report_dir}) == kExitOk);
  const std::string fig4 = testutil::slurp(report_dir + "/fig4.csv");
  CHECK(fig4.find("2k_oracle_lstm_1") != std::string::npos);
  const std::string table1 = testutil::slurp(report_dir + "/table1.csv");
  CHECK(table1.find("fractal") != std::string::npos);

  CHECK(cli({"verify", "--run", noise}) == kExitOk);
  CHECK(cli({"verify", "--run", pairs}) == kExitOk);
  CHECK(cli({"verify", "--run", ptz}) == kExitOk);
}

TEST_CASE("report aggregates seeds and flags single-seed rows") {
  const std::string dir = testutil::scratch_dir("cli_report");
  const std::string run = dir + "/runs";
  fs::create_directories(run);
  append_nav_eval_record({"ptz", "2k", 1, 0, 0.8, 12.0},
                         run + "/nav_eval.csv");
  append_nav_eval_record({"ptz", "2k", 1, 1, 0.9, 11.0},
                         run + "/nav_eval.csv");
  append_nav_eval_record({"e2e", "30k", 15, 0, 0.5, 30.0},
                         run + "/nav_eval.csv");
  REQUIRE(write_reports({run}, dir + "/out"));

  const std::string fig4 = testutil::slurp(dir + "/out/fig4.csv");
  CHECK(fig4.find("2k_ptz_lstm_1,0.85") != std::string::npos);
  CHECK(fig4.find("30k_e2e_lstm_15,0.5") != std::string::npos);
  // Two-seed row carries a std value; single-seed row leaves it empty.
  std::stringstream ss(fig4);
  std::string line;
  bool saw_single = false, saw_double = false;
  while (std::getline(ss, line)) {
    if (line.rfind("30k_e2e_lstm_15", 0) == 0) {
      saw_single = true;
      CHECK(line.find(",,1,") != std::string::npos);
    }
    if (line.rfind("2k_ptz_lstm_1", 0) == 0) {
      saw_double = true;
      CHECK(line.find(",,") == std::string::npos);
    }
  }
  CHECK(saw_single);
  CHECK(saw_double);

  // Identical input records produce identical report bytes.
  REQUIRE(write_reports({run}, dir + "/out2"));
  CHECK(testutil::same_file_bytes(dir + "/out/fig4.csv",
                                  dir + "/out2/fig4.csv"));
  CHECK(write_reports({dir + "/nowhere"}, dir + "/out3") == false);
}

TEST_CASE("verify flags corrupted artifacts") {
  const std::string dir = testutil::scratch_dir("cli_verify");
  CHECK(cli({"gen-noise", "--kind", "perlin", "--count", "3", "--seed", "2",
             "--out", dir}) == kExitOk);
  CHECK(cli({"verify", "--run", dir}) == kExitOk);

  // Flip a pixel byte in one image: the regeneration check must fail.
  const auto manifest =
      noisegen::read_manifest((fs::path(dir) / "manifest.jsonl").string());
  const std::string victim = (fs::path(dir) / manifest.entries[0].file).string();
  auto bytes = testutil::slurp(victim);
  bytes[bytes.size() - 1] = static_cast<char>(bytes[bytes.size() - 1] ^ 0x7f);
  std::ofstream(victim, std::ios::binary)
      .write(bytes.data(), static_cast<long>(bytes.size()));
  CHECK(cli({"verify", "--run", dir}) == kExitRuntime);
}
