#include "ptznav/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"

namespace fs = std::filesystem;

namespace ptznav::pipeline {

namespace {

constexpr const char* kToolVersion = "ptznav 1.0.0";

std::string fmt_f(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

// Resolved-config writer: plain key=value INI that the same subcommand's
// --config option reads back, full float precision, strings quoted.
class ConfigDump {
 public:
  void add(const std::string& key, const std::string& v) {
    lines_.push_back(key + "=\"" + v + "\"");
  }
  void add(const std::string& key, const char* v) { add(key, std::string(v)); }
  void add(const std::string& key, double v) { lines_.push_back(key + "=" + fmt_f(v)); }
  void add(const std::string& key, int v) { lines_.push_back(key + "=" + std::to_string(v)); }
  void add(const std::string& key, long v) { lines_.push_back(key + "=" + std::to_string(v)); }
  void add(const std::string& key, std::uint64_t v) { lines_.push_back(key + "=" + std::to_string(v)); }
  void add(const std::string& key, bool v) { lines_.push_back(key + std::string("=") + (v ? "true" : "false")); }

  void write(const std::string& out_dir) const {
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    const fs::path path = fs::path(out_dir) / "config.resolved.ini";
    std::ofstream out(path, std::ios::binary);
    if (!out)
      throw std::runtime_error("cannot write " + path.string());
    out << "# " << kToolVersion << "\n";
    for (const auto& l : lines_) out << l << "\n";
  }

 private:
  std::vector<std::string> lines_;
};

// Reads the key=value INI dialect that ConfigDump writes (comments with #,
// optional double quotes around values).
std::vector<std::pair<std::string, std::string>> parse_config_file(
    const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot read config file: " + path);
  std::vector<std::pair<std::string, std::string>> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#' || line[0] == ';') continue;
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("bad config line: " + line);
    std::string key = line.substr(0, eq);
    std::string value = line.substr(eq + 1);
    if (value.size() >= 2 && value.front() == '"' && value.back() == '"')
      value = value.substr(1, value.size() - 2);
    out.emplace_back(std::move(key), std::move(value));
  }
  return out;
}

// Splices config-file values into the argument list right after the
// subcommand, skipping any key the user already passed: flags win.
std::vector<std::string> apply_config_arg(std::vector<std::string> args) {
  std::string config_path;
  std::vector<std::string> stripped;
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) {
      config_path = args[++i];
    } else if (args[i].rfind("--config=", 0) == 0) {
      config_path = args[i].substr(9);
    } else {
      stripped.push_back(args[i]);
    }
  }
  if (config_path.empty()) return stripped;
  if (stripped.empty())
    throw std::invalid_argument("--config requires a subcommand");

  std::vector<std::string> result;
  result.push_back(stripped[0]);  // subcommand
  for (const auto& [key, value] : parse_config_file(config_path)) {
    const std::string flag = "--" + key;
    bool user_set = false;
    for (std::size_t i = 1; i < stripped.size(); ++i)
      if (stripped[i] == flag || stripped[i].rfind(flag + "=", 0) == 0)
        user_set = true;
    if (user_set) continue;
    result.push_back(flag);
    result.push_back(value);
  }
  result.insert(result.end(), stripped.begin() + 1, stripped.end());
  return result;
}

std::vector<int> parse_int_list(const std::string& csv) {
  std::vector<int> out;
  std::stringstream ss(csv);
  std::string tok;
  while (std::getline(ss, tok, ','))
    if (!tok.empty()) out.push_back(std::stoi(tok));
  if (out.empty()) throw std::invalid_argument("empty integer list: " + csv);
  return out;
}

std::string join_int_list(const std::vector<int>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(v[i]);
  }
  return s;
}

// ---------------------------------------------------------------- gen-noise
struct GenNoiseArgs {
  std::string kind = "all";
  int count = 40;
  std::uint64_t seed = 0;
  std::string out;
  int width = 256;
  int height = 256;
};

int cmd_gen_noise(const GenNoiseArgs& a) {
  ConfigDump dump;
  dump.add("kind", a.kind);
  dump.add("count", a.count);
  dump.add("seed", a.seed);
  dump.add("out", a.out);
  dump.add("width", a.width);
  dump.add("height", a.height);
  dump.write(a.out);
  const auto manifest = noisegen::gen_dataset(
      noisegen::dataset_kind_from_string(a.kind), a.count, a.out, a.seed,
      a.width, a.height);
  std::printf("gen-noise: wrote %zu images to %s\n", manifest.entries.size(),
              a.out.c_str());
  return kExitOk;
}

// ---------------------------------------------------------------- gen-pairs
struct GenPairsArgs {
  std::string images;
  std::string source_kind = "any";
  int count = 1000;
  double nonoverlap_frac = 1.0 / 3.0;
  std::uint64_t seed = 0;
  std::string out;
};

int cmd_gen_pairs(const GenPairsArgs& a) {
  ConfigDump dump;
  dump.add("images", a.images);
  dump.add("source-kind", a.source_kind);
  dump.add("count", a.count);
  dump.add("nonoverlap-frac", a.nonoverlap_frac);
  dump.add("seed", a.seed);
  dump.add("out", a.out);
  dump.write(a.out);

  const auto manifest = noisegen::read_manifest(
      (fs::path(a.images) / "manifest.jsonl").string());
  std::vector<std::string> files;
  for (const auto& e : manifest.entries)
    if (a.source_kind == "any" || noisegen::to_string(e.kind) == a.source_kind)
      files.push_back(e.file);
  if (files.empty())
    throw std::invalid_argument("gen-pairs: no source images of kind " +
                                a.source_kind + " in " + a.images);
  const auto pairs = cropgeom::gen_pair_dataset(a.images, files, a.count,
                                                a.nonoverlap_frac, a.out,
                                                a.seed);
  std::printf("gen-pairs: wrote %zu pairs to %s\n", pairs.records.size(),
              a.out.c_str());
  return kExitOk;
}

// ---------------------------------------------------------------- train-ptz
struct TrainPtzArgs {
  std::string pairs;
  std::string val_pairs;  // empty: hold out every 10th record
  std::string out;
  std::uint64_t seed = 0;
  int input_side = 64;
  std::string trunk = "16,32,64";
  double rho = 1.0 / 3.0;
  int batch = 24;
  double lr = 1e-3;
  int val_interval = 50;
  int patience = 3;
  int phase1_max_steps = 1500;
  int phase2_steps = 900;
  int val_subset = 512;
};

int cmd_train_ptz(const TrainPtzArgs& a) {
  ConfigDump dump;
  dump.add("pairs", a.pairs);
  dump.add("val-pairs", a.val_pairs);
  dump.add("out", a.out);
  dump.add("seed", a.seed);
  dump.add("input-side", a.input_side);
  dump.add("trunk", a.trunk);
  dump.add("rho", a.rho);
  dump.add("batch", a.batch);
  dump.add("lr", a.lr);
  dump.add("val-interval", a.val_interval);
  dump.add("patience", a.patience);
  dump.add("phase1-max-steps", a.phase1_max_steps);
  dump.add("phase2-steps", a.phase2_steps);
  dump.add("val-subset", a.val_subset);
  dump.write(a.out);

  const auto manifest = cropgeom::read_pair_manifest(
      (fs::path(a.pairs) / "pairs.jsonl").string());
  if (manifest.records.empty())
    throw std::invalid_argument("train-ptz: empty pair manifest");

  ptzmodel::PairSet train, val;
  if (a.val_pairs.empty()) {
    cropgeom::PairManifest train_m, val_m;
    for (std::size_t i = 0; i < manifest.records.size(); ++i)
      (i % 10 == 0 ? val_m : train_m).records.push_back(manifest.records[i]);
    train = ptzmodel::load_pair_set(a.pairs, train_m, a.input_side);
    val = ptzmodel::load_pair_set(a.pairs, val_m, a.input_side);
  } else {
    train = ptzmodel::load_pair_set(a.pairs, manifest, a.input_side);
    const auto vm = cropgeom::read_pair_manifest(
        (fs::path(a.val_pairs) / "pairs.jsonl").string());
    val = ptzmodel::load_pair_set(a.val_pairs, vm, a.input_side);
  }

  ptzmodel::PtzEncoderConfig enc_cfg;
  enc_cfg.input_side = a.input_side;
  enc_cfg.trunk = parse_int_list(a.trunk);
  ptzmodel::PtzEncoder encoder(enc_cfg, a.seed);

  ptzmodel::CurriculumConfig cur;
  cur.nonoverlap_mix = a.rho;
  cur.batch_size = a.batch;
  cur.lr = a.lr;
  cur.val_interval = a.val_interval;
  cur.patience = a.patience;
  cur.phase1_max_steps = a.phase1_max_steps;
  cur.phase2_steps = a.phase2_steps;
  cur.val_subset = a.val_subset;
  cur.seed = a.seed;

  const auto result = ptzmodel::train_curriculum(encoder, train, val, cur);
  encoder.save((fs::path(a.out) / "encoder.nptz").string());
  ptzmodel::write_train_log(result.log,
                            (fs::path(a.out) / "train_log.csv").string());
  std::printf("train-ptz: %zu steps (phase 2 from %ld), checkpoint at %s\n",
              result.log.size(), result.phase2_start_step,
              (fs::path(a.out) / "encoder.nptz").c_str());
  return kExitOk;
}

// ----------------------------------------------------------------- eval-ptz
struct EvalPtzArgs {
  std::string checkpoint;
  std::string pairs;
  std::string out;
  std::string source = "unknown";
  std::uint64_t seed = 0;
  int input_side = 64;
};

int cmd_eval_ptz(const EvalPtzArgs& a) {
  const auto manifest = cropgeom::read_pair_manifest(
      (fs::path(a.pairs) / "pairs.jsonl").string());
  if (manifest.records.empty())
    throw std::invalid_argument("eval-ptz: empty pair manifest in " + a.pairs);

  ConfigDump dump;
  dump.add("checkpoint", a.checkpoint);
  dump.add("pairs", a.pairs);
  dump.add("out", a.out);
  dump.add("source", a.source);
  dump.add("seed", a.seed);
  dump.add("input-side", a.input_side);
  dump.write(a.out);

  auto encoder = ptzmodel::PtzEncoder::load(a.checkpoint);
  const auto set = ptzmodel::load_pair_set(a.pairs, manifest,
                                           encoder.config().input_side);
  const auto rep = ptzmodel::eval_encoder(encoder, set);

  PtzEvalRecord rec{a.source, a.seed, rep.mean_overlap_iou,
                    rep.nonoverlap_success_rate, rep.n_overlap,
                    rep.n_nonoverlap};
  const std::string path = (fs::path(a.out) / "ptz_eval.csv").string();
  std::error_code ec;
  fs::remove(path, ec);  // stage output is rewritten, not appended
  append_ptz_eval_record(rec, path);
  std::printf("eval-ptz: source=%s overlap_iou=%.4f nonoverlap=%.4f (%zu/%zu pairs)\n",
              a.source.c_str(), rep.mean_overlap_iou,
              rep.nonoverlap_success_rate, rep.n_overlap, rep.n_nonoverlap);
  return kExitOk;
}

// ---------------------------------------------------------------- gen-world
struct GenWorldArgs {
  std::uint64_t seed = 0;
  std::string out;
  navsim::WorldSpec spec;
};

int cmd_gen_world(const GenWorldArgs& a) {
  navsim::WorldSpec spec = a.spec;
  spec.seed = a.seed;
  ConfigDump dump;
  dump.add("seed", a.seed);
  dump.add("out", a.out);
  dump.add("width", spec.panorama_width);
  dump.add("height", spec.panorama_height);
  dump.add("period-x", spec.panorama_period_x);
  dump.add("period-y", spec.panorama_period_y);
  dump.add("octaves", spec.panorama_octaves);
  dump.add("base-side", spec.base_view_side);
  dump.add("gamma", spec.zoom_gamma);
  dump.add("max-depth", spec.max_depth);
  dump.add("stride-div", spec.turn_stride_divisor);
  dump.add("budget", spec.task_budget);
  dump.add("ncc", spec.ncc_threshold);
  dump.write(a.out);

  const navsim::World world(spec);
  navsim::write_world(world, a.out);
  std::printf("gen-world: %dx%d panorama, K=%d, wrote %s\n",
              spec.panorama_width, spec.panorama_height, spec.max_depth,
              a.out.c_str());
  return kExitOk;
}

// ------------------------------------------------------------------ collect
struct CollectArgs {
  std::string world;
  int n_traj = 100;
  int steps = 20;
  std::uint64_t seed = 0;
  std::string out;
};

int cmd_collect(const CollectArgs& a) {
  ConfigDump dump;
  dump.add("world", a.world);
  dump.add("n-traj", a.n_traj);
  dump.add("steps", a.steps);
  dump.add("seed", a.seed);
  dump.add("out", a.out);
  dump.write(a.out);

  const navsim::World world = navsim::read_world(a.world);
  const auto data =
      navsim::collect_random_exploration(world, a.n_traj, a.steps, a.seed);
  navsim::write_interaction_dataset(data, a.out);
  std::printf("collect: %d trajectories x %d steps into %s\n", a.n_traj,
              a.steps, a.out.c_str());
  return kExitOk;
}

// ------------------------------------------------------------- train-policy
struct TrainPolicyArgs {
  std::string data;  // comma-separated interaction dataset dirs
  std::string mode = "ptz";
  std::string ptz_checkpoint;
  int max_subseq = 1;
  int hidden = 64;
  int feature_dim = 16;
  std::string trunk = "16,32,64";
  std::string loss = "ce";
  int steps = 800;
  int batch = 16;
  double lr = 1e-3;
  std::uint64_t seed = 0;
  std::string out;
};

int cmd_train_policy(const TrainPolicyArgs& a) {
  ConfigDump dump;
  dump.add("data", a.data);
  dump.add("mode", a.mode);
  dump.add("ptz-checkpoint", a.ptz_checkpoint);
  dump.add("max-subseq", a.max_subseq);
  dump.add("hidden", a.hidden);
  dump.add("feature-dim", a.feature_dim);
  dump.add("trunk", a.trunk);
  dump.add("loss", a.loss);
  dump.add("steps", a.steps);
  dump.add("batch", a.batch);
  dump.add("lr", a.lr);
  dump.add("seed", a.seed);
  dump.add("out", a.out);
  dump.write(a.out);

  navpolicy::PolicyConfig cfg;
  cfg.mode = navpolicy::encoder_mode_from_string(a.mode);
  cfg.hidden = a.hidden;
  cfg.max_subseq = a.max_subseq;
  cfg.feature_dim = a.feature_dim;
  cfg.trunk = parse_int_list(a.trunk);
  cfg.loss = a.loss == "l1" ? navpolicy::PolicyConfig::Loss::l1
                            : navpolicy::PolicyConfig::Loss::cross_entropy;

  std::unique_ptr<ptzmodel::PtzEncoder> frozen;
  std::uint64_t frozen_hash_before = 0;
  if (cfg.mode == navpolicy::EncoderMode::frozen_ptz) {
    if (a.ptz_checkpoint.empty())
      throw std::invalid_argument(
          "train-policy: frozen mode needs --ptz-checkpoint");
    frozen = std::make_unique<ptzmodel::PtzEncoder>(
        ptzmodel::PtzEncoder::load(a.ptz_checkpoint));
    frozen_hash_before = frozen->model().content_hash();
  }

  // Merge all interaction datasets; frames resized once to the encoder side.
  std::vector<std::string> dirs;
  std::stringstream ss(a.data);
  std::string tok;
  while (std::getline(ss, tok, ','))
    if (!tok.empty()) dirs.push_back(tok);
  if (dirs.empty())
    throw std::invalid_argument("train-policy: no interaction data dirs");

  navpolicy::PolicyDataset merged;
  std::unique_ptr<navsim::World> world;
  const int side = frozen ? frozen->config().input_side : cfg.input_side;
  merged.side = side;
  for (const auto& dir : dirs) {
    const auto data = navsim::read_interaction_dataset(dir, true);
    if (!world) world = std::make_unique<navsim::World>(data.world);
    navsim::World replay_world(data.world);
    auto part = navpolicy::prepare_policy_dataset(data, replay_world, side);
    for (std::size_t t = 0; t < part.frames.size(); ++t) {
      merged.frames.push_back(std::move(part.frames[t]));
      merged.actions.push_back(std::move(part.actions[t]));
      merged.poses.push_back(std::move(part.poses[t]));
    }
  }

  navpolicy::Policy policy(cfg, a.seed);
  navpolicy::PolicyTrainConfig tc;
  tc.steps = a.steps;
  tc.batch = a.batch;
  tc.lr = a.lr;
  tc.seed = a.seed;
  const auto log =
      navpolicy::train_policy(policy, merged, frozen.get(), world.get(), tc);

  if (frozen && frozen->model().content_hash() != frozen_hash_before)
    throw std::runtime_error(
        "train-policy: frozen encoder was mutated (freeze invariant broken)");

  policy.save((fs::path(a.out) / "policy.nptz").string());
  navpolicy::write_policy_log(log,
                              (fs::path(a.out) / "policy_log.csv").string());
  std::printf("train-policy: mode=%s %d steps, final loss %.4f, wrote %s\n",
              a.mode.c_str(), a.steps, log.back().loss, a.out.c_str());
  return kExitOk;
}

// ----------------------------------------------------------------- eval-nav
struct EvalNavArgs {
  std::string policy;  // empty: hand controller on oracle/frozen states
  std::string ptz_checkpoint;
  std::uint64_t worlds_seed = 9000;
  int n_worlds = 5;
  int tasks = 30;
  int forward_steps = 5;
  std::uint64_t seed = 0;
  std::string tier = "2k";
  std::string out;
};

int cmd_eval_nav(const EvalNavArgs& a) {
  ConfigDump dump;
  dump.add("policy", a.policy);
  dump.add("ptz-checkpoint", a.ptz_checkpoint);
  dump.add("worlds-seed", a.worlds_seed);
  dump.add("n-worlds", a.n_worlds);
  dump.add("tasks", a.tasks);
  dump.add("forward-steps", a.forward_steps);
  dump.add("seed", a.seed);
  dump.add("tier", a.tier);
  dump.add("out", a.out);
  dump.write(a.out);

  std::vector<std::unique_ptr<navsim::World>> worlds;
  std::vector<const navsim::World*> world_ptrs;
  for (int i = 0; i < a.n_worlds; ++i) {
    navsim::WorldSpec spec;
    spec.seed = a.worlds_seed + static_cast<std::uint64_t>(i);
    worlds.push_back(std::make_unique<navsim::World>(spec));
    world_ptrs.push_back(worlds.back().get());
  }

  std::unique_ptr<ptzmodel::PtzEncoder> frozen;
  if (!a.ptz_checkpoint.empty())
    frozen = std::make_unique<ptzmodel::PtzEncoder>(
        ptzmodel::PtzEncoder::load(a.ptz_checkpoint));

  std::unique_ptr<navpolicy::Policy> policy;
  std::string mode_name = "oracle";
  int subseq = 0;
  if (!a.policy.empty()) {
    policy = std::make_unique<navpolicy::Policy>(
        navpolicy::Policy::load(a.policy));
    mode_name = navpolicy::to_string(policy->config().mode);
    subseq = policy->config().max_subseq;
    if (policy->config().mode == navpolicy::EncoderMode::frozen_ptz && !frozen)
      throw std::invalid_argument(
          "eval-nav: frozen-PTZ policy needs --ptz-checkpoint");
  }

  navpolicy::AgentFactory factory =
      [&](const navsim::World& world) -> std::unique_ptr<navpolicy::Agent> {
    if (!policy) {
      auto enc = frozen ? navpolicy::StateEncoder::frozen(frozen.get())
                        : navpolicy::StateEncoder::oracle(&world);
      return std::make_unique<navpolicy::ControllerAgent>(enc);
    }
    switch (policy->config().mode) {
      case navpolicy::EncoderMode::frozen_ptz:
        return std::make_unique<navpolicy::PolicyAgent>(
            policy.get(), navpolicy::StateEncoder::frozen(frozen.get()));
      case navpolicy::EncoderMode::oracle_ptz:
        return std::make_unique<navpolicy::PolicyAgent>(
            policy.get(), navpolicy::StateEncoder::oracle(&world));
      case navpolicy::EncoderMode::end_to_end:
        return std::make_unique<navpolicy::PolicyAgent>(
            policy.get(), navpolicy::StateEncoder::pixels(policy.get()));
    }
    throw std::invalid_argument("eval-nav: bad mode");
  };

  double mean_steps = 0.0;
  const double rate = navpolicy::eval_success_rate(
      world_ptrs, factory, a.tasks, derive_seed(a.seed, 0, 0xEA1),
      a.forward_steps, &mean_steps);

  NavEvalRecord rec{mode_name, a.tier, subseq, a.seed, rate, mean_steps};
  const std::string path = (fs::path(a.out) / "nav_eval.csv").string();
  std::error_code ec;
  fs::remove(path, ec);
  append_nav_eval_record(rec, path);
  std::printf("eval-nav: mode=%s tier=%s L=%d success=%.3f mean_steps=%.1f\n",
              mode_name.c_str(), a.tier.c_str(), subseq, rate, mean_steps);
  return kExitOk;
}

// ----------------------------------------------------------- render-rollout
struct RenderRolloutArgs {
  std::string world;
  std::string policy;
  std::string ptz_checkpoint;
  std::uint64_t task_seed = 0;
  std::string out;
};

void draw_box_outline(Image& img, const cropgeom::BBox& box, float intensity) {
  const int x0 = std::max(0, static_cast<int>(std::lround(box.x)));
  const int y0 = std::max(0, static_cast<int>(std::lround(box.y)));
  const int x1 = std::min(img.width - 1,
                          static_cast<int>(std::lround(box.x + box.side)));
  const int y1 = std::min(img.height - 1,
                          static_cast<int>(std::lround(box.y + box.side)));
  if (x0 > x1 || y0 > y1) return;
  for (int x = x0; x <= x1; ++x) {
    img.at(x, y0) = intensity;
    img.at(x, y1) = intensity;
  }
  for (int y = y0; y <= y1; ++y) {
    img.at(x0, y) = intensity;
    img.at(x1, y) = intensity;
  }
}

int cmd_render_rollout(const RenderRolloutArgs& a) {
  ConfigDump dump;
  dump.add("world", a.world);
  dump.add("policy", a.policy);
  dump.add("ptz-checkpoint", a.ptz_checkpoint);
  dump.add("task-seed", a.task_seed);
  dump.add("out", a.out);
  dump.write(a.out);

  const navsim::World world = navsim::read_world(a.world);
  Rng rng(derive_seed(a.task_seed, 0, 0xF0));
  const navsim::NavTask task = navsim::sample_task(world, 5, rng);

  std::unique_ptr<ptzmodel::PtzEncoder> frozen;
  if (!a.ptz_checkpoint.empty())
    frozen = std::make_unique<ptzmodel::PtzEncoder>(
        ptzmodel::PtzEncoder::load(a.ptz_checkpoint));
  std::unique_ptr<navpolicy::Policy> policy;
  if (!a.policy.empty())
    policy = std::make_unique<navpolicy::Policy>(
        navpolicy::Policy::load(a.policy));

  std::unique_ptr<navpolicy::Agent> agent;
  if (policy) {
    auto enc = policy->config().mode == navpolicy::EncoderMode::frozen_ptz
                   ? navpolicy::StateEncoder::frozen(frozen.get())
               : policy->config().mode == navpolicy::EncoderMode::oracle_ptz
                   ? navpolicy::StateEncoder::oracle(&world)
                   : navpolicy::StateEncoder::pixels(policy.get());
    agent = std::make_unique<navpolicy::PolicyAgent>(policy.get(), enc);
  } else {
    auto enc = frozen ? navpolicy::StateEncoder::frozen(frozen.get())
                      : navpolicy::StateEncoder::oracle(&world);
    agent = std::make_unique<navpolicy::ControllerAgent>(enc);
  }

  const navpolicy::RolloutResult result =
      navpolicy::rollout(world, *agent, task);

  // Frame per visited pose with the predicted goal box drawn when the state
  // encoder sees any overlap.
  char name[64];
  for (std::size_t i = 0; i < result.poses.size(); ++i) {
    Image frame = navsim::render(world, result.poses[i]);
    cropgeom::PtzVector state;
    if (frozen)
      state = frozen->predict(frame, task.goal_view);
    else
      state = navsim::true_ptz(world, result.poses[i], task.goal);
    if (!state.is_sentinel() && !ptzmodel::detects_no_overlap(state))
      draw_box_outline(frame, cropgeom::ptz_to_bbox(state), 1.0f);
    std::snprintf(name, sizeof(name), "step_%03zu.pgm", i);
    write_pgm(frame, (fs::path(a.out) / name).string());
  }

  nlohmann::ordered_json j;
  j["success"] = result.success;
  j["steps_used"] = result.steps_used;
  nlohmann::ordered_json acts = nlohmann::ordered_json::array();
  for (auto act : result.actions) acts.push_back(navsim::to_string(act));
  j["actions"] = acts;
  std::ofstream info(fs::path(a.out) / "rollout.json", std::ios::binary);
  info << j.dump(2) << "\n";
  std::printf("render-rollout: %s in %d steps, %zu frames in %s\n",
              result.success ? "success" : "failure", result.steps_used,
              result.poses.size(), a.out.c_str());
  return kExitOk;
}

// ------------------------------------------------------------------- report
struct ReportArgs {
  std::string in;  // comma-separated run directories
  std::string out;
};

int cmd_report(const ReportArgs& a) {
  ConfigDump dump;
  dump.add("in", a.in);
  dump.add("out", a.out);
  dump.write(a.out);
  std::vector<std::string> dirs;
  std::stringstream ss(a.in);
  std::string tok;
  while (std::getline(ss, tok, ','))
    if (!tok.empty()) dirs.push_back(tok);
  if (!write_reports(dirs, a.out)) {
    std::fprintf(stderr, "report: no evaluation records found\n");
    return kExitRuntime;
  }
  std::printf("report: wrote %s/table1.csv and %s/fig4.csv\n", a.out.c_str(),
              a.out.c_str());
  return kExitOk;
}

}  // namespace

void append_ptz_eval_record(const PtzEvalRecord& r, const std::string& path) {
  const bool fresh = !fs::exists(path);
  std::ofstream out(path, std::ios::binary | std::ios::app);
  if (!out) throw std::runtime_error("cannot write " + path);
  if (fresh)
    out << "source,seed,overlap_iou,nonoverlap_success,n_overlap,n_nonoverlap\n";
  char buf[256];
  std::snprintf(buf, sizeof(buf), "%s,%llu,%.9g,%.9g,%zu,%zu\n",
                r.source.c_str(),
                static_cast<unsigned long long>(r.seed), r.overlap_iou,
                r.nonoverlap_success, r.n_overlap, r.n_nonoverlap);
  out << buf;
}

void append_nav_eval_record(const NavEvalRecord& r, const std::string& path) {
  const bool fresh = !fs::exists(path);
  std::ofstream out(path, std::ios::binary | std::ios::app);
  if (!out) throw std::runtime_error("cannot write " + path);
  if (fresh)
    out << "encoder_mode,data_tier,L,seed,success_rate,mean_steps\n";
  char buf[256];
  std::snprintf(buf, sizeof(buf), "%s,%s,%d,%llu,%.9g,%.9g\n",
                r.encoder_mode.c_str(), r.data_tier.c_str(), r.max_subseq,
                static_cast<unsigned long long>(r.seed), r.success_rate,
                r.mean_steps);
  out << buf;
}

namespace {

std::vector<std::vector<std::string>> read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path);
  std::vector<std::vector<std::string>> rows;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (first) {  // skip header
      first = false;
      continue;
    }
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    rows.push_back(std::move(cells));
  }
  return rows;
}

struct Stats {
  double mean = 0.0;
  double stdev = 0.0;  // sample std; meaningless for n < 2
  std::size_t n = 0;
};

Stats stats_of(const std::vector<double>& xs) {
  Stats s;
  s.n = xs.size();
  if (xs.empty()) return s;
  for (double x : xs) s.mean += x;
  s.mean /= static_cast<double>(xs.size());
  if (xs.size() > 1) {
    double acc = 0.0;
    for (double x : xs) acc += (x - s.mean) * (x - s.mean);
    s.stdev = std::sqrt(acc / static_cast<double>(xs.size() - 1));
  }
  return s;
}

std::string std_cell(const Stats& s) {
  return s.n > 1 ? fmt_f(s.stdev) : std::string();
}

}  // namespace

std::vector<PtzEvalRecord> read_ptz_eval_records(const std::string& path) {
  std::vector<PtzEvalRecord> out;
  for (const auto& cells : read_csv(path)) {
    if (cells.size() != 6) throw std::runtime_error("bad ptz record in " + path);
    out.push_back({cells[0], std::stoull(cells[1]), std::stod(cells[2]),
                   std::stod(cells[3]), std::stoul(cells[4]),
                   std::stoul(cells[5])});
  }
  return out;
}

std::vector<NavEvalRecord> read_nav_eval_records(const std::string& path) {
  std::vector<NavEvalRecord> out;
  for (const auto& cells : read_csv(path)) {
    if (cells.size() != 6) throw std::runtime_error("bad nav record in " + path);
    out.push_back({cells[0], cells[1], std::stoi(cells[2]),
                   std::stoull(cells[3]), std::stod(cells[4]),
                   std::stod(cells[5])});
  }
  return out;
}

bool write_reports(const std::vector<std::string>& run_dirs,
                   const std::string& out_dir) {
  std::vector<PtzEvalRecord> ptz;
  std::vector<NavEvalRecord> nav;
  for (const auto& dir : run_dirs) {
    if (!fs::exists(dir)) continue;
    for (const auto& entry : fs::recursive_directory_iterator(dir)) {
      if (!entry.is_regular_file()) continue;
      const std::string name = entry.path().filename().string();
      if (name == "ptz_eval.csv")
        for (auto& r : read_ptz_eval_records(entry.path().string()))
          ptz.push_back(std::move(r));
      else if (name == "nav_eval.csv")
        for (auto& r : read_nav_eval_records(entry.path().string()))
          nav.push_back(std::move(r));
    }
  }
  if (ptz.empty() && nav.empty()) return false;

  std::error_code ec;
  fs::create_directories(out_dir, ec);

  {  // Table-1 style: per training source.
    std::map<std::string, std::vector<const PtzEvalRecord*>> groups;
    for (const auto& r : ptz) groups[r.source].push_back(&r);
    std::ofstream out(fs::path(out_dir) / "table1.csv", std::ios::binary);
    out << "source,overlap_iou_mean,overlap_iou_std,nonoverlap_mean,"
           "nonoverlap_std,seeds\n";
    for (const auto& [source, rows] : groups) {
      std::vector<double> ious, rates;
      for (const auto* r : rows) {
        ious.push_back(r->overlap_iou);
        rates.push_back(r->nonoverlap_success);
      }
      const Stats si = stats_of(ious), sr = stats_of(rates);
      out << source << "," << fmt_f(si.mean) << "," << std_cell(si) << ","
          << fmt_f(sr.mean) << "," << std_cell(sr) << "," << si.n << "\n";
    }
  }

  {  // Fig-4 style: per <tier>_<mode>_lstm_<L> configuration.
    std::map<std::string, std::vector<const NavEvalRecord*>> groups;
    for (const auto& r : nav)
      groups[r.data_tier + "_" + r.encoder_mode + "_lstm_" +
             std::to_string(r.max_subseq)]
          .push_back(&r);
    std::ofstream out(fs::path(out_dir) / "fig4.csv", std::ios::binary);
    out << "name,success_mean,success_std,seeds,mean_steps\n";
    for (const auto& [name, rows] : groups) {
      std::vector<double> rates, steps;
      for (const auto* r : rows) {
        rates.push_back(r->success_rate);
        steps.push_back(r->mean_steps);
      }
      const Stats s = stats_of(rates), st = stats_of(steps);
      out << name << "," << fmt_f(s.mean) << "," << std_cell(s) << "," << s.n
          << "," << fmt_f(st.mean) << "\n";
    }
  }
  return true;
}

// ------------------------------------------------------------------- verify
namespace {

bool report_check(const char* name, bool ok, const std::string& detail = "") {
  std::printf("[%s] %s%s%s\n", name, ok ? "PASS" : "FAIL",
              detail.empty() ? "" : " ", detail.c_str());
  return ok;
}

bool check_geometry() {
  Rng rng(42);
  double max_err = 0.0;
  for (int i = 0; i < 10000; ++i) {
    const cropgeom::PtzVector v{rng.uniform(), rng.uniform(),
                                rng.uniform(0.5, 1.0)};
    const auto round = cropgeom::bbox_to_ptz(cropgeom::ptz_to_bbox(v));
    max_err = std::max({max_err, std::abs(round.p - v.p),
                        std::abs(round.t - v.t), std::abs(round.z - v.z)});
  }
  bool iou_ok = true;
  for (int i = 0; i < 500; ++i) {
    const cropgeom::BBox a{rng.uniform(0, 128), rng.uniform(0, 128),
                           rng.uniform(32, 128)};
    const cropgeom::BBox b{rng.uniform(0, 128), rng.uniform(0, 128),
                           rng.uniform(32, 128)};
    const double ab = cropgeom::iou(a, b), ba = cropgeom::iou(b, a);
    iou_ok = iou_ok && ab == ba && ab >= 0.0 && ab <= 1.0;
    iou_ok = iou_ok && cropgeom::iou(a, a) == 1.0;
  }
  return report_check("geometry", max_err <= 1e-9 && iou_ok,
                      "roundtrip max err " + fmt_f(max_err));
}

bool check_gradients() {
  diffnum::TrainableModel m("verify");
  Rng rng(7);
  diffnum::add_affine_params(m, "l1", 6, 8, rng);
  diffnum::add_affine_params(m, "l2", 8, 2, rng);
  diffnum::Tensor x({4, 6});
  for (auto& v : x.data) v = rng.uniform(-1.0, 1.0);
  diffnum::Tensor target({4, 2});
  for (auto& v : target.data) v = rng.uniform(0.0, 1.0);
  const double err = diffnum::grad_check(
      m,
      [&](diffnum::Graph& g) {
        auto h = g.relu(diffnum::affine_forward(g, m, "l1", g.input(x)));
        return g.mse_loss(diffnum::affine_forward(g, m, "l2", h), target);
      },
      1e-3, 200, 5);
  return report_check("gradients", err <= 1e-4, "max rel err " + fmt_f(err));
}

bool check_noise_regen(const std::string& run_dir) {
  const fs::path manifest_path = fs::path(run_dir) / "manifest.jsonl";
  if (!fs::exists(manifest_path))
    return report_check("noise-regen", true, "(no noise manifest, skipped)");
  const auto manifest = noisegen::read_manifest(manifest_path.string());
  bool ok = !manifest.entries.empty();
  const std::size_t step = std::max<std::size_t>(1, manifest.entries.size() / 5);
  for (std::size_t i = 0; i < manifest.entries.size() && ok; i += step) {
    const auto& e = manifest.entries[i];
    const auto regen =
        noisegen::generate(e.kind, e.width, e.height, e.params, e.seed);
    const Image disk = read_pgm((fs::path(run_dir) / e.file).string());
    ok = disk.same_bytes(quantize8(regen.image));
  }
  return report_check("noise-regen", ok);
}

bool check_pairs(const std::string& run_dir) {
  const fs::path manifest_path = fs::path(run_dir) / "pairs.jsonl";
  if (!fs::exists(manifest_path))
    return report_check("pair-geometry", true, "(no pair manifest, skipped)");
  const auto manifest = cropgeom::read_pair_manifest(manifest_path.string());
  bool ok = !manifest.records.empty();
  const std::size_t step = std::max<std::size_t>(1, manifest.records.size() / 20);
  double worst = 0.0;
  for (std::size_t i = 0; i < manifest.records.size() && ok; i += step) {
    const auto& r = manifest.records[i];
    if (r.label.is_sentinel()) continue;
    ok = r.label.p >= 0.0 && r.label.p <= 1.0 && r.label.t >= 0.0 &&
         r.label.t <= 1.0 && r.label.z >= 0.5 && r.label.z <= 1.0;
    if (!ok) break;
    cropgeom::CropPair pair;
    pair.current_view =
        read_pgm((fs::path(run_dir) / r.current_file).string());
    pair.goal_view = read_pgm((fs::path(run_dir) / r.goal_file).string());
    pair.label = r.label;
    const double diff = cropgeom::crop_match_max_abs_diff(pair);
    worst = std::max(worst, diff);
    ok = diff <= 0.02;  // 8-bit quantization leaves ~0.008 at most
  }
  return report_check("pair-geometry", ok, "worst crop diff " + fmt_f(worst));
}

bool check_checkpoints(const std::string& run_dir) {
  bool any = false, ok = true;
  for (const auto& entry : fs::recursive_directory_iterator(run_dir)) {
    if (!entry.is_regular_file() || entry.path().extension() != ".nptz")
      continue;
    any = true;
    try {
      const auto model = diffnum::TrainableModel::load(entry.path().string());
      const fs::path tmp = entry.path().string() + ".verify.tmp";
      model.save(tmp.string());
      std::ifstream a(entry.path(), std::ios::binary);
      std::ifstream b(tmp, std::ios::binary);
      std::ostringstream sa, sb;
      sa << a.rdbuf();
      sb << b.rdbuf();
      fs::remove(tmp);
      ok = ok && sa.str() == sb.str();
    } catch (const std::exception&) {
      ok = false;
    }
  }
  return report_check("checkpoint-roundtrip", ok,
                      any ? "" : "(no checkpoints, skipped)");
}

}  // namespace

bool verify_run(const std::string& run_dir) {
  if (!fs::exists(run_dir))
    throw std::invalid_argument("verify: no such directory " + run_dir);
  bool ok = true;
  ok &= check_geometry();
  ok &= check_gradients();
  ok &= check_noise_regen(run_dir);
  ok &= check_pairs(run_dir);
  ok &= check_checkpoints(run_dir);
  return ok;
}

// ---------------------------------------------------------------- CLI wiring
int run_cli(const std::vector<std::string>& args) {
  CLI::App app{"Crop-prediction pretraining and goal navigation at desk scale"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kToolVersion);

  std::string config_dummy;
  auto add_config = [&config_dummy](CLI::App* sub) {
    sub->add_option("--config", config_dummy,
                    "Read options from a key=value file (flags win)");
  };

  GenNoiseArgs gn;
  auto* gen_noise = app.add_subcommand("gen-noise", "Generate a noise dataset");
  add_config(gen_noise);
  gen_noise->add_option("--kind", gn.kind, "perlin|fractal|shapes|all");
  gen_noise->add_option("--count", gn.count);
  gen_noise->add_option("--seed", gn.seed);
  gen_noise->add_option("--out", gn.out)->required();
  gen_noise->add_option("--width", gn.width);
  gen_noise->add_option("--height", gn.height);

  GenPairsArgs gp;
  auto* gen_pairs =
      app.add_subcommand("gen-pairs", "Sample crop pairs from a noise dataset");
  add_config(gen_pairs);
  gen_pairs->add_option("--images", gp.images)->required();
  gen_pairs->add_option("--source-kind", gp.source_kind,
                        "any|perlin|fractal|shapes");
  gen_pairs->add_option("--count", gp.count);
  gen_pairs->add_option("--nonoverlap-frac", gp.nonoverlap_frac);
  gen_pairs->add_option("--seed", gp.seed);
  gen_pairs->add_option("--out", gp.out)->required();

  TrainPtzArgs tp;
  auto* train_ptz =
      app.add_subcommand("train-ptz", "Curriculum-train the PTZ encoder");
  add_config(train_ptz);
  train_ptz->add_option("--pairs", tp.pairs)->required();
  train_ptz->add_option("--val-pairs", tp.val_pairs);
  train_ptz->add_option("--out", tp.out)->required();
  train_ptz->add_option("--seed", tp.seed);
  train_ptz->add_option("--input-side", tp.input_side);
  train_ptz->add_option("--trunk", tp.trunk);
  train_ptz->add_option("--rho", tp.rho, "non-overlap mix fraction");
  train_ptz->add_option("--batch", tp.batch);
  train_ptz->add_option("--lr", tp.lr);
  train_ptz->add_option("--val-interval", tp.val_interval);
  train_ptz->add_option("--patience", tp.patience);
  train_ptz->add_option("--phase1-max-steps", tp.phase1_max_steps);
  train_ptz->add_option("--phase2-steps", tp.phase2_steps);
  train_ptz->add_option("--val-subset", tp.val_subset);

  EvalPtzArgs ep;
  auto* eval_ptz = app.add_subcommand("eval-ptz", "Evaluate a PTZ checkpoint");
  add_config(eval_ptz);
  eval_ptz->add_option("--checkpoint", ep.checkpoint)->required();
  eval_ptz->add_option("--pairs", ep.pairs)->required();
  eval_ptz->add_option("--out", ep.out)->required();
  eval_ptz->add_option("--source", ep.source, "training-source label");
  eval_ptz->add_option("--seed", ep.seed, "record label");

  GenWorldArgs gw;
  auto* gen_world =
      app.add_subcommand("gen-world", "Generate a PTZ-world panorama");
  add_config(gen_world);
  gen_world->add_option("--seed", gw.seed);
  gen_world->add_option("--out", gw.out)->required();
  gen_world->add_option("--width", gw.spec.panorama_width);
  gen_world->add_option("--height", gw.spec.panorama_height);
  gen_world->add_option("--period-x", gw.spec.panorama_period_x);
  gen_world->add_option("--period-y", gw.spec.panorama_period_y);
  gen_world->add_option("--octaves", gw.spec.panorama_octaves);
  gen_world->add_option("--base-side", gw.spec.base_view_side);
  gen_world->add_option("--gamma", gw.spec.zoom_gamma);
  gen_world->add_option("--max-depth", gw.spec.max_depth);
  gen_world->add_option("--stride-div", gw.spec.turn_stride_divisor);
  gen_world->add_option("--budget", gw.spec.task_budget);
  gen_world->add_option("--ncc", gw.spec.ncc_threshold);

  CollectArgs co;
  auto* collect =
      app.add_subcommand("collect", "Collect random-exploration trajectories");
  add_config(collect);
  collect->add_option("--world", co.world)->required();
  collect->add_option("--n-traj", co.n_traj);
  collect->add_option("--steps", co.steps, "steps per trajectory");
  collect->add_option("--seed", co.seed);
  collect->add_option("--out", co.out)->required();

  TrainPolicyArgs tpo;
  auto* train_policy =
      app.add_subcommand("train-policy", "Train a navigation policy");
  add_config(train_policy);
  train_policy->add_option("--data", tpo.data, "interaction dirs, comma-sep")
      ->required();
  train_policy->add_option("--mode", tpo.mode, "ptz|oracle|e2e");
  train_policy->add_option("--ptz-checkpoint", tpo.ptz_checkpoint);
  train_policy->add_option("--max-subseq", tpo.max_subseq, "L");
  train_policy->add_option("--hidden", tpo.hidden);
  train_policy->add_option("--feature-dim", tpo.feature_dim);
  train_policy->add_option("--trunk", tpo.trunk);
  train_policy->add_option("--loss", tpo.loss, "ce|l1");
  train_policy->add_option("--steps", tpo.steps);
  train_policy->add_option("--batch", tpo.batch);
  train_policy->add_option("--lr", tpo.lr);
  train_policy->add_option("--seed", tpo.seed);
  train_policy->add_option("--out", tpo.out)->required();

  EvalNavArgs en;
  auto* eval_nav = app.add_subcommand("eval-nav", "Evaluate navigation");
  add_config(eval_nav);
  eval_nav->add_option("--policy", en.policy,
                       "policy checkpoint; empty for the hand controller");
  eval_nav->add_option("--ptz-checkpoint", en.ptz_checkpoint);
  eval_nav->add_option("--worlds-seed", en.worlds_seed);
  eval_nav->add_option("--n-worlds", en.n_worlds);
  eval_nav->add_option("--tasks", en.tasks, "tasks per world");
  eval_nav->add_option("--forward-steps", en.forward_steps);
  eval_nav->add_option("--seed", en.seed);
  eval_nav->add_option("--tier", en.tier, "data-tier label for the record");
  eval_nav->add_option("--out", en.out)->required();

  RenderRolloutArgs rr;
  auto* render_rollout =
      app.add_subcommand("render-rollout", "Render one rollout with overlays");
  add_config(render_rollout);
  render_rollout->add_option("--world", rr.world)->required();
  render_rollout->add_option("--policy", rr.policy);
  render_rollout->add_option("--ptz-checkpoint", rr.ptz_checkpoint);
  render_rollout->add_option("--task-seed", rr.task_seed);
  render_rollout->add_option("--out", rr.out)->required();

  ReportArgs rp;
  auto* report = app.add_subcommand("report", "Aggregate evaluation records");
  add_config(report);
  report->add_option("--in", rp.in, "run directories, comma-separated")
      ->required();
  report->add_option("--out", rp.out)->required();

  std::string verify_dir;
  auto* verify = app.add_subcommand("verify", "Run the invariant battery");
  verify->add_option("--run", verify_dir)->required();

  std::vector<std::string> effective;
  try {
    effective = apply_config_arg(args);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitUsage;
  }
  std::vector<const char*> argv;
  argv.push_back("ptznav");
  for (const auto& s : effective) argv.push_back(s.c_str());

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::fprintf(stderr, "%s\n%s", e.what(), app.help().c_str());
    return kExitUsage;
  }

  try {
    if (gen_noise->parsed()) return cmd_gen_noise(gn);
    if (gen_pairs->parsed()) return cmd_gen_pairs(gp);
    if (train_ptz->parsed()) return cmd_train_ptz(tp);
    if (eval_ptz->parsed()) return cmd_eval_ptz(ep);
    if (gen_world->parsed()) return cmd_gen_world(gw);
    if (collect->parsed()) return cmd_collect(co);
    if (train_policy->parsed()) return cmd_train_policy(tpo);
    if (eval_nav->parsed()) return cmd_eval_nav(en);
    if (render_rollout->parsed()) return cmd_render_rollout(rr);
    if (report->parsed()) return cmd_report(rp);
    if (verify->parsed()) return verify_run(verify_dir) ? kExitOk : kExitRuntime;
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitUsage;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitRuntime;
  }
  return kExitUsage;
}

}  // namespace ptznav::pipeline
