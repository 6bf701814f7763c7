#include "ptznav/navpolicy.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

#include "json.hpp"

namespace ptznav::navpolicy {

using diffnum::Graph;
using diffnum::Tensor;
using diffnum::TrainableModel;

std::string to_string(EncoderMode mode) {
  switch (mode) {
    case EncoderMode::frozen_ptz: return "ptz";
    case EncoderMode::oracle_ptz: return "oracle";
    case EncoderMode::end_to_end: return "e2e";
  }
  return "?";
}

EncoderMode encoder_mode_from_string(const std::string& s) {
  if (s == "ptz" || s == "frozen_ptz") return EncoderMode::frozen_ptz;
  if (s == "oracle" || s == "oracle_ptz") return EncoderMode::oracle_ptz;
  if (s == "e2e" || s == "end_to_end") return EncoderMode::end_to_end;
  throw std::invalid_argument("unknown encoder mode: " + s);
}

navsim::Action ActionDist::argmax() const {
  int best = 0;
  for (int i = 1; i < 3; ++i)
    if (probs[static_cast<std::size_t>(i)] >
        probs[static_cast<std::size_t>(best)])
      best = i;
  return static_cast<navsim::Action>(best);
}

namespace {

std::string make_arch(const PolicyConfig& c) {
  nlohmann::ordered_json j;
  j["type"] = "nav_policy";
  j["mode"] = to_string(c.mode);
  j["hidden"] = c.hidden;
  j["max_subseq"] = c.max_subseq;
  j["feature_dim"] = c.feature_dim;
  j["input_side"] = c.input_side;
  j["trunk"] = c.trunk;
  j["loss"] = c.loss == PolicyConfig::Loss::cross_entropy ? "ce" : "l1";
  return j.dump();
}

PolicyConfig parse_arch(const std::string& arch) {
  const nlohmann::json j = nlohmann::json::parse(arch);
  if (j.at("type") != "nav_policy")
    throw std::invalid_argument("checkpoint is not a nav_policy");
  PolicyConfig c;
  c.mode = encoder_mode_from_string(j.at("mode"));
  c.hidden = j.at("hidden");
  c.max_subseq = j.at("max_subseq");
  c.feature_dim = j.at("feature_dim");
  c.input_side = j.at("input_side");
  c.trunk = j.at("trunk").get<std::vector<int>>();
  c.loss = j.at("loss") == "l1" ? PolicyConfig::Loss::l1
                                : PolicyConfig::Loss::cross_entropy;
  return c;
}

diffnum::TrunkSpec trunk_spec_for(const PolicyConfig& c) {
  diffnum::TrunkSpec spec;
  spec.in_channels = 2;
  spec.channels = c.trunk;
  return spec;
}

Tensor stack_pair(const Image& current, const Image& goal, int side) {
  const Image cur = cropgeom::resize_bilinear(current, side);
  const Image gl = cropgeom::resize_bilinear(goal, side);
  Tensor t({1, 2, side, side});
  const std::size_t plane = static_cast<std::size_t>(side) * side;
  for (std::size_t i = 0; i < plane; ++i) {
    t.data[i] = cur.values[i];
    t.data[plane + i] = gl.values[i];
  }
  return t;
}

Tensor ptz_tensor(const cropgeom::PtzVector& v) {
  return Tensor({1, 3}, {v.p, v.t, v.z});
}

}  // namespace

Policy::Policy(const PolicyConfig& config, std::uint64_t seed)
    : config_(config),
      trunk_spec_(trunk_spec_for(config)),
      model_(make_arch(config)),
      h_({1, config.hidden}),
      c_({1, config.hidden}) {
  if (config.hidden < 1 || config.max_subseq < 1)
    throw std::invalid_argument("Policy: bad config");
  Rng rng(derive_seed(seed, 0, 0x9011C4));
  if (config_.mode == EncoderMode::end_to_end) {
    add_trunk_params(model_, "enc.", trunk_spec_, rng);
    int side = config_.input_side;
    for (std::size_t i = 0; i < config_.trunk.size(); ++i) side = (side + 1) / 2;
    add_affine_params(model_, "enc.head",
                      config_.trunk.back() * side * side, config_.feature_dim,
                      rng);
  }
  add_lstm_params(model_, "lstm", state_dim(), config_.hidden, rng);
  add_affine_params(model_, "head", config_.hidden, 3, rng);
}

Policy::Policy(TrainableModel model)
    : config_(parse_arch(model.arch())),
      trunk_spec_(trunk_spec_for(config_)),
      model_(std::move(model)),
      h_({1, config_.hidden}),
      c_({1, config_.hidden}) {}

Policy Policy::load(const std::string& path) {
  return Policy(TrainableModel::load(path));
}

int Policy::state_dim() const {
  return config_.mode == EncoderMode::end_to_end ? config_.feature_dim : 3;
}

Graph::NodeId Policy::encode_pixels(Graph& g, Graph::NodeId in) {
  if (config_.mode != EncoderMode::end_to_end)
    throw std::invalid_argument(
        "encode_pixels: policy has no trainable encoder in this mode");
  // Same trunk + flattened-grid head shape as the PTZ encoder, so the
  // baseline is not handicapped by a pooling bottleneck.
  Graph::NodeId x = trunk_forward(g, model_, "enc.", trunk_spec_, in);
  x = g.flatten2(x);
  x = affine_forward(g, model_, "enc.head", x);
  return g.relu(x);
}

Policy::StepNodes Policy::policy_step(Graph& g, Graph::NodeId x,
                                      Graph::NodeId h, Graph::NodeId c) {
  const auto [h2, c2] = lstm_forward(g, model_, "lstm", x, h, c,
                                     config_.hidden);
  const Graph::NodeId logits =
      affine_forward(g, model_, "head", g.relu(h2));
  return {h2, c2, logits};
}

void Policy::reset_state() {
  h_.fill(0.0);
  c_.fill(0.0);
}

ActionDist Policy::act(const Tensor& state) {
  if (state.rank() != 2 || state.dim(0) != 1 || state.dim(1) != state_dim())
    throw std::invalid_argument("act: expected state [1," +
                                std::to_string(state_dim()) + "]");
  Graph g;
  const Graph::NodeId x = g.input(state);
  const Graph::NodeId h = g.input(h_);
  const Graph::NodeId c = g.input(c_);
  const StepNodes step = policy_step(g, x, h, c);
  h_ = g.value(step.h);
  c_ = g.value(step.c);
  const Tensor probs = diffnum::softmax_rows(g.value(step.logits));
  ActionDist dist;
  for (int i = 0; i < 3; ++i) dist.probs[static_cast<std::size_t>(i)] =
      probs.data[static_cast<std::size_t>(i)];
  return dist;
}

StateEncoder StateEncoder::frozen(ptzmodel::PtzEncoder* encoder) {
  if (!encoder)
    throw std::invalid_argument("StateEncoder: missing frozen encoder");
  StateEncoder s;
  s.mode_ = EncoderMode::frozen_ptz;
  s.frozen_ = encoder;
  return s;
}

StateEncoder StateEncoder::oracle(const navsim::World* world) {
  if (!world) throw std::invalid_argument("StateEncoder: missing world");
  StateEncoder s;
  s.mode_ = EncoderMode::oracle_ptz;
  s.world_ = world;
  return s;
}

StateEncoder StateEncoder::pixels(Policy* policy) {
  if (!policy || policy->config().mode != EncoderMode::end_to_end)
    throw std::invalid_argument(
        "StateEncoder: pixel mode needs an end_to_end policy");
  StateEncoder s;
  s.mode_ = EncoderMode::end_to_end;
  s.policy_ = policy;
  return s;
}

int StateEncoder::dim() const {
  return mode_ == EncoderMode::end_to_end ? policy_->config().feature_dim : 3;
}

Tensor StateEncoder::encode(const Image& current_view, const Image& goal_view,
                            const navsim::AgentPose* pose,
                            const navsim::AgentPose* goal_pose) const {
  switch (mode_) {
    case EncoderMode::frozen_ptz:
      return ptz_tensor(frozen_->predict(current_view, goal_view));
    case EncoderMode::oracle_ptz: {
      if (!pose || !goal_pose)
        throw std::invalid_argument("encode: oracle mode needs both poses");
      return ptz_tensor(navsim::true_ptz(*world_, *pose, *goal_pose));
    }
    case EncoderMode::end_to_end: {
      Graph g;
      const Graph::NodeId in = g.input(
          stack_pair(current_view, goal_view, policy_->config().input_side));
      return g.value(policy_->encode_pixels(g, in));
    }
  }
  throw std::invalid_argument("encode: bad mode");
}

navsim::Action oracle_controller(const cropgeom::PtzVector& state,
                                 double dead_band_px) {
  if (state.is_sentinel()) return navsim::Action::turn_right;  // scan
  const double center = 128.0 * state.p + 64.0 * state.z;
  if (center < 64.0 - dead_band_px) return navsim::Action::turn_left;
  if (center > 64.0 + dead_band_px) return navsim::Action::turn_right;
  return navsim::Action::forward;
}

std::size_t PolicyDataset::total_steps() const {
  std::size_t n = 0;
  for (const auto& a : actions) n += a.size();
  return n;
}

std::size_t PolicyDataset::frame_count(std::size_t traj) const {
  return actions[traj].size() + 1;
}

const std::uint8_t* PolicyDataset::frame(std::size_t traj,
                                         std::size_t idx) const {
  const std::size_t plane = static_cast<std::size_t>(side) * side;
  return frames[traj].data() + idx * plane;
}

PolicyDataset prepare_policy_dataset(const navsim::InteractionDataset& data,
                                     const navsim::World& world, int side) {
  PolicyDataset out;
  out.side = side;
  const std::size_t plane = static_cast<std::size_t>(side) * side;
  for (const auto& traj : data.trajectories) {
    std::vector<std::uint8_t> planes;
    planes.reserve(traj.frames.size() * plane);
    for (const Image& f : traj.frames) {
      const Image small = cropgeom::resize_bilinear(f, side);
      for (float v : small.values)
        planes.push_back(
            static_cast<std::uint8_t>(std::nearbyint(v * 255.0f)));
    }
    out.frames.push_back(std::move(planes));
    std::vector<int> acts;
    acts.reserve(traj.actions.size());
    for (navsim::Action a : traj.actions) acts.push_back(static_cast<int>(a));
    out.actions.push_back(std::move(acts));
    out.poses.push_back(navsim::replay_poses(world, traj));
  }
  return out;
}

namespace {

Tensor frames_to_tensor(const PolicyDataset& data, std::size_t traj,
                        const std::vector<std::size_t>& frame_ids,
                        std::size_t goal_id) {
  const int side = data.side;
  const std::size_t plane = static_cast<std::size_t>(side) * side;
  Tensor t({static_cast<int>(frame_ids.size()), 2, side, side});
  double* out = t.ptr();
  const std::uint8_t* goal = data.frame(traj, goal_id);
  for (std::size_t b = 0; b < frame_ids.size(); ++b) {
    const std::uint8_t* cur = data.frame(traj, frame_ids[b]);
    for (std::size_t i = 0; i < plane; ++i) *out++ = cur[i] / 255.0;
    for (std::size_t i = 0; i < plane; ++i) *out++ = goal[i] / 255.0;
  }
  return t;
}

}  // namespace

std::vector<PolicyTrainRow> train_policy(Policy& policy,
                                         const PolicyDataset& data,
                                         ptzmodel::PtzEncoder* frozen,
                                         const navsim::World* world,
                                         const PolicyTrainConfig& cfg) {
  if (data.actions.empty() || data.total_steps() == 0)
    throw std::invalid_argument("train_policy: empty interaction dataset");
  const EncoderMode mode = policy.config().mode;
  if (mode == EncoderMode::frozen_ptz && !frozen)
    throw std::invalid_argument("train_policy: frozen mode needs a PTZ encoder");
  if (mode == EncoderMode::oracle_ptz && !world)
    throw std::invalid_argument("train_policy: oracle mode needs the world");
  if (cfg.batch < 1 || cfg.steps < 1)
    throw std::invalid_argument("train_policy: bad config");

  const int L = policy.config().max_subseq;
  const int hidden = policy.config().hidden;
  const diffnum::OptimConfig opt{diffnum::OptimConfig::Algo::adam, cfg.lr,
                                 0.9, 0.999, 1e-8};
  Rng rng(derive_seed(cfg.seed, 3, 0x90110));
  std::vector<PolicyTrainRow> log;
  log.reserve(static_cast<std::size_t>(cfg.steps));

  for (int step = 1; step <= cfg.steps; ++step) {
    Graph g;
    std::vector<Graph::NodeId> step_losses;
    int total_steps_in_batch = 0;

    for (int b = 0; b < cfg.batch; ++b) {
      const std::size_t traj = rng.below(data.actions.size());
      const int t_len = static_cast<int>(data.actions[traj].size());
      const int len =
          1 + static_cast<int>(rng.below(
                  static_cast<std::uint64_t>(std::min(L, t_len))));
      const int t0 =
          static_cast<int>(rng.uniform_int(0, t_len - len));
      const std::size_t goal_id = static_cast<std::size_t>(t0 + len);

      // Hindsight goal: the final observation of the subsequence.
      std::vector<std::size_t> frame_ids(static_cast<std::size_t>(len));
      for (int i = 0; i < len; ++i)
        frame_ids[static_cast<std::size_t>(i)] =
            static_cast<std::size_t>(t0 + i);

      // Per-step state inputs.
      std::vector<Graph::NodeId> states;
      states.reserve(static_cast<std::size_t>(len));
      if (mode == EncoderMode::frozen_ptz) {
        const Tensor batch = frames_to_tensor(data, traj, frame_ids, goal_id);
        const Tensor enc = frozen->predict_batch(batch);  // no gradients
        for (int i = 0; i < len; ++i)
          states.push_back(g.input(
              Tensor({1, 3}, {enc.data[static_cast<std::size_t>(i) * 3],
                              enc.data[static_cast<std::size_t>(i) * 3 + 1],
                              enc.data[static_cast<std::size_t>(i) * 3 + 2]})));
      } else if (mode == EncoderMode::oracle_ptz) {
        for (int i = 0; i < len; ++i) {
          const auto s = navsim::true_ptz(*world, data.poses[traj][frame_ids[
                                              static_cast<std::size_t>(i)]],
                                          data.poses[traj][goal_id]);
          states.push_back(g.input(ptz_tensor(s)));
        }
      } else {
        const Tensor batch = frames_to_tensor(data, traj, frame_ids, goal_id);
        const std::size_t ex =
            static_cast<std::size_t>(2) * data.side * data.side;
        for (int i = 0; i < len; ++i) {
          Tensor one({1, 2, data.side, data.side});
          std::copy_n(batch.ptr() + static_cast<std::size_t>(i) * ex, ex,
                      one.ptr());
          states.push_back(policy.encode_pixels(g, g.input(std::move(one))));
        }
      }

      // Recurrent pass, state reset at subsequence start.
      Graph::NodeId h = g.input(Tensor({1, hidden}));
      Graph::NodeId c = g.input(Tensor({1, hidden}));
      for (int i = 0; i < len; ++i) {
        const Policy::StepNodes sn = policy.policy_step(g, states[
                                          static_cast<std::size_t>(i)], h, c);
        h = sn.h;
        c = sn.c;
        const int label =
            data.actions[traj][frame_ids[static_cast<std::size_t>(i)]];
        if (policy.config().loss == PolicyConfig::Loss::cross_entropy) {
          step_losses.push_back(g.softmax_ce_loss(sn.logits, {label}));
        } else {
          Tensor onehot({1, 3});
          onehot.data[static_cast<std::size_t>(label)] = 1.0;
          step_losses.push_back(g.mae_loss(g.softmax1(sn.logits), onehot));
        }
        ++total_steps_in_batch;
      }
    }

    Graph::NodeId total = step_losses[0];
    for (std::size_t i = 1; i < step_losses.size(); ++i)
      total = g.add(total, step_losses[i]);
    const Graph::NodeId loss = g.scale(total, 1.0 / total_steps_in_batch);
    const double loss_value = g.scalar(loss);
    if (!std::isfinite(loss_value))
      throw std::runtime_error("train_policy: non-finite loss");
    policy.model().zero_grad();
    g.backward(loss);
    optimizer_step(policy.model(), opt);
    log.push_back({step, loss_value});
  }
  return log;
}

void write_policy_log(const std::vector<PolicyTrainRow>& log,
                      const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write policy log: " + path);
  out << "step,loss\n";
  char buf[64];
  for (const auto& r : log) {
    std::snprintf(buf, sizeof(buf), "%ld,%.9g\n", r.step, r.loss);
    out << buf;
  }
}

PolicyAgent::PolicyAgent(Policy* policy, StateEncoder encoder)
    : policy_(policy), encoder_(std::move(encoder)) {
  if (!policy_) throw std::invalid_argument("PolicyAgent: null policy");
}

void PolicyAgent::reset() { policy_->reset_state(); }

navsim::Action PolicyAgent::act(const Image& view, const Image& goal_view,
                                const navsim::AgentPose& pose,
                                const navsim::AgentPose& goal_pose) {
  const Tensor state = encoder_.encode(view, goal_view, &pose, &goal_pose);
  return policy_->act(state).argmax();
}

ControllerAgent::ControllerAgent(StateEncoder encoder, double dead_band_px)
    : encoder_(std::move(encoder)), dead_band_(dead_band_px) {
  if (encoder_.dim() != 3)
    throw std::invalid_argument(
        "ControllerAgent: controller consumes 3-dim PTZ states");
}

navsim::Action ControllerAgent::act(const Image& view, const Image& goal_view,
                                    const navsim::AgentPose& pose,
                                    const navsim::AgentPose& goal_pose) {
  const Tensor s = encoder_.encode(view, goal_view, &pose, &goal_pose);
  return oracle_controller({s.data[0], s.data[1], s.data[2]}, dead_band_);
}

RolloutResult rollout(const navsim::World& world, Agent& agent,
                      const navsim::NavTask& task) {
  RolloutResult result;
  agent.reset();
  navsim::AgentPose pose = task.start;
  result.poses.push_back(pose);
  if (navsim::check_success(world, pose, task.goal, task.goal_view)) {
    result.success = true;
    return result;
  }
  for (int step = 0; step < task.budget; ++step) {
    const Image view = navsim::render(world, pose);
    const navsim::Action a = agent.act(view, task.goal_view, pose, task.goal);
    pose = navsim::step_pose(world, pose, a);
    result.actions.push_back(a);
    result.poses.push_back(pose);
    ++result.steps_used;
    if (navsim::check_success(world, pose, task.goal, task.goal_view)) {
      result.success = true;
      break;
    }
  }
  return result;
}

double eval_success_rate(const std::vector<const navsim::World*>& worlds,
                         const AgentFactory& make_agent, int tasks_per_world,
                         std::uint64_t task_seed, int forward_steps,
                         double* mean_steps_out) {
  if (worlds.empty() || tasks_per_world < 1)
    throw std::invalid_argument("eval_success_rate: nothing to evaluate");
  std::size_t successes = 0;
  double steps_total = 0.0;
  for (std::size_t w = 0; w < worlds.size(); ++w) {
    const std::unique_ptr<Agent> agent = make_agent(*worlds[w]);
    Rng rng(derive_seed(task_seed, w, 0x7A5C5));
    for (int t = 0; t < tasks_per_world; ++t) {
      const navsim::NavTask task =
          navsim::sample_task(*worlds[w], forward_steps, rng);
      const RolloutResult r = rollout(*worlds[w], *agent, task);
      successes += r.success ? 1 : 0;
      steps_total += r.steps_used;
    }
  }
  const double n = static_cast<double>(worlds.size()) * tasks_per_world;
  if (mean_steps_out) *mean_steps_out = steps_total / n;
  return static_cast<double>(successes) / n;
}

}  // namespace ptznav::navpolicy
