#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "ptznav/navsim.hpp"
#include "ptznav/ptzmodel.hpp"

namespace ptznav::navpolicy {

enum class EncoderMode { frozen_ptz, oracle_ptz, end_to_end };

std::string to_string(EncoderMode mode);
EncoderMode encoder_mode_from_string(const std::string& s);

struct PolicyConfig {
  EncoderMode mode = EncoderMode::frozen_ptz;
  int hidden = 64;       // recurrent width; scaled-down desk default
  int max_subseq = 1;    // L: subsequence cap for training
  int feature_dim = 16;  // end_to_end encoder output width
  int input_side = 64;   // end_to_end encoder input resolution
  std::vector<int> trunk{16, 32, 64};  // end_to_end encoder conv trunk
  enum class Loss { cross_entropy, l1 };
  Loss loss = Loss::cross_entropy;
};

// Probabilities over {turn_left, turn_right, forward}; order matches the
// Action enum.
struct ActionDist {
  std::array<double, 3> probs{};
  navsim::Action argmax() const;
};

// Recurrent policy head (LSTM -> ReLU -> affine -> 3 logits), optionally
// bundled with a jointly trained pixel encoder in end_to_end mode. In
// frozen_ptz mode the PTZ encoder lives outside this model entirely, so
// policy training cannot touch its weights.
class Policy {
 public:
  Policy(const PolicyConfig& config, std::uint64_t seed);
  explicit Policy(diffnum::TrainableModel model);

  const PolicyConfig& config() const { return config_; }
  diffnum::TrainableModel& model() { return model_; }
  int state_dim() const;

  // Trainable pixel encoder (end_to_end only): [N,2,S,S] -> [N,feature_dim].
  diffnum::Graph::NodeId encode_pixels(diffnum::Graph& g,
                                       diffnum::Graph::NodeId in);

  struct StepNodes {
    diffnum::Graph::NodeId h, c, logits;
  };
  StepNodes policy_step(diffnum::Graph& g, diffnum::Graph::NodeId x,
                        diffnum::Graph::NodeId h, diffnum::Graph::NodeId c);

  // Stateful single-step inference; state is carried until reset_state().
  void reset_state();
  ActionDist act(const diffnum::Tensor& state);

  void save(const std::string& path) const { model_.save(path); }
  static Policy load(const std::string& path);

 private:
  PolicyConfig config_;
  diffnum::TrunkSpec trunk_spec_;
  diffnum::TrainableModel model_;
  diffnum::Tensor h_, c_;
};

// State construction for one (current, goal) observation pair. Oracle mode
// needs world and poses; frozen mode needs 128x128 views; pixel mode runs
// the policy's own encoder without gradients.
class StateEncoder {
 public:
  static StateEncoder frozen(ptzmodel::PtzEncoder* encoder);
  static StateEncoder oracle(const navsim::World* world);
  static StateEncoder pixels(Policy* policy);

  EncoderMode mode() const { return mode_; }
  int dim() const;
  diffnum::Tensor encode(const Image& current_view, const Image& goal_view,
                         const navsim::AgentPose* pose = nullptr,
                         const navsim::AgentPose* goal_pose = nullptr) const;

 private:
  EncoderMode mode_ = EncoderMode::oracle_ptz;
  ptzmodel::PtzEncoder* frozen_ = nullptr;
  const navsim::World* world_ = nullptr;
  Policy* policy_ = nullptr;
};

// Hand-coded controller over PTZ states: scan (turn_right) on the sentinel,
// otherwise steer the goal-box center c = 128p + 64z into the dead band
// around the view center and move forward. The dead band must be at least
// half the 32-px turn stride or the controller limit-cycles around center.
navsim::Action oracle_controller(const cropgeom::PtzVector& state,
                                 double dead_band_px = 16.0);

// Training data with frames pre-resized to the encoder input resolution.
struct PolicyDataset {
  int side = 64;
  std::vector<std::vector<std::uint8_t>> frames;  // traj -> frame planes
  std::vector<std::vector<int>> actions;          // traj -> action indices
  std::vector<std::vector<navsim::AgentPose>> poses;  // traj -> per-frame

  std::size_t total_steps() const;
  std::size_t frame_count(std::size_t traj) const;
  const std::uint8_t* frame(std::size_t traj, std::size_t idx) const;
};

PolicyDataset prepare_policy_dataset(const navsim::InteractionDataset& data,
                                     const navsim::World& world, int side);

struct PolicyTrainConfig {
  int steps = 800;
  int batch = 16;
  double lr = 1e-3;
  std::uint64_t seed = 0;
};

struct PolicyTrainRow {
  long step = 0;
  double loss = 0.0;
};

// Inverse-model training on hindsight-relabeled subsequences: length uniform
// in 1..L, goal = final observation, recurrent state reset per subsequence;
// loss averaged over every step in the batch.
std::vector<PolicyTrainRow> train_policy(Policy& policy,
                                         const PolicyDataset& data,
                                         ptzmodel::PtzEncoder* frozen,
                                         const navsim::World* world,
                                         const PolicyTrainConfig& cfg);

void write_policy_log(const std::vector<PolicyTrainRow>& log,
                      const std::string& path);

class Agent {
 public:
  virtual ~Agent() = default;
  virtual void reset() {}
  virtual navsim::Action act(const Image& view, const Image& goal_view,
                             const navsim::AgentPose& pose,
                             const navsim::AgentPose& goal_pose) = 0;
};

class PolicyAgent : public Agent {
 public:
  PolicyAgent(Policy* policy, StateEncoder encoder);
  void reset() override;
  navsim::Action act(const Image& view, const Image& goal_view,
                     const navsim::AgentPose& pose,
                     const navsim::AgentPose& goal_pose) override;

 private:
  Policy* policy_;
  StateEncoder encoder_;
};

class ControllerAgent : public Agent {
 public:
  explicit ControllerAgent(StateEncoder encoder, double dead_band_px = 16.0);
  navsim::Action act(const Image& view, const Image& goal_view,
                     const navsim::AgentPose& pose,
                     const navsim::AgentPose& goal_pose) override;

 private:
  StateEncoder encoder_;
  double dead_band_;
};

struct RolloutResult {
  bool success = false;
  int steps_used = 0;
  std::vector<navsim::AgentPose> poses;    // includes the start pose
  std::vector<navsim::Action> actions;
};

// Greedy autoregressive rollout; success is checked at the start pose and
// after every step, terminating at success or budget exhaustion.
RolloutResult rollout(const navsim::World& world, Agent& agent,
                      const navsim::NavTask& task);

// Mean success over `tasks_per_world` sampled tasks in each world. The
// factory is called once per world (oracle state encoders bind a world).
using AgentFactory =
    std::function<std::unique_ptr<Agent>(const navsim::World&)>;
double eval_success_rate(const std::vector<const navsim::World*>& worlds,
                         const AgentFactory& make_agent, int tasks_per_world,
                         std::uint64_t task_seed, int forward_steps = 5,
                         double* mean_steps_out = nullptr);

}  // namespace ptznav::navpolicy
