#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ptznav/cropgeom.hpp"
#include "ptznav/noisegen.hpp"

namespace ptznav::navsim {

// Cylindrical "PTZ-world": the agent pans a square window over a
// horizontally tileable panorama (turning) and zooms it (moving forward), so
// a goal view is literally a crop of the current view and ground-truth PTZ
// between any two poses is analytic.
struct WorldSpec {
  int panorama_width = 2048;
  int panorama_height = 512;
  // Low-frequency fractal: the success check's NCC must stay high at the
  // worst tolerated pose error (side/8), so the finest octave wavelength has
  // to be long against ~40px offsets.
  int panorama_period_x = 2;
  int panorama_period_y = 1;
  int panorama_octaves = 2;
  double base_view_side = 512.0;  // s0
  double zoom_gamma = 0.9;        // view side factor per forward step
  int max_depth = 12;             // K
  double turn_stride_divisor = 4.0;  // turn moves the center by side / this
  int task_budget = 50;
  double ncc_threshold = 0.8;
  std::uint64_t seed = 0;
};

enum class Action { turn_left, turn_right, forward };

std::string to_string(Action a);
Action action_from_string(const std::string& s);

struct AgentPose {
  double u = 0.0;  // horizontal view-center, panorama pixels, wraps
  int k = 0;       // depth index; view side = s0 * gamma^k
};

class World {
 public:
  explicit World(const WorldSpec& spec);
  // Injected panorama (edge cases, alternate textures); must match the
  // spec's dimensions.
  World(const WorldSpec& spec, noisegen::NoiseImage panorama);

  const WorldSpec& spec() const { return spec_; }
  const Image& panorama() const { return panorama_.image; }
  double side_at(int k) const;
  double wrap_u(double u) const;
  // Signed shortest horizontal offset b - a, in (-W/2, W/2].
  double wrapped_delta(double a, double b) const;

 private:
  WorldSpec spec_;
  noisegen::NoiseImage panorama_;
};

// Crops the square window centered at (pose.u, H/2) with horizontal wrap and
// resizes it to 128x128. Pure.
Image render(const World& world, const AgentPose& pose);

// turn_left/right shift the center by side/turn_stride_divisor; forward
// increments depth, clamped at max_depth.
AgentPose step_pose(const World& world, const AgentPose& pose, Action action);

// Analytic PTZ of the goal window inside the current window. Sentinel when
// the windows do not intersect or the zoom ratio leaves [0.5, 1].
cropgeom::PtzVector true_ptz(const World& world, const AgentPose& pose,
                             const AgentPose& goal);

// Zero-mean normalized cross-correlation; defined as 1 when either raster
// has zero variance.
double ncc(const Image& a, const Image& b);

// Success: same depth, wrapped center error <= goal side / 8, and
// ncc(current render, goal view) >= the world's threshold.
bool check_success(const World& world, const AgentPose& pose,
                   const AgentPose& goal, const Image& goal_view);

struct NavTask {
  AgentPose start;
  AgentPose goal;
  Image goal_view;
  int budget = 50;
};

// Start heading uniform over the circumference (the goal may be behind);
// goal depth = start depth + forward_steps.
NavTask sample_task(const World& world, int forward_steps, Rng& rng);

struct Trajectory {
  AgentPose start;
  std::vector<Action> actions;
  std::vector<Image> frames;  // actions.size() + 1 chained views
};

struct InteractionDataset {
  WorldSpec world;
  std::vector<Trajectory> trajectories;
};

// Random exploration: start poses uniform over (u, k in {0..K-5}), actions
// i.i.d. {forward 0.4, turn_left 0.3, turn_right 0.3}.
InteractionDataset collect_random_exploration(const World& world,
                                              int n_trajectories,
                                              int steps_per_trajectory,
                                              std::uint64_t seed);

// Replays actions from the start pose; poses[i] is the pose of frame i.
std::vector<AgentPose> replay_poses(const World& world,
                                    const Trajectory& traj);

// Directory layout: manifest.json (world spec + per-trajectory start pose),
// one subdir per trajectory with frame_%06d.pgm and actions.txt.
void write_interaction_dataset(const InteractionDataset& data,
                               const std::string& dir);
InteractionDataset read_interaction_dataset(const std::string& dir,
                                            bool load_frames = true);

void write_world(const World& world, const std::string& dir);
World read_world(const std::string& dir);
WorldSpec world_spec_from_json_file(const std::string& path);

}  // namespace ptznav::navsim
