#include "ptznav/navsim.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include "json.hpp"

namespace fs = std::filesystem;

namespace ptznav::navsim {

std::string to_string(Action a) {
  switch (a) {
    case Action::turn_left: return "turn_left";
    case Action::turn_right: return "turn_right";
    case Action::forward: return "forward";
  }
  return "?";
}

Action action_from_string(const std::string& s) {
  if (s == "turn_left") return Action::turn_left;
  if (s == "turn_right") return Action::turn_right;
  if (s == "forward") return Action::forward;
  throw std::invalid_argument("unknown action: " + s);
}

World::World(const WorldSpec& spec)
    : World(spec, noisegen::fractal(
                      spec.panorama_width, spec.panorama_height,
                      spec.panorama_period_x, spec.panorama_period_y,
                      spec.panorama_octaves, 0.5, 2.0,
                      derive_seed(spec.seed, 0, 0x90A0))) {}

World::World(const WorldSpec& spec, noisegen::NoiseImage panorama)
    : spec_(spec), panorama_(std::move(panorama)) {
  if (panorama_.image.width != spec.panorama_width ||
      panorama_.image.height != spec.panorama_height)
    throw std::invalid_argument("World: panorama does not match the spec");
  if (spec.base_view_side > spec.panorama_height)
    throw std::invalid_argument("World: base view taller than panorama");
  if (side_at(spec.max_depth) < cropgeom::kViewSide)
    throw std::invalid_argument(
        "World: deepest view smaller than the 128px output resolution");
  if (std::pow(spec.zoom_gamma, 5) < 0.5)
    throw std::invalid_argument(
        "World: gamma^5 < 0.5; five-step goals would leave the trained zoom "
        "range");
  // Solvability of default tasks: a full scan at the worst start depth plus
  // the five forwards must fit the budget.
  const double worst_stride =
      side_at(spec.max_depth - 5) / spec.turn_stride_divisor;
  const int scan_turns =
      static_cast<int>(std::ceil(spec.panorama_width / worst_stride));
  if (scan_turns + 5 > spec.task_budget)
    throw std::invalid_argument(
        "World: task budget too small for a worst-case scan (" +
        std::to_string(scan_turns) + " turns + 5 forwards)");
}

double World::side_at(int k) const {
  return spec_.base_view_side * std::pow(spec_.zoom_gamma, k);
}

double World::wrap_u(double u) const {
  const double w = spec_.panorama_width;
  double r = std::fmod(u, w);
  if (r < 0.0) r += w;
  return r;
}

double World::wrapped_delta(double a, double b) const {
  const double w = spec_.panorama_width;
  double d = std::fmod(b - a, w);
  if (d <= -w / 2.0) d += w;
  if (d > w / 2.0) d -= w;
  return d;
}

namespace {

// Bilinear sample with horizontal wrap; vertical coordinates stay inside
// because view sides never exceed the panorama height.
double sample_wrapped(const Image& img, double x, double y) {
  const int w = img.width, h = img.height;
  double xi = std::floor(x);
  double fx = x - xi;
  int ix = static_cast<int>(xi);
  int iy = static_cast<int>(std::floor(y));
  double fy = y - iy;
  if (iy < 0) {
    iy = 0;
    fy = 0.0;
  }
  if (iy >= h - 1) {
    iy = h - 2;
    fy = y - iy;
    if (fy > 1.0) fy = 1.0;
  }
  const int x0 = ((ix % w) + w) % w;
  const int x1 = (x0 + 1) % w;
  const double v00 = img.at(x0, iy);
  const double v10 = img.at(x1, iy);
  const double v01 = img.at(x0, iy + 1);
  const double v11 = img.at(x1, iy + 1);
  const double top = v00 + fx * (v10 - v00);
  const double bot = v01 + fx * (v11 - v01);
  return top + fy * (bot - top);
}

}  // namespace

Image render(const World& world, const AgentPose& pose) {
  if (pose.k < 0 || pose.k > world.spec().max_depth)
    throw std::invalid_argument("render: depth out of range");
  const double side = world.side_at(pose.k);
  const double left = pose.u - side / 2.0;
  const double top = (world.spec().panorama_height - side) / 2.0;
  const double step = (side - 1.0) / (cropgeom::kViewSide - 1.0);
  Image out(cropgeom::kViewSide, cropgeom::kViewSide);
  for (int j = 0; j < cropgeom::kViewSide; ++j) {
    const double y = top + j * step;
    for (int i = 0; i < cropgeom::kViewSide; ++i)
      out.at(i, j) = static_cast<float>(
          sample_wrapped(world.panorama(), left + i * step, y));
  }
  return out;
}

AgentPose step_pose(const World& world, const AgentPose& pose, Action action) {
  AgentPose next = pose;
  const double stride =
      world.side_at(pose.k) / world.spec().turn_stride_divisor;
  switch (action) {
    case Action::turn_left:
      next.u = world.wrap_u(pose.u - stride);
      break;
    case Action::turn_right:
      next.u = world.wrap_u(pose.u + stride);
      break;
    case Action::forward:
      next.k = std::min(pose.k + 1, world.spec().max_depth);
      break;
  }
  return next;
}

cropgeom::PtzVector true_ptz(const World& world, const AgentPose& pose,
                             const AgentPose& goal) {
  if (goal.k < pose.k) return cropgeom::PtzVector::sentinel();  // z > 1
  const double z = std::pow(world.spec().zoom_gamma, goal.k - pose.k);
  if (z < 0.5 || z > 1.0) return cropgeom::PtzVector::sentinel();
  const double sc = world.side_at(pose.k);
  const double sg = world.side_at(goal.k);
  const double delta = world.wrapped_delta(pose.u, goal.u);
  if (std::abs(delta) >= (sc + sg) / 2.0)
    return cropgeom::PtzVector::sentinel();  // zero intersection
  // Goal window box inside the current view, scaled to the 128px frame.
  const double view_scale = cropgeom::kViewSide / sc;
  const cropgeom::BBox box{(delta - sg / 2.0 + sc / 2.0) * view_scale,
                           (sc - sg) / 2.0 * view_scale,
                           cropgeom::kViewSide * z};
  return cropgeom::bbox_to_ptz(box);
}

double ncc(const Image& a, const Image& b) {
  if (a.width != b.width || a.height != b.height)
    throw std::invalid_argument("ncc: size mismatch");
  const std::size_t n = a.size();
  double ma = 0.0, mb = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    ma += a.values[i];
    mb += b.values[i];
  }
  ma /= static_cast<double>(n);
  mb /= static_cast<double>(n);
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double da = a.values[i] - ma;
    const double db = b.values[i] - mb;
    sab += da * db;
    saa += da * da;
    sbb += db * db;
  }
  if (saa == 0.0 || sbb == 0.0) return 1.0;  // documented degenerate case
  return sab / std::sqrt(saa * sbb);
}

bool check_success(const World& world, const AgentPose& pose,
                   const AgentPose& goal, const Image& goal_view) {
  if (pose.k != goal.k) return false;
  const double tolerance = world.side_at(goal.k) / 8.0;
  if (std::abs(world.wrapped_delta(pose.u, goal.u)) > tolerance) return false;
  return ncc(render(world, pose), goal_view) >= world.spec().ncc_threshold;
}

NavTask sample_task(const World& world, int forward_steps, Rng& rng) {
  if (forward_steps < 0 || forward_steps > world.spec().max_depth)
    throw std::invalid_argument("sample_task: bad forward separation");
  NavTask task;
  task.goal.k = static_cast<int>(rng.uniform_int(
      forward_steps, world.spec().max_depth));
  task.goal.u = rng.uniform(0.0, world.spec().panorama_width);
  task.start.k = task.goal.k - forward_steps;
  task.start.u = rng.uniform(0.0, world.spec().panorama_width);
  task.goal_view = render(world, task.goal);
  task.budget = world.spec().task_budget;
  return task;
}

InteractionDataset collect_random_exploration(const World& world,
                                              int n_trajectories,
                                              int steps_per_trajectory,
                                              std::uint64_t seed) {
  if (n_trajectories < 0 || steps_per_trajectory < 1)
    throw std::invalid_argument("collect: bad trajectory shape");
  InteractionDataset data;
  data.world = world.spec();
  data.trajectories.reserve(static_cast<std::size_t>(n_trajectories));
  const int k_max = std::max(0, world.spec().max_depth - 5);
  for (int t = 0; t < n_trajectories; ++t) {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(t), 0xDA7A));
    Trajectory traj;
    traj.start.u = rng.uniform(0.0, world.spec().panorama_width);
    traj.start.k = static_cast<int>(rng.uniform_int(0, k_max));
    AgentPose pose = traj.start;
    traj.frames.push_back(render(world, pose));
    traj.actions.reserve(static_cast<std::size_t>(steps_per_trajectory));
    for (int s = 0; s < steps_per_trajectory; ++s) {
      const double r = rng.uniform();
      const Action a = r < 0.4 ? Action::forward
                       : r < 0.7 ? Action::turn_left
                                 : Action::turn_right;
      pose = step_pose(world, pose, a);
      traj.actions.push_back(a);
      traj.frames.push_back(render(world, pose));
    }
    data.trajectories.push_back(std::move(traj));
  }
  return data;
}

std::vector<AgentPose> replay_poses(const World& world,
                                    const Trajectory& traj) {
  std::vector<AgentPose> poses;
  poses.reserve(traj.actions.size() + 1);
  AgentPose pose = traj.start;
  poses.push_back(pose);
  for (Action a : traj.actions) {
    pose = step_pose(world, pose, a);
    poses.push_back(pose);
  }
  return poses;
}

namespace {

nlohmann::ordered_json spec_to_json(const WorldSpec& s) {
  nlohmann::ordered_json j;
  j["panorama_width"] = s.panorama_width;
  j["panorama_height"] = s.panorama_height;
  j["panorama_period_x"] = s.panorama_period_x;
  j["panorama_period_y"] = s.panorama_period_y;
  j["panorama_octaves"] = s.panorama_octaves;
  j["base_view_side"] = s.base_view_side;
  j["zoom_gamma"] = s.zoom_gamma;
  j["max_depth"] = s.max_depth;
  j["turn_stride_divisor"] = s.turn_stride_divisor;
  j["task_budget"] = s.task_budget;
  j["ncc_threshold"] = s.ncc_threshold;
  j["seed"] = s.seed;
  return j;
}

WorldSpec spec_from_json(const nlohmann::json& j) {
  WorldSpec s;
  s.panorama_width = j.at("panorama_width");
  s.panorama_height = j.at("panorama_height");
  s.panorama_period_x = j.at("panorama_period_x");
  s.panorama_period_y = j.at("panorama_period_y");
  s.panorama_octaves = j.at("panorama_octaves");
  s.base_view_side = j.at("base_view_side");
  s.zoom_gamma = j.at("zoom_gamma");
  s.max_depth = j.at("max_depth");
  s.turn_stride_divisor = j.at("turn_stride_divisor");
  s.task_budget = j.at("task_budget");
  s.ncc_threshold = j.at("ncc_threshold");
  s.seed = j.at("seed");
  return s;
}

}  // namespace

void write_interaction_dataset(const InteractionDataset& data,
                               const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec)
    throw std::runtime_error("cannot create dataset dir " + dir + ": " +
                             ec.message());
  nlohmann::ordered_json manifest;
  manifest["world"] = spec_to_json(data.world);
  manifest["trajectory_count"] = data.trajectories.size();
  nlohmann::ordered_json trajs = nlohmann::ordered_json::array();
  char buf[64];
  for (std::size_t t = 0; t < data.trajectories.size(); ++t) {
    const Trajectory& traj = data.trajectories[t];
    std::snprintf(buf, sizeof(buf), "traj_%06zu", t);
    const fs::path tdir = fs::path(dir) / buf;
    fs::create_directories(tdir, ec);
    if (ec)
      throw std::runtime_error("cannot create " + tdir.string() + ": " +
                               ec.message());
    for (std::size_t f = 0; f < traj.frames.size(); ++f) {
      std::snprintf(buf, sizeof(buf), "frame_%06zu.pgm", f);
      write_pgm(traj.frames[f], (tdir / buf).string());
    }
    std::ofstream actions(tdir / "actions.txt", std::ios::binary);
    for (Action a : traj.actions) actions << to_string(a) << "\n";
    if (!actions)
      throw std::runtime_error("cannot write actions in " + tdir.string());

    std::snprintf(buf, sizeof(buf), "traj_%06zu", t);
    nlohmann::ordered_json tj;
    tj["dir"] = buf;
    char u[40];
    std::snprintf(u, sizeof(u), "%.17g", traj.start.u);
    tj["start_u"] = std::string(u);  // full-precision replay anchor
    tj["start_k"] = traj.start.k;
    tj["steps"] = traj.actions.size();
    trajs.push_back(tj);
  }
  manifest["trajectories"] = trajs;
  std::ofstream out(fs::path(dir) / "manifest.json", std::ios::binary);
  out << manifest.dump(2) << "\n";
  if (!out) throw std::runtime_error("cannot write dataset manifest in " + dir);
}

InteractionDataset read_interaction_dataset(const std::string& dir,
                                            bool load_frames) {
  std::ifstream in(fs::path(dir) / "manifest.json");
  if (!in)
    throw std::runtime_error("cannot read dataset manifest in " + dir);
  nlohmann::json manifest;
  in >> manifest;
  InteractionDataset data;
  data.world = spec_from_json(manifest.at("world"));
  for (const auto& tj : manifest.at("trajectories")) {
    Trajectory traj;
    traj.start.u = std::stod(tj.at("start_u").get<std::string>());
    traj.start.k = tj.at("start_k");
    const fs::path tdir = fs::path(dir) / tj.at("dir").get<std::string>();
    std::ifstream actions(tdir / "actions.txt");
    if (!actions)
      throw std::runtime_error("missing actions.txt in " + tdir.string());
    std::string line;
    while (std::getline(actions, line))
      if (!line.empty()) traj.actions.push_back(action_from_string(line));
    if (load_frames) {
      char buf[64];
      for (std::size_t f = 0; f <= traj.actions.size(); ++f) {
        std::snprintf(buf, sizeof(buf), "frame_%06zu.pgm", f);
        traj.frames.push_back(read_pgm((tdir / buf).string()));
      }
    }
    data.trajectories.push_back(std::move(traj));
  }
  return data;
}

void write_world(const World& world, const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec)
    throw std::runtime_error("cannot create world dir " + dir + ": " +
                             ec.message());
  std::ofstream out(fs::path(dir) / "world.json", std::ios::binary);
  out << spec_to_json(world.spec()).dump(2) << "\n";
  if (!out) throw std::runtime_error("cannot write world.json in " + dir);
  write_pgm(world.panorama(), (fs::path(dir) / "panorama.pgm").string());
}

WorldSpec world_spec_from_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read world spec: " + path);
  nlohmann::json j;
  in >> j;
  return spec_from_json(j);
}

World read_world(const std::string& dir) {
  return World(
      world_spec_from_json_file((fs::path(dir) / "world.json").string()));
}

}  // namespace ptznav::navsim
