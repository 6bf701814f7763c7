// Acceptance suite: prints one PASS/FAIL line per criterion (A1..A9) and
// exits nonzero if any fail. Heavier criteria train real models; expect a
// multi-minute run. `acceptance --only A4` runs a single criterion.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "ptznav/navpolicy.hpp"
#include "ptznav/navsim.hpp"
#include "ptznav/noisegen.hpp"
#include "ptznav/pipeline.hpp"
#include "ptznav/ptzmodel.hpp"
#include "test_util.hpp"

using namespace ptznav;
namespace fs = std::filesystem;

namespace {

// ---- desk-scale experiment shape -----------------------------------------
constexpr int kPtzImages = 2000;        // fractal source images (A4/A5)
constexpr int kPtzPairs = 20000;        // crop pairs sampled from them
constexpr int kPtzSeeds = 3;
constexpr int kNavSeeds = 3;
constexpr int kTierSmall = 2000;        // interaction steps, small tier
constexpr int kTierLarge = 30000;       // interaction steps, largest tier
constexpr int kStepsPerTraj = 20;
constexpr int kEvalWorlds = 5;
constexpr int kTasksPerWorld = 30;

ptzmodel::CurriculumConfig a4_curriculum(std::uint64_t seed) {
  ptzmodel::CurriculumConfig cfg;
  cfg.nonoverlap_mix = 1.0 / 3.0;
  cfg.batch_size = 24;
  cfg.lr = 1e-3;
  cfg.val_interval = 100;
  cfg.patience = 3;
  cfg.phase1_max_steps = 1200;
  cfg.phase2_steps = 600;
  cfg.val_subset = 256;
  cfg.seed = seed;
  return cfg;
}

navpolicy::PolicyTrainConfig a7_train(std::uint64_t seed) {
  navpolicy::PolicyTrainConfig cfg;
  cfg.steps = 800;
  cfg.batch = 16;
  cfg.lr = 1e-3;
  cfg.seed = seed;
  return cfg;
}

// ---------------------------------------------------------------------------

struct Timer {
  std::chrono::steady_clock::time_point start =
      std::chrono::steady_clock::now();
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                         start)
        .count();
  }
};

bool verdict(const char* name, bool ok, const std::string& detail,
             double secs) {
  std::printf("[%s] %s %s (%.1fs)\n", name, ok ? "PASS" : "FAIL",
              detail.c_str(), secs);
  std::fflush(stdout);
  return ok;
}

std::string fmt(double v, int digits = 4) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
  return buf;
}

// Shared fixture: the A4 pair corpus and trained encoders feed A5 and A7.
struct PtzTrainingContext {
  ptzmodel::PairSet train, val, test;
  std::vector<ptzmodel::PtzEncoder> curriculum;      // one per seed
  std::vector<ptzmodel::PtzEvalReport> curriculum_eval;
  std::vector<ptzmodel::PtzEvalReport> untrained_eval;
  std::vector<ptzmodel::PtzEvalReport> overlap_only_eval;
  bool trained = false;
};

PtzTrainingContext& ptz_context() {
  static PtzTrainingContext ctx;
  return ctx;
}

void build_pair_corpus(PtzTrainingContext& ctx) {
  if (ctx.train.size() > 0) return;
  // Fractal sources drawn from the periods {2,4,8} x octaves {1..5} grid;
  // pairs are sampled image by image so only one source stays in memory.
  const std::uint64_t seed = 20240801;
  static const int periods[3] = {2, 4, 8};
  ctx.train.side = ctx.val.side = ctx.test.side = 64;
  const int val_from = kPtzImages * 9 / 10;     // unseen-image split
  const int test_from = kPtzImages * 19 / 20;
  for (int img = 0; img < kPtzImages; ++img) {
    Rng prng(derive_seed(seed, static_cast<std::uint64_t>(img), 1));
    const int period = periods[prng.below(3)];
    const int octaves = static_cast<int>(prng.uniform_int(1, 5));
    const Image src =
        noisegen::fractal(256, 256, period, period, octaves, 0.5, 2.0,
                          derive_seed(seed, static_cast<std::uint64_t>(img), 2))
            .image;
    ptzmodel::PairSet& sink = img >= test_from ? ctx.test
                              : img >= val_from ? ctx.val
                                                : ctx.train;
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(img), 3));
    const int per_image = kPtzPairs / kPtzImages;
    for (int p = 0; p < per_image; ++p) {
      // 2:1 overlap to non-overlap, matching the rho=1/3 training mix.
      if (p % 3 == 2)
        sink.append(cropgeom::sample_nonoverlap_pair(src, img, rng));
      else
        sink.append(cropgeom::sample_overlap_pair(src, img, rng));
    }
  }
}

void run_ptz_trainings(PtzTrainingContext& ctx) {
  if (ctx.trained) return;
  build_pair_corpus(ctx);
  for (int seed = 0; seed < kPtzSeeds; ++seed) {
    ptzmodel::PtzEncoderConfig cfg;  // spec defaults: 64px, [16,32,64]
    ptzmodel::PtzEncoder untrained(cfg, static_cast<std::uint64_t>(seed));
    ctx.untrained_eval.push_back(ptzmodel::eval_encoder(untrained, ctx.test));

    ptzmodel::PtzEncoder enc(cfg, static_cast<std::uint64_t>(seed));
    ptzmodel::train_curriculum(enc, ctx.train, ctx.val,
                               a4_curriculum(static_cast<std::uint64_t>(seed)));
    ctx.curriculum_eval.push_back(ptzmodel::eval_encoder(enc, ctx.test));
    ctx.curriculum.push_back(std::move(enc));

    ptzmodel::PtzEncoder ablation(cfg, static_cast<std::uint64_t>(seed));
    auto overlap_only = a4_curriculum(static_cast<std::uint64_t>(seed));
    overlap_only.nonoverlap_mix = 0.0;
    ptzmodel::train_curriculum(ablation, ctx.train, ctx.val, overlap_only);
    ctx.overlap_only_eval.push_back(ptzmodel::eval_encoder(ablation, ctx.test));
  }
  ctx.trained = true;
}

double mean_of(const std::vector<double>& xs) {
  double m = 0.0;
  for (double x : xs) m += x;
  return xs.empty() ? 0.0 : m / static_cast<double>(xs.size());
}

// ------------------------------------------------------------------ A1 ----
bool criterion_a1() {
  Timer timer;
  Rng rng(11);
  double max_err = 0.0;
  for (int i = 0; i < 100000; ++i) {
    const cropgeom::PtzVector v{rng.uniform(), rng.uniform(),
                                rng.uniform(0.5, 1.0)};
    const auto r = cropgeom::bbox_to_ptz(cropgeom::ptz_to_bbox(v));
    max_err = std::max({max_err, std::abs(r.p - v.p), std::abs(r.t - v.t),
                        std::abs(r.z - v.z)});
  }
  double max_iou_err = 0.0;
  // Box pairs from random PTZ vectors (the geometry this system produces);
  // their >= 64px sides keep the 1-px oracle's quantization noise inside
  // the 2e-2 budget.
  for (int i = 0; i < 1000; ++i) {
    const cropgeom::BBox a = cropgeom::ptz_to_bbox(
        {rng.uniform(), rng.uniform(), rng.uniform(0.5, 1.0)});
    const cropgeom::BBox b = cropgeom::ptz_to_bbox(
        {rng.uniform(), rng.uniform(), rng.uniform(0.5, 1.0)});
    max_iou_err = std::max(
        max_iou_err,
        std::abs(cropgeom::iou(a, b) - testutil::iou_raster_oracle(a, b)));
  }
  const double secs = timer.seconds();
  const bool ok = max_err <= 1e-9 && max_iou_err <= 2e-2 && secs < 5.0;
  return verdict("A1", ok,
                 "roundtrip err " + fmt(max_err, 12) + ", iou-vs-raster err " +
                     fmt(max_iou_err),
                 secs);
}

// ------------------------------------------------------------------ A2 ----
bool criterion_a2() {
  Timer timer;
  std::vector<Image> sources;
  for (int i = 0; i < 8; ++i)
    sources.push_back(
        noisegen::fractal(256, 256, 4, 4, 3, 0.5, 2.0, 900 + i).image);
  Rng rng(22);
  int bad_overlap = 0, bad_nonoverlap = 0;
  for (int i = 0; i < 1000; ++i) {
    const auto pair = cropgeom::sample_overlap_pair(
        sources[i % sources.size()], i % sources.size(), rng);
    if (cropgeom::crop_match_max_abs_diff(pair) != 0.0) ++bad_overlap;
  }
  for (int i = 0; i < 1000; ++i) {
    const auto pair = cropgeom::sample_nonoverlap_pair(
        sources[i % sources.size()], i % sources.size(), rng);
    if (!pair.label.is_sentinel() ||
        cropgeom::iou(pair.current_in_source, pair.goal_in_source) != 0.0)
      ++bad_nonoverlap;
  }
  const double secs = timer.seconds();
  const bool ok = bad_overlap == 0 && bad_nonoverlap == 0 && secs < 30.0;
  return verdict("A2", ok,
                 std::to_string(1000 - bad_overlap) +
                     "/1000 exact crop matches, " +
                     std::to_string(1000 - bad_nonoverlap) +
                     "/1000 exact-zero intersections",
                 secs);
}

// ------------------------------------------------------------------ A3 ----
bool criterion_a3() {
  Timer timer;
  using namespace diffnum;
  Rng rng(33);
  auto rand_t = [&](std::vector<int> shape, double lo = -0.6,
                    double hi = 0.6) {
    Tensor t(std::move(shape));
    for (double& v : t.data) v = rng.uniform(lo, hi);
    return t;
  };
  double worst = 0.0;
  std::string worst_name = "-";
  std::string breakdown;
  auto record = [&](const char* name, double err) {
    if (err > worst) {
      worst = err;
      worst_name = name;
    }
    breakdown += std::string(breakdown.empty() ? "" : " ") + name + "=" +
                 fmt(err, 7);
  };

  {  // every primitive, small shapes
    TrainableModel m("prims");
    m.add("cw", rand_t({4, 2, 3, 3}));
    m.add("cb", rand_t({4}));
    m.add("aw", rand_t({6, 4}));
    m.add("ab", rand_t({6}));
    const Tensor x = rand_t({2, 2, 9, 9});
    const Tensor target = rand_t({2, 6}, 0.0, 1.0);
    record("conv-gap-affine-sigmoid-mse",
           grad_check(m, [&](Graph& g) {
             auto h = g.relu(
                 g.conv2d(g.input(x), m.bind(g, "cw"), m.bind(g, "cb"), 2, 1));
             auto f =
                 g.affine(g.gap(h), m.bind(g, "aw"), m.bind(g, "ab"));
             return g.mse_loss(g.sigmoid(f), target);
           }));

    TrainableModel m2("mix");
    m2.add("a", rand_t({3, 4, 5, 5}));
    m2.add("b", rand_t({3, 2, 5, 5}));
    const Tensor t2 = rand_t({3, 3}, 0.0, 1.0);
    record("concat-gap-slice-mul-add-tanh-mae",
           grad_check(m2, [&](Graph& g) {
             auto cat = g.concat1(m2.bind(g, "a"), m2.bind(g, "b"));
             auto pooled = g.gap(cat);  // [3,6]
             auto s1 = g.slice1(pooled, 0, 3);
             auto s2 = g.slice1(pooled, 3, 6);
             auto mixed = g.add(g.mul(s1, g.tanh_op(s2)), g.scale(s1, 0.5));
             return g.mae_loss(mixed, t2);
           }));

    TrainableModel m3("ce");
    m3.add("w", rand_t({3, 5}));
    m3.add("b", rand_t({3}));
    const Tensor x3 = rand_t({4, 5});
    record("affine-softmax-ce", grad_check(m3, [&](Graph& g) {
             return g.softmax_ce_loss(
                 g.affine(g.input(x3), m3.bind(g, "w"), m3.bind(g, "b")),
                 {0, 2, 1, 2});
           }));

    TrainableModel m4("lstm");
    const int hidden = 8, in = 5;
    m4.add("w", rand_t({4 * hidden, in + hidden}, -0.4, 0.4));
    m4.add("b", rand_t({4 * hidden}, -0.1, 0.1));
    const Tensor x4 = rand_t({3, in});
    const Tensor h0 = rand_t({3, hidden});
    const Tensor c0 = rand_t({3, hidden});
    const Tensor t4 = rand_t({3, hidden}, 0.0, 1.0);
    record("lstm-cell", grad_check(m4, [&](Graph& g) {
             const auto [h, c] =
                 g.lstm_cell(g.input(x4), g.input(h0), g.input(c0),
                             m4.bind(g, "w"), m4.bind(g, "b"), hidden);
             return g.mse_loss(g.add(h, c), t4);
           }));
  }

  // The full-architecture checks run at a kink-free evaluation point: conv
  // weights scaled down and biases lifted so every ReLU pre-activation is
  // strictly positive. At eps = 1e-3 a unit within reach of zero makes the
  // central difference measure the kink, not the derivative; the gradient
  // itself is exercised unchanged (all layers active).
  auto lift_trunk = [](TrainableModel& m, const std::string& prefix,
                       double wscale, double bias) {
    for (auto& p : m.params()) {
      if (p.name.rfind(prefix, 0) != 0) continue;
      if (p.name.size() > 2 && p.name.substr(p.name.size() - 2) == ".w")
        for (double& v : p.value.data) v *= wscale;
      if (p.name.size() > 2 && p.name.substr(p.name.size() - 2) == ".b")
        for (double& v : p.value.data) v = bias;
    }
  };

  {  // full architecture 1: the PTZ regressor at spec defaults
    ptzmodel::PtzEncoder enc(ptzmodel::PtzEncoderConfig{}, 7);
    lift_trunk(enc.model(), "trunk.", 0.25, 1.0);
    const Tensor x = rand_t({2, 2, 64, 64}, 0.0, 1.0);
    const Tensor target({2, 3}, {0.2, 0.4, 0.7, 0.8, 0.1, 0.6});
    record("ptz-regressor", grad_check(enc.model(), [&](Graph& g) {
             return g.mse_loss(enc.forward(g, g.input(x)), target);
           }));
  }

  {  // full architecture 2: the recurrent policy over a 3-step sequence.
    // Gradients are probed at a representative nonzero recurrent state:
    // with h = c = 0, hidden units sit on the ReLU kink and the eps=1e-3
    // central difference measures the kink, not the derivative.
    navpolicy::PolicyConfig cfg;
    cfg.mode = navpolicy::EncoderMode::oracle_ptz;
    navpolicy::Policy policy(cfg, 8);
    // Positive cell state and gate biases keep relu(h) off its kink.
    lift_trunk(policy.model(), "lstm", 0.25, 0.5);
    const std::vector<Tensor> xs{rand_t({1, 3}, 0.0, 1.0),
                                 rand_t({1, 3}, 0.0, 1.0),
                                 rand_t({1, 3}, 0.0, 1.0)};
    const Tensor h0 = rand_t({1, cfg.hidden}, 0.8, 1.2);
    const Tensor c0 = rand_t({1, cfg.hidden}, 0.8, 1.2);
    record("lstm-policy", grad_check(policy.model(), [&](Graph& g) {
             auto h = g.input(h0);
             auto c = g.input(c0);
             std::vector<Graph::NodeId> losses;
             const int labels[3] = {0, 2, 1};
             for (int i = 0; i < 3; ++i) {
               const auto sn = policy.policy_step(g, g.input(xs[
                                                      static_cast<std::size_t>(i)]),
                                                  h, c);
               h = sn.h;
               c = sn.c;
               losses.push_back(g.softmax_ce_loss(sn.logits, {labels[i]}));
             }
             auto total = losses[0];
             for (std::size_t i = 1; i < losses.size(); ++i)
               total = g.add(total, losses[i]);
             return g.scale(total, 1.0 / 3.0);
           }));
  }

  {  // full architecture 3: the end-to-end baseline, encoder + policy
    navpolicy::PolicyConfig cfg;
    cfg.mode = navpolicy::EncoderMode::end_to_end;
    navpolicy::Policy policy(cfg, 9);
    lift_trunk(policy.model(), "enc.", 0.25, 1.0);
    lift_trunk(policy.model(), "lstm", 0.25, 0.5);
    const Tensor frame1 = rand_t({1, 2, 64, 64}, 0.0, 1.0);
    const Tensor frame2 = rand_t({1, 2, 64, 64}, 0.0, 1.0);
    const Tensor h0 = rand_t({1, cfg.hidden}, 0.8, 1.2);
    const Tensor c0 = rand_t({1, cfg.hidden}, 0.8, 1.2);
    record("end-to-end", grad_check(policy.model(), [&](Graph& g) {
             auto h = g.input(h0);
             auto c = g.input(c0);
             const auto s1 = policy.encode_pixels(g, g.input(frame1));
             const auto n1 = policy.policy_step(g, s1, h, c);
             const auto s2 = policy.encode_pixels(g, g.input(frame2));
             const auto n2 = policy.policy_step(g, s2, n1.h, n1.c);
             return g.scale(g.add(g.softmax_ce_loss(n1.logits, {2}),
                                  g.softmax_ce_loss(n2.logits, {0})),
                            0.5);
           }));
  }

  const double secs = timer.seconds();
  const bool ok = worst <= 1e-4 && secs < 120.0;
  return verdict("A3", ok,
                 "max rel err " + fmt(worst, 7) + " (" + worst_name + "); " +
                     breakdown,
                 secs);
}

// --------------------------------------------------------------- A4/A5 ----
bool criterion_a4() {
  Timer timer;
  auto& ctx = ptz_context();
  run_ptz_trainings(ctx);
  std::vector<double> ious, rates, untrained;
  for (int s = 0; s < kPtzSeeds; ++s) {
    ious.push_back(ctx.curriculum_eval[s].mean_overlap_iou);
    rates.push_back(ctx.curriculum_eval[s].nonoverlap_success_rate);
    untrained.push_back(ctx.untrained_eval[s].mean_overlap_iou);
  }
  const double iou = mean_of(ious), rate = mean_of(rates),
               base = mean_of(untrained);
  const bool ok = iou >= 0.5 && iou >= 3.0 * base && rate >= 0.6;
  return verdict("A4", ok,
                 "held-out IOU " + fmt(iou) + " (untrained " + fmt(base) +
                     ", ratio " + fmt(base > 0 ? iou / base : 999.0, 1) +
                     "x), non-overlap " + fmt(rate),
                 timer.seconds());
}

bool criterion_a5() {
  Timer timer;
  auto& ctx = ptz_context();
  run_ptz_trainings(ctx);
  std::vector<double> with, without;
  for (int s = 0; s < kPtzSeeds; ++s) {
    with.push_back(ctx.curriculum_eval[s].nonoverlap_success_rate);
    without.push_back(ctx.overlap_only_eval[s].nonoverlap_success_rate);
  }
  const double curriculum = mean_of(with), ablation = mean_of(without);
  const double gap = curriculum - ablation;
  const bool ok = ablation <= 0.2 && curriculum >= 0.6 && gap >= 0.3;
  return verdict("A5", ok,
                 "curriculum " + fmt(curriculum) + " vs overlap-only " +
                     fmt(ablation) + ", gap " + fmt(gap),
                 timer.seconds());
}

// ------------------------------------------------------------------ A6 ----
bool criterion_a6() {
  Timer timer;
  int solved = 0, total = 0;
  for (int seed = 0; seed < kNavSeeds; ++seed) {
    std::vector<std::unique_ptr<navsim::World>> worlds;
    std::vector<const navsim::World*> ptrs;
    for (int w = 0; w < kEvalWorlds; ++w) {
      navsim::WorldSpec spec;
      spec.seed = 9000 + static_cast<std::uint64_t>(seed) * 100 +
                  static_cast<std::uint64_t>(w);
      worlds.push_back(std::make_unique<navsim::World>(spec));
      ptrs.push_back(worlds.back().get());
    }
    const navpolicy::AgentFactory factory =
        [](const navsim::World& w) -> std::unique_ptr<navpolicy::Agent> {
      return std::make_unique<navpolicy::ControllerAgent>(
          navpolicy::StateEncoder::oracle(&w));
    };
    const double rate = navpolicy::eval_success_rate(
        ptrs, factory, kTasksPerWorld, 7000 + static_cast<std::uint64_t>(seed));
    solved += static_cast<int>(std::lround(rate * kEvalWorlds * kTasksPerWorld));
    total += kEvalWorlds * kTasksPerWorld;
  }
  const double secs = timer.seconds();
  const bool ok = solved == total && secs < 120.0;
  return verdict("A6", ok,
                 std::to_string(solved) + "/" + std::to_string(total) +
                     " oracle tasks solved",
                 secs);
}

// ------------------------------------------------------------------ A7 ----
bool criterion_a7() {
  Timer timer;
  auto& ctx = ptz_context();
  run_ptz_trainings(ctx);

  // Interaction data from two training worlds, disjoint from eval worlds.
  navsim::WorldSpec train_spec_a, train_spec_b;
  train_spec_a.seed = 8100;
  train_spec_b.seed = 8101;
  const navsim::World train_a(train_spec_a), train_b(train_spec_b);

  const int side = ctx.curriculum[0].config().input_side;
  auto collect_tier = [&](int steps_total,
                          std::uint64_t seed) -> navpolicy::PolicyDataset {
    const int per_world = steps_total / (2 * kStepsPerTraj);
    auto da = navsim::collect_random_exploration(train_a, per_world,
                                                 kStepsPerTraj, seed);
    auto db = navsim::collect_random_exploration(train_b, per_world,
                                                 kStepsPerTraj, seed + 1);
    navpolicy::PolicyDataset merged =
        navpolicy::prepare_policy_dataset(da, train_a, side);
    navpolicy::PolicyDataset part =
        navpolicy::prepare_policy_dataset(db, train_b, side);
    for (std::size_t t = 0; t < part.frames.size(); ++t) {
      merged.frames.push_back(std::move(part.frames[t]));
      merged.actions.push_back(std::move(part.actions[t]));
      merged.poses.push_back(std::move(part.poses[t]));
    }
    return merged;
  };
  const navpolicy::PolicyDataset tier_small = collect_tier(kTierSmall, 8200);
  const navpolicy::PolicyDataset tier_large = collect_tier(kTierLarge, 8300);

  std::vector<std::unique_ptr<navsim::World>> eval_worlds;
  std::vector<const navsim::World*> eval_ptrs;
  for (int w = 0; w < kEvalWorlds; ++w) {
    navsim::WorldSpec spec;
    spec.seed = 9000 + static_cast<std::uint64_t>(w);
    eval_worlds.push_back(std::make_unique<navsim::World>(spec));
    eval_ptrs.push_back(eval_worlds.back().get());
  }

  auto run_policy = [&](navpolicy::EncoderMode mode,
                        const navpolicy::PolicyDataset& data, int seed,
                        ptzmodel::PtzEncoder* frozen) {
    navpolicy::PolicyConfig cfg;
    cfg.mode = mode;
    cfg.max_subseq = 1;
    navpolicy::Policy policy(cfg, static_cast<std::uint64_t>(seed));
    navpolicy::train_policy(policy, data, frozen, nullptr,
                            a7_train(static_cast<std::uint64_t>(seed)));
    const navpolicy::AgentFactory factory =
        [&](const navsim::World&) -> std::unique_ptr<navpolicy::Agent> {
      auto enc = mode == navpolicy::EncoderMode::frozen_ptz
                     ? navpolicy::StateEncoder::frozen(frozen)
                     : navpolicy::StateEncoder::pixels(&policy);
      return std::make_unique<navpolicy::PolicyAgent>(&policy, enc);
    };
    return navpolicy::eval_success_rate(eval_ptrs, factory, kTasksPerWorld,
                                        7100 + static_cast<std::uint64_t>(seed));
  };

  std::vector<double> ptz_small, e2e_small, e2e_large;
  for (int seed = 0; seed < kNavSeeds; ++seed) {
    ptz_small.push_back(run_policy(navpolicy::EncoderMode::frozen_ptz,
                                   tier_small, seed,
                                   &ctx.curriculum[static_cast<std::size_t>(
                                       seed % kPtzSeeds)]));
    e2e_small.push_back(run_policy(navpolicy::EncoderMode::end_to_end,
                                   tier_small, seed, nullptr));
    e2e_large.push_back(run_policy(navpolicy::EncoderMode::end_to_end,
                                   tier_large, seed, nullptr));
  }
  const double ptz2k = mean_of(ptz_small);
  const double e2e2k = mean_of(e2e_small);
  const double e2e_best = mean_of(e2e_large);
  const bool ok = ptz2k >= e2e2k + 0.20 && ptz2k >= e2e_best - 0.05;
  return verdict("A7", ok,
                 "ptz@2k " + fmt(ptz2k) + ", e2e@2k " + fmt(e2e2k) +
                     ", e2e@30k " + fmt(e2e_best),
                 timer.seconds());
}

// ------------------------------------------------------------------ A8 ----
bool criterion_a8() {
  Timer timer;
  navpolicy::PolicyConfig cfg;
  cfg.mode = navpolicy::EncoderMode::oracle_ptz;
  navpolicy::Policy policy(cfg, 88);

  // Two worlds with different textures; identical PTZ streams.
  navsim::WorldSpec sa, sb;
  sa.seed = 1;
  sb.seed = 2;
  sb.panorama_octaves = 2;
  const navsim::World wa(sa), wb(sb);
  std::vector<cropgeom::PtzVector> stream;
  Rng rng(4);
  navsim::AgentPose pose{512.0, 0}, goal{530.0, 3};
  for (int i = 0; i < 8; ++i) {
    stream.push_back({rng.uniform(), rng.uniform(), rng.uniform(0.5, 1.0)});
  }
  // The pose pair proves both worlds carry valid geometry, then the policy
  // consumes numerically identical states.
  (void)navsim::true_ptz(wa, pose, goal);
  (void)navsim::true_ptz(wb, pose, goal);

  bool identical = true;
  std::vector<std::array<double, 3>> out_a, out_b;
  policy.reset_state();
  for (const auto& s : stream)
    out_a.push_back(
        policy.act(diffnum::Tensor({1, 3}, {s.p, s.t, s.z})).probs);
  policy.reset_state();
  for (const auto& s : stream)
    out_b.push_back(
        policy.act(diffnum::Tensor({1, 3}, {s.p, s.t, s.z})).probs);
  identical = out_a == out_b;  // bitwise
  return verdict("A8", identical, "bit-identical policy outputs on equal PTZ streams",
                 timer.seconds());
}

// ------------------------------------------------------------------ A9 ----
bool criterion_a9() {
  Timer timer;
  const std::string root = testutil::scratch_dir("acceptance_a9");
  auto rerun_from_config = [&](const std::string& first_out,
                               const std::string& second_out,
                               const std::string& subcommand) {
    std::string config =
        testutil::slurp(first_out + "/config.resolved.ini");
    const std::string marker = "out=\"" + first_out + "\"";
    config.replace(config.find(marker), marker.size(),
                   "out=\"" + second_out + "\"");
    const std::string path = second_out + "_config.ini";
    std::ofstream(path, std::ios::binary) << config;
    return pipeline::run_cli({subcommand, "--config", path});
  };
  auto same_tree = [&](const std::string& a, const std::string& b) {
    for (const auto& entry : fs::recursive_directory_iterator(a)) {
      if (!entry.is_regular_file()) continue;
      const auto rel = fs::relative(entry.path(), a);
      if (rel.filename() == "config.resolved.ini") continue;
      if (!testutil::same_file_bytes(entry.path().string(),
                                     (fs::path(b) / rel).string()))
        return false;
    }
    return true;
  };

  bool ok = true;
  // gen-noise
  ok &= pipeline::run_cli({"gen-noise", "--kind", "all", "--count", "12",
                           "--seed", "91", "--out", root + "/noise"}) == 0;
  ok &= rerun_from_config(root + "/noise", root + "/noise2", "gen-noise") == 0;
  ok &= same_tree(root + "/noise", root + "/noise2");
  // gen-pairs
  ok &= pipeline::run_cli({"gen-pairs", "--images", root + "/noise",
                           "--count", "24", "--seed", "92", "--out",
                           root + "/pairs"}) == 0;
  ok &= rerun_from_config(root + "/pairs", root + "/pairs2", "gen-pairs") == 0;
  ok &= same_tree(root + "/pairs", root + "/pairs2");
  // train-ptz (short) -> byte-identical checkpoint and log
  ok &= pipeline::run_cli({"train-ptz", "--pairs", root + "/pairs", "--out",
                           root + "/ptz", "--seed", "93", "--input-side", "32",
                           "--trunk", "8,16", "--batch", "4", "--val-interval",
                           "5", "--phase1-max-steps", "10", "--phase2-steps",
                           "5", "--val-subset", "8"}) == 0;
  ok &= rerun_from_config(root + "/ptz", root + "/ptz2", "train-ptz") == 0;
  ok &= same_tree(root + "/ptz", root + "/ptz2");
  // gen-world + collect
  ok &= pipeline::run_cli({"gen-world", "--seed", "94", "--out",
                           root + "/world"}) == 0;
  ok &= rerun_from_config(root + "/world", root + "/world2", "gen-world") == 0;
  ok &= same_tree(root + "/world", root + "/world2");
  ok &= pipeline::run_cli({"collect", "--world", root + "/world", "--n-traj",
                           "4", "--steps", "5", "--seed", "95", "--out",
                           root + "/data"}) == 0;
  ok &= rerun_from_config(root + "/data", root + "/data2", "collect") == 0;
  ok &= same_tree(root + "/data", root + "/data2");
  // report
  pipeline::append_nav_eval_record({"ptz", "2k", 1, 0, 0.5, 10.0},
                                   root + "/records/nav_eval.csv");
  ok &= pipeline::run_cli({"report", "--in", root + "/records", "--out",
                           root + "/report"}) == 0;
  ok &= rerun_from_config(root + "/report", root + "/report2", "report") == 0;
  ok &= same_tree(root + "/report", root + "/report2");

  return verdict("A9", ok, "stage re-runs from stored configs are byte-identical",
                 timer.seconds());
}

}  // namespace

int main(int argc, char** argv) {
  std::string only;
  for (int i = 1; i < argc; ++i)
    if (std::strcmp(argv[i], "--only") == 0 && i + 1 < argc) only = argv[i + 1];

  const std::vector<std::pair<std::string, std::function<bool()>>> criteria{
      {"A1", criterion_a1}, {"A2", criterion_a2}, {"A3", criterion_a3},
      {"A4", criterion_a4}, {"A5", criterion_a5}, {"A6", criterion_a6},
      {"A7", criterion_a7}, {"A8", criterion_a8}, {"A9", criterion_a9},
  };

  bool all_ok = true;
  for (const auto& [name, fn] : criteria) {
    if (!only.empty() && name != only) continue;
    all_ok &= fn();
  }
  std::printf("acceptance: %s\n", all_ok ? "ALL PASS" : "FAILURES");
  return all_ok ? 0 : 1;
}
