#include "ptznav/ptzmodel.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include "json.hpp"

namespace fs = std::filesystem;

namespace ptznav::ptzmodel {

using diffnum::Graph;
using diffnum::Tensor;
using diffnum::TrainableModel;

namespace {

std::string make_arch(const PtzEncoderConfig& cfg) {
  nlohmann::ordered_json j;
  j["type"] = "ptz_encoder";
  j["input_side"] = cfg.input_side;
  j["trunk"] = cfg.trunk;
  j["arch"] = cfg.arch == PtzEncoderConfig::Arch::stacked ? "stacked"
                                                          : "siamese_corr";
  j["head"] = cfg.head == PtzEncoderConfig::Head::gap ? "gap" : "flatten";
  return j.dump();
}

PtzEncoderConfig parse_arch(const std::string& arch) {
  const nlohmann::json j = nlohmann::json::parse(arch);
  if (j.at("type") != "ptz_encoder")
    throw std::invalid_argument("checkpoint is not a ptz_encoder: " + arch);
  PtzEncoderConfig cfg;
  cfg.input_side = j.at("input_side");
  cfg.trunk = j.at("trunk").get<std::vector<int>>();
  cfg.arch = j.at("arch") == "stacked" ? PtzEncoderConfig::Arch::stacked
                                       : PtzEncoderConfig::Arch::siamese_corr;
  cfg.head = j.at("head") == "gap" ? PtzEncoderConfig::Head::gap
                                   : PtzEncoderConfig::Head::flatten;
  return cfg;
}

// Spatial extent of the trunk output; each stride-2 layer halves the side,
// rounding up from the pad-1 3x3 geometry.
int trunk_out_side(const PtzEncoderConfig& cfg) {
  int side = cfg.input_side;
  for (std::size_t i = 0; i < cfg.trunk.size(); ++i) side = (side + 1) / 2;
  return side;
}

diffnum::TrunkSpec trunk_spec_for(const PtzEncoderConfig& cfg) {
  diffnum::TrunkSpec spec;
  spec.in_channels = cfg.arch == PtzEncoderConfig::Arch::stacked ? 2 : 1;
  spec.channels = cfg.trunk;
  return spec;
}

}  // namespace

PtzEncoder::PtzEncoder(const PtzEncoderConfig& config, std::uint64_t seed)
    : config_(config),
      trunk_spec_(trunk_spec_for(config)),
      model_(make_arch(config)) {
  if (config.trunk.empty())
    throw std::invalid_argument("PtzEncoder: empty conv trunk");
  Rng rng(derive_seed(seed, 0, 0x9e7));
  add_trunk_params(model_, "trunk.", trunk_spec_, rng);
  const int side = trunk_out_side(config);
  int head_in;
  if (config.arch == PtzEncoderConfig::Arch::siamese_corr) {
    // correlation map + pooled current and goal descriptors
    head_in = side * side + 2 * config.trunk.back();
  } else {
    head_in = config.head == PtzEncoderConfig::Head::gap
                  ? config.trunk.back()
                  : config.trunk.back() * side * side;
  }
  add_affine_params(model_, "head", head_in, 3, rng);
}

PtzEncoder::PtzEncoder(TrainableModel model)
    : config_(parse_arch(model.arch())),
      trunk_spec_(trunk_spec_for(config_)),
      model_(std::move(model)) {}

PtzEncoder PtzEncoder::load(const std::string& path) {
  return PtzEncoder(TrainableModel::load(path));
}

Graph::NodeId PtzEncoder::forward(Graph& g, Graph::NodeId in) {
  if (config_.arch == PtzEncoderConfig::Arch::stacked) {
    Graph::NodeId x = trunk_forward(g, model_, "trunk.", trunk_spec_, in);
    x = config_.head == PtzEncoderConfig::Head::gap ? g.gap(x) : g.flatten2(x);
    return g.sigmoid(affine_forward(g, model_, "head", x));
  }
  // Shared trunk per view, then "where does the goal descriptor light up in
  // the current view" as an explicit correlation map.
  const Graph::NodeId cur_feat = trunk_forward(
      g, model_, "trunk.", trunk_spec_, g.slice1(in, 0, 1));
  const Graph::NodeId goal_feat = trunk_forward(
      g, model_, "trunk.", trunk_spec_, g.slice1(in, 1, 2));
  const Graph::NodeId goal_desc = g.gap(goal_feat);
  const Graph::NodeId cur_desc = g.gap(cur_feat);
  const Graph::NodeId corr = g.corr_channels(cur_feat, goal_desc);
  const Graph::NodeId features = g.concat1(
      g.flatten2(corr), g.concat1(cur_desc, goal_desc));
  return g.sigmoid(affine_forward(g, model_, "head", features));
}

Tensor PtzEncoder::predict_batch(const Tensor& input) {
  Graph g;
  const Graph::NodeId in = g.input(input);
  const Graph::NodeId out = forward(g, in);
  return g.value(out);
}

cropgeom::PtzVector PtzEncoder::predict(const Image& current_view,
                                        const Image& goal_view) {
  if (current_view.width != cropgeom::kViewSide ||
      current_view.height != cropgeom::kViewSide ||
      goal_view.width != cropgeom::kViewSide ||
      goal_view.height != cropgeom::kViewSide)
    throw std::invalid_argument("predict: views must be 128x128");
  const int s = config_.input_side;
  const Image cur = cropgeom::resize_bilinear(current_view, s);
  const Image goal = cropgeom::resize_bilinear(goal_view, s);
  Tensor input({1, 2, s, s});
  const std::size_t plane = static_cast<std::size_t>(s) * s;
  for (std::size_t i = 0; i < plane; ++i) {
    input.data[i] = cur.values[i];
    input.data[plane + i] = goal.values[i];
  }
  const Tensor out = predict_batch(input);
  return {out.data[0], out.data[1], out.data[2]};
}

bool detects_no_overlap(const cropgeom::PtzVector& pred) {
  return cropgeom::nonoverlap_success(pred, 10.0) && pred.z <= 0.25;
}

void PairSet::append(const cropgeom::CropPair& pair) {
  // Quantize at native resolution first so in-memory pairs match pairs that
  // round-tripped through 8-bit PGM files, then resize and re-quantize.
  const Image cur =
      cropgeom::resize_bilinear(ptznav::quantize8(pair.current_view), side);
  const Image gl =
      cropgeom::resize_bilinear(ptznav::quantize8(pair.goal_view), side);
  const std::size_t plane = static_cast<std::size_t>(side) * side;
  for (std::size_t i = 0; i < plane; ++i)
    current.push_back(
        static_cast<std::uint8_t>(std::nearbyint(cur.values[i] * 255.0f)));
  for (std::size_t i = 0; i < plane; ++i)
    goal.push_back(
        static_cast<std::uint8_t>(std::nearbyint(gl.values[i] * 255.0f)));
  if (pair.label.is_sentinel())
    nonoverlap_idx.push_back(labels.size());
  else
    overlap_idx.push_back(labels.size());
  labels.push_back(pair.label);
}

Tensor PairSet::input_batch(const std::vector<std::size_t>& indices) const {
  const std::size_t plane = static_cast<std::size_t>(side) * side;
  Tensor t({static_cast<int>(indices.size()), 2, side, side});
  double* out = t.ptr();
  for (std::size_t b = 0; b < indices.size(); ++b) {
    const std::uint8_t* cur = current.data() + indices[b] * plane;
    const std::uint8_t* gl = goal.data() + indices[b] * plane;
    for (std::size_t i = 0; i < plane; ++i) *out++ = cur[i] / 255.0;
    for (std::size_t i = 0; i < plane; ++i) *out++ = gl[i] / 255.0;
  }
  return t;
}

Tensor PairSet::label_batch(const std::vector<std::size_t>& indices) const {
  Tensor t({static_cast<int>(indices.size()), 3});
  for (std::size_t b = 0; b < indices.size(); ++b) {
    const auto& l = labels[indices[b]];
    t.data[b * 3 + 0] = l.p;
    t.data[b * 3 + 1] = l.t;
    t.data[b * 3 + 2] = l.z;
  }
  return t;
}

PairSet load_pair_set(const std::string& dir,
                      const cropgeom::PairManifest& manifest, int side) {
  PairSet set;
  set.side = side;
  const std::size_t plane = static_cast<std::size_t>(side) * side;
  set.current.reserve(manifest.records.size() * plane);
  set.goal.reserve(manifest.records.size() * plane);
  for (const auto& r : manifest.records) {
    const Image cur = cropgeom::resize_bilinear(
        read_pgm((fs::path(dir) / r.current_file).string()), side);
    const Image gl = cropgeom::resize_bilinear(
        read_pgm((fs::path(dir) / r.goal_file).string()), side);
    for (std::size_t i = 0; i < plane; ++i)
      set.current.push_back(
          static_cast<std::uint8_t>(std::nearbyint(cur.values[i] * 255.0f)));
    for (std::size_t i = 0; i < plane; ++i)
      set.goal.push_back(
          static_cast<std::uint8_t>(std::nearbyint(gl.values[i] * 255.0f)));
    if (r.label.is_sentinel())
      set.nonoverlap_idx.push_back(set.labels.size());
    else
      set.overlap_idx.push_back(set.labels.size());
    set.labels.push_back(r.label);
  }
  return set;
}

namespace {

std::vector<std::size_t> pick_subset(const std::vector<std::size_t>& pool,
                                     std::size_t n, Rng& rng) {
  std::vector<std::size_t> out = pool;
  for (std::size_t i = 0; i + 1 < out.size(); ++i) {
    const std::size_t j = i + rng.below(out.size() - i);
    std::swap(out[i], out[j]);
  }
  if (out.size() > n) out.resize(n);
  return out;
}

struct ValMetrics {
  double overlap_loss = 0.0;
  double overlap_iou = 0.0;
  double nonoverlap_rate = 0.0;
};

ValMetrics validate(PtzEncoder& enc, const PairSet& val,
                    const std::vector<std::size_t>& overlap_subset,
                    const std::vector<std::size_t>& nonoverlap_subset) {
  ValMetrics m;
  const std::size_t chunk = 64;
  double sse = 0.0, iou_sum = 0.0;
  for (std::size_t at = 0; at < overlap_subset.size(); at += chunk) {
    std::vector<std::size_t> ids(
        overlap_subset.begin() + at,
        overlap_subset.begin() +
            std::min(at + chunk, overlap_subset.size()));
    const Tensor pred = enc.predict_batch(val.input_batch(ids));
    const Tensor target = val.label_batch(ids);
    for (std::size_t i = 0; i < pred.numel(); ++i) {
      const double d = pred.data[i] - target.data[i];
      sse += d * d;
    }
    for (std::size_t b = 0; b < ids.size(); ++b) {
      const cropgeom::PtzVector pv{pred.data[b * 3], pred.data[b * 3 + 1],
                                   pred.data[b * 3 + 2]};
      iou_sum += cropgeom::iou(cropgeom::ptz_to_bbox(val.labels[ids[b]]),
                               cropgeom::ptz_to_bbox(pv));
    }
  }
  if (!overlap_subset.empty()) {
    m.overlap_loss = sse / (3.0 * static_cast<double>(overlap_subset.size()));
    m.overlap_iou = iou_sum / static_cast<double>(overlap_subset.size());
  }
  std::size_t hits = 0;
  for (std::size_t at = 0; at < nonoverlap_subset.size(); at += chunk) {
    std::vector<std::size_t> ids(
        nonoverlap_subset.begin() + at,
        nonoverlap_subset.begin() +
            std::min(at + chunk, nonoverlap_subset.size()));
    const Tensor pred = enc.predict_batch(val.input_batch(ids));
    for (std::size_t b = 0; b < ids.size(); ++b)
      if (cropgeom::nonoverlap_success(
              {pred.data[b * 3], pred.data[b * 3 + 1], pred.data[b * 3 + 2]}))
        ++hits;
  }
  if (!nonoverlap_subset.empty())
    m.nonoverlap_rate =
        static_cast<double>(hits) / static_cast<double>(nonoverlap_subset.size());
  return m;
}

double train_step(PtzEncoder& enc, const PairSet& train,
                  const std::vector<std::size_t>& batch,
                  const diffnum::OptimConfig& opt) {
  Graph g;
  const Graph::NodeId in = g.input(train.input_batch(batch));
  const Graph::NodeId out = enc.forward(g, in);
  const Graph::NodeId loss = g.mse_loss(out, train.label_batch(batch));
  const double loss_value = g.scalar(loss);
  if (!std::isfinite(loss_value))
    throw std::runtime_error("train_curriculum: non-finite loss");
  enc.model().zero_grad();
  g.backward(loss);
  optimizer_step(enc.model(), opt);
  return loss_value;
}

}  // namespace

TrainResult train_curriculum(PtzEncoder& encoder, const PairSet& train,
                             const PairSet& val, const CurriculumConfig& cfg) {
  if (train.overlap_idx.empty())
    throw std::invalid_argument("train_curriculum: no overlap pairs");
  if (cfg.nonoverlap_mix > 0.0 && train.nonoverlap_idx.empty())
    throw std::invalid_argument(
        "train_curriculum: non-overlap mix requested but no such pairs");
  if (val.overlap_idx.empty())
    throw std::invalid_argument("train_curriculum: empty validation set");
  if (cfg.batch_size < 1 || cfg.phase1_max_steps < 1)
    throw std::invalid_argument("train_curriculum: bad config");

  Rng batch_rng(derive_seed(cfg.seed, 1, 0x7121));
  Rng val_rng(derive_seed(cfg.seed, 2, 0x7121));

  const auto val_overlap =
      pick_subset(val.overlap_idx, static_cast<std::size_t>(cfg.val_subset),
                  val_rng);
  const auto val_nonoverlap = pick_subset(
      val.nonoverlap_idx, static_cast<std::size_t>(cfg.val_subset), val_rng);

  const diffnum::OptimConfig opt{diffnum::OptimConfig::Algo::adam, cfg.lr,
                                 0.9, 0.999, 1e-8};
  TrainResult result;
  long step = 0;

  // Phase 1: overlap pairs only, until plateau or cap.
  double best_val_loss = 0.0;
  bool have_best = false;
  int stale_rounds = 0;
  for (int i = 0; i < cfg.phase1_max_steps; ++i) {
    std::vector<std::size_t> batch(static_cast<std::size_t>(cfg.batch_size));
    for (auto& b : batch)
      b = train.overlap_idx[batch_rng.below(train.overlap_idx.size())];
    const double loss = train_step(encoder, train, batch, opt);
    ++step;
    TrainLogRow row{step, 1, loss, false, 0.0, 0.0};
    if (step % cfg.val_interval == 0 || i + 1 == cfg.phase1_max_steps) {
      const ValMetrics m = validate(encoder, val, val_overlap, val_nonoverlap);
      row.has_val = true;
      row.val_iou = m.overlap_iou;
      row.val_nonoverlap = m.nonoverlap_rate;
      if (!have_best ||
          m.overlap_loss < best_val_loss * (1.0 - cfg.min_improvement)) {
        best_val_loss = m.overlap_loss;
        have_best = true;
        stale_rounds = 0;
      } else {
        ++stale_rounds;
      }
    }
    result.log.push_back(row);
    if (row.has_val && stale_rounds >= cfg.patience) break;
  }

  // Phase 2: resume with non-overlap pairs mixed in at the given fraction.
  if (cfg.nonoverlap_mix > 0.0) {
    result.phase2_start_step = step + 1;
    const int n_non = std::clamp(
        static_cast<int>(std::lround(cfg.nonoverlap_mix * cfg.batch_size)), 1,
        cfg.batch_size);
    for (int i = 0; i < cfg.phase2_steps; ++i) {
      std::vector<std::size_t> batch;
      batch.reserve(static_cast<std::size_t>(cfg.batch_size));
      for (int b = 0; b < n_non; ++b)
        batch.push_back(
            train.nonoverlap_idx[batch_rng.below(train.nonoverlap_idx.size())]);
      for (int b = n_non; b < cfg.batch_size; ++b)
        batch.push_back(
            train.overlap_idx[batch_rng.below(train.overlap_idx.size())]);
      const double loss = train_step(encoder, train, batch, opt);
      ++step;
      TrainLogRow row{step, 2, loss, false, 0.0, 0.0};
      if (step % cfg.val_interval == 0 || i + 1 == cfg.phase2_steps ||
          i == 0) {
        const ValMetrics m =
            validate(encoder, val, val_overlap, val_nonoverlap);
        row.has_val = true;
        row.val_iou = m.overlap_iou;
        row.val_nonoverlap = m.nonoverlap_rate;
      }
      result.log.push_back(row);
    }
  }
  return result;
}

void write_train_log(const std::vector<TrainLogRow>& log,
                     const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write training log: " + path);
  out << "step,phase,train_loss,val_iou,val_nonoverlap\n";
  char buf[128];
  for (const auto& r : log) {
    if (r.has_val) {
      std::snprintf(buf, sizeof(buf), "%ld,%d,%.9g,%.9g,%.9g\n", r.step,
                    r.phase, r.train_loss, r.val_iou, r.val_nonoverlap);
    } else {
      std::snprintf(buf, sizeof(buf), "%ld,%d,%.9g,,\n", r.step, r.phase,
                    r.train_loss);
    }
    out << buf;
  }
}

PtzEvalReport eval_pairs(
    const std::function<cropgeom::PtzVector(std::size_t)>& predictor,
    const PairSet& set) {
  PtzEvalReport rep;
  double iou_sum = 0.0;
  for (std::size_t i : set.overlap_idx) {
    const cropgeom::PtzVector pred = predictor(i);
    // An exact-sentinel prediction on an overlap pair has no box; score 0.
    const double v = pred.is_sentinel()
                         ? 0.0
                         : cropgeom::iou(cropgeom::ptz_to_bbox(set.labels[i]),
                                         cropgeom::ptz_to_bbox(pred));
    iou_sum += v;
    ++rep.n_overlap;
  }
  std::size_t hits = 0;
  for (std::size_t i : set.nonoverlap_idx) {
    if (cropgeom::nonoverlap_success(predictor(i))) ++hits;
    ++rep.n_nonoverlap;
  }
  if (rep.n_overlap) iou_sum /= static_cast<double>(rep.n_overlap);
  rep.mean_overlap_iou = iou_sum;
  if (rep.n_nonoverlap)
    rep.nonoverlap_success_rate =
        static_cast<double>(hits) / static_cast<double>(rep.n_nonoverlap);
  return rep;
}

PtzEvalReport eval_encoder(PtzEncoder& encoder, const PairSet& test) {
  // Batch all predictions once, then score through the shared path.
  std::vector<cropgeom::PtzVector> preds(test.size());
  const std::size_t chunk = 64;
  std::vector<std::size_t> ids;
  for (std::size_t at = 0; at < test.size(); at += chunk) {
    ids.clear();
    for (std::size_t i = at; i < std::min(at + chunk, test.size()); ++i)
      ids.push_back(i);
    const Tensor out = encoder.predict_batch(test.input_batch(ids));
    for (std::size_t b = 0; b < ids.size(); ++b)
      preds[ids[b]] = {out.data[b * 3], out.data[b * 3 + 1],
                       out.data[b * 3 + 2]};
  }
  return eval_pairs([&](std::size_t i) { return preds[i]; }, test);
}

std::vector<DomainReport> cross_domain_eval(
    PtzEncoder& encoder,
    const std::vector<std::pair<std::string, const PairSet*>>& domains) {
  std::vector<DomainReport> reports;
  reports.reserve(domains.size());
  for (const auto& [name, set] : domains)
    reports.push_back({name, eval_encoder(encoder, *set)});
  return reports;
}

}  // namespace ptznav::ptzmodel
