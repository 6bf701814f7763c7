#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "ptznav/cropgeom.hpp"
#include "ptznav/diffnum/nets.hpp"
#include "ptznav/image.hpp"

namespace ptznav::ptzmodel {

// Small convolutional PTZ regressor over a view pair downsampled to
// input_side, trained with MSE on (p, t, z); non-overlap pairs carry the
// (0,0,0) target. Output is sigmoid-bounded to (0,1)^3.
//
// Two variants:
//  - siamese_corr (default): one shared stride-2 conv trunk applied to each
//    view, a correlation map between the current-view feature grid and the
//    pooled goal descriptor, then flatten+pooled-descriptor features into
//    the affine head. The explicit correlation is what makes crop location
//    learnable at this scale: a trunk over the stacked 2-channel pair has
//    no multiplicative interaction between the views, and measured on
//    desk-scale fractal pairs it plateaus near 0.37 overlap IOU with zero
//    overlap/non-overlap discrimination (identical prediction means on both
//    classes).
//  - stacked: the 2-channel concatenated trunk with a flatten or GAP head,
//    kept as the reference point for that measurement.
struct PtzEncoderConfig {
  int input_side = 64;
  std::vector<int> trunk{16, 32, 64};
  enum class Arch { siamese_corr, stacked };
  Arch arch = Arch::siamese_corr;
  enum class Head { flatten, gap };  // stacked-arch head
  Head head = Head::flatten;
};

class PtzEncoder {
 public:
  PtzEncoder(const PtzEncoderConfig& config, std::uint64_t seed);
  explicit PtzEncoder(diffnum::TrainableModel model);  // from checkpoint

  const PtzEncoderConfig& config() const { return config_; }
  diffnum::TrainableModel& model() { return model_; }
  const diffnum::TrainableModel& model() const { return model_; }

  // Graph forward over a [N, 2, S, S] input node; returns [N, 3] in (0,1).
  diffnum::Graph::NodeId forward(diffnum::Graph& g, diffnum::Graph::NodeId in);

  // Inference on a stacked batch tensor.
  diffnum::Tensor predict_batch(const diffnum::Tensor& input);

  // The public contract: both views 128x128 in [0,1]; downsampled
  // internally. Pure function of (checkpoint, inputs).
  cropgeom::PtzVector predict(const Image& current_view,
                              const Image& goal_view);

  static PtzEncoder load(const std::string& path);
  void save(const std::string& path) const { model_.save(path); }

 private:
  PtzEncoderConfig config_;
  diffnum::TrunkSpec trunk_spec_;
  diffnum::TrainableModel model_;
};

// Downstream "no goal visible" decision: pan/tilt center within 10 px of the
// origin and zoom at or below 0.25 (trained zoom never legitimately drops
// below 0.5).
bool detects_no_overlap(const cropgeom::PtzVector& pred);

// Crop pairs held at encoder input resolution, 8-bit, mirroring the PGM
// serialization precision.
struct PairSet {
  int side = 64;
  std::vector<std::uint8_t> current;  // n * side * side
  std::vector<std::uint8_t> goal;
  std::vector<cropgeom::PtzVector> labels;
  std::vector<std::size_t> overlap_idx;
  std::vector<std::size_t> nonoverlap_idx;

  std::size_t size() const { return labels.size(); }
  void append(const cropgeom::CropPair& pair);
  // Stacks the selected pairs into a [B, 2, side, side] tensor.
  diffnum::Tensor input_batch(const std::vector<std::size_t>& indices) const;
  diffnum::Tensor label_batch(const std::vector<std::size_t>& indices) const;
};

PairSet load_pair_set(const std::string& dir,
                      const cropgeom::PairManifest& manifest, int side);

struct CurriculumConfig {
  double nonoverlap_mix = 1.0 / 3.0;  // rho; 0 skips phase 2 entirely
  int batch_size = 24;
  double lr = 1e-3;
  int val_interval = 50;
  int patience = 3;              // validation rounds without >1% improvement
  double min_improvement = 0.01;
  int phase1_max_steps = 1500;
  int phase2_steps = 900;
  int val_subset = 512;          // pairs per validation round
  std::uint64_t seed = 0;
};

struct TrainLogRow {
  long step = 0;
  int phase = 1;
  double train_loss = 0.0;
  bool has_val = false;
  double val_iou = 0.0;
  double val_nonoverlap = 0.0;
};

struct TrainResult {
  std::vector<TrainLogRow> log;
  long phase2_start_step = -1;  // -1 when phase 2 was skipped
};

// Two-phase curriculum: overlap-only until the validation overlap loss
// plateaus (no >min_improvement gain for `patience` rounds) or the step cap,
// then batches mixing non-overlap pairs at fraction nonoverlap_mix.
TrainResult train_curriculum(PtzEncoder& encoder, const PairSet& train,
                             const PairSet& val, const CurriculumConfig& cfg);

void write_train_log(const std::vector<TrainLogRow>& log,
                     const std::string& path);

struct PtzEvalReport {
  double mean_overlap_iou = 0.0;
  double nonoverlap_success_rate = 0.0;
  std::size_t n_overlap = 0;
  std::size_t n_nonoverlap = 0;
};

// Overlap pairs: mean iou(label box, predicted box), with an exact-sentinel
// prediction scored as IOU 0. Non-overlap pairs: nonoverlap_success rate.
PtzEvalReport eval_pairs(
    const std::function<cropgeom::PtzVector(std::size_t)>& predictor,
    const PairSet& set);
PtzEvalReport eval_encoder(PtzEncoder& encoder, const PairSet& test);

struct DomainReport {
  std::string domain;
  PtzEvalReport report;
};

// Runs eval_encoder per named domain; the first entry is the in-domain set.
std::vector<DomainReport> cross_domain_eval(
    PtzEncoder& encoder,
    const std::vector<std::pair<std::string, const PairSet*>>& domains);

}  // namespace ptznav::ptzmodel
