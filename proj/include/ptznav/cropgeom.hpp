#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ptznav/common.hpp"
#include "ptznav/image.hpp"

namespace ptznav::cropgeom {

// Side of every current/goal view raster, in pixels.
inline constexpr int kViewSide = 128;

// Pan/tilt/zoom triple locating the goal view as a crop of the current view:
// (p, t) are the goal box top-left offsets in units of current-view side,
// z the side ratio. (0, 0, 0) is the reserved "no overlap" sentinel.
struct PtzVector {
  double p = 0;
  double t = 0;
  double z = 0;

  bool is_sentinel() const { return p == 0.0 && t == 0.0 && z == 0.0; }
  static PtzVector sentinel() { return {0.0, 0.0, 0.0}; }
};

// Axis-aligned square in continuous current-view pixel coordinates. May
// extend beyond the view (partial overlap).
struct BBox {
  double x = 0;
  double y = 0;
  double side = 0;
};

BBox ptz_to_bbox(const PtzVector& ptz, double view_side = kViewSide);
PtzVector bbox_to_ptz(const BBox& box, double view_side = kViewSide);

// Intersection area / union area in continuous coordinates.
double iou(const BBox& a, const BBox& b);

// True iff the predicted pan/tilt pixel center sqrt((128p)^2 + (128t)^2)
// lies within `threshold_px` of (0, 0).
bool nonoverlap_success(const PtzVector& pred, double threshold_px = 10.0);

// Corner-aligned bilinear resize; identity when sizes match.
Image resize_bilinear(const Image& patch, int target_side);

// Offset (relative to the current-view origin) of goal-view sample k along
// one axis, for a goal box with normalized offset `pt` and zoom `z`. Both
// the pair sampler and the crop-and-compare verifier go through this, which
// makes the label-geometry check exact rather than approximate.
inline double goal_sample_offset(double pt, double z, int k) {
  const double side = kViewSide * z;
  return kViewSide * pt + k * (side - 1.0) / (kViewSide - 1.0);
}

struct CropPair {
  Image current_view;  // kViewSide^2
  Image goal_view;     // kViewSide^2, resampled from its native box
  PtzVector label;     // sentinel for non-overlap pairs
  long source_index = -1;
  BBox current_in_source;  // integer-aligned, side = kViewSide
  BBox goal_in_source;     // continuous
};

// Goal view for a given label, sampled from the source with the current
// view's integer origin at (cx, cy). The sampler and verifier share this.
Image extract_goal_view(const Image& source, int cx, int cy,
                        const PtzVector& label);

// Overlap pair: current view uniform over integer positions, then
// (p, t) ~ U[0,1)^2, z ~ U[0.5,1) redrawn until the goal box lies inside the
// source (up to 100 attempts, after which the current view is resampled).
// Requires a source of at least 256x256.
CropPair sample_overlap_pair(const Image& source, long source_index, Rng& rng);

// Non-overlap pair: goal side 128*U[0.5,1), position redrawn until the
// intersection with the current view is exactly zero; label is the sentinel.
CropPair sample_nonoverlap_pair(const Image& source, long source_index,
                                Rng& rng);

// Max |goal_view - current_view resampled at the label's geometry| over all
// goal samples that land inside the view. Zero for freshly sampled overlap
// pairs; small but nonzero after 8-bit serialization.
double crop_match_max_abs_diff(const CropPair& pair);

struct PairRecord {
  std::string current_file;
  std::string goal_file;
  PtzVector label;
  long source_index = -1;
};

struct PairManifest {
  std::vector<PairRecord> records;
};

// One JSON record per line; p, t, z printed at 9 significant digits.
void write_pair_manifest(const PairManifest& manifest, const std::string& path);
PairManifest read_pair_manifest(const std::string& path);

// Samples `count` pairs from the images listed in a noise-dataset manifest
// (block-assigned so each source is loaded once), writes the crop PGMs and
// the pair manifest into out_dir. `nonoverlap_fraction` of the pairs, spread
// evenly over the index range, are non-overlap pairs.
PairManifest gen_pair_dataset(const std::string& image_dir,
                              const std::vector<std::string>& image_files,
                              int count, double nonoverlap_fraction,
                              const std::string& out_dir, std::uint64_t seed);

}  // namespace ptznav::cropgeom
