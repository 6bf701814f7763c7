#include "ptznav/cropgeom.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include "json.hpp"

namespace fs = std::filesystem;

namespace ptznav::cropgeom {

BBox ptz_to_bbox(const PtzVector& ptz, double view_side) {
  if (ptz.is_sentinel())
    throw std::invalid_argument(
        "ptz_to_bbox: the non-overlap sentinel has no box");
  return {view_side * ptz.p, view_side * ptz.t, view_side * ptz.z};
}

PtzVector bbox_to_ptz(const BBox& box, double view_side) {
  if (box.side <= 0.0)
    throw std::invalid_argument("bbox_to_ptz: box side must be positive");
  return {box.x / view_side, box.y / view_side, box.side / view_side};
}

double iou(const BBox& a, const BBox& b) {
  if (a.x == b.x && a.y == b.y && a.side == b.side) return 1.0;
  const double iw =
      std::min(a.x + a.side, b.x + b.side) - std::max(a.x, b.x);
  const double ih =
      std::min(a.y + a.side, b.y + b.side) - std::max(a.y, b.y);
  if (iw <= 0.0 || ih <= 0.0) return 0.0;
  const double inter = iw * ih;
  const double uni = a.side * a.side + b.side * b.side - inter;
  return inter / uni;
}

bool nonoverlap_success(const PtzVector& pred, double threshold_px) {
  const double px = kViewSide * pred.p;
  const double py = kViewSide * pred.t;
  return std::sqrt(px * px + py * py) <= threshold_px;
}

Image resize_bilinear(const Image& patch, int target_side) {
  if (patch.width <= 0 || patch.height <= 0)
    throw std::invalid_argument("resize_bilinear: empty patch");
  if (target_side <= 0)
    throw std::invalid_argument("resize_bilinear: bad target side");
  if (patch.width == target_side && patch.height == target_side) return patch;

  Image out(target_side, target_side);
  for (int ty = 0; ty < target_side; ++ty) {
    const double sy = target_side > 1
                          ? ty * (patch.height - 1.0) / (target_side - 1.0)
                          : (patch.height - 1.0) / 2.0;
    for (int tx = 0; tx < target_side; ++tx) {
      const double sx = target_side > 1
                            ? tx * (patch.width - 1.0) / (target_side - 1.0)
                            : (patch.width - 1.0) / 2.0;
      out.at(tx, ty) = static_cast<float>(bilinear_at(patch, 0, 0, sx, sy));
    }
  }
  return out;
}

namespace {

Image copy_window(const Image& src, int x0, int y0, int side) {
  Image out(side, side);
  for (int y = 0; y < side; ++y)
    for (int x = 0; x < side; ++x) out.at(x, y) = src.at(x0 + x, y0 + y);
  return out;
}

}  // namespace

// Goal view sampled straight from the source; the integer window origin is
// applied to indices inside bilinear_at so the same samples can later be
// reproduced bit-exactly from the copied current view.
Image extract_goal_view(const Image& src, int cx, int cy,
                        const PtzVector& label) {
  if (label.is_sentinel())
    throw std::invalid_argument("extract_goal_view: sentinel has no geometry");
  Image out(kViewSide, kViewSide);
  for (int ky = 0; ky < kViewSide; ++ky) {
    const double ry = goal_sample_offset(label.t, label.z, ky);
    for (int kx = 0; kx < kViewSide; ++kx) {
      const double rx = goal_sample_offset(label.p, label.z, kx);
      out.at(kx, ky) = static_cast<float>(bilinear_at(src, cx, cy, rx, ry));
    }
  }
  return out;
}

CropPair sample_overlap_pair(const Image& source, long source_index,
                             Rng& rng) {
  if (source.width < 2 * kViewSide || source.height < 2 * kViewSide)
    throw std::invalid_argument(
        "sample_overlap_pair: source must be at least 256x256");
  const double w = source.width, h = source.height;

  for (int round = 0; round < 1000; ++round) {
    const int cx =
        static_cast<int>(rng.uniform_int(0, source.width - kViewSide));
    const int cy =
        static_cast<int>(rng.uniform_int(0, source.height - kViewSide));
    for (int attempt = 0; attempt < 100; ++attempt) {
      const double p = rng.uniform();
      const double t = rng.uniform();
      const double z = rng.uniform(0.5, 1.0);
      const double side = kViewSide * z;
      const double gx = cx + kViewSide * p;
      const double gy = cy + kViewSide * t;
      if (gx + side > w || gy + side > h) continue;  // goal box leaves source
      // p, t < 1 and z > 0 guarantee positive intersection with the view.
      CropPair pair;
      pair.current_view = copy_window(source, cx, cy, kViewSide);
      pair.label = {p, t, z};
      pair.goal_view = extract_goal_view(source, cx, cy, pair.label);
      pair.source_index = source_index;
      pair.current_in_source = {static_cast<double>(cx),
                                static_cast<double>(cy),
                                static_cast<double>(kViewSide)};
      pair.goal_in_source = {gx, gy, side};
      return pair;
    }
  }
  throw std::runtime_error("sample_overlap_pair: sampling did not converge");
}

CropPair sample_nonoverlap_pair(const Image& source, long source_index,
                                Rng& rng) {
  if (source.width < 2 * kViewSide || source.height < 2 * kViewSide)
    throw std::invalid_argument(
        "sample_nonoverlap_pair: source must be at least 256x256");
  const double w = source.width, h = source.height;

  for (int round = 0; round < 1000; ++round) {
    const int cx =
        static_cast<int>(rng.uniform_int(0, source.width - kViewSide));
    const int cy =
        static_cast<int>(rng.uniform_int(0, source.height - kViewSide));
    const double side = kViewSide * rng.uniform(0.5, 1.0);
    for (int attempt = 0; attempt < 100; ++attempt) {
      const double gx = rng.uniform(0.0, w - side);
      const double gy = rng.uniform(0.0, h - side);
      const bool disjoint = gx + side <= cx || gx >= cx + kViewSide ||
                            gy + side <= cy || gy >= cy + kViewSide;
      if (!disjoint) continue;
      CropPair pair;
      pair.current_view = copy_window(source, cx, cy, kViewSide);
      pair.goal_view = Image(kViewSide, kViewSide);
      for (int ky = 0; ky < kViewSide; ++ky) {
        const double ry = gy + ky * (side - 1.0) / (kViewSide - 1.0);
        for (int kx = 0; kx < kViewSide; ++kx) {
          const double rx = gx + kx * (side - 1.0) / (kViewSide - 1.0);
          pair.goal_view.at(kx, ky) =
              static_cast<float>(bilinear_at(source, 0, 0, rx, ry));
        }
      }
      pair.label = PtzVector::sentinel();
      pair.source_index = source_index;
      pair.current_in_source = {static_cast<double>(cx),
                                static_cast<double>(cy),
                                static_cast<double>(kViewSide)};
      pair.goal_in_source = {gx, gy, side};
      return pair;
    }
  }
  throw std::runtime_error(
      "sample_nonoverlap_pair: no disjoint placement found; source too small");
}

double crop_match_max_abs_diff(const CropPair& pair) {
  if (pair.label.is_sentinel())
    throw std::invalid_argument("crop_match: non-overlap pair has no geometry");
  double max_diff = 0.0;
  for (int ky = 0; ky < kViewSide; ++ky) {
    const double ry = goal_sample_offset(pair.label.t, pair.label.z, ky);
    if (ry < 0.0 || ry > kViewSide - 1) continue;
    for (int kx = 0; kx < kViewSide; ++kx) {
      const double rx = goal_sample_offset(pair.label.p, pair.label.z, kx);
      if (rx < 0.0 || rx > kViewSide - 1) continue;
      const float expect =
          static_cast<float>(bilinear_at(pair.current_view, 0, 0, rx, ry));
      const float got = pair.goal_view.at(kx, ky);
      max_diff = std::max(max_diff, static_cast<double>(std::abs(expect - got)));
    }
  }
  return max_diff;
}

void write_pair_manifest(const PairManifest& manifest,
                         const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write pair manifest: " + path);
  char num[3][48];
  for (const auto& r : manifest.records) {
    std::snprintf(num[0], sizeof(num[0]), "%.9g", r.label.p);
    std::snprintf(num[1], sizeof(num[1]), "%.9g", r.label.t);
    std::snprintf(num[2], sizeof(num[2]), "%.9g", r.label.z);
    out << "{\"current_file\":\"" << r.current_file << "\",\"goal_file\":\""
        << r.goal_file << "\",\"p\":" << num[0] << ",\"t\":" << num[1]
        << ",\"z\":" << num[2] << ",\"source_index\":" << r.source_index
        << "}\n";
  }
  if (!out) throw std::runtime_error("pair manifest write failed: " + path);
}

PairManifest read_pair_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read pair manifest: " + path);
  PairManifest m;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const nlohmann::json j = nlohmann::json::parse(line);
    PairRecord r;
    r.current_file = j.at("current_file");
    r.goal_file = j.at("goal_file");
    r.label.p = j.at("p");
    r.label.t = j.at("t");
    r.label.z = j.at("z");
    r.source_index = j.at("source_index");
    m.records.push_back(std::move(r));
  }
  return m;
}

PairManifest gen_pair_dataset(const std::string& image_dir,
                              const std::vector<std::string>& image_files,
                              int count, double nonoverlap_fraction,
                              const std::string& out_dir, std::uint64_t seed) {
  if (image_files.empty())
    throw std::invalid_argument("gen_pair_dataset: no source images");
  if (count < 0) throw std::invalid_argument("gen_pair_dataset: bad count");
  if (nonoverlap_fraction < 0.0 || nonoverlap_fraction > 1.0)
    throw std::invalid_argument("gen_pair_dataset: bad non-overlap fraction");
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec)
    throw std::runtime_error("cannot create pair dir " + out_dir + ": " +
                             ec.message());

  const long n_sources = static_cast<long>(image_files.size());
  PairManifest manifest;
  manifest.records.reserve(static_cast<std::size_t>(count));

  long loaded_index = -1;
  Image source;
  for (int i = 0; i < count; ++i) {
    // Block assignment: source j covers pairs [j*count/n, (j+1)*count/n).
    const long src = std::min<long>(
        n_sources - 1, static_cast<long>(i) * n_sources / std::max(count, 1));
    if (src != loaded_index) {
      source = read_pgm((fs::path(image_dir) / image_files[src]).string());
      loaded_index = src;
    }
    const bool nonoverlap =
        std::floor((i + 1) * nonoverlap_fraction) >
        std::floor(i * nonoverlap_fraction);
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(i), 7));
    const CropPair pair = nonoverlap
                              ? sample_nonoverlap_pair(source, src, rng)
                              : sample_overlap_pair(source, src, rng);

    char cur_name[64], goal_name[64];
    std::snprintf(cur_name, sizeof(cur_name), "pair_%06d_cur.pgm", i);
    std::snprintf(goal_name, sizeof(goal_name), "pair_%06d_goal.pgm", i);
    write_pgm(pair.current_view, (fs::path(out_dir) / cur_name).string());
    write_pgm(pair.goal_view, (fs::path(out_dir) / goal_name).string());

    PairRecord r;
    r.current_file = cur_name;
    r.goal_file = goal_name;
    r.label = pair.label;
    r.source_index = src;
    manifest.records.push_back(std::move(r));
  }

  write_pair_manifest(manifest, (fs::path(out_dir) / "pairs.jsonl").string());
  return manifest;
}

}  // namespace ptznav::cropgeom
