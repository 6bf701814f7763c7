#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ptznav/common.hpp"
#include "ptznav/image.hpp"

namespace ptznav::noisegen {

enum class NoiseKind { perlin, fractal, shapes };

std::string to_string(NoiseKind kind);
NoiseKind noise_kind_from_string(const std::string& s);

struct NoiseParams {
  // perlin / fractal
  int period_x = 4;
  int period_y = 4;
  int octaves = 1;
  double persistence = 0.5;
  double lacunarity = 2.0;
  // shapes
  int shape_count_min = 5;
  int shape_count_max = 15;
  double shape_size_min = 0.1;  // fraction of min(width, height)
  double shape_size_max = 0.5;
  double background_intensity = 0.5;
};

// Seeded, regenerable raster. Perlin/fractal outputs tile in both axes.
struct NoiseImage {
  Image image;
  NoiseKind kind = NoiseKind::perlin;
  std::uint64_t seed = 0;
  NoiseParams params;
};

// Classic gradient-lattice noise, unnormalized. Unit gradients sit at the
// corners of a period_x x period_y lattice (seeded uniform angles, wrapping
// periodically); per-pixel value is the quintic-fade bilinear blend of the
// corner dot products. Pixel i samples lattice coordinate i * period / size,
// so the raster tiles for any period. Range is [-sqrt(2)/2, sqrt(2)/2].
std::vector<double> perlin_raw(int width, int height, int period_x,
                               int period_y, std::uint64_t seed);

// perlin_raw mapped to [0, 1] by 0.5 + r / sqrt(2), clamped.
NoiseImage perlin(int width, int height, int period_x, int period_y,
                  std::uint64_t seed);

// Seed for octave `o` of a fractal stack; exposed so the single-octave
// degeneration (fractal(octaves=1) == perlin at that sub-seed) is testable.
std::uint64_t octave_seed(std::uint64_t seed, int octave);

// Persistence-weighted sum of perlin octaves at geometrically increasing
// frequencies, normalized by the weight sum, then mapped like perlin.
// Octave o runs at period base_period * lacunarity^o, which must stay
// integral (and >= 1) for the result to tile.
NoiseImage fractal(int width, int height, int base_period_x, int base_period_y,
                   int octaves, double persistence, double lacunarity,
                   std::uint64_t seed);

enum class ShapeType { rectangle, circle, triangle };

struct Shape {
  ShapeType type = ShapeType::rectangle;
  double cx = 0, cy = 0;   // center, pixels
  double size = 0;         // characteristic side / diameter, pixels
  double aspect = 1.0;     // rectangle height = size * aspect
  double angle = 0;        // rotation, radians
  float intensity = 0.5f;
};

std::vector<Shape> sample_shapes(int width, int height,
                                 const NoiseParams& params, Rng& rng);
// Painter's order: each shape drawn opaque over what is already there,
// hard (non-antialiased) edges via point-in-shape tests at pixel centers.
void draw_shape(Image& img, const Shape& shape);

NoiseImage shapes(int width, int height, const NoiseParams& params,
                  std::uint64_t seed);

// Dispatch on kind.
NoiseImage generate(NoiseKind kind, int width, int height,
                    const NoiseParams& params, std::uint64_t seed);

struct ManifestEntry {
  std::string file;
  NoiseKind kind = NoiseKind::perlin;
  std::uint64_t seed = 0;
  NoiseParams params;
  int width = 0;
  int height = 0;
};

struct DatasetManifest {
  std::vector<ManifestEntry> entries;
};

enum class DatasetKind { perlin, fractal, shapes, all };

DatasetKind dataset_kind_from_string(const std::string& s);

// Writes `count` PGM images plus a line-delimited manifest into out_dir.
// Kind `all` splits 25%/25%/50% perlin/fractal/shapes. Per-image params are
// drawn uniformly from the grid: periods {2,4,8}, octaves {1..5}. Per-image
// seeds come from derive_seed(seed, index), so regeneration is byte-stable
// and order-independent.
DatasetManifest gen_dataset(DatasetKind kind, int count,
                            const std::string& out_dir, std::uint64_t seed,
                            int width = 256, int height = 256);

void write_manifest(const DatasetManifest& manifest, const std::string& path);
DatasetManifest read_manifest(const std::string& path);

}  // namespace ptznav::noisegen
