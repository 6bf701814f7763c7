#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <filesystem>

#include "doctest.h"
#include "ptznav/noisegen.hpp"
#include "test_util.hpp"

using namespace ptznav;
using namespace ptznav::noisegen;
namespace fs = std::filesystem;

namespace {

double max_seam_gradient(const Image& img) {
  double m = 0.0;
  for (int y = 0; y < img.height; ++y)
    m = std::max(m, std::abs(static_cast<double>(img.at(0, y)) -
                             img.at(img.width - 1, y)));
  for (int x = 0; x < img.width; ++x)
    m = std::max(m, std::abs(static_cast<double>(img.at(x, 0)) -
                             img.at(x, img.height - 1)));
  return m;
}

double max_interior_gradient(const Image& img) {
  double m = 0.0;
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x + 1 < img.width; ++x)
      m = std::max(m, std::abs(static_cast<double>(img.at(x, y)) -
                               img.at(x + 1, y)));
  for (int y = 0; y + 1 < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      m = std::max(m, std::abs(static_cast<double>(img.at(x, y)) -
                               img.at(x, y + 1)));
  return m;
}

}  // namespace

TEST_CASE("perlin vanishes at lattice corners") {
  const NoiseImage img = perlin(256, 256, 4, 4, 123);
  // 256/4 = 64px cells; every 64th pixel sits on a corner.
  for (int j = 0; j < 4; ++j)
    for (int i = 0; i < 4; ++i)
      CHECK(img.image.at(i * 64, j * 64) == doctest::Approx(0.5).epsilon(1e-6));
}

TEST_CASE("perlin determinism and range") {
  const NoiseImage a = perlin(128, 96, 4, 2, 77);
  const NoiseImage b = perlin(128, 96, 4, 2, 77);
  CHECK(a.image.same_bytes(b.image));
  const NoiseImage c = perlin(128, 96, 4, 2, 78);
  CHECK_FALSE(a.image.same_bytes(c.image));
  for (float v : a.image.values) {
    CHECK(v >= 0.0f);
    CHECK(v <= 1.0f);
  }
}

TEST_CASE("perlin histogram mean is centered") {
  const NoiseImage img = perlin(256, 256, 4, 4, 7);
  double mean = 0.0;
  for (float v : img.image.values) mean += v;
  mean /= static_cast<double>(img.image.size());
  CHECK(mean == doctest::Approx(0.5).epsilon(0.1));
  CHECK(std::abs(mean - 0.5) < 0.05);
}

TEST_CASE("perlin and fractal tile without a seam spike") {
  for (const NoiseImage& img :
       {perlin(256, 256, 4, 4, 5), fractal(256, 256, 2, 2, 4, 0.5, 2.0, 6)}) {
    const double seam = max_seam_gradient(img.image);
    const double interior = max_interior_gradient(img.image);
    CHECK(seam <= interior * 1.5);
  }
}

TEST_CASE("perlin rejects bad arguments") {
  CHECK_THROWS_AS(perlin(0, 256, 4, 4, 1), std::invalid_argument);
  CHECK_THROWS_AS(perlin(256, 0, 4, 4, 1), std::invalid_argument);
  CHECK_THROWS_AS(perlin(256, 256, 0, 4, 1), std::invalid_argument);
}

TEST_CASE("single-octave fractal degenerates to perlin") {
  const NoiseImage f = fractal(128, 128, 4, 4, 1, 0.5, 2.0, 99);
  const NoiseImage p = perlin(128, 128, 4, 4, octave_seed(99, 0));
  CHECK(f.image.same_bytes(p.image));
}

TEST_CASE("fractal is the normalized persistence-weighted octave sum") {
  const int w = 128, h = 128;
  const std::uint64_t seed = 31;
  const double persistence = 0.5;
  const NoiseImage f = fractal(w, h, 2, 2, 3, persistence, 2.0, seed);
  // Reconstruct from raw octaves: weights (1, 0.5, 0.25) / 1.75.
  std::vector<double> sum(static_cast<std::size_t>(w) * h, 0.0);
  double norm = 0.0, weight = 1.0;
  for (int o = 0; o < 3; ++o, weight *= persistence) {
    const auto raw = perlin_raw(w, h, 2 << o, 2 << o, octave_seed(seed, o));
    for (std::size_t i = 0; i < sum.size(); ++i) sum[i] += weight * raw[i];
    norm += weight;
  }
  CHECK(norm == doctest::Approx(1.75));
  for (std::size_t i = 0; i < sum.size(); i += 997) {
    double v = 0.5 + (sum[i] / norm) * 0.70710678118654752440;
    v = std::clamp(v, 0.0, 1.0);
    CHECK(f.image.values[i] == doctest::Approx(v).epsilon(1e-7));
  }
}

TEST_CASE("fractal validates octave periods") {
  CHECK_THROWS_AS(fractal(256, 256, 2, 2, 0, 0.5, 2.0, 1),
                  std::invalid_argument);
  CHECK_THROWS_AS(fractal(256, 256, 2, 2, 2, 0.0, 2.0, 1),
                  std::invalid_argument);
  CHECK_THROWS_AS(fractal(256, 256, 2, 2, 2, 0.5, 0.5, 1),
                  std::invalid_argument);
  // lacunarity 1.5 from base 2: octave 2 period is 4.5 cells.
  CHECK_THROWS_AS(fractal(256, 256, 2, 2, 3, 0.5, 1.5, 1),
                  std::invalid_argument);
  // 5 octaves from base 2 at lacunarity 2: finest lattice 32 cells.
  const NoiseImage a = fractal(256, 256, 2, 2, 5, 0.5, 2.0, 4);
  const NoiseImage b = fractal(256, 256, 2, 2, 5, 0.5, 2.0, 4);
  CHECK(a.image.same_bytes(b.image));
}

TEST_CASE("shapes: empty count range means constant background") {
  NoiseParams p;
  p.shape_count_min = 0;
  p.shape_count_max = 0;
  p.background_intensity = 0.375;
  const NoiseImage img = shapes(64, 64, p, 5);
  for (float v : img.image.values) CHECK(v == doctest::Approx(0.375f));
}

TEST_CASE("shapes: opaque full-coverage rectangle overdraws everything") {
  NoiseParams p;
  const NoiseImage base = shapes(64, 64, p, 17);
  Image img = base.image;
  Shape cover;
  cover.type = ShapeType::rectangle;
  cover.cx = 32;
  cover.cy = 32;
  cover.size = 300;
  cover.aspect = 1.0;
  cover.angle = 0.0;
  cover.intensity = 0.25f;
  draw_shape(img, cover);
  for (float v : img.values) CHECK(v == doctest::Approx(0.25f));
}

TEST_CASE("shapes determinism and validation") {
  NoiseParams p;
  const NoiseImage a = shapes(128, 128, p, 2024);
  const NoiseImage b = shapes(128, 128, p, 2024);
  CHECK(a.image.same_bytes(b.image));

  NoiseParams bad;
  bad.shape_count_min = 3;
  bad.shape_count_max = 1;
  CHECK_THROWS_AS(shapes(64, 64, bad, 1), std::invalid_argument);
  NoiseParams bad_size;
  bad_size.shape_size_min = 0.5;
  bad_size.shape_size_max = 0.1;
  CHECK_THROWS_AS(shapes(64, 64, bad_size, 1), std::invalid_argument);
}

TEST_CASE("gen_dataset splits kind=all 25/25/50 and regenerates bytes") {
  const std::string dir = testutil::scratch_dir("noise_all");
  const DatasetManifest m = gen_dataset(DatasetKind::all, 40, dir, 11, 256, 256);
  REQUIRE(m.entries.size() == 40);
  int n_perlin = 0, n_fractal = 0, n_shapes = 0;
  for (const auto& e : m.entries) {
    if (e.kind == NoiseKind::perlin) ++n_perlin;
    if (e.kind == NoiseKind::fractal) ++n_fractal;
    if (e.kind == NoiseKind::shapes) ++n_shapes;
    CHECK(fs::exists(fs::path(dir) / e.file));
  }
  CHECK(n_perlin == 10);
  CHECK(n_fractal == 10);
  CHECK(n_shapes == 20);

  // Byte-stable regeneration, including the manifest.
  const std::string dir2 = testutil::scratch_dir("noise_all2");
  gen_dataset(DatasetKind::all, 40, dir2, 11, 256, 256);
  CHECK(testutil::same_file_bytes((fs::path(dir) / "manifest.jsonl").string(),
                                  (fs::path(dir2) / "manifest.jsonl").string()));
  for (const auto& e : m.entries)
    CHECK(testutil::same_file_bytes((fs::path(dir) / e.file).string(),
                                    (fs::path(dir2) / e.file).string()));
}

TEST_CASE("gen_dataset count=0 writes an empty manifest and no images") {
  const std::string dir = testutil::scratch_dir("noise_empty");
  const DatasetManifest m = gen_dataset(DatasetKind::all, 0, dir, 1);
  CHECK(m.entries.empty());
  std::size_t files = 0;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.path().extension() == ".pgm") ++files;
  CHECK(files == 0);
  CHECK(read_manifest((fs::path(dir) / "manifest.jsonl").string())
            .entries.empty());
}

TEST_CASE("manifest records regenerate the exact image") {
  const std::string dir = testutil::scratch_dir("noise_regen");
  gen_dataset(DatasetKind::all, 8, dir, 3);
  const DatasetManifest m =
      read_manifest((fs::path(dir) / "manifest.jsonl").string());
  for (const auto& e : m.entries) {
    const NoiseImage regen = generate(e.kind, e.width, e.height, e.params,
                                      e.seed);
    const Image disk = read_pgm((fs::path(dir) / e.file).string());
    CHECK(disk.same_bytes(quantize8(regen.image)));
  }
}

TEST_CASE("pgm roundtrip is byte-stable") {
  const NoiseImage img = perlin(64, 48, 2, 2, 9);
  const std::string dir = testutil::scratch_dir("pgm");
  const std::string p1 = dir + "/a.pgm";
  const std::string p2 = dir + "/b.pgm";
  write_pgm(img.image, p1);
  write_pgm(read_pgm(p1), p2);
  CHECK(testutil::same_file_bytes(p1, p2));
}
