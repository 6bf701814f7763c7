#include "ptznav/noisegen.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "json.hpp"

namespace fs = std::filesystem;

namespace ptznav::noisegen {

namespace {

constexpr double kTwoPi = 6.283185307179586476925286766559;
constexpr double kInvSqrt2 = 0.70710678118654752440084436210485;

double fade(double t) { return t * t * t * (t * (t * 6.0 - 15.0) + 10.0); }

float map_unit(double raw) {
  double v = 0.5 + raw * kInvSqrt2;
  if (v < 0.0) v = 0.0;
  if (v > 1.0) v = 1.0;
  return static_cast<float>(v);
}

}  // namespace

std::string to_string(NoiseKind kind) {
  switch (kind) {
    case NoiseKind::perlin: return "perlin";
    case NoiseKind::fractal: return "fractal";
    case NoiseKind::shapes: return "shapes";
  }
  return "?";
}

NoiseKind noise_kind_from_string(const std::string& s) {
  if (s == "perlin") return NoiseKind::perlin;
  if (s == "fractal") return NoiseKind::fractal;
  if (s == "shapes") return NoiseKind::shapes;
  throw std::invalid_argument("unknown noise kind: " + s);
}

DatasetKind dataset_kind_from_string(const std::string& s) {
  if (s == "perlin") return DatasetKind::perlin;
  if (s == "fractal") return DatasetKind::fractal;
  if (s == "shapes") return DatasetKind::shapes;
  if (s == "all") return DatasetKind::all;
  throw std::invalid_argument("unknown dataset kind: " + s);
}

std::vector<double> perlin_raw(int width, int height, int period_x,
                               int period_y, std::uint64_t seed) {
  if (width <= 0 || height <= 0)
    throw std::invalid_argument("perlin: image dimensions must be positive");
  if (period_x <= 0 || period_y <= 0)
    throw std::invalid_argument("perlin: periods must be >= 1");

  // One unit gradient per lattice corner; lookups wrap, which is what makes
  // the raster tileable.
  std::vector<double> gx(static_cast<std::size_t>(period_x) * period_y);
  std::vector<double> gy(gx.size());
  Rng rng(seed);
  for (std::size_t i = 0; i < gx.size(); ++i) {
    const double angle = rng.uniform() * kTwoPi;
    gx[i] = std::cos(angle);
    gy[i] = std::sin(angle);
  }
  auto grad = [&](int i, int j) -> std::size_t {
    return static_cast<std::size_t>(j % period_y) * period_x + (i % period_x);
  };

  std::vector<double> out(static_cast<std::size_t>(width) * height);
  for (int py = 0; py < height; ++py) {
    const double v = static_cast<double>(py) * period_y / height;
    const int j0 = static_cast<int>(v);
    const double fv = v - j0;
    const double wy = fade(fv);
    for (int px = 0; px < width; ++px) {
      const double u = static_cast<double>(px) * period_x / width;
      const int i0 = static_cast<int>(u);
      const double fu = u - i0;
      const std::size_t c00 = grad(i0, j0);
      const std::size_t c10 = grad(i0 + 1, j0);
      const std::size_t c01 = grad(i0, j0 + 1);
      const std::size_t c11 = grad(i0 + 1, j0 + 1);
      const double d00 = gx[c00] * fu + gy[c00] * fv;
      const double d10 = gx[c10] * (fu - 1.0) + gy[c10] * fv;
      const double d01 = gx[c01] * fu + gy[c01] * (fv - 1.0);
      const double d11 = gx[c11] * (fu - 1.0) + gy[c11] * (fv - 1.0);
      const double wx = fade(fu);
      const double top = d00 + wx * (d10 - d00);
      const double bot = d01 + wx * (d11 - d01);
      out[static_cast<std::size_t>(py) * width + px] = top + wy * (bot - top);
    }
  }
  return out;
}

NoiseImage perlin(int width, int height, int period_x, int period_y,
                  std::uint64_t seed) {
  NoiseImage noise;
  noise.kind = NoiseKind::perlin;
  noise.seed = seed;
  noise.params.period_x = period_x;
  noise.params.period_y = period_y;
  noise.image = Image(width, height);
  const std::vector<double> raw =
      perlin_raw(width, height, period_x, period_y, seed);
  for (std::size_t i = 0; i < raw.size(); ++i)
    noise.image.values[i] = map_unit(raw[i]);
  return noise;
}

std::uint64_t octave_seed(std::uint64_t seed, int octave) {
  return derive_seed(seed, static_cast<std::uint64_t>(octave), 0x0c7a5eedULL);
}

NoiseImage fractal(int width, int height, int base_period_x, int base_period_y,
                   int octaves, double persistence, double lacunarity,
                   std::uint64_t seed) {
  if (octaves < 1) throw std::invalid_argument("fractal: octaves must be >= 1");
  if (!(persistence > 0.0 && persistence <= 1.0))
    throw std::invalid_argument("fractal: persistence must be in (0, 1]");
  if (lacunarity < 1.0)
    throw std::invalid_argument("fractal: lacunarity must be >= 1");
  if (base_period_x <= 0 || base_period_y <= 0)
    throw std::invalid_argument("fractal: periods must be >= 1");

  // Octave periods must stay integral for the lattice wrap (tileability).
  std::vector<int> px(octaves), py(octaves);
  for (int o = 0; o < octaves; ++o) {
    const double scale = std::pow(lacunarity, o);
    const double ppx = base_period_x * scale;
    const double ppy = base_period_y * scale;
    px[o] = static_cast<int>(std::lround(ppx));
    py[o] = static_cast<int>(std::lround(ppy));
    if (std::abs(ppx - px[o]) > 1e-9 || std::abs(ppy - py[o]) > 1e-9)
      throw std::invalid_argument(
          "fractal: octave " + std::to_string(o) +
          " period is not integral; pick base period and lacunarity so every "
          "octave lands on a whole lattice");
  }

  std::vector<double> sum(static_cast<std::size_t>(width) * height, 0.0);
  double norm = 0.0;
  double weight = 1.0;
  for (int o = 0; o < octaves; ++o, weight *= persistence) {
    const std::vector<double> raw =
        perlin_raw(width, height, px[o], py[o], octave_seed(seed, o));
    for (std::size_t i = 0; i < sum.size(); ++i) sum[i] += weight * raw[i];
    norm += weight;
  }

  NoiseImage noise;
  noise.kind = NoiseKind::fractal;
  noise.seed = seed;
  noise.params.period_x = base_period_x;
  noise.params.period_y = base_period_y;
  noise.params.octaves = octaves;
  noise.params.persistence = persistence;
  noise.params.lacunarity = lacunarity;
  noise.image = Image(width, height);
  for (std::size_t i = 0; i < sum.size(); ++i)
    noise.image.values[i] = map_unit(sum[i] / norm);
  return noise;
}

std::vector<Shape> sample_shapes(int width, int height,
                                 const NoiseParams& params, Rng& rng) {
  if (params.shape_count_min < 0 ||
      params.shape_count_max < params.shape_count_min)
    throw std::invalid_argument("shapes: empty shape_count_range");
  if (params.shape_size_min <= 0.0 ||
      params.shape_size_max < params.shape_size_min)
    throw std::invalid_argument("shapes: empty shape_size_range");

  const int n = static_cast<int>(
      rng.uniform_int(params.shape_count_min, params.shape_count_max));
  const double side = std::min(width, height);
  std::vector<Shape> out;
  out.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    Shape s;
    s.type = static_cast<ShapeType>(rng.below(3));
    s.cx = rng.uniform(0.0, width);
    s.cy = rng.uniform(0.0, height);
    s.size = rng.uniform(params.shape_size_min, params.shape_size_max) * side;
    s.aspect = rng.uniform(0.3, 1.0);
    s.angle = rng.uniform(0.0, kTwoPi);
    s.intensity = static_cast<float>(rng.uniform());
    out.push_back(s);
  }
  return out;
}

void draw_shape(Image& img, const Shape& s) {
  // Conservative bounding box, then exact point-in-shape at pixel centers.
  const double reach = 0.5 * s.size * std::sqrt(1.0 + s.aspect * s.aspect);
  const int x_lo = std::max(0, static_cast<int>(std::floor(s.cx - reach)));
  const int x_hi =
      std::min(img.width - 1, static_cast<int>(std::ceil(s.cx + reach)));
  const int y_lo = std::max(0, static_cast<int>(std::floor(s.cy - reach)));
  const int y_hi =
      std::min(img.height - 1, static_cast<int>(std::ceil(s.cy + reach)));

  const double ca = std::cos(s.angle), sa = std::sin(s.angle);
  const double hx = 0.5 * s.size;
  const double hy = 0.5 * s.size * s.aspect;
  const double r2 = hx * hx;

  // Equilateral triangle vertices on the circumcircle of diameter `size`.
  double tx[3], ty[3];
  for (int k = 0; k < 3; ++k) {
    const double a = s.angle + kTwoPi * k / 3.0 - kTwoPi / 4.0;
    tx[k] = s.cx + hx * std::cos(a);
    ty[k] = s.cy + hx * std::sin(a);
  }
  auto cross = [](double ax, double ay, double bx, double by) {
    return ax * by - ay * bx;
  };

  for (int y = y_lo; y <= y_hi; ++y) {
    for (int x = x_lo; x <= x_hi; ++x) {
      const double pxc = x + 0.5, pyc = y + 0.5;
      const double dx = pxc - s.cx, dy = pyc - s.cy;
      bool inside = false;
      switch (s.type) {
        case ShapeType::rectangle: {
          const double lx = ca * dx + sa * dy;
          const double ly = -sa * dx + ca * dy;
          inside = std::abs(lx) <= hx && std::abs(ly) <= hy;
          break;
        }
        case ShapeType::circle:
          inside = dx * dx + dy * dy <= r2;
          break;
        case ShapeType::triangle: {
          const double c0 = cross(tx[1] - tx[0], ty[1] - ty[0], pxc - tx[0],
                                  pyc - ty[0]);
          const double c1 = cross(tx[2] - tx[1], ty[2] - ty[1], pxc - tx[1],
                                  pyc - ty[1]);
          const double c2 = cross(tx[0] - tx[2], ty[0] - ty[2], pxc - tx[2],
                                  pyc - ty[2]);
          inside = (c0 >= 0 && c1 >= 0 && c2 >= 0) ||
                   (c0 <= 0 && c1 <= 0 && c2 <= 0);
          break;
        }
      }
      if (inside) img.at(x, y) = s.intensity;
    }
  }
}

NoiseImage shapes(int width, int height, const NoiseParams& params,
                  std::uint64_t seed) {
  if (width <= 0 || height <= 0)
    throw std::invalid_argument("shapes: image dimensions must be positive");
  NoiseImage noise;
  noise.kind = NoiseKind::shapes;
  noise.seed = seed;
  noise.params = params;
  noise.image =
      Image(width, height, static_cast<float>(params.background_intensity));
  Rng rng(seed);
  for (const Shape& s : sample_shapes(width, height, params, rng))
    draw_shape(noise.image, s);
  return noise;
}

NoiseImage generate(NoiseKind kind, int width, int height,
                    const NoiseParams& p, std::uint64_t seed) {
  switch (kind) {
    case NoiseKind::perlin:
      return perlin(width, height, p.period_x, p.period_y, seed);
    case NoiseKind::fractal:
      return fractal(width, height, p.period_x, p.period_y, p.octaves,
                     p.persistence, p.lacunarity, seed);
    case NoiseKind::shapes:
      return shapes(width, height, p, seed);
  }
  throw std::invalid_argument("generate: bad kind");
}

namespace {

nlohmann::ordered_json params_to_json(NoiseKind kind, const NoiseParams& p) {
  nlohmann::ordered_json j;
  switch (kind) {
    case NoiseKind::perlin:
      j["period_x"] = p.period_x;
      j["period_y"] = p.period_y;
      break;
    case NoiseKind::fractal:
      j["period_x"] = p.period_x;
      j["period_y"] = p.period_y;
      j["octaves"] = p.octaves;
      j["persistence"] = p.persistence;
      j["lacunarity"] = p.lacunarity;
      break;
    case NoiseKind::shapes:
      j["shape_count_min"] = p.shape_count_min;
      j["shape_count_max"] = p.shape_count_max;
      j["shape_size_min"] = p.shape_size_min;
      j["shape_size_max"] = p.shape_size_max;
      j["background_intensity"] = p.background_intensity;
      break;
  }
  return j;
}

NoiseParams params_from_json(NoiseKind kind, const nlohmann::json& j) {
  NoiseParams p;
  switch (kind) {
    case NoiseKind::perlin:
      p.period_x = j.at("period_x");
      p.period_y = j.at("period_y");
      break;
    case NoiseKind::fractal:
      p.period_x = j.at("period_x");
      p.period_y = j.at("period_y");
      p.octaves = j.at("octaves");
      p.persistence = j.at("persistence");
      p.lacunarity = j.at("lacunarity");
      break;
    case NoiseKind::shapes:
      p.shape_count_min = j.at("shape_count_min");
      p.shape_count_max = j.at("shape_count_max");
      p.shape_size_min = j.at("shape_size_min");
      p.shape_size_max = j.at("shape_size_max");
      p.background_intensity = j.at("background_intensity");
      break;
  }
  return p;
}

}  // namespace

void write_manifest(const DatasetManifest& manifest, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write manifest: " + path);
  for (const auto& e : manifest.entries) {
    nlohmann::ordered_json j;
    j["file"] = e.file;
    j["kind"] = to_string(e.kind);
    j["seed"] = e.seed;
    j["params"] = params_to_json(e.kind, e.params);
    j["width"] = e.width;
    j["height"] = e.height;
    out << j.dump() << "\n";
  }
  if (!out) throw std::runtime_error("manifest write failed: " + path);
}

DatasetManifest read_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read manifest: " + path);
  DatasetManifest m;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const nlohmann::json j = nlohmann::json::parse(line);
    ManifestEntry e;
    e.file = j.at("file");
    e.kind = noise_kind_from_string(j.at("kind"));
    e.seed = j.at("seed");
    e.params = params_from_json(e.kind, j.at("params"));
    e.width = j.at("width");
    e.height = j.at("height");
    m.entries.push_back(std::move(e));
  }
  return m;
}

DatasetManifest gen_dataset(DatasetKind kind, int count,
                            const std::string& out_dir, std::uint64_t seed,
                            int width, int height) {
  if (count < 0) throw std::invalid_argument("gen_dataset: negative count");
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec)
    throw std::runtime_error("cannot create dataset dir " + out_dir + ": " +
                             ec.message());

  // Mirrors the 10k/10k/20k composition: 25% perlin, 25% fractal, rest shapes.
  int n_perlin = 0, n_fractal = 0, n_shapes = 0;
  switch (kind) {
    case DatasetKind::perlin: n_perlin = count; break;
    case DatasetKind::fractal: n_fractal = count; break;
    case DatasetKind::shapes: n_shapes = count; break;
    case DatasetKind::all:
      n_perlin = count / 4;
      n_fractal = count / 4;
      n_shapes = count - n_perlin - n_fractal;
      break;
  }

  static const int kPeriodGrid[3] = {2, 4, 8};
  DatasetManifest manifest;
  manifest.entries.reserve(static_cast<std::size_t>(count));
  for (int g = 0; g < count; ++g) {
    const NoiseKind k = g < n_perlin ? NoiseKind::perlin
                        : g < n_perlin + n_fractal ? NoiseKind::fractal
                                                   : NoiseKind::shapes;
    Rng prng(derive_seed(seed, static_cast<std::uint64_t>(g), 1));
    const std::uint64_t image_seed =
        derive_seed(seed, static_cast<std::uint64_t>(g), 2);

    NoiseParams p;
    switch (k) {
      case NoiseKind::perlin: {
        const int period = kPeriodGrid[prng.below(3)];
        p.period_x = period;
        p.period_y = period;
        break;
      }
      case NoiseKind::fractal: {
        const int period = kPeriodGrid[prng.below(3)];
        p.period_x = period;
        p.period_y = period;
        p.octaves = static_cast<int>(prng.uniform_int(1, 5));
        p.persistence = 0.5;
        p.lacunarity = 2.0;
        break;
      }
      case NoiseKind::shapes:
        p.background_intensity = prng.uniform();
        break;
    }

    const NoiseImage img = generate(k, width, height, p, image_seed);
    char name[64];
    std::snprintf(name, sizeof(name), "%s_%06d.pgm", to_string(k).c_str(), g);
    write_pgm(img.image, (fs::path(out_dir) / name).string());

    ManifestEntry e;
    e.file = name;
    e.kind = k;
    e.seed = image_seed;
    e.params = p;
    e.width = width;
    e.height = height;
    manifest.entries.push_back(std::move(e));
  }

  write_manifest(manifest, (fs::path(out_dir) / "manifest.jsonl").string());
  return manifest;
}

}  // namespace ptznav::noisegen
