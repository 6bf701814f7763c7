#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

namespace ptznav {

// Grayscale raster with values in [0, 1], row-major.
struct Image {
  int width = 0;
  int height = 0;
  std::vector<float> values;

  Image() = default;
  Image(int w, int h, float fill = 0.0f)
      : width(w), height(h), values(static_cast<std::size_t>(w) * h, fill) {}

  float at(int x, int y) const { return values[idx(x, y)]; }
  float& at(int x, int y) { return values[idx(x, y)]; }
  std::size_t idx(int x, int y) const {
    return static_cast<std::size_t>(y) * width + x;
  }
  std::size_t size() const { return values.size(); }
  bool same_bytes(const Image& o) const {
    return width == o.width && height == o.height && values == o.values;
  }
};

// Bilinear sample of `img` at continuous position (x0 + rx, y0 + ry).
// The integer window origin is applied to the *indices*, never folded into
// the continuous offset, so a sample taken through a copied window is
// bit-identical to one taken from the source.
double bilinear_at(const Image& img, int x0, int y0, double rx, double ry);

// Writes/reads binary PGM (P5), 8-bit. Stored byte = round(255 * value).
void write_pgm(const Image& img, const std::string& path);
Image read_pgm(const std::string& path);

// Quantizes to the 8-bit grid used by PGM serialization.
inline float quantize8(float v) {
  float q = std::nearbyint(v * 255.0f);
  if (q < 0.0f) q = 0.0f;
  if (q > 255.0f) q = 255.0f;
  return q / 255.0f;
}
Image quantize8(const Image& img);

}  // namespace ptznav
