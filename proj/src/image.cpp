#include "ptznav/image.hpp"

#include <cstdio>
#include <fstream>
#include <stdexcept>

namespace ptznav {

double bilinear_at(const Image& img, int x0, int y0, double rx, double ry) {
  int ix = static_cast<int>(std::floor(rx));
  int iy = static_cast<int>(std::floor(ry));
  double fx = rx - ix;
  double fy = ry - iy;
  // Keep the 2x2 support inside the raster; at the exact right/bottom edge
  // shift the cell and carry the weight.
  if (x0 + ix >= img.width - 1) {
    ix = img.width - 2 - x0;
    fx = rx - ix;
  }
  if (y0 + iy >= img.height - 1) {
    iy = img.height - 2 - y0;
    fy = ry - iy;
  }
  if (x0 + ix < 0) {
    ix = -x0;
    fx = rx - ix;
  }
  if (y0 + iy < 0) {
    iy = -y0;
    fy = ry - iy;
  }
  const int xa = x0 + ix, ya = y0 + iy;
  const double v00 = img.at(xa, ya);
  const double v10 = img.at(xa + 1, ya);
  const double v01 = img.at(xa, ya + 1);
  const double v11 = img.at(xa + 1, ya + 1);
  const double top = v00 + fx * (v10 - v00);
  const double bot = v01 + fx * (v11 - v01);
  return top + fy * (bot - top);
}

void write_pgm(const Image& img, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << "P5\n" << img.width << " " << img.height << "\n255\n";
  std::vector<unsigned char> bytes(img.size());
  for (std::size_t i = 0; i < img.size(); ++i) {
    float q = std::nearbyint(img.values[i] * 255.0f);
    if (q < 0.0f) q = 0.0f;
    if (q > 255.0f) q = 255.0f;
    bytes[i] = static_cast<unsigned char>(q);
  }
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("write failed: " + path);
}

Image read_pgm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open for reading: " + path);
  std::string magic;
  in >> magic;
  if (magic != "P5") throw std::runtime_error("not a binary PGM: " + path);
  int w = 0, h = 0, maxval = 0;
  in >> w >> h >> maxval;
  if (!in || w <= 0 || h <= 0 || maxval != 255)
    throw std::runtime_error("unsupported PGM header: " + path);
  in.get();  // single whitespace after maxval
  Image img(w, h);
  std::vector<unsigned char> bytes(img.size());
  in.read(reinterpret_cast<char*>(bytes.data()),
          static_cast<std::streamsize>(bytes.size()));
  if (!in) throw std::runtime_error("truncated PGM: " + path);
  for (std::size_t i = 0; i < img.size(); ++i)
    img.values[i] = static_cast<float>(bytes[i]) / 255.0f;
  return img;
}

Image quantize8(const Image& img) {
  Image out(img.width, img.height);
  for (std::size_t i = 0; i < img.size(); ++i)
    out.values[i] = quantize8(img.values[i]);
  return out;
}

}  // namespace ptznav
