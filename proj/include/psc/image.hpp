#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace psc {

// 8-bit interleaved RGB raster.
struct Image {
  int width = 0;
  int height = 0;
  std::vector<uint8_t> data;  // height*width*3, row-major

  Image() = default;
  Image(int w, int h, uint8_t fill = 0) : width(w), height(h), data(static_cast<size_t>(w) * h * 3, fill) {}

  uint8_t& at(int x, int y, int c) { return data[(static_cast<size_t>(y) * width + x) * 3 + c]; }
  uint8_t at(int x, int y, int c) const { return data[(static_cast<size_t>(y) * width + x) * 3 + c]; }

  bool in_bounds(int x, int y) const { return x >= 0 && y >= 0 && x < width && y < height; }

  void set_rgb(int x, int y, uint8_t r, uint8_t g, uint8_t b) {
    size_t i = (static_cast<size_t>(y) * width + x) * 3;
    data[i] = r;
    data[i + 1] = g;
    data[i + 2] = b;
  }
};

uint64_t pixel_hash(const Image& img);

// PNG round-trip (image_io.cpp)
std::vector<uint8_t> encode_png(const Image& img);
Image decode_png(const std::vector<uint8_t>& bytes);
void save_png(const std::string& path, const Image& img);
Image load_png(const std::string& path);

// Simple drawing helpers for overlay output.
void draw_box(Image& img, double x0, double y0, double x1, double y1, uint8_t r, uint8_t g, uint8_t b);
void draw_dot(Image& img, double x, double y, uint8_t r, uint8_t g, uint8_t b);

}  // namespace psc
