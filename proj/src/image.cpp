#include "psc/image.hpp"

#include <algorithm>
#include <cmath>

#include "psc/hash.hpp"

namespace psc {

uint64_t pixel_hash(const Image& img) {
  uint64_t h = fnv1a64(&img.width, sizeof(img.width));
  h = fnv1a64(&img.height, sizeof(img.height), h);
  return fnv1a64(img.data.data(), img.data.size(), h);
}

void draw_box(Image& img, double x0, double y0, double x1, double y1, uint8_t r, uint8_t g, uint8_t b) {
  int ix0 = std::clamp(static_cast<int>(std::lround(x0)), 0, img.width - 1);
  int iy0 = std::clamp(static_cast<int>(std::lround(y0)), 0, img.height - 1);
  int ix1 = std::clamp(static_cast<int>(std::lround(x1)) - 1, 0, img.width - 1);
  int iy1 = std::clamp(static_cast<int>(std::lround(y1)) - 1, 0, img.height - 1);
  for (int x = ix0; x <= ix1; ++x) {
    img.set_rgb(x, iy0, r, g, b);
    img.set_rgb(x, iy1, r, g, b);
  }
  for (int y = iy0; y <= iy1; ++y) {
    img.set_rgb(ix0, y, r, g, b);
    img.set_rgb(ix1, y, r, g, b);
  }
}

void draw_dot(Image& img, double x, double y, uint8_t r, uint8_t g, uint8_t b) {
  int cx = static_cast<int>(std::lround(x));
  int cy = static_cast<int>(std::lround(y));
  for (int dy = -1; dy <= 1; ++dy)
    for (int dx = -1; dx <= 1; ++dx)
      if (img.in_bounds(cx + dx, cy + dy)) img.set_rgb(cx + dx, cy + dy, r, g, b);
}

}  // namespace psc
