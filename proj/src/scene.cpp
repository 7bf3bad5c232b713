#include "psc/scene.hpp"

#include <stdexcept>

namespace psc {

RleMask rle_encode(const BinaryMask& mask) {
  RleMask rle;
  BoxXYXY box = mask_to_box(mask);
  rle.origin_x = static_cast<int>(box.x0);
  rle.origin_y = static_cast<int>(box.y0);
  rle.width = static_cast<int>(box.x1) - rle.origin_x;
  rle.height = static_cast<int>(box.y1) - rle.origin_y;
  int run = 0;
  bool cur = false;  // runs alternate starting with zeros
  for (int y = 0; y < rle.height; ++y) {
    for (int x = 0; x < rle.width; ++x) {
      const bool v = mask.get(rle.origin_x + x, rle.origin_y + y);
      if (v == cur) {
        ++run;
      } else {
        rle.counts.push_back(run);
        cur = v;
        run = 1;
      }
    }
  }
  rle.counts.push_back(run);
  return rle;
}

BinaryMask rle_decode(const RleMask& rle, int frame_w, int frame_h) {
  BinaryMask mask(frame_w, frame_h);
  int64_t pos = 0;
  bool cur = false;
  const int64_t total = static_cast<int64_t>(rle.width) * rle.height;
  for (int count : rle.counts) {
    if (cur) {
      for (int i = 0; i < count; ++i) {
        const int64_t p = pos + i;
        const int x = rle.origin_x + static_cast<int>(p % rle.width);
        const int y = rle.origin_y + static_cast<int>(p / rle.width);
        if (x >= 0 && y >= 0 && x < frame_w && y < frame_h) mask.set(x, y, true);
      }
    }
    pos += count;
    cur = !cur;
  }
  if (pos != total) throw std::runtime_error("rle_decode: counts do not cover the mask box");
  return mask;
}

}  // namespace psc
