#pragma once

#include <string>
#include <vector>

#include "psc/geometry.hpp"
#include "psc/image.hpp"

namespace psc {

struct InstanceAnn {
  BinaryMask mask;  // full-frame
  BoxXYXY box;      // tight box of the mask
  int class_id = -1;
  Point2D point;  // annotation point, inside the mask
};

// The unit of training/evaluation: raster plus per-instance annotations.
// Instances are ordered back-to-front (later instances drawn on top).
struct AnnotatedScene {
  std::string id;
  std::string split;
  int target_class = -1;
  Image image;
  std::vector<InstanceAnn> instances;
  std::vector<BoxXYXY> exemplar_boxes;  // few-shot protocol, 3 per scene

  int target_count() const {
    int n = 0;
    for (const auto& ins : instances)
      if (ins.class_id == target_class) ++n;
    return n;
  }
};

// Run-length encoding of a mask restricted to its tight box, row-major,
// alternating runs starting with zeros.
struct RleMask {
  int origin_x = 0;
  int origin_y = 0;
  int width = 0;
  int height = 0;
  std::vector<int> counts;
};

RleMask rle_encode(const BinaryMask& mask);
BinaryMask rle_decode(const RleMask& rle, int frame_w, int frame_h);

}  // namespace psc
