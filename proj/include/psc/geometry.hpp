#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "psc/image.hpp"
#include "psc/tensor.hpp"

namespace psc {

struct Point2D {
  double x = 0.0;
  double y = 0.0;
};

// Half-open box [x0,x1) x [y0,y1) in image pixels, so area and IoU are exact
// on integer grids.
struct BoxXYXY {
  double x0 = 0.0, y0 = 0.0, x1 = 0.0, y1 = 0.0;

  double width() const { return x1 - x0; }
  double height() const { return y1 - y0; }
  double area() const { return std::max(0.0, width()) * std::max(0.0, height()); }
  bool degenerate() const { return x1 <= x0 || y1 <= y0; }

  BoxXYXY clipped(double w, double h) const {
    return {std::clamp(x0, 0.0, w), std::clamp(y0, 0.0, h), std::clamp(x1, 0.0, w), std::clamp(y1, 0.0, h)};
  }

  bool contains(const Point2D& p) const { return p.x >= x0 && p.x < x1 && p.y >= y0 && p.y < y1; }
};

double intersection_area(const BoxXYXY& a, const BoxXYXY& b);
double iou(const BoxXYXY& a, const BoxXYXY& b);

// Full-frame boolean raster, bit-packed per row of 64.
struct BinaryMask {
  int width = 0;
  int height = 0;
  std::vector<uint64_t> bits;

  BinaryMask() = default;
  BinaryMask(int w, int h) : width(w), height(h), bits((static_cast<size_t>(w) * h + 63) / 64, 0) {}

  bool get(int x, int y) const {
    size_t i = static_cast<size_t>(y) * width + x;
    return (bits[i >> 6] >> (i & 63)) & 1u;
  }
  void set(int x, int y, bool v) {
    size_t i = static_cast<size_t>(y) * width + x;
    uint64_t m = 1ULL << (i & 63);
    if (v)
      bits[i >> 6] |= m;
    else
      bits[i >> 6] &= ~m;
  }
  int64_t count() const;
  bool empty() const { return count() == 0; }
};

// Tight box over true cells, x1/y1 exclusive. Throws on an empty mask.
BoxXYXY mask_to_box(const BinaryMask& m);

// Centroid of the largest outer boundary polygon traced through cell centers
// (cell (i,j) center is (i+0.5, j+0.5)). Throws on an empty mask.
Point2D contour_center(const BinaryMask& m);

// Outward-rounded integer crop box after clipping to image bounds.
// Throws if the box misses the image entirely.
std::array<int, 4> rounded_crop_box(int img_w, int img_h, const BoxXYXY& box);
Image crop_region(const Image& img, const BoxXYXY& box);

int64_t mask_intersection_count(const BinaryMask& a, const BinaryMask& b);
bool mask_subset(const BinaryMask& inner, const BinaryMask& outer);

// Strided feature grid; cell (ix,iy) holds the value at image point
// ((ix+0.5)*stride, (iy+0.5)*stride).
template <typename T>
struct FeatureGrid {
  Tensor<T> chw;  // [C, H_f, W_f]
  int stride = 1;

  int channels() const { return chw.shape.empty() ? 0 : chw.dim(0); }
  int grid_h() const { return chw.shape.empty() ? 0 : chw.dim(1); }
  int grid_w() const { return chw.shape.empty() ? 0 : chw.dim(2); }
};

namespace detail {

template <typename T>
inline void bilinear_weights(double q, int n, int& i0, int& i1, double& w0, double& w1) {
  if (q <= 0.0) {
    i0 = i1 = 0;
    w0 = 1.0;
    w1 = 0.0;
    return;
  }
  if (q >= n - 1) {
    i0 = i1 = n - 1;
    w0 = 1.0;
    w1 = 0.0;
    return;
  }
  i0 = static_cast<int>(std::floor(q));
  i1 = i0 + 1;
  w1 = q - i0;
  w0 = 1.0 - w1;
}

}  // namespace detail

// One bilinear sample per output bin, taken at the bin center; box
// coordinates divided by stride.
template <typename T>
Tensor<T> roi_align(const FeatureGrid<T>& f, const BoxXYXY& box, int out) {
  if (box.area() <= 0.0) throw std::invalid_argument("roi_align: degenerate box");
  if (out < 1) throw std::invalid_argument("roi_align: out must be >= 1");
  const int c_n = f.channels(), gh = f.grid_h(), gw = f.grid_w();
  Tensor<T> patch({c_n, out, out});
  const double bw = box.width() / out, bh = box.height() / out;
  for (int j = 0; j < out; ++j) {
    const double qy = (box.y0 + (j + 0.5) * bh) / f.stride - 0.5;
    int y0, y1;
    double wy0, wy1;
    detail::bilinear_weights<T>(qy, gh, y0, y1, wy0, wy1);
    for (int i = 0; i < out; ++i) {
      const double qx = (box.x0 + (i + 0.5) * bw) / f.stride - 0.5;
      int x0, x1;
      double wx0, wx1;
      detail::bilinear_weights<T>(qx, gw, x0, x1, wx0, wx1);
      for (int c = 0; c < c_n; ++c) {
        double v = wy0 * (wx0 * f.chw.at3(c, y0, x0) + wx1 * f.chw.at3(c, y0, x1)) +
                   wy1 * (wx0 * f.chw.at3(c, y1, x0) + wx1 * f.chw.at3(c, y1, x1));
        patch.at3(c, j, i) = static_cast<T>(v);
      }
    }
  }
  return patch;
}

// Scatter of the patch gradient back onto the feature grid.
template <typename T>
void roi_align_backward(const Tensor<T>& d_patch, const BoxXYXY& box, int out, FeatureGrid<T>& d_f) {
  const int c_n = d_f.channels(), gh = d_f.grid_h(), gw = d_f.grid_w();
  const double bw = box.width() / out, bh = box.height() / out;
  for (int j = 0; j < out; ++j) {
    const double qy = (box.y0 + (j + 0.5) * bh) / d_f.stride - 0.5;
    int y0, y1;
    double wy0, wy1;
    detail::bilinear_weights<T>(qy, gh, y0, y1, wy0, wy1);
    for (int i = 0; i < out; ++i) {
      const double qx = (box.x0 + (i + 0.5) * bw) / d_f.stride - 0.5;
      int x0, x1;
      double wx0, wx1;
      detail::bilinear_weights<T>(qx, gw, x0, x1, wx0, wx1);
      for (int c = 0; c < c_n; ++c) {
        const T g = d_patch.at3(c, j, i);
        d_f.chw.at3(c, y0, x0) += static_cast<T>(wy0 * wx0) * g;
        d_f.chw.at3(c, y0, x1) += static_cast<T>(wy0 * wx1) * g;
        d_f.chw.at3(c, y1, x0) += static_cast<T>(wy1 * wx0) * g;
        d_f.chw.at3(c, y1, x1) += static_cast<T>(wy1 * wx1) * g;
      }
    }
  }
}

}  // namespace psc
