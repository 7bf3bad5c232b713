#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "psc/geometry.hpp"
#include "psc/rng.hpp"

using namespace psc;

namespace {

// rasterized IoU oracle for integer-coordinate boxes: count unit cells
double iou_rasterized(const BoxXYXY& a, const BoxXYXY& b) {
  const int x0 = static_cast<int>(std::min(a.x0, b.x0)), x1 = static_cast<int>(std::max(a.x1, b.x1));
  const int y0 = static_cast<int>(std::min(a.y0, b.y0)), y1 = static_cast<int>(std::max(a.y1, b.y1));
  int64_t inter = 0, uni = 0;
  for (int y = y0; y < y1; ++y)
    for (int x = x0; x < x1; ++x) {
      const bool in_a = x >= a.x0 && x < a.x1 && y >= a.y0 && y < a.y1;
      const bool in_b = x >= b.x0 && x < b.x1 && y >= b.y0 && y < b.y1;
      if (in_a && in_b) ++inter;
      if (in_a || in_b) ++uni;
    }
  return uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

BinaryMask rect_mask(int w, int h, int x0, int y0, int x1, int y1) {
  BinaryMask m(w, h);
  for (int y = y0; y < y1; ++y)
    for (int x = x0; x < x1; ++x) m.set(x, y, true);
  return m;
}

}  // namespace

TEST_CASE("iou basic values") {
  CHECK(iou({0, 0, 2, 2}, {0, 0, 2, 2}) == doctest::Approx(1.0));
  CHECK(iou({0, 0, 1, 1}, {5, 5, 6, 6}) == doctest::Approx(0.0));
  CHECK(iou({0, 0, 2, 2}, {1, 1, 3, 3}) == doctest::Approx(1.0 / 7.0));
  // degenerate boxes yield 0
  CHECK(iou({1, 1, 1, 1}, {1, 1, 1, 1}) == doctest::Approx(0.0));
}

TEST_CASE("iou symmetry, range, self-identity on random boxes") {
  Rng rng(11);
  for (int i = 0; i < 500; ++i) {
    BoxXYXY a{rng.uniform(0, 40), rng.uniform(0, 40), 0, 0};
    a.x1 = a.x0 + rng.uniform(0.1, 20);
    a.y1 = a.y0 + rng.uniform(0.1, 20);
    BoxXYXY b{rng.uniform(0, 40), rng.uniform(0, 40), 0, 0};
    b.x1 = b.x0 + rng.uniform(0.1, 20);
    b.y1 = b.y0 + rng.uniform(0.1, 20);
    const double ab = iou(a, b), ba = iou(b, a);
    CHECK(ab == doctest::Approx(ba).epsilon(1e-12));
    CHECK(ab >= 0.0);
    CHECK(ab <= 1.0);
    CHECK(iou(a, a) == doctest::Approx(1.0));
  }
}

TEST_CASE("iou matches rasterized oracle on integer boxes") {
  Rng rng(12);
  for (int i = 0; i < 300; ++i) {
    BoxXYXY a, b;
    a.x0 = rng.uniform_int(0, 20);
    a.y0 = rng.uniform_int(0, 20);
    a.x1 = a.x0 + rng.uniform_int(1, 12);
    a.y1 = a.y0 + rng.uniform_int(1, 12);
    b.x0 = rng.uniform_int(0, 20);
    b.y0 = rng.uniform_int(0, 20);
    b.x1 = b.x0 + rng.uniform_int(1, 12);
    b.y1 = b.y0 + rng.uniform_int(1, 12);
    CHECK(iou(a, b) == doctest::Approx(iou_rasterized(a, b)).epsilon(1e-9));
  }
}

TEST_CASE("mask_to_box") {
  BinaryMask single(16, 16);
  single.set(3, 7, true);
  const BoxXYXY b = mask_to_box(single);
  CHECK(b.x0 == 3);
  CHECK(b.y0 == 7);
  CHECK(b.x1 == 4);
  CHECK(b.y1 == 8);

  BinaryMask rect = rect_mask(16, 16, 2, 2, 6, 10);
  const BoxXYXY rb = mask_to_box(rect);
  CHECK(rb.x0 == 2);
  CHECK(rb.y0 == 2);
  CHECK(rb.x1 == 6);
  CHECK(rb.y1 == 10);

  // two disjoint blobs span both
  BinaryMask two(32, 32);
  two.set(2, 3, true);
  two.set(20, 25, true);
  const BoxXYXY tb = mask_to_box(two);
  CHECK(tb.x0 == 2);
  CHECK(tb.y0 == 3);
  CHECK(tb.x1 == 21);
  CHECK(tb.y1 == 26);

  BinaryMask empty(8, 8);
  CHECK_THROWS(mask_to_box(empty));
}

TEST_CASE("contour_center: single pixel uses the cell-center convention") {
  BinaryMask m(16, 16);
  m.set(3, 7, true);
  const Point2D c = contour_center(m);
  CHECK(c.x == doctest::Approx(3.5));
  CHECK(c.y == doctest::Approx(7.5));
}

TEST_CASE("contour_center: filled rectangle") {
  BinaryMask m = rect_mask(16, 16, 2, 2, 6, 10);
  const Point2D c = contour_center(m);
  CHECK(c.x == doctest::Approx(4.0));
  CHECK(c.y == doctest::Approx(6.0));
}

TEST_CASE("contour_center: filled disk vs pixel-enumeration centroid") {
  BinaryMask m(24, 24);
  double sx = 0, sy = 0;
  int n = 0;
  for (int y = 0; y < 24; ++y)
    for (int x = 0; x < 24; ++x) {
      const double dx = (x + 0.5) - 10.0, dy = (y + 0.5) - 10.0;
      if (dx * dx + dy * dy <= 25.0) {
        m.set(x, y, true);
        sx += x + 0.5;
        sy += y + 0.5;
        ++n;
      }
    }
  const Point2D c = contour_center(m);
  CHECK(std::abs(c.x - sx / n) <= 0.5);
  CHECK(std::abs(c.y - sy / n) <= 0.5);
  CHECK(std::abs(c.x - 10.0) <= 0.5);
  CHECK(std::abs(c.y - 10.0) <= 0.5);
}

TEST_CASE("contour_center: one-pixel-wide line and empty mask") {
  BinaryMask line(16, 16);
  for (int x = 2; x <= 8; ++x) line.set(x, 5, true);
  const Point2D c = contour_center(line);
  CHECK(c.x == doctest::Approx(5.5));
  CHECK(c.y == doctest::Approx(5.5));

  BinaryMask empty(8, 8);
  CHECK_THROWS(contour_center(empty));
}

TEST_CASE("contour_center picks the largest component") {
  BinaryMask m = rect_mask(32, 32, 20, 20, 26, 26);
  m.set(1, 1, true);  // stray pixel
  const Point2D c = contour_center(m);
  CHECK(c.x == doctest::Approx(23.0));
  CHECK(c.y == doctest::Approx(23.0));
}

TEST_CASE("crop_region") {
  Image img(8, 8);
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 8; ++x) img.set_rgb(x, y, static_cast<uint8_t>(x), static_cast<uint8_t>(y), 0);

  const Image full = crop_region(img, {0, 0, 8, 8});
  CHECK(full.width == 8);
  CHECK(full.height == 8);
  CHECK(full.data == img.data);

  const Image tl = crop_region(img, {0, 0, 4, 4});
  CHECK(tl.width == 4);
  CHECK(tl.height == 4);
  CHECK(tl.at(3, 3, 0) == 3);

  // outward rounding
  auto ibox = rounded_crop_box(8, 8, {1.2, 1.2, 3.8, 3.8});
  CHECK(ibox[0] == 1);
  CHECK(ibox[1] == 1);
  CHECK(ibox[2] == 4);
  CHECK(ibox[3] == 4);

  CHECK_THROWS(crop_region(img, {20, 20, 30, 30}));
  CHECK_THROWS(crop_region(img, {2, 2, 2, 2}));
}

TEST_CASE("roi_align: constant field stays constant") {
  FeatureGrid<double> f;
  f.chw = Tensor<double>({2, 8, 8});
  f.stride = 4;
  f.chw.fill(3.0);
  const auto patch = roi_align(f, {3.0, 5.0, 17.0, 21.0}, 7);
  for (double v : patch.data) CHECK(v == doctest::Approx(3.0));
}

TEST_CASE("roi_align: ramp field reproduces bin-center coordinates") {
  // f(x,y) = x with stride 1: grid cell ix holds the value at x = ix + 0.5
  FeatureGrid<double> f;
  f.chw = Tensor<double>({1, 8, 8});
  f.stride = 1;
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 8; ++x) f.chw.at3(0, y, x) = x + 0.5;
  const auto patch = roi_align(f, {0.0, 0.0, 8.0, 8.0}, 4);
  for (int j = 0; j < 4; ++j)
    for (int i = 0; i < 4; ++i) CHECK(patch.at3(0, j, i) == doctest::Approx(2.0 * i + 1.0));
}

TEST_CASE("roi_align: full-grid box at grid side returns cell values") {
  FeatureGrid<double> f;
  f.chw = Tensor<double>({1, 6, 6});
  f.stride = 4;
  Rng rng(5);
  for (auto& v : f.chw.data) v = rng.uniform(-1, 1);
  const auto patch = roi_align(f, {0.0, 0.0, 24.0, 24.0}, 6);
  for (int j = 0; j < 6; ++j)
    for (int i = 0; i < 6; ++i) CHECK(patch.at3(0, j, i) == doctest::Approx(f.chw.at3(0, j, i)).epsilon(1e-12));
}

TEST_CASE("roi_align: affine field within 1e-6 at interior sample points") {
  FeatureGrid<double> f;
  f.chw = Tensor<double>({1, 16, 16});
  f.stride = 2;
  auto affine = [](double x, double y) { return 0.3 * x - 0.7 * y + 2.0; };
  for (int y = 0; y < 16; ++y)
    for (int x = 0; x < 16; ++x) f.chw.at3(0, y, x) = affine((x + 0.5) * 2.0, (y + 0.5) * 2.0);
  const BoxXYXY box{3.0, 4.0, 27.0, 26.0};
  const auto patch = roi_align(f, box, 7);
  for (int j = 0; j < 7; ++j)
    for (int i = 0; i < 7; ++i) {
      const double sx = box.x0 + (i + 0.5) * box.width() / 7.0;
      const double sy = box.y0 + (j + 0.5) * box.height() / 7.0;
      CHECK(patch.at3(0, j, i) == doctest::Approx(affine(sx, sy)).epsilon(1e-6));
    }
}

TEST_CASE("roi_align rejects degenerate boxes") {
  FeatureGrid<double> f;
  f.chw = Tensor<double>({1, 4, 4});
  f.stride = 1;
  CHECK_THROWS(roi_align(f, {2, 2, 2, 3}, 7));
}

TEST_CASE("roi_align_backward matches finite differences") {
  FeatureGrid<double> f;
  f.chw = Tensor<double>({2, 6, 6});
  f.stride = 2;
  Rng rng(7);
  for (auto& v : f.chw.data) v = rng.uniform(-1, 1);
  const BoxXYXY box{1.0, 2.0, 9.5, 10.0};
  const int out = 3;

  // loss = sum of patch * weights
  Tensor<double> wgt({2, out, out});
  for (auto& v : wgt.data) v = rng.uniform(-1, 1);
  auto loss = [&](const FeatureGrid<double>& grid) {
    auto patch = roi_align(grid, box, out);
    double s = 0;
    for (int64_t i = 0; i < patch.numel(); ++i) s += patch.data[static_cast<size_t>(i)] * wgt.data[static_cast<size_t>(i)];
    return s;
  };

  FeatureGrid<double> grad;
  grad.chw = Tensor<double>({2, 6, 6});
  grad.stride = 2;
  roi_align_backward(wgt, box, out, grad);

  const double eps = 1e-6;
  for (int64_t i = 0; i < f.chw.numel(); i += 5) {
    FeatureGrid<double> fp = f, fm = f;
    fp.chw.data[static_cast<size_t>(i)] += eps;
    fm.chw.data[static_cast<size_t>(i)] -= eps;
    const double fd = (loss(fp) - loss(fm)) / (2 * eps);
    CHECK(grad.chw.data[static_cast<size_t>(i)] == doctest::Approx(fd).epsilon(1e-5));
  }
}

TEST_CASE("mask_to_box has IoU 1 with proposal boxes built from the mask") {
  Rng rng(9);
  for (int t = 0; t < 50; ++t) {
    BinaryMask m(32, 32);
    const int n = rng.uniform_int(1, 40);
    for (int i = 0; i < n; ++i) m.set(rng.uniform_int(0, 31), rng.uniform_int(0, 31), true);
    const BoxXYXY b = mask_to_box(m);
    CHECK(iou(b, mask_to_box(m)) == doctest::Approx(1.0));
  }
}
