#include "psc/geometry.hpp"

#include <bit>
#include <cmath>

namespace psc {

double intersection_area(const BoxXYXY& a, const BoxXYXY& b) {
  const double iw = std::min(a.x1, b.x1) - std::max(a.x0, b.x0);
  const double ih = std::min(a.y1, b.y1) - std::max(a.y0, b.y0);
  if (iw <= 0.0 || ih <= 0.0) return 0.0;
  return iw * ih;
}

double iou(const BoxXYXY& a, const BoxXYXY& b) {
  const double inter = intersection_area(a, b);
  const double uni = a.area() + b.area() - inter;
  if (uni <= 0.0) return 0.0;
  return inter / uni;
}

int64_t BinaryMask::count() const {
  int64_t n = 0;
  for (uint64_t w : bits) n += std::popcount(w);
  return n;
}

BoxXYXY mask_to_box(const BinaryMask& m) {
  int minx = m.width, miny = m.height, maxx = -1, maxy = -1;
  for (int y = 0; y < m.height; ++y) {
    for (int x = 0; x < m.width; ++x) {
      if (!m.get(x, y)) continue;
      minx = std::min(minx, x);
      maxx = std::max(maxx, x);
      miny = std::min(miny, y);
      maxy = std::max(maxy, y);
    }
  }
  if (maxx < 0) throw std::invalid_argument("mask_to_box: empty mask");
  return {static_cast<double>(minx), static_cast<double>(miny), static_cast<double>(maxx + 1),
          static_cast<double>(maxy + 1)};
}

namespace {

// Largest 8-connected component, returned as a fresh mask plus its size.
BinaryMask largest_component(const BinaryMask& m, int64_t& size_out) {
  const int w = m.width, h = m.height;
  std::vector<int32_t> label(static_cast<size_t>(w) * h, -1);
  int32_t next = 0;
  std::vector<int64_t> sizes;
  std::vector<int> stack;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (!m.get(x, y) || label[static_cast<size_t>(y) * w + x] >= 0) continue;
      int32_t id = next++;
      sizes.push_back(0);
      stack.push_back(y * w + x);
      label[static_cast<size_t>(y) * w + x] = id;
      while (!stack.empty()) {
        int p = stack.back();
        stack.pop_back();
        ++sizes[id];
        int px = p % w, py = p / w;
        for (int dy = -1; dy <= 1; ++dy) {
          for (int dx = -1; dx <= 1; ++dx) {
            if (dx == 0 && dy == 0) continue;
            int nx = px + dx, ny = py + dy;
            if (nx < 0 || ny < 0 || nx >= w || ny >= h) continue;
            size_t ni = static_cast<size_t>(ny) * w + nx;
            if (m.get(nx, ny) && label[ni] < 0) {
              label[ni] = id;
              stack.push_back(ny * w + nx);
            }
          }
        }
      }
    }
  }
  int32_t best = 0;
  for (int32_t i = 1; i < next; ++i)
    if (sizes[i] > sizes[best]) best = i;
  BinaryMask out(w, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      if (m.get(x, y) && label[static_cast<size_t>(y) * w + x] == best) out.set(x, y, true);
  size_out = sizes.empty() ? 0 : sizes[best];
  return out;
}

// Moore-neighbor boundary trace (clockwise), visiting boundary cells of an
// 8-connected component. Returns cell indices in trace order.
std::vector<std::pair<int, int>> trace_boundary(const BinaryMask& m) {
  const int w = m.width, h = m.height;
  int sx = -1, sy = -1;
  for (int y = 0; y < h && sx < 0; ++y)
    for (int x = 0; x < w; ++x)
      if (m.get(x, y)) {
        sx = x;
        sy = y;
        break;
      }
  std::vector<std::pair<int, int>> path;
  if (sx < 0) return path;

  // clockwise Moore neighborhood starting east
  static const int dx8[8] = {1, 1, 0, -1, -1, -1, 0, 1};
  static const int dy8[8] = {0, 1, 1, 1, 0, -1, -1, -1};
  auto inside = [&](int x, int y) { return x >= 0 && y >= 0 && x < w && y < h && m.get(x, y); };

  path.emplace_back(sx, sy);
  // entry direction: we arrived scanning from the west
  int cx = sx, cy = sy, dir = 6;  // start scan pointing north of the backtrack (west)
  const int start_dir_first = -1;
  int first_leave_dir = start_dir_first;
  size_t guard = static_cast<size_t>(w) * h * 8 + 16;
  while (guard-- > 0) {
    int found = -1;
    for (int k = 0; k < 8; ++k) {
      int d = (dir + k) & 7;
      int nx = cx + dx8[d], ny = cy + dy8[d];
      if (inside(nx, ny)) {
        found = d;
        break;
      }
    }
    if (found < 0) break;  // isolated cell
    int nx = cx + dx8[found], ny = cy + dy8[found];
    if (cx == sx && cy == sy) {
      if (first_leave_dir < 0)
        first_leave_dir = found;
      else if (found == first_leave_dir && path.size() > 1)
        break;  // closed the loop leaving start the same way
    }
    cx = nx;
    cy = ny;
    path.emplace_back(cx, cy);
    if (cx == sx && cy == sy) {
      // re-scan from just after the backtrack direction
      dir = (found + 5) & 7;
      continue;
    }
    dir = (found + 5) & 7;
  }
  // drop the final duplicated start cell if present
  if (path.size() > 1 && path.back().first == sx && path.back().second == sy) path.pop_back();
  return path;
}

}  // namespace

Point2D contour_center(const BinaryMask& m) {
  int64_t comp_size = 0;
  if (m.width <= 0 || m.height <= 0) throw std::invalid_argument("contour_center: empty mask");
  BinaryMask comp = largest_component(m, comp_size);
  if (comp_size == 0) throw std::invalid_argument("contour_center: empty mask");
  if (comp_size == 1) {
    BoxXYXY b = mask_to_box(comp);
    return {b.x0 + 0.5, b.y0 + 0.5};
  }
  auto path = trace_boundary(comp);
  // polygon through cell centers
  const size_t n = path.size();
  double a2 = 0.0, cx = 0.0, cy = 0.0;
  for (size_t i = 0; i < n; ++i) {
    const auto& p = path[i];
    const auto& q = path[(i + 1) % n];
    const double px = p.first + 0.5, py = p.second + 0.5;
    const double qx = q.first + 0.5, qy = q.second + 0.5;
    const double cr = px * qy - qx * py;
    a2 += cr;
    cx += (px + qx) * cr;
    cy += (py + qy) * cr;
  }
  if (std::abs(a2) < 1e-9) {
    // degenerate (line-like) boundary: mean of distinct traced cells
    double sx = 0.0, sy = 0.0;
    int64_t cnt = 0;
    std::vector<std::pair<int, int>> seen;
    for (const auto& p : path) {
      bool dup = false;
      for (const auto& s : seen)
        if (s == p) {
          dup = true;
          break;
        }
      if (dup) continue;
      seen.push_back(p);
      sx += p.first + 0.5;
      sy += p.second + 0.5;
      ++cnt;
    }
    return {sx / cnt, sy / cnt};
  }
  return {cx / (3.0 * a2), cy / (3.0 * a2)};
}

std::array<int, 4> rounded_crop_box(int img_w, int img_h, const BoxXYXY& box) {
  BoxXYXY c = box.clipped(img_w, img_h);
  if (c.area() <= 0.0) throw std::invalid_argument("crop_region: box outside image");
  int x0 = static_cast<int>(std::floor(c.x0));
  int y0 = static_cast<int>(std::floor(c.y0));
  int x1 = static_cast<int>(std::ceil(c.x1));
  int y1 = static_cast<int>(std::ceil(c.y1));
  x0 = std::clamp(x0, 0, img_w - 1);
  y0 = std::clamp(y0, 0, img_h - 1);
  x1 = std::clamp(x1, x0 + 1, img_w);
  y1 = std::clamp(y1, y0 + 1, img_h);
  return {x0, y0, x1, y1};
}

Image crop_region(const Image& img, const BoxXYXY& box) {
  auto [x0, y0, x1, y1] = rounded_crop_box(img.width, img.height, box);
  Image out(x1 - x0, y1 - y0);
  for (int y = y0; y < y1; ++y)
    for (int x = x0; x < x1; ++x)
      for (int c = 0; c < 3; ++c) out.at(x - x0, y - y0, c) = img.at(x, y, c);
  return out;
}

int64_t mask_intersection_count(const BinaryMask& a, const BinaryMask& b) {
  int64_t n = 0;
  const size_t words = std::min(a.bits.size(), b.bits.size());
  for (size_t i = 0; i < words; ++i) n += std::popcount(a.bits[i] & b.bits[i]);
  return n;
}

bool mask_subset(const BinaryMask& inner, const BinaryMask& outer) {
  const size_t words = std::min(inner.bits.size(), outer.bits.size());
  for (size_t i = 0; i < words; ++i)
    if (inner.bits[i] & ~outer.bits[i]) return false;
  return true;
}

}  // namespace psc
