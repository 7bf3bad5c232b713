#include "psc/heatmap.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace psc {

KeypointSet build_target_points(const KeypointSet& oracle_centers, const KeypointSet& gt_points) {
  KeypointSet out;
  out.reserve(oracle_centers.size() + gt_points.size());
  out.insert(out.end(), oracle_centers.begin(), oracle_centers.end());
  out.insert(out.end(), gt_points.begin(), gt_points.end());
  return out;
}

Heatmap splat_targets(const KeypointSet& points, int map_w, int map_h, int stride, double sigma) {
  if (sigma <= 0.0) throw std::invalid_argument("splat_targets: sigma must be positive");
  Heatmap h(map_w, map_h, stride);
  const double inv = 1.0 / (2.0 * sigma * sigma);
  for (const Keypoint& kp : points) {
    // only cells within 5 sigma matter
    const double r = 5.0 * sigma;
    const int x0 = std::max(0, static_cast<int>(std::floor((kp.p.x - r) / stride)));
    const int x1 = std::min(map_w - 1, static_cast<int>(std::ceil((kp.p.x + r) / stride)));
    const int y0 = std::max(0, static_cast<int>(std::floor((kp.p.y - r) / stride)));
    const int y1 = std::min(map_h - 1, static_cast<int>(std::ceil((kp.p.y + r) / stride)));
    for (int y = y0; y <= y1; ++y) {
      const double dy = stride * static_cast<double>(y) - kp.p.y;
      for (int x = x0; x <= x1; ++x) {
        const double dx = stride * static_cast<double>(x) - kp.p.x;
        const double val = std::exp(-(dx * dx + dy * dy) * inv);
        double& cell = h.at(x, y);
        if (val > cell) cell = val;
      }
    }
  }
  return h;
}

PointLossResult point_loss(const Heatmap& pred, const Heatmap& target) {
  if (pred.width != target.width || pred.height != target.height)
    throw std::invalid_argument("point_loss: shape mismatch");
  PointLossResult r;
  r.grad = Heatmap(pred.width, pred.height, pred.stride);
  const size_t n = pred.v.size();
  double acc = 0.0;
  for (size_t i = 0; i < n; ++i) {
    const double d = pred.v[i] - target.v[i];
    acc += d * d;
    r.grad.v[i] = 2.0 * d / static_cast<double>(n);
  }
  r.loss = acc / static_cast<double>(n);
  return r;
}

std::vector<Peak> extract_peaks(const Heatmap& h, int k_max, double tau) {
  if (k_max < 1) throw std::invalid_argument("extract_peaks: k_max must be >= 1");
  std::vector<Peak> peaks;
  for (int y = 0; y < h.height; ++y) {
    for (int x = 0; x < h.width; ++x) {
      const double v = h.at(x, y);
      if (v <= tau) continue;
      bool is_max = true;
      for (int dy = -1; dy <= 1 && is_max; ++dy) {
        for (int dx = -1; dx <= 1; ++dx) {
          if (dx == 0 && dy == 0) continue;
          const int nx = x + dx, ny = y + dy;
          if (nx < 0 || ny < 0 || nx >= h.width || ny >= h.height) continue;
          if (h.at(nx, ny) > v) {
            is_max = false;
            break;
          }
        }
      }
      if (is_max) peaks.push_back({x, y, v});
    }
  }
  std::stable_sort(peaks.begin(), peaks.end(), [](const Peak& a, const Peak& b) { return a.score > b.score; });
  if (static_cast<int>(peaks.size()) > k_max) peaks.resize(static_cast<size_t>(k_max));
  return peaks;
}

KeypointSet peaks_to_image_coords(const std::vector<Peak>& peaks, int stride) {
  KeypointSet out;
  out.reserve(peaks.size());
  const double half = stride / 2.0;
  for (const Peak& pk : peaks)
    out.push_back({{stride * static_cast<double>(pk.x) + half, stride * static_cast<double>(pk.y) + half},
                   PointSource::OracleCenter});
  return out;
}

namespace {
constexpr char kMagic[4] = {'P', 'S', 'H', 'M'};
}

void save_heatmap(const std::string& path, const Heatmap& h) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("save_heatmap: cannot open " + path);
  uint32_t hdr[3] = {static_cast<uint32_t>(h.height), static_cast<uint32_t>(h.width),
                     static_cast<uint32_t>(h.stride)};
  f.write(kMagic, 4);
  f.write(reinterpret_cast<const char*>(hdr), sizeof(hdr));
  std::vector<float> buf(h.v.begin(), h.v.end());
  f.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size() * sizeof(float)));
  if (!f) throw std::runtime_error("save_heatmap: write failed for " + path);
}

Heatmap load_heatmap(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("load_heatmap: cannot open " + path);
  char magic[4];
  uint32_t hdr[3];
  f.read(magic, 4);
  f.read(reinterpret_cast<char*>(hdr), sizeof(hdr));
  if (!f || std::memcmp(magic, kMagic, 4) != 0) throw std::runtime_error("load_heatmap: bad header in " + path);
  Heatmap h(static_cast<int>(hdr[1]), static_cast<int>(hdr[0]), static_cast<int>(hdr[2]));
  std::vector<float> buf(h.v.size());
  f.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size() * sizeof(float)));
  if (!f) throw std::runtime_error("load_heatmap: truncated payload in " + path);
  std::copy(buf.begin(), buf.end(), h.v.begin());
  return h;
}

}  // namespace psc
