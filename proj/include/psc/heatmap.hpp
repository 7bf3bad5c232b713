#pragma once

#include <string>
#include <vector>

#include "psc/geometry.hpp"

namespace psc {

// Stride-s score grid in [0,1]; used both as training target and as the
// decoder output.
struct Heatmap {
  int width = 0;   // cells
  int height = 0;  // cells
  int stride = 1;  // image pixels per cell
  std::vector<double> v;

  Heatmap() = default;
  Heatmap(int w, int h, int s) : width(w), height(h), stride(s), v(static_cast<size_t>(w) * h, 0.0) {}

  double& at(int x, int y) { return v[static_cast<size_t>(y) * width + x]; }
  double at(int x, int y) const { return v[static_cast<size_t>(y) * width + x]; }
};

enum class PointSource { GroundTruth, OracleCenter };

struct Keypoint {
  Point2D p;
  PointSource source = PointSource::GroundTruth;
};

using KeypointSet = std::vector<Keypoint>;

// Concatenation without dedup; overlapping Gaussians resolve via max at splat
// time.
KeypointSet build_target_points(const KeypointSet& oracle_centers, const KeypointSet& gt_points);

// H_xy = max_p exp(-((s*x - p.x)^2 + (s*y - p.y)^2) / (2 sigma^2))
Heatmap splat_targets(const KeypointSet& points, int map_w, int map_h, int stride, double sigma);

struct PointLossResult {
  double loss = 0.0;
  Heatmap grad;  // d loss / d pred, same shape as pred
};

// Mean over cells of (pred - target)^2.
PointLossResult point_loss(const Heatmap& pred, const Heatmap& target);

struct Peak {
  int x = 0;
  int y = 0;
  double score = 0.0;
};

// Cells equal to their 3x3 neighborhood max (ties kept) and strictly above
// tau, sorted by score descending (stable in scan order), truncated to k_max.
std::vector<Peak> extract_peaks(const Heatmap& h, int k_max, double tau);

// Image-space cell centers; no sub-cell refinement.
KeypointSet peaks_to_image_coords(const std::vector<Peak>& peaks, int stride);

// Portable array file: magic + dims + stride header, float32 little-endian
// row-major payload.
void save_heatmap(const std::string& path, const Heatmap& h);
Heatmap load_heatmap(const std::string& path);

}  // namespace psc
