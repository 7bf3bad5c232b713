#pragma once

#include <string>
#include <vector>

#include "psc/geometry.hpp"

namespace psc {

struct CountRecord {
  std::string image_id;
  int gt = 0;
  double predicted = 0.0;
};

struct CountingMetrics {
  double mae = 0.0;
  double rmse = 0.0;
  double nae = 0.0;
  double sre = 0.0;
  int n = 0;
  int n_relative = 0;  // records with gt >= 1 entering NAE/SRE
};

CountingMetrics counting_metrics(const std::vector<CountRecord>& records);

struct ScoredBox {
  BoxXYXY box;
  int class_id = -1;
  double score = 0.0;
};

struct ImageDetections {
  std::string image_id;
  std::vector<ScoredBox> detections;
  std::vector<ScoredBox> ground_truth;  // score unused
};

struct ApResult {
  double ap = 0.0;    // mean over IoU 0.50:0.05:0.95
  double ap50 = 0.0;  // at IoU 0.50
  std::vector<std::pair<double, double>> per_threshold;  // (iou, ap)
};

// Score-descending greedy matching per image per class (one GT matched at
// most once, IoU >= threshold), then class-averaged area under the
// precision-recall curve. interpolation: "all" (default) or "101".
ApResult detection_ap(const std::vector<ImageDetections>& images, const std::vector<double>& iou_thresholds,
                      const std::string& interpolation = "all");
ApResult detection_ap_coco(const std::vector<ImageDetections>& images, const std::string& interpolation = "all");

// Fraction of GT points with a predicted point within the radius, greedy
// one-to-one nearest matching.
double peak_recall(const std::vector<Point2D>& predicted, const std::vector<Point2D>& gt, double radius);

}  // namespace psc
