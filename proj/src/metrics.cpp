#include "psc/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <map>
#include <numeric>
#include <set>
#include <stdexcept>

namespace psc {

CountingMetrics counting_metrics(const std::vector<CountRecord>& records) {
  if (records.empty()) throw std::invalid_argument("counting_metrics: empty record set");
  CountingMetrics m;
  m.n = static_cast<int>(records.size());
  double abs_sum = 0.0, sq_sum = 0.0, rel_sum = 0.0, rel_sq_sum = 0.0;
  for (const auto& r : records) {
    const double d = static_cast<double>(r.gt) - r.predicted;
    abs_sum += std::abs(d);
    sq_sum += d * d;
    if (r.gt >= 1) {
      rel_sum += std::abs(d) / r.gt;
      rel_sq_sum += d * d / r.gt;
      ++m.n_relative;
    } else {
      std::cerr << "[metrics] warning: record " << r.image_id << " has zero GT count, excluded from NAE/SRE\n";
    }
  }
  m.mae = abs_sum / m.n;
  m.rmse = std::sqrt(sq_sum / m.n);
  if (m.n_relative > 0) {
    m.nae = rel_sum / m.n_relative;
    m.sre = std::sqrt(rel_sq_sum / m.n_relative);
  }
  return m;
}

namespace {

struct RankedDet {
  double score = 0.0;
  int order = 0;  // global input order for deterministic ties
  bool tp = false;
};

double pr_area(std::vector<RankedDet>& dets, int total_gt, const std::string& interpolation) {
  std::stable_sort(dets.begin(), dets.end(), [](const RankedDet& a, const RankedDet& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.order < b.order;
  });
  std::vector<double> precision, recall;
  int tp = 0, fp = 0;
  for (const auto& d : dets) {
    if (d.tp)
      ++tp;
    else
      ++fp;
    precision.push_back(static_cast<double>(tp) / (tp + fp));
    recall.push_back(static_cast<double>(tp) / total_gt);
  }
  if (precision.empty()) return 0.0;
  // monotone envelope from the right
  for (size_t i = precision.size() - 1; i-- > 0;) precision[i] = std::max(precision[i], precision[i + 1]);
  if (interpolation == "101") {
    double acc = 0.0;
    for (int k = 0; k <= 100; ++k) {
      const double r = k / 100.0;
      auto it = std::lower_bound(recall.begin(), recall.end(), r);
      acc += (it == recall.end()) ? 0.0 : precision[static_cast<size_t>(it - recall.begin())];
    }
    return acc / 101.0;
  }
  // all-point interpolation
  double area = 0.0, prev_r = 0.0;
  for (size_t i = 0; i < precision.size(); ++i) {
    if (recall[i] > prev_r) {
      area += (recall[i] - prev_r) * precision[i];
      prev_r = recall[i];
    }
  }
  return area;
}

}  // namespace

ApResult detection_ap(const std::vector<ImageDetections>& images, const std::vector<double>& iou_thresholds,
                      const std::string& interpolation) {
  // classes present in the ground truth
  std::set<int> classes;
  int total_gt = 0;
  for (const auto& img : images)
    for (const auto& gt : img.ground_truth) {
      classes.insert(gt.class_id);
      ++total_gt;
    }
  if (total_gt == 0) throw std::invalid_argument("detection_ap: no ground-truth boxes");

  ApResult res;
  for (double thr : iou_thresholds) {
    double ap_sum = 0.0;
    for (int cls : classes) {
      std::vector<RankedDet> ranked;
      int gt_count = 0;
      int order = 0;
      for (const auto& img : images) {
        std::vector<const ScoredBox*> gts;
        for (const auto& g : img.ground_truth)
          if (g.class_id == cls) gts.push_back(&g);
        gt_count += static_cast<int>(gts.size());

        std::vector<std::pair<double, int>> dets;  // (score, index)
        for (int i = 0; i < static_cast<int>(img.detections.size()); ++i)
          if (img.detections[static_cast<size_t>(i)].class_id == cls)
            dets.emplace_back(img.detections[static_cast<size_t>(i)].score, i);
        std::stable_sort(dets.begin(), dets.end(),
                         [](const auto& a, const auto& b) { return a.first > b.first; });

        std::vector<bool> used(gts.size(), false);
        for (const auto& [score, di] : dets) {
          const ScoredBox& det = img.detections[static_cast<size_t>(di)];
          double best_iou = 0.0;
          int best = -1;
          for (size_t gi = 0; gi < gts.size(); ++gi) {
            if (used[gi]) continue;
            const double v = iou(det.box, gts[gi]->box);
            if (v > best_iou) {
              best_iou = v;
              best = static_cast<int>(gi);
            }
          }
          RankedDet rd;
          rd.score = score;
          rd.order = order++;
          if (best >= 0 && best_iou >= thr) {
            rd.tp = true;
            used[static_cast<size_t>(best)] = true;
          }
          ranked.push_back(rd);
        }
      }
      if (gt_count == 0) continue;
      ap_sum += pr_area(ranked, gt_count, interpolation);
    }
    const double ap_t = ap_sum / static_cast<double>(classes.size());
    res.per_threshold.emplace_back(thr, ap_t);
    if (std::abs(thr - 0.5) < 1e-9) res.ap50 = ap_t;
  }
  double acc = 0.0;
  for (const auto& [thr, ap] : res.per_threshold) acc += ap;
  res.ap = acc / static_cast<double>(res.per_threshold.size());
  return res;
}

ApResult detection_ap_coco(const std::vector<ImageDetections>& images, const std::string& interpolation) {
  std::vector<double> thrs;
  for (int i = 0; i < 10; ++i) thrs.push_back(0.50 + 0.05 * i);
  return detection_ap(images, thrs, interpolation);
}

double peak_recall(const std::vector<Point2D>& predicted, const std::vector<Point2D>& gt, double radius) {
  if (radius <= 0.0) throw std::invalid_argument("peak_recall: radius must be positive");
  if (gt.empty()) throw std::invalid_argument("peak_recall: no ground-truth points");
  struct Pair {
    double d;
    size_t gi, pi;
  };
  std::vector<Pair> pairs;
  for (size_t gi = 0; gi < gt.size(); ++gi)
    for (size_t pi = 0; pi < predicted.size(); ++pi) {
      const double dx = gt[gi].x - predicted[pi].x, dy = gt[gi].y - predicted[pi].y;
      const double d = std::sqrt(dx * dx + dy * dy);
      if (d <= radius) pairs.push_back({d, gi, pi});
    }
  std::stable_sort(pairs.begin(), pairs.end(), [](const Pair& a, const Pair& b) { return a.d < b.d; });
  std::vector<bool> gt_used(gt.size(), false), pred_used(predicted.size(), false);
  int matched = 0;
  for (const auto& p : pairs) {
    if (gt_used[p.gi] || pred_used[p.pi]) continue;
    gt_used[p.gi] = true;
    pred_used[p.pi] = true;
    ++matched;
  }
  return static_cast<double>(matched) / static_cast<double>(gt.size());
}

}  // namespace psc
