#pragma once

#include <string>
#include <vector>

#include "psc/classifier.hpp"
#include "psc/embedder.hpp"
#include "psc/heatmap.hpp"
#include "psc/point_decoder.hpp"
#include "psc/proposals.hpp"

namespace psc {

struct PipelineConfig {
  int k_max = 1000;               // peak budget
  double heatmap_tau = 0.05;      // peak score threshold
  double nms_iou = 0.5;
  double count_threshold = 0.5;   // calibrated on the validation split
  double box_prompt_size = 16.0;
  double logit_scale = kLogitScale;
  int grid_n = 32;                // baseline prompt grid
  bool per_class_nms = false;
};

struct Detection {
  BoxXYXY box;
  int class_id = -1;
  double score = 0.0;
  int prompt_group = -1;
  MaskLevel level = MaskLevel::Whole;
  std::vector<double> query_scores;  // per query row
};

struct InferDiagnostics {
  int candidate_points = 0;
  int proposals_total = 0;
  int proposals_valid = 0;
  int detections_after_nms = 0;
  double ms_point = 0.0;
  double ms_segment = 0.0;
  double ms_classify = 0.0;
  double ms_post = 0.0;
};

struct InferResult {
  std::vector<Detection> detections;  // post-NMS, all scores
  int count = 0;                       // detections above the count threshold
  InferDiagnostics diag;
};

// One unit-norm row per example box or class name.
QueryWeights build_query_weights_fewshot(const Image& image, const std::vector<BoxXYXY>& example_boxes,
                                         int class_id, const EmbedderBackend& embedder);
QueryWeights build_query_weights_zeroshot(const std::vector<int>& class_ids, const EmbedderBackend& embedder);

// Greedy descending-score suppression at IoU > threshold; stable tie-break
// by input index. Returns kept indices in selection order.
std::vector<int> nms(const std::vector<BoxXYXY>& boxes, const std::vector<double>& scores, double iou_thresh);

// point -> segment -> classify -> NMS -> threshold -> count
InferResult infer(const Image& image, const QueryWeights& w, const PointDecoderModel<float>& model,
                  const RegionHead<float>& head, const SegmenterBackend& backend, const PipelineConfig& cfg);

// Same downstream path with uniform grid prompts instead of heatmap peaks.
InferResult infer_grid_baseline(const Image& image, const QueryWeights& w, const PointDecoderModel<float>& model,
                                const RegionHead<float>& head, const SegmenterBackend& backend,
                                const PipelineConfig& cfg);

// Shared tail: segment at the given points, classify, post-process.
InferResult infer_with_points(const Image& image, const KeypointSet& points, const QueryWeights& w,
                              const PointDecoderModel<float>& model, const RegionHead<float>& head,
                              const SegmenterBackend& backend, const PipelineConfig& cfg);

std::string detections_to_jsonl(const std::string& image_id, const std::vector<Detection>& dets);

}  // namespace psc
