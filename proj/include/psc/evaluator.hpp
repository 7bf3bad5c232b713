#pragma once

#include <string>
#include <vector>

#include "psc/config.hpp"
#include "psc/metrics.hpp"
#include "psc/pipeline.hpp"
#include "psc/synthdata.hpp"

namespace psc {

struct SceneEval {
  std::string id;
  int gt_count = 0;
  int predicted_count = 0;
  std::vector<Detection> detections;      // post-NMS
  std::vector<ScoredBox> gt_boxes;         // target class
  InferDiagnostics diag;
  double peak_recall_value = 0.0;
};

struct EvalSummary {
  std::string split;
  std::string query_mode;   // few | zero
  std::string prompt_mode;  // heatmap | grid
  CountingMetrics counting;
  ApResult ap;
  double mean_peak_recall = 0.0;
  double mean_candidate_points = 0.0;
  int scenes = 0;
};

// Runs the pipeline over one split; scenes load from disk per worker and
// results assemble in image-id order regardless of the job count.
std::vector<SceneEval> evaluate_split(const std::string& dataset_root, const DatasetManifest& manifest,
                                      const std::string& split, const std::string& query_mode,
                                      const std::string& prompt_mode, const PointDecoderModel<float>& model,
                                      const RegionHead<float>& head, const EmbedderBackend& embedder,
                                      const PipelineConfig& pipe, int jobs);

EvalSummary summarize(const std::vector<SceneEval>& evals, const std::string& split, const std::string& query_mode,
                      const std::string& prompt_mode, double count_threshold);

// Count-MAE-minimizing score threshold over the given evaluations.
double calibrate_count_threshold(const std::vector<SceneEval>& evals);

std::string summary_to_json(const EvalSummary& s);
std::string report_table(const std::vector<EvalSummary>& rows);

}  // namespace psc
