#include "psc/evaluator.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <nlohmann/json.hpp>
#include <sstream>
#include <thread>

namespace psc {

using nlohmann::json;

namespace {

SceneEval eval_scene(const AnnotatedScene& scene, const std::string& query_mode, const std::string& prompt_mode,
                     const PointDecoderModel<float>& model, const RegionHead<float>& head,
                     const EmbedderBackend& embedder, const PipelineConfig& pipe) {
  SceneEval ev;
  ev.id = scene.id;
  ev.gt_count = scene.target_count();

  OracleBackend backend(scene, pipe.box_prompt_size);
  QueryWeights w;
  if (query_mode == "few") {
    w = build_query_weights_fewshot(scene.image, scene.exemplar_boxes, scene.target_class, embedder);
  } else if (query_mode == "zero") {
    w = build_query_weights_zeroshot({scene.target_class}, embedder);
  } else {
    throw std::invalid_argument("eval: unknown query mode " + query_mode);
  }

  InferResult result;
  if (prompt_mode == "heatmap") {
    result = infer(scene.image, w, model, head, backend, pipe);
  } else if (prompt_mode == "grid") {
    result = infer_grid_baseline(scene.image, w, model, head, backend, pipe);
  } else {
    throw std::invalid_argument("eval: unknown prompt mode " + prompt_mode);
  }

  ev.predicted_count = result.count;
  ev.detections = std::move(result.detections);
  ev.diag = result.diag;
  for (const auto& ins : scene.instances)
    if (ins.class_id == scene.target_class) ev.gt_boxes.push_back({ins.box, scene.target_class, 1.0});

  // localization diagnostic in heatmap mode
  if (prompt_mode == "heatmap") {
    Heatmap hm = model.predict(scene.image);
    auto peaks = extract_peaks(hm, pipe.k_max, pipe.heatmap_tau);
    auto points = peaks_to_image_coords(peaks, hm.stride);
    std::vector<Point2D> pred, gt;
    for (const auto& kp : points) pred.push_back(kp.p);
    for (const auto& ins : scene.instances) gt.push_back(ins.point);
    ev.peak_recall_value = gt.empty() ? 0.0 : peak_recall(pred, gt, 4.0);
  }
  return ev;
}

}  // namespace

std::vector<SceneEval> evaluate_split(const std::string& dataset_root, const DatasetManifest& manifest,
                                      const std::string& split, const std::string& query_mode,
                                      const std::string& prompt_mode, const PointDecoderModel<float>& model,
                                      const RegionHead<float>& head, const EmbedderBackend& embedder,
                                      const PipelineConfig& pipe, int jobs) {
  const auto metas = manifest.split_scenes(split);
  std::vector<SceneEval> out(metas.size());
  if (metas.empty()) return out;
  jobs = std::max(1, jobs);

  std::atomic<size_t> next{0};
  auto worker = [&]() {
    for (;;) {
      const size_t i = next.fetch_add(1);
      if (i >= metas.size()) break;
      AnnotatedScene scene = load_scene(dataset_root, *metas[i]);
      out[i] = eval_scene(scene, query_mode, prompt_mode, model, head, embedder, pipe);
    }
  };
  if (jobs == 1) {
    worker();
  } else {
    std::vector<std::thread> threads;
    for (int t = 0; t < jobs; ++t) threads.emplace_back(worker);
    for (auto& t : threads) t.join();
  }
  std::stable_sort(out.begin(), out.end(), [](const SceneEval& a, const SceneEval& b) { return a.id < b.id; });
  return out;
}

EvalSummary summarize(const std::vector<SceneEval>& evals, const std::string& split, const std::string& query_mode,
                      const std::string& prompt_mode, double count_threshold) {
  EvalSummary s;
  s.split = split;
  s.query_mode = query_mode;
  s.prompt_mode = prompt_mode;
  s.scenes = static_cast<int>(evals.size());

  std::vector<CountRecord> records;
  std::vector<ImageDetections> images;
  double recall_acc = 0.0, points_acc = 0.0;
  for (const auto& ev : evals) {
    int count = 0;
    for (const auto& d : ev.detections)
      if (d.score > count_threshold) ++count;
    records.push_back({ev.id, ev.gt_count, static_cast<double>(count)});
    ImageDetections img;
    img.image_id = ev.id;
    img.ground_truth = ev.gt_boxes;
    for (const auto& d : ev.detections) img.detections.push_back({d.box, d.class_id, d.score});
    images.push_back(std::move(img));
    recall_acc += ev.peak_recall_value;
    points_acc += ev.diag.candidate_points;
  }
  s.counting = counting_metrics(records);
  s.ap = detection_ap_coco(images);
  s.mean_peak_recall = evals.empty() ? 0.0 : recall_acc / evals.size();
  s.mean_candidate_points = evals.empty() ? 0.0 : points_acc / evals.size();
  return s;
}

double calibrate_count_threshold(const std::vector<SceneEval>& evals) {
  // candidate thresholds between adjacent observed scores
  std::vector<double> scores;
  for (const auto& ev : evals)
    for (const auto& d : ev.detections) scores.push_back(d.score);
  if (scores.empty()) return 0.5;
  std::sort(scores.begin(), scores.end());
  scores.erase(std::unique(scores.begin(), scores.end()), scores.end());
  std::vector<double> candidates{0.5};
  for (size_t i = 0; i + 1 < scores.size(); ++i) candidates.push_back(0.5 * (scores[i] + scores[i + 1]));
  candidates.push_back(std::min(1.0, scores.back() + 1e-6));

  double best_thr = 0.5, best_mae = 1e30;
  for (double thr : candidates) {
    double mae = 0.0;
    for (const auto& ev : evals) {
      int count = 0;
      for (const auto& d : ev.detections)
        if (d.score > thr) ++count;
      mae += std::abs(count - ev.gt_count);
    }
    mae /= static_cast<double>(evals.size());
    if (mae < best_mae - 1e-12 || (std::abs(mae - best_mae) <= 1e-12 && thr < best_thr)) {
      best_mae = mae;
      best_thr = thr;
    }
  }
  return best_thr;
}

std::string summary_to_json(const EvalSummary& s) {
  json j;
  j["split"] = s.split;
  j["query_mode"] = s.query_mode;
  j["prompt_mode"] = s.prompt_mode;
  j["scenes"] = s.scenes;
  j["MAE"] = s.counting.mae;
  j["RMSE"] = s.counting.rmse;
  j["NAE"] = s.counting.nae;
  j["SRE"] = s.counting.sre;
  j["AP"] = s.ap.ap;
  j["AP50"] = s.ap.ap50;
  j["mean_peak_recall"] = s.mean_peak_recall;
  j["mean_candidate_points"] = s.mean_candidate_points;
  return j.dump(2);
}

std::string report_table(const std::vector<EvalSummary>& rows) {
  std::ostringstream out;
  out << "mode       prompts   scenes     MAE    RMSE     NAE     SRE      AP    AP50  avg-points\n";
  out << "---------- -------- ------- ------- ------- ------- ------- ------- ------- ----------\n";
  char buf[256];
  for (const auto& s : rows) {
    std::snprintf(buf, sizeof(buf), "%-10s %-8s %7d %7.3f %7.3f %7.3f %7.3f %7.3f %7.3f %10.1f\n",
                  s.query_mode.c_str(), s.prompt_mode.c_str(), s.scenes, s.counting.mae, s.counting.rmse,
                  s.counting.nae, s.counting.sre, s.ap.ap, s.ap.ap50, s.mean_candidate_points);
    out << buf;
  }
  return out.str();
}

}  // namespace psc
