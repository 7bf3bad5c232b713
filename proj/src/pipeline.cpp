#include "psc/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <nlohmann/json.hpp>
#include <numeric>
#include <sstream>

namespace psc {

using nlohmann::json;

QueryWeights build_query_weights_fewshot(const Image& image, const std::vector<BoxXYXY>& example_boxes,
                                         int class_id, const EmbedderBackend& embedder) {
  if (example_boxes.empty()) throw std::invalid_argument("build_query_weights: need at least one example box");
  QueryWeights w;
  w.mode = QueryWeights::Mode::ImageQuery;
  for (const auto& box : example_boxes) {
    if (box.area() <= 0.0) throw std::invalid_argument("build_query_weights: degenerate example box");
    w.append(embedder.embed_region(image, box), class_id);
  }
  return w;
}

QueryWeights build_query_weights_zeroshot(const std::vector<int>& class_ids, const EmbedderBackend& embedder) {
  if (class_ids.empty()) throw std::invalid_argument("build_query_weights: need at least one class name");
  QueryWeights w;
  w.mode = QueryWeights::Mode::NameQuery;
  for (int id : class_ids) w.append(embedder.embed_name(id), id);
  return w;
}

std::vector<int> nms(const std::vector<BoxXYXY>& boxes, const std::vector<double>& scores, double iou_thresh) {
  if (boxes.size() != scores.size()) throw std::invalid_argument("nms: box/score length mismatch");
  std::vector<int> order(boxes.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return scores[static_cast<size_t>(a)] > scores[static_cast<size_t>(b)]; });
  std::vector<int> kept;
  for (int idx : order) {
    bool suppressed = false;
    for (int k : kept) {
      if (iou(boxes[static_cast<size_t>(idx)], boxes[static_cast<size_t>(k)]) > iou_thresh) {
        suppressed = true;
        break;
      }
    }
    if (!suppressed) kept.push_back(idx);
  }
  return kept;
}

namespace {

double ms_since(const std::chrono::steady_clock::time_point& t0) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

InferResult infer_with_points(const Image& image, const KeypointSet& points, const QueryWeights& w,
                              const PointDecoderModel<float>& model, const RegionHead<float>& head,
                              const SegmenterBackend& backend, const PipelineConfig& cfg) {
  InferResult result;
  result.diag.candidate_points = static_cast<int>(points.size());
  if (w.count() == 0) throw std::invalid_argument("infer: empty query weights");

  auto t_seg = std::chrono::steady_clock::now();
  std::vector<PromptGroup> groups = points.empty() ? std::vector<PromptGroup>{} : segment_at_points(backend, image, points);
  result.diag.ms_segment = ms_since(t_seg);

  // flatten valid proposals; empty groups (background prompts) drop out here
  struct Flat {
    const MaskProposal* p;
    int group;
  };
  std::vector<Flat> flat;
  for (const auto& g : groups) {
    for (const auto& p : g.proposals) {
      ++result.diag.proposals_total;
      if (!p.empty) flat.push_back({&p, p.prompt_group});
    }
  }
  result.diag.proposals_valid = static_cast<int>(flat.size());

  auto t_cls = std::chrono::steady_clock::now();
  std::vector<Detection> dets;
  if (!flat.empty()) {
    FeatureGrid<float> features = model.encode(image);
    const int n = static_cast<int>(flat.size());
    const int in_dim = head.in_channels * kRoiSide * kRoiSide;
    Tensor<float> rows({n, in_dim});
    for (int i = 0; i < n; ++i) {
      Tensor<float> patch = roi_align(features, flat[static_cast<size_t>(i)].p->box, kRoiSide);
      std::copy(patch.data.begin(), patch.data.end(), rows.ptr() + static_cast<int64_t>(i) * in_dim);
    }
    auto acts = head.forward(std::move(rows));

    for (int i = 0; i < n; ++i) {
      const float* r = acts.r.ptr() + static_cast<int64_t>(i) * head.dim;
      Detection d;
      d.box = flat[static_cast<size_t>(i)].p->box;
      d.prompt_group = flat[static_cast<size_t>(i)].group;
      d.level = flat[static_cast<size_t>(i)].p->level;
      d.query_scores.resize(static_cast<size_t>(w.count()));
      double best = -1.0;
      int best_class = -1;
      // per-class score: max over that class's query rows
      for (int q = 0; q < w.count(); ++q) {
        double z = 0.0;
        for (int k = 0; k < head.dim; ++k) z += w.rows[static_cast<size_t>(q)][static_cast<size_t>(k)] * r[k];
        const double s = 1.0 / (1.0 + std::exp(-cfg.logit_scale * z));
        d.query_scores[static_cast<size_t>(q)] = s;
        if (s > best) {
          best = s;
          best_class = w.class_ids[static_cast<size_t>(q)];
        }
      }
      d.score = best;
      d.class_id = best_class;
      dets.push_back(std::move(d));
    }
  }
  result.diag.ms_classify = ms_since(t_cls);

  auto t_post = std::chrono::steady_clock::now();
  std::vector<BoxXYXY> boxes;
  std::vector<double> scores;
  for (const auto& d : dets) {
    boxes.push_back(d.box);
    scores.push_back(d.score);
  }
  std::vector<int> kept;
  if (cfg.per_class_nms) {
    // per-class suppression behind a flag for multi-class evaluation
    std::vector<int> classes;
    for (const auto& d : dets) classes.push_back(d.class_id);
    std::vector<char> alive(dets.size(), 0);
    std::vector<int> unique_classes = classes;
    std::sort(unique_classes.begin(), unique_classes.end());
    unique_classes.erase(std::unique(unique_classes.begin(), unique_classes.end()), unique_classes.end());
    for (int cls : unique_classes) {
      std::vector<BoxXYXY> cb;
      std::vector<double> cs;
      std::vector<int> ci;
      for (size_t i = 0; i < dets.size(); ++i)
        if (classes[i] == cls) {
          cb.push_back(boxes[i]);
          cs.push_back(scores[i]);
          ci.push_back(static_cast<int>(i));
        }
      for (int k : nms(cb, cs, cfg.nms_iou)) alive[static_cast<size_t>(ci[static_cast<size_t>(k)])] = 1;
    }
    for (size_t i = 0; i < dets.size(); ++i)
      if (alive[i]) kept.push_back(static_cast<int>(i));
    // keep deterministic score ordering
    std::stable_sort(kept.begin(), kept.end(), [&](int a, int b) { return scores[static_cast<size_t>(a)] > scores[static_cast<size_t>(b)]; });
  } else {
    kept = nms(boxes, scores, cfg.nms_iou);
  }

  for (int idx : kept) result.detections.push_back(dets[static_cast<size_t>(idx)]);
  result.diag.detections_after_nms = static_cast<int>(result.detections.size());
  for (const auto& d : result.detections)
    if (d.score > cfg.count_threshold) ++result.count;
  result.diag.ms_post = ms_since(t_post);
  return result;
}

InferResult infer(const Image& image, const QueryWeights& w, const PointDecoderModel<float>& model,
                  const RegionHead<float>& head, const SegmenterBackend& backend, const PipelineConfig& cfg) {
  auto t0 = std::chrono::steady_clock::now();
  Heatmap hm = model.predict(image);
  std::vector<Peak> peaks = extract_peaks(hm, cfg.k_max, cfg.heatmap_tau);
  KeypointSet points = peaks_to_image_coords(peaks, hm.stride);
  const double ms_point = ms_since(t0);
  InferResult r = infer_with_points(image, points, w, model, head, backend, cfg);
  r.diag.ms_point = ms_point;
  return r;
}

InferResult infer_grid_baseline(const Image& image, const QueryWeights& w, const PointDecoderModel<float>& model,
                                const RegionHead<float>& head, const SegmenterBackend& backend,
                                const PipelineConfig& cfg) {
  KeypointSet points = grid_prompts(cfg.grid_n, image.width, image.height);
  return infer_with_points(image, points, w, model, head, backend, cfg);
}

std::string detections_to_jsonl(const std::string& image_id, const std::vector<Detection>& dets) {
  std::ostringstream out;
  for (const auto& d : dets) {
    json j;
    j["image"] = image_id;
    j["box"] = {d.box.x0, d.box.y0, d.box.x1, d.box.y1};
    j["class"] = d.class_id;
    j["score"] = d.score;
    j["prompt_group"] = d.prompt_group;
    j["level"] = mask_level_name(d.level);
    out << j.dump() << "\n";
  }
  return out.str();
}

}  // namespace psc
