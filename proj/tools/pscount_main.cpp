// Command-line entry points: gen-data, train, eval, infer, report.
#include <CLI11.hpp>
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <nlohmann/json.hpp>

#include "psc/checkpoint.hpp"
#include "psc/config.hpp"
#include "psc/evaluator.hpp"
#include "psc/hash.hpp"
#include "psc/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace psc;

namespace {

struct CommonArgs {
  std::string config_path;
  std::vector<std::string> overrides;
  std::string dataset;
  std::string out;
};

RunConfig resolve_config(const CommonArgs& args) {
  std::map<std::string, std::string> kv;
  if (!args.config_path.empty()) kv = load_config_file(args.config_path).to_map();
  apply_overrides(kv, args.overrides);
  RunConfig cfg = RunConfig::from_map(kv);
  if (!args.dataset.empty()) cfg.dataset = args.dataset;
  if (!args.out.empty()) cfg.out_dir = args.out;
  if (cfg.out_dir.empty()) {
    const char* root = std::getenv("PSCOUNT_OUT_ROOT");
    cfg.out_dir = (fs::path(root ? root : "runs") / ("run-" + cfg.config_hash().substr(0, 8))).string();
  }
  return cfg;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  f << text;
}

void write_run_config(const RunConfig& cfg) { write_text(fs::path(cfg.out_dir) / "config.ini", cfg.serialize()); }

struct Models {
  PointDecoderModel<float> model;
  RegionHead<float> head;
  explicit Models(const RunConfig& cfg)
      : model(cfg.model, cfg.seed), head(cfg.model.channels.back(), cfg.region_hidden, cfg.embed_dim, cfg.seed) {}
  std::vector<nn::ParamRef<float>> params() {
    auto p = model.params();
    for (auto& h : head.params()) p.push_back(h);
    return p;
  }
};

struct LoadedDataset {
  DatasetManifest manifest;
  ToyEmbedder embedder;
  explicit LoadedDataset(const RunConfig& cfg)
      : manifest(load_manifest(cfg.dataset)), embedder(manifest.registry.embed_dim, manifest.registry.seed) {
    attach_name_embeddings(manifest.registry, embedder);
  }
};

// ---- plots ----------------------------------------------------------------

void plot_count_scatter(const fs::path& path, const std::vector<SceneEval>& evals, double threshold) {
  const int side = 320, margin = 30;
  Image img(side, side, 250);
  int max_c = 1;
  for (const auto& ev : evals) max_c = std::max(max_c, ev.gt_count);
  for (const auto& ev : evals) {
    int count = 0;
    for (const auto& d : ev.detections)
      if (d.score > threshold) ++count;
    max_c = std::max(max_c, count);
  }
  auto to_px = [&](double v) { return margin + static_cast<int>((side - 2.0 * margin) * v / max_c); };
  for (int v = 0; v <= max_c; ++v) img.set_rgb(to_px(v), side - to_px(v), 180, 180, 180);  // identity line
  for (const auto& ev : evals) {
    int count = 0;
    for (const auto& d : ev.detections)
      if (d.score > threshold) ++count;
    draw_dot(img, to_px(ev.gt_count), side - to_px(count), 200, 40, 40);
  }
  save_png(path.string(), img);
}

void plot_pr_curve(const fs::path& path, const std::vector<SceneEval>& evals) {
  struct Det {
    double score;
    bool tp;
  };
  std::vector<Det> dets;
  int total_gt = 0;
  for (const auto& ev : evals) {
    total_gt += static_cast<int>(ev.gt_boxes.size());
    std::vector<bool> used(ev.gt_boxes.size(), false);
    std::vector<size_t> order(ev.detections.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(),
                     [&](size_t a, size_t b) { return ev.detections[a].score > ev.detections[b].score; });
    for (size_t oi : order) {
      const auto& d = ev.detections[oi];
      double best = 0.0;
      int bi = -1;
      for (size_t g = 0; g < ev.gt_boxes.size(); ++g) {
        if (used[g]) continue;
        const double v = iou(d.box, ev.gt_boxes[g].box);
        if (v > best) {
          best = v;
          bi = static_cast<int>(g);
        }
      }
      const bool tp = bi >= 0 && best >= 0.5;
      if (tp) used[static_cast<size_t>(bi)] = true;
      dets.push_back({d.score, tp});
    }
  }
  std::stable_sort(dets.begin(), dets.end(), [](const Det& a, const Det& b) { return a.score > b.score; });
  const int side = 320, margin = 30;
  Image img(side, side, 250);
  int tp = 0, fp = 0;
  for (const auto& d : dets) {
    d.tp ? ++tp : ++fp;
    const double recall = total_gt ? static_cast<double>(tp) / total_gt : 0.0;
    const double precision = static_cast<double>(tp) / (tp + fp);
    const int x = margin + static_cast<int>((side - 2.0 * margin) * recall);
    const int y = side - margin - static_cast<int>((side - 2.0 * margin) * precision);
    draw_dot(img, x, y, 40, 40, 200);
  }
  save_png(path.string(), img);
}

// ---- subcommands ----------------------------------------------------------

int cmd_gen_data(const CommonArgs& args, bool force) {
  RunConfig cfg = resolve_config(args);
  if (cfg.dataset.empty()) throw std::runtime_error("gen-data: --dataset (output dir) required");
  if (fs::exists(cfg.dataset) && !fs::is_empty(cfg.dataset) && !force)
    throw std::runtime_error("gen-data: " + cfg.dataset + " is not empty (use --force to overwrite)");
  if (force && fs::exists(cfg.dataset)) fs::remove_all(cfg.dataset);

  ToyEmbedder embedder(cfg.embed_dim, cfg.seed);
  CategoryRegistry registry = build_registry(cfg.data_categories, cfg.seed, embedder);
  const auto manifest = make_dataset(registry, cfg.data_sizes, cfg.seed, cfg.dataset, cfg.scene);
  write_text(fs::path(cfg.dataset) / "dataset-config.ini", cfg.serialize());
  std::cout << "dataset written to " << cfg.dataset << " (" << manifest.scenes.size() << " scenes, "
            << registry.defs.size() << " categories)\n";
  return 0;
}

int cmd_train(const CommonArgs& args, bool no_kd, const std::string& resume, const std::string& stage) {
  RunConfig cfg = resolve_config(args);
  if (cfg.dataset.empty()) throw std::runtime_error("train: --dataset required");
  if (no_kd) cfg.train.kd_weight = 0.0;
  if (!stage.empty()) cfg.train.stage = stage;
  fs::create_directories(cfg.out_dir);
  write_run_config(cfg);

  LoadedDataset data(cfg);
  JointTrainer trainer(cfg, data.manifest.registry, data.embedder);

  const auto t0 = std::chrono::steady_clock::now();
  const auto train_metas = data.manifest.split_scenes("train");
  for (const auto* meta : train_metas) trainer.add_scene(load_scene(cfg.dataset, *meta));
  const double prep_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::cerr << "[train] prepared " << train_metas.size() << " scenes in " << prep_s << " s\n";

  int start_step = 0;
  if (!resume.empty()) {
    const auto meta = load_checkpoint(resume, trainer.all_params(), &trainer.optimizer());
    start_step = static_cast<int>(meta.step);
    std::cerr << "[train] resumed from " << resume << " at step " << start_step << "\n";
  }

  std::vector<LossRow> curve;
  trainer.run(start_step, cfg.train.steps, curve, [&](const LossRow& r) {
    std::cerr << "[train] step " << r.step << " point " << r.point << " cls " << r.cls << " kd " << r.kd
              << " total " << r.total << "\n";
  });

  {
    std::ofstream f(fs::path(cfg.out_dir) / "loss.csv");
    f << "step,point,cls,kd,total\n";
    for (const auto& r : curve)
      f << r.step << "," << r.point << "," << r.cls << "," << r.kd << "," << r.total << "\n";
  }

  // calibrate count thresholds on the validation split
  CheckpointMeta meta;
  meta.seed = cfg.seed;
  meta.config_hash = cfg.config_hash();
  meta.step = cfg.train.steps;
  {
    const auto few = evaluate_split(cfg.dataset, data.manifest, "val", "few", "heatmap", trainer.model(),
                                    trainer.head(), data.embedder, cfg.pipe, cfg.jobs);
    const auto zero = evaluate_split(cfg.dataset, data.manifest, "val", "zero", "heatmap", trainer.model(),
                                     trainer.head(), data.embedder, cfg.pipe, cfg.jobs);
    const double thr_few = calibrate_count_threshold(few);
    const double thr_zero = calibrate_count_threshold(zero);
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", thr_few);
    meta.extra["count_threshold_few"] = buf;
    std::snprintf(buf, sizeof(buf), "%.17g", thr_zero);
    meta.extra["count_threshold_zero"] = buf;
    json cal{{"count_threshold_few", thr_few}, {"count_threshold_zero", thr_zero}};
    write_text(fs::path(cfg.out_dir) / "calibration.json", cal.dump(2) + "\n");
    const auto sfew = summarize(few, "val", "few", "heatmap", thr_few);
    const auto szero = summarize(zero, "val", "zero", "heatmap", thr_zero);
    std::cerr << "[train] val few  MAE " << sfew.counting.mae << " NAE " << sfew.counting.nae << " AP50 "
              << sfew.ap.ap50 << " thr " << thr_few << "\n";
    std::cerr << "[train] val zero MAE " << szero.counting.mae << " NAE " << szero.counting.nae << " AP50 "
              << szero.ap.ap50 << " thr " << thr_zero << "\n";
  }

  save_checkpoint((fs::path(cfg.out_dir) / "checkpoint").string(), trainer.all_params(), &trainer.optimizer(), meta);
  std::cout << "checkpoint written to " << (fs::path(cfg.out_dir) / "checkpoint").string() << "\n";
  return 0;
}

int cmd_eval(const CommonArgs& args, const std::string& checkpoint, const std::string& mode,
             const std::string& prompts, const std::string& split, int jobs_flag, bool plots) {
  RunConfig cfg = resolve_config(args);
  if (cfg.dataset.empty()) throw std::runtime_error("eval: --dataset required");
  if (!checkpoint.empty()) cfg.checkpoint = checkpoint;
  if (cfg.checkpoint.empty()) throw std::runtime_error("eval: --checkpoint required");
  if (!mode.empty()) cfg.eval_mode = mode;
  if (!prompts.empty()) cfg.eval_prompts = prompts;
  if (!split.empty()) cfg.eval_split = split;
  if (jobs_flag > 0) cfg.jobs = jobs_flag;

  LoadedDataset data(cfg);
  Models models(cfg);
  const CheckpointMeta meta = load_checkpoint(cfg.checkpoint, models.params(), nullptr);

  double threshold = cfg.eval_mode == "zero" ? cfg.count_threshold_zero : cfg.pipe.count_threshold;
  if (cfg.use_calibrated) {
    const std::string key = cfg.eval_mode == "zero" ? "count_threshold_zero" : "count_threshold_few";
    auto it = meta.extra.find(key);
    if (it != meta.extra.end()) threshold = std::stod(it->second);
  }

  const auto evals = evaluate_split(cfg.dataset, data.manifest, cfg.eval_split, cfg.eval_mode, cfg.eval_prompts,
                                    models.model, models.head, data.embedder, cfg.pipe, cfg.jobs);
  EvalSummary summary = summarize(evals, cfg.eval_split, cfg.eval_mode, cfg.eval_prompts, threshold);

  fs::create_directories(cfg.out_dir);
  // pin the resolved threshold into the stored config so a re-run is exact
  RunConfig stored = cfg;
  stored.use_calibrated = false;
  if (cfg.eval_mode == "zero")
    stored.count_threshold_zero = threshold;
  else
    stored.pipe.count_threshold = threshold;
  write_text(fs::path(cfg.out_dir) / "config.ini", stored.serialize());

  std::string jsonl;
  for (const auto& ev : evals) jsonl += detections_to_jsonl(ev.id, ev.detections);
  write_text(fs::path(cfg.out_dir) / "detections.jsonl", jsonl);
  write_text(fs::path(cfg.out_dir) / "metrics.json", summary_to_json(summary) + "\n");

  json diag;
  diag["scenes"] = summary.scenes;
  diag["mean_candidate_points"] = summary.mean_candidate_points;
  diag["mean_peak_recall"] = summary.mean_peak_recall;
  diag["count_threshold"] = threshold;
  diag["per_scene"] = json::array();
  for (const auto& ev : evals) {
    int count = 0;
    for (const auto& d : ev.detections)
      if (d.score > threshold) ++count;
    diag["per_scene"].push_back(json{{"id", ev.id},
                                     {"gt", ev.gt_count},
                                     {"predicted", count},
                                     {"candidate_points", ev.diag.candidate_points},
                                     {"proposals_valid", ev.diag.proposals_valid},
                                     {"ms_segment", ev.diag.ms_segment},
                                     {"ms_classify", ev.diag.ms_classify}});
  }
  write_text(fs::path(cfg.out_dir) / "diagnostics.json", diag.dump(2) + "\n");
  write_text(fs::path(cfg.out_dir) / "report.txt", report_table({summary}));
  if (plots) {
    plot_count_scatter(fs::path(cfg.out_dir) / "count_scatter.png", evals, threshold);
    plot_pr_curve(fs::path(cfg.out_dir) / "pr_curve.png", evals);
  }

  std::cout << report_table({summary});
  return 0;
}

int cmd_infer(const CommonArgs& args, const std::string& checkpoint, const std::string& scene_id,
              const std::string& class_name, const std::string& prompts, const std::string& heatmap_dump) {
  RunConfig cfg = resolve_config(args);
  if (cfg.dataset.empty()) throw std::runtime_error("infer: --dataset required");
  if (!checkpoint.empty()) cfg.checkpoint = checkpoint;
  if (cfg.checkpoint.empty()) throw std::runtime_error("infer: --checkpoint required");

  LoadedDataset data(cfg);
  Models models(cfg);
  const CheckpointMeta meta = load_checkpoint(cfg.checkpoint, models.params(), nullptr);

  const SceneMeta* target_meta = nullptr;
  for (const auto& m : data.manifest.scenes)
    if (m.id == scene_id) target_meta = &m;
  if (!target_meta) throw std::runtime_error("infer: unknown scene id " + scene_id);
  AnnotatedScene scene = load_scene(cfg.dataset, *target_meta);

  QueryWeights w;
  double threshold;
  if (!class_name.empty()) {
    int id = -1;
    for (const auto& d : data.manifest.registry.defs)
      if (d.name == class_name) id = d.id;
    if (id < 0) throw std::runtime_error("infer: unknown class name " + class_name);
    w = build_query_weights_zeroshot({id}, data.embedder);
    threshold = cfg.count_threshold_zero;
    if (cfg.use_calibrated && meta.extra.count("count_threshold_zero"))
      threshold = std::stod(meta.extra.at("count_threshold_zero"));
  } else {
    w = build_query_weights_fewshot(scene.image, scene.exemplar_boxes, scene.target_class, data.embedder);
    threshold = cfg.pipe.count_threshold;
    if (cfg.use_calibrated && meta.extra.count("count_threshold_few"))
      threshold = std::stod(meta.extra.at("count_threshold_few"));
  }

  PipelineConfig pipe = cfg.pipe;
  pipe.count_threshold = threshold;
  OracleBackend backend(scene, pipe.box_prompt_size);
  const InferResult res = (prompts == "grid")
                              ? infer_grid_baseline(scene.image, w, models.model, models.head, backend, pipe)
                              : infer(scene.image, w, models.model, models.head, backend, pipe);

  fs::create_directories(cfg.out_dir);
  Image overlay = scene.image;
  for (const auto& d : res.detections) {
    if (d.score > threshold) draw_box(overlay, d.box.x0, d.box.y0, d.box.x1, d.box.y1, 40, 230, 40);
  }
  save_png((fs::path(cfg.out_dir) / (scene_id + "-overlay.png")).string(), overlay);
  write_text(fs::path(cfg.out_dir) / (scene_id + "-detections.jsonl"), detections_to_jsonl(scene_id, res.detections));

  if (!heatmap_dump.empty()) save_heatmap(heatmap_dump, models.model.predict(scene.image));

  json out;
  out["scene"] = scene_id;
  out["count"] = res.count;
  out["gt_count"] = scene.target_count();
  out["candidate_points"] = res.diag.candidate_points;
  out["count_threshold"] = threshold;
  std::cout << out.dump(2) << "\n";
  return 0;
}

int cmd_report(const std::vector<std::string>& run_dirs, const std::string& out_file) {
  std::vector<EvalSummary> rows;
  for (const auto& dir : run_dirs) {
    std::ifstream f(fs::path(dir) / "metrics.json");
    if (!f) throw std::runtime_error("report: no metrics.json in " + dir);
    json j;
    f >> j;
    EvalSummary s;
    s.split = j.value("split", "?");
    s.query_mode = j.value("query_mode", "?");
    s.prompt_mode = j.value("prompt_mode", "?");
    s.scenes = j.value("scenes", 0);
    s.counting.mae = j.value("MAE", 0.0);
    s.counting.rmse = j.value("RMSE", 0.0);
    s.counting.nae = j.value("NAE", 0.0);
    s.counting.sre = j.value("SRE", 0.0);
    s.ap.ap = j.value("AP", 0.0);
    s.ap.ap50 = j.value("AP50", 0.0);
    s.mean_candidate_points = j.value("mean_candidate_points", 0.0);
    rows.push_back(std::move(s));
  }
  const std::string table = report_table(rows);
  if (!out_file.empty()) write_text(out_file, table);
  std::cout << table;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"point-segment-count: detection-based few/zero-shot counting on synthetic scenes"};
  app.require_subcommand(1);

  CommonArgs args;
  bool force = false, no_kd = false, plots = false;
  std::string resume, stage, checkpoint, mode, prompts, split, scene_id, class_name, heatmap_dump, report_out;
  int jobs = 0;
  std::vector<std::string> run_dirs;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", args.config_path, "config file (key = value lines)");
    cmd->add_option("--set", args.overrides, "config override key=value (repeatable)");
    cmd->add_option("--dataset", args.dataset, "dataset directory");
    cmd->add_option("--out", args.out, "output directory");
  };

  auto* gen = app.add_subcommand("gen-data", "generate the synthetic dataset");
  add_common(gen);
  gen->add_flag("--force", force, "overwrite a non-empty target directory");

  auto* train = app.add_subcommand("train", "train the point decoder and classifier");
  add_common(train);
  train->add_flag("--no-kd", no_kd, "drop the distillation loss (ablation)");
  train->add_option("--resume", resume, "checkpoint directory to resume from");
  train->add_option("--stage", stage, "joint | point | cls");

  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on a split");
  add_common(eval);
  eval->add_option("--checkpoint", checkpoint, "checkpoint directory");
  eval->add_option("--mode", mode, "few | zero");
  eval->add_option("--prompts", prompts, "heatmap | grid");
  eval->add_option("--split", split, "train | val | test");
  eval->add_option("--jobs", jobs, "parallel workers across images");
  eval->add_flag("--plots", plots, "emit count scatter and PR curve images");

  auto* infer_cmd = app.add_subcommand("infer", "run one scene and write an overlay");
  add_common(infer_cmd);
  infer_cmd->add_option("--checkpoint", checkpoint, "checkpoint directory");
  infer_cmd->add_option("--scene", scene_id, "scene id")->required();
  infer_cmd->add_option("--class-name", class_name, "zero-shot query (default: few-shot from exemplars)");
  infer_cmd->add_option("--prompts", prompts, "heatmap | grid");
  infer_cmd->add_option("--dump-heatmap", heatmap_dump, "write the predicted heatmap to this file");

  auto* report = app.add_subcommand("report", "aggregate metrics from run directories");
  report->add_option("runs", run_dirs, "run directories with metrics.json")->required();
  report->add_option("--out", report_out, "write the table to a file");

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) return cmd_gen_data(args, force);
    if (train->parsed()) return cmd_train(args, no_kd, resume, stage);
    if (eval->parsed()) return cmd_eval(args, checkpoint, mode, prompts, split, jobs, plots);
    if (infer_cmd->parsed()) return cmd_infer(args, checkpoint, scene_id, class_name, prompts, heatmap_dump);
    if (report->parsed()) return cmd_report(run_dirs, report_out);
  } catch (const std::exception& e) {
    json err{{"error", e.what()}};
    std::cerr << err.dump() << "\n";
    return 1;
  }
  return 0;
}
