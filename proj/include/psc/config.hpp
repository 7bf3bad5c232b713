#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "psc/pipeline.hpp"
#include "psc/point_decoder.hpp"
#include "psc/synthdata.hpp"

namespace psc {

struct TrainConfig {
  int steps = 2000;
  int batch = 8;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.99;
  double weight_decay = 1e-5;
  double point_weight = 1.0;
  double cls_weight = 1.0;
  double kd_weight = 1.0;
  int proposals_per_scene = 256;
  int groups_per_scene = 16;
  double positive_fraction = 0.25;
  int pool_grid_n = 16;    // prompt grid feeding the training proposal pool
  int target_grid_n = 32;  // prompt grid feeding heatmap target construction
  int log_every = 50;
  std::string stage = "joint";  // joint | point | cls
};

// Flat key=value run configuration; unknown keys are rejected and the
// resolved config is serialized into every run directory.
struct RunConfig {
  std::string dataset;
  std::string out_dir;
  uint64_t seed = 17;
  std::string backend = "oracle";  // oracle | replay:<manifest>
  std::string embedder = "toy";
  int embed_dim = 64;

  int data_categories = 24;
  DatasetSizes data_sizes;
  SceneGenConfig scene;

  EncoderConfig model;
  int region_hidden = 64;

  TrainConfig train;
  PipelineConfig pipe;
  double count_threshold_zero = 0.5;  // zero-shot calibration partner of pipe.count_threshold
  bool use_calibrated = true;         // prefer thresholds stored in the checkpoint

  std::string checkpoint;  // eval/infer provenance
  std::string eval_mode = "few";
  std::string eval_prompts = "heatmap";
  std::string eval_split = "test";

  int jobs = 1;

  static RunConfig from_map(const std::map<std::string, std::string>& kv);
  std::map<std::string, std::string> to_map() const;

  std::string serialize() const;            // diff-friendly "key = value" lines
  std::string config_hash() const;
};

RunConfig parse_config_text(const std::string& text);
RunConfig load_config_file(const std::string& path);
void apply_overrides(std::map<std::string, std::string>& kv, const std::vector<std::string>& overrides);

}  // namespace psc
