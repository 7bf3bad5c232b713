#pragma once

#include <functional>
#include <string>
#include <vector>

#include "psc/classifier.hpp"
#include "psc/config.hpp"
#include "psc/embedder.hpp"
#include "psc/heatmap.hpp"
#include "psc/point_decoder.hpp"
#include "psc/synthdata.hpp"

namespace psc {

// Everything a training step needs from one scene, with masks dropped after
// the one-time oracle pass. Region embeddings (the W' rows of the
// distillation loss) are prepared in advance.
struct TrainProposal {
  BoxXYXY box;
  MaskLevel level = MaskLevel::Whole;
  int group = -1;
};

struct TrainGroup {
  std::array<int, kProposalsPerGroup> proposal_index;
  std::vector<Embedding> w_prime;                 // 4 crop embeddings
  std::vector<std::vector<uint8_t>> labels;        // 4x4 IoU>0.5
};

struct TrainScenePack {
  std::string id;
  Image image;
  Heatmap target;
  std::vector<TrainProposal> proposals;
  std::vector<std::vector<uint8_t>> labels;  // per proposal, over train categories
  std::vector<uint8_t> positive;
  std::vector<TrainGroup> groups;
};

struct LossRow {
  int step = 0;
  double point = 0.0;
  double cls = 0.0;
  double kd = 0.0;
  double total = 0.0;
};

struct TrainResult {
  std::vector<LossRow> curve;
  double calibrated_threshold_few = 0.5;
  double calibrated_threshold_zero = 0.5;
};

// Builds one scene's training pack with the oracle backend (heatmap target,
// proposal pool with labels, distillation groups with crop embeddings).
TrainScenePack build_scene_pack(const AnnotatedScene& scene, const CategoryRegistry& registry,
                                const EmbedderBackend& embedder, const TrainConfig& tcfg, double box_prompt_size,
                                double sigma = 2.0);

class JointTrainer {
 public:
  JointTrainer(const RunConfig& cfg, const CategoryRegistry& registry, const EmbedderBackend& embedder);

  void add_scene(const AnnotatedScene& scene);

  PointDecoderModel<float>& model() { return model_; }
  RegionHead<float>& head() { return head_; }
  nn::Adam<float>& optimizer() { return adam_; }
  std::vector<nn::ParamRef<float>> all_params();

  // Runs steps [start_step, end_step); appends to the loss curve. Aborts on
  // a non-finite loss.
  void run(int start_step, int end_step, std::vector<LossRow>& curve,
           const std::function<void(const LossRow&)>& on_log = nullptr);

  int64_t current_step() const { return adam_.step_count; }

 private:
  LossRow train_step(int step);

  RunConfig cfg_;
  const CategoryRegistry& registry_;
  const EmbedderBackend& embedder_;
  std::vector<TrainScenePack> scenes_;
  std::vector<Embedding> w_train_;          // name embeddings of train categories
  std::vector<int> class_to_column_;        // global category id -> train column or -1
  PointDecoderModel<float> model_;
  RegionHead<float> head_;
  nn::Adam<float> adam_;
};

}  // namespace psc
