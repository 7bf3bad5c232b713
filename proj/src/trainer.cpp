#include "psc/trainer.hpp"

#include <cmath>
#include <stdexcept>

namespace psc {

TrainScenePack build_scene_pack(const AnnotatedScene& scene, const CategoryRegistry& registry,
                                const EmbedderBackend& embedder, const TrainConfig& tcfg, double box_prompt_size,
                                double sigma) {
  TrainScenePack pack;
  pack.id = scene.id;
  pack.image = scene.image;

  OracleBackend backend(scene, box_prompt_size);

  // pseudo ground-truth boxes from GT point prompts
  std::vector<GtBox> pseudo;
  for (const auto& pb : pseudo_boxes_from_points(scene, backend)) pseudo.push_back({pb.box, pb.class_id});

  // proposal pool: GT-point groups plus a uniform prompt grid
  KeypointSet prompts;
  for (const auto& ins : scene.instances) prompts.push_back({ins.point, PointSource::GroundTruth});
  const size_t n_gt_prompts = prompts.size();
  for (const auto& kp : grid_prompts(tcfg.pool_grid_n, scene.image.width, scene.image.height)) prompts.push_back(kp);

  const auto groups = segment_at_points(backend, scene.image, prompts);
  std::vector<BoxXYXY> boxes;
  for (size_t gi = 0; gi < groups.size(); ++gi) {
    std::array<int, kProposalsPerGroup> idx{-1, -1, -1, -1};
    bool complete = true;
    for (size_t pi = 0; pi < groups[gi].proposals.size(); ++pi) {
      const MaskProposal& p = groups[gi].proposals[pi];
      if (p.empty) {
        complete = false;
        continue;
      }
      idx[pi] = static_cast<int>(pack.proposals.size());
      pack.proposals.push_back({p.box, p.level, static_cast<int>(gi)});
      boxes.push_back(p.box);
    }
    // distillation groups come from GT-point prompts with all 4 masks valid
    if (complete && gi < n_gt_prompts) {
      TrainGroup tg;
      tg.proposal_index = idx;
      std::vector<BoxXYXY> gboxes;
      for (int k = 0; k < kProposalsPerGroup; ++k) {
        const auto& p = groups[gi].proposals[static_cast<size_t>(k)];
        gboxes.push_back(p.box);
        tg.w_prime.push_back(embedder.embed_region(scene.image, p.box));
      }
      tg.labels = kd_labels(gboxes);
      pack.groups.push_back(std::move(tg));
    }
  }

  // per-proposal labels over train categories
  const auto& train_cats = registry.splits.train;
  std::vector<int> col(registry.defs.size(), -1);
  for (size_t i = 0; i < train_cats.size(); ++i) col[static_cast<size_t>(train_cats[i])] = static_cast<int>(i);
  std::vector<GtBox> pseudo_cols;
  for (const auto& g : pseudo)
    if (g.class_id >= 0 && col[static_cast<size_t>(g.class_id)] >= 0)
      pseudo_cols.push_back({g.box, col[static_cast<size_t>(g.class_id)]});
  pack.labels = match_proposals_to_gt(boxes, pseudo_cols, static_cast<int>(train_cats.size()));
  pack.positive.resize(pack.labels.size(), 0);
  for (size_t i = 0; i < pack.labels.size(); ++i)
    for (uint8_t v : pack.labels[i])
      if (v) {
        pack.positive[i] = 1;
        break;
      }

  // target heatmap: contour centers of grid-prompted masks plus GT points of
  // the target class
  KeypointSet centers;
  const auto target_groups =
      segment_at_points(backend, scene.image, grid_prompts(tcfg.target_grid_n, scene.image.width, scene.image.height));
  for (const auto& g : target_groups)
    for (const auto& p : g.proposals)
      if (!p.empty) centers.push_back({contour_center(p.mask), PointSource::OracleCenter});
  KeypointSet gt_points;
  for (const auto& ins : scene.instances)
    if (ins.class_id == scene.target_class) gt_points.push_back({ins.point, PointSource::GroundTruth});
  const KeypointSet target_points = build_target_points(centers, gt_points);
  const int s = 4;  // heatmap stride, must match the encoder's total stride
  pack.target = splat_targets(target_points, scene.image.width / s, scene.image.height / s, s, sigma);
  return pack;
}

JointTrainer::JointTrainer(const RunConfig& cfg, const CategoryRegistry& registry, const EmbedderBackend& embedder)
    : cfg_(cfg),
      registry_(registry),
      embedder_(embedder),
      model_(cfg.model, cfg.seed),
      head_(cfg.model.channels.back(), cfg.region_hidden, cfg.embed_dim, cfg.seed) {
  const auto& train_cats = registry.splits.train;
  class_to_column_.assign(registry.defs.size(), -1);
  for (size_t i = 0; i < train_cats.size(); ++i) {
    w_train_.push_back(embedder.embed_name(train_cats[i]));
    class_to_column_[static_cast<size_t>(train_cats[i])] = static_cast<int>(i);
  }
  adam_.lr = cfg.train.lr;
  adam_.beta1 = cfg.train.beta1;
  adam_.beta2 = cfg.train.beta2;
  adam_.weight_decay = cfg.train.weight_decay;
  adam_.attach(all_params());
}

std::vector<nn::ParamRef<float>> JointTrainer::all_params() {
  auto params = model_.params();
  for (auto& p : head_.params()) params.push_back(p);
  return params;
}

void JointTrainer::add_scene(const AnnotatedScene& scene) {
  scenes_.push_back(
      build_scene_pack(scene, registry_, embedder_, cfg_.train, cfg_.pipe.box_prompt_size));
}

LossRow JointTrainer::train_step(int step) {
  if (scenes_.empty()) throw std::runtime_error("trainer: no scenes");
  const TrainConfig& t = cfg_.train;
  const bool do_point = t.stage != "cls";
  const bool do_cls = t.stage != "point";

  auto params = all_params();
  nn::zero_grads(params);

  Rng batch_rng(derive_seed(cfg_.seed, 0x57e9, static_cast<uint64_t>(step)));
  LossRow row;
  row.step = step;

  for (int slot = 0; slot < t.batch; ++slot) {
    const int si = batch_rng.uniform_int(0, static_cast<int>(scenes_.size()) - 1);
    const TrainScenePack& pack = scenes_[static_cast<size_t>(si)];

    Tensor<float> x = image_to_tensor<float>(pack.image);
    auto acts = model_.forward(x);

    Tensor<float> d_logits(acts.logits.shape);
    if (do_point) {
      Tensor<float> dl;
      const double lp = point_loss_from_logits(acts.logits, pack.target, dl);
      row.point += lp / t.batch;
      const float scale = static_cast<float>(t.point_weight / t.batch);
      for (int64_t i = 0; i < dl.numel(); ++i) d_logits.data[static_cast<size_t>(i)] = dl.data[static_cast<size_t>(i)] * scale;
    }

    Tensor<float> d_features(acts.a.back().shape);
    bool have_roi_grad = false;

    bool have_positive = false;
    for (uint8_t v : pack.positive)
      if (v) have_positive = true;

    if (do_cls && !pack.proposals.empty() && have_positive) {
      Rng sample_rng(derive_seed(cfg_.seed, 0xba7c4, static_cast<uint64_t>(step) * 64 + static_cast<uint64_t>(slot)));
      SampleBatch sample = sample_training_batch(pack.positive, static_cast<int>(pack.groups.size()), sample_rng,
                                                 t.proposals_per_scene, t.groups_per_scene, t.positive_fraction);

      // assemble ROI rows: sampled proposals then the sampled groups' 4 rows
      std::vector<int> row_proposal;
      row_proposal.reserve(sample.proposal_indices.size() + sample.group_indices.size() * kProposalsPerGroup);
      for (int pi : sample.proposal_indices) row_proposal.push_back(pi);
      for (int gi : sample.group_indices)
        for (int k = 0; k < kProposalsPerGroup; ++k)
          row_proposal.push_back(pack.groups[static_cast<size_t>(gi)].proposal_index[static_cast<size_t>(k)]);

      const int n_rows = static_cast<int>(row_proposal.size());
      const int in_dim = head_.in_channels * kRoiSide * kRoiSide;
      FeatureGrid<float> fg{acts.a.back(), model_.cfg.total_stride()};
      Tensor<float> rows({n_rows, in_dim});
      for (int i = 0; i < n_rows; ++i) {
        Tensor<float> patch = roi_align(fg, pack.proposals[static_cast<size_t>(row_proposal[static_cast<size_t>(i)])].box, kRoiSide);
        std::copy(patch.data.begin(), patch.data.end(), rows.ptr() + static_cast<int64_t>(i) * in_dim);
      }
      auto racts = head_.forward(std::move(rows));

      Tensor<float> d_r(racts.r.shape);
      const int n_cls = static_cast<int>(sample.proposal_indices.size());

      // Eq. 2 over the sampled proposals
      {
        Tensor<float> r_cls({n_cls, head_.dim});
        std::copy(racts.r.ptr(), racts.r.ptr() + static_cast<int64_t>(n_cls) * head_.dim, r_cls.ptr());
        std::vector<std::vector<uint8_t>> labels;
        labels.reserve(static_cast<size_t>(n_cls));
        for (int i = 0; i < n_cls; ++i)
          labels.push_back(pack.labels[static_cast<size_t>(sample.proposal_indices[static_cast<size_t>(i)])]);
        Tensor<float> d_r_cls;
        const double lc = cls_loss(w_train_, r_cls, labels, cfg_.pipe.logit_scale, d_r_cls);
        row.cls += lc / t.batch;
        const float scale = static_cast<float>(t.cls_weight / t.batch);
        for (int i = 0; i < n_cls; ++i)
          for (int k = 0; k < head_.dim; ++k)
            d_r.ptr()[static_cast<int64_t>(i) * head_.dim + k] +=
                d_r_cls.ptr()[static_cast<int64_t>(i) * head_.dim + k] * scale;
      }

      // Eq. 3 over the sampled groups
      if (!sample.group_indices.empty() && t.kd_weight != 0.0) {
        double kd_acc = 0.0;
        const float scale = static_cast<float>(t.kd_weight / (t.batch * static_cast<double>(sample.group_indices.size())));
        for (size_t g = 0; g < sample.group_indices.size(); ++g) {
          const TrainGroup& tg = pack.groups[static_cast<size_t>(sample.group_indices[g])];
          const int base = n_cls + static_cast<int>(g) * kProposalsPerGroup;
          Tensor<float> r_g({kProposalsPerGroup, head_.dim});
          std::copy(racts.r.ptr() + static_cast<int64_t>(base) * head_.dim,
                    racts.r.ptr() + static_cast<int64_t>(base + kProposalsPerGroup) * head_.dim, r_g.ptr());
          Tensor<float> d_rg;
          kd_acc += kd_loss_group(tg.w_prime, r_g, tg.labels, cfg_.pipe.logit_scale, d_rg);
          for (int i = 0; i < kProposalsPerGroup; ++i)
            for (int k = 0; k < head_.dim; ++k)
              d_r.ptr()[static_cast<int64_t>(base + i) * head_.dim + k] +=
                  d_rg.ptr()[static_cast<int64_t>(i) * head_.dim + k] * scale;
        }
        row.kd += kd_acc / (t.batch * static_cast<double>(sample.group_indices.size()));
      }

      Tensor<float> d_rows = head_.backward(racts, d_r);
      for (int i = 0; i < n_rows; ++i) {
        Tensor<float> d_patch({head_.in_channels, kRoiSide, kRoiSide});
        std::copy(d_rows.ptr() + static_cast<int64_t>(i) * in_dim,
                  d_rows.ptr() + static_cast<int64_t>(i + 1) * in_dim, d_patch.ptr());
        FeatureGrid<float> dfg{std::move(d_features), model_.cfg.total_stride()};
        roi_align_backward(d_patch, pack.proposals[static_cast<size_t>(row_proposal[static_cast<size_t>(i)])].box, kRoiSide, dfg);
        d_features = std::move(dfg.chw);
      }
      have_roi_grad = true;
    }

    model_.backward(acts, d_logits, have_roi_grad ? &d_features : nullptr);
  }

  row.total = t.point_weight * row.point + t.cls_weight * row.cls + t.kd_weight * row.kd;
  if (!std::isfinite(row.total))
    throw std::runtime_error("trainer: non-finite loss at step " + std::to_string(step) +
                             " (point=" + std::to_string(row.point) + " cls=" + std::to_string(row.cls) +
                             " kd=" + std::to_string(row.kd) + ")");
  adam_.step(params);
  return row;
}

void JointTrainer::run(int start_step, int end_step, std::vector<LossRow>& curve,
                       const std::function<void(const LossRow&)>& on_log) {
  for (int step = start_step; step < end_step; ++step) {
    LossRow row = train_step(step);
    curve.push_back(row);
    if (on_log && (step % cfg_.train.log_every == 0 || step + 1 == end_step)) on_log(row);
  }
}

}  // namespace psc
