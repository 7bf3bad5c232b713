#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>

#include "psc/checkpoint.hpp"
#include "psc/trainer.hpp"

using namespace psc;

namespace fs = std::filesystem;

namespace {

// 64x64 scenes keep the training loop fast enough for unit tests
RunConfig tiny_run_config() {
  RunConfig cfg = RunConfig::from_map({});
  cfg.seed = 33;
  cfg.scene.img_w = 64;
  cfg.scene.img_h = 64;
  cfg.scene.count_min = 3;
  cfg.scene.count_max = 6;
  cfg.scene.distractors_max = 3;
  cfg.model.channels = {3, 5, 6};
  cfg.model.head_hidden = 4;
  cfg.region_hidden = 16;
  cfg.embed_dim = 16;
  cfg.train.batch = 2;
  cfg.train.steps = 24;
  cfg.train.proposals_per_scene = 48;
  cfg.train.groups_per_scene = 4;
  cfg.train.pool_grid_n = 6;
  cfg.train.target_grid_n = 8;
  return cfg;
}

struct TinyWorld {
  RunConfig cfg;
  ToyEmbedder embedder;
  CategoryRegistry registry;
  std::vector<AnnotatedScene> scenes;

  TinyWorld() : cfg(tiny_run_config()), embedder(cfg.embed_dim, cfg.seed) {
    registry = build_registry(8, cfg.seed, embedder);
    Rng rng(cfg.seed);
    for (int i = 0; i < 8; ++i) {
      const auto& cats = registry.splits.train;
      const int target = cats[static_cast<size_t>(rng.uniform_int(0, static_cast<int>(cats.size()) - 1))];
      scenes.push_back(generate_scene(registry, "train", target,
                                      rng.uniform_int(cfg.scene.count_min, cfg.scene.count_max), rng, cfg.scene));
    }
  }

  JointTrainer make_trainer(const RunConfig& c) {
    JointTrainer t(c, registry, embedder);
    for (const auto& s : scenes) t.add_scene(s);
    return t;
  }
};

std::vector<std::vector<float>> snapshot(std::vector<nn::ParamRef<float>> params) {
  std::vector<std::vector<float>> out;
  for (const auto& p : params) out.push_back(p.value->data);
  return out;
}

}  // namespace

TEST_CASE("joint training: loss decreases, stays finite, and is deterministic") {
  TinyWorld world;
  JointTrainer a = world.make_trainer(world.cfg);
  std::vector<LossRow> curve_a;
  a.run(0, world.cfg.train.steps, curve_a);

  REQUIRE(curve_a.size() == static_cast<size_t>(world.cfg.train.steps));
  for (const auto& r : curve_a) CHECK(std::isfinite(r.total));
  CHECK(curve_a.back().total < curve_a.front().total);

  // trailing moving average (window 8) is lower at the end than at the start
  auto ma = [&](size_t end) {
    double s = 0;
    for (size_t i = end - 8; i < end; ++i) s += curve_a[i].total;
    return s / 8;
  };
  CHECK(ma(curve_a.size()) <= ma(9));

  JointTrainer b = world.make_trainer(world.cfg);
  std::vector<LossRow> curve_b;
  b.run(0, world.cfg.train.steps, curve_b);
  for (size_t i = 0; i < curve_a.size(); ++i) CHECK(curve_a[i].total == curve_b[i].total);
  CHECK(snapshot(a.all_params()) == snapshot(b.all_params()));
}

TEST_CASE("resume from checkpoint reproduces uninterrupted training bit-exactly") {
  TinyWorld world;
  const int half = world.cfg.train.steps / 2;

  JointTrainer full = world.make_trainer(world.cfg);
  std::vector<LossRow> curve_full;
  full.run(0, world.cfg.train.steps, curve_full);

  JointTrainer first = world.make_trainer(world.cfg);
  std::vector<LossRow> curve_first;
  first.run(0, half, curve_first);
  const auto dir = (fs::temp_directory_path() / "psc_resume_test").string();
  fs::remove_all(dir);
  CheckpointMeta meta;
  meta.seed = world.cfg.seed;
  meta.step = half;
  save_checkpoint(dir, first.all_params(), &first.optimizer(), meta);

  JointTrainer second = world.make_trainer(world.cfg);
  const auto loaded = load_checkpoint(dir, second.all_params(), &second.optimizer());
  CHECK(loaded.step == half);
  std::vector<LossRow> curve_second;
  second.run(half, world.cfg.train.steps, curve_second);

  CHECK(snapshot(second.all_params()) == snapshot(full.all_params()));
  fs::remove_all(dir);
}

TEST_CASE("dropping the distillation weight is supported and changes the result") {
  TinyWorld world;
  JointTrainer with_kd = world.make_trainer(world.cfg);
  std::vector<LossRow> c1;
  with_kd.run(0, 10, c1);

  RunConfig nokd_cfg = world.cfg;
  nokd_cfg.train.kd_weight = 0.0;
  JointTrainer no_kd = world.make_trainer(nokd_cfg);
  std::vector<LossRow> c2;
  no_kd.run(0, 10, c2);

  for (const auto& r : c2) CHECK(r.kd == 0.0);
  CHECK(snapshot(with_kd.all_params()) != snapshot(no_kd.all_params()));
}

TEST_CASE("point-stage training on centered objects peaks at the center") {
  // scenes: one centered square each; the decoder must learn to fire there
  RunConfig cfg = tiny_run_config();
  cfg.train.stage = "point";
  cfg.train.steps = 260;
  cfg.train.batch = 2;
  cfg.train.lr = 3e-3;

  ToyEmbedder embedder(cfg.embed_dim, cfg.seed);
  CategoryRegistry registry = build_registry(8, cfg.seed, embedder);
  JointTrainer trainer(cfg, registry, embedder);

  auto centered_scene = [&](uint64_t seed, int size) {
    AnnotatedScene scene;
    scene.id = "c" + std::to_string(seed);
    scene.split = "train";
    scene.target_class = registry.splits.train[0];
    scene.image = Image(64, 64);
    Rng rng(seed);
    for (int y = 0; y < 64; ++y)
      for (int x = 0; x < 64; ++x) {
        const auto v = static_cast<uint8_t>(110 + rng.uniform_int(-4, 4));
        scene.image.set_rgb(x, y, v, v, v);
      }
    InstanceAnn ins;
    ins.mask = BinaryMask(64, 64);
    const int half = size / 2;
    for (int y = 32 - half; y < 32 + half; ++y)
      for (int x = 32 - half; x < 32 + half; ++x) {
        ins.mask.set(x, y, true);
        scene.image.set_rgb(x, y, 230, 40, 40);
      }
    ins.box = mask_to_box(ins.mask);
    ins.class_id = scene.target_class;
    ins.point = {32.0, 32.0};
    scene.instances.push_back(std::move(ins));
    return scene;
  };

  for (int i = 0; i < 6; ++i) trainer.add_scene(centered_scene(100 + static_cast<uint64_t>(i), 8 + 2 * (i % 3)));
  std::vector<LossRow> curve;
  trainer.run(0, cfg.train.steps, curve);
  CHECK(curve.back().point < curve.front().point);

  // held-out centered object
  AnnotatedScene test = centered_scene(999, 10);
  Heatmap hm = trainer.model().predict(test.image);
  auto peaks = extract_peaks(hm, 10, 0.05);
  REQUIRE(!peaks.empty());
  // strongest peak at the center cell (image center 32 -> cell 8 at stride 4)
  CHECK(std::abs(peaks[0].x - 8) <= 1);
  CHECK(std::abs(peaks[0].y - 8) <= 1);
}
