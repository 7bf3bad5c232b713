#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>

#include "psc/checkpoint.hpp"
#include "psc/config.hpp"
#include "psc/image.hpp"
#include "psc/point_decoder.hpp"
#include "psc/rng.hpp"

using namespace psc;

namespace fs = std::filesystem;

TEST_CASE("png round trip preserves pixels") {
  Rng rng(3);
  Image img(33, 17);
  for (auto& v : img.data) v = static_cast<uint8_t>(rng.uniform_int(0, 255));
  const Image back = decode_png(encode_png(img));
  CHECK(back.width == img.width);
  CHECK(back.height == img.height);
  CHECK(back.data == img.data);
  CHECK(pixel_hash(back) == pixel_hash(img));
}

TEST_CASE("checkpoint round trip including optimizer state") {
  const auto dir = (fs::temp_directory_path() / "psc_ckpt_test").string();
  fs::remove_all(dir);

  EncoderConfig cfg;
  PointDecoderModel<float> model(cfg, 11);
  nn::Adam<float> adam;
  adam.lr = 3e-4;
  adam.attach(model.params());
  // run a fake step so moments are nonzero
  for (auto& p : model.params()) {
    for (auto& g : p.grad->data) g = 0.01f;
  }
  adam.step(model.params());

  CheckpointMeta meta;
  meta.seed = 11;
  meta.config_hash = "abc123";
  meta.step = 1;
  meta.extra["count_threshold_few"] = "0.75";
  save_checkpoint(dir, model.params(), &adam, meta);

  PointDecoderModel<float> restored(cfg, 999);  // different init
  nn::Adam<float> adam2;
  adam2.attach(restored.params());
  const CheckpointMeta back = load_checkpoint(dir, restored.params(), &adam2);

  CHECK(back.seed == 11);
  CHECK(back.config_hash == "abc123");
  CHECK(back.step == 1);
  CHECK(back.extra.at("count_threshold_few") == "0.75");
  CHECK(adam2.step_count == adam.step_count);
  CHECK(adam2.lr == adam.lr);

  auto pa = model.params();
  auto pb = restored.params();
  for (size_t i = 0; i < pa.size(); ++i) {
    CHECK(pa[i].value->data == pb[i].value->data);  // float32 blobs are lossless
    CHECK(adam.m[i].data == adam2.m[i].data);
    CHECK(adam.v[i].data == adam2.v[i].data);
  }

  // shape mismatch is rejected
  EncoderConfig other;
  other.channels = {5, 8, 12, 4};
  other.kernels = {3, 3, 3, 3};
  other.strides = {2, 2, 1, 1};
  PointDecoderModel<float> wrong(other, 1);
  nn::Adam<float> adam3;
  adam3.attach(wrong.params());
  CHECK_THROWS(load_checkpoint(dir, wrong.params(), &adam3));
  fs::remove_all(dir);
}

TEST_CASE("config: defaults, round trip, overrides, unknown keys") {
  const RunConfig def = RunConfig::from_map({});
  CHECK(def.pipe.k_max == 1000);
  CHECK(def.pipe.heatmap_tau == doctest::Approx(0.05));
  CHECK(def.pipe.nms_iou == doctest::Approx(0.5));
  CHECK(def.train.beta1 == doctest::Approx(0.9));
  CHECK(def.train.beta2 == doctest::Approx(0.99));
  CHECK(def.train.weight_decay == doctest::Approx(1e-5));
  CHECK(def.train.proposals_per_scene == 256);
  CHECK(def.train.groups_per_scene == 16);
  CHECK(def.train.positive_fraction == doctest::Approx(0.25));
  CHECK(def.model.channels == std::vector<int>{6, 10, 14});
  CHECK(def.data_sizes.train == 400);

  // serialize -> parse is the identity
  const RunConfig back = parse_config_text(def.serialize());
  CHECK(back.serialize() == def.serialize());
  CHECK(back.config_hash() == def.config_hash());

  // overrides
  std::map<std::string, std::string> kv = def.to_map();
  apply_overrides(kv, {"train.steps=123", "pipe.count_threshold=0.8"});
  const RunConfig ov = RunConfig::from_map(kv);
  CHECK(ov.train.steps == 123);
  CHECK(ov.pipe.count_threshold == doctest::Approx(0.8));
  CHECK(ov.config_hash() != def.config_hash());

  // unknown keys rejected
  CHECK_THROWS(parse_config_text("no_such_key = 1\n"));
  CHECK_THROWS(parse_config_text("garbage line without equals\n"));

  // comments and blanks are fine
  const RunConfig c = parse_config_text("# comment\n\nseed = 99\n");
  CHECK(c.seed == 99);
}
