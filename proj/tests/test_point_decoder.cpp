#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "psc/point_decoder.hpp"
#include "psc/rng.hpp"

using namespace psc;

namespace {

EncoderConfig tiny_config() {
  // under 500 parameters for the finite-difference pass
  EncoderConfig cfg;
  cfg.channels = {2, 3};
  cfg.kernels = {3, 3};
  cfg.strides = {2, 2};
  cfg.head_hidden = 3;
  return cfg;
}

Image noise_image(int w, int h, uint64_t seed) {
  Image img(w, h);
  Rng rng(seed);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      img.set_rgb(x, y, static_cast<uint8_t>(rng.uniform_int(0, 255)), static_cast<uint8_t>(rng.uniform_int(0, 255)),
                  static_cast<uint8_t>(rng.uniform_int(0, 255)));
  return img;
}

}  // namespace

TEST_CASE("encode: determinism and zero-image bias pattern") {
  EncoderConfig cfg;
  PointDecoderModel<float> model(cfg, 42);
  Image zero(32, 32);
  const auto f1 = model.encode(zero);
  const auto f2 = model.encode(zero);
  CHECK(f1.chw.data == f2.chw.data);
  CHECK(f1.stride == 4);
  CHECK(f1.grid_w() == 8);

  // interior cells of a constant image are constant per channel
  for (int c = 0; c < f1.channels(); ++c) {
    const float ref = f1.chw.at3(c, 3, 3);
    for (int y = 2; y < 6; ++y)
      for (int x = 2; x < 6; ++x) CHECK(f1.chw.at3(c, y, x) == doctest::Approx(ref).epsilon(1e-6));
  }

  Image img = noise_image(32, 32, 7);
  CHECK(model.encode(img).chw.data == model.encode(img).chw.data);
  CHECK_THROWS(model.encode(noise_image(30, 30, 7)));  // not divisible by stride
}

TEST_CASE("encode: translation by the stride shifts features by one cell") {
  EncoderConfig cfg;
  PointDecoderModel<float> model(cfg, 43);
  const int s = cfg.total_stride();
  Image img = noise_image(64, 64, 9);
  Image shifted(64, 64);
  for (int y = 0; y < 64; ++y)
    for (int x = 0; x < 64; ++x)
      for (int c = 0; c < 3; ++c)
        shifted.at(x, y, c) = img.at((x - s + 64) % 64, y, c);

  const auto f = model.encode(img);
  const auto g = model.encode(shifted);
  // interior cells only; borders feel the wrap
  for (int c = 0; c < f.channels(); ++c)
    for (int y = 3; y < f.grid_h() - 3; ++y)
      for (int x = 3; x < f.grid_w() - 3; ++x)
        CHECK(g.chw.at3(c, y, x + 1) == doctest::Approx(f.chw.at3(c, y, x)).epsilon(1e-4));
}

TEST_CASE("predict: zero weights give logistic outputs") {
  EncoderConfig cfg;
  PointDecoderModel<float> model(cfg, 44);
  for (auto& p : model.params()) p.value->fill(0.0f);
  Image img = noise_image(32, 32, 11);
  Heatmap hm = model.predict(img);
  for (double v : hm.v) CHECK(v == doctest::Approx(0.5));

  // output bias -4 with zero weights
  model.head2.b.data[0] = -4.0f;
  hm = model.predict(img);
  const double expect = 1.0 / (1.0 + std::exp(4.0));
  for (double v : hm.v) CHECK(v == doctest::Approx(expect).epsilon(1e-6));
  CHECK(expect == doctest::Approx(0.0180).epsilon(1e-2));
}

TEST_CASE("predict: outputs strictly inside (0,1)") {
  EncoderConfig cfg;
  PointDecoderModel<float> model(cfg, 45);
  Heatmap hm = model.predict(noise_image(32, 32, 13));
  for (double v : hm.v) {
    CHECK(v > 0.0);
    CHECK(v < 1.0);
  }
}

TEST_CASE("full point-decoder gradient vs finite differences (float64)") {
  EncoderConfig cfg = tiny_config();
  PointDecoderModel<double> model(cfg, 46);
  auto params = model.params();
  CHECK(nn::param_count(params) <= 500);

  Image img = noise_image(16, 16, 15);
  Tensor<double> x = image_to_tensor<double>(img);
  Heatmap target(4, 4, 4);
  Rng rng(17);
  for (auto& v : target.v) v = rng.uniform(0, 1);

  auto loss_fn = [&]() {
    auto acts = model.forward(x);
    Tensor<double> dl;
    return point_loss_from_logits(acts.logits, target, dl);
  };

  nn::zero_grads(params);
  auto acts = model.forward(x);
  Tensor<double> d_logits;
  (void)point_loss_from_logits(acts.logits, target, d_logits);
  model.backward(acts, d_logits, nullptr);

  const double eps = 1e-6;
  int checked = 0;
  for (auto& p : params) {
    for (int64_t i = 0; i < p.value->numel(); ++i) {
      const size_t k = static_cast<size_t>(i);
      const double orig = p.value->data[k];
      p.value->data[k] = orig + eps;
      const double lp = loss_fn();
      p.value->data[k] = orig - eps;
      const double lm = loss_fn();
      p.value->data[k] = orig;
      const double fd = (lp - lm) / (2 * eps);
      const double an = p.grad->data[k];
      const double denom = std::max({std::abs(fd), std::abs(an), 1e-7});
      CHECK(std::abs(an - fd) / denom <= 1e-4);
      ++checked;
    }
  }
  CHECK(checked > 100);
}

TEST_CASE("backward combines the point head and extra feature gradients") {
  EncoderConfig cfg = tiny_config();
  PointDecoderModel<double> model(cfg, 47);
  auto params = model.params();

  Image img = noise_image(16, 16, 19);
  Tensor<double> x = image_to_tensor<double>(img);
  Heatmap target(4, 4, 4);
  Rng rng(23);
  for (auto& v : target.v) v = rng.uniform(0, 1);

  // loss: point MSE plus a weighted sum over the feature grid
  Tensor<double> wfeat;
  {
    auto acts0 = model.forward(x);
    wfeat = Tensor<double>(acts0.a.back().shape);
    for (auto& v : wfeat.data) v = rng.uniform(-0.1, 0.1);
  }
  auto loss_fn = [&]() {
    auto acts = model.forward(x);
    Tensor<double> dl;
    double l = point_loss_from_logits(acts.logits, target, dl);
    for (int64_t i = 0; i < wfeat.numel(); ++i)
      l += wfeat.data[static_cast<size_t>(i)] * acts.a.back().data[static_cast<size_t>(i)];
    return l;
  };

  nn::zero_grads(params);
  auto acts = model.forward(x);
  Tensor<double> d_logits;
  (void)point_loss_from_logits(acts.logits, target, d_logits);
  model.backward(acts, d_logits, &wfeat);

  const double eps = 1e-6;
  for (auto& p : params) {
    for (int64_t i = 0; i < p.value->numel(); i += 3) {
      const size_t k = static_cast<size_t>(i);
      const double orig = p.value->data[k];
      p.value->data[k] = orig + eps;
      const double lp = loss_fn();
      p.value->data[k] = orig - eps;
      const double lm = loss_fn();
      p.value->data[k] = orig;
      const double fd = (lp - lm) / (2 * eps);
      const double an = p.grad->data[k];
      const double denom = std::max({std::abs(fd), std::abs(an), 1e-7});
      CHECK(std::abs(an - fd) / denom <= 1e-4);
    }
  }
}

TEST_CASE("model construction is deterministic under a fixed seed") {
  EncoderConfig cfg;
  PointDecoderModel<float> a(cfg, 123), b(cfg, 123), c(cfg, 124);
  auto pa = a.params(), pb = b.params(), pc = c.params();
  bool same = true, diff = false;
  for (size_t i = 0; i < pa.size(); ++i) {
    if (pa[i].value->data != pb[i].value->data) same = false;
    if (pa[i].value->data != pc[i].value->data) diff = true;
  }
  CHECK(same);
  CHECK(diff);
}
