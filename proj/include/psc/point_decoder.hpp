#pragma once

#include <string>
#include <vector>

#include "psc/geometry.hpp"
#include "psc/heatmap.hpp"
#include "psc/image.hpp"
#include "psc/nn.hpp"

namespace psc {

// Small convolutional stack reaching the heatmap stride, plus a two-conv
// head with a logistic output unit.
struct EncoderConfig {
  int in_channels = 3;
  std::vector<int> channels = {6, 10, 14};
  std::vector<int> kernels = {3, 3, 3};
  std::vector<int> strides = {2, 2, 1};
  int head_hidden = 8;

  int total_stride() const {
    int s = 1;
    for (int v : strides) s *= v;
    return s;
  }
};

template <typename T>
Tensor<T> image_to_tensor(const Image& img) {
  Tensor<T> x({3, img.height, img.width});
  const double inv = 1.0 / 255.0;
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < img.height; ++y)
      for (int xx = 0; xx < img.width; ++xx) x.at3(c, y, xx) = static_cast<T>(img.at(xx, y, c) * inv);
  return x;
}

template <typename T>
struct PointDecoderModel {
  EncoderConfig cfg;
  std::vector<nn::Conv2d<T>> enc;
  nn::Conv2d<T> head1;
  nn::Conv2d<T> head2;
  uint64_t init_seed = 0;

  PointDecoderModel() = default;

  explicit PointDecoderModel(const EncoderConfig& c, uint64_t seed) : cfg(c), init_seed(seed) {
    int prev = cfg.in_channels;
    for (size_t i = 0; i < cfg.channels.size(); ++i) {
      const int kk = cfg.kernels[i];
      enc.emplace_back(prev, cfg.channels[i], kk, cfg.strides[i], kk / 2);
      prev = cfg.channels[i];
    }
    head1 = nn::Conv2d<T>(prev, cfg.head_hidden, 3, 1, 1);
    head2 = nn::Conv2d<T>(cfg.head_hidden, 1, 1, 1, 0);
    Rng rng(derive_seed(seed, 0x9021));
    for (auto& l : enc) l.init(rng);
    head1.init(rng);
    head2.init(rng);
    // near-empty initial map: logistic(bias) = 0.01
    head2.b.data[0] = static_cast<T>(std::log(0.01 / 0.99));
  }

  std::vector<nn::ParamRef<T>> params() {
    std::vector<nn::ParamRef<T>> out;
    for (size_t i = 0; i < enc.size(); ++i) enc[i].collect("enc" + std::to_string(i + 1), out);
    head1.collect("head1", out);
    head2.collect("head2", out);
    return out;
  }

  struct Acts {
    Tensor<T> x;                  // input image tensor
    std::vector<Tensor<T>> a;     // post-ReLU activations per encoder layer
    Tensor<T> h1;                 // post-ReLU head hidden
    Tensor<T> logits;             // [1, H/s, W/s]
  };

  Acts forward(const Tensor<T>& x) const {
    Acts acts;
    acts.x = x;
    const Tensor<T>* cur = &acts.x;
    for (const auto& l : enc) {
      Tensor<T> y = l.forward(*cur);
      nn::relu_inplace(y);
      acts.a.push_back(std::move(y));
      cur = &acts.a.back();
    }
    acts.h1 = head1.forward(*cur);
    nn::relu_inplace(acts.h1);
    acts.logits = head2.forward(acts.h1);
    return acts;
  }

  // d_logits from the point loss; d_features_extra (may be null) carries
  // gradients scattered back through ROI-align.
  void backward(const Acts& acts, const Tensor<T>& d_logits, const Tensor<T>* d_features_extra) {
    Tensor<T> dh1 = head2.backward(acts.h1, d_logits);
    dh1 = nn::relu_backward(acts.h1, dh1);
    Tensor<T> dfeat = head1.backward(acts.a.back(), dh1);
    if (d_features_extra) {
      for (int64_t i = 0; i < dfeat.numel(); ++i)
        dfeat.data[static_cast<size_t>(i)] += d_features_extra->data[static_cast<size_t>(i)];
    }
    Tensor<T> dcur = std::move(dfeat);
    for (size_t i = enc.size(); i-- > 0;) {
      dcur = nn::relu_backward(acts.a[i], dcur);
      const Tensor<T>& input = (i == 0) ? acts.x : acts.a[i - 1];
      dcur = enc[i].backward(input, dcur);
    }
  }

  // Deterministic feature extraction for inference and the classifier.
  FeatureGrid<T> encode(const Image& img) const {
    const int s = cfg.total_stride();
    if (img.width % s != 0 || img.height % s != 0)
      throw std::invalid_argument("encode: image dims must be divisible by the stride");
    Tensor<T> x = image_to_tensor<T>(img);
    const Tensor<T>* cur = &x;
    Tensor<T> y;
    for (const auto& l : enc) {
      y = l.forward(*cur);
      nn::relu_inplace(y);
      cur = &y;
    }
    return FeatureGrid<T>{std::move(y), s};
  }

  Heatmap heatmap_from_features(const FeatureGrid<T>& f) const {
    Tensor<T> h1 = head1.forward(f.chw);
    nn::relu_inplace(h1);
    Tensor<T> logits = head2.forward(h1);
    Heatmap hm(logits.dim(2), logits.dim(1), f.stride);
    for (int64_t i = 0; i < logits.numel(); ++i)
      hm.v[static_cast<size_t>(i)] = static_cast<double>(nn::stable_sigmoid(logits.data[static_cast<size_t>(i)]));
    return hm;
  }

  Heatmap predict(const Image& img) const { return heatmap_from_features(encode(img)); }
};

// Point MSE on the sigmoid of the logits; returns loss and fills d_logits.
template <typename T>
double point_loss_from_logits(const Tensor<T>& logits, const Heatmap& target, Tensor<T>& d_logits) {
  const int64_t n = logits.numel();
  if (n != static_cast<int64_t>(target.v.size())) throw std::invalid_argument("point loss: shape mismatch");
  d_logits = Tensor<T>(logits.shape);
  double acc = 0.0;
  for (int64_t i = 0; i < n; ++i) {
    const size_t k = static_cast<size_t>(i);
    const double p = static_cast<double>(nn::stable_sigmoid(logits.data[k]));
    const double d = p - target.v[k];
    acc += d * d;
    d_logits.data[k] = static_cast<T>(2.0 * d * p * (1.0 - p) / static_cast<double>(n));
  }
  return acc / static_cast<double>(n);
}

}  // namespace psc
