#pragma once

#include <string>
#include <vector>

#include "psc/embedder.hpp"
#include "psc/geometry.hpp"
#include "psc/nn.hpp"
#include "psc/proposals.hpp"
#include "psc/rng.hpp"

namespace psc {

// Classifier weight rows built from embeddings; novel queries append at the
// end without disturbing existing rows.
struct QueryWeights {
  enum class Mode { ImageQuery, NameQuery };
  Mode mode = Mode::NameQuery;
  std::vector<Embedding> rows;
  std::vector<int> class_ids;

  int count() const { return static_cast<int>(rows.size()); }
  void append(Embedding row, int class_id) {
    rows.push_back(std::move(row));
    class_ids.push_back(class_id);
  }
};

constexpr int kRoiSide = 7;
constexpr double kLogitScale = 20.0;

// ROI-align 7x7 -> flatten -> two-layer MLP -> L2 normalize.
template <typename T>
struct RegionHead {
  int in_channels = 0;
  int hidden = 64;
  int dim = 64;
  nn::Linear<T> fc1;
  nn::Linear<T> fc2;
  uint64_t init_seed = 0;

  RegionHead() = default;
  RegionHead(int in_c, int hid, int d, uint64_t seed) : in_channels(in_c), hidden(hid), dim(d), init_seed(seed) {
    fc1 = nn::Linear<T>(in_c * kRoiSide * kRoiSide, hid);
    fc2 = nn::Linear<T>(hid, d);
    Rng rng(derive_seed(seed, 0xc1a55));
    fc1.init(rng);
    fc2.init(rng);
  }

  std::vector<nn::ParamRef<T>> params() {
    std::vector<nn::ParamRef<T>> out;
    fc1.collect("region_fc1", out);
    fc2.collect("region_fc2", out);
    return out;
  }

  struct Acts {
    Tensor<T> x;    // [N, in]
    Tensor<T> h;    // [N, hidden] post-ReLU
    Tensor<T> u;    // [N, dim] pre-normalization
    Tensor<T> r;    // [N, dim] unit rows
    nn::L2NormRows<T> norm;
  };

  Acts forward(Tensor<T> roi_rows) const {
    Acts acts;
    acts.x = std::move(roi_rows);
    acts.h = fc1.forward(acts.x);
    nn::relu_inplace(acts.h);
    acts.u = fc2.forward(acts.h);
    acts.r = acts.norm.forward(acts.u);
    return acts;
  }

  // Returns d(loss)/d(roi rows).
  Tensor<T> backward(const Acts& acts, const Tensor<T>& d_r) {
    Tensor<T> du = acts.norm.backward(acts.r, d_r);
    Tensor<T> dh = fc2.backward(acts.h, du);
    dh = nn::relu_backward(acts.h, dh);
    return fc1.backward(acts.x, dh);
  }
};

// Mean over C entries and over proposals of BCE(sigmoid(scale * W r), c).
// labels: [N, C] in {0,1}. Fills d_r (same shape as r).
template <typename T>
double cls_loss(const std::vector<Embedding>& w_rows, const Tensor<T>& r, const std::vector<std::vector<uint8_t>>& labels,
                double scale, Tensor<T>& d_r) {
  const int n = r.dim(0), d = r.dim(1);
  const int c_n = static_cast<int>(w_rows.size());
  if (static_cast<int>(labels.size()) != n) throw std::invalid_argument("cls_loss: label count mismatch");
  d_r = Tensor<T>(r.shape);
  if (n == 0 || c_n == 0) return 0.0;
  double total = 0.0;
  for (int i = 0; i < n; ++i) {
    const T* ri = r.ptr() + static_cast<int64_t>(i) * d;
    T* dri = d_r.ptr() + static_cast<int64_t>(i) * d;
    for (int k = 0; k < c_n; ++k) {
      const Embedding& w = w_rows[static_cast<size_t>(k)];
      double z = 0.0;
      for (int j = 0; j < d; ++j) z += w[static_cast<size_t>(j)] * static_cast<double>(ri[j]);
      z *= scale;
      if (!std::isfinite(z)) throw std::runtime_error("cls_loss: non-finite logit");
      T dz;
      total += static_cast<double>(nn::bce_with_logit(static_cast<T>(z), static_cast<T>(labels[static_cast<size_t>(i)][static_cast<size_t>(k)]), dz));
      const double gz = static_cast<double>(dz) * scale / (static_cast<double>(c_n) * n);
      for (int j = 0; j < d; ++j) dri[j] += static_cast<T>(gz * w[static_cast<size_t>(j)]);
    }
  }
  return total / (static_cast<double>(c_n) * n);
}

// Pairwise IoU>0.5 labels within one prompt group.
std::vector<std::vector<uint8_t>> kd_labels(const std::vector<BoxXYXY>& boxes);

// Eq.-style hierarchical distillation over one group: (1/M) sum_i
// BCE(scale * W' r_i, c'_i) with BCE averaged over the M entries. W' rows
// are the embedder outputs of the group's crops. Fills d_r for the group's
// M rows; returns the group loss.
template <typename T>
double kd_loss_group(const std::vector<Embedding>& w_prime, const Tensor<T>& r_group,
                     const std::vector<std::vector<uint8_t>>& labels, double scale, Tensor<T>& d_r) {
  const int m = static_cast<int>(w_prime.size());
  if (r_group.dim(0) != m || static_cast<int>(labels.size()) != m)
    throw std::invalid_argument("kd_loss: group size mismatch");
  const int d = r_group.dim(1);
  d_r = Tensor<T>(r_group.shape);
  double total = 0.0;
  for (int i = 0; i < m; ++i) {
    const T* ri = r_group.ptr() + static_cast<int64_t>(i) * d;
    T* dri = d_r.ptr() + static_cast<int64_t>(i) * d;
    for (int j = 0; j < m; ++j) {
      const Embedding& w = w_prime[static_cast<size_t>(j)];
      double z = 0.0;
      for (int k = 0; k < d; ++k) z += w[static_cast<size_t>(k)] * static_cast<double>(ri[k]);
      z *= scale;
      if (!std::isfinite(z)) throw std::runtime_error("kd_loss: non-finite logit");
      T dz;
      total += static_cast<double>(nn::bce_with_logit(static_cast<T>(z), static_cast<T>(labels[static_cast<size_t>(i)][static_cast<size_t>(j)]), dz));
      const double gz = static_cast<double>(dz) * scale / (static_cast<double>(m) * m);
      for (int k = 0; k < d; ++k) dri[k] += static_cast<T>(gz * w[static_cast<size_t>(k)]);
    }
  }
  return total / (static_cast<double>(m) * m);
}

struct GtBox {
  BoxXYXY box;
  int class_id = -1;
};

// Per-class positive labels: class k is set iff the max-IoU ground truth of
// class k reaches the threshold.
std::vector<std::vector<uint8_t>> match_proposals_to_gt(const std::vector<BoxXYXY>& proposals,
                                                        const std::vector<GtBox>& gts, int num_classes,
                                                        double iou_thresh = 0.5);

struct SampleBatch {
  std::vector<int> proposal_indices;  // for the classification loss
  std::vector<int> group_indices;     // for the distillation loss
};

// 256 proposals with a 25% positive share (positives resampled with
// replacement when scarce) plus 16 prompt groups, uniformly at random.
SampleBatch sample_training_batch(const std::vector<uint8_t>& proposal_is_positive, int num_groups, Rng& rng,
                                  int n_proposals = 256, int n_groups = 16, double positive_fraction = 0.25);

}  // namespace psc
