#include "psc/classifier.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace psc {

std::vector<std::vector<uint8_t>> kd_labels(const std::vector<BoxXYXY>& boxes) {
  const size_t m = boxes.size();
  std::vector<std::vector<uint8_t>> labels(m, std::vector<uint8_t>(m, 0));
  for (size_t i = 0; i < m; ++i)
    for (size_t j = 0; j < m; ++j) labels[i][j] = iou(boxes[i], boxes[j]) > 0.5 ? 1 : 0;
  return labels;
}

std::vector<std::vector<uint8_t>> match_proposals_to_gt(const std::vector<BoxXYXY>& proposals,
                                                        const std::vector<GtBox>& gts, int num_classes,
                                                        double iou_thresh) {
  std::vector<std::vector<uint8_t>> labels(proposals.size(), std::vector<uint8_t>(static_cast<size_t>(num_classes), 0));
  for (size_t i = 0; i < proposals.size(); ++i) {
    std::vector<double> best(static_cast<size_t>(num_classes), 0.0);
    for (const auto& gt : gts) {
      if (gt.class_id < 0 || gt.class_id >= num_classes) continue;
      best[static_cast<size_t>(gt.class_id)] =
          std::max(best[static_cast<size_t>(gt.class_id)], iou(proposals[i], gt.box));
    }
    for (int k = 0; k < num_classes; ++k)
      if (best[static_cast<size_t>(k)] >= iou_thresh) labels[i][static_cast<size_t>(k)] = 1;
  }
  return labels;
}

SampleBatch sample_training_batch(const std::vector<uint8_t>& proposal_is_positive, int num_groups, Rng& rng,
                                  int n_proposals, int n_groups, double positive_fraction) {
  std::vector<int> positives, negatives;
  for (size_t i = 0; i < proposal_is_positive.size(); ++i)
    (proposal_is_positive[i] ? positives : negatives).push_back(static_cast<int>(i));
  if (positives.empty()) throw std::runtime_error("sample_training_batch: no positive proposals in scene");

  SampleBatch batch;
  const int want_pos = std::min<int>(n_proposals, static_cast<int>(std::ceil(positive_fraction * n_proposals)));
  const int want_neg = n_proposals - want_pos;

  // positives: unique when plentiful, padded with replacement otherwise
  if (static_cast<int>(positives.size()) >= want_pos) {
    std::vector<int> pool = positives;
    rng.shuffle(pool);
    batch.proposal_indices.assign(pool.begin(), pool.begin() + want_pos);
  } else {
    batch.proposal_indices = positives;
    while (static_cast<int>(batch.proposal_indices.size()) < want_pos)
      batch.proposal_indices.push_back(positives[static_cast<size_t>(rng.uniform_int(0, static_cast<int>(positives.size()) - 1))]);
  }

  if (static_cast<int>(negatives.size()) >= want_neg) {
    std::vector<int> pool = negatives;
    rng.shuffle(pool);
    batch.proposal_indices.insert(batch.proposal_indices.end(), pool.begin(), pool.begin() + want_neg);
  } else if (!negatives.empty()) {
    for (int i = 0; i < want_neg; ++i)
      batch.proposal_indices.push_back(negatives[static_cast<size_t>(rng.uniform_int(0, static_cast<int>(negatives.size()) - 1))]);
  } else {
    while (static_cast<int>(batch.proposal_indices.size()) < n_proposals)
      batch.proposal_indices.push_back(positives[static_cast<size_t>(rng.uniform_int(0, static_cast<int>(positives.size()) - 1))]);
  }

  if (num_groups > 0) {
    for (int i = 0; i < n_groups; ++i) batch.group_indices.push_back(rng.uniform_int(0, num_groups - 1));
  }
  return batch;
}

}  // namespace psc
