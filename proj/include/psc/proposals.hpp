#pragma once

#include <memory>
#include <string>
#include <vector>

#include "psc/geometry.hpp"
#include "psc/heatmap.hpp"
#include "psc/scene.hpp"

namespace psc {

enum class MaskLevel { Whole = 0, Part = 1, Subpart = 2, BoxPrompt = 3 };

const char* mask_level_name(MaskLevel level);
MaskLevel mask_level_from_name(const std::string& name);

constexpr int kProposalsPerGroup = 4;

struct MaskProposal {
  BinaryMask mask;
  BoxXYXY box;  // tight box of the mask
  int prompt_group = -1;
  MaskLevel level = MaskLevel::Whole;
  double backend_score = 0.0;
  bool empty = true;
};

// The M=4 proposals originating from a single point prompt: three
// hierarchical point-prompt masks plus the first mask of a 16x16 box prompt.
struct PromptGroup {
  Point2D point;
  std::vector<MaskProposal> proposals;  // always kProposalsPerGroup entries

  bool all_empty() const {
    for (const auto& p : proposals)
      if (!p.empty) return false;
    return true;
  }
};

struct BackendCaps {
  bool point_prompts = true;
  bool box_prompts = true;
  int masks_per_point = 3;
};

// Pluggable segmenter. Batched and synchronous; must be deterministic and
// safe for concurrent read-only use.
class SegmenterBackend {
 public:
  virtual ~SegmenterBackend() = default;
  virtual BackendCaps caps() const = 0;
  virtual std::vector<PromptGroup> segment(const Image& image, const KeypointSet& points) const = 0;
};

// n x n points at the cell centers of a uniform image partition.
KeypointSet grid_prompts(int n, int img_w, int img_h);

// One group per input point, each with exactly 4 proposals (empty-marked on
// backend failure).
std::vector<PromptGroup> segment_at_points(const SegmenterBackend& backend, const Image& image,
                                           const KeypointSet& points);

// Answers prompts from ground-truth instance masks. A point inside instance
// i yields {whole = mask i, part = concentric 60% region, subpart = 30%},
// and the box prompt returns the instance with the largest mask overlap
// against the box.
class OracleBackend : public SegmenterBackend {
 public:
  explicit OracleBackend(const AnnotatedScene& scene, double box_prompt_size = 16.0);

  BackendCaps caps() const override { return {true, true, 3}; }
  std::vector<PromptGroup> segment(const Image& image, const KeypointSet& points) const override;

  // Topmost instance containing the point, or -1.
  int instance_at(const Point2D& p) const;

 private:
  const AnnotatedScene& scene_;
  double box_prompt_size_;
};

// Concentric fraction-scaled region: mask restricted to the centered sub-box
// with floor(frac * extent) dims (>= 1 cell).
BinaryMask concentric_region(const BinaryMask& mask, const BoxXYXY& box, double frac);

// Loads precomputed proposals (JSON manifest + RLE masks) keyed by prompt
// index, for replaying real segmenter outputs offline.
class ReplayBackend : public SegmenterBackend {
 public:
  explicit ReplayBackend(const std::string& manifest_path);

  BackendCaps caps() const override { return {true, true, 3}; }
  std::vector<PromptGroup> segment(const Image& image, const KeypointSet& points) const override;

  static void save_manifest(const std::string& path, const std::vector<PromptGroup>& groups, int frame_w,
                            int frame_h);

 private:
  std::vector<PromptGroup> groups_;
};

}  // namespace psc
