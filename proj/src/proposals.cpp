#include "psc/proposals.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <nlohmann/json.hpp>
#include <stdexcept>

namespace psc {

using nlohmann::json;

const char* mask_level_name(MaskLevel level) {
  switch (level) {
    case MaskLevel::Whole: return "whole";
    case MaskLevel::Part: return "part";
    case MaskLevel::Subpart: return "subpart";
    case MaskLevel::BoxPrompt: return "boxprompt";
  }
  return "unknown";
}

MaskLevel mask_level_from_name(const std::string& name) {
  if (name == "whole") return MaskLevel::Whole;
  if (name == "part") return MaskLevel::Part;
  if (name == "subpart") return MaskLevel::Subpart;
  if (name == "boxprompt") return MaskLevel::BoxPrompt;
  throw std::invalid_argument("unknown mask level: " + name);
}

KeypointSet grid_prompts(int n, int img_w, int img_h) {
  if (n < 1) throw std::invalid_argument("grid_prompts: n must be >= 1");
  KeypointSet out;
  out.reserve(static_cast<size_t>(n) * n);
  const double cw = static_cast<double>(img_w) / n;
  const double ch = static_cast<double>(img_h) / n;
  for (int gy = 0; gy < n; ++gy)
    for (int gx = 0; gx < n; ++gx)
      out.push_back({{(gx + 0.5) * cw, (gy + 0.5) * ch}, PointSource::OracleCenter});
  return out;
}

std::vector<PromptGroup> segment_at_points(const SegmenterBackend& backend, const Image& image,
                                           const KeypointSet& points) {
  std::vector<PromptGroup> groups = backend.segment(image, points);
  if (groups.size() != points.size()) throw std::runtime_error("segment_at_points: backend group count mismatch");
  for (size_t gi = 0; gi < groups.size(); ++gi) {
    PromptGroup& g = groups[gi];
    if (g.proposals.size() != static_cast<size_t>(kProposalsPerGroup))
      throw std::runtime_error("segment_at_points: backend returned wrong proposal count");
    for (auto& p : g.proposals) p.prompt_group = static_cast<int>(gi);
  }
  return groups;
}

BinaryMask concentric_region(const BinaryMask& mask, const BoxXYXY& box, double frac) {
  const int bx0 = static_cast<int>(box.x0), by0 = static_cast<int>(box.y0);
  const int bw = static_cast<int>(box.x1) - bx0, bh = static_cast<int>(box.y1) - by0;
  const int sw = std::max(1, static_cast<int>(std::floor(frac * bw)));
  const int sh = std::max(1, static_cast<int>(std::floor(frac * bh)));
  const int ox = bx0 + (bw - sw) / 2;
  const int oy = by0 + (bh - sh) / 2;
  BinaryMask out(mask.width, mask.height);
  for (int y = oy; y < oy + sh; ++y)
    for (int x = ox; x < ox + sw; ++x)
      if (x >= 0 && y >= 0 && x < mask.width && y < mask.height && mask.get(x, y)) out.set(x, y, true);
  return out;
}

OracleBackend::OracleBackend(const AnnotatedScene& scene, double box_prompt_size)
    : scene_(scene), box_prompt_size_(box_prompt_size) {}

int OracleBackend::instance_at(const Point2D& p) const {
  const int x = static_cast<int>(std::floor(p.x));
  const int y = static_cast<int>(std::floor(p.y));
  // topmost instance wins where masks overlap
  for (size_t i = scene_.instances.size(); i-- > 0;) {
    const InstanceAnn& ins = scene_.instances[i];
    if (x < 0 || y < 0 || x >= ins.mask.width || y >= ins.mask.height) continue;
    if (ins.mask.get(x, y)) return static_cast<int>(i);
  }
  return -1;
}

std::vector<PromptGroup> OracleBackend::segment(const Image& image, const KeypointSet& points) const {
  (void)image;
  std::vector<PromptGroup> out;
  out.reserve(points.size());
  for (const Keypoint& kp : points) {
    PromptGroup g;
    g.point = kp.p;
    g.proposals.resize(kProposalsPerGroup);
    for (int li = 0; li < kProposalsPerGroup; ++li) g.proposals[static_cast<size_t>(li)].level = static_cast<MaskLevel>(li);

    const int idx = instance_at(kp.p);
    if (idx >= 0) {
      const InstanceAnn& ins = scene_.instances[static_cast<size_t>(idx)];
      auto fill = [&](MaskLevel level, BinaryMask m) {
        MaskProposal& p = g.proposals[static_cast<size_t>(level)];
        p.level = level;
        p.mask = std::move(m);
        if (p.mask.count() > 0) {
          p.box = mask_to_box(p.mask);
          p.empty = false;
          p.backend_score = 1.0;
        }
      };
      fill(MaskLevel::Whole, ins.mask);
      fill(MaskLevel::Part, concentric_region(ins.mask, ins.box, 0.6));
      fill(MaskLevel::Subpart, concentric_region(ins.mask, ins.box, 0.3));
    }

    // 16x16 box prompt: instance with the largest mask overlap inside the box
    const double half = box_prompt_size_ / 2.0;
    const BoxXYXY prompt_box{kp.p.x - half, kp.p.y - half, kp.p.x + half, kp.p.y + half};
    int best = -1;
    int64_t best_overlap = 0;
    for (size_t i = 0; i < scene_.instances.size(); ++i) {
      const InstanceAnn& ins = scene_.instances[i];
      if (intersection_area(prompt_box, ins.box) <= 0.0) continue;
      const int x0 = std::max(0, static_cast<int>(std::floor(prompt_box.x0)));
      const int y0 = std::max(0, static_cast<int>(std::floor(prompt_box.y0)));
      const int x1 = std::min(ins.mask.width, static_cast<int>(std::ceil(prompt_box.x1)));
      const int y1 = std::min(ins.mask.height, static_cast<int>(std::ceil(prompt_box.y1)));
      int64_t overlap = 0;
      for (int y = y0; y < y1; ++y)
        for (int x = x0; x < x1; ++x)
          if (ins.mask.get(x, y)) ++overlap;
      if (overlap > best_overlap) {
        best_overlap = overlap;
        best = static_cast<int>(i);
      }
    }
    if (best >= 0) {
      MaskProposal& p = g.proposals[static_cast<size_t>(MaskLevel::BoxPrompt)];
      p.mask = scene_.instances[static_cast<size_t>(best)].mask;
      p.box = mask_to_box(p.mask);
      p.empty = false;
      p.backend_score = 1.0;
    }
    out.push_back(std::move(g));
  }
  return out;
}

namespace {

json rle_to_json(const RleMask& rle) {
  return json{{"origin", {rle.origin_x, rle.origin_y}}, {"size", {rle.width, rle.height}}, {"counts", rle.counts}};
}

RleMask rle_from_json(const json& j) {
  RleMask rle;
  rle.origin_x = j.at("origin")[0].get<int>();
  rle.origin_y = j.at("origin")[1].get<int>();
  rle.width = j.at("size")[0].get<int>();
  rle.height = j.at("size")[1].get<int>();
  rle.counts = j.at("counts").get<std::vector<int>>();
  return rle;
}

}  // namespace

ReplayBackend::ReplayBackend(const std::string& manifest_path) {
  std::ifstream f(manifest_path);
  if (!f) throw std::runtime_error("ReplayBackend: cannot open " + manifest_path);
  json j;
  f >> j;
  const int fw = j.at("frame")[0].get<int>();
  const int fh = j.at("frame")[1].get<int>();
  for (const auto& jg : j.at("groups")) {
    PromptGroup g;
    g.point = {jg.at("point")[0].get<double>(), jg.at("point")[1].get<double>()};
    for (const auto& jp : jg.at("proposals")) {
      MaskProposal p;
      p.level = mask_level_from_name(jp.at("level").get<std::string>());
      p.backend_score = jp.value("score", 0.0);
      if (jp.contains("rle")) {
        p.mask = rle_decode(rle_from_json(jp.at("rle")), fw, fh);
        if (p.mask.count() > 0) {
          p.box = mask_to_box(p.mask);
          p.empty = false;
        }
      }
      g.proposals.push_back(std::move(p));
    }
    if (g.proposals.size() != static_cast<size_t>(kProposalsPerGroup))
      throw std::runtime_error("ReplayBackend: group without exactly 4 proposals");
    groups_.push_back(std::move(g));
  }
}

std::vector<PromptGroup> ReplayBackend::segment(const Image& image, const KeypointSet& points) const {
  (void)image;
  // replayed groups are matched to prompts by nearest recorded point
  std::vector<PromptGroup> out;
  out.reserve(points.size());
  for (const Keypoint& kp : points) {
    double best_d = 1e30;
    const PromptGroup* best = nullptr;
    for (const auto& g : groups_) {
      const double dx = g.point.x - kp.p.x, dy = g.point.y - kp.p.y;
      const double d = dx * dx + dy * dy;
      if (d < best_d) {
        best_d = d;
        best = &g;
      }
    }
    if (best && best_d < 4.0) {
      out.push_back(*best);
    } else {
      PromptGroup g;
      g.point = kp.p;
      g.proposals.resize(kProposalsPerGroup);
      for (int li = 0; li < kProposalsPerGroup; ++li) g.proposals[static_cast<size_t>(li)].level = static_cast<MaskLevel>(li);
      out.push_back(std::move(g));
    }
  }
  return out;
}

void ReplayBackend::save_manifest(const std::string& path, const std::vector<PromptGroup>& groups, int frame_w,
                                  int frame_h) {
  json j;
  j["frame"] = {frame_w, frame_h};
  j["groups"] = json::array();
  for (const auto& g : groups) {
    json jg;
    jg["point"] = {g.point.x, g.point.y};
    jg["proposals"] = json::array();
    for (const auto& p : g.proposals) {
      json jp;
      jp["level"] = mask_level_name(p.level);
      jp["score"] = p.backend_score;
      if (!p.empty) jp["rle"] = rle_to_json(rle_encode(p.mask));
      jg["proposals"].push_back(std::move(jp));
    }
    j["groups"].push_back(std::move(jg));
  }
  std::ofstream f(path);
  if (!f) throw std::runtime_error("ReplayBackend: cannot write " + path);
  f << j.dump(2) << "\n";
}

}  // namespace psc
