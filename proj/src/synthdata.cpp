#include "psc/synthdata.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <nlohmann/json.hpp>
#include <stdexcept>

#include "psc/hash.hpp"

namespace psc {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kGeneratorVersion = 1;

struct Rgb {
  double r, g, b;
};

Rgb hsv_to_rgb(double h, double s, double v) {
  h = std::fmod(h, 360.0);
  if (h < 0) h += 360.0;
  const double c = v * s;
  const double x = c * (1.0 - std::abs(std::fmod(h / 60.0, 2.0) - 1.0));
  const double m = v - c;
  double r = 0, g = 0, b = 0;
  if (h < 60) {
    r = c; g = x;
  } else if (h < 120) {
    r = x; g = c;
  } else if (h < 180) {
    g = c; b = x;
  } else if (h < 240) {
    g = x; b = c;
  } else if (h < 300) {
    r = x; b = c;
  } else {
    r = c; b = x;
  }
  return {255.0 * (r + m), 255.0 * (g + m), 255.0 * (b + m)};
}

bool shape_contains(ShapeFamily shape, double s, double px, double py) {
  // px/py relative to the shape center, s = bounding square side
  const double h = s / 2.0;
  switch (shape) {
    case ShapeFamily::Disk:
      return px * px + py * py <= h * h;
    case ShapeFamily::Square:
      return std::abs(px) <= h && std::abs(py) <= h;
    case ShapeFamily::Triangle: {
      if (py < -h || py > h) return false;
      const double t = (py + h) / s;  // 0 at apex, 1 at base
      return std::abs(px) <= t * h;
    }
    case ShapeFamily::Ring: {
      const double rr = px * px + py * py;
      const double inner = 0.45 * h;
      return rr <= h * h && rr >= inner * inner;
    }
    case ShapeFamily::Bar:
      return std::abs(px) <= h && std::abs(py) <= std::max(1.0, 0.35 * s) / 2.0;
    case ShapeFamily::Cross: {
      const double t = std::max(1.0, 0.34 * s) / 2.0;
      return (std::abs(px) <= h && std::abs(py) <= t) || (std::abs(py) <= h && std::abs(px) <= t);
    }
  }
  return false;
}

// Rasterize a shape instance into a full-frame mask; returns false if any
// cell would fall outside the frame.
bool rasterize_shape(ShapeFamily shape, double size, double cx, double cy, int frame_w, int frame_h,
                     BinaryMask& out) {
  const double h = size / 2.0 + 1.0;
  const int x0 = static_cast<int>(std::floor(cx - h)), x1 = static_cast<int>(std::ceil(cx + h));
  const int y0 = static_cast<int>(std::floor(cy - h)), y1 = static_cast<int>(std::ceil(cy + h));
  if (x0 < 1 || y0 < 1 || x1 >= frame_w - 1 || y1 >= frame_h - 1) return false;
  bool any = false;
  for (int y = y0; y <= y1; ++y) {
    for (int x = x0; x <= x1; ++x) {
      if (shape_contains(shape, size, (x + 0.5) - cx, (y + 0.5) - cy)) {
        out.set(x, y, true);
        any = true;
      }
    }
  }
  return any;
}

void paint_mask(Image& img, const BinaryMask& mask, const BoxXYXY& box, const Rgb& color, bool textured) {
  const int x0 = static_cast<int>(box.x0), x1 = static_cast<int>(box.x1);
  const int y0 = static_cast<int>(box.y0), y1 = static_cast<int>(box.y1);
  for (int y = y0; y < y1; ++y) {
    for (int x = x0; x < x1; ++x) {
      if (!mask.get(x, y)) continue;
      double scale = 1.0;
      if (textured) scale = 1.0 + 0.13 * std::sin(0.9 * x) * std::sin(0.9 * y);
      const auto clamp8 = [](double v) { return static_cast<uint8_t>(std::clamp(v, 0.0, 255.0)); };
      img.set_rgb(x, y, clamp8(color.r * scale), clamp8(color.g * scale), clamp8(color.b * scale));
    }
  }
}

void paint_background(Image& img, Rng& rng) {
  const double base_r = 110.0 + rng.uniform(-6.0, 6.0);
  const double base_g = 107.0 + rng.uniform(-6.0, 6.0);
  const double base_b = 102.0 + rng.uniform(-6.0, 6.0);
  // coarse value-noise grid, bilinearly upsampled
  constexpr int kNoise = 9;
  double grid[kNoise][kNoise];
  for (auto& row : grid)
    for (double& v : row) v = rng.uniform(-10.0, 10.0);
  for (int y = 0; y < img.height; ++y) {
    const double gy = static_cast<double>(y) / img.height * (kNoise - 1);
    const int iy = std::min(kNoise - 2, static_cast<int>(gy));
    const double fy = gy - iy;
    for (int x = 0; x < img.width; ++x) {
      const double gx = static_cast<double>(x) / img.width * (kNoise - 1);
      const int ix = std::min(kNoise - 2, static_cast<int>(gx));
      const double fx = gx - ix;
      const double n = grid[iy][ix] * (1 - fx) * (1 - fy) + grid[iy][ix + 1] * fx * (1 - fy) +
                       grid[iy + 1][ix] * (1 - fx) * fy + grid[iy + 1][ix + 1] * fx * fy;
      const double fine = rng.uniform(-3.0, 3.0);
      const auto clamp8 = [](double v) { return static_cast<uint8_t>(std::clamp(v, 0.0, 255.0)); };
      img.set_rgb(x, y, clamp8(base_r + n + fine), clamp8(base_g + n + fine), clamp8(base_b + n + fine));
    }
  }
}

Point2D interior_point(const BinaryMask& mask, const BoxXYXY& box) {
  // mask pixel nearest the box center (rings have hollow centroids)
  const double cx = (box.x0 + box.x1) / 2.0, cy = (box.y0 + box.y1) / 2.0;
  double best = 1e30;
  Point2D out{box.x0 + 0.5, box.y0 + 0.5};
  for (int y = static_cast<int>(box.y0); y < static_cast<int>(box.y1); ++y) {
    for (int x = static_cast<int>(box.x0); x < static_cast<int>(box.x1); ++x) {
      if (!mask.get(x, y)) continue;
      const double dx = (x + 0.5) - cx, dy = (y + 0.5) - cy;
      const double d = dx * dx + dy * dy;
      if (d < best) {
        best = d;
        out = {x + 0.5, y + 0.5};
      }
    }
  }
  return out;
}

bool masks_overlap(const BinaryMask& a, const BinaryMask& b) { return mask_intersection_count(a, b) > 0; }

struct SizeClass {
  double lo, hi;
};

const SizeClass kSizeClasses[] = {{3.0, 5.0}, {7.0, 10.0}, {11.0, 16.0}, {17.0, 24.0}};

}  // namespace

const char* shape_family_name(ShapeFamily s) {
  switch (s) {
    case ShapeFamily::Disk: return "disk";
    case ShapeFamily::Square: return "square";
    case ShapeFamily::Triangle: return "triangle";
    case ShapeFamily::Ring: return "ring";
    case ShapeFamily::Bar: return "bar";
    case ShapeFamily::Cross: return "cross";
  }
  return "disk";
}

ShapeFamily shape_family_from_name(const std::string& name) {
  for (int i = 0; i < 6; ++i)
    if (name == shape_family_name(static_cast<ShapeFamily>(i))) return static_cast<ShapeFamily>(i);
  throw std::invalid_argument("unknown shape family: " + name);
}

const std::vector<int>& CategoryRegistry::split_categories(const std::string& split) const {
  if (split == "train") return splits.train;
  if (split == "val") return splits.val;
  if (split == "test") return splits.test;
  throw std::invalid_argument("unknown split: " + split);
}

Image render_canonical_exemplar(const CategoryDef& def, int variant, uint64_t seed) {
  Rng rng(derive_seed(seed, 0xca0 + static_cast<uint64_t>(def.id), static_cast<uint64_t>(variant)));
  const double t = (variant % 4) / 3.0;
  const double size = def.size_min + t * (def.size_max - def.size_min);
  const int canvas = static_cast<int>(std::ceil(size)) + 10;
  Image img(canvas, canvas);
  for (int y = 0; y < canvas; ++y)
    for (int x = 0; x < canvas; ++x) {
      const double n = rng.uniform(-3.0, 3.0);
      const auto clamp8 = [](double v) { return static_cast<uint8_t>(std::clamp(v, 0.0, 255.0)); };
      img.set_rgb(x, y, clamp8(112 + n), clamp8(109 + n), clamp8(104 + n));
    }
  BinaryMask mask(canvas, canvas);
  if (!rasterize_shape(def.shape, size, canvas / 2.0, canvas / 2.0, canvas, canvas, mask))
    throw std::runtime_error("render_canonical_exemplar: shape does not fit canvas");
  Rgb color{def.color[0] + rng.uniform(-def.color_jitter, def.color_jitter),
            def.color[1] + rng.uniform(-def.color_jitter, def.color_jitter),
            def.color[2] + rng.uniform(-def.color_jitter, def.color_jitter)};
  paint_mask(img, mask, mask_to_box(mask), color, def.textured);
  return img;
}

namespace {

Embedding category_name_embedding(const CategoryDef& def, uint64_t seed, const ToyEmbedder& embedder,
                                  std::vector<Embedding>* exemplars_out) {
  constexpr int kExemplars = 16;
  Embedding mean(static_cast<size_t>(embedder.dim()), 0.0);
  for (int v = 0; v < kExemplars; ++v) {
    Image img = render_canonical_exemplar(def, v, seed);
    // tight object box: rebuild the mask footprint from the render setup
    Rng probe(0);
    (void)probe;
    // the exemplar is centered; locate it by color distance from the corner pixel
    int minx = img.width, maxx = -1, miny = img.height, maxy = -1;
    for (int y = 0; y < img.height; ++y)
      for (int x = 0; x < img.width; ++x) {
        const double d = std::abs(static_cast<double>(img.at(x, y, 0)) - img.at(0, 0, 0)) +
                         std::abs(static_cast<double>(img.at(x, y, 1)) - img.at(0, 0, 1)) +
                         std::abs(static_cast<double>(img.at(x, y, 2)) - img.at(0, 0, 2));
        if (d > 90.0) {
          minx = std::min(minx, x);
          maxx = std::max(maxx, x);
          miny = std::min(miny, y);
          maxy = std::max(maxy, y);
        }
      }
    if (maxx < 0) throw std::runtime_error("category_name_embedding: exemplar not visible");
    BoxXYXY box{static_cast<double>(minx), static_cast<double>(miny), static_cast<double>(maxx + 1),
                static_cast<double>(maxy + 1)};
    Embedding e = embedder.embed_region(img, box);
    if (exemplars_out) exemplars_out->push_back(e);
    for (size_t i = 0; i < mean.size(); ++i) mean[i] += e[i];
  }
  for (double& v : mean) v /= kExemplars;
  l2_normalize(mean);
  return mean;
}

CategoryDef draw_category(int id, int n_categories, uint64_t seed, int attempt) {
  Rng rng(derive_seed(seed, 0xca7e60 + static_cast<uint64_t>(attempt), static_cast<uint64_t>(id)));
  CategoryDef def;
  def.id = id;
  const double hue_step = 360.0 / n_categories;
  const double hue = hue_step * id + rng.uniform(-hue_step * 0.18, hue_step * 0.18) +
                     (attempt > 0 ? rng.uniform(0.0, 360.0) : 0.0);
  const double sat = (id % 2 == 0) ? 0.92 : 0.74;
  const double val = (id % 3 == 0) ? 0.95 : 0.80;
  Rgb c = hsv_to_rgb(hue, sat, val);
  def.color = {c.r, c.g, c.b};
  def.color_jitter = 12.0;
  def.shape = static_cast<ShapeFamily>(id % 6);
  const SizeClass& sc = kSizeClasses[id % 4];
  const double lo = sc.lo + rng.uniform(0.0, (sc.hi - sc.lo) * 0.25);
  def.size_min = lo;
  def.size_max = std::min(sc.hi, lo * 1.5 + 1.0);
  if (def.shape == ShapeFamily::Ring && def.size_min < 7.0) def.shape = ShapeFamily::Disk;  // rings need room
  def.textured = (id % 3 == 2) && def.size_min >= 7.0;
  char buf[32];
  std::snprintf(buf, sizeof(buf), "cat%02d-%s", id, shape_family_name(def.shape));
  def.name = buf;
  return def;
}

}  // namespace

void attach_name_embeddings(CategoryRegistry& reg, ToyEmbedder& embedder) {
  reg.name_embeddings.clear();
  for (const auto& def : reg.defs) reg.name_embeddings.push_back(category_name_embedding(def, reg.seed, embedder, nullptr));
  embedder.set_name_table(reg.name_embeddings);
}

CategoryRegistry build_registry(int n_categories, uint64_t seed, ToyEmbedder& embedder) {
  if (n_categories < 3) throw std::invalid_argument("build_registry: need at least 3 categories");
  CategoryRegistry reg;
  reg.seed = seed;
  reg.embed_dim = embedder.dim();
  reg.defs.resize(static_cast<size_t>(n_categories));
  std::vector<std::vector<Embedding>> exemplars(static_cast<size_t>(n_categories));
  reg.name_embeddings.resize(static_cast<size_t>(n_categories));

  for (int id = 0; id < n_categories; ++id) {
    bool ok = false;
    for (int attempt = 0; attempt < 12 && !ok; ++attempt) {
      CategoryDef def = draw_category(id, n_categories, seed, attempt);
      std::vector<Embedding> ex;
      Embedding name = category_name_embedding(def, seed, embedder, &ex);
      // intra vs inter separability against already accepted categories
      double intra = 0.0;
      int n_intra = 0;
      for (size_t a = 0; a < ex.size(); ++a)
        for (size_t b = a + 1; b < ex.size(); ++b) {
          intra += cosine(ex[a], ex[b]);
          ++n_intra;
        }
      intra /= std::max(1, n_intra);
      double worst_inter = -1.0;
      for (int prev = 0; prev < id; ++prev) {
        double inter = 0.0;
        int n_inter = 0;
        for (const auto& ea : ex)
          for (const auto& eb : exemplars[static_cast<size_t>(prev)]) {
            inter += cosine(ea, eb);
            ++n_inter;
          }
        inter /= std::max(1, n_inter);
        worst_inter = std::max(worst_inter, inter);
      }
      if (id == 0 || worst_inter < intra - 0.05) {
        reg.defs[static_cast<size_t>(id)] = def;
        reg.name_embeddings[static_cast<size_t>(id)] = std::move(name);
        exemplars[static_cast<size_t>(id)] = std::move(ex);
        ok = true;
      }
    }
    if (!ok) throw std::runtime_error("build_registry: separability validation failed for category " +
                                      std::to_string(id));
  }

  // disjoint splits: deal ids round-robin after a seeded shuffle so every
  // split mixes size classes and shapes
  std::vector<int> ids(static_cast<size_t>(n_categories));
  for (int i = 0; i < n_categories; ++i) ids[static_cast<size_t>(i)] = i;
  Rng rng(derive_seed(seed, 0x5b117));
  rng.shuffle(ids);
  for (size_t i = 0; i < ids.size(); ++i) {
    const int r = static_cast<int>(i % 4);
    if (r <= 1)
      reg.splits.train.push_back(ids[i]);
    else if (r == 2)
      reg.splits.val.push_back(ids[i]);
    else
      reg.splits.test.push_back(ids[i]);
  }
  std::sort(reg.splits.train.begin(), reg.splits.train.end());
  std::sort(reg.splits.val.begin(), reg.splits.val.end());
  std::sort(reg.splits.test.begin(), reg.splits.test.end());

  embedder.set_name_table(reg.name_embeddings);
  return reg;
}

AnnotatedScene generate_scene(const CategoryRegistry& registry, const std::string& split, int target_class,
                              int count, Rng& rng, const SceneGenConfig& cfg) {
  const auto& split_cats = registry.split_categories(split);
  if (std::find(split_cats.begin(), split_cats.end(), target_class) == split_cats.end())
    throw std::invalid_argument("generate_scene: target class not in split");

  AnnotatedScene scene;
  scene.split = split;
  scene.target_class = target_class;
  scene.image = Image(cfg.img_w, cfg.img_h);
  paint_background(scene.image, rng);

  BinaryMask occupancy(cfg.img_w, cfg.img_h);
  const CategoryDef& target_def = registry.defs[static_cast<size_t>(target_class)];

  auto try_place = [&](const CategoryDef& def, double cx, double cy, double size) -> bool {
    BinaryMask mask(cfg.img_w, cfg.img_h);
    if (!rasterize_shape(def.shape, size, cx, cy, cfg.img_w, cfg.img_h, mask)) return false;
    if (masks_overlap(mask, occupancy)) return false;
    BoxXYXY box = mask_to_box(mask);
    // hierarchy sanity: concentric regions must be non-empty for the oracle
    if (concentric_region(mask, box, 0.3).count() == 0) return false;
    for (size_t i = 0; i < mask.bits.size(); ++i) occupancy.bits[i] |= mask.bits[i];
    Rgb color{def.color[0] + rng.uniform(-def.color_jitter, def.color_jitter),
              def.color[1] + rng.uniform(-def.color_jitter, def.color_jitter),
              def.color[2] + rng.uniform(-def.color_jitter, def.color_jitter)};
    paint_mask(scene.image, mask, box, color, def.textured);
    InstanceAnn ins;
    ins.class_id = def.id;
    ins.box = box;
    ins.point = interior_point(mask, box);
    ins.mask = std::move(mask);
    scene.instances.push_back(std::move(ins));
    return true;
  };

  auto place_uniform = [&](const CategoryDef& def, int tries) -> bool {
    for (int t = 0; t < tries; ++t) {
      const double size = rng.uniform(def.size_min, def.size_max);
      const double m = size / 2.0 + 2.0;
      const double cx = rng.uniform(m, cfg.img_w - m);
      const double cy = rng.uniform(m, cfg.img_h - m);
      if (try_place(def, cx, cy, size)) return true;
    }
    return false;
  };

  // distractors first so tiny targets can cluster against them
  int n_distractors = rng.uniform_int(0, cfg.distractors_max);
  std::vector<int> other;
  for (int c : split_cats)
    if (c != target_class) other.push_back(c);
  if (target_def.tiny() && n_distractors < 6 && !other.empty()) n_distractors = 6;
  for (int i = 0; i < n_distractors && !other.empty(); ++i) {
    const CategoryDef& def = registry.defs[static_cast<size_t>(other[static_cast<size_t>(rng.uniform_int(
        0, static_cast<int>(other.size()) - 1))])];
    place_uniform(def, 60);
  }

  // targets; tiny categories place a fraction adjacent to larger neighbors
  int placed = 0;
  for (int i = 0; i < count; ++i) {
    bool ok = false;
    const double size = rng.uniform(target_def.size_min, target_def.size_max);
    if (target_def.tiny() && rng.uniform() < 0.45) {
      // pick a larger already-placed instance and hug it
      std::vector<int> hosts;
      for (size_t k = 0; k < scene.instances.size(); ++k)
        if (scene.instances[k].box.width() >= 7.0) hosts.push_back(static_cast<int>(k));
      if (!hosts.empty()) {
        for (int t = 0; t < 80 && !ok; ++t) {
          const InstanceAnn& host =
              scene.instances[static_cast<size_t>(hosts[static_cast<size_t>(rng.uniform_int(0, static_cast<int>(hosts.size()) - 1))])];
          const double ang = rng.uniform(0.0, 6.283185307179586);
          const double gap = rng.uniform(1.5, 5.0);
          const double hr = std::max(host.box.width(), host.box.height()) / 2.0;
          const double dist = hr + gap + size / 2.0;
          const double hx = (host.box.x0 + host.box.x1) / 2.0;
          const double hy = (host.box.y0 + host.box.y1) / 2.0;
          ok = try_place(target_def, hx + dist * std::cos(ang), hy + dist * std::sin(ang), size);
        }
      }
    }
    if (!ok) ok = place_uniform(target_def, 200);
    if (ok)
      ++placed;
    else
      std::cerr << "[synthdata] placement failed, reducing count by one\n";
  }
  (void)placed;

  // 3 exemplar boxes: target instances nearest the median size
  std::vector<std::pair<double, size_t>> targets;
  for (size_t i = 0; i < scene.instances.size(); ++i)
    if (scene.instances[i].class_id == target_class)
      targets.emplace_back(scene.instances[i].box.area(), i);
  std::sort(targets.begin(), targets.end());
  if (!targets.empty()) {
    const double median = targets[targets.size() / 2].first;
    std::stable_sort(targets.begin(), targets.end(), [&](const auto& a, const auto& b) {
      return std::abs(a.first - median) < std::abs(b.first - median);
    });
    for (size_t i = 0; i < std::min<size_t>(3, targets.size()); ++i)
      scene.exemplar_boxes.push_back(scene.instances[targets[i].second].box);
  }
  return scene;
}

std::vector<PseudoBox> pseudo_boxes_from_points(const AnnotatedScene& scene, const SegmenterBackend& backend) {
  KeypointSet points;
  for (const auto& ins : scene.instances) points.push_back({ins.point, PointSource::GroundTruth});
  const auto groups = segment_at_points(backend, scene.image, points);
  std::vector<PseudoBox> out;
  int dropped = 0;
  for (size_t i = 0; i < groups.size(); ++i) {
    const MaskProposal& whole = groups[i].proposals[static_cast<size_t>(MaskLevel::Whole)];
    if (whole.empty) {
      ++dropped;
      continue;
    }
    out.push_back({static_cast<int>(i), scene.instances[i].class_id, whole.box});
  }
  if (dropped > 0) std::cerr << "[synthdata] pseudo boxes: dropped " << dropped << " empty prompts\n";
  return out;
}

namespace {

json registry_to_json(const CategoryRegistry& reg) {
  json j;
  j["seed"] = reg.seed;
  j["embed_dim"] = reg.embed_dim;
  j["categories"] = json::array();
  for (const auto& d : reg.defs) {
    j["categories"].push_back(json{{"id", d.id},
                                   {"name", d.name},
                                   {"shape", shape_family_name(d.shape)},
                                   {"size_min", d.size_min},
                                   {"size_max", d.size_max},
                                   {"color", {d.color[0], d.color[1], d.color[2]}},
                                   {"color_jitter", d.color_jitter},
                                   {"textured", d.textured}});
  }
  j["splits"] = json{{"train", reg.splits.train}, {"val", reg.splits.val}, {"test", reg.splits.test}};
  return j;
}

CategoryRegistry registry_from_json(const json& j) {
  CategoryRegistry reg;
  reg.seed = j.at("seed").get<uint64_t>();
  reg.embed_dim = j.at("embed_dim").get<int>();
  for (const auto& jc : j.at("categories")) {
    CategoryDef d;
    d.id = jc.at("id").get<int>();
    d.name = jc.at("name").get<std::string>();
    d.shape = shape_family_from_name(jc.at("shape").get<std::string>());
    d.size_min = jc.at("size_min").get<double>();
    d.size_max = jc.at("size_max").get<double>();
    d.color = {jc.at("color")[0].get<double>(), jc.at("color")[1].get<double>(), jc.at("color")[2].get<double>()};
    d.color_jitter = jc.at("color_jitter").get<double>();
    d.textured = jc.at("textured").get<bool>();
    reg.defs.push_back(std::move(d));
  }
  reg.splits.train = j.at("splits").at("train").get<std::vector<int>>();
  reg.splits.val = j.at("splits").at("val").get<std::vector<int>>();
  reg.splits.test = j.at("splits").at("test").get<std::vector<int>>();
  return reg;
}

json box_to_json(const BoxXYXY& b) { return json::array({b.x0, b.y0, b.x1, b.y1}); }

BoxXYXY box_from_json(const json& j) {
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>(), j[3].get<double>()};
}

}  // namespace

std::string scene_annotation_json(const AnnotatedScene& scene) {
  json j;
  j["version"] = kGeneratorVersion;
  j["id"] = scene.id;
  j["split"] = scene.split;
  j["target_class"] = scene.target_class;
  j["width"] = scene.image.width;
  j["height"] = scene.image.height;
  j["instances"] = json::array();
  for (const auto& ins : scene.instances) {
    RleMask rle = rle_encode(ins.mask);
    j["instances"].push_back(json{{"class", ins.class_id},
                                  {"box", box_to_json(ins.box)},
                                  {"point", {ins.point.x, ins.point.y}},
                                  {"rle",
                                   {{"origin", {rle.origin_x, rle.origin_y}},
                                    {"size", {rle.width, rle.height}},
                                    {"counts", rle.counts}}}});
  }
  j["exemplar_boxes"] = json::array();
  for (const auto& b : scene.exemplar_boxes) j["exemplar_boxes"].push_back(box_to_json(b));
  return j.dump();
}

std::vector<const SceneMeta*> DatasetManifest::split_scenes(const std::string& split) const {
  std::vector<const SceneMeta*> out;
  for (const auto& s : scenes)
    if (s.split == split) out.push_back(&s);
  return out;
}

DatasetManifest make_dataset(const CategoryRegistry& registry, const DatasetSizes& sizes, uint64_t seed,
                             const std::string& root, const SceneGenConfig& cfg) {
  DatasetManifest manifest;
  manifest.seed = seed;
  manifest.registry = registry;
  manifest.sizes = sizes;
  manifest.scene_cfg = cfg;

  const std::pair<std::string, int> split_sizes[] = {{"train", sizes.train}, {"val", sizes.val}, {"test", sizes.test}};
  fs::create_directories(root);
  for (const auto& [split, n] : split_sizes) {
    fs::create_directories(fs::path(root) / split);
    const auto& cats = registry.split_categories(split);
    for (int i = 0; i < n; ++i) {
      Rng rng(derive_seed(seed, fnv1a64(split), static_cast<uint64_t>(i)));
      const int target = cats[static_cast<size_t>(rng.uniform_int(0, static_cast<int>(cats.size()) - 1))];
      const int count = rng.uniform_int(cfg.count_min, cfg.count_max);
      AnnotatedScene scene = generate_scene(registry, split, target, count, rng, cfg);
      char buf[32];
      std::snprintf(buf, sizeof(buf), "%s-%04d", split.c_str(), i);
      scene.id = buf;
      const std::string rel = split + "/" + scene.id;
      save_png((fs::path(root) / (rel + ".png")).string(), scene.image);
      const std::string ann = scene_annotation_json(scene);
      {
        std::ofstream f((fs::path(root) / (rel + ".json")).string());
        f << ann << "\n";
      }
      manifest.scenes.push_back({scene.id, split, scene.target_class, rel + ".png", hash_hex(fnv1a64(ann))});
    }
  }

  json j;
  j["generator_version"] = kGeneratorVersion;
  j["seed"] = seed;
  j["registry"] = registry_to_json(registry);
  j["sizes"] = json{{"train", sizes.train}, {"val", sizes.val}, {"test", sizes.test}};
  j["scene_config"] = json{{"img_w", cfg.img_w},         {"img_h", cfg.img_h},
                           {"count_min", cfg.count_min}, {"count_max", cfg.count_max},
                           {"distractors_max", cfg.distractors_max}, {"max_overlap", cfg.max_overlap}};
  j["scenes"] = json::array();
  for (const auto& s : manifest.scenes)
    j["scenes"].push_back(json{{"id", s.id},
                               {"split", s.split},
                               {"target_class", s.target_class},
                               {"file", s.file},
                               {"annotation_hash", s.annotation_hash}});
  manifest.config_hash = hash_hex(fnv1a64(j.dump()));
  j["config_hash"] = manifest.config_hash;
  std::ofstream f((fs::path(root) / "manifest.json").string());
  if (!f) throw std::runtime_error("make_dataset: cannot write manifest");
  f << j.dump(2) << "\n";
  return manifest;
}

DatasetManifest load_manifest(const std::string& root) {
  std::ifstream f((fs::path(root) / "manifest.json").string());
  if (!f) throw std::runtime_error("load_manifest: cannot open manifest in " + root);
  json j;
  f >> j;
  DatasetManifest m;
  m.seed = j.at("seed").get<uint64_t>();
  m.config_hash = j.value("config_hash", "");
  m.registry = registry_from_json(j.at("registry"));
  m.sizes = {j.at("sizes").at("train").get<int>(), j.at("sizes").at("val").get<int>(),
             j.at("sizes").at("test").get<int>()};
  const auto& sc = j.at("scene_config");
  m.scene_cfg = {sc.at("img_w").get<int>(),     sc.at("img_h").get<int>(),
                 sc.at("count_min").get<int>(), sc.at("count_max").get<int>(),
                 sc.at("distractors_max").get<int>(), sc.at("max_overlap").get<double>()};
  for (const auto& js : j.at("scenes"))
    m.scenes.push_back({js.at("id").get<std::string>(), js.at("split").get<std::string>(),
                        js.at("target_class").get<int>(), js.at("file").get<std::string>(),
                        js.at("annotation_hash").get<std::string>()});
  // machine-check split disjointness on every load
  auto overlap = [](const std::vector<int>& a, const std::vector<int>& b) {
    for (int x : a)
      for (int y : b)
        if (x == y) return true;
    return false;
  };
  if (overlap(m.registry.splits.train, m.registry.splits.val) ||
      overlap(m.registry.splits.train, m.registry.splits.test) ||
      overlap(m.registry.splits.val, m.registry.splits.test))
    throw std::runtime_error("load_manifest: category splits are not disjoint");
  return m;
}

AnnotatedScene load_scene(const std::string& root, const SceneMeta& meta) {
  AnnotatedScene scene;
  scene.id = meta.id;
  scene.split = meta.split;
  scene.target_class = meta.target_class;
  scene.image = load_png((fs::path(root) / meta.file).string());
  const std::string jpath = (fs::path(root) / meta.file).replace_extension(".json").string();
  std::ifstream f(jpath);
  if (!f) throw std::runtime_error("load_scene: cannot open " + jpath);
  json j;
  f >> j;
  const int w = j.at("width").get<int>(), h = j.at("height").get<int>();
  for (const auto& ji : j.at("instances")) {
    InstanceAnn ins;
    ins.class_id = ji.at("class").get<int>();
    ins.box = box_from_json(ji.at("box"));
    ins.point = {ji.at("point")[0].get<double>(), ji.at("point")[1].get<double>()};
    RleMask rle;
    rle.origin_x = ji.at("rle").at("origin")[0].get<int>();
    rle.origin_y = ji.at("rle").at("origin")[1].get<int>();
    rle.width = ji.at("rle").at("size")[0].get<int>();
    rle.height = ji.at("rle").at("size")[1].get<int>();
    rle.counts = ji.at("rle").at("counts").get<std::vector<int>>();
    ins.mask = rle_decode(rle, w, h);
    scene.instances.push_back(std::move(ins));
  }
  for (const auto& jb : j.at("exemplar_boxes")) scene.exemplar_boxes.push_back(box_from_json(jb));
  return scene;
}

}  // namespace psc
