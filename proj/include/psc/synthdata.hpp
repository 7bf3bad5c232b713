#pragma once

#include <optional>
#include <string>
#include <vector>

#include "psc/embedder.hpp"
#include "psc/proposals.hpp"
#include "psc/rng.hpp"
#include "psc/scene.hpp"

namespace psc {

enum class ShapeFamily { Disk = 0, Square = 1, Triangle = 2, Ring = 3, Bar = 4, Cross = 5 };

const char* shape_family_name(ShapeFamily s);
ShapeFamily shape_family_from_name(const std::string& name);

struct CategoryDef {
  int id = -1;
  std::string name;
  ShapeFamily shape = ShapeFamily::Disk;
  double size_min = 6.0;  // bounding square side, pixels
  double size_max = 9.0;
  std::array<double, 3> color = {200, 40, 40};
  double color_jitter = 8.0;
  bool textured = false;

  bool tiny() const { return size_max <= 6.0; }
};

struct SplitPlan {
  std::vector<int> train, val, test;
};

struct CategoryRegistry {
  uint64_t seed = 0;
  int embed_dim = 64;
  std::vector<CategoryDef> defs;
  std::vector<Embedding> name_embeddings;  // one per category
  SplitPlan splits;

  const std::vector<int>& split_categories(const std::string& split) const;
};

struct SceneGenConfig {
  int img_w = 256;
  int img_h = 256;
  int count_min = 5;
  int count_max = 60;
  int distractors_max = 20;
  double max_overlap = 0.30;  // fraction of the smaller instance's area
};

// Deterministic registry with validated embedder separability. Installs the
// category name table into the embedder.
CategoryRegistry build_registry(int n_categories, uint64_t seed, ToyEmbedder& embedder);

// Recomputes name embeddings for a registry loaded from a manifest and
// installs them into the embedder.
void attach_name_embeddings(CategoryRegistry& reg, ToyEmbedder& embedder);

// Renders one canonical exemplar of a category on a plain background;
// returns the crop image used for name embeddings.
Image render_canonical_exemplar(const CategoryDef& def, int variant, uint64_t seed);

AnnotatedScene generate_scene(const CategoryRegistry& registry, const std::string& split, int target_class,
                              int count, Rng& rng, const SceneGenConfig& cfg = {});

// For each ground-truth point, prompts the backend and takes the whole-level
// proposal's box as a pseudo ground-truth box. Points whose prompt yields an
// empty whole-level mask are dropped.
struct PseudoBox {
  int instance_index = -1;
  int class_id = -1;
  BoxXYXY box;
};
std::vector<PseudoBox> pseudo_boxes_from_points(const AnnotatedScene& scene, const SegmenterBackend& backend);

struct DatasetSizes {
  int train = 400;
  int val = 100;
  int test = 100;
};

struct SceneMeta {
  std::string id;
  std::string split;
  int target_class = -1;
  std::string file;  // png path relative to root
  std::string annotation_hash;
};

struct DatasetManifest {
  uint64_t seed = 0;
  std::string config_hash;
  CategoryRegistry registry;
  DatasetSizes sizes;
  SceneGenConfig scene_cfg;
  std::vector<SceneMeta> scenes;

  std::vector<const SceneMeta*> split_scenes(const std::string& split) const;
};

// Writes <root>/{train,val,test}/<scene-id>.{png,json} plus manifest.json.
DatasetManifest make_dataset(const CategoryRegistry& registry, const DatasetSizes& sizes, uint64_t seed,
                             const std::string& root, const SceneGenConfig& cfg = {});

DatasetManifest load_manifest(const std::string& root);
AnnotatedScene load_scene(const std::string& root, const SceneMeta& meta);

// Canonical annotation JSON used both for files and hashing.
std::string scene_annotation_json(const AnnotatedScene& scene);

}  // namespace psc
