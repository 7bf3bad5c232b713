#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <set>

#include "psc/hash.hpp"
#include "psc/synthdata.hpp"

using namespace psc;

namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag) : path(fs::temp_directory_path() / tag) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

}  // namespace

TEST_CASE("registry: deterministic, unit-norm names, separable categories") {
  ToyEmbedder e1(64, 5), e2(64, 5);
  const CategoryRegistry a = build_registry(12, 5, e1);
  const CategoryRegistry b = build_registry(12, 5, e2);
  REQUIRE(a.defs.size() == 12);
  CHECK(a.name_embeddings.size() == 12);
  for (size_t i = 0; i < a.defs.size(); ++i) {
    CHECK(a.defs[i].name == b.defs[i].name);
    CHECK(a.defs[i].color == b.defs[i].color);
    CHECK(a.name_embeddings[i] == b.name_embeddings[i]);
    double n = 0;
    for (double v : a.name_embeddings[i]) n += v * v;
    CHECK(std::sqrt(n) == doctest::Approx(1.0).epsilon(1e-9));
  }

  // splits partition all categories disjointly
  std::set<int> seen;
  for (int c : a.splits.train) seen.insert(c);
  for (int c : a.splits.val) seen.insert(c);
  for (int c : a.splits.test) seen.insert(c);
  CHECK(seen.size() == 12);
  CHECK(a.splits.train.size() + a.splits.val.size() + a.splits.test.size() == 12);
  CHECK(!a.splits.train.empty());
  CHECK(!a.splits.val.empty());
  CHECK(!a.splits.test.empty());

  // intra vs inter cosine over sampled exemplar pairs
  double intra = 0, inter = 0;
  int n_intra = 0, n_inter = 0;
  std::vector<std::vector<Embedding>> ex(a.defs.size());
  for (size_t c = 0; c < a.defs.size(); ++c)
    for (int v = 0; v < 6; ++v) {
      Image img = render_canonical_exemplar(a.defs[c], v, a.seed);
      // embed via the full-image box (the exemplar dominates the canvas)
      ex[c].push_back(e1.embed_region(img, {0, 0, static_cast<double>(img.width), static_cast<double>(img.height)}));
    }
  for (size_t c = 0; c < ex.size(); ++c)
    for (size_t d = 0; d < ex.size(); ++d)
      for (size_t i = 0; i < ex[c].size(); ++i)
        for (size_t j = 0; j < ex[d].size(); ++j) {
          if (c == d && i < j) {
            intra += cosine(ex[c][i], ex[d][j]);
            ++n_intra;
          } else if (c < d) {
            inter += cosine(ex[c][i], ex[d][j]);
            ++n_inter;
          }
        }
  CHECK(n_intra > 100);
  CHECK(n_inter > 1000);
  CHECK(intra / n_intra > inter / n_inter);

  CHECK_THROWS(build_registry(2, 5, e1));
}

TEST_CASE("generate_scene: counts, containment, overlap, exemplars") {
  ToyEmbedder emb(64, 6);
  const CategoryRegistry reg = build_registry(12, 6, emb);
  Rng rng(77);
  const int target = reg.splits.train[0];
  AnnotatedScene scene = generate_scene(reg, "train", target, 30, rng);

  CHECK(scene.target_count() == 30);  // roomy scene: no placement failures
  CHECK(scene.image.width == 256);
  CHECK(scene.exemplar_boxes.size() == 3);

  for (const auto& ins : scene.instances) {
    // point inside its mask
    const int px = static_cast<int>(ins.point.x), py = static_cast<int>(ins.point.y);
    CHECK(ins.mask.get(px, py));
    // tight box
    const BoxXYXY tb = mask_to_box(ins.mask);
    CHECK(tb.x0 == ins.box.x0);
    CHECK(tb.y1 == ins.box.y1);
  }

  // pairwise mask overlap at most 30% of the smaller area (generator places
  // disjoint instances, so expect zero)
  for (size_t i = 0; i < scene.instances.size(); ++i)
    for (size_t j = i + 1; j < scene.instances.size(); ++j) {
      const int64_t inter = mask_intersection_count(scene.instances[i].mask, scene.instances[j].mask);
      const int64_t smaller = std::min(scene.instances[i].mask.count(), scene.instances[j].mask.count());
      CHECK(static_cast<double>(inter) <= 0.30 * static_cast<double>(smaller));
    }

  // distractors belong to the same split, never the target class
  for (const auto& ins : scene.instances) {
    const auto& cats = reg.splits.train;
    CHECK(std::find(cats.begin(), cats.end(), ins.class_id) != cats.end());
  }

  CHECK_THROWS(generate_scene(reg, "train", reg.splits.test[0], 10, rng));
}

TEST_CASE("pseudo boxes from GT points equal instance boxes under the oracle") {
  ToyEmbedder emb(64, 7);
  const CategoryRegistry reg = build_registry(12, 7, emb);
  Rng rng(78);
  AnnotatedScene scene = generate_scene(reg, "val", reg.splits.val[0], 15, rng);
  OracleBackend backend(scene);
  const auto pseudo = pseudo_boxes_from_points(scene, backend);
  CHECK(pseudo.size() <= scene.instances.size());
  CHECK(!pseudo.empty());
  for (const auto& pb : pseudo) {
    CHECK(iou(pb.box, scene.instances[static_cast<size_t>(pb.instance_index)].box) == doctest::Approx(1.0));
    CHECK(pb.class_id == scene.instances[static_cast<size_t>(pb.instance_index)].class_id);
  }
}

TEST_CASE("dataset round trip: manifests, hashes, reload identity") {
  TempDir tmp("psc_dataset_test");
  ToyEmbedder emb(64, 8);
  const CategoryRegistry reg = build_registry(12, 8, emb);
  DatasetSizes sizes{6, 3, 3};
  SceneGenConfig cfg;
  cfg.count_min = 6;
  cfg.count_max = 12;
  const DatasetManifest manifest = make_dataset(reg, sizes, 123, tmp.path.string(), cfg);
  CHECK(manifest.scenes.size() == 12);

  const DatasetManifest loaded = load_manifest(tmp.path.string());
  CHECK(loaded.seed == manifest.seed);
  CHECK(loaded.scenes.size() == manifest.scenes.size());
  CHECK(loaded.registry.splits.train == reg.splits.train);

  // scene reload is content-identical with the recorded hash
  for (const auto& meta : loaded.scenes) {
    AnnotatedScene scene = load_scene(tmp.path.string(), meta);
    CHECK(hash_hex(fnv1a64(scene_annotation_json(scene))) == meta.annotation_hash);
    CHECK(scene.target_count() >= 1);
  }

  // regeneration from the manifest seed reproduces annotation hashes
  TempDir tmp2("psc_dataset_test2");
  const DatasetManifest again = make_dataset(reg, sizes, 123, tmp2.path.string(), cfg);
  REQUIRE(again.scenes.size() == manifest.scenes.size());
  for (size_t i = 0; i < again.scenes.size(); ++i)
    CHECK(again.scenes[i].annotation_hash == manifest.scenes[i].annotation_hash);

  // different seed changes content
  TempDir tmp3("psc_dataset_test3");
  const DatasetManifest other = make_dataset(reg, sizes, 124, tmp3.path.string(), cfg);
  bool any_diff = false;
  for (size_t i = 0; i < other.scenes.size(); ++i)
    if (other.scenes[i].annotation_hash != manifest.scenes[i].annotation_hash) any_diff = true;
  CHECK(any_diff);
}

TEST_CASE("rle round trip on random masks") {
  Rng rng(9);
  for (int t = 0; t < 30; ++t) {
    BinaryMask m(40, 32);
    const int n = rng.uniform_int(1, 200);
    for (int i = 0; i < n; ++i) m.set(rng.uniform_int(3, 36), rng.uniform_int(2, 29), true);
    const RleMask rle = rle_encode(m);
    const BinaryMask back = rle_decode(rle, 40, 32);
    CHECK(back.bits == m.bits);
  }
}
