#pragma once

#include <memory>
#include <string>
#include <vector>

#include "psc/geometry.hpp"
#include "psc/image.hpp"

namespace psc {

// Unit-norm D-dim vector.
using Embedding = std::vector<double>;

double cosine(const Embedding& a, const Embedding& b);
void l2_normalize(Embedding& v);

// Pluggable region/name embedder. Implementations must be deterministic and
// return unit-norm vectors.
class EmbedderBackend {
 public:
  virtual ~EmbedderBackend() = default;
  virtual int dim() const = 0;
  virtual Embedding embed_region(const Image& image, const BoxXYXY& box) const = 0;
  virtual Embedding embed_name(int class_id) const = 0;
};

// Deterministic hand-crafted embedder: center-weighted color histogram plus
// foreground shape/size statistics, pushed through a fixed seeded random
// projection. Name embeddings are installed by the category registry after
// it renders canonical exemplars.
class ToyEmbedder : public EmbedderBackend {
 public:
  ToyEmbedder(int dim, uint64_t seed);

  int dim() const override { return dim_; }
  uint64_t seed() const { return seed_; }

  Embedding embed_region(const Image& image, const BoxXYXY& box) const override;
  Embedding embed_name(int class_id) const override;

  void set_name_table(std::vector<Embedding> names) { names_ = std::move(names); }
  bool has_names() const { return !names_.empty(); }

  // Raw descriptor before projection, exposed for tests.
  std::vector<double> descriptor(const Image& crop) const;

 private:
  int dim_ = 64;
  uint64_t seed_ = 0;
  std::vector<double> projection_;  // dim_ x kFeatureDim, row-major
  std::vector<Embedding> names_;
};

}  // namespace psc
