#include "psc/embedder.hpp"

#include <cmath>
#include <stdexcept>

#include "psc/rng.hpp"

namespace psc {

namespace {

constexpr int kHistBins = 27;   // 3x3x3 RGB
constexpr int kColorDim = 3;    // background-contrast color direction
constexpr int kStatDim = 5;     // fill, spread x/y, border contact, aspect
constexpr int kSizeBins = 11;   // soft bins over log2 sqrt(foreground area)
constexpr int kFeatureDim = kHistBins + kColorDim + kStatDim + kSizeBins;

constexpr double kHistWeight = 0.7;
constexpr double kColorWeight = 1.2;
constexpr double kStatWeight = 0.6;
constexpr double kSizeWeight = 1.3;
constexpr double kSizeBinSigma = 0.3;
constexpr double kSizeBinStart = 0.75;  // log2 sqrt-area of the first bin
constexpr double kSizeBinStep = 0.5;

void normalize_block(double* v, int n, double weight) {
  double s = 0.0;
  for (int i = 0; i < n; ++i) s += v[i] * v[i];
  if (s <= 0.0) return;
  const double k = weight / std::sqrt(s);
  for (int i = 0; i < n; ++i) v[i] *= k;
}

}  // namespace

double cosine(const Embedding& a, const Embedding& b) {
  double s = 0.0;
  for (size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

void l2_normalize(Embedding& v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  if (s <= 0.0) throw std::runtime_error("l2_normalize: zero vector");
  const double k = 1.0 / std::sqrt(s);
  for (double& x : v) x *= k;
}

ToyEmbedder::ToyEmbedder(int dim, uint64_t seed) : dim_(dim), seed_(seed) {
  Rng rng(derive_seed(seed, 0xe3be));
  projection_.resize(static_cast<size_t>(dim_) * kFeatureDim);
  const double scale = 1.0 / std::sqrt(static_cast<double>(kFeatureDim));
  for (auto& v : projection_) v = rng.normal() * scale;
}

std::vector<double> ToyEmbedder::descriptor(const Image& crop) const {
  if (crop.width < 1 || crop.height < 1) throw std::invalid_argument("embed_region: degenerate crop");
  std::vector<double> f(kFeatureDim, 0.0);
  double* hist = f.data();
  double* color = f.data() + kHistBins;
  double* stat = f.data() + kHistBins + kColorDim;
  double* size_bins = f.data() + kHistBins + kColorDim + kStatDim;

  const int w = crop.width, h = crop.height;

  // border-estimated background color
  double bg[3] = {0, 0, 0};
  int nb = 0;
  for (int x = 0; x < w; ++x) {
    for (int c = 0; c < 3; ++c) {
      bg[c] += crop.at(x, 0, c);
      bg[c] += crop.at(x, h - 1, c);
    }
    nb += 2;
  }
  for (int y = 0; y < h; ++y) {
    for (int c = 0; c < 3; ++c) {
      bg[c] += crop.at(0, y, c);
      bg[c] += crop.at(w - 1, y, c);
    }
    nb += 2;
  }
  for (double& c : bg) c /= nb;

  // center-weighted soft color histogram + foreground stats
  double fg_count = 0.0, fg_rgb[3] = {0, 0, 0};
  double fg_sx = 0.0, fg_sy = 0.0, fg_sxx = 0.0, fg_syy = 0.0;
  double border_fg = 0.0, border_n = 0.0;
  int fg_minx = w, fg_maxx = -1, fg_miny = h, fg_maxy = -1;
  for (int y = 0; y < h; ++y) {
    const double wy = 1.0 - std::abs(2.0 * (y + 0.5) / h - 1.0);
    for (int x = 0; x < w; ++x) {
      const double wx = 1.0 - std::abs(2.0 * (x + 0.5) / w - 1.0);
      const double tw = 0.05 + wx * wy;
      const double r = crop.at(x, y, 0), g = crop.at(x, y, 1), b = crop.at(x, y, 2);
      // trilinear soft binning on a 3-cell axis
      double cw[3][3];  // [channel][bin]
      const double ch[3] = {r, g, b};
      for (int c = 0; c < 3; ++c) {
        double t = ch[c] / 255.0 * 2.0;  // in [0,2]
        int b0 = static_cast<int>(t);
        if (b0 > 1) b0 = 1;
        const double frac = t - b0;
        cw[c][0] = cw[c][1] = cw[c][2] = 0.0;
        cw[c][b0] = 1.0 - frac;
        cw[c][b0 + 1] = frac;
      }
      for (int br = 0; br < 3; ++br)
        for (int bg2 = 0; bg2 < 3; ++bg2)
          for (int bb = 0; bb < 3; ++bb) {
            const double wgt = cw[0][br] * cw[1][bg2] * cw[2][bb];
            if (wgt > 0.0) hist[(br * 3 + bg2) * 3 + bb] += tw * wgt;
          }
      const double dist = std::abs(r - bg[0]) + std::abs(g - bg[1]) + std::abs(b - bg[2]);
      const bool is_fg = dist > 90.0;
      if (is_fg) {
        fg_count += 1.0;
        fg_rgb[0] += r;
        fg_rgb[1] += g;
        fg_rgb[2] += b;
        fg_sx += x + 0.5;
        fg_sy += y + 0.5;
        fg_sxx += (x + 0.5) * (x + 0.5);
        fg_syy += (y + 0.5) * (y + 0.5);
        fg_minx = std::min(fg_minx, x);
        fg_maxx = std::max(fg_maxx, x);
        fg_miny = std::min(fg_miny, y);
        fg_maxy = std::max(fg_maxy, y);
      }
      if (x == 0 || y == 0 || x == w - 1 || y == h - 1) {
        border_n += 1.0;
        if (is_fg) border_fg += 1.0;
      }
    }
  }

  double area = fg_count;
  if (fg_count < 1.0) {
    // featureless crop: treat everything as foreground
    area = static_cast<double>(w) * h;
    fg_rgb[0] = bg[0] * area;
    fg_rgb[1] = bg[1] * area;
    fg_rgb[2] = bg[2] * area;
    fg_sx = area * w / 2.0;
    fg_sy = area * h / 2.0;
    fg_sxx = fg_sx * w / 2.0;
    fg_syy = fg_sy * h / 2.0;
    fg_minx = 0;
    fg_maxx = w - 1;
    fg_miny = 0;
    fg_maxy = h - 1;
  }
  const double mx = fg_sx / area, my = fg_sy / area;
  const double varx = std::max(0.0, fg_sxx / area - mx * mx);
  const double vary = std::max(0.0, fg_syy / area - my * my);
  const double ext_x = fg_maxx - fg_minx + 1.0, ext_y = fg_maxy - fg_miny + 1.0;
  // contrast direction of the foreground color against the local background;
  // smooth in hue, which is what lets region features interpolate to unseen
  // categories
  for (int c = 0; c < 3; ++c) color[c] = (fg_rgb[c] / area - bg[c]) / 255.0;
  stat[0] = area / (static_cast<double>(w) * h);     // fill
  stat[1] = std::sqrt(varx) / std::max(1.0, ext_x);  // normalized spread
  stat[2] = std::sqrt(vary) / std::max(1.0, ext_y);
  stat[3] = border_fg / border_n;                    // border contact
  stat[4] = 0.5 * std::log2(ext_x / ext_y);          // aspect

  const double z = std::log2(std::sqrt(std::max(area, 1.0)));
  for (int i = 0; i < kSizeBins; ++i) {
    const double zc = kSizeBinStart + kSizeBinStep * i;
    const double d = (z - zc) / kSizeBinSigma;
    size_bins[i] = std::exp(-0.5 * d * d);
  }

  normalize_block(hist, kHistBins, kHistWeight);
  normalize_block(color, kColorDim, kColorWeight);
  normalize_block(stat, kStatDim, kStatWeight);
  normalize_block(size_bins, kSizeBins, kSizeWeight);
  return f;
}

Embedding ToyEmbedder::embed_region(const Image& image, const BoxXYXY& box) const {
  Image crop = crop_region(image, box);
  std::vector<double> f = descriptor(crop);
  Embedding e(static_cast<size_t>(dim_), 0.0);
  for (int i = 0; i < dim_; ++i) {
    const double* row = projection_.data() + static_cast<size_t>(i) * kFeatureDim;
    double s = 0.0;
    for (int j = 0; j < kFeatureDim; ++j) s += row[j] * f[static_cast<size_t>(j)];
    e[static_cast<size_t>(i)] = s;
  }
  l2_normalize(e);
  return e;
}

Embedding ToyEmbedder::embed_name(int class_id) const {
  if (class_id < 0 || static_cast<size_t>(class_id) >= names_.size())
    throw std::out_of_range("embed_name: unknown class " + std::to_string(class_id));
  return names_[static_cast<size_t>(class_id)];
}

}  // namespace psc
