#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>

#include "psc/heatmap.hpp"
#include "psc/rng.hpp"

using namespace psc;

TEST_CASE("build_target_points concatenates without dedup") {
  KeypointSet oracle{{{10, 10}, PointSource::OracleCenter}};
  KeypointSet gt{{{10, 10}, PointSource::GroundTruth}, {{20, 5}, PointSource::GroundTruth}};
  CHECK(build_target_points({}, gt).size() == 2);
  const auto merged = build_target_points(oracle, gt);
  CHECK(merged.size() == 3);
  CHECK(merged[0].source == PointSource::OracleCenter);
}

TEST_CASE("splat: kernel values at exact offsets") {
  KeypointSet pts{{{8, 8}, PointSource::GroundTruth}};
  const Heatmap h = splat_targets(pts, 16, 16, 4, 2.0);
  CHECK(h.at(2, 2) == doctest::Approx(1.0));
  // s*x = 12, distance 4 in x only
  CHECK(h.at(3, 2) == doctest::Approx(std::exp(-2.0)).epsilon(1e-12));
}

TEST_CASE("splat: element-wise max of overlapping kernels") {
  KeypointSet pts{{{8, 8}, PointSource::GroundTruth}, {{16, 8}, PointSource::GroundTruth}};
  const Heatmap h = splat_targets(pts, 16, 16, 4, 2.0);
  // cell (3,2) is 4px from both points
  CHECK(h.at(3, 2) == doctest::Approx(std::exp(-2.0)).epsilon(1e-12));
  // duplicate point changes nothing
  KeypointSet dup = pts;
  dup.push_back(pts[0]);
  const Heatmap h2 = splat_targets(dup, 16, 16, 4, 2.0);
  CHECK(h2.v == h.v);
}

TEST_CASE("splat: empty set gives all zeros, values stay in [0,1]") {
  const Heatmap h = splat_targets({}, 8, 8, 4, 2.0);
  for (double v : h.v) CHECK(v == 0.0);
  Rng rng(3);
  KeypointSet pts;
  for (int i = 0; i < 30; ++i) pts.push_back({{rng.uniform(0, 62), rng.uniform(0, 62)}, PointSource::GroundTruth});
  const Heatmap h2 = splat_targets(pts, 16, 16, 4, 2.0);
  for (double v : h2.v) {
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
  }
  // nearest cell to each keypoint sits above the worst-case half-stride bound
  const double bound = std::exp(-2.0 * 4.0 / 8.0);
  for (const auto& kp : pts) {
    const int cx = std::clamp(static_cast<int>(std::lround(kp.p.x / 4.0)), 0, 15);
    const int cy = std::clamp(static_cast<int>(std::lround(kp.p.y / 4.0)), 0, 15);
    CHECK(h2.at(cx, cy) >= bound - 1e-12);
  }
}

TEST_CASE("splat is order-invariant") {
  Rng rng(4);
  KeypointSet pts;
  for (int i = 0; i < 20; ++i) pts.push_back({{rng.uniform(0, 64), rng.uniform(0, 64)}, PointSource::GroundTruth});
  const Heatmap ref = splat_targets(pts, 16, 16, 4, 2.0);
  for (int t = 0; t < 20; ++t) {
    rng.shuffle(pts);
    CHECK(splat_targets(pts, 16, 16, 4, 2.0).v == ref.v);
  }
}

TEST_CASE("point_loss values and finite-difference gradient") {
  Heatmap target(2, 2, 4);
  target.v = {0.1, 0.4, 0.7, 0.2};
  Heatmap pred = target;
  auto zero = point_loss(pred, target);
  CHECK(zero.loss == doctest::Approx(0.0));
  for (double g : zero.grad.v) CHECK(g == doctest::Approx(0.0));

  for (double& v : pred.v) v += 0.1;
  CHECK(point_loss(pred, target).loss == doctest::Approx(0.01).epsilon(1e-12));

  Heatmap bad(3, 2, 4);
  CHECK_THROWS(point_loss(bad, target));

  // gradient vs central differences at 20 random map pairs
  Rng rng(5);
  for (int t = 0; t < 20; ++t) {
    Heatmap p(4, 3, 4), q(4, 3, 4);
    for (auto& v : p.v) v = rng.uniform(0, 1);
    for (auto& v : q.v) v = rng.uniform(0, 1);
    const auto res = point_loss(p, q);
    const double eps = 1e-6;
    for (size_t i = 0; i < p.v.size(); ++i) {
      Heatmap pp = p, pm = p;
      pp.v[i] += eps;
      pm.v[i] -= eps;
      const double fd = (point_loss(pp, q).loss - point_loss(pm, q).loss) / (2 * eps);
      if (std::abs(fd) > 1e-12) CHECK(res.grad.v[i] == doctest::Approx(fd).epsilon(1e-5));
    }
  }
}

TEST_CASE("extract_peaks basics") {
  Heatmap h(12, 12, 4);
  h.at(5, 5) = 1.0;
  auto peaks = extract_peaks(h, 10, 0.05);
  REQUIRE(peaks.size() == 1);
  CHECK(peaks[0].x == 5);
  CHECK(peaks[0].y == 5);
  CHECK(peaks[0].score == doctest::Approx(1.0));

  Heatmap uniform(8, 8, 4);
  for (auto& v : uniform.v) v = 0.04;
  CHECK(extract_peaks(uniform, 10, 0.05).empty());

  // adjacent tie: both kept
  Heatmap tie(8, 8, 4);
  tie.at(3, 3) = 0.9;
  tie.at(4, 3) = 0.9;
  auto tied = extract_peaks(tie, 10, 0.05);
  CHECK(tied.size() == 2);
}

TEST_CASE("extract_peaks: K truncation and threshold monotonicity") {
  Rng rng(6);
  Heatmap h(20, 20, 4);
  for (auto& v : h.v) v = rng.uniform(0, 1);
  auto all = extract_peaks(h, 1000, 0.0);
  for (int k = 1; k <= static_cast<int>(all.size()); ++k) {
    auto some = extract_peaks(h, k, 0.0);
    CHECK(static_cast<int>(some.size()) == std::min<int>(k, static_cast<int>(all.size())));
    for (int i = 0; i < static_cast<int>(some.size()); ++i) CHECK(some[static_cast<size_t>(i)].score == all[static_cast<size_t>(i)].score);
  }
  // raising tau keeps a subset
  auto low = extract_peaks(h, 1000, 0.2);
  auto high = extract_peaks(h, 1000, 0.6);
  CHECK(high.size() <= low.size());
  for (const auto& p : high) CHECK(p.score > 0.6);
}

TEST_CASE("separated splats are recovered exactly") {
  Rng rng(7);
  for (int t = 0; t < 20; ++t) {
    // points at cell-corner anchors with pairwise cell distance >= 3
    std::vector<std::pair<int, int>> cells;
    while (cells.size() < 12) {
      const int x = rng.uniform_int(2, 29), y = rng.uniform_int(2, 29);
      bool ok = true;
      for (auto& c : cells) {
        const double d = std::hypot(c.first - x, c.second - y);
        if (d < 3.0) ok = false;
      }
      if (ok) cells.emplace_back(x, y);
    }
    KeypointSet pts;
    for (auto& c : cells) pts.push_back({{4.0 * c.first, 4.0 * c.second}, PointSource::GroundTruth});
    const Heatmap h = splat_targets(pts, 32, 32, 4, 2.0);
    auto peaks = extract_peaks(h, 1000, 0.05);
    REQUIRE(peaks.size() == cells.size());
    for (const auto& p : peaks) {
      bool found = false;
      for (auto& c : cells)
        if (c.first == p.x && c.second == p.y) found = true;
      CHECK(found);
    }
  }
}

TEST_CASE("peaks_to_image_coords cell centers and round trip") {
  std::vector<Peak> cells{{0, 0, 1.0}, {2, 3, 0.5}};
  const auto pts = peaks_to_image_coords(cells, 4);
  CHECK(pts[0].p.x == doctest::Approx(2.0));
  CHECK(pts[0].p.y == doctest::Approx(2.0));
  CHECK(pts[1].p.x == doctest::Approx(10.0));
  CHECK(pts[1].p.y == doctest::Approx(14.0));

  // splat a point at a cell center; the converted tied peaks contain it
  KeypointSet src{{{4.0 * 5 + 2.0, 4.0 * 7 + 2.0}, PointSource::GroundTruth}};
  const Heatmap h = splat_targets(src, 16, 16, 4, 2.0);
  const auto back = peaks_to_image_coords(extract_peaks(h, 100, 0.05), 4);
  bool exact = false;
  for (const auto& kp : back)
    if (kp.p.x == src[0].p.x && kp.p.y == src[0].p.y) exact = true;
  CHECK(exact);
}

TEST_CASE("heatmap array file round trip") {
  Heatmap h(6, 4, 4);
  Rng rng(8);
  for (auto& v : h.v) v = rng.uniform(0, 1);
  const auto path = (std::filesystem::temp_directory_path() / "psc_hm_test.psm").string();
  save_heatmap(path, h);
  const Heatmap back = load_heatmap(path);
  CHECK(back.width == h.width);
  CHECK(back.height == h.height);
  CHECK(back.stride == h.stride);
  for (size_t i = 0; i < h.v.size(); ++i)
    CHECK(back.v[i] == doctest::Approx(h.v[i]).epsilon(1e-6));  // float32 payload
  std::filesystem::remove(path);
}
