#include <gtest/gtest.h>

#include "groundvlp/heatmap.hpp"
#include "oracles.hpp"
#include "test_support.hpp"

using namespace groundvlp;

namespace {

TokenAttribution attribution(std::vector<double> v) { return {std::move(v), {0}}; }

}  // namespace

TEST(RegionHeatmap, WholeImageRegion) {
  const auto heat = build_region_heatmap(attribution({2.0}), {{0, 0, 5, 4}}, 1, 4, 5);
  for (double v : heat.values.data()) EXPECT_EQ(v, 2.0);
}

TEST(RegionHeatmap, DisjointUnitPixels) {
  const auto heat =
      build_region_heatmap(attribution({1.0, 3.0}), {{0, 0, 1, 1}, {3, 2, 4, 3}}, 2, 4, 4);
  std::size_t nonzero = 0;
  for (double v : heat.values.data()) nonzero += v != 0.0;
  EXPECT_EQ(nonzero, 2u);
  EXPECT_EQ(heat.values(0, 0), 1.0);
  EXPECT_EQ(heat.values(2, 3), 3.0);
}

TEST(RegionHeatmap, TopSevenOfThirtySixMatchesPaintOracle) {
  oracle::Gen gen(21);
  std::vector<double> values;
  std::vector<Box> regions;
  for (int i = 0; i < 36; ++i) {
    values.push_back(gen.uniform());
    regions.push_back(gen.box(64, 48));
  }
  values[5] = values[9];  // a tie
  const auto heat = build_region_heatmap(attribution(values), regions, 7, 48, 64);
  EXPECT_EQ(heat.values, oracle::paint(values, regions, 7, 48, 64));
}

TEST(RegionHeatmap, TiesPreferLowerTokenIndex) {
  // Only one of the two equal tokens fits in m = 1; token 0 must win.
  const auto heat =
      build_region_heatmap(attribution({1.0, 1.0}), {{0, 0, 1, 1}, {1, 0, 2, 1}}, 1, 1, 2);
  EXPECT_EQ(heat.values(0, 0), 1.0);
  EXPECT_EQ(heat.values(0, 1), 0.0);
}

TEST(RegionHeatmap, Errors) {
  EXPECT_THROW(build_region_heatmap(attribution({1.0}), {}, 1, 2, 2), Error);
  EXPECT_THROW(build_region_heatmap(attribution({1.0}), {{0, 0, 1, 1}}, 0, 2, 2), Error);
}

TEST(RegionHeatmap, LinearInAttribution) {
  oracle::Gen gen(22);
  std::vector<double> values;
  std::vector<Box> regions;
  for (int i = 0; i < 12; ++i) {
    values.push_back(gen.uniform());
    regions.push_back(gen.box(30, 20));
  }
  const auto base = build_region_heatmap(attribution(values), regions, 7, 20, 30);
  const double lambda = 2.5;
  for (double& v : values) v *= lambda;
  const auto scaled = build_region_heatmap(attribution(values), regions, 7, 20, 30);
  for (std::size_t i = 0; i < base.values.size(); ++i)
    EXPECT_TRUE(oracle::rel_close(scaled.values.data()[i], lambda * base.values.data()[i], 1e-14));
}

TEST(Bicubic, SinglePixelGridIsConstant) {
  Matrix<double> g(1, 1, 4.25);
  const auto out = bicubic_resize(g, 7, 3);
  for (double v : out.data()) EXPECT_NEAR(v, 4.25, 1e-12);
}

TEST(Bicubic, ConstantGridReproduced) {
  Matrix<double> g(5, 3, 0.7);
  const auto out = bicubic_resize(g, 40, 31);
  for (double v : out.data()) EXPECT_NEAR(v, 0.7, 1e-9);
}

TEST(Bicubic, LinearRampReproducedInInterior) {
  Matrix<double> g(4, 4);
  for (std::size_t r = 0; r < 4; ++r)
    for (std::size_t c = 0; c < 4; ++c) g(r, c) = 2.0 * static_cast<double>(c) + 1.0;
  const auto out = bicubic_resize(g, 8, 8);
  // Output column j samples source x = (j + 0.5)/2 - 0.5; all four taps are
  // in range for 1.0 <= x <= 1.99, i.e. j = 3, 4.
  for (std::size_t r = 0; r < 8; ++r)
    for (std::size_t j : {3u, 4u}) {
      const double x = (static_cast<double>(j) + 0.5) / 2.0 - 0.5;
      EXPECT_NEAR(out(r, j), 2.0 * x + 1.0, 1e-9);
    }
}

TEST(Bicubic, MatchesDirectSixteenTapOracle) {
  oracle::Gen gen(23);
  const auto g = gen.matrix(6, 6, -1.0, 2.0);
  const auto got = bicubic_resize(g, 17, 23);
  const auto want = oracle::bicubic_direct(g, 17, 23);
  for (std::size_t i = 0; i < got.size(); ++i) EXPECT_NEAR(got.data()[i], want.data()[i], 1e-9);
}

TEST(Bicubic, TranslationEquivariantAtIntegerScales) {
  oracle::Gen gen(24);
  for (std::size_t scale : {2u, 4u}) {
    Matrix<double> g(12, 12, 0.0);
    Matrix<double> shifted(12, 12, 0.0);
    for (std::size_t r = 3; r < 7; ++r)
      for (std::size_t c = 3; c < 7; ++c) {
        g(r, c) = gen.uniform();
        shifted(r + 1, c + 2) = g(r, c);
      }
    const auto a = bicubic_resize(g, 12 * scale, 12 * scale);
    const auto b = bicubic_resize(shifted, 12 * scale, 12 * scale);
    for (std::size_t i = 2 * scale; i < 9 * scale; ++i)
      for (std::size_t j = 2 * scale; j < 9 * scale; ++j)
        EXPECT_NEAR(a(i, j), b(i + scale, j + 2 * scale), 1e-9);
  }
}

TEST(Bicubic, EmptyGrid) { EXPECT_THROW(bicubic_resize(Matrix<double>(), 4, 4), Error); }

TEST(PatchHeatmap, ConstantGrid) {
  VisualLayout layout{LayoutKind::kPatchGrid, 10, {}, 3, 3, 1};
  std::vector<double> v(10, 0.3);
  v[0] = 99.0;  // global token, dropped
  const auto heat = build_patch_heatmap(attribution(v), layout, 20, 30);
  ASSERT_EQ(heat.height(), 20u);
  ASSERT_EQ(heat.width(), 30u);
  for (double x : heat.values.data()) EXPECT_NEAR(x, 0.3, 1e-9);
}

TEST(PatchHeatmap, PeakInMatchingQuadrant) {
  VisualLayout layout{LayoutKind::kPatchGrid, 4, {}, 2, 2, 0};
  for (std::size_t cell = 0; cell < 4; ++cell) {
    std::vector<double> v(4, 0.0);
    v[cell] = 1.0;
    const auto heat = build_patch_heatmap(attribution(v), layout, 16, 16);
    // Oracle: the direct bicubic evaluation, clamped, peaks in the same spot.
    Matrix<double> g(2, 2);
    g.data()[cell] = 1.0;
    const auto direct = oracle::bicubic_direct(g, 16, 16);
    const auto argmax = [](std::span<const double> d) {
      return static_cast<std::size_t>(std::max_element(d.begin(), d.end()) - d.begin());
    };
    const std::size_t peak = argmax(heat.values.data());
    EXPECT_EQ(peak, argmax(direct.data()));
    EXPECT_EQ((peak / 16) / 8, cell / 2);
    EXPECT_EQ((peak % 16) / 8, cell % 2);
    for (double x : heat.values.data()) EXPECT_GE(x, 0.0);
  }
}

TEST(PatchHeatmap, LayoutMismatch) {
  VisualLayout layout{LayoutKind::kPatchGrid, 5, {}, 2, 2, 0};
  EXPECT_THROW(build_patch_heatmap(attribution(std::vector<double>(5)), layout, 4, 4), Error);
  VisualLayout regions{LayoutKind::kRegionBased, 4, {}, 0, 0, 0};
  EXPECT_THROW(build_patch_heatmap(attribution(std::vector<double>(4)), regions, 4, 4), Error);
}

TEST(PatchHeatmap, OvershootClampedToZero) {
  VisualLayout layout{LayoutKind::kPatchGrid, 16, {}, 4, 4, 0};
  std::vector<double> v(16, 0.0);
  v[5] = 1.0;  // an isolated spike rings negative around it
  Matrix<double> g(4, 4);
  g(1, 1) = 1.0;
  const auto unclamped = bicubic_resize(g, 32, 32);
  ASSERT_LT(*std::min_element(unclamped.data().begin(), unclamped.data().end()), 0.0);
  const auto heat = build_patch_heatmap(attribution(v), layout, 32, 32);
  for (double x : heat.values.data()) EXPECT_GE(x, 0.0);
}

TEST(Integral, ZeroMap) {
  HeatMap h{Matrix<double>(3, 4)};
  const auto t = integral_image(h);
  for (double v : t.values.data()) EXPECT_EQ(v, 0.0);
}

TEST(Integral, SinglePixel) {
  HeatMap h{Matrix<double>(3, 4)};
  h.values(0, 0) = 5.0;
  const auto t = integral_image(h);
  for (std::size_t r = 0; r <= 3; ++r)
    for (std::size_t c = 0; c <= 4; ++c) EXPECT_EQ(t.values(r, c), (r > 0 && c > 0) ? 5.0 : 0.0);
}

TEST(Integral, MonotoneWithZeroBorder) {
  oracle::Gen gen(25);
  HeatMap h{gen.matrix(50, 40)};
  const auto t = integral_image(h);
  for (std::size_t c = 0; c <= 40; ++c) EXPECT_EQ(t.values(0, c), 0.0);
  for (std::size_t r = 0; r <= 50; ++r) EXPECT_EQ(t.values(r, 0), 0.0);
  for (std::size_t r = 1; r <= 50; ++r)
    for (std::size_t c = 1; c <= 40; ++c) {
      EXPECT_GE(t.values(r, c), t.values(r - 1, c));
      EXPECT_GE(t.values(r, c), t.values(r, c - 1));
    }
}

TEST(BoxSum, RandomQueriesMatchNaive) {
  oracle::Gen gen(26);
  HeatMap h{gen.matrix(50, 40)};
  const auto t = integral_image(h);
  for (int i = 0; i < 200; ++i) {
    const Box b = gen.box(40, 50);
    EXPECT_TRUE(oracle::rel_close(box_sum(t, b), oracle::naive_box_sum(h.values, b), 1e-9));
  }
}

TEST(BoxSum, FullImageAndDegenerate) {
  HeatMap h{Matrix<double>(6, 9, 1.5)};
  const auto t = integral_image(h);
  EXPECT_DOUBLE_EQ(box_sum(t, {0, 0, 9, 6}), 1.5 * 54);
  EXPECT_DOUBLE_EQ(box_sum(t, {-5, -5, 20, 20}), 1.5 * 54);  // clamped
  EXPECT_EQ(box_sum(t, {3.6, 1, 3.9, 5}), 0.0);                // no pixel centre inside
  EXPECT_EQ(box_sum(t, {12, 12, 15, 15}), 0.0);                // outside the image
}

TEST(Gray, Normalisation) {
  HeatMap zero{Matrix<double>(2, 2)};
  for (auto v : to_gray8(zero)) EXPECT_EQ(v, 0);
  HeatMap flat{Matrix<double>(2, 2, 3.0)};
  for (auto v : to_gray8(flat)) EXPECT_EQ(v, 128);
  HeatMap ramp{Matrix<double>(1, 3)};
  ramp.values(0, 1) = 1.0;
  ramp.values(0, 2) = 2.0;
  EXPECT_EQ(to_gray8(ramp), (std::vector<std::uint8_t>{0, 128, 255}));
}

TEST(Gray, PgmHeader) {
  testing_support::TempDir tmp;
  HeatMap h{Matrix<double>(2, 3)};
  h.values(1, 2) = 1.0;
  write_pgm(tmp / "h.pgm", h);
  const auto bytes = testing_support::read_file(tmp / "h.pgm");
  EXPECT_EQ(bytes.substr(0, 11), "P5\n3 2\n255\n");
  ASSERT_EQ(bytes.size(), 11u + 6u);
  EXPECT_EQ(static_cast<unsigned char>(bytes.back()), 255);
}

TEST(BoxSum, ZeroMassBoxIsExactlyZero) {
  oracle::Gen gen(63);
  HeatMap h{gen.matrix(64, 64, 0.0, 1000.0)};
  for (std::size_t r = 20; r < 30; ++r)
    for (std::size_t c = 10; c < 40; ++c) h.values(r, c) = 0.0;
  const auto t = integral_image(h);
  EXPECT_EQ(box_sum(t, {10, 20, 40, 30}), 0.0);
  EXPECT_EQ(box_sum(t, {12.3, 21.7, 33.1, 28.9}), 0.0);
  // A tiny mass next to a large total keeps its relative accuracy.
  h.values(25, 25) = 1e-9;
  const auto t2 = integral_image(h);
  EXPECT_TRUE(oracle::rel_close(box_sum(t2, {10, 20, 40, 30}), 1e-9, 1e-9));
}
