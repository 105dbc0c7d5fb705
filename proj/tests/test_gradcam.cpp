#include <gtest/gtest.h>

#include <numeric>

#include "groundvlp/gradcam.hpp"
#include "oracles.hpp"

using namespace groundvlp;

TEST(GradcamMap, NegativeGradientIsClipped) {
  Tensor3<float> a({1, 1, 1}, std::vector<float>{1.f});
  Tensor3<float> g({1, 1, 1}, std::vector<float>{-3.f});
  EXPECT_EQ(compute_gradcam_map(a, g).values(0, 0), 0.0);
}

TEST(GradcamMap, HeadAverage) {
  Tensor3<float> a({2, 1, 1}, std::vector<float>{2.f, 4.f});
  Tensor3<float> g({2, 1, 1}, std::vector<float>{1.f, 0.5f});
  EXPECT_EQ(compute_gradcam_map(a, g).values(0, 0), 2.0);
}

TEST(GradcamMap, ShapeMismatch) {
  Tensor3<float> a({1, 2, 2});
  Tensor3<float> g({1, 2, 3});
  EXPECT_THROW(compute_gradcam_map(a, g), Error);
}

TEST(GradcamMap, MatchesTripleLoopOracle) {
  oracle::Gen gen(11);
  const auto a = gen.tensor<float>(4, 6, 6, 0.0, 1.0);
  const auto g = gen.tensor<float>(4, 6, 6, -1.0, 1.0);
  const auto got = compute_gradcam_map(a, g).values;
  const auto want = oracle::gradcam(a, g);
  for (std::size_t i = 0; i < got.size(); ++i) EXPECT_NEAR(got.data()[i], want.data()[i], 1e-12);
}

TEST(GradcamMap, NonNegativeForArbitraryGradients) {
  oracle::Gen gen(12);
  for (int trial = 0; trial < 20; ++trial) {
    const auto a = gen.tensor<double>(3, 5, 7, 0.0, 1.0);
    const auto g = gen.tensor<double>(3, 5, 7, -10.0, 10.0);
    const auto m = compute_gradcam_map(a, g);
    for (double v : m.values.data()) EXPECT_GE(v, 0.0);
  }
}

TEST(GradcamMap, HeadPermutationInvariance) {
  oracle::Gen gen(13);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t heads = gen.index(2, 8);
    const auto a = gen.tensor<float>(heads, 5, 9, 0.0, 1.0);
    const auto g = gen.tensor<float>(heads, 5, 9, -1.0, 1.0);
    std::vector<std::size_t> perm(heads);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), gen.rng);
    Tensor3<float> pa(a.shape()), pg(g.shape());
    for (std::size_t h = 0; h < heads; ++h)
      for (std::size_t i = 0; i < 5; ++i)
        for (std::size_t j = 0; j < 9; ++j) {
          pa(h, i, j) = a(perm[h], i, j);
          pg(h, i, j) = g(perm[h], i, j);
        }
    EXPECT_EQ(compute_gradcam_map(a, g).values, compute_gradcam_map(pa, pg).values);
  }
}

TEST(GradcamMap, LinearInAttention) {
  oracle::Gen gen(14);
  const auto a = gen.tensor<double>(4, 6, 8, 0.0, 1.0);
  const auto g = gen.tensor<double>(4, 6, 8, -1.0, 1.0);
  const auto base = compute_gradcam_map(a, g).values;
  for (double lambda : {0.0, 0.37, 3.0, 1234.5}) {
    auto scaled = a;
    for (double& v : scaled.data()) v *= lambda;
    const auto got = compute_gradcam_map(scaled, g).values;
    for (std::size_t i = 0; i < got.size(); ++i)
      EXPECT_TRUE(oracle::rel_close(got.data()[i], lambda * base.data()[i], 1e-12));
  }
}

TEST(Crop, TwoStreamIsIdentity) {
  oracle::Gen gen(15);
  RawGradcamMap raw{gen.matrix(3, 5)};
  EXPECT_EQ(crop_to_text_image(raw, Architecture::kTwoStream, 3, 5).values, raw.values);
  EXPECT_THROW(crop_to_text_image(raw, Architecture::kTwoStream, 5, 3), Error);
}

TEST(Crop, OneStreamTakesTextRowsImageColumns) {
  RawGradcamMap raw{Matrix<double>(4, 4)};
  for (std::size_t i = 0; i < 16; ++i) raw.values.data()[i] = static_cast<double>(i + 1);
  const auto cropped = crop_to_text_image(raw, Architecture::kOneStream, 2, 2).values;
  ASSERT_EQ(cropped.rows(), 2u);
  EXPECT_EQ(cropped(0, 0), 3.0);
  EXPECT_EQ(cropped(0, 1), 4.0);
  EXPECT_EQ(cropped(1, 0), 7.0);
  EXPECT_EQ(cropped(1, 1), 8.0);
}

TEST(Crop, OneStreamMatchesSliceOracle) {
  oracle::Gen gen(16);
  RawGradcamMap raw{gen.matrix(10, 10)};
  const auto got = crop_to_text_image(raw, Architecture::kOneStream, 4, 6).values;
  EXPECT_EQ(got, oracle::slice(raw.values, 0, 4, 4, 6));
}

TEST(Crop, CropThenComputeMatchesOnTwoStream) {
  oracle::Gen gen(17);
  const auto a = gen.tensor<float>(3, 4, 7, 0.0, 1.0);
  const auto g = gen.tensor<float>(3, 4, 7, -1.0, 1.0);
  const auto raw = compute_gradcam_map(a, g);
  EXPECT_EQ(crop_to_text_image(raw, Architecture::kTwoStream, 4, 7).values, raw.values);
}

namespace {

std::vector<TokenMeta> black_and_white_cat() {
  return {{0, "[CLS]", "X", true, true},     {1, "black", "ADJ", false, false},
          {2, "and", "CCONJ", false, false}, {3, "white", "ADJ", false, false},
          {4, "cat", "NOUN", false, false},  {5, "[SEP]", "X", false, true}};
}

}  // namespace

TEST(SelectVisualTokens, PhraseGroundingKeepsVisualWords) {
  ExpressionSpan span{0, {1, 2, 3, 4}, {}, {}, {}};
  EXPECT_EQ(select_visual_tokens(black_and_white_cat(), span, TaskKind::kPhraseGrounding),
            (std::vector<std::size_t>{1, 3, 4}));
}

TEST(SelectVisualTokens, RecAddsCls) {
  ExpressionSpan span{0, {1, 2, 3, 4}, {}, {}, {}};
  EXPECT_EQ(select_visual_tokens(black_and_white_cat(), span, TaskKind::kRec),
            (std::vector<std::size_t>{0, 1, 3, 4}));
}

TEST(SelectVisualTokens, FunctionWordsFallBackToWholeSpan) {
  std::vector<TokenMeta> tokens = {{0, "[CLS]", "X", true, true},
                                   {1, "on", "ADP", false, false},
                                   {2, "the", "DET", false, false},
                                   {3, "[SEP]", "X", false, true}};
  ExpressionSpan span{0, {1, 2, 3}, {}, {}, {}};
  EXPECT_EQ(select_visual_tokens(tokens, span, TaskKind::kPhraseGrounding),
            (std::vector<std::size_t>{1, 2}));
  EXPECT_EQ(select_visual_tokens(tokens, span, TaskKind::kRec),
            (std::vector<std::size_t>{0, 1, 2}));
}

TEST(SelectVisualTokens, CustomWhitelist) {
  ExpressionSpan span{0, {1, 2, 3, 4}, {}, {}, {}};
  PosWhitelist nouns_only{{"NOUN"}};
  EXPECT_EQ(select_visual_tokens(black_and_white_cat(), span, TaskKind::kPhraseGrounding, nouns_only),
            (std::vector<std::size_t>{4}));
}

TEST(Aggregate, SingleRowVerbatim) {
  oracle::Gen gen(18);
  CrossModalMap cross{gen.matrix(4, 6)};
  const auto row = cross.values.row(2);
  EXPECT_EQ(aggregate_visual_words(cross, {2}).values, std::vector<double>(row.begin(), row.end()));
}

TEST(Aggregate, ArithmeticMean) {
  CrossModalMap cross{Matrix<double>(2, 2)};
  cross.values(0, 0) = 1;
  cross.values(0, 1) = 3;
  cross.values(1, 0) = 3;
  cross.values(1, 1) = 1;
  EXPECT_EQ(aggregate_visual_words(cross, {0, 1}).values, (std::vector<double>{2, 2}));
}

TEST(Aggregate, EmptySelectionThrows) {
  CrossModalMap cross{Matrix<double>(2, 2)};
  try {
    aggregate_visual_words(cross, {});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::kEmptySelection);
  }
}

TEST(Aggregate, MatchesOracleAndStaysWithinRowBounds) {
  oracle::Gen gen(19);
  CrossModalMap cross{gen.matrix(8, 16)};
  std::vector<std::size_t> rows{0, 3, 4, 7};
  const auto got = aggregate_visual_words(cross, rows).values;
  const auto want = oracle::column_mean(cross.values, rows);
  for (std::size_t j = 0; j < 16; ++j) {
    EXPECT_NEAR(got[j], want[j], 1e-12);
    double lo = 1e300, hi = -1e300;
    for (auto r : rows) {
      lo = std::min(lo, cross.values(r, j));
      hi = std::max(hi, cross.values(r, j));
    }
    EXPECT_LE(lo, got[j]);
    EXPECT_LE(got[j], hi);
  }
}

TEST(Aggregate, EqualRowsGiveExactlyThatValue) {
  CrossModalMap cross{Matrix<double>(3, 1, 0.1)};
  EXPECT_EQ(aggregate_visual_words(cross, {0, 1, 2}).values[0], 0.1);
}
