#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "fta/fusion.hpp"
#include "oracles.hpp"

using namespace fta;

namespace {

Embedding basis(std::size_t d, std::size_t k) {
  Embedding e(d, 0.0);
  e[k] = 1.0;
  return e;
}

}  // namespace

TEST(WeightScheme, RejectsAlphaOutsideOpenInterval) {
  EXPECT_THROW(WeightScheme(0.0), Error);
  EXPECT_THROW(WeightScheme(1.0), Error);
  EXPECT_THROW(WeightScheme(NAN), Error);
  EXPECT_NO_THROW(WeightScheme(0.5));
}

TEST(DesignWeights, Examples) {
  EXPECT_EQ(design_weights(1, WeightScheme(0.7)).values()[0], 1.0);
  const auto w3 = design_weights(3, WeightScheme(0.5));
  EXPECT_EQ(std::vector<double>(w3.values().begin(), w3.values().end()), (std::vector<double>{0.5, 0.25, 0.25}));
  const auto w6 = design_weights(6, WeightScheme(0.4));
  EXPECT_EQ(w6[0], 0.4);
  for (std::size_t i = 1; i < 6; ++i) EXPECT_NEAR(w6[i], 0.12, 1e-15);
}

TEST(DesignWeights, SumsToOneForAllCountsAndAlphas) {
  for (int a = 1; a <= 9; ++a) {
    const WeightScheme scheme(a / 10.0);
    for (std::size_t n = 1; n <= 64; ++n) EXPECT_NEAR(design_weights(n, scheme).sum(), 1.0, 1e-12) << n << " " << a;
  }
}

TEST(Fuse, SingleViewIdentity) {
  const Embedding v{0.3, -1.2, 2.0};
  EXPECT_EQ(fuse(ViewSet({v}, Modality::image), validate_simplex({1.0}), FusionMode::raw), v);
}

TEST(Fuse, SymmetricPairNormalized) {
  const auto out = fuse(ViewSet({basis(2, 0), basis(2, 1)}, Modality::text), validate_simplex({0.5, 0.5}), FusionMode::normalized);
  EXPECT_NEAR(out[0], 1.0 / std::sqrt(2.0), 1e-15);
  EXPECT_NEAR(out[1], 1.0 / std::sqrt(2.0), 1e-15);
}

TEST(Fuse, MatchesAccumulationOracle) {
  Rng rng(7);
  std::vector<Embedding> views;
  for (int i = 0; i < 3; ++i) views.push_back(oracle::random_vector(10, rng));
  const auto w = oracle::random_simplex(3, rng);
  const auto got = fuse(ViewSet(views, Modality::image), validate_simplex(w), FusionMode::raw);
  const auto expected = oracle::accumulate(views, w);
  for (std::size_t k = 0; k < got.size(); ++k) EXPECT_NEAR(got[k], expected[k], 1e-12);
}

TEST(Fuse, ErrorPaths) {
  const ViewSet two({Embedding{1.0, 0.0}, Embedding{-1.0, 0.0}}, Modality::image);
  try {
    fuse(two, validate_simplex({0.5, 0.5}), FusionMode::normalized);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::ZeroNorm);
  }
  try {
    fuse(two, validate_simplex({1.0}), FusionMode::raw);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::DimensionMismatch);
  }
  EXPECT_THROW(ViewSet({Embedding{1.0}, Embedding{1.0, 2.0}}, Modality::text), Error);
}

TEST(Fuse, LinearInEachView) {
  Rng rng(8);
  std::vector<Embedding> views;
  for (int i = 0; i < 4; ++i) views.push_back(oracle::random_vector(6, rng));
  const auto w = validate_simplex(oracle::random_simplex(4, rng));
  const auto base = fuse(ViewSet(views, Modality::image), w, FusionMode::raw);
  const double s = 2.5;
  auto scaled = views;
  for (double& x : scaled[2]) x *= s;
  const auto out = fuse(ViewSet(scaled, Modality::image), w, FusionMode::raw);
  for (std::size_t k = 0; k < out.size(); ++k) EXPECT_NEAR(out[k] - base[k], (s - 1.0) * w[2] * views[2][k], 1e-12);
}

TEST(FuseRolled, Examples) {
  const Embedding p = basis(3, 0);
  EXPECT_EQ(fuse_rolled(p, p, WeightScheme(0.5), FusionMode::normalized), p);
  const auto out = fuse_rolled(basis(3, 0), basis(3, 1), WeightScheme(0.6), FusionMode::raw);
  EXPECT_DOUBLE_EQ(out[0], 0.6);
  EXPECT_DOUBLE_EQ(out[1], 0.4);
  EXPECT_EQ(out[2], 0.0);
}

TEST(FuseRolled, BitIdenticalToTwoViewFuse) {
  Rng rng(9);
  for (int trial = 0; trial < 50; ++trial) {
    const auto p = oracle::random_vector(12, rng), x = oracle::random_vector(12, rng);
    const WeightScheme scheme(rng.uniform(0.05, 0.95));
    for (FusionMode mode : {FusionMode::raw, FusionMode::normalized}) {
      const auto expected = fuse(ViewSet({p, x}, Modality::image), validate_simplex({scheme.alpha(), 1.0 - scheme.alpha()}), mode);
      EXPECT_EQ(fuse_rolled(p, x, scheme, mode), expected);
    }
  }
}

TEST(FuseMultimodal, Examples) {
  const Embedding v = basis(3, 2);
  EXPECT_EQ(fuse_multimodal(v, v, FusionMode::normalized), v);
  const auto out = fuse_multimodal(basis(2, 0), basis(2, 1), FusionMode::normalized);
  EXPECT_NEAR(out[0], 1.0 / std::sqrt(2.0), 1e-15);
  Embedding neg = basis(2, 0);
  neg[0] = -1.0;
  try {
    fuse_multimodal(basis(2, 0), neg, FusionMode::normalized);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::ZeroNorm);
  }
}

TEST(Fuse, RankingIdenticalWhetherNormalizedBeforeOrAtScoring) {
  Rng rng(10);
  const auto q = oracle::random_unit(8, rng);
  std::vector<double> cos_late, cos_early;
  for (int item = 0; item < 40; ++item) {
    std::vector<Embedding> views;
    for (int i = 0; i < 3; ++i) views.push_back(oracle::random_vector(8, rng));
    const ViewSet vs(views, Modality::image);
    const auto w = design_weights(3, WeightScheme(0.6));
    const auto raw = fuse(vs, w, FusionMode::raw);
    cos_late.push_back(oracle::inner(raw, q) / std::sqrt(oracle::inner(raw, raw)));
    cos_early.push_back(oracle::inner(fuse(vs, w, FusionMode::normalized), q));
  }
  auto order = [](const std::vector<double>& s) {
    std::vector<std::size_t> idx(s.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](auto a, auto b) { return s[a] > s[b]; });
    return idx;
  };
  EXPECT_EQ(order(cos_late), order(cos_early));
}

TEST(Fuse, FusedDotIsWeightedPairwiseSum) {
  Rng rng(12);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 1 + rng.index(8), m = 1 + rng.index(8), d = 1 + rng.index(32);
    std::vector<Embedding> iv, tv;
    for (std::size_t i = 0; i < n; ++i) iv.push_back(oracle::random_vector(d, rng));
    for (std::size_t j = 0; j < m; ++j) tv.push_back(oracle::random_vector(d, rng));
    const ViewSet img(iv, Modality::image), txt(tv, Modality::text);
    const auto w = validate_simplex(oracle::random_simplex(n, rng));
    const auto v = validate_simplex(oracle::random_simplex(m, rng));
    EXPECT_NEAR(dot(fuse(img, w, FusionMode::raw), fuse(txt, v, FusionMode::raw)), bilinear_fused_similarity(img, txt, w, v), 1e-10);
  }
}
