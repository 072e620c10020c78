#include "gbm/rng.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <cstdint>

namespace {

using namespace gbm;

TEST(Philox, KnownAnswerVectors) {
  uint32_t out[4];
  // Reference vectors for Philox-4x32 with 10 rounds.
  philox::block(0, 0, 0, out);
  EXPECT_EQ(out[0], 0x6627e8d5u);
  EXPECT_EQ(out[1], 0xe169c58du);
  EXPECT_EQ(out[2], 0xbc57ac4cu);
  EXPECT_EQ(out[3], 0x9b00dbd8u);

  philox::block(~0ull, ~0ull, ~0ull, out);
  EXPECT_EQ(out[0], 0x408f276du);
  EXPECT_EQ(out[1], 0x41c83b0eu);
  EXPECT_EQ(out[2], 0xa20bc7c6u);
  EXPECT_EQ(out[3], 0x6d5451fdu);

  philox::block((uint64_t(0x299f31d0u) << 32) | 0xa4093822u,
                (uint64_t(0x85a308d3u) << 32) | 0x243f6a88u,
                (uint64_t(0x03707344u) << 32) | 0x13198a2eu, out);
  EXPECT_EQ(out[0], 0xd16cfe09u);
  EXPECT_EQ(out[1], 0x94fdccebu);
  EXPECT_EQ(out[2], 0x5001e420u);
  EXPECT_EQ(out[3], 0x24126ea1u);

  // The (seed, sample, pair) layout used by the sampler.
  philox::block(42, 7, (uint64_t(3) << 32) | 0x67626d31u, out);
  EXPECT_EQ(out[0], 0x4a3bc249u);
  EXPECT_EQ(out[1], 0x78bc0b43u);
  EXPECT_EQ(out[2], 0xee494a70u);
  EXPECT_EQ(out[3], 0xf7ae7896u);
}

TEST(Philox, UniformsLieInHalfOpenUnitInterval) {
  for (uint32_t a : {0u, 1u, 0xFFFFFFFFu, 0x80000000u}) {
    for (uint32_t b : {0u, 0xFFFFFFFFu, 12345u}) {
      double u = u01_open(a, b);
      EXPECT_GT(u, 0.0);
      EXPECT_LE(u, 1.0);
    }
  }
}

TEST(Sampler, NormalMomentsMatchTheory) {
  const int64_t n = 400000;
  const int dim = 3;
  // Accumulate first/second moments and one cross moment.
  auto sums = mc_accumulate(123, n, dim, 7, [](const double* x, double* a) {
    a[0] += x[0];
    a[1] += x[1];
    a[2] += x[2];
    a[3] += x[0] * x[0];
    a[4] += x[1] * x[1];
    a[5] += x[2] * x[2];
    a[6] += x[0] * x[1];
  });
  double se_mean = 1.0 / std::sqrt(double(n));
  for (int i = 0; i < 3; ++i)
    EXPECT_NEAR(sums[i] / n, 0.0, 5.0 * se_mean) << "coordinate " << i;
  double se_var = std::sqrt(2.0 / double(n));
  for (int i = 3; i < 6; ++i) EXPECT_NEAR(sums[i] / n, 1.0, 5.0 * se_var);
  EXPECT_NEAR(sums[6] / n, 0.0, 5.0 * se_mean);
}

TEST(Sampler, FourthMomentMatchesTheory) {
  const int64_t n = 400000;
  auto sums = mc_accumulate(7, n, 1, 1, [](const double* x, double* a) {
    a[0] += std::pow(x[0], 4);
  });
  // E z^4 = 3, sd of z^4 is sqrt(96).
  EXPECT_NEAR(sums[0] / n, 3.0, 5.0 * std::sqrt(96.0 / double(n)));
}

TEST(Sampler, WorkerCountDoesNotChangeBits) {
  const int64_t n = 100001;  // deliberately not a chunk multiple
  auto payload = [](const double* x, double* a) {
    a[0] += x[0] * x[0] + 0.5 * x[1];
    a[1] += (x[0] + x[1] > 0.3) ? 1.0 : 0.0;
  };
  auto one = mc_accumulate(99, n, 2, 2, payload, 1);
  auto four = mc_accumulate(99, n, 2, 2, payload, 4);
  EXPECT_EQ(one.size(), four.size());
  for (size_t i = 0; i < one.size(); ++i) {
    EXPECT_EQ(one[i], four[i]) << "accumulator " << i;
  }
}

TEST(Sampler, ChunkSumsCoverAllSamples) {
  const int64_t n = 50000;
  auto chunks = mc_chunk_sums(5, n, 2, 1,
                              [](const double*, double* a) { a[0] += 1.0; });
  EXPECT_EQ(int64_t(chunks.size()), (n + kMcChunk - 1) / kMcChunk);
  double total = reduce_chunks(chunks)[0];
  EXPECT_EQ(total, double(n));
}

TEST(Sampler, SampleIndexIsTheOnlyStreamCoordinate) {
  // The same sample index yields the same point whether or not other samples
  // are drawn; this is what makes chunk scheduling irrelevant.
  double a[4], b[4];
  gaussian_point(2024, 123456, 4, a);
  gaussian_point(2024, 123456, 4, b);
  for (int i = 0; i < 4; ++i) EXPECT_EQ(a[i], b[i]);
  gaussian_point(2024, 123457, 4, b);
  bool same = true;
  for (int i = 0; i < 4; ++i) same = same && a[i] == b[i];
  EXPECT_FALSE(same);
}

}  // namespace
