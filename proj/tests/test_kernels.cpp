#include <gtest/gtest.h>

#include <cstring>

#include "pivodl/kernels.hpp"

using namespace pivodl;
using namespace pivodl::kernels;

namespace {

struct Fixture {
  std::vector<FeatureBuckets> features;
  std::vector<double> g, h;
  std::vector<std::int64_t> qg, qh;
};

Fixture make_fixture(std::size_t rows, std::size_t n_features, std::uint64_t seed) {
  Rng rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Fixture f;
  std::vector<int> subset;
  for (std::size_t r = 0; r < rows; ++r) {
    if (unit(rng) < 0.7) subset.push_back(static_cast<int>(r));
  }
  for (std::size_t j = 0; j < n_features; ++j) {
    std::vector<double> col(rows);
    for (auto& x : col) x = normal(rng);
    const auto cuts = build_buckets(col, 16, static_cast<int>(j));
    f.features.push_back(bucketize(col, subset, cuts));
  }
  for (std::size_t i = 0; i < subset.size(); ++i) {
    const double p = unit(rng);
    f.g.push_back(p - (unit(rng) < 0.5 ? 1.0 : 0.0));
    f.h.push_back(p * (1 - p));
    f.qg.push_back(static_cast<std::int64_t>(f.g.back() * 1099511627776.0));
    f.qh.push_back(static_cast<std::int64_t>(f.h.back() * 1099511627776.0));
  }
  return f;
}

bool same_bits(double a, double b) { return std::memcmp(&a, &b, sizeof a) == 0; }

}  // namespace

TEST(Kernels, BucketizeMatchesBucketOf) {
  const std::vector<double> col{0.1, 5.0, -2.0, 3.3, 0.1};
  const std::vector<int> rows{4, 1, 2};
  const auto cuts = build_buckets(col, 4);
  const auto fb = bucketize(col, rows, cuts);
  ASSERT_EQ(fb.bucket.size(), 3u);
  for (std::size_t i = 0; i < rows.size(); ++i) EXPECT_EQ(fb.bucket[i], cuts.bucket_of(col[static_cast<std::size_t>(rows[i])]));
  EXPECT_EQ(fb.n_thresholds, static_cast<int>(cuts.thresholds.size()));
}

TEST(Kernels, LeftSumsAgainstDirectCount) {
  const auto f = make_fixture(300, 3, 1);
  const auto sums = ref::left_sums(f.features, f.g, f.h);
  for (std::size_t j = 0; j < f.features.size(); ++j) {
    for (int k = 0; k < f.features[j].n_thresholds; ++k) {
      double G = 0, H = 0;
      std::int64_t n = 0;
      for (std::size_t i = 0; i < f.g.size(); ++i) {
        if (f.features[j].bucket[i] <= k) {
          G += f.g[i];
          H += f.h[i];
          ++n;
        }
      }
      EXPECT_NEAR(sums[j].G[static_cast<std::size_t>(k)], G, 1e-9);
      EXPECT_NEAR(sums[j].H[static_cast<std::size_t>(k)], H, 1e-9);
      EXPECT_EQ(sums[j].count[static_cast<std::size_t>(k)], n);
    }
  }
}

TEST(Kernels, LeftSumsSerialAndParallelBitIdentical) {
  for (std::uint64_t seed : {2u, 3u, 4u}) {
    const auto f = make_fixture(2000, 6, seed);
    const auto a = ref::left_sums(f.features, f.g, f.h);
    const auto b = omp::left_sums(f.features, f.g, f.h);
    ASSERT_EQ(a.size(), b.size());
    for (std::size_t j = 0; j < a.size(); ++j) {
      ASSERT_EQ(a[j].G.size(), b[j].G.size());
      for (std::size_t k = 0; k < a[j].G.size(); ++k) {
        EXPECT_TRUE(same_bits(a[j].G[k], b[j].G[k]));
        EXPECT_TRUE(same_bits(a[j].H[k], b[j].H[k]));
        EXPECT_EQ(a[j].count[k], b[j].count[k]);
      }
    }
  }
}

TEST(Kernels, FixedSumsSerialAndParallelIdentical) {
  const auto f = make_fixture(2000, 5, 7);
  const auto a = ref::left_sums_fixed(f.features, f.qg, f.qh);
  const auto b = omp::left_sums_fixed(f.features, f.qg, f.qh);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t j = 0; j < a.size(); ++j) {
    EXPECT_TRUE(a[j].G == b[j].G);
    EXPECT_TRUE(a[j].H == b[j].H);
    EXPECT_EQ(a[j].count, b[j].count);
  }
}

TEST(Kernels, EncryptDecryptBatchesIdentical) {
  const auto kp = paillier::keygen(256, 5);
  std::vector<paillier::BigInt> ms;
  for (int i = 0; i < 40; ++i) ms.emplace_back(i * 1000 + 7);
  const auto a = ref::encrypt_batch(kp.pk, ms, 99);
  const auto b = omp::encrypt_batch(kp.pk, ms, 99);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i].value, b[i].value);
  const auto da = ref::decrypt_batch(kp.sk, a);
  const auto db = omp::decrypt_batch(kp.sk, b);
  EXPECT_EQ(da, ms);
  EXPECT_EQ(db, ms);
  EXPECT_GE(max_threads(), 1);
}
