#pragma once

// Data-parallel inner loops of training. Each kernel has a serial reference
// in `ref` and an OpenMP version in `omp`; both produce bit-identical output
// and the tests hold them to that.

#include <cstdint>
#include <span>
#include <vector>

#include "pivodl/gbdt.hpp"
#include "pivodl/paillier.hpp"

namespace pivodl::kernels {

// Bucket indices of one feature restricted to an ordered row subset.
struct FeatureBuckets {
  std::vector<int> bucket;  // parallel to the row subset
  int n_thresholds = 0;
};

FeatureBuckets bucketize(std::span<const double> column, std::span<const int> rows, const BucketThresholds& cuts);

// Left-branch sums per threshold index k: rows with bucket <= k.
struct DoubleSums {
  std::vector<double> G, H;
  std::vector<std::int64_t> count;
};

struct FixedSums {
  std::vector<__int128> G, H;
  std::vector<std::int64_t> count;
};

namespace ref {

// Accumulates in row order for every threshold, so two thresholds that
// select the same rows produce bit-identical sums.
std::vector<DoubleSums> left_sums(std::span<const FeatureBuckets> features, std::span<const double> g,
                                  std::span<const double> h);

std::vector<FixedSums> left_sums_fixed(std::span<const FeatureBuckets> features, std::span<const std::int64_t> g,
                                       std::span<const std::int64_t> h);

// Item i draws its ephemeral randomness from derive_seed(stream_seed, {i}).
std::vector<paillier::Ciphertext> encrypt_batch(const paillier::PublicKey& pk,
                                                std::span<const paillier::BigInt> plaintexts,
                                                std::uint64_t stream_seed);

std::vector<paillier::BigInt> decrypt_batch(const paillier::SecretKey& sk,
                                            std::span<const paillier::Ciphertext> ciphertexts);

}  // namespace ref

namespace omp {

std::vector<DoubleSums> left_sums(std::span<const FeatureBuckets> features, std::span<const double> g,
                                  std::span<const double> h);

std::vector<FixedSums> left_sums_fixed(std::span<const FeatureBuckets> features, std::span<const std::int64_t> g,
                                       std::span<const std::int64_t> h);

std::vector<paillier::Ciphertext> encrypt_batch(const paillier::PublicKey& pk,
                                                std::span<const paillier::BigInt> plaintexts,
                                                std::uint64_t stream_seed);

std::vector<paillier::BigInt> decrypt_batch(const paillier::SecretKey& sk,
                                            std::span<const paillier::Ciphertext> ciphertexts);

}  // namespace omp

int max_threads();

}  // namespace pivodl::kernels
