#include "pivodl/kernels.hpp"

#include <algorithm>
#include <stdexcept>

#include <omp.h>

namespace pivodl::kernels {

int max_threads() { return omp_get_max_threads(); }

FeatureBuckets bucketize(std::span<const double> column, std::span<const int> rows, const BucketThresholds& cuts) {
  FeatureBuckets out;
  out.n_thresholds = static_cast<int>(cuts.thresholds.size());
  out.bucket.reserve(rows.size());
  for (int r : rows) out.bucket.push_back(cuts.bucket_of(column[static_cast<std::size_t>(r)]));
  return out;
}

namespace {

void check_sizes(std::span<const FeatureBuckets> features, std::size_t g, std::size_t h) {
  if (g != h) throw std::invalid_argument("gradient and hessian lengths differ");
  for (const auto& f : features) {
    if (f.bucket.size() != g) throw std::invalid_argument("bucket vector length differs from gradients");
  }
}

template <typename Acc, typename In>
void scan_threshold(const FeatureBuckets& f, int k, std::span<const In> g, std::span<const In> h, Acc& G, Acc& H,
                    std::int64_t& count) {
  G = 0;
  H = 0;
  count = 0;
  for (std::size_t i = 0; i < f.bucket.size(); ++i) {
    if (f.bucket[i] <= k) {
      G += g[i];
      H += h[i];
      ++count;
    }
  }
}

DoubleSums empty_double(int n) {
  return {std::vector<double>(static_cast<std::size_t>(n)), std::vector<double>(static_cast<std::size_t>(n)),
          std::vector<std::int64_t>(static_cast<std::size_t>(n))};
}

FixedSums empty_fixed(int n) {
  return {std::vector<__int128>(static_cast<std::size_t>(n)), std::vector<__int128>(static_cast<std::size_t>(n)),
          std::vector<std::int64_t>(static_cast<std::size_t>(n))};
}

// Histogram then prefix sum; exact in integer arithmetic so the summation
// order does not matter.
void fixed_prefix(const FeatureBuckets& f, std::span<const std::int64_t> g, std::span<const std::int64_t> h,
                  FixedSums& out) {
  const int nb = f.n_thresholds + 1;
  std::vector<__int128> hg(static_cast<std::size_t>(nb)), hh(static_cast<std::size_t>(nb));
  std::vector<std::int64_t> hc(static_cast<std::size_t>(nb));
  for (std::size_t i = 0; i < f.bucket.size(); ++i) {
    const auto b = static_cast<std::size_t>(f.bucket[i]);
    hg[b] += g[i];
    hh[b] += h[i];
    ++hc[b];
  }
  __int128 G = 0, H = 0;
  std::int64_t c = 0;
  for (int k = 0; k < f.n_thresholds; ++k) {
    G += hg[static_cast<std::size_t>(k)];
    H += hh[static_cast<std::size_t>(k)];
    c += hc[static_cast<std::size_t>(k)];
    out.G[static_cast<std::size_t>(k)] = G;
    out.H[static_cast<std::size_t>(k)] = H;
    out.count[static_cast<std::size_t>(k)] = c;
  }
}

}  // namespace

namespace ref {

std::vector<DoubleSums> left_sums(std::span<const FeatureBuckets> features, std::span<const double> g,
                                  std::span<const double> h) {
  check_sizes(features, g.size(), h.size());
  std::vector<DoubleSums> out;
  out.reserve(features.size());
  for (const auto& f : features) {
    DoubleSums s = empty_double(f.n_thresholds);
    for (int k = 0; k < f.n_thresholds; ++k) {
      const auto kk = static_cast<std::size_t>(k);
      scan_threshold(f, k, g, h, s.G[kk], s.H[kk], s.count[kk]);
    }
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<FixedSums> left_sums_fixed(std::span<const FeatureBuckets> features, std::span<const std::int64_t> g,
                                       std::span<const std::int64_t> h) {
  check_sizes(features, g.size(), h.size());
  std::vector<FixedSums> out;
  out.reserve(features.size());
  for (const auto& f : features) {
    FixedSums s = empty_fixed(f.n_thresholds);
    for (int k = 0; k < f.n_thresholds; ++k) {
      const auto kk = static_cast<std::size_t>(k);
      scan_threshold(f, k, g, h, s.G[kk], s.H[kk], s.count[kk]);
    }
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<paillier::Ciphertext> encrypt_batch(const paillier::PublicKey& pk,
                                                std::span<const paillier::BigInt> plaintexts,
                                                std::uint64_t stream_seed) {
  std::vector<paillier::Ciphertext> out;
  out.reserve(plaintexts.size());
  for (std::size_t i = 0; i < plaintexts.size(); ++i) {
    Rng rng = make_rng(stream_seed, {i});
    out.push_back(paillier::encrypt(pk, plaintexts[i], rng));
  }
  return out;
}

std::vector<paillier::BigInt> decrypt_batch(const paillier::SecretKey& sk,
                                            std::span<const paillier::Ciphertext> ciphertexts) {
  std::vector<paillier::BigInt> out;
  out.reserve(ciphertexts.size());
  for (const auto& c : ciphertexts) out.push_back(paillier::decrypt(sk, c));
  return out;
}

}  // namespace ref

namespace omp {

std::vector<DoubleSums> left_sums(std::span<const FeatureBuckets> features, std::span<const double> g,
                                  std::span<const double> h) {
  check_sizes(features, g.size(), h.size());
  std::vector<DoubleSums> out(features.size());
  std::vector<std::pair<int, int>> work;
  for (std::size_t f = 0; f < features.size(); ++f) {
    out[f] = empty_double(features[f].n_thresholds);
    for (int k = 0; k < features[f].n_thresholds; ++k) work.emplace_back(static_cast<int>(f), k);
  }
  const auto n = static_cast<std::int64_t>(work.size());
#pragma omp parallel for schedule(static)
  for (std::int64_t w = 0; w < n; ++w) {
    const auto [f, k] = work[static_cast<std::size_t>(w)];
    auto& s = out[static_cast<std::size_t>(f)];
    const auto kk = static_cast<std::size_t>(k);
    scan_threshold(features[static_cast<std::size_t>(f)], k, g, h, s.G[kk], s.H[kk], s.count[kk]);
  }
  return out;
}

std::vector<FixedSums> left_sums_fixed(std::span<const FeatureBuckets> features, std::span<const std::int64_t> g,
                                       std::span<const std::int64_t> h) {
  check_sizes(features, g.size(), h.size());
  std::vector<FixedSums> out(features.size());
  const auto n = static_cast<std::int64_t>(features.size());
#pragma omp parallel for schedule(dynamic)
  for (std::int64_t f = 0; f < n; ++f) {
    const auto& fb = features[static_cast<std::size_t>(f)];
    FixedSums s = empty_fixed(fb.n_thresholds);
    fixed_prefix(fb, g, h, s);
    out[static_cast<std::size_t>(f)] = std::move(s);
  }
  return out;
}

std::vector<paillier::Ciphertext> encrypt_batch(const paillier::PublicKey& pk,
                                                std::span<const paillier::BigInt> plaintexts,
                                                std::uint64_t stream_seed) {
  std::vector<paillier::Ciphertext> out(plaintexts.size());
  const auto n = static_cast<std::int64_t>(plaintexts.size());
#pragma omp parallel for schedule(dynamic, 8)
  for (std::int64_t i = 0; i < n; ++i) {
    Rng rng = make_rng(stream_seed, {static_cast<std::uint64_t>(i)});
    out[static_cast<std::size_t>(i)] = paillier::encrypt(pk, plaintexts[static_cast<std::size_t>(i)], rng);
  }
  return out;
}

std::vector<paillier::BigInt> decrypt_batch(const paillier::SecretKey& sk,
                                            std::span<const paillier::Ciphertext> ciphertexts) {
  std::vector<paillier::BigInt> out(ciphertexts.size());
  const auto n = static_cast<std::int64_t>(ciphertexts.size());
  bool failed = false;
#pragma omp parallel for schedule(dynamic, 8)
  for (std::int64_t i = 0; i < n; ++i) {
    const auto& c = ciphertexts[static_cast<std::size_t>(i)];
    if (c.key_id != sk.pk.key_id) {
#pragma omp atomic write
      failed = true;
      continue;
    }
    out[static_cast<std::size_t>(i)] = paillier::decrypt_raw(sk, c.value);
  }
  if (failed) throw paillier::KeyMismatch("ciphertext was encrypted under a different key");
  return out;
}

}  // namespace omp

}  // namespace pivodl::kernels
