#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace pivodl {

using Rng = std::mt19937_64;

std::uint64_t splitmix64(std::uint64_t x);

// Mixes a base seed with a sequence of tags into an independent stream seed.
// Every protocol role draws from its own derived stream so that results do
// not depend on scheduling order.
std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::uint64_t> tags);

inline Rng make_rng(std::uint64_t base, std::initializer_list<std::uint64_t> tags) {
  return Rng(derive_seed(base, tags));
}

// Stream domain tags.
enum class Stream : std::uint64_t {
  kKey = 0x6b6579,
  kRoot = 0x726f6f74,
  kSplitClient = 0x73706c,
  kEncrypt = 0x656e63,
  kDpNoise = 0x6470,
  kMask = 0x6d61736b,
  kPartition = 0x70617274,
  kShuffle = 0x73687566,
  kData = 0x64617461,
};

inline std::uint64_t tag(Stream s) { return static_cast<std::uint64_t>(s); }

}  // namespace pivodl
