#include "pivodl/bytes.hpp"

#include <bit>
#include <cstring>

namespace pivodl {

void ByteWriter::put_le(std::uint64_t v, int width) {
  for (int i = 0; i < width; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void ByteWriter::i128(__int128 v) {
  const auto u = static_cast<unsigned __int128>(v);
  u64(static_cast<std::uint64_t>(u));
  u64(static_cast<std::uint64_t>(u >> 64));
}

void ByteWriter::f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }

void ByteWriter::blob(std::span<const std::uint8_t> data) {
  u32(static_cast<std::uint32_t>(data.size()));
  buf_.insert(buf_.end(), data.begin(), data.end());
}

void ByteWriter::ids(std::span<const int> ids) {
  u32(static_cast<std::uint32_t>(ids.size()));
  for (int id : ids) u32(static_cast<std::uint32_t>(id));
}

std::uint64_t ByteReader::get_le(int width) {
  need(static_cast<std::size_t>(width));
  std::uint64_t v = 0;
  for (int i = 0; i < width; ++i) v |= static_cast<std::uint64_t>(data_[pos_ + i]) << (8 * i);
  pos_ += static_cast<std::size_t>(width);
  return v;
}

__int128 ByteReader::i128() {
  const unsigned __int128 lo = u64();
  const unsigned __int128 hi = u64();
  return static_cast<__int128>(lo | (hi << 64));
}

double ByteReader::f64() { return std::bit_cast<double>(u64()); }

Bytes ByteReader::blob() {
  const std::uint32_t n = u32();
  need(n);
  Bytes out(data_.begin() + static_cast<std::ptrdiff_t>(pos_),
            data_.begin() + static_cast<std::ptrdiff_t>(pos_ + n));
  pos_ += n;
  return out;
}

std::vector<int> ByteReader::ids() {
  const std::uint32_t n = u32();
  need(static_cast<std::size_t>(n) * 4);
  std::vector<int> out(n);
  for (auto& id : out) id = static_cast<int>(u32());
  return out;
}

}  // namespace pivodl
