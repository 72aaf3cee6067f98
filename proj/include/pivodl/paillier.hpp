#pragma once

#include <cstdint>
#include <stdexcept>

#include <gmpxx.h>

#include "pivodl/bytes.hpp"
#include "pivodl/rng.hpp"

namespace pivodl::paillier {

using BigInt = mpz_class;

class KeyMismatch : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class CodecOverflow : public std::overflow_error {
 public:
  using std::overflow_error::overflow_error;
};

struct PublicKey {
  BigInt n;
  BigInt g;
  BigInt n_squared;
  int bits = 0;
  std::uint64_t key_id = 0;

  // Width in bytes of a serialized element of Z_{n^2}.
  std::size_t ciphertext_bytes() const;
};

struct SecretKey {
  BigInt lambda;
  BigInt mu;
  PublicKey pk;
};

struct KeyPair {
  PublicKey pk;
  SecretKey sk;
};

struct Ciphertext {
  BigInt value;
  std::uint64_t key_id = 0;
};

// Two primes of bits/2 bits each with the top two bits set, so n has exactly
// `bits` bits. Deterministic in `seed`.
KeyPair keygen(int bits, std::uint64_t seed);

// Requires 0 <= m < n; throws std::out_of_range otherwise.
Ciphertext encrypt(const PublicKey& pk, const BigInt& m, Rng& rng);

// Throws KeyMismatch when the ciphertext was produced under a different key.
BigInt decrypt(const SecretKey& sk, const Ciphertext& c);

// Decryption arithmetic without the key check; used to demonstrate that a
// foreign secret key yields garbage.
BigInt decrypt_raw(const SecretKey& sk, const BigInt& c);

// Homomorphic addition: product in Z_{n^2}.
Ciphertext add(const PublicKey& pk, const Ciphertext& a, const Ciphertext& b);

// Encryption of zero with randomness 1; the identity for `add`.
Ciphertext identity(const PublicKey& pk);

// Signed fixed-point encoding into Z_n. Negative values wrap to n - |v|;
// decoding treats residues above n/2 as negative.
class FixedPointCodec {
 public:
  FixedPointCodec(BigInt modulus, int scale_bits = 40);

  BigInt encode(double x) const;
  BigInt encode_fixed(__int128 v) const;
  double decode(const BigInt& m) const;
  __int128 decode_fixed(const BigInt& m) const;

  // x scaled and rounded to the nearest integer on the 2^-scale_bits grid.
  static __int128 quantize(double x, int scale_bits);
  static double dequantize(__int128 v, int scale_bits);

  int scale_bits() const { return scale_bits_; }
  double resolution() const;
  const BigInt& modulus() const { return n_; }

 private:
  BigInt n_;
  BigInt half_;
  int scale_bits_;
};

BigInt random_below(const BigInt& bound, Rng& rng);
BigInt from_int128(__int128 v);
__int128 to_int128(const BigInt& v);

// Big-endian fixed-width encoding, left-padded with zeros.
Bytes to_bytes_be(const BigInt& v, std::size_t width);
BigInt from_bytes_be(std::span<const std::uint8_t> bytes);

// Length-prefixed wire forms.
void write_public_key(ByteWriter& w, const PublicKey& pk);
PublicKey read_public_key(ByteReader& r);
void write_ciphertext(ByteWriter& w, const Ciphertext& c, const PublicKey& pk);
Ciphertext read_ciphertext(ByteReader& r, const PublicKey& pk);

}  // namespace pivodl::paillier
