#include "pivodl/paillier.hpp"

#include <cmath>
#include <limits>

namespace pivodl::paillier {

namespace {

BigInt random_bits(int bits, Rng& rng) {
  const int words = (bits + 63) / 64;
  std::vector<std::uint64_t> limbs(static_cast<std::size_t>(words));
  for (auto& l : limbs) l = rng();
  BigInt out;
  mpz_import(out.get_mpz_t(), limbs.size(), -1, sizeof(std::uint64_t), 0, 0, limbs.data());
  const int excess = words * 64 - bits;
  if (excess > 0) mpz_fdiv_r_2exp(out.get_mpz_t(), out.get_mpz_t(), static_cast<mp_bitcnt_t>(bits));
  return out;
}

BigInt random_prime(int bits, Rng& rng) {
  BigInt start = random_bits(bits, rng);
  mpz_setbit(start.get_mpz_t(), static_cast<mp_bitcnt_t>(bits - 1));
  mpz_setbit(start.get_mpz_t(), static_cast<mp_bitcnt_t>(bits - 2));
  BigInt p;
  mpz_nextprime(p.get_mpz_t(), start.get_mpz_t());
  return p;
}

BigInt L(const BigInt& x, const BigInt& n) { return (x - 1) / n; }

std::uint64_t key_id_of(const BigInt& n) {
  std::uint64_t lo = 0;
  mpz_export(&lo, nullptr, -1, sizeof(lo), 0, 0, BigInt(n & BigInt("0xffffffffffffffff")).get_mpz_t());
  BigInt top = n >> (static_cast<unsigned long>(mpz_sizeinbase(n.get_mpz_t(), 2)) - 64);
  std::uint64_t hi = 0;
  mpz_export(&hi, nullptr, -1, sizeof(hi), 0, 0, top.get_mpz_t());
  return splitmix64(lo ^ splitmix64(hi));
}

}  // namespace

std::size_t PublicKey::ciphertext_bytes() const {
  return (mpz_sizeinbase(n.get_mpz_t(), 2) * 2 + 7) / 8;
}

BigInt random_below(const BigInt& bound, Rng& rng) {
  const int bits = static_cast<int>(mpz_sizeinbase(bound.get_mpz_t(), 2));
  while (true) {
    BigInt r = random_bits(bits, rng);
    if (r < bound) return r;
  }
}

KeyPair keygen(int bits, std::uint64_t seed) {
  if (bits < 256 || bits % 2 != 0) throw std::invalid_argument("key size must be an even number >= 256");
  Rng rng(seed);
  BigInt p, q, n;
  while (true) {
    p = random_prime(bits / 2, rng);
    q = random_prime(bits / 2, rng);
    if (p == q) continue;
    n = p * q;
    if (mpz_sizeinbase(n.get_mpz_t(), 2) != static_cast<std::size_t>(bits)) continue;
    BigInt phi = (p - 1) * (q - 1);
    BigInt gcd_check;
    mpz_gcd(gcd_check.get_mpz_t(), n.get_mpz_t(), phi.get_mpz_t());
    if (gcd_check == 1) break;
  }
  KeyPair kp;
  kp.pk.n = n;
  kp.pk.n_squared = n * n;
  kp.pk.g = n + 1;
  kp.pk.bits = bits;
  kp.pk.key_id = key_id_of(n);

  BigInt p1 = p - 1, q1 = q - 1;
  mpz_lcm(kp.sk.lambda.get_mpz_t(), p1.get_mpz_t(), q1.get_mpz_t());
  BigInt gl;
  mpz_powm(gl.get_mpz_t(), kp.pk.g.get_mpz_t(), kp.sk.lambda.get_mpz_t(), kp.pk.n_squared.get_mpz_t());
  BigInt l = L(gl, n);
  if (mpz_invert(kp.sk.mu.get_mpz_t(), l.get_mpz_t(), n.get_mpz_t()) == 0) {
    throw std::logic_error("keygen: L(g^lambda) not invertible");
  }
  kp.sk.pk = kp.pk;
  return kp;
}

Ciphertext encrypt(const PublicKey& pk, const BigInt& m, Rng& rng) {
  if (m < 0 || m >= pk.n) throw std::out_of_range("paillier plaintext outside [0, n)");
  BigInt r;
  BigInt g;
  do {
    r = random_below(pk.n, rng);
    mpz_gcd(g.get_mpz_t(), r.get_mpz_t(), pk.n.get_mpz_t());
  } while (r == 0 || g != 1);

  BigInt rn;
  mpz_powm(rn.get_mpz_t(), r.get_mpz_t(), pk.n.get_mpz_t(), pk.n_squared.get_mpz_t());
  BigInt gm;
  if (pk.g == pk.n + 1) {
    gm = (1 + m * pk.n) % pk.n_squared;
  } else {
    mpz_powm(gm.get_mpz_t(), pk.g.get_mpz_t(), m.get_mpz_t(), pk.n_squared.get_mpz_t());
  }
  Ciphertext c;
  c.value = (gm * rn) % pk.n_squared;
  c.key_id = pk.key_id;
  return c;
}

BigInt decrypt_raw(const SecretKey& sk, const BigInt& c) {
  const auto& pk = sk.pk;
  BigInt x;
  mpz_powm(x.get_mpz_t(), c.get_mpz_t(), sk.lambda.get_mpz_t(), pk.n_squared.get_mpz_t());
  BigInt m = (L(x, pk.n) * sk.mu) % pk.n;
  if (m < 0) m += pk.n;
  return m;
}

BigInt decrypt(const SecretKey& sk, const Ciphertext& c) {
  if (c.key_id != sk.pk.key_id) throw KeyMismatch("ciphertext was encrypted under a different key");
  if (c.value <= 0 || c.value >= sk.pk.n_squared) throw std::out_of_range("ciphertext outside Z_{n^2}");
  return decrypt_raw(sk, c.value);
}

Ciphertext add(const PublicKey& pk, const Ciphertext& a, const Ciphertext& b) {
  if (a.key_id != pk.key_id || b.key_id != pk.key_id) {
    throw KeyMismatch("cannot add ciphertexts under different keys");
  }
  return {(a.value * b.value) % pk.n_squared, pk.key_id};
}

Ciphertext identity(const PublicKey& pk) { return {BigInt(1), pk.key_id}; }

// ---------------------------------------------------------------------------

FixedPointCodec::FixedPointCodec(BigInt modulus, int scale_bits)
    : n_(std::move(modulus)), half_(n_ / 2), scale_bits_(scale_bits) {
  if (scale_bits < 0 || scale_bits > 62) throw std::invalid_argument("scale bits out of range");
}

double FixedPointCodec::resolution() const { return std::ldexp(1.0, -scale_bits_); }

__int128 FixedPointCodec::quantize(double x, int scale_bits) {
  if (!std::isfinite(x)) throw CodecOverflow("cannot encode a non-finite value");
  const double scaled = std::nearbyint(std::ldexp(x, scale_bits));
  if (std::fabs(scaled) >= std::ldexp(1.0, 126)) throw CodecOverflow("value too large for fixed-point encoding");
  BigInt v;
  mpz_set_d(v.get_mpz_t(), scaled);
  return to_int128(v);
}

double FixedPointCodec::dequantize(__int128 v, int scale_bits) {
  BigInt b = from_int128(v);
  return std::ldexp(mpz_get_d(b.get_mpz_t()), -scale_bits);
}

BigInt FixedPointCodec::encode_fixed(__int128 v) const {
  BigInt b = from_int128(v);
  if (abs(b) >= half_) throw CodecOverflow("fixed-point value exceeds n/2");
  if (b < 0) b += n_;
  return b;
}

BigInt FixedPointCodec::encode(double x) const { return encode_fixed(quantize(x, scale_bits_)); }

__int128 FixedPointCodec::decode_fixed(const BigInt& m) const {
  if (m < 0 || m >= n_) throw std::out_of_range("residue outside [0, n)");
  BigInt v = m > half_ ? BigInt(m - n_) : m;
  return to_int128(v);
}

double FixedPointCodec::decode(const BigInt& m) const {
  if (m < 0 || m >= n_) throw std::out_of_range("residue outside [0, n)");
  BigInt v = m > half_ ? BigInt(m - n_) : m;
  return std::ldexp(mpz_get_d(v.get_mpz_t()), -scale_bits_);
}

BigInt from_int128(__int128 v) {
  const bool neg = v < 0;
  unsigned __int128 u = neg ? static_cast<unsigned __int128>(-(v + 1)) + 1 : static_cast<unsigned __int128>(v);
  const std::uint64_t limbs[2] = {static_cast<std::uint64_t>(u), static_cast<std::uint64_t>(u >> 64)};
  BigInt out;
  mpz_import(out.get_mpz_t(), 2, -1, sizeof(std::uint64_t), 0, 0, limbs);
  return neg ? BigInt(-out) : out;
}

__int128 to_int128(const BigInt& v) {
  if (mpz_sizeinbase(v.get_mpz_t(), 2) > 127) throw CodecOverflow("integer exceeds 127 bits");
  BigInt a = abs(v);
  std::uint64_t limbs[2] = {0, 0};
  mpz_export(limbs, nullptr, -1, sizeof(std::uint64_t), 0, 0, a.get_mpz_t());
  const unsigned __int128 u = (static_cast<unsigned __int128>(limbs[1]) << 64) | limbs[0];
  const auto s = static_cast<__int128>(u);
  return v < 0 ? -s : s;
}

Bytes to_bytes_be(const BigInt& v, std::size_t width) {
  if (v < 0) throw std::invalid_argument("cannot serialize a negative big integer");
  const std::size_t needed = (mpz_sizeinbase(v.get_mpz_t(), 2) + 7) / 8;
  if (needed > width) throw std::length_error("big integer wider than field");
  Bytes out(width, 0);
  if (v != 0) {
    std::size_t count = 0;
    mpz_export(out.data() + (width - needed), &count, 1, 1, 1, 0, v.get_mpz_t());
  }
  return out;
}

BigInt from_bytes_be(std::span<const std::uint8_t> bytes) {
  BigInt out;
  if (!bytes.empty()) mpz_import(out.get_mpz_t(), bytes.size(), 1, 1, 1, 0, bytes.data());
  return out;
}

void write_public_key(ByteWriter& w, const PublicKey& pk) {
  const std::size_t width = (static_cast<std::size_t>(pk.bits) + 7) / 8;
  w.u32(static_cast<std::uint32_t>(pk.bits));
  w.blob(to_bytes_be(pk.n, width));
  w.blob(to_bytes_be(pk.g, 2 * width));
}

PublicKey read_public_key(ByteReader& r) {
  PublicKey pk;
  pk.bits = static_cast<int>(r.u32());
  pk.n = from_bytes_be(r.blob());
  pk.g = from_bytes_be(r.blob());
  pk.n_squared = pk.n * pk.n;
  pk.key_id = key_id_of(pk.n);
  return pk;
}

void write_ciphertext(ByteWriter& w, const Ciphertext& c, const PublicKey& pk) {
  if (c.key_id != pk.key_id) throw KeyMismatch("serializing ciphertext with the wrong key");
  w.blob(to_bytes_be(c.value, pk.ciphertext_bytes()));
}

Ciphertext read_ciphertext(ByteReader& r, const PublicKey& pk) {
  const Bytes b = r.blob();
  if (b.size() != pk.ciphertext_bytes()) throw DecodeError("ciphertext width mismatch");
  return {from_bytes_be(b), pk.key_id};
}

}  // namespace pivodl::paillier
