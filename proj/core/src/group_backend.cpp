#include <array>
#include <cstring>
#include <mutex>
#include <string>
#include <unordered_map>

#include <sodium.h>

#include "privalign/crypto.hpp"
#include "privalign/errors.hpp"

namespace privalign::crypto {

namespace {

// Ciphertext is the pair (r*G, m*G + r*PK), 32 bytes per element. All group
// work goes through ristretto255; the neutral element encodes as 32 zero
// bytes and is a legal operand for add/sub, while scalarmult reports it as a
// failure, so the zero cases are short-circuited here.

constexpr std::size_t kPoint = 32;
constexpr std::size_t kLen = 2 * kPoint;

using Point = std::array<std::uint8_t, kPoint>;
using Scalar = std::array<std::uint8_t, kPoint>;

const Point kIdentity{};

void ensure_sodium() {
  static const int rc = sodium_init();
  if (rc < 0) throw CryptoError("libsodium failed to initialize");
}

Scalar scalar_from_u64(std::uint64_t k) {
  Scalar s{};
  for (int i = 0; i < 8; ++i) s[i] = static_cast<std::uint8_t>((k >> (8 * i)) & 0xff);
  return s;
}

bool is_identity(const Point& p) { return p == kIdentity; }

Point point_base_mul(const Scalar& s) {
  Point out{};
  if (crypto_scalarmult_ristretto255_base(out.data(), s.data()) != 0)
    return kIdentity;  // only fails when the scalar is zero
  return out;
}

Point point_mul(const Point& p, const Scalar& s) {
  if (is_identity(p)) return kIdentity;
  Point out{};
  if (crypto_scalarmult_ristretto255(out.data(), s.data(), p.data()) != 0)
    return kIdentity;  // zero scalar or a result of the neutral element
  return out;
}

Point point_add(const Point& a, const Point& b) {
  Point out{};
  if (crypto_core_ristretto255_add(out.data(), a.data(), b.data()) != 0)
    throw CryptoError("invalid group element");
  return out;
}

Point point_sub(const Point& a, const Point& b) {
  Point out{};
  if (crypto_core_ristretto255_sub(out.data(), a.data(), b.data()) != 0)
    throw CryptoError("invalid group element");
  return out;
}

Point point_from_u64(std::uint64_t m) {
  if (m == 0) return kIdentity;
  return point_base_mul(scalar_from_u64(m));
}

struct PointHash {
  std::size_t operator()(const Point& p) const {
    std::size_t h;
    std::memcpy(&h, p.data(), sizeof(h));
    return h;
  }
};

Scalar random_nonzero_scalar() {
  Scalar s{};
  do {
    crypto_core_ristretto255_scalar_random(s.data());
  } while (sodium_is_zero(s.data(), s.size()));
  return s;
}

class GroupBackend final : public EncryptionBackend {
 public:
  explicit GroupBackend(std::uint64_t max_plain) : max_plain_(max_plain) {
    ensure_sodium();
  }

  std::string name() const override { return "group"; }
  std::size_t ciphertext_len() const override { return kLen; }
  std::uint64_t max_plain() const override { return max_plain_; }

  KeyPair keygen() const override {
    Scalar x = random_nonzero_scalar();
    Point pk = point_base_mul(x);
    KeyPair kp;
    kp.sk.bytes.assign(x.begin(), x.end());
    kp.pk.bytes.assign(pk.begin(), pk.end());
    return kp;
  }

  Ciphertext encrypt(const PublicKey& pk, std::uint64_t m) const override {
    Point key = load_point(pk.bytes, "public key");
    if (m > max_plain_) throw CryptoError("plaintext above the declared bound");
    Scalar r = random_nonzero_scalar();
    Point c1 = point_base_mul(r);
    Point c2 = point_add(point_from_u64(m), point_mul(key, r));
    return assemble(c1, c2);
  }

  std::uint64_t decrypt_small(const SecretKey& sk, const Ciphertext& ct) const override {
    if (sk.bytes.size() != kPoint) throw CryptoError("secret key has the wrong size");
    auto [c1, c2] = split(ct);
    Scalar x{};
    std::memcpy(x.data(), sk.bytes.data(), kPoint);
    Point coded = point_sub(c2, point_mul(c1, x));

    const auto& table = exponent_table();
    auto it = table.find(coded);
    if (it == table.end())
      throw CryptoError("ciphertext does not decode within the plaintext bound");
    return it->second;
  }

  Ciphertext add(const Ciphertext& a, const Ciphertext& b) const override {
    auto [a1, a2] = split(a);
    auto [b1, b2] = split(b);
    return assemble(point_add(a1, b1), point_add(a2, b2));
  }

  Ciphertext add_plain(const Ciphertext& ct, std::uint64_t k) const override {
    auto [c1, c2] = split(ct);
    return assemble(c1, point_add(c2, point_from_u64(k)));
  }

  Ciphertext scalar_mul(const Ciphertext& ct, std::uint64_t k) const override {
    if (k == 0) return zero();
    auto [c1, c2] = split(ct);
    Scalar s = scalar_from_u64(k);
    return assemble(point_mul(c1, s), point_mul(c2, s));
  }

  Ciphertext zero() const override { return assemble(kIdentity, kIdentity); }

 private:
  static Point load_point(const std::vector<std::uint8_t>& bytes, const char* what) {
    if (bytes.size() != kPoint)
      throw CryptoError(std::string(what) + " has the wrong size");
    Point p{};
    std::memcpy(p.data(), bytes.data(), kPoint);
    if (!is_identity(p) && crypto_core_ristretto255_is_valid_point(p.data()) != 1)
      throw CryptoError(std::string(what) + " is not a group element");
    return p;
  }

  static std::pair<Point, Point> split(const Ciphertext& ct) {
    if (ct.bytes.size() != kLen) throw CryptoError("ciphertext has the wrong size");
    Point c1{}, c2{};
    std::memcpy(c1.data(), ct.bytes.data(), kPoint);
    std::memcpy(c2.data(), ct.bytes.data() + kPoint, kPoint);
    return {c1, c2};
  }

  static Ciphertext assemble(const Point& c1, const Point& c2) {
    Ciphertext ct;
    ct.bytes.resize(kLen);
    std::memcpy(ct.bytes.data(), c1.data(), kPoint);
    std::memcpy(ct.bytes.data() + kPoint, c2.data(), kPoint);
    return ct;
  }

  const std::unordered_map<Point, std::uint64_t, PointHash>& exponent_table() const {
    std::call_once(table_once_, [this] {
      Point base = point_from_u64(1);
      Point acc = kIdentity;
      table_.reserve(max_plain_ + 1);
      table_.emplace(acc, 0);
      for (std::uint64_t m = 1; m <= max_plain_; ++m) {
        acc = point_add(acc, base);
        table_.emplace(acc, m);
      }
    });
    return table_;
  }

  std::uint64_t max_plain_;
  mutable std::once_flag table_once_;
  mutable std::unordered_map<Point, std::uint64_t, PointHash> table_;
};

}  // namespace

std::unique_ptr<EncryptionBackend> make_group_backend(std::uint64_t max_plain) {
  return std::make_unique<GroupBackend>(max_plain);
}

std::unique_ptr<EncryptionBackend> make_backend(const std::string& name,
                                                std::uint64_t max_plain) {
  if (name == "mock") return make_mock_backend(max_plain);
  if (name == "group") return make_group_backend(max_plain);
  throw CryptoError("unknown encryption backend: " + name);
}

bool backend_known(const std::string& name) { return name == "mock" || name == "group"; }

Ciphertext dot_product(const EncryptionBackend& backend,
                       std::span<const Ciphertext> cts,
                       std::span<const std::uint32_t> plain) {
  if (cts.size() != plain.size())
    throw CryptoError("dot product over vectors of different lengths");
  Ciphertext acc = backend.zero();
  for (std::size_t i = 0; i < cts.size(); ++i) {
    if (plain[i] == 0) continue;
    acc = backend.add(acc, backend.scalar_mul(cts[i], plain[i]));
  }
  return acc;
}

}  // namespace privalign::crypto
