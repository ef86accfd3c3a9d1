#include <cstring>
#include <random>
#include <string>

#include "privalign/crypto.hpp"
#include "privalign/errors.hpp"

namespace privalign::crypto {

namespace {

// Layout: plaintext u64 | key tag u64 | random nonce u64 | reserved u64.
// The nonce keeps repeated encryptions byte-distinct; everything is readable
// on purpose.
constexpr std::size_t kLen = 32;

std::uint64_t load64(const std::uint8_t* p) {
  std::uint64_t v;
  std::memcpy(&v, p, 8);
  return v;
}

void store64(std::uint8_t* p, std::uint64_t v) { std::memcpy(p, &v, 8); }

class MockBackend final : public EncryptionBackend {
 public:
  explicit MockBackend(std::uint64_t max_plain) : max_plain_(max_plain) {}

  std::string name() const override { return "mock"; }
  std::size_t ciphertext_len() const override { return kLen; }
  std::uint64_t max_plain() const override { return max_plain_; }

  KeyPair keygen() const override {
    std::uint64_t tag = 0;
    while (tag == 0) tag = (std::uint64_t{std::random_device{}()} << 32) | std::random_device{}();
    KeyPair kp;
    kp.sk.bytes.resize(8);
    store64(kp.sk.bytes.data(), tag);
    kp.pk.bytes = kp.sk.bytes;
    return kp;
  }

  Ciphertext encrypt(const PublicKey& pk, std::uint64_t m) const override {
    if (pk.bytes.size() != 8) throw CryptoError("mock public key has the wrong size");
    if (m > max_plain_) throw CryptoError("plaintext above the declared bound");
    return assemble(m, load64(pk.bytes.data()));
  }

  std::uint64_t decrypt_small(const SecretKey& sk, const Ciphertext& ct) const override {
    check(ct);
    std::uint64_t tag = load64(ct.bytes.data() + 8);  // 0 = key-free identity
    if (sk.bytes.size() != 8 || (tag != 0 && tag != load64(sk.bytes.data())))
      throw CryptoError("ciphertext does not match the secret key");
    std::uint64_t m = load64(ct.bytes.data());
    if (m > max_plain_) throw CryptoError("plaintext outside the decodable range");
    return m;
  }

  Ciphertext add(const Ciphertext& a, const Ciphertext& b) const override {
    check(a);
    check(b);
    std::uint64_t ta = load64(a.bytes.data() + 8), tb = load64(b.bytes.data() + 8);
    if (ta != 0 && tb != 0 && ta != tb)
      throw CryptoError("ciphertexts under different keys");
    return assemble(load64(a.bytes.data()) + load64(b.bytes.data()), ta ? ta : tb);
  }

  Ciphertext add_plain(const Ciphertext& ct, std::uint64_t k) const override {
    check(ct);
    return assemble(load64(ct.bytes.data()) + k, load64(ct.bytes.data() + 8));
  }

  Ciphertext scalar_mul(const Ciphertext& ct, std::uint64_t k) const override {
    check(ct);
    return assemble(load64(ct.bytes.data()) * k, load64(ct.bytes.data() + 8));
  }

  Ciphertext zero() const override { return assemble(0, 0); }

 private:
  static void check(const Ciphertext& ct) {
    if (ct.bytes.size() != kLen) throw CryptoError("mock ciphertext has the wrong size");
  }

  static Ciphertext assemble(std::uint64_t m, std::uint64_t tag) {
    thread_local std::mt19937_64 nonce_rng{std::random_device{}()};
    Ciphertext ct;
    ct.bytes.resize(kLen, 0);
    store64(ct.bytes.data(), m);
    store64(ct.bytes.data() + 8, tag);
    store64(ct.bytes.data() + 16, nonce_rng());
    return ct;
  }

  std::uint64_t max_plain_;
};

}  // namespace

std::unique_ptr<EncryptionBackend> make_mock_backend(std::uint64_t max_plain) {
  return std::make_unique<MockBackend>(max_plain);
}

}  // namespace privalign::crypto
