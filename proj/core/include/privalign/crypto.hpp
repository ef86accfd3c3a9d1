#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace privalign::crypto {

struct PublicKey {
  std::vector<std::uint8_t> bytes;
};

struct SecretKey {
  std::vector<std::uint8_t> bytes;
};

struct KeyPair {
  PublicKey pk;
  SecretKey sk;
};

struct Ciphertext {
  std::vector<std::uint8_t> bytes;
};

// Additively homomorphic encryption over small non-negative plaintexts.
//
// Laws, for any m, k within max_plain():
//   dec(add(enc(m), enc(k)))    == m + k
//   dec(scalar_mul(enc(m), k))  == m * k
//   dec(add_plain(enc(m), k))   == m + k
//   dec(zero())                 == 0
//
// Encryption is randomized: repeated enc(m) yields distinct ciphertexts.
// decrypt_small only covers [0, max_plain] and throws CryptoError beyond it.
class EncryptionBackend {
 public:
  virtual ~EncryptionBackend() = default;

  virtual std::string name() const = 0;
  virtual std::size_t ciphertext_len() const = 0;
  virtual std::uint64_t max_plain() const = 0;

  virtual KeyPair keygen() const = 0;
  virtual Ciphertext encrypt(const PublicKey& pk, std::uint64_t m) const = 0;
  virtual std::uint64_t decrypt_small(const SecretKey& sk, const Ciphertext& ct) const = 0;

  virtual Ciphertext add(const Ciphertext& a, const Ciphertext& b) const = 0;
  virtual Ciphertext add_plain(const Ciphertext& ct, std::uint64_t k) const = 0;
  virtual Ciphertext scalar_mul(const Ciphertext& ct, std::uint64_t k) const = 0;

  // Additive identity. Not randomized; callers fold it away or mask the
  // result before it leaves the process.
  virtual Ciphertext zero() const = 0;
};

// Plaintext ciphertexts with the homomorphic interface, for tests and fast
// protocol runs. Provides no secrecy.
std::unique_ptr<EncryptionBackend> make_mock_backend(std::uint64_t max_plain);

// Exponent-coded ElGamal on the ristretto255 group. Decryption inverts the
// exponent coding with a lookup table over [0, max_plain], built lazily on
// first decrypt.
std::unique_ptr<EncryptionBackend> make_group_backend(std::uint64_t max_plain);

// Registry by wire name ("mock", "group"); throws CryptoError for unknown
// names.
std::unique_ptr<EncryptionBackend> make_backend(const std::string& name,
                                                std::uint64_t max_plain);
bool backend_known(const std::string& name);

// Inner product of a ciphertext vector with a plaintext vector: sum of
// scalar_mul(cts[i], plain[i]) skipping zero coefficients.
Ciphertext dot_product(const EncryptionBackend& backend,
                       std::span<const Ciphertext> cts,
                       std::span<const std::uint32_t> plain);

}  // namespace privalign::crypto
