#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <variant>
#include <vector>

#include "privalign/crypto.hpp"
#include "privalign/fm.hpp"
#include "privalign/model.hpp"

namespace privalign::proto {

// Both sides track suffix intervals only in rotated form: the server holds a
// rotation offset R modulo the disclosed size and answers rank queries
// pre-rotated by it, so the client only ever sees endpoint + R. A fresh
// offset is drawn for every response; the offset that produced the previous
// character's intervals is kept so one step can be undone after a mismatch.

inline constexpr std::uint8_t kAbortBudget = 1;
inline constexpr std::uint8_t kAbortProtocol = 2;

// Session facts the server discloses at setup: the interval modulus
// (text length + 1), the shared alphabet, the ciphertext size of the agreed
// backend, and the mismatch budget.
struct SessionParams {
  std::uint32_t size = 0;
  model::Alphabet alphabet;
  std::uint32_t ciphertext_len = 0;
  fm::Budget budget;
};

// One rank query: encrypted one-hot vectors for both interval endpoints,
// the wavelet row to look up, and whether the previous character's offsets
// must be restored first.
struct PlfRequest {
  std::uint8_t row = 0;
  bool undo = false;
  std::vector<crypto::Ciphertext> lower;
  std::vector<crypto::Ciphertext> upper;
};

struct PlfResponse {
  crypto::Ciphertext lower;
  crypto::Ciphertext upper;
};

struct SessionAbort {
  std::uint8_t code = kAbortProtocol;
  std::string reason;
};

using PlfOutcome = std::variant<PlfResponse, SessionAbort>;

// Encrypted one-hot vector of length 2 * size selecting `index` within the
// half chosen by `bit`.
std::vector<crypto::Ciphertext> pack(const crypto::EncryptionBackend& backend,
                                     const crypto::PublicKey& pk,
                                     std::uint32_t size, std::uint32_t index, int bit);

// Rotated endpoints describe an empty interval exactly when they coincide
// modulo the size.
bool emptiness_check(std::uint32_t lower, std::uint32_t upper, std::uint32_t size);

// Server side of one session. handle() is strict about sequencing: rows must
// arrive in order 0..width-1 per character, undo is only legal on row 0, and
// after any abort the session stays dead.
class ServerEngine {
 public:
  ServerEngine(std::shared_ptr<const fm::FmIndex> index,
               std::shared_ptr<const crypto::EncryptionBackend> backend,
               crypto::PublicKey client_pk, fm::Budget budget);
  ServerEngine(std::shared_ptr<const fm::FmIndex> index,
               std::shared_ptr<const crypto::EncryptionBackend> backend,
               crypto::PublicKey client_pk, fm::Budget budget, std::uint64_t seed);

  SessionParams params() const;
  PlfOutcome handle(const PlfRequest& request);

  // Replaces the offset generator; the argument is the modulus. Offsets keep
  // being recorded, so tests can reconstruct every rotation.
  void set_offset_source(std::function<std::uint32_t(std::uint32_t)> source);
  const std::vector<std::uint32_t>& offset_history() const { return history_; }

 private:
  SessionAbort abort_session(std::uint8_t code, std::string reason);
  std::uint32_t draw_offset();

  std::shared_ptr<const fm::FmIndex> index_;
  std::shared_ptr<const crypto::EncryptionBackend> backend_;
  crypto::PublicKey client_pk_;
  fm::Budget budget_;
  std::uint32_t remaining_ = 0;
  std::uint32_t size_ = 0;
  std::uint8_t expected_row_ = 0;
  std::uint32_t offset_ = 0;        // rotation of the current endpoints
  std::uint32_t saved_offset_ = 0;  // rotation before the current character
  bool dead_ = false;
  std::uint64_t rng_state_;
  std::function<std::uint32_t(std::uint32_t)> offset_source_;
  std::vector<std::uint32_t> history_;
};

// Transport callback: delivers one request, returns the peer's outcome.
using Exchange = std::function<PlfOutcome(const PlfRequest&)>;

// Client side of one session: walks the trace right to left with the
// separator appended, packs both endpoints per wavelet row, and classifies
// each character by the emptiness of the stepped interval. Mismatched steps
// are rolled back locally and flagged for the server with the next request.
class ClientEngine {
 public:
  ClientEngine(SessionParams params,
               std::shared_ptr<const crypto::EncryptionBackend> backend,
               crypto::KeyPair keys);

  fm::Alignment run(const std::vector<std::string>& trace, const Exchange& exchange);

  // Observes the raw decrypted endpoint pair of every response.
  void observe_decrypts(std::function<void(std::uint32_t, std::uint32_t)> hook);

 private:
  SessionParams params_;
  std::shared_ptr<const crypto::EncryptionBackend> backend_;
  crypto::KeyPair keys_;
  std::function<void(std::uint32_t, std::uint32_t)> observe_;
};

}  // namespace privalign::proto
