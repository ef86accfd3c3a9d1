#include <algorithm>
#include <random>
#include <utility>

#include "privalign/errors.hpp"
#include "privalign/protocol.hpp"

namespace privalign::proto {

std::vector<crypto::Ciphertext> pack(const crypto::EncryptionBackend& backend,
                                     const crypto::PublicKey& pk,
                                     std::uint32_t size, std::uint32_t index, int bit) {
  if (index >= size) throw ProtocolError("endpoint outside the disclosed size");
  std::vector<crypto::Ciphertext> out;
  out.reserve(2 * size);
  const std::size_t hot = static_cast<std::size_t>(bit) * size + index;
  for (std::size_t slot = 0; slot < 2 * size; ++slot)
    out.push_back(backend.encrypt(pk, slot == hot ? 1 : 0));
  return out;
}

bool emptiness_check(std::uint32_t lower, std::uint32_t upper, std::uint32_t size) {
  return (upper + size - lower) % size == 0;
}

ServerEngine::ServerEngine(std::shared_ptr<const fm::FmIndex> index,
                           std::shared_ptr<const crypto::EncryptionBackend> backend,
                           crypto::PublicKey client_pk, fm::Budget budget)
    : ServerEngine(std::move(index), std::move(backend), std::move(client_pk), budget,
                   std::random_device{}()) {}

ServerEngine::ServerEngine(std::shared_ptr<const fm::FmIndex> index,
                           std::shared_ptr<const crypto::EncryptionBackend> backend,
                           crypto::PublicKey client_pk, fm::Budget budget,
                           std::uint64_t seed)
    : index_(std::move(index)),
      backend_(std::move(backend)),
      client_pk_(std::move(client_pk)),
      budget_(budget),
      remaining_(budget.count),
      size_(index_->text_len + 1),
      rng_state_(seed) {}

SessionParams ServerEngine::params() const {
  SessionParams p;
  p.size = size_;
  p.alphabet = index_->alphabet;
  p.ciphertext_len = static_cast<std::uint32_t>(backend_->ciphertext_len());
  p.budget = budget_;
  return p;
}

void ServerEngine::set_offset_source(std::function<std::uint32_t(std::uint32_t)> source) {
  offset_source_ = std::move(source);
}

std::uint32_t ServerEngine::draw_offset() {
  std::uint32_t r;
  if (offset_source_) {
    r = offset_source_(size_) % size_;
  } else {
    // splitmix64 with rejection keeps the draw uniform on [0, size).
    auto next = [this] {
      std::uint64_t z = (rng_state_ += 0x9e3779b97f4a7c15ULL);
      z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
      z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
      return z ^ (z >> 31);
    };
    const std::uint64_t bound = size_;
    const std::uint64_t cutoff = (0 - bound) % bound;
    std::uint64_t raw;
    do {
      raw = next();
    } while (raw < cutoff);
    r = static_cast<std::uint32_t>(raw % bound);
  }
  history_.push_back(r);
  return r;
}

SessionAbort ServerEngine::abort_session(std::uint8_t code, std::string reason) {
  dead_ = true;
  return SessionAbort{code, std::move(reason)};
}

PlfOutcome ServerEngine::handle(const PlfRequest& request) {
  if (dead_) return abort_session(kAbortProtocol, "session is aborted");

  const int width = index_->alphabet.width;
  if (request.row != expected_row_)
    return abort_session(kAbortProtocol,
                         "expected row " + std::to_string(expected_row_) + ", got " +
                             std::to_string(request.row));
  if (request.undo && request.row != 0)
    return abort_session(kAbortProtocol, "undo is only valid on row 0");
  if (request.lower.size() != 2 * size_ || request.upper.size() != 2 * size_)
    return abort_session(kAbortProtocol, "query vector has the wrong length");

  if (request.undo) {
    if (!budget_.unlimited && remaining_ == 0)
      return abort_session(kAbortBudget, "mismatch budget exhausted");
    if (!budget_.unlimited) --remaining_;
    offset_ = saved_offset_;
  } else if (request.row == 0) {
    saved_offset_ = offset_;
  }

  // Undo the rotation the client's endpoints carry, on the plaintext side:
  // slot j of each half answers with the rank at j - offset.
  const auto& ranks = index_->matrix.ranks01[request.row];
  std::vector<std::uint32_t> derotated(2 * size_);
  const std::uint32_t shift = offset_ % size_;
  for (std::uint32_t half = 0; half < 2; ++half)
    for (std::uint32_t j = 0; j < size_; ++j)
      derotated[half * size_ + j] = ranks[half * size_ + (j + size_ - shift) % size_];

  // Both endpoints are re-rotated by one fresh offset so the rotation
  // cancels in endpoint differences. Each mask is a fresh encryption; adding
  // it also rerandomizes the inner product.
  const std::uint32_t fresh = draw_offset();
  PlfResponse response;
  response.lower = backend_->add(crypto::dot_product(*backend_, request.lower, derotated),
                                 backend_->encrypt(client_pk_, fresh));
  response.upper = backend_->add(crypto::dot_product(*backend_, request.upper, derotated),
                                 backend_->encrypt(client_pk_, fresh));

  offset_ = fresh;
  expected_row_ = static_cast<std::uint8_t>((request.row + 1) % width);
  return response;
}

ClientEngine::ClientEngine(SessionParams params,
                           std::shared_ptr<const crypto::EncryptionBackend> backend,
                           crypto::KeyPair keys)
    : params_(std::move(params)), backend_(std::move(backend)), keys_(std::move(keys)) {}

void ClientEngine::observe_decrypts(std::function<void(std::uint32_t, std::uint32_t)> hook) {
  observe_ = std::move(hook);
}

fm::Alignment ClientEngine::run(const std::vector<std::string>& trace,
                                const Exchange& exchange) {
  std::vector<std::uint16_t> query = model::encode_trace(params_.alphabet, trace);
  query.push_back(params_.alphabet.separator());

  const std::uint32_t m = params_.size;
  std::uint32_t lower = 0, upper = m - 1;  // the full interval, unrotated
  bool pending_undo = false;
  fm::Alignment out;

  for (std::size_t i = query.size(); i-- > 0;) {
    const std::uint16_t c = query[i];
    const std::uint32_t saved_lower = lower, saved_upper = upper;

    for (int r = 0; r < params_.alphabet.width; ++r) {
      PlfRequest request;
      request.row = static_cast<std::uint8_t>(r);
      request.undo = pending_undo && r == 0;
      const int bit = (c >> r) & 1;
      request.lower = pack(*backend_, keys_.pk, m, lower, bit);
      request.upper = pack(*backend_, keys_.pk, m, upper, bit);

      PlfOutcome outcome = exchange(request);
      if (auto* abort = std::get_if<SessionAbort>(&outcome)) {
        if (abort->code == kAbortBudget)
          throw BudgetExhaustedError("server aborted: " + abort->reason);
        throw ProtocolError("server aborted: " + abort->reason);
      }
      if (r == 0) pending_undo = false;

      const auto& response = std::get<PlfResponse>(outcome);
      const auto dec_lower =
          static_cast<std::uint32_t>(backend_->decrypt_small(keys_.sk, response.lower));
      const auto dec_upper =
          static_cast<std::uint32_t>(backend_->decrypt_small(keys_.sk, response.upper));
      if (observe_) observe_(dec_lower, dec_upper);
      lower = dec_lower % m;
      upper = dec_upper % m;
    }

    if (emptiness_check(lower, upper, m)) {
      lower = saved_lower;
      upper = saved_upper;
      pending_undo = true;
      if (i < trace.size()) out.moves.push_back({fm::MoveKind::Log, trace[i]});
    } else {
      if (i < trace.size()) out.moves.push_back({fm::MoveKind::Sync, trace[i]});
    }
  }

  std::reverse(out.moves.begin(), out.moves.end());
  for (const auto& mv : out.moves)
    if (mv.kind == fm::MoveKind::Log) ++out.cost;
  return out;
}

}  // namespace privalign::proto
