#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "privalign/protocol.hpp"

namespace privalign::net {

inline constexpr std::uint8_t kProtocolVersion = 1;
inline constexpr std::uint32_t kDefaultMaxFrame = 64u << 20;

// Framing: a 4-byte big-endian payload length (the type byte counts), the
// type byte, then the body. Body integers are big-endian; ciphertexts are
// raw bytes of the session's declared length.

enum class MsgType : std::uint8_t {
  Hello = 1,      // version, backend name, client public key
  Accept = 2,     // session parameters
  RankQuery = 3,  // proto::PlfRequest
  RankReply = 4,  // proto::PlfResponse
  Abort = 5,      // proto::SessionAbort
  Bye = 6,
};

struct Hello {
  std::uint8_t version = kProtocolVersion;
  std::string backend;
  crypto::PublicKey pk;
};

struct Accept {
  proto::SessionParams params;
};

struct Bye {};

using Message =
    std::variant<Hello, Accept, proto::PlfRequest, proto::PlfResponse,
                 proto::SessionAbort, Bye>;

// Session facts the codec needs: query vectors are 2 * size ciphertexts and
// ciphertexts have a fixed length, both known only after the handshake.
struct Codec {
  std::uint32_t size = 0;
  std::uint32_t ciphertext_len = 0;
  std::uint32_t max_frame = kDefaultMaxFrame;
};

std::vector<std::uint8_t> encode_frame(const Message& msg, const Codec& codec);

// Decodes one full frame (header included). Throws ProtocolError on unknown
// types, length mismatches, trailing bytes, or frames above max_frame.
Message decode_frame(std::span<const std::uint8_t> frame, const Codec& codec);

struct ServerOptions {
  fm::Budget budget = fm::Budget::limited(16);
  std::string allowed_backend;  // empty accepts any registered backend
  std::uint32_t max_frame = kDefaultMaxFrame;
  std::optional<std::uint64_t> seed;  // deterministic per-session offsets
  std::function<std::uint32_t(std::uint32_t)> offset_source;  // test hook
};

// Serves one index. Every connection runs its own session engine on its own
// thread; the index is shared read-only.
class Server {
 public:
  Server(std::shared_ptr<const fm::FmIndex> index, ServerOptions options);
  ~Server();

  Server(const Server&) = delete;
  Server& operator=(const Server&) = delete;

  // addr is "host:port"; port 0 picks an ephemeral port.
  void start(const std::string& addr);
  std::uint16_t port() const;
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

struct ConnectOptions {
  std::string backend = "group";
  std::optional<std::uint64_t> max_plain;  // defaults to what the session needs
  std::uint32_t max_frame = kDefaultMaxFrame;
};

// One session over one TCP connection. check() may be called once; the
// session's interval state is not reusable across traces.
class Connection {
 public:
  static Connection open(const std::string& addr, const ConnectOptions& options = {});
  ~Connection();

  Connection(Connection&&) noexcept;
  Connection& operator=(Connection&&) noexcept;

  const proto::SessionParams& params() const;
  const crypto::EncryptionBackend& backend() const;

  fm::Alignment check(const std::vector<std::string>& trace);

  // The raw request/response callback, for driving a ClientEngine directly.
  proto::Exchange exchange();

  // Sends Bye and closes. The destructor does the same silently.
  void close();

 private:
  Connection();
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace privalign::net
