#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <sys/socket.h>
#include <unistd.h>

#include <atomic>
#include <condition_variable>
#include <cerrno>
#include <cstring>
#include <map>
#include <mutex>
#include <random>
#include <thread>
#include <utility>

#include "privalign/errors.hpp"
#include "privalign/net.hpp"

namespace privalign::net {

namespace {

std::string errno_text(const char* what) {
  return std::string(what) + ": " + std::strerror(errno);
}

struct Fd {
  int fd = -1;

  Fd() = default;
  explicit Fd(int f) : fd(f) {}
  Fd(Fd&& other) noexcept : fd(std::exchange(other.fd, -1)) {}
  Fd& operator=(Fd&& other) noexcept {
    if (this != &other) {
      reset();
      fd = std::exchange(other.fd, -1);
    }
    return *this;
  }
  ~Fd() { reset(); }

  void reset() {
    if (fd >= 0) ::close(fd);
    fd = -1;
  }
  bool valid() const { return fd >= 0; }
};

void write_all(int fd, const std::uint8_t* data, std::size_t len) {
  while (len > 0) {
    ssize_t n = ::send(fd, data, len, MSG_NOSIGNAL);
    if (n <= 0) {
      if (n < 0 && errno == EINTR) continue;
      throw TransportError(errno_text("send failed"));
    }
    data += n;
    len -= static_cast<std::size_t>(n);
  }
}

// Returns false on a clean close before the first byte; throws on a close
// mid-read.
bool read_full(int fd, std::uint8_t* data, std::size_t len, bool eof_ok) {
  std::size_t got = 0;
  while (got < len) {
    ssize_t n = ::recv(fd, data + got, len - got, 0);
    if (n == 0) {
      if (got == 0 && eof_ok) return false;
      throw TransportError("connection closed mid-frame");
    }
    if (n < 0) {
      if (errno == EINTR) continue;
      throw TransportError(errno_text("recv failed"));
    }
    got += static_cast<std::size_t>(n);
  }
  return true;
}

std::optional<std::vector<std::uint8_t>> recv_frame(int fd, std::uint32_t max_frame) {
  std::uint8_t header[4];
  if (!read_full(fd, header, 4, true)) return std::nullopt;
  const std::uint32_t len = (std::uint32_t{header[0]} << 24) | (std::uint32_t{header[1]} << 16) |
                            (std::uint32_t{header[2]} << 8) | std::uint32_t{header[3]};
  if (len == 0) throw ProtocolError("frame without a type byte");
  if (len > max_frame)
    throw ProtocolError("frame of " + std::to_string(len) + " bytes exceeds the limit");
  std::vector<std::uint8_t> frame(4 + len);
  std::memcpy(frame.data(), header, 4);
  read_full(fd, frame.data() + 4, len, false);
  return frame;
}

void send_message(int fd, const Message& msg, const Codec& codec) {
  auto frame = encode_frame(msg, codec);
  write_all(fd, frame.data(), frame.size());
}

std::pair<std::string, std::string> split_addr(const std::string& addr) {
  auto colon = addr.rfind(':');
  if (colon == std::string::npos)
    throw InputError("address must look like host:port, got: " + addr);
  std::string host = addr.substr(0, colon);
  std::string port = addr.substr(colon + 1);
  if (port.empty()) throw InputError("address has no port: " + addr);
  if (host.empty()) host = "0.0.0.0";
  return {host, port};
}

Fd tcp_listen(const std::string& addr) {
  auto [host, port] = split_addr(addr);
  addrinfo hints{};
  hints.ai_family = AF_UNSPEC;
  hints.ai_socktype = SOCK_STREAM;
  hints.ai_flags = AI_PASSIVE;
  addrinfo* res = nullptr;
  if (int rc = ::getaddrinfo(host.c_str(), port.c_str(), &hints, &res); rc != 0)
    throw TransportError("cannot resolve " + addr + ": " + gai_strerror(rc));
  Fd fd;
  for (addrinfo* ai = res; ai; ai = ai->ai_next) {
    Fd candidate(::socket(ai->ai_family, ai->ai_socktype, ai->ai_protocol));
    if (!candidate.valid()) continue;
    int one = 1;
    ::setsockopt(candidate.fd, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
    if (::bind(candidate.fd, ai->ai_addr, ai->ai_addrlen) == 0 &&
        ::listen(candidate.fd, 16) == 0) {
      fd = std::move(candidate);
      break;
    }
  }
  ::freeaddrinfo(res);
  if (!fd.valid()) throw TransportError("cannot listen on " + addr);
  return fd;
}

Fd tcp_connect(const std::string& addr) {
  auto [host, port] = split_addr(addr);
  addrinfo hints{};
  hints.ai_family = AF_UNSPEC;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* res = nullptr;
  if (int rc = ::getaddrinfo(host.c_str(), port.c_str(), &hints, &res); rc != 0)
    throw TransportError("cannot resolve " + addr + ": " + gai_strerror(rc));
  Fd fd;
  for (addrinfo* ai = res; ai; ai = ai->ai_next) {
    Fd candidate(::socket(ai->ai_family, ai->ai_socktype, ai->ai_protocol));
    if (!candidate.valid()) continue;
    if (::connect(candidate.fd, ai->ai_addr, ai->ai_addrlen) == 0) {
      fd = std::move(candidate);
      break;
    }
  }
  ::freeaddrinfo(res);
  if (!fd.valid()) throw TransportError("cannot connect to " + addr);
  int one = 1;
  ::setsockopt(fd.fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
  return fd;
}

// Big-endian body primitives.

void put_u8(std::vector<std::uint8_t>& out, std::uint8_t v) { out.push_back(v); }

void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v >> 8));
  out.push_back(static_cast<std::uint8_t>(v));
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  out.push_back(static_cast<std::uint8_t>(v >> 24));
  out.push_back(static_cast<std::uint8_t>(v >> 16));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
  out.push_back(static_cast<std::uint8_t>(v));
}

void put_bytes16(std::vector<std::uint8_t>& out, std::span<const std::uint8_t> bytes) {
  if (bytes.size() > 0xffff) throw ProtocolError("field too long for the wire");
  put_u16(out, static_cast<std::uint16_t>(bytes.size()));
  out.insert(out.end(), bytes.begin(), bytes.end());
}

void put_string16(std::vector<std::uint8_t>& out, const std::string& s) {
  put_bytes16(out, {reinterpret_cast<const std::uint8_t*>(s.data()), s.size()});
}

struct Reader {
  std::span<const std::uint8_t> data;
  std::size_t pos = 0;

  std::uint8_t u8() {
    need(1);
    return data[pos++];
  }
  std::uint16_t u16() {
    need(2);
    std::uint16_t v = static_cast<std::uint16_t>((data[pos] << 8) | data[pos + 1]);
    pos += 2;
    return v;
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = (std::uint32_t{data[pos]} << 24) | (std::uint32_t{data[pos + 1]} << 16) |
                      (std::uint32_t{data[pos + 2]} << 8) | std::uint32_t{data[pos + 3]};
    pos += 4;
    return v;
  }
  std::vector<std::uint8_t> bytes(std::size_t n) {
    need(n);
    std::vector<std::uint8_t> out(data.begin() + static_cast<std::ptrdiff_t>(pos),
                                  data.begin() + static_cast<std::ptrdiff_t>(pos + n));
    pos += n;
    return out;
  }
  std::string string16() {
    std::size_t n = u16();
    auto b = bytes(n);
    return {b.begin(), b.end()};
  }
  void finish() const {
    if (pos != data.size()) throw ProtocolError("trailing bytes in frame");
  }
  void need(std::size_t n) const {
    if (pos + n > data.size()) throw ProtocolError("frame body is truncated");
  }
};

constexpr std::uint32_t kUnlimitedBudget = 0xffffffffu;

void put_ciphertexts(std::vector<std::uint8_t>& out,
                     const std::vector<crypto::Ciphertext>& cts, const Codec& codec,
                     std::size_t expected_count) {
  if (codec.size == 0 || codec.ciphertext_len == 0)
    throw ProtocolError("session codec is not initialized for ciphertext frames");
  if (cts.size() != expected_count)
    throw ProtocolError("query vector has the wrong length");
  for (const auto& ct : cts) {
    if (ct.bytes.size() != codec.ciphertext_len)
      throw ProtocolError("ciphertext has the wrong length for this session");
    out.insert(out.end(), ct.bytes.begin(), ct.bytes.end());
  }
}

std::vector<crypto::Ciphertext> get_ciphertexts(Reader& r, const Codec& codec,
                                                std::size_t count) {
  std::vector<crypto::Ciphertext> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) out.push_back({r.bytes(codec.ciphertext_len)});
  return out;
}

}  // namespace

std::vector<std::uint8_t> encode_frame(const Message& msg, const Codec& codec) {
  std::vector<std::uint8_t> body;
  MsgType type;

  if (const auto* hello = std::get_if<Hello>(&msg)) {
    type = MsgType::Hello;
    put_u8(body, hello->version);
    put_string16(body, hello->backend);
    put_bytes16(body, hello->pk.bytes);
  } else if (const auto* accept = std::get_if<Accept>(&msg)) {
    type = MsgType::Accept;
    const auto& p = accept->params;
    put_u32(body, p.size);
    put_u8(body, static_cast<std::uint8_t>(p.alphabet.width));
    put_u32(body, p.ciphertext_len);
    put_u32(body, p.budget.unlimited ? kUnlimitedBudget : p.budget.count);
    put_u32(body, static_cast<std::uint32_t>(p.alphabet.symbols.size()));
    for (const auto& s : p.alphabet.symbols) put_string16(body, s);
  } else if (const auto* query = std::get_if<proto::PlfRequest>(&msg)) {
    type = MsgType::RankQuery;
    put_u8(body, query->row);
    put_u8(body, query->undo ? 1 : 0);
    put_ciphertexts(body, query->lower, codec, 2 * codec.size);
    put_ciphertexts(body, query->upper, codec, 2 * codec.size);
  } else if (const auto* reply = std::get_if<proto::PlfResponse>(&msg)) {
    type = MsgType::RankReply;
    if (codec.ciphertext_len == 0 || reply->lower.bytes.size() != codec.ciphertext_len ||
        reply->upper.bytes.size() != codec.ciphertext_len)
      throw ProtocolError("reply ciphertexts have the wrong length for this session");
    body.insert(body.end(), reply->lower.bytes.begin(), reply->lower.bytes.end());
    body.insert(body.end(), reply->upper.bytes.begin(), reply->upper.bytes.end());
  } else if (const auto* abort = std::get_if<proto::SessionAbort>(&msg)) {
    type = MsgType::Abort;
    put_u8(body, abort->code);
    put_string16(body, abort->reason);
  } else {
    type = MsgType::Bye;
  }

  const std::uint64_t payload = 1 + body.size();
  if (payload > codec.max_frame) throw ProtocolError("frame exceeds the size limit");
  std::vector<std::uint8_t> frame;
  frame.reserve(4 + payload);
  put_u32(frame, static_cast<std::uint32_t>(payload));
  put_u8(frame, static_cast<std::uint8_t>(type));
  frame.insert(frame.end(), body.begin(), body.end());
  return frame;
}

Message decode_frame(std::span<const std::uint8_t> frame, const Codec& codec) {
  if (frame.size() < 5) throw ProtocolError("frame is shorter than its header");
  Reader header{frame.subspan(0, 4)};
  const std::uint32_t len = header.u32();
  if (len > codec.max_frame) throw ProtocolError("frame exceeds the size limit");
  if (frame.size() != std::size_t{4} + len)
    throw ProtocolError("frame length field disagrees with the frame");

  const auto type = static_cast<MsgType>(frame[4]);
  Reader r{frame.subspan(5)};

  switch (type) {
    case MsgType::Hello: {
      Hello hello;
      hello.version = r.u8();
      hello.backend = r.string16();
      hello.pk.bytes = r.bytes(r.u16());
      r.finish();
      return hello;
    }
    case MsgType::Accept: {
      Accept accept;
      auto& p = accept.params;
      p.size = r.u32();
      p.alphabet.width = r.u8();
      p.ciphertext_len = r.u32();
      std::uint32_t budget = r.u32();
      p.budget = budget == kUnlimitedBudget ? fm::Budget::infinite()
                                            : fm::Budget::limited(budget);
      std::uint32_t count = r.u32();
      if (count < 2 || count > 0xffff) throw ProtocolError("implausible alphabet size");
      for (std::uint32_t i = 0; i < count; ++i) p.alphabet.symbols.push_back(r.string16());
      r.finish();
      if (p.size == 0 || p.alphabet.symbols.front() != "$" || p.alphabet.symbols.back() != ";")
        throw ProtocolError("malformed session parameters");
      return accept;
    }
    case MsgType::RankQuery: {
      if (codec.size == 0 || codec.ciphertext_len == 0)
        throw ProtocolError("rank query before the session was established");
      proto::PlfRequest query;
      query.row = r.u8();
      query.undo = r.u8() != 0;
      query.lower = get_ciphertexts(r, codec, 2 * codec.size);
      query.upper = get_ciphertexts(r, codec, 2 * codec.size);
      r.finish();
      return query;
    }
    case MsgType::RankReply: {
      if (codec.ciphertext_len == 0)
        throw ProtocolError("rank reply before the session was established");
      proto::PlfResponse reply;
      reply.lower.bytes = r.bytes(codec.ciphertext_len);
      reply.upper.bytes = r.bytes(codec.ciphertext_len);
      r.finish();
      return reply;
    }
    case MsgType::Abort: {
      proto::SessionAbort abort;
      abort.code = r.u8();
      abort.reason = r.string16();
      r.finish();
      return abort;
    }
    case MsgType::Bye: {
      r.finish();
      return Bye{};
    }
  }
  throw ProtocolError("unknown frame type " + std::to_string(frame[4]));
}

// Server

struct Server::Impl {
  std::shared_ptr<const fm::FmIndex> index;
  ServerOptions opts;
  Fd listener;
  std::uint16_t bound_port = 0;
  std::jthread acceptor;
  std::atomic<bool> stopping{false};

  std::mutex mu;
  std::condition_variable idle;
  std::map<std::uint64_t, int> live_fds;
  std::uint64_t next_session = 0;
  int active = 0;

  void accept_loop() {
    while (!stopping.load()) {
      int fd = ::accept(listener.fd, nullptr, nullptr);
      if (fd < 0) {
        if (errno == EINTR) continue;
        break;  // listener was shut down
      }
      int one = 1;
      ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
      std::uint64_t id;
      {
        std::lock_guard lock(mu);
        id = next_session++;
        live_fds.emplace(id, fd);
        ++active;
      }
      std::thread([this, fd, id] {
        session(fd, id);
        std::lock_guard lock(mu);
        live_fds.erase(id);
        if (--active == 0) idle.notify_all();
      }).detach();
    }
  }

  void session(int fd, std::uint64_t id) {
    Fd sock(fd);
    Codec codec{0, 0, opts.max_frame};
    try {
      auto frame = recv_frame(sock.fd, codec.max_frame);
      if (!frame) return;
      Message msg = decode_frame(*frame, codec);
      auto* hello = std::get_if<Hello>(&msg);
      if (!hello) {
        send_message(sock.fd, proto::SessionAbort{proto::kAbortProtocol, "expected hello"},
                     codec);
        return;
      }
      if (hello->version != kProtocolVersion) {
        send_message(sock.fd,
                     proto::SessionAbort{proto::kAbortProtocol,
                                         "unsupported protocol version"},
                     codec);
        return;
      }
      if (!crypto::backend_known(hello->backend) ||
          (!opts.allowed_backend.empty() && hello->backend != opts.allowed_backend)) {
        send_message(sock.fd,
                     proto::SessionAbort{proto::kAbortProtocol,
                                         "backend not accepted: " + hello->backend},
                     codec);
        return;
      }

      const std::uint32_t size = index->text_len + 1;
      std::shared_ptr<const crypto::EncryptionBackend> backend =
          crypto::make_backend(hello->backend, 3ull * size);
      try {
        backend->encrypt(hello->pk, 0);
      } catch (const CryptoError& e) {
        send_message(sock.fd,
                     proto::SessionAbort{proto::kAbortProtocol,
                                         std::string("public key rejected: ") + e.what()},
                     codec);
        return;
      }

      proto::ServerEngine engine(index, backend, hello->pk, opts.budget,
                                 opts.seed ? *opts.seed + id
                                           : std::random_device{}());
      if (opts.offset_source) engine.set_offset_source(opts.offset_source);

      codec.size = size;
      codec.ciphertext_len = static_cast<std::uint32_t>(backend->ciphertext_len());
      send_message(sock.fd, Accept{engine.params()}, codec);

      while (true) {
        auto next = recv_frame(sock.fd, codec.max_frame);
        if (!next) return;
        Message incoming = decode_frame(*next, codec);
        if (std::holds_alternative<Bye>(incoming)) return;
        auto* query = std::get_if<proto::PlfRequest>(&incoming);
        if (!query) {
          send_message(sock.fd,
                       proto::SessionAbort{proto::kAbortProtocol, "unexpected message"},
                       codec);
          return;
        }
        proto::PlfOutcome outcome = engine.handle(*query);
        if (auto* reply = std::get_if<proto::PlfResponse>(&outcome)) {
          send_message(sock.fd, *reply, codec);
        } else {
          send_message(sock.fd, std::get<proto::SessionAbort>(outcome), codec);
          return;
        }
      }
    } catch (const ProtocolError& e) {
      try {
        send_message(sock.fd, proto::SessionAbort{proto::kAbortProtocol, e.what()}, codec);
      } catch (...) {
      }
    } catch (const std::exception&) {
      // Transport failures and crypto rejections end the session silently.
    }
  }
};

Server::Server(std::shared_ptr<const fm::FmIndex> index, ServerOptions options)
    : impl_(std::make_unique<Impl>()) {
  impl_->index = std::move(index);
  impl_->opts = std::move(options);
}

Server::~Server() {
  if (impl_) stop();
}

void Server::start(const std::string& addr) {
  impl_->listener = tcp_listen(addr);
  sockaddr_storage ss{};
  socklen_t len = sizeof(ss);
  if (::getsockname(impl_->listener.fd, reinterpret_cast<sockaddr*>(&ss), &len) == 0) {
    if (ss.ss_family == AF_INET)
      impl_->bound_port = ntohs(reinterpret_cast<sockaddr_in*>(&ss)->sin_port);
    else if (ss.ss_family == AF_INET6)
      impl_->bound_port = ntohs(reinterpret_cast<sockaddr_in6*>(&ss)->sin6_port);
  }
  impl_->acceptor = std::jthread([this] { impl_->accept_loop(); });
}

std::uint16_t Server::port() const { return impl_->bound_port; }

void Server::stop() {
  if (impl_->stopping.exchange(true)) return;
  if (impl_->listener.valid()) ::shutdown(impl_->listener.fd, SHUT_RDWR);
  if (impl_->acceptor.joinable()) impl_->acceptor.join();
  impl_->listener.reset();
  std::unique_lock lock(impl_->mu);
  for (auto& [id, fd] : impl_->live_fds) ::shutdown(fd, SHUT_RDWR);
  impl_->idle.wait(lock, [&] { return impl_->active == 0; });
}

// Client

struct Connection::Impl {
  Fd sock;
  Codec codec;
  proto::SessionParams params;
  std::shared_ptr<const crypto::EncryptionBackend> backend;
  crypto::KeyPair keys;
  bool used = false;
};

Connection::Connection() = default;
Connection::Connection(Connection&&) noexcept = default;
Connection& Connection::operator=(Connection&&) noexcept = default;

Connection::~Connection() {
  if (impl_ && impl_->sock.valid()) {
    try {
      send_message(impl_->sock.fd, Bye{}, impl_->codec);
    } catch (...) {
    }
  }
}

Connection Connection::open(const std::string& addr, const ConnectOptions& options) {
  Connection conn;
  conn.impl_ = std::make_unique<Impl>();
  Impl& impl = *conn.impl_;

  impl.sock = tcp_connect(addr);
  impl.codec = Codec{0, 0, options.max_frame};
  impl.keys = crypto::make_backend(options.backend, 1)->keygen();

  send_message(impl.sock.fd, Hello{kProtocolVersion, options.backend, impl.keys.pk},
               impl.codec);

  auto frame = recv_frame(impl.sock.fd, impl.codec.max_frame);
  if (!frame) throw TransportError("server closed the connection during the handshake");
  Message msg = decode_frame(*frame, impl.codec);
  if (auto* abort = std::get_if<proto::SessionAbort>(&msg))
    throw ProtocolError("server rejected the session: " + abort->reason);
  auto* accept = std::get_if<Accept>(&msg);
  if (!accept) throw ProtocolError("expected session parameters after hello");
  impl.params = accept->params;

  // Largest value a reply can decode to: a rank plus the masking offset,
  // bounded by twice the size plus the size itself.
  const std::uint64_t required = 3ull * impl.params.size;
  const std::uint64_t chosen = options.max_plain.value_or(required);
  if (chosen < required)
    throw ProtocolError("backend plaintext bound " + std::to_string(chosen) +
                        " is below what this session needs (" + std::to_string(required) +
                        ")");
  impl.backend = crypto::make_backend(options.backend, chosen);
  if (impl.backend->ciphertext_len() != impl.params.ciphertext_len)
    throw ProtocolError("session ciphertext length disagrees with the backend");

  impl.codec.size = impl.params.size;
  impl.codec.ciphertext_len = impl.params.ciphertext_len;
  return conn;
}

const proto::SessionParams& Connection::params() const { return impl_->params; }

const crypto::EncryptionBackend& Connection::backend() const { return *impl_->backend; }

proto::Exchange Connection::exchange() {
  Impl* impl = impl_.get();
  return [impl](const proto::PlfRequest& request) -> proto::PlfOutcome {
    send_message(impl->sock.fd, request, impl->codec);
    auto frame = recv_frame(impl->sock.fd, impl->codec.max_frame);
    if (!frame) throw TransportError("connection closed mid-session");
    Message msg = decode_frame(*frame, impl->codec);
    if (auto* reply = std::get_if<proto::PlfResponse>(&msg)) return *reply;
    if (auto* abort = std::get_if<proto::SessionAbort>(&msg)) return *abort;
    throw ProtocolError("unexpected message in place of a rank reply");
  };
}

fm::Alignment Connection::check(const std::vector<std::string>& trace) {
  if (impl_->used) throw ProtocolError("session already ran a trace");
  impl_->used = true;
  proto::ClientEngine engine(impl_->params, impl_->backend, impl_->keys);
  return engine.run(trace, exchange());
}

void Connection::close() {
  if (!impl_ || !impl_->sock.valid()) return;
  try {
    send_message(impl_->sock.fd, Bye{}, impl_->codec);
  } catch (...) {
  }
  impl_->sock.reset();
}

}  // namespace privalign::net
