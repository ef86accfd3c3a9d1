#include <doctest.h>

#include <arpa/inet.h>
#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cstring>
#include <memory>
#include <thread>
#include <vector>

#include "oracles.hpp"
#include "privalign/errors.hpp"
#include "privalign/net.hpp"

using namespace privalign;

namespace {

std::shared_ptr<const fm::FmIndex> example_index() {
  return std::make_shared<const fm::FmIndex>(
      fm::build_index(oracle::example_text(), oracle::example_alphabet()));
}

crypto::Ciphertext stub_ct(std::uint32_t len, std::uint8_t fill) {
  crypto::Ciphertext ct;
  ct.bytes.assign(len, fill);
  return ct;
}

// Minimal raw client for handshake-level misbehavior.
struct RawClient {
  int fd = -1;

  explicit RawClient(std::uint16_t port) {
    fd = ::socket(AF_INET, SOCK_STREAM, 0);
    REQUIRE(fd >= 0);
    sockaddr_in sa{};
    sa.sin_family = AF_INET;
    sa.sin_port = htons(port);
    sa.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
    REQUIRE(::connect(fd, reinterpret_cast<sockaddr*>(&sa), sizeof(sa)) == 0);
  }
  ~RawClient() {
    if (fd >= 0) ::close(fd);
  }

  void send_frame(const std::vector<std::uint8_t>& frame) {
    REQUIRE(::send(fd, frame.data(), frame.size(), 0) ==
            static_cast<ssize_t>(frame.size()));
  }

  std::vector<std::uint8_t> recv_frame() {
    std::uint8_t header[4];
    REQUIRE(recv_all(header, 4));
    const std::uint32_t len = (std::uint32_t{header[0]} << 24) |
                              (std::uint32_t{header[1]} << 16) |
                              (std::uint32_t{header[2]} << 8) | std::uint32_t{header[3]};
    std::vector<std::uint8_t> frame(4 + len);
    std::memcpy(frame.data(), header, 4);
    REQUIRE(recv_all(frame.data() + 4, len));
    return frame;
  }

  bool recv_all(std::uint8_t* data, std::size_t len) {
    std::size_t got = 0;
    while (got < len) {
      ssize_t n = ::recv(fd, data + got, len - got, 0);
      if (n <= 0) return false;
      got += static_cast<std::size_t>(n);
    }
    return true;
  }
};

}  // namespace

TEST_CASE("frames roundtrip through the codec") {
  net::Codec codec{4, 8, net::kDefaultMaxFrame};

  SUBCASE("hello") {
    net::Hello hello;
    hello.backend = "group";
    hello.pk.bytes = {1, 2, 3, 4, 5};
    auto msg = net::decode_frame(net::encode_frame(hello, codec), codec);
    auto& got = std::get<net::Hello>(msg);
    CHECK(got.version == net::kProtocolVersion);
    CHECK(got.backend == "group");
    CHECK(got.pk.bytes == hello.pk.bytes);
  }

  SUBCASE("accept") {
    net::Accept accept;
    accept.params.size = 12;
    accept.params.alphabet = oracle::example_alphabet();
    accept.params.ciphertext_len = 64;
    accept.params.budget = fm::Budget::limited(9);
    auto msg = net::decode_frame(net::encode_frame(accept, codec), codec);
    auto& got = std::get<net::Accept>(msg);
    CHECK(got.params.size == 12);
    CHECK(got.params.alphabet.symbols == accept.params.alphabet.symbols);
    CHECK(got.params.alphabet.width == 3);
    CHECK(got.params.ciphertext_len == 64);
    CHECK_FALSE(got.params.budget.unlimited);
    CHECK(got.params.budget.count == 9);

    accept.params.budget = fm::Budget::infinite();
    auto msg2 = net::decode_frame(net::encode_frame(accept, codec), codec);
    CHECK(std::get<net::Accept>(msg2).params.budget.unlimited);
  }

  SUBCASE("rank query") {
    proto::PlfRequest query;
    query.row = 2;
    query.undo = true;
    for (int i = 0; i < 8; ++i) {
      query.lower.push_back(stub_ct(8, static_cast<std::uint8_t>(i)));
      query.upper.push_back(stub_ct(8, static_cast<std::uint8_t>(100 + i)));
    }
    auto msg = net::decode_frame(net::encode_frame(query, codec), codec);
    auto& got = std::get<proto::PlfRequest>(msg);
    CHECK(got.row == 2);
    CHECK(got.undo);
    REQUIRE(got.lower.size() == 8);
    REQUIRE(got.upper.size() == 8);
    CHECK(got.lower[3].bytes == query.lower[3].bytes);
    CHECK(got.upper[7].bytes == query.upper[7].bytes);
  }

  SUBCASE("rank reply") {
    proto::PlfResponse reply;
    reply.lower = stub_ct(8, 0xaa);
    reply.upper = stub_ct(8, 0xbb);
    auto msg = net::decode_frame(net::encode_frame(reply, codec), codec);
    auto& got = std::get<proto::PlfResponse>(msg);
    CHECK(got.lower.bytes == reply.lower.bytes);
    CHECK(got.upper.bytes == reply.upper.bytes);
  }

  SUBCASE("abort") {
    proto::SessionAbort abort{proto::kAbortBudget, "spent"};
    auto msg = net::decode_frame(net::encode_frame(abort, codec), codec);
    auto& got = std::get<proto::SessionAbort>(msg);
    CHECK(got.code == proto::kAbortBudget);
    CHECK(got.reason == "spent");
  }

  SUBCASE("bye") {
    auto frame = net::encode_frame(net::Bye{}, codec);
    CHECK(frame == std::vector<std::uint8_t>{0, 0, 0, 1, 6});
    CHECK(std::holds_alternative<net::Bye>(net::decode_frame(frame, codec)));
  }
}

TEST_CASE("encoding enforces session shapes") {
  net::Codec codec{4, 8, net::kDefaultMaxFrame};

  proto::PlfRequest query;
  query.row = 0;
  for (int i = 0; i < 8; ++i) {
    query.lower.push_back(stub_ct(8, 0));
    query.upper.push_back(stub_ct(8, 0));
  }
  query.lower.pop_back();  // 7 of 8
  CHECK_THROWS_AS(net::encode_frame(query, codec), ProtocolError);

  query.lower.push_back(stub_ct(4, 0));  // wrong ciphertext length
  CHECK_THROWS_AS(net::encode_frame(query, codec), ProtocolError);

  net::Codec no_session{0, 0, net::kDefaultMaxFrame};
  proto::PlfResponse reply;
  reply.lower = stub_ct(8, 0);
  reply.upper = stub_ct(8, 0);
  CHECK_THROWS_AS(net::encode_frame(reply, no_session), ProtocolError);

  net::Codec tiny{4, 8, 16};
  CHECK_THROWS_AS(net::encode_frame(query, tiny), ProtocolError);
}

TEST_CASE("decoding rejects malformed frames") {
  net::Codec codec{4, 8, net::kDefaultMaxFrame};

  CHECK_THROWS_AS(net::decode_frame(std::vector<std::uint8_t>{0, 0, 0, 1}, codec),
                  ProtocolError);

  // unknown type
  CHECK_THROWS_AS(net::decode_frame(std::vector<std::uint8_t>{0, 0, 0, 1, 99}, codec),
                  ProtocolError);

  // length field disagrees with the actual frame size
  CHECK_THROWS_AS(net::decode_frame(std::vector<std::uint8_t>{0, 0, 0, 9, 6}, codec),
                  ProtocolError);

  // trailing bytes past the message body
  CHECK_THROWS_AS(net::decode_frame(std::vector<std::uint8_t>{0, 0, 0, 2, 6, 0}, codec),
                  ProtocolError);

  // truncated body
  CHECK_THROWS_AS(net::decode_frame(std::vector<std::uint8_t>{0, 0, 0, 2, 5, 1}, codec),
                  ProtocolError);

  // session frames before the handshake fixed the codec
  net::Codec no_session{0, 0, net::kDefaultMaxFrame};
  std::vector<std::uint8_t> query_frame{0, 0, 0, 3, 3, 0, 0};
  CHECK_THROWS_AS(net::decode_frame(query_frame, no_session), ProtocolError);

  net::Codec tiny{4, 8, 8};
  std::vector<std::uint8_t> big(4 + 9, 0);
  big[3] = 9;
  big[4] = 5;
  CHECK_THROWS_AS(net::decode_frame(big, tiny), ProtocolError);
}

TEST_CASE("sessions over loopback match local alignment") {
  net::Server server(example_index(), {});
  server.start("127.0.0.1:0");
  REQUIRE(server.port() != 0);
  const std::string addr = "127.0.0.1:" + std::to_string(server.port());

  auto local = fm::build_index(oracle::example_text(), oracle::example_alphabet());

  for (const char* backend : {"mock", "group"}) {
    net::ConnectOptions options;
    options.backend = backend;
    auto conn = net::Connection::open(addr, options);
    CHECK(conn.params().size == 12);
    CHECK(conn.params().alphabet.symbols == oracle::example_alphabet().symbols);
    CHECK_FALSE(conn.params().budget.unlimited);
    CHECK(conn.params().budget.count == 16);

    auto got = conn.check({"a", "c", "b", "d"});
    auto expected = fm::align_with_log_moves(local, {"a", "c", "b", "d"});
    CHECK(got.cost == 1);
    CHECK(got.moves == expected.moves);

    CHECK_THROWS_AS(conn.check({"a", "b", "d"}), ProtocolError);  // one trace per session
    conn.close();
  }
  server.stop();
}

TEST_CASE("parallel sessions stay independent") {
  net::ServerOptions options;
  options.budget = fm::Budget::infinite();
  net::Server server(example_index(), options);
  server.start("127.0.0.1:0");
  const std::string addr = "127.0.0.1:" + std::to_string(server.port());

  auto local = fm::build_index(oracle::example_text(), oracle::example_alphabet());
  const std::vector<std::vector<std::string>> traces{
      {"a", "b", "d"}, {"a", "c", "b", "d"}, {"a", "b", "c", "b", "d"}, {"a", "d", "d"}};

  std::vector<std::thread> workers;
  std::vector<std::size_t> costs(traces.size(), 999);
  for (std::size_t i = 0; i < traces.size(); ++i)
    workers.emplace_back([&, i] {
      net::ConnectOptions copts;
      copts.backend = "mock";
      auto conn = net::Connection::open(addr, copts);
      costs[i] = conn.check(traces[i]).cost;
      conn.close();
    });
  for (auto& w : workers) w.join();

  for (std::size_t i = 0; i < traces.size(); ++i)
    CHECK(costs[i] == fm::align_with_log_moves(local, traces[i]).cost);
  server.stop();
}

TEST_CASE("server budget aborts cross the wire") {
  net::ServerOptions options;
  options.budget = fm::Budget::limited(0);
  net::Server server(example_index(), options);
  server.start("127.0.0.1:0");
  const std::string addr = "127.0.0.1:" + std::to_string(server.port());

  net::ConnectOptions copts;
  copts.backend = "mock";
  auto conn = net::Connection::open(addr, copts);
  CHECK_THROWS_AS(conn.check({"a", "d", "d"}), BudgetExhaustedError);
  server.stop();
}

TEST_CASE("handshake rejections") {
  net::ServerOptions options;
  options.allowed_backend = "group";
  net::Server server(example_index(), options);
  server.start("127.0.0.1:0");
  const std::string addr = "127.0.0.1:" + std::to_string(server.port());

  net::ConnectOptions mock_opts;
  mock_opts.backend = "mock";
  CHECK_THROWS_AS(net::Connection::open(addr, mock_opts), ProtocolError);

  net::ConnectOptions unknown;
  unknown.backend = "bogus";
  CHECK_THROWS_AS(net::Connection::open(addr, unknown), CryptoError);

  net::ConnectOptions starved;
  starved.backend = "group";
  starved.max_plain = 5;  // the session needs 3 * 12
  CHECK_THROWS_AS(net::Connection::open(addr, starved), ProtocolError);

  server.stop();
}

TEST_CASE("handshake rejects wrong versions and non-hello openings") {
  net::Server server(example_index(), {});
  server.start("127.0.0.1:0");
  net::Codec codec{0, 0, net::kDefaultMaxFrame};

  {
    RawClient raw(server.port());
    net::Hello hello;
    hello.version = 99;
    hello.backend = "mock";
    hello.pk.bytes = {1};
    raw.send_frame(net::encode_frame(hello, codec));
    auto msg = net::decode_frame(raw.recv_frame(), codec);
    auto* abort = std::get_if<proto::SessionAbort>(&msg);
    REQUIRE(abort != nullptr);
    CHECK(abort->code == proto::kAbortProtocol);
  }
  {
    RawClient raw(server.port());
    raw.send_frame(net::encode_frame(net::Bye{}, codec));
    auto msg = net::decode_frame(raw.recv_frame(), codec);
    REQUIRE(std::get_if<proto::SessionAbort>(&msg) != nullptr);
  }
  {
    // a garbage public key fails the server's encryption probe
    RawClient raw(server.port());
    net::Hello hello;
    hello.backend = "group";
    hello.pk.bytes.assign(32, 0xff);
    raw.send_frame(net::encode_frame(hello, codec));
    auto msg = net::decode_frame(raw.recv_frame(), codec);
    auto* abort = std::get_if<proto::SessionAbort>(&msg);
    REQUIRE(abort != nullptr);
    CHECK(abort->code == proto::kAbortProtocol);
  }
  server.stop();
}

TEST_CASE("transport failures surface as transport errors") {
  CHECK_THROWS_AS(net::Connection::open("127.0.0.1:1"), TransportError);

  net::Server server(example_index(), {});
  server.start("127.0.0.1:0");
  const std::string addr = "127.0.0.1:" + std::to_string(server.port());
  net::ConnectOptions copts;
  copts.backend = "mock";
  auto conn = net::Connection::open(addr, copts);
  server.stop();
  CHECK_THROWS_AS(conn.check({"a", "b", "d"}), TransportError);
}
