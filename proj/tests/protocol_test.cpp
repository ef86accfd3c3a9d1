#include <doctest.h>

#include <memory>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "oracles.hpp"
#include "privalign/errors.hpp"
#include "privalign/protocol.hpp"

using namespace privalign;

namespace {

struct Loopback {
  std::shared_ptr<const fm::FmIndex> index;
  std::shared_ptr<const crypto::EncryptionBackend> backend;
  crypto::KeyPair keys;
  std::unique_ptr<proto::ServerEngine> server;
  std::unique_ptr<proto::ClientEngine> client;

  explicit Loopback(const std::string& backend_name,
                    fm::Budget budget = fm::Budget::infinite(),
                    std::shared_ptr<const fm::FmIndex> idx = nullptr) {
    index = idx ? std::move(idx)
                : std::make_shared<const fm::FmIndex>(
                      fm::build_index(oracle::example_text(), oracle::example_alphabet()));
    backend = crypto::make_backend(backend_name, 3 * (index->text_len + 1));
    keys = backend->keygen();
    server = std::make_unique<proto::ServerEngine>(index, backend, keys.pk, budget, 42);
    client = std::make_unique<proto::ClientEngine>(server->params(), backend, keys);
  }

  proto::Exchange exchange() {
    return [this](const proto::PlfRequest& req) { return server->handle(req); };
  }
};

}  // namespace

TEST_CASE("one-hot packing selects a single slot") {
  auto backend = crypto::make_mock_backend(100);
  auto keys = backend->keygen();

  auto cts = proto::pack(*backend, keys.pk, 5, 3, 1);
  REQUIRE(cts.size() == 10);
  for (std::size_t i = 0; i < cts.size(); ++i)
    CHECK(backend->decrypt_small(keys.sk, cts[i]) == (i == 8 ? 1 : 0));

  auto zero_bit = proto::pack(*backend, keys.pk, 5, 0, 0);
  CHECK(backend->decrypt_small(keys.sk, zero_bit[0]) == 1);

  CHECK_THROWS_AS(proto::pack(*backend, keys.pk, 5, 5, 0), ProtocolError);
}

TEST_CASE("emptiness is rotation invariant") {
  for (std::uint32_t m = 1; m <= 8; ++m)
    for (std::uint32_t lower = 0; lower < m; ++lower)
      for (std::uint32_t upper = 0; upper < m; ++upper)
        for (std::uint32_t r = 0; r < m; ++r)
          CHECK(proto::emptiness_check((lower + r) % m, (upper + r) % m, m) ==
                (lower == upper));
}

TEST_CASE("session parameters disclose size, alphabet and budget") {
  Loopback lb("mock", fm::Budget::limited(4));
  auto params = lb.server->params();
  CHECK(params.size == 12);
  CHECK(params.alphabet.symbols == oracle::example_alphabet().symbols);
  CHECK(params.ciphertext_len == 32);
  CHECK_FALSE(params.budget.unlimited);
  CHECK(params.budget.count == 4);
}

TEST_CASE("session alignment equals the plaintext alignment") {
  const std::vector<std::vector<std::string>> traces{
      {"a", "b", "d"}, {"a", "b", "c", "b", "d"}, {"a", "c", "b", "d"},
      {"a", "d", "b", "c", "d"}, {"c", "b", "d"}, {"a", "d", "d", "d"}, {},
  };
  Loopback lb("mock");
  for (const auto& trace : traces) {
    Loopback fresh("mock");
    auto expected = fm::align_with_log_moves(*fresh.index, trace);
    auto got = fresh.client->run(trace, fresh.exchange());
    CHECK(got.cost == expected.cost);
    CHECK(got.moves == expected.moves);
  }
}

TEST_CASE("session alignment over the group backend") {
  Loopback lb("group");
  auto got = lb.client->run({"a", "c", "b", "d"}, lb.exchange());
  auto expected = fm::align_with_log_moves(*lb.index, {"a", "c", "b", "d"});
  CHECK(got.cost == 1);
  CHECK(got.moves == expected.moves);
}

TEST_CASE("responses are the true ranks plus the drawn rotation") {
  Loopback lb("mock");
  const auto& matrix = lb.index->matrix;
  const std::uint32_t m = lb.server->params().size;

  std::uint32_t counter = 0;
  lb.server->set_offset_source([&](std::uint32_t mod) { return (counter += 5) % mod; });

  std::vector<std::pair<std::uint32_t, std::uint32_t>> observed;
  lb.client->observe_decrypts(
      [&](std::uint32_t l, std::uint32_t u) { observed.emplace_back(l, u); });

  const std::vector<std::string> trace{"a", "c", "b", "d"};
  lb.client->run(trace, lb.exchange());

  const auto& offsets = lb.server->offset_history();
  REQUIRE(observed.size() == offsets.size());
  REQUIRE(observed.size() == trace.size() * matrix.width + matrix.width);

  // replay the walk in plaintext
  auto query = model::encode_trace(lb.index->alphabet, trace);
  query.push_back(lb.index->alphabet.separator());
  std::uint32_t lower = 0, upper = m - 1;
  std::size_t k = 0;
  for (std::size_t i = query.size(); i-- > 0;) {
    const std::uint32_t saved_lower = lower, saved_upper = upper;
    for (int r = 0; r < matrix.width; ++r) {
      const int bit = (query[i] >> r) & 1;
      lower = bit ? matrix.one_srank(r, lower) : matrix.zero_rank(r, lower);
      upper = bit ? matrix.one_srank(r, upper) : matrix.zero_rank(r, upper);
      CHECK(observed[k].first == lower + offsets[k]);
      CHECK(observed[k].second == upper + offsets[k]);
      ++k;
    }
    if (lower == upper) {
      lower = saved_lower;
      upper = saved_upper;
    }
  }
}

TEST_CASE("rotations vary across responses") {
  Loopback lb("mock");
  lb.client->run({"a", "c", "b", "d"}, lb.exchange());
  const auto& offsets = lb.server->offset_history();
  REQUIRE(offsets.size() == 15);
  std::set<std::uint32_t> distinct(offsets.begin(), offsets.end());
  CHECK(distinct.size() > 1);  // seeded draws over [0,12) cannot all collide
}

TEST_CASE("budget counts transmitted retries only") {
  // k trailing mismatches cost k-1 retries; the final one is never sent
  auto run_with = [&](std::uint32_t budget, std::size_t mismatches) {
    Loopback lb("mock", fm::Budget::limited(budget));
    std::vector<std::string> trace{"a"};
    for (std::size_t i = 0; i < mismatches; ++i) trace.push_back("d");

    std::size_t undos = 0;
    auto exchange = [&](const proto::PlfRequest& req) {
      if (req.undo) ++undos;
      return lb.server->handle(req);
    };
    auto alignment = lb.client->run(trace, exchange);
    return std::pair(undos, alignment.cost);
  };

  for (std::uint32_t b : {0u, 1u, 3u}) {
    auto [undos, cost] = run_with(b, b + 1);
    CHECK(undos == b);
    CHECK(cost == b + 1);  // b interior log moves plus the free final one

    Loopback lb("mock", fm::Budget::limited(b));
    std::vector<std::string> trace{"a"};
    for (std::size_t i = 0; i < b + 2; ++i) trace.push_back("d");
    std::size_t undos_sent = 0;
    auto exchange = [&](const proto::PlfRequest& req) {
      if (req.undo) ++undos_sent;
      return lb.server->handle(req);
    };
    CHECK_THROWS_AS(lb.client->run(trace, exchange), BudgetExhaustedError);
    CHECK(undos_sent == b + 1);  // the aborted request is the first over budget
  }
}

TEST_CASE("unlimited budget never aborts") {
  Loopback lb("mock", fm::Budget::infinite());
  std::vector<std::string> trace{"a", "d", "d", "d", "d", "d", "d", "d"};
  auto alignment = lb.client->run(trace, lb.exchange());
  // Interior d's and the leading a never extend a match; the last d syncs.
  CHECK(alignment.cost == 7);
  CHECK(alignment.moves.back().kind == fm::MoveKind::Sync);
}

TEST_CASE("requests out of order kill the session") {
  Loopback lb("mock");
  const std::uint32_t m = lb.server->params().size;
  auto request = [&](std::uint8_t row, bool undo) {
    proto::PlfRequest req;
    req.row = row;
    req.undo = undo;
    req.lower = proto::pack(*lb.backend, lb.keys.pk, m, 0, 0);
    req.upper = proto::pack(*lb.backend, lb.keys.pk, m, m - 1, 0);
    return req;
  };

  SUBCASE("wrong starting row") {
    auto outcome = lb.server->handle(request(1, false));
    auto* abort = std::get_if<proto::SessionAbort>(&outcome);
    REQUIRE(abort != nullptr);
    CHECK(abort->code == proto::kAbortProtocol);

    // dead from here on, even for a well-formed request
    auto next = lb.server->handle(request(0, false));
    REQUIRE(std::get_if<proto::SessionAbort>(&next) != nullptr);
  }

  SUBCASE("undo outside row 0") {
    auto first = lb.server->handle(request(0, false));
    REQUIRE(std::get_if<proto::PlfResponse>(&first));
    auto outcome = lb.server->handle(request(1, true));
    auto* abort = std::get_if<proto::SessionAbort>(&outcome);
    REQUIRE(abort != nullptr);
    CHECK(abort->code == proto::kAbortProtocol);
  }

  SUBCASE("wrong vector length") {
    auto req = request(0, false);
    req.lower.pop_back();
    auto outcome = lb.server->handle(req);
    auto* abort = std::get_if<proto::SessionAbort>(&outcome);
    REQUIRE(abort != nullptr);
    CHECK(abort->code == proto::kAbortProtocol);
  }
}

TEST_CASE("client maps abort codes onto exceptions") {
  Loopback lb("mock");
  proto::Exchange deny_budget = [](const proto::PlfRequest&) {
    return proto::PlfOutcome(proto::SessionAbort{proto::kAbortBudget, "spent"});
  };
  CHECK_THROWS_AS(lb.client->run({"a"}, deny_budget), BudgetExhaustedError);

  Loopback lb2("mock");
  proto::Exchange deny_proto = [](const proto::PlfRequest&) {
    return proto::PlfOutcome(proto::SessionAbort{proto::kAbortProtocol, "nope"});
  };
  CHECK_THROWS_AS(lb2.client->run({"a"}, deny_proto), ProtocolError);
}

TEST_CASE("random nets align identically through a session") {
  std::mt19937_64 rng(123);
  int done = 0;
  for (int attempt = 0; attempt < 30 && done < 12; ++attempt) {
    oracle::BlockNetBuilder builder(rng);
    auto net = builder.build(2);

    std::vector<std::vector<std::string>> sequences;
    try {
      for (const auto& run : model::complete_runs(net, model::unfold(net)))
        for (auto& seq : model::linear_extensions(run, 2000)) sequences.push_back(seq);
    } catch (const CapExceededError&) {
      continue;
    }
    if (sequences.empty()) continue;
    auto alphabet = model::relabel(model::visible_labels(net), {});
    if (alphabet.size() <= 2) continue;  // nothing visible to misalign
    auto text = model::concatenate(sequences, alphabet);
    if (text.size() > 64) continue;
    auto index = std::make_shared<const fm::FmIndex>(fm::build_index(text, alphabet));

    // a model sequence with a few injected events
    std::vector<std::string> trace = sequences[rng() % sequences.size()];
    const auto& symbols = alphabet.symbols;
    for (std::size_t i = 0, k = 1 + rng() % 3; i < k; ++i) {
      std::string label = symbols[1 + rng() % (symbols.size() - 2)];
      trace.insert(trace.begin() + static_cast<long>(rng() % (trace.size() + 1)), label);
    }

    Loopback lb("mock", fm::Budget::infinite(), index);
    auto got = lb.client->run(trace, lb.exchange());
    auto expected = fm::align_with_log_moves(*index, trace);
    CHECK(got.cost == expected.cost);
    CHECK(got.moves == expected.moves);
    ++done;
  }
  CHECK(done >= 12);
}
