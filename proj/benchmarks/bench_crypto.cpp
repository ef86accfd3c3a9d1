#include <benchmark/benchmark.h>

#include <memory>
#include <vector>

#include "privalign/crypto.hpp"
#include "privalign/fm.hpp"
#include "privalign/model.hpp"
#include "privalign/protocol.hpp"

namespace {

using namespace privalign;

constexpr std::uint64_t kBound = 1 << 12;

void BM_Encrypt(benchmark::State& state, const char* name) {
  auto backend = crypto::make_backend(name, kBound);
  auto keys = backend->keygen();
  for (auto _ : state) benchmark::DoNotOptimize(backend->encrypt(keys.pk, 42));
}
BENCHMARK_CAPTURE(BM_Encrypt, mock, "mock");
BENCHMARK_CAPTURE(BM_Encrypt, group, "group");

void BM_DecryptSmall(benchmark::State& state, const char* name) {
  auto backend = crypto::make_backend(name, kBound);
  auto keys = backend->keygen();
  auto ct = backend->encrypt(keys.pk, 1234);
  for (auto _ : state) benchmark::DoNotOptimize(backend->decrypt_small(keys.sk, ct));
}
BENCHMARK_CAPTURE(BM_DecryptSmall, mock, "mock");
BENCHMARK_CAPTURE(BM_DecryptSmall, group, "group");

void BM_ScalarMul(benchmark::State& state, const char* name) {
  auto backend = crypto::make_backend(name, kBound);
  auto keys = backend->keygen();
  auto ct = backend->encrypt(keys.pk, 3);
  for (auto _ : state) benchmark::DoNotOptimize(backend->scalar_mul(ct, 17));
}
BENCHMARK_CAPTURE(BM_ScalarMul, mock, "mock");
BENCHMARK_CAPTURE(BM_ScalarMul, group, "group");

// One server-side rank query at a given interval modulus: one-hot of 2 * m
// ciphertexts in, two masked inner products out.
void BM_RankQuery(benchmark::State& state, const char* name) {
  const auto m = static_cast<std::uint32_t>(state.range(0));

  model::Alphabet alphabet = model::relabel({"a"}, {});
  model::RunsText text;
  for (std::uint32_t i = 0; i + 2 < m; ++i) text.codes.push_back(1);
  text.codes.push_back(alphabet.separator());
  text.codes.push_back(0);
  auto index = std::make_shared<const fm::FmIndex>(fm::build_index(text, alphabet));

  std::shared_ptr<const crypto::EncryptionBackend> backend =
      crypto::make_backend(name, 3ull * m);
  auto keys = backend->keygen();
  proto::ServerEngine engine(index, backend, keys.pk, fm::Budget::infinite(), 99);

  int row = 0;
  for (auto _ : state) {
    state.PauseTiming();
    proto::PlfRequest request;
    request.row = static_cast<std::uint8_t>(row);
    request.lower = proto::pack(*backend, keys.pk, m, 0, 0);
    request.upper = proto::pack(*backend, keys.pk, m, m - 1, 0);
    state.ResumeTiming();
    benchmark::DoNotOptimize(engine.handle(request));
    row = (row + 1) % alphabet.width;
  }
}
BENCHMARK_CAPTURE(BM_RankQuery, mock, "mock")->Arg(16)->Arg(64);
BENCHMARK_CAPTURE(BM_RankQuery, group, "group")->Arg(16)->Arg(64);

}  // namespace
