#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "privalign/fm.hpp"
#include "privalign/model.hpp"

namespace {

using namespace privalign;

// Synthetic runs text: random activity sequences over an 8-symbol alphabet,
// separated and terminated like a real index input.
model::Alphabet bench_alphabet() {
  std::set<std::string> labels;
  for (char c = 'a'; c < 'a' + 6; ++c) labels.insert(std::string(1, c));
  return model::relabel(labels, {});
}

model::RunsText bench_text(std::size_t target_len, std::uint64_t seed) {
  model::Alphabet alphabet = bench_alphabet();
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> activity(1, static_cast<int>(alphabet.size()) - 2);
  model::RunsText text;
  while (text.codes.size() + 1 < target_len) {
    std::size_t run = 3 + rng() % 6;
    for (std::size_t i = 0; i < run && text.codes.size() + 2 < target_len; ++i)
      text.codes.push_back(static_cast<std::uint16_t>(activity(rng)));
    text.codes.push_back(alphabet.separator());
  }
  text.codes.push_back(0);
  return text;
}

void BM_SuffixArray(benchmark::State& state) {
  model::RunsText text = bench_text(static_cast<std::size_t>(state.range(0)), 7);
  for (auto _ : state) benchmark::DoNotOptimize(fm::build_suffix_array(text));
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_SuffixArray)->Range(64, 4096)->Complexity();

void BM_BuildWaveletMatrix(benchmark::State& state) {
  model::Alphabet alphabet = bench_alphabet();
  model::RunsText text = bench_text(static_cast<std::size_t>(state.range(0)), 11);
  auto sa = fm::build_suffix_array(text);
  auto bwt = fm::bwt_from_sa(text, sa);
  for (auto _ : state) benchmark::DoNotOptimize(fm::build_wavelet_matrix(bwt, alphabet));
}
BENCHMARK(BM_BuildWaveletMatrix)->Range(64, 4096);

void BM_BackwardSearch(benchmark::State& state) {
  model::Alphabet alphabet = bench_alphabet();
  fm::FmIndex index = fm::build_index(bench_text(1024, 13), alphabet);
  std::vector<std::uint16_t> query = {1, 2, 3, 1};
  for (auto _ : state)
    benchmark::DoNotOptimize(fm::backward_search(index.matrix, query));
}
BENCHMARK(BM_BackwardSearch);

void BM_AlignWithLogMoves(benchmark::State& state) {
  model::Alphabet alphabet = bench_alphabet();
  fm::FmIndex index = fm::build_index(bench_text(512, 17), alphabet);
  std::vector<std::string> trace = {"a", "c", "b", "d", "a", "b"};
  for (auto _ : state)
    benchmark::DoNotOptimize(fm::align_with_log_moves(index, trace));
}
BENCHMARK(BM_AlignWithLogMoves);

}  // namespace

BENCHMARK_MAIN();
