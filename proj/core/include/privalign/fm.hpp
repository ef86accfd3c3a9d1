#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "privalign/model.hpp"

namespace privalign::fm {

// Half-open interval of suffix-array rows. empty() means no occurrence.
struct Interval {
  std::uint32_t first = 0;
  std::uint32_t last = 0;  // exclusive

  bool empty() const { return first >= last; }
  friend bool operator==(const Interval&, const Interval&) = default;
};

// Suffix order over the runs text, built by comparison-based doubling.
std::vector<std::uint32_t> build_suffix_array(const model::RunsText& text);

// Last column of the sorted rotation matrix: for suffix-array row i the code
// preceding that suffix, with the terminal wrapping to the end of the text.
std::vector<std::uint16_t> bwt_from_sa(const model::RunsText& text,
                                       std::span<const std::uint32_t> sa);

// Bit-sliced rank structure over the transformed text.
//
// rows[0] is the transformed text; rows[r + 1] is rows[r] stably partitioned
// by bit r (zero bits first). For each row two cumulative counts are kept,
// concatenated in one array of length 2 * (|T| + 1):
//
//   ranks01[r][p]            zeros among the first p codes of rows[r]
//   ranks01[r][|T| + 1 + p]  total zeros of rows[r] plus ones among the
//                            first p codes
//
// The second count is exactly where an interval endpoint lands after
// following a one bit, so one lookup table serves both branches.
struct WaveletMatrix {
  std::uint32_t text_len = 0;
  int width = 0;
  std::vector<std::vector<std::uint16_t>> rows;        // width rows
  std::vector<std::vector<std::uint32_t>> ranks01;     // width rows, 2*(text_len+1) each

  std::uint32_t zero_rank(int row, std::uint32_t pos) const { return ranks01[row][pos]; }
  std::uint32_t one_srank(int row, std::uint32_t pos) const {
    return ranks01[row][text_len + 1 + pos];
  }
};

// Stable partition of one row by bit r, zeros first. Exposed so tests can
// rebuild rows independently.
std::vector<std::uint16_t> partition_by_bit(const std::vector<std::uint16_t>& row, int bit);

WaveletMatrix build_wavelet_matrix(const std::vector<std::uint16_t>& bwt,
                                   const model::Alphabet& alphabet);

struct FmIndex {
  model::Alphabet alphabet;
  std::uint32_t text_len = 0;
  std::vector<std::uint16_t> bwt;
  WaveletMatrix matrix;
  std::vector<std::uint32_t> suffix_array;  // empty after load_index
};

FmIndex build_index(const model::RunsText& text, const model::Alphabet& alphabet);

// One backward-search step: rows of the suffix array whose suffixes extend
// `iv` by code `c` on the left. Walks the wavelet rows LSB first.
Interval lf_interval(const WaveletMatrix& m, std::uint16_t c, Interval iv);

// Interval of `query` (codes, leftmost first) by repeated lf_interval from
// the full interval.
Interval backward_search(const WaveletMatrix& m, std::span<const std::uint16_t> query);

// Mismatch budget for alignment and protocol sessions.
struct Budget {
  bool unlimited = true;
  std::uint32_t count = 0;

  static Budget infinite() { return {true, 0}; }
  static Budget limited(std::uint32_t n) { return {false, n}; }
};

enum class MoveKind { Sync, Log };

struct Move {
  MoveKind kind = MoveKind::Sync;
  std::string label;

  friend bool operator==(const Move&, const Move&) = default;
};

struct Alignment {
  std::vector<Move> moves;   // trace order
  std::size_t cost = 0;      // number of log moves
};

// Greedy alignment of a trace against the indexed runs: walk the trace right
// to left with the separator appended; a step that empties the interval is
// undone and recorded as a log move. Every mismatch that is followed by at
// least one more step consumes budget; throws BudgetExhaustedError when the
// budget would go negative, InputError for labels outside the alphabet.
Alignment align_with_log_moves(const FmIndex& index,
                               const std::vector<std::string>& trace,
                               Budget budget = Budget::infinite());

// Binary index file, little-endian, layout versioned. The suffix array is
// not persisted; search and sessions only need the ranks.
void save_index(const FmIndex& index, const std::filesystem::path& path);
FmIndex load_index(const std::filesystem::path& path);

}  // namespace privalign::fm
