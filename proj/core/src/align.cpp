#include <algorithm>
#include <vector>

#include "privalign/errors.hpp"
#include "privalign/fm.hpp"

namespace privalign::fm {

FmIndex build_index(const model::RunsText& text, const model::Alphabet& alphabet) {
  FmIndex index;
  index.alphabet = alphabet;
  index.text_len = static_cast<std::uint32_t>(text.size());
  index.suffix_array = build_suffix_array(text);
  index.bwt = bwt_from_sa(text, index.suffix_array);
  index.matrix = build_wavelet_matrix(index.bwt, alphabet);
  return index;
}

Alignment align_with_log_moves(const FmIndex& index,
                               const std::vector<std::string>& trace,
                               Budget budget) {
  std::vector<std::uint16_t> query = model::encode_trace(index.alphabet, trace);
  query.push_back(index.alphabet.separator());

  Interval iv{0, index.text_len};
  Alignment out;
  std::uint32_t used = 0;
  bool pending_retry = false;

  // Right to left. A mismatch keeps the previous interval and is charged to
  // the budget together with the next step, mirroring when a session
  // transmits the retry flag; a mismatch on the final step is free.
  for (std::size_t i = query.size(); i-- > 0;) {
    if (pending_retry) {
      if (!budget.unlimited && used == budget.count)
        throw BudgetExhaustedError("mismatch budget exhausted after " +
                                   std::to_string(used) + " retries");
      ++used;
      pending_retry = false;
    }

    Interval next = lf_interval(index.matrix, query[i], iv);
    if (next.empty()) {
      pending_retry = true;
      if (i < trace.size()) out.moves.push_back({MoveKind::Log, trace[i]});
    } else {
      iv = next;
      if (i < trace.size()) out.moves.push_back({MoveKind::Sync, trace[i]});
    }
  }

  std::reverse(out.moves.begin(), out.moves.end());
  for (const auto& m : out.moves)
    if (m.kind == MoveKind::Log) ++out.cost;
  return out;
}

}  // namespace privalign::fm
