#include <algorithm>
#include <numeric>
#include <vector>

#include "privalign/errors.hpp"
#include "privalign/fm.hpp"

namespace privalign::fm {

std::vector<std::uint32_t> build_suffix_array(const model::RunsText& text) {
  const auto& t = text.codes;
  const std::size_t n = t.size();
  if (n == 0) throw InputError("runs text is empty");
  if (t.back() != 0) throw InputError("runs text does not end with the terminal");
  if (std::count(t.begin(), t.end(), 0) != 1)
    throw InputError("terminal appears more than once in the runs text");

  std::vector<std::uint32_t> sa(n);
  std::iota(sa.begin(), sa.end(), 0);
  std::vector<std::int64_t> rank(t.begin(), t.end()), next(n);

  // Prefix doubling: after each pass suffixes are ordered by their first 2k
  // codes. The terminal is unique, so ranks eventually separate completely.
  for (std::size_t k = 1;; k *= 2) {
    auto key = [&](std::uint32_t i) {
      return std::pair<std::int64_t, std::int64_t>(rank[i],
                                                   i + k < n ? rank[i + k] : -1);
    };
    std::sort(sa.begin(), sa.end(),
              [&](std::uint32_t a, std::uint32_t b) { return key(a) < key(b); });

    next[sa[0]] = 0;
    for (std::size_t i = 1; i < n; ++i)
      next[sa[i]] = next[sa[i - 1]] + (key(sa[i - 1]) < key(sa[i]) ? 1 : 0);
    rank = next;
    if (rank[sa.back()] == static_cast<std::int64_t>(n) - 1) break;
  }
  return sa;
}

std::vector<std::uint16_t> bwt_from_sa(const model::RunsText& text,
                                       std::span<const std::uint32_t> sa) {
  const auto& t = text.codes;
  std::vector<std::uint16_t> bwt(sa.size());
  for (std::size_t i = 0; i < sa.size(); ++i)
    bwt[i] = sa[i] > 0 ? t[sa[i] - 1] : t.back();
  return bwt;
}

}  // namespace privalign::fm
