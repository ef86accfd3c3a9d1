#include <vector>

#include "privalign/errors.hpp"
#include "privalign/fm.hpp"

namespace privalign::fm {

std::vector<std::uint16_t> partition_by_bit(const std::vector<std::uint16_t>& row, int bit) {
  std::vector<std::uint16_t> out;
  out.reserve(row.size());
  for (std::uint16_t c : row)
    if (((c >> bit) & 1) == 0) out.push_back(c);
  for (std::uint16_t c : row)
    if (((c >> bit) & 1) == 1) out.push_back(c);
  return out;
}

WaveletMatrix build_wavelet_matrix(const std::vector<std::uint16_t>& bwt,
                                   const model::Alphabet& alphabet) {
  WaveletMatrix m;
  m.text_len = static_cast<std::uint32_t>(bwt.size());
  m.width = alphabet.width;

  for (std::uint16_t c : bwt)
    if (c >> m.width)
      throw InputError("transformed text holds a code outside the alphabet width");

  std::vector<std::uint16_t> row = bwt;
  for (int r = 0; r < m.width; ++r) {
    const std::uint32_t n = m.text_len;
    std::vector<std::uint32_t> ranks(2 * (n + 1));
    std::uint32_t zeros = 0;
    for (std::uint32_t p = 0; p <= n; ++p) {
      ranks[p] = zeros;
      if (p < n && (((row[p] >> r) & 1) == 0)) ++zeros;
    }
    // A one bit at position p lands at: total zeros + ones before p.
    for (std::uint32_t p = 0; p <= n; ++p) ranks[n + 1 + p] = zeros + (p - ranks[p]);

    m.rows.push_back(row);
    m.ranks01.push_back(std::move(ranks));
    if (r + 1 < m.width) row = partition_by_bit(row, r);
  }
  return m;
}

Interval lf_interval(const WaveletMatrix& m, std::uint16_t c, Interval iv) {
  if (c >> m.width) throw InputError("code outside the alphabet width");
  if (iv.first > m.text_len || iv.last > m.text_len)
    throw InputError("interval endpoint outside the suffix range");

  for (int r = 0; r < m.width; ++r) {
    if (((c >> r) & 1) == 0) {
      iv.first = m.zero_rank(r, iv.first);
      iv.last = m.zero_rank(r, iv.last);
    } else {
      iv.first = m.one_srank(r, iv.first);
      iv.last = m.one_srank(r, iv.last);
    }
  }
  return iv;
}

Interval backward_search(const WaveletMatrix& m, std::span<const std::uint16_t> query) {
  Interval iv{0, m.text_len};
  for (std::size_t i = query.size(); i-- > 0;) {
    iv = lf_interval(m, query[i], iv);
    if (iv.empty()) return {iv.first, iv.first};
  }
  return iv;
}

}  // namespace privalign::fm
