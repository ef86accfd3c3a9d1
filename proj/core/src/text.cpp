#include <algorithm>
#include <bit>
#include <set>
#include <string>
#include <vector>

#include "privalign/errors.hpp"
#include "privalign/model.hpp"

namespace privalign::model {

std::uint16_t Alphabet::code(std::string_view label) const {
  if (label == "$") return 0;
  if (label == ";") return separator();
  auto begin = symbols.begin() + 1, end = symbols.end() - 1;
  auto it = std::lower_bound(begin, end, label);
  if (it == end || *it != label)
    throw InputError("label not in the shared alphabet: " + std::string(label));
  return static_cast<std::uint16_t>(it - symbols.begin());
}

Alphabet relabel(const std::set<std::string>& model_labels,
                 const std::set<std::string>& log_labels) {
  std::set<std::string> merged = model_labels;
  merged.insert(log_labels.begin(), log_labels.end());

  Alphabet a;
  a.symbols.push_back("$");
  for (const auto& label : merged) {
    if (label.empty()) throw InputError("empty activity label");
    if (label == "$" || label == ";")
      throw InputError("activity label uses reserved symbol: " + label);
    a.symbols.push_back(label);
  }
  a.symbols.push_back(";");
  a.width = std::bit_width(a.symbols.size() - 1);
  return a;
}

RunsText concatenate(const std::vector<std::vector<std::string>>& runs,
                     const Alphabet& alphabet) {
  std::vector<std::vector<std::string>> ordered = runs;
  std::sort(ordered.begin(), ordered.end(),
            [](const std::vector<std::string>& a, const std::vector<std::string>& b) {
              if (a.size() != b.size()) return a.size() < b.size();
              return a < b;
            });
  ordered.erase(std::unique(ordered.begin(), ordered.end()), ordered.end());

  RunsText text;
  for (const auto& run : ordered) {
    for (const auto& label : run) text.codes.push_back(alphabet.code(label));
    text.codes.push_back(alphabet.separator());
  }
  text.codes.push_back(0);
  return text;
}

std::vector<std::uint16_t> encode_trace(const Alphabet& alphabet,
                                        const std::vector<std::string>& trace) {
  std::vector<std::uint16_t> codes;
  codes.reserve(trace.size());
  for (const auto& label : trace) {
    if (label == "$" || label == ";")
      throw InputError("trace uses reserved symbol: " + label);
    codes.push_back(alphabet.code(label));
  }
  return codes;
}

}  // namespace privalign::model
