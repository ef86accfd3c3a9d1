#pragma once

#include <cstddef>
#include <set>
#include <string>
#include <vector>

#include "privalign/fm.hpp"
#include "privalign/model.hpp"

namespace privalign::cli {

// One distinct activity sequence from an event log, with the cases that
// produced it, in order of first appearance.
struct TraceVariant {
  std::vector<std::string> activities;
  std::vector<std::string> cases;
};

// CSV event log with a header naming case_id, activity and timestamp
// columns (extra columns are ignored). Events are grouped by case and
// ordered by timestamp; ties keep file order.
std::vector<TraceVariant> read_csv_log(const std::string& path);

// "a,b,d" -> {"a","b","d"}
std::vector<std::string> parse_trace_flag(const std::string& text);

// Budget flag: a count, or "inf" for unlimited.
fm::Budget parse_budget(const std::string& text);

model::PetriNet load_model_file(const std::string& path, const std::string& format);

// Model file -> runs text -> index. Extra labels widen the alphabet so log
// activities outside the model stay encodable.
fm::FmIndex index_from_model(const std::string& path, const std::string& format,
                             std::size_t cap, const std::set<std::string>& extra_labels);

int run_cli(int argc, char** argv);

}  // namespace privalign::cli
