#pragma once

#include <cstdint>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace privalign::model {

// Safe place/transition nets. Places and transitions are referenced by dense
// indices; the original document ids are kept for error messages.

struct Transition {
  std::string id;
  std::string label;       // display label, equals id for unnamed transitions
  bool silent = false;     // silent transitions never appear in runs
  std::vector<int> pre;    // place indices, sorted
  std::vector<int> post;   // place indices, sorted
};

struct PetriNet {
  std::vector<std::string> places;  // place ids, position is the place index
  std::vector<Transition> transitions;
  std::vector<int> initial_marking;  // sorted place indices, one token each
  std::vector<int> final_marking;    // sorted place indices
};

enum class ModelFormat { Json, Pnml };

// Parses and validates a model document. Json is the native format; Pnml
// accepts the common interchange subset (places with initialMarking,
// transitions with an optional name, arcs). A Pnml file without an explicit
// final marking must have exactly one sink place, which becomes the final
// marking.
PetriNet parse_model(std::string_view text, ModelFormat format);

// Labels of non-silent transitions.
std::set<std::string> visible_labels(const PetriNet& net);

// Token-game replay: does some firing sequence emit exactly `seq` (silent
// transitions may interleave anywhere) and end in the final marking?
bool replays_to_final(const PetriNet& net, const std::vector<std::string>& seq);

// Finite complete prefix of the net's unfolding.
//
// Conditions are place occurrences, events are transition occurrences. Every
// event carries its local configuration (the event and its causal
// predecessors), the marking reached by firing exactly that configuration,
// and the set of non-silent labels it fired. An event is a cutoff when a
// causal ancestor (or the virtual initial event, representing the empty
// configuration) reaches the same marking with the same label set, so each
// branch unrolls a loop exactly once; a cutoff keeps its postset but is
// never extended.

struct Condition {
  int place = -1;
  int producer = -1;  // event index, -1 for initial conditions
};

struct Event {
  int transition = -1;
  std::vector<int> preset;    // condition indices consumed, sorted
  std::vector<int> postset;   // condition indices produced, sorted
  std::vector<int> config;    // local configuration, sorted event indices
  std::vector<int> marking;   // cut of the local configuration, place indices
  std::vector<std::string> label_set;  // non-silent labels fired, sorted, deduped
  bool cutoff = false;
  int corresponding = -1;  // event with equal (marking, label_set); -1 is the
                           // virtual initial event
};

struct Unfolding {
  std::vector<Condition> conditions;
  std::vector<Event> events;
  std::vector<int> initial_conditions;
};

inline constexpr std::size_t kDefaultUnfoldCeiling = 10000;

// Builds the complete prefix. Events are added in adequate order: smaller
// local configuration first, ties broken by the sorted label sequence, then
// by transition index. Throws UnsafeNetError when two concurrent conditions
// share a place, CapExceededError when the prefix exceeds `max_events`.
Unfolding unfold(const PetriNet& net, std::size_t max_events = kDefaultUnfoldCeiling);

// One complete run as a partially ordered set of events.
struct RunPO {
  std::vector<int> events;                 // prefix event indices, topological
  std::vector<std::string> labels;         // per event
  std::vector<bool> silent;                // per event
  std::vector<std::vector<int>> preds;     // direct causal predecessors, local indices
  bool complete = false;                   // run ends in the final marking
};

// Cutoff-free configurations of the prefix whose cut is the final marking.
// A run is emitted each time the walk reaches the final marking, so a loop
// passing through it yields both the short and the unrolled run.
std::vector<RunPO> complete_runs(const PetriNet& net, const Unfolding& prefix);

inline constexpr std::size_t kDefaultLinearizationCap = 10000;

// All interleavings of one run, as label sequences with silent events
// dropped, deduped and sorted lexicographically. Throws CapExceededError
// when the run has more than `cap` linear extensions.
std::vector<std::vector<std::string>> linear_extensions(const RunPO& run,
                                                        std::size_t cap = kDefaultLinearizationCap);

// Shared symbol table for model runs and traces. Code 0 is the terminal "$",
// the highest code is the run separator ";", activity labels sit in between
// in lexicographic order.
struct Alphabet {
  std::vector<std::string> symbols;  // code -> label
  int width = 0;                     // bits per code

  std::size_t size() const { return symbols.size(); }
  std::uint16_t separator() const { return static_cast<std::uint16_t>(symbols.size() - 1); }

  // Label -> code; throws InputError for unknown labels.
  std::uint16_t code(std::string_view label) const;
};

// Builds the shared alphabet over the union of both label sets. "$" and ";"
// are reserved and rejected as activity labels.
Alphabet relabel(const std::set<std::string>& model_labels,
                 const std::set<std::string>& log_labels);

// Concatenated runs text: every run followed by ";", then the terminal "$".
// Runs are deduped and ordered shortlex (length first, then lexicographic).
struct RunsText {
  std::vector<std::uint16_t> codes;

  std::size_t size() const { return codes.size(); }
};

RunsText concatenate(const std::vector<std::vector<std::string>>& runs,
                     const Alphabet& alphabet);

// Trace labels -> codes, without separator or terminal.
std::vector<std::uint16_t> encode_trace(const Alphabet& alphabet,
                                        const std::vector<std::string>& trace);

}  // namespace privalign::model
