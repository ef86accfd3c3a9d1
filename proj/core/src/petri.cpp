#include <algorithm>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "privalign/errors.hpp"
#include "privalign/model.hpp"

namespace privalign::model {

namespace {

struct RawTransition {
  std::string id;
  std::optional<std::string> label;
  std::vector<std::string> pre, post;
};

struct RawModel {
  std::vector<std::string> places;
  std::vector<RawTransition> transitions;
  std::vector<std::string> initial, final_places;
};

PetriNet finalize(RawModel raw) {
  if (raw.places.empty()) throw InputError("model has no places");

  std::map<std::string, int> place_index;
  for (std::size_t i = 0; i < raw.places.size(); ++i) {
    if (!place_index.emplace(raw.places[i], static_cast<int>(i)).second)
      throw InputError("duplicate place id: " + raw.places[i]);
  }

  auto resolve = [&](const std::string& id, const char* where) {
    auto it = place_index.find(id);
    if (it == place_index.end())
      throw InputError(std::string(where) + " references unknown place: " + id);
    return it->second;
  };

  PetriNet net;
  net.places = std::move(raw.places);

  std::set<std::string> transition_ids;
  for (auto& rt : raw.transitions) {
    if (!transition_ids.insert(rt.id).second)
      throw InputError("duplicate transition id: " + rt.id);

    Transition t;
    t.id = rt.id;
    t.silent = !rt.label.has_value();
    t.label = rt.label.value_or(rt.id);
    if (!t.silent && (t.label == "$" || t.label == ";"))
      throw InputError("transition label uses reserved symbol: " + t.label);
    if (t.label.empty()) throw InputError("transition with empty label: " + rt.id);

    for (const auto& p : rt.pre) t.pre.push_back(resolve(p, "arc"));
    for (const auto& p : rt.post) t.post.push_back(resolve(p, "arc"));
    std::sort(t.pre.begin(), t.pre.end());
    std::sort(t.post.begin(), t.post.end());
    if (std::adjacent_find(t.pre.begin(), t.pre.end()) != t.pre.end() ||
        std::adjacent_find(t.post.begin(), t.post.end()) != t.post.end())
      throw InputError("duplicate arc on transition: " + rt.id);
    // A transition with an empty preset is permanently enabled and floods
    // its postset, so the net cannot be safe.
    if (t.pre.empty()) throw InputError("transition with empty preset: " + rt.id);

    net.transitions.push_back(std::move(t));
  }

  for (const auto& p : raw.initial) net.initial_marking.push_back(resolve(p, "initial marking"));
  for (const auto& p : raw.final_places) net.final_marking.push_back(resolve(p, "final marking"));
  std::sort(net.initial_marking.begin(), net.initial_marking.end());
  std::sort(net.final_marking.begin(), net.final_marking.end());
  if (std::adjacent_find(net.initial_marking.begin(), net.initial_marking.end()) !=
      net.initial_marking.end())
    throw InputError("initial marking lists a place twice");
  if (std::adjacent_find(net.final_marking.begin(), net.final_marking.end()) !=
      net.final_marking.end())
    throw InputError("final marking lists a place twice");
  if (net.initial_marking.empty()) throw InputError("initial marking is empty");

  return net;
}

PetriNet parse_json(std::string_view text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("model is not valid JSON: ") + e.what());
  }

  try {
    RawModel raw;
    raw.places = doc.at("places").get<std::vector<std::string>>();
    for (const auto& jt : doc.at("transitions")) {
      RawTransition rt;
      rt.id = jt.at("id").get<std::string>();
      if (jt.contains("label") && !jt.value("silent", false))
        rt.label = jt.at("label").get<std::string>();
      rt.pre = jt.at("pre").get<std::vector<std::string>>();
      rt.post = jt.at("post").get<std::vector<std::string>>();
      raw.transitions.push_back(std::move(rt));
    }
    raw.initial = doc.at("initial_marking").get<std::vector<std::string>>();
    raw.final_places = doc.at("final_marking").get<std::vector<std::string>>();
    return finalize(std::move(raw));
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("model JSON is missing required fields: ") + e.what());
  }
}

// Minimal PNML scanning. Handles the interchange subset: <place> with an
// optional <initialMarking>, <transition> with an optional <name>, and
// <arc source target>. Anything else is skipped.

struct XmlElement {
  std::string attrs;
  std::string inner;
};

std::vector<XmlElement> scan_elements(std::string_view text, const std::string& tag) {
  std::vector<XmlElement> out;
  const std::string open = "<" + tag;
  const std::string close = "</" + tag + ">";
  std::size_t pos = 0;
  while ((pos = text.find(open, pos)) != std::string_view::npos) {
    std::size_t after = pos + open.size();
    if (after < text.size() && (std::isalnum(static_cast<unsigned char>(text[after])) ||
                                text[after] == '-' || text[after] == '_')) {
      pos = after;  // prefix of a longer tag name
      continue;
    }
    std::size_t gt = text.find('>', after);
    if (gt == std::string_view::npos) throw InputError("unterminated PNML tag: " + tag);
    XmlElement el;
    bool self_closed = text[gt - 1] == '/';
    el.attrs = std::string(text.substr(after, (self_closed ? gt - 1 : gt) - after));
    if (!self_closed) {
      std::size_t end = text.find(close, gt + 1);
      if (end == std::string_view::npos) throw InputError("unclosed PNML element: " + tag);
      el.inner = std::string(text.substr(gt + 1, end - gt - 1));
      pos = end + close.size();
    } else {
      pos = gt + 1;
    }
    out.push_back(std::move(el));
  }
  return out;
}

std::optional<std::string> attr_value(const std::string& attrs, const std::string& name) {
  std::size_t pos = 0;
  while ((pos = attrs.find(name, pos)) != std::string::npos) {
    std::size_t after = pos + name.size();
    bool boundary = (pos == 0 || std::isspace(static_cast<unsigned char>(attrs[pos - 1])));
    pos = after;
    if (!boundary) continue;
    while (after < attrs.size() && std::isspace(static_cast<unsigned char>(attrs[after]))) ++after;
    if (after >= attrs.size() || attrs[after] != '=') continue;
    ++after;
    while (after < attrs.size() && std::isspace(static_cast<unsigned char>(attrs[after]))) ++after;
    if (after >= attrs.size() || (attrs[after] != '"' && attrs[after] != '\'')) continue;
    char quote = attrs[after];
    std::size_t end = attrs.find(quote, after + 1);
    if (end == std::string::npos) return std::nullopt;
    return attrs.substr(after + 1, end - after - 1);
  }
  return std::nullopt;
}

std::optional<std::string> inner_text(const std::string& body, const std::string& tag) {
  auto els = scan_elements(body, tag);
  if (els.empty()) return std::nullopt;
  auto texts = scan_elements(els.front().inner, "text");
  if (texts.empty()) return std::nullopt;
  std::string raw = texts.front().inner;
  // trim surrounding whitespace
  std::size_t b = raw.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return std::string();
  std::size_t e = raw.find_last_not_of(" \t\r\n");
  return raw.substr(b, e - b + 1);
}

PetriNet parse_pnml(std::string_view text) {
  RawModel raw;

  for (const auto& el : scan_elements(text, "place")) {
    auto id = attr_value(el.attrs, "id");
    if (!id) throw InputError("PNML place without id");
    raw.places.push_back(*id);
    if (auto tokens = inner_text(el.inner, "initialMarking")) {
      long n = 0;
      try {
        n = std::stol(*tokens);
      } catch (...) {
        throw InputError("PNML initialMarking is not a number on place " + *id);
      }
      if (n < 0 || n > 1)
        throw InputError("initial marking of place " + *id + " is not safe");
      if (n == 1) raw.initial.push_back(*id);
    }
  }

  for (const auto& el : scan_elements(text, "transition")) {
    auto id = attr_value(el.attrs, "id");
    if (!id) throw InputError("PNML transition without id");
    RawTransition rt;
    rt.id = *id;
    if (auto name = inner_text(el.inner, "name"); name && !name->empty()) rt.label = *name;
    raw.transitions.push_back(std::move(rt));
  }

  std::set<std::string> place_ids(raw.places.begin(), raw.places.end());
  std::set<std::string> sources;
  for (const auto& el : scan_elements(text, "arc")) {
    auto src = attr_value(el.attrs, "source");
    auto dst = attr_value(el.attrs, "target");
    if (!src || !dst) throw InputError("PNML arc without source or target");
    if (auto w = inner_text(el.inner, "inscription"); w && *w != "1")
      throw InputError("PNML arc weight above 1 is not supported");
    bool src_is_place = place_ids.count(*src) > 0;
    RawTransition* rt = nullptr;
    const std::string& tid = src_is_place ? *dst : *src;
    for (auto& cand : raw.transitions)
      if (cand.id == tid) rt = &cand;
    if (!rt) throw InputError("PNML arc does not touch a transition: " + *src + " -> " + *dst);
    if (src_is_place)
      rt->pre.push_back(*src);
    else
      rt->post.push_back(*dst);
    sources.insert(*src);
  }

  // No explicit final marking in this subset: require a unique sink place.
  std::vector<std::string> sinks;
  for (const auto& p : raw.places)
    if (!sources.count(p)) sinks.push_back(p);
  if (sinks.size() != 1)
    throw InputError("PNML model needs exactly one sink place to infer the final marking, found " +
                     std::to_string(sinks.size()));
  raw.final_places = {sinks.front()};

  return finalize(std::move(raw));
}

}  // namespace

PetriNet parse_model(std::string_view text, ModelFormat format) {
  switch (format) {
    case ModelFormat::Json:
      return parse_json(text);
    case ModelFormat::Pnml:
      return parse_pnml(text);
  }
  throw InputError("unknown model format");
}

std::set<std::string> visible_labels(const PetriNet& net) {
  std::set<std::string> out;
  for (const auto& t : net.transitions)
    if (!t.silent) out.insert(t.label);
  return out;
}

bool replays_to_final(const PetriNet& net, const std::vector<std::string>& seq) {
  using State = std::pair<std::vector<int>, std::size_t>;
  std::set<State> seen;

  // Marking as a sorted multiset of places; replay stays faithful even if
  // the net turns out not to be safe.
  std::function<bool(std::vector<int>, std::size_t)> go = [&](std::vector<int> mark,
                                                              std::size_t pos) {
    if (!seen.emplace(mark, pos).second) return false;
    if (pos == seq.size() && mark == net.final_marking) return true;

    for (const auto& t : net.transitions) {
      bool enabled = true;
      for (int p : t.pre)
        if (!std::binary_search(mark.begin(), mark.end(), p)) {
          enabled = false;
          break;
        }
      if (!enabled) continue;
      bool advance = !t.silent && pos < seq.size() && t.label == seq[pos];
      if (!t.silent && !advance) continue;

      std::vector<int> next = mark;
      for (int p : t.pre) next.erase(std::lower_bound(next.begin(), next.end(), p));
      next.insert(next.end(), t.post.begin(), t.post.end());
      std::sort(next.begin(), next.end());
      if (go(std::move(next), advance ? pos + 1 : pos)) return true;
    }
    return false;
  };

  std::vector<int> m0 = net.initial_marking;
  return go(std::move(m0), 0);
}

}  // namespace privalign::model
