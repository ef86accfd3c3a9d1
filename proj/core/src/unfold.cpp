#include <algorithm>
#include <functional>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "privalign/errors.hpp"
#include "privalign/model.hpp"

namespace privalign::model {

namespace {

std::vector<int> sorted_union(const std::vector<int>& a, const std::vector<int>& b) {
  std::vector<int> out;
  out.reserve(a.size() + b.size());
  std::set_union(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
  return out;
}

// Candidate event waiting in the queue, ordered by the adequate order:
// smaller local configuration first, then the sorted label sequence of that
// configuration, then transition and preset for determinism.
struct Pending {
  std::size_t config_size = 0;            // |[e]| including the event itself
  std::vector<std::string> label_seq;     // sorted, duplicates kept
  int transition = -1;
  std::vector<int> preset;                // sorted condition ids
  std::vector<int> config;                // predecessor events, sorted

  friend bool operator<(const Pending& a, const Pending& b) {
    if (a.config_size != b.config_size) return a.config_size < b.config_size;
    if (a.label_seq != b.label_seq) return a.label_seq < b.label_seq;
    if (a.transition != b.transition) return a.transition < b.transition;
    return a.preset < b.preset;
  }
};

struct Builder {
  const PetriNet& net;
  std::size_t max_events;

  Unfolding u;
  std::vector<std::vector<int>> consumers;       // per condition
  std::vector<std::vector<int>> conds_by_place;  // per place, all conditions ever made
  std::set<Pending> queue;
  std::set<std::pair<int, std::vector<int>>> seen_candidates;  // (transition, preset)

  explicit Builder(const PetriNet& n, std::size_t cap)
      : net(n), max_events(cap), conds_by_place(n.places.size()) {}

  bool alive(int cond) const {
    int p = u.conditions[cond].producer;
    return p == -1 || !u.events[p].cutoff;
  }

  const std::vector<int>& config_of_producer(int cond) const {
    static const std::vector<int> empty;
    int p = u.conditions[cond].producer;
    return p == -1 ? empty : u.events[p].config;
  }

  // Strict causality between conditions: c precedes d iff some consumer of c
  // lies in the local configuration of d's producer.
  bool precedes(int c, int d) const {
    int pd = u.conditions[d].producer;
    if (pd == -1) return false;
    const auto& cfg = u.events[pd].config;
    for (int ev : consumers[c])
      if (std::binary_search(cfg.begin(), cfg.end(), ev)) return true;
    return false;
  }

  // Conflict between two local configurations: some condition consumed by
  // two distinct events of the union.
  bool conflicting(const std::vector<int>& cfg_a, const std::vector<int>& cfg_b) const {
    std::map<int, int> consumer_of;
    auto scan = [&](const std::vector<int>& cfg) {
      for (int ev : cfg)
        for (int c : u.events[ev].preset) {
          auto [it, inserted] = consumer_of.emplace(c, ev);
          if (!inserted && it->second != ev) return true;
        }
      return false;
    };
    return scan(cfg_a) || scan(cfg_b);
  }

  bool concurrent(int c, int d) const {
    if (c == d) return false;
    if (precedes(c, d) || precedes(d, c)) return false;
    return !conflicting(config_of_producer(c), config_of_producer(d));
  }

  std::vector<std::string> labels_of(const std::vector<int>& cfg, int extra_transition) const {
    std::vector<std::string> out;
    for (int ev : cfg) {
      const Transition& t = net.transitions[u.events[ev].transition];
      if (!t.silent) out.push_back(t.label);
    }
    if (extra_transition >= 0 && !net.transitions[extra_transition].silent)
      out.push_back(net.transitions[extra_transition].label);
    std::sort(out.begin(), out.end());
    return out;
  }

  void enqueue_candidate(int transition, std::vector<int> preset) {
    std::sort(preset.begin(), preset.end());
    if (!seen_candidates.emplace(transition, preset).second) return;

    Pending p;
    p.transition = transition;
    std::vector<int> cfg;
    for (int c : preset) cfg = sorted_union(cfg, config_of_producer(c));
    p.config_size = cfg.size() + 1;
    p.label_seq = labels_of(cfg, transition);
    p.config = std::move(cfg);
    p.preset = std::move(preset);
    queue.insert(std::move(p));
  }

  // Enumerates candidate events whose preset uses at least one condition
  // from `fresh`. Slots are filled place by place with pairwise concurrency
  // checked as we go.
  void extend_from(const std::vector<int>& fresh) {
    for (int c : fresh) {
      int place = u.conditions[c].place;
      for (std::size_t t = 0; t < net.transitions.size(); ++t) {
        const auto& pre = net.transitions[t].pre;
        if (!std::binary_search(pre.begin(), pre.end(), place)) continue;

        std::vector<int> chosen;
        std::function<void(std::size_t)> fill = [&](std::size_t slot) {
          if (slot == pre.size()) {
            enqueue_candidate(static_cast<int>(t), chosen);
            return;
          }
          if (pre[slot] == place) {
            chosen.push_back(c);
            fill(slot + 1);
            chosen.pop_back();
            return;
          }
          for (int cand : conds_by_place[pre[slot]]) {
            if (!alive(cand)) continue;
            bool ok = true;
            for (int prev : chosen)
              if (!concurrent(prev, cand)) {
                ok = false;
                break;
              }
            if (ok && concurrent(c, cand)) {
              chosen.push_back(cand);
              fill(slot + 1);
              chosen.pop_back();
            }
          }
        };
        fill(0);
      }
    }
  }

  int add_condition(int place, int producer) {
    int id = static_cast<int>(u.conditions.size());
    u.conditions.push_back({place, producer});
    consumers.emplace_back();
    conds_by_place[place].push_back(id);
    return id;
  }

  // Two concurrent conditions on one place witness a reachable marking with
  // two tokens there.
  void check_safety(int cond) {
    for (int other : conds_by_place[u.conditions[cond].place]) {
      if (other == cond) continue;
      if (concurrent(cond, other))
        throw UnsafeNetError("net is not safe: place " +
                             net.places[u.conditions[cond].place] +
                             " can hold two tokens");
    }
  }

  std::vector<int> cut_of(const Event& e) const {
    std::set<int> consumed;
    for (int ev : e.config)
      consumed.insert(u.events[ev].preset.begin(), u.events[ev].preset.end());
    std::vector<int> cut;
    for (int c : u.initial_conditions)
      if (!consumed.count(c)) cut.push_back(c);
    for (int ev : e.config)
      for (int c : u.events[ev].postset)
        if (!consumed.count(c)) cut.push_back(c);
    std::sort(cut.begin(), cut.end());
    return cut;
  }

  void run() {
    for (int p : net.initial_marking)
      u.initial_conditions.push_back(add_condition(p, -1));
    for (int c : u.initial_conditions) check_safety(c);
    extend_from(u.initial_conditions);

    while (!queue.empty()) {
      Pending p = *queue.begin();
      queue.erase(queue.begin());

      if (u.events.size() >= max_events)
        throw CapExceededError("unfolding exceeded the event ceiling of " +
                               std::to_string(max_events));

      int eid = static_cast<int>(u.events.size());
      Event e;
      e.transition = p.transition;
      e.preset = p.preset;
      e.config = std::move(p.config);
      e.config.push_back(eid);  // predecessors all have smaller ids
      u.events.push_back(std::move(e));
      Event& ev = u.events.back();

      for (int c : ev.preset) consumers[c].push_back(eid);
      for (int place : net.transitions[ev.transition].post)
        ev.postset.push_back(add_condition(place, eid));

      for (int c : ev.postset) check_safety(c);

      std::vector<int> cut = cut_of(ev);
      for (int c : cut) ev.marking.push_back(u.conditions[c].place);
      std::sort(ev.marking.begin(), ev.marking.end());

      ev.label_set = labels_of(ev.config, -1);
      ev.label_set.erase(std::unique(ev.label_set.begin(), ev.label_set.end()),
                         ev.label_set.end());

      // Cutoff: same marking and same label set as a causal ancestor, or as
      // the virtual initial event (empty configuration). Comparing against
      // ancestors only means each branch unrolls a loop once on its own,
      // so no cutoff-free configuration revisits a (marking, label set) state.
      if (ev.marking == net.initial_marking && ev.label_set.empty()) {
        ev.cutoff = true;
        ev.corresponding = -1;
      } else {
        for (int anc : ev.config) {
          if (anc == eid) continue;
          if (u.events[anc].marking == ev.marking &&
              u.events[anc].label_set == ev.label_set) {
            ev.cutoff = true;
            ev.corresponding = anc;
            break;
          }
        }
      }

      if (!ev.cutoff) extend_from(ev.postset);
    }
  }
};

}  // namespace

Unfolding unfold(const PetriNet& net, std::size_t max_events) {
  Builder b(net, max_events);
  b.run();
  return std::move(b.u);
}

std::vector<RunPO> complete_runs(const PetriNet& net, const Unfolding& prefix) {
  std::vector<RunPO> out;
  std::set<std::vector<int>> visited;

  std::function<void(std::vector<int>, std::vector<int>)> walk =
      [&](std::vector<int> config, std::vector<int> cut) {
        if (!visited.insert(config).second) return;

        // Emit whenever the cut maps to the final marking; the walk keeps
        // going because loops may pass through the final marking again.
        std::vector<int> marking;
        for (int c : cut) marking.push_back(prefix.conditions[c].place);
        std::sort(marking.begin(), marking.end());
        if (marking == net.final_marking) {
          RunPO run;
          run.complete = true;
          run.events = config;
          for (std::size_t i = 0; i < config.size(); ++i) {
            const Event& ev = prefix.events[config[i]];
            const Transition& t = net.transitions[ev.transition];
            run.labels.push_back(t.label);
            run.silent.push_back(t.silent);
            std::vector<int> local_preds;
            for (std::size_t j = 0; j < i; ++j) {
              const Event& cand = prefix.events[config[j]];
              bool feeds = false;
              for (int c : cand.postset)
                if (std::binary_search(ev.preset.begin(), ev.preset.end(), c)) {
                  feeds = true;
                  break;
                }
              if (feeds) local_preds.push_back(static_cast<int>(j));
            }
            run.preds.push_back(std::move(local_preds));
          }
          out.push_back(std::move(run));
        }

        // Cutoff events mark a revisited state, so firing one would only
        // repeat behaviour some other configuration already covers.
        for (std::size_t e = 0; e < prefix.events.size(); ++e) {
          if (prefix.events[e].cutoff) continue;
          const auto& pre = prefix.events[e].preset;
          bool enabled = std::includes(cut.begin(), cut.end(), pre.begin(), pre.end());
          if (!enabled) continue;

          std::vector<int> next_cut;
          std::set_difference(cut.begin(), cut.end(), pre.begin(), pre.end(),
                              std::back_inserter(next_cut));
          next_cut = sorted_union(next_cut, prefix.events[e].postset);
          std::vector<int> next_cfg = config;
          next_cfg.insert(std::upper_bound(next_cfg.begin(), next_cfg.end(),
                                           static_cast<int>(e)),
                          static_cast<int>(e));
          walk(std::move(next_cfg), std::move(next_cut));
        }
      };

  std::vector<int> initial_cut = prefix.initial_conditions;
  std::sort(initial_cut.begin(), initial_cut.end());
  walk({}, std::move(initial_cut));
  return out;
}

std::vector<std::vector<std::string>> linear_extensions(const RunPO& run, std::size_t cap) {
  const std::size_t n = run.events.size();
  std::vector<std::size_t> indeg(n, 0);
  std::vector<std::vector<int>> succs(n);
  for (std::size_t i = 0; i < n; ++i)
    for (int p : run.preds[i]) {
      succs[p].push_back(static_cast<int>(i));
      ++indeg[i];
    }

  std::set<std::vector<std::string>> seqs;
  std::vector<std::string> current;
  std::vector<bool> used(n, false);
  std::size_t count = 0;

  std::function<void(std::size_t)> go = [&](std::size_t placed) {
    if (placed == n) {
      if (++count > cap)
        throw CapExceededError("run has more than " + std::to_string(cap) +
                               " linearizations");
      seqs.insert(current);
      return;
    }
    for (std::size_t i = 0; i < n; ++i) {
      if (used[i] || indeg[i] != 0) continue;
      used[i] = true;
      for (int s : succs[i]) --indeg[s];
      if (!run.silent[i]) current.push_back(run.labels[i]);
      go(placed + 1);
      if (!run.silent[i]) current.pop_back();
      for (int s : succs[i]) ++indeg[s];
      used[i] = false;
    }
  };
  go(0);

  return {seqs.begin(), seqs.end()};
}

}  // namespace privalign::model
