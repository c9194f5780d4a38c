#pragma once

#include <random>
#include <string>
#include <vector>

#include "cra/automaton.hpp"

namespace cra::testing {

inline LabelSet label(const PropositionList& props, std::string_view names) {
  LabelSet out;
  for (char c : names) {
    if (c == ',' || c == ' ') continue;
    out.insert(static_cast<std::size_t>(proposition_index(props, std::string(1, c))));
  }
  return out;
}

inline TransitionRule rule(StateId from, StateId to, const std::string& guard,
                           std::vector<std::uint8_t> zt, std::vector<std::int64_t> add,
                           double reward) {
  TransitionRule r;
  r.source = from;
  r.target = to;
  r.guard = parse_guard(guard);
  r.zero_test = std::move(zt);
  r.modifier = std::move(add);
  r.reward = RewardSpec::constant(reward);
  return r;
}

// The LetterEnv CFL machine with mutually exclusive guards. States: u0, u1,
// terminals f0 (reached from u0), f1 (reached from u1).
inline CountingRewardAutomaton abc_counter_machine() {
  CountingRewardAutomaton m;
  m.states = {"u0", "u1"};
  m.terminals = {"f0", "f1"};
  m.propositions = {"A", "B", "C"};
  m.counters = 1;
  m.reward_kind = RewardKind::constants;
  m.rules = {
      rule(0, 0, "A & !B", {0}, {1}, 0),
      rule(0, 0, "A & !B", {1}, {1}, 0),
      rule(0, 1, "B & !A", {1}, {0}, 0),
      rule(0, 2, "!A & !B", {0}, {0}, 0),
      rule(0, 2, "!A & !B", {1}, {0}, 0),
      rule(1, 1, "C & !B", {1}, {-1}, 0),
      rule(1, 3, "B", {1}, {0}, 0),
      rule(1, 3, "TRUE", {0}, {0}, 1),
  };
  m.bind_guards();
  return m;
}

inline AcceptorMachine anbn_acceptor() {
  AcceptorMachine a;
  auto& m = a.machine;
  m.states = {"u0", "u1"};
  m.propositions = {"A", "B"};
  m.counters = 1;
  m.reward_kind = RewardKind::constants;
  m.rules = {
      rule(0, 0, "A & !B", {0}, {1}, 0),
      rule(0, 0, "A & !B", {1}, {1}, 0),
      rule(0, 1, "B & !A", {1}, {-1}, 0),
      rule(1, 1, "B & !A", {1}, {-1}, 0),
  };
  m.bind_guards();
  a.accepting = {1};
  a.mode = AcceptMode::state_and_zero_counters;
  return a;
}

/// Reference RM semantics: the first edge out of u whose guard holds fires,
/// otherwise the machine stays with reward 0. Independent of the CRA engine.
inline std::vector<std::pair<StateId, double>> run_rm_reference(const RewardMachine& rm,
                                                                  std::span<const LabelSet> word) {
  std::vector<std::pair<StateId, double>> out;
  StateId u = rm.initial;
  for (LabelSet sigma : word) {
    if (u >= rm.states.size()) break;
    double r = 0.0;
    for (const auto& e : rm.edges) {
      if (e.source != u) continue;
      bool holds = e.guard.is_tautology() ||
                   ((!rm.empty_label_gating || sigma.bits() != 0) && e.guard.evaluate(sigma));
      if (holds) {
        u = e.target;
        r = e.reward.evaluate(0, 0, 0);
        break;
      }
    }
    out.emplace_back(u, r);
  }
  return out;
}

inline std::vector<LabelSet> random_word(std::mt19937_64& rng, std::size_t props,
                                         std::size_t length) {
  std::vector<LabelSet> word;
  std::uniform_int_distribution<std::uint32_t> pick(0, (1u << props) - 1u);
  for (std::size_t i = 0; i < length; ++i) word.emplace_back(pick(rng));
  return word;
}

// Guards that partition 2^P minus the empty set into at most `parts`
// blocks, keyed by exact label sets. Deterministic by construction.
inline std::vector<Guard> random_partition(std::mt19937_64& rng, const PropositionList& props,
                                           std::size_t parts) {
  std::size_t n = std::size_t{1} << props.size();
  std::vector<std::vector<Guard>> blocks(parts);
  std::uniform_int_distribution<std::size_t> pick(0, parts);
  for (std::uint32_t bits = 1; bits < n; ++bits) {
    std::size_t b = pick(rng);
    if (b == parts) continue;  // unlisted label: no rule fires
    blocks[b].push_back(exact_label_guard(props, LabelSet(bits)));
  }
  std::vector<Guard> out;
  for (auto& block : blocks) {
    if (!block.empty()) out.push_back(Guard::disjunction(std::move(block)));
  }
  return out;
}

inline CountingRewardAutomaton random_ccra(std::mt19937_64& rng) {
  CountingRewardAutomaton m;
  std::uniform_int_distribution<int> n_states(1, 4), n_terms(1, 2), n_k(0, 2), n_props(1, 3);
  int u = n_states(rng), f = n_terms(rng);
  for (int i = 0; i < u; ++i) m.states.push_back("u" + std::to_string(i));
  for (int i = 0; i < f; ++i) m.terminals.push_back("t" + std::to_string(i));
  int p = n_props(rng);
  for (int i = 0; i < p; ++i) m.propositions.push_back(std::string(1, static_cast<char>('A' + i)));
  m.counters = static_cast<std::size_t>(n_k(rng));
  m.reward_kind = RewardKind::constants;
  std::uniform_int_distribution<int> target(0, u + f - 1), delta(-1, 2), reward(-2, 3);
  for (StateId s = 0; s < m.states.size(); ++s) {
    for (std::uint32_t omega = 0; omega < (1u << m.counters); ++omega) {
      std::vector<Guard> guards;
      if (rng() % 4 == 0) {
        guards.push_back(Guard::tautology());
      } else {
        guards = random_partition(rng, m.propositions, 3);
      }
      for (auto& g : guards) {
        TransitionRule r;
        r.source = s;
        r.target = static_cast<StateId>(target(rng));
        r.guard = std::move(g);
        for (std::size_t i = 0; i < m.counters; ++i) {
          r.zero_test.push_back((omega >> i) & 1u);
          // Never decrement a counter known to be zero.
          int d = delta(rng);
          r.modifier.push_back(((omega >> i) & 1u) ? d : std::max(d, 0));
        }
        r.reward = RewardSpec::constant(reward(rng) * 0.5);
        m.rules.push_back(std::move(r));
      }
    }
  }
  m.bind_guards();
  return m;
}

inline RewardMachine random_rm(std::mt19937_64& rng) {
  RewardMachine rm;
  std::uniform_int_distribution<int> n_states(1, 5), n_terms(0, 2), n_props(1, 3);
  int u = n_states(rng), f = n_terms(rng);
  for (int i = 0; i < u; ++i) rm.states.push_back("u" + std::to_string(i));
  for (int i = 0; i < f; ++i) rm.terminals.push_back("t" + std::to_string(i));
  int p = n_props(rng);
  for (int i = 0; i < p; ++i) rm.propositions.push_back(std::string(1, static_cast<char>('A' + i)));
  std::uniform_int_distribution<int> target(0, u + f - 1), reward(0, 2);
  for (StateId s = 0; s < rm.states.size(); ++s) {
    for (auto& g : random_partition(rng, rm.propositions, 3)) {
      rm.edges.push_back({s, std::move(g), static_cast<StateId>(target(rng)),
                          RewardSpec::constant(reward(rng))});
    }
  }
  rm.bind_guards();
  return rm;
}

}  // namespace cra::testing
