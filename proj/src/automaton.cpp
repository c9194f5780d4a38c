#include "cra/automaton.hpp"

#include <bit>
#include <sstream>

#include "cra/error.hpp"

namespace cra {

CounterVector::CounterVector(std::size_t k) : size_(k) {
  if (k > kMaxCounters) {
    throw Error(ErrorKind::dimension_mismatch,
                "at most " + std::to_string(kMaxCounters) + " counters are supported");
  }
}

CounterVector::CounterVector(std::initializer_list<std::int64_t> values)
    : CounterVector(values.size()) {
  std::copy(values.begin(), values.end(), values_.begin());
}

bool CounterVector::all_zero() const {
  return std::all_of(begin(), end(), [](std::int64_t v) { return v == 0; });
}

std::string CounterVector::to_string() const {
  std::string out = "[";
  for (std::size_t i = 0; i < size_; ++i) {
    if (i) out += ',';
    out += std::to_string(values_[i]);
  }
  return out + "]";
}

CounterStateVector CounterStateVector::from_bits(std::span<const std::uint8_t> bits) {
  std::uint32_t mask = 0;
  for (std::size_t i = 0; i < bits.size(); ++i) {
    if (bits[i]) mask |= 1u << i;
  }
  return CounterStateVector(bits.size(), mask);
}

std::vector<std::uint8_t> CounterStateVector::to_vector() const {
  std::vector<std::uint8_t> out(size_);
  for (std::size_t i = 0; i < size_; ++i) out[i] = (*this)[i];
  return out;
}

std::string CounterStateVector::to_string() const {
  std::string out = "[";
  for (std::size_t i = 0; i < size_; ++i) {
    if (i) out += ',';
    out += (*this)[i] ? '1' : '0';
  }
  return out + "]";
}

CounterStateVector zero_test(const CounterVector& counters) {
  std::uint32_t mask = 0;
  for (std::size_t i = 0; i < counters.size(); ++i) {
    if (counters[i] != 0) mask |= 1u << i;
  }
  return CounterStateVector(counters.size(), mask);
}

double RewardSpec::constant_value() const {
  if (const auto* c = std::get_if<Constant>(&value_)) return c->value;
  throw Error(ErrorKind::not_constant, "reward is a transition table");
}

double RewardSpec::evaluate(std::int64_t state, std::int64_t action,
                            std::int64_t next_state) const {
  if (const auto* c = std::get_if<Constant>(&value_)) return c->value;
  const auto& table = std::get<TransitionTable>(value_);
  auto it = table.overrides.find({state, action, next_state});
  return it == table.overrides.end() ? table.default_value : it->second;
}

namespace {

template <class Names>
std::optional<StateId> find_in(const Names& states, const Names& terminals,
                               std::string_view name) {
  for (std::size_t i = 0; i < states.size(); ++i) {
    if (states[i] == name) return i;
  }
  for (std::size_t i = 0; i < terminals.size(); ++i) {
    if (terminals[i] == name) return states.size() + i;
  }
  return std::nullopt;
}

const RewardSpec& zero_reward() {
  static const RewardSpec zero = RewardSpec::constant(0.0);
  return zero;
}

}  // namespace

const std::string& CountingRewardAutomaton::state_name(StateId id) const {
  return id < states.size() ? states.at(id) : terminals.at(id - states.size());
}

std::optional<StateId> CountingRewardAutomaton::find_state(std::string_view name) const {
  return find_in(states, terminals, name);
}

StateId CountingRewardAutomaton::state_id(std::string_view name) const {
  auto id = find_state(name);
  if (!id) throw Error(ErrorKind::validation, "unknown state '" + std::string(name) + "'");
  return *id;
}

void CountingRewardAutomaton::bind_guards() {
  for (auto& rule : rules) rule.guard.bind(propositions);
}

const std::string& RewardMachine::state_name(StateId id) const {
  return id < states.size() ? states.at(id) : terminals.at(id - states.size());
}

std::optional<StateId> RewardMachine::find_state(std::string_view name) const {
  return find_in(states, terminals, name);
}

void RewardMachine::bind_guards() {
  for (auto& edge : edges) edge.guard.bind(propositions);
}

// ---------------------------------------------------------------------------
// Validation

bool ValidationReport::has(ViolationKind kind) const {
  return std::any_of(violations.begin(), violations.end(),
                     [&](const Violation& v) { return v.kind == kind; });
}

std::string ValidationReport::to_string() const {
  std::string out;
  for (const auto& v : violations) out += v.message + "\n";
  return out;
}

namespace {

void add(ValidationReport& report, ViolationKind kind, std::string message,
         std::vector<std::size_t> rules = {}) {
  report.violations.push_back({kind, std::move(message), std::move(rules)});
}

template <class Machine>
void check_states(const Machine& m, ValidationReport& report) {
  for (const auto& name : m.states) {
    if (std::find(m.terminals.begin(), m.terminals.end(), name) != m.terminals.end()) {
      add(report, ViolationKind::overlapping_states,
          "state '" + name + "' is both non-terminal and terminal");
    }
  }
  auto check_unique = [&](const std::vector<std::string>& names) {
    for (std::size_t i = 0; i < names.size(); ++i) {
      if (names[i].empty()) add(report, ViolationKind::bad_reference, "empty state name");
      for (std::size_t j = 0; j < i; ++j) {
        if (names[i] == names[j]) {
          add(report, ViolationKind::bad_reference, "duplicate state '" + names[i] + "'");
        }
      }
    }
  };
  check_unique(m.states);
  check_unique(m.terminals);
  if (m.initial >= m.states.size()) {
    add(report, ViolationKind::bad_reference, "initial state must be non-terminal");
  }
  const auto& props = m.propositions;
  if (props.size() > kMaxPropositions) {
    add(report, ViolationKind::too_many_propositions,
        "at most " + std::to_string(kMaxPropositions) + " propositions are supported");
  }
  for (std::size_t i = 0; i < props.size(); ++i) {
    if (props[i].empty()) add(report, ViolationKind::bad_reference, "empty proposition name");
    for (std::size_t j = 0; j < i; ++j) {
      if (props[i] == props[j]) {
        add(report, ViolationKind::bad_reference, "duplicate proposition '" + props[i] + "'");
      }
    }
  }
}

std::string rule_name(std::size_t index) { return "rule " + std::to_string(index + 1); }

void check_guard_atoms(const Guard& guard, const PropositionList& props, std::size_t index,
                       ValidationReport& report) {
  for (const auto& atom : guard.atoms()) {
    if (proposition_index(props, atom) < 0) {
      add(report, ViolationKind::unknown_proposition,
          rule_name(index) + ": undeclared proposition '" + atom + "'", {index});
    }
  }
}

std::uint32_t atom_mask(const Guard& guard, const PropositionList& props) {
  std::uint32_t mask = 0;
  for (const auto& atom : guard.atoms()) {
    int i = proposition_index(props, atom);
    if (i >= 0) mask |= 1u << i;
  }
  return mask;
}

// Visits one label set per distinct truth assignment of the atoms in
// `mask`. The all-false assignment is visited both as the empty set and,
// when some proposition lies outside `mask`, as a non-empty set, since the
// two differ under gating.
template <class F>
void for_each_relevant_label(std::uint32_t mask, std::size_t prop_count, F&& visit) {
  for (std::uint32_t sub = mask;; sub = (sub - 1) & mask) {
    visit(LabelSet(sub));
    if (sub == 0) break;
  }
  std::uint32_t all = prop_count >= 32 ? ~0u : ((1u << prop_count) - 1u);
  std::uint32_t unused = all & ~mask;
  if (unused) visit(LabelSet(unused & (~unused + 1u)));
}

bool guard_fires(const Guard& guard, bool gating, LabelSet label) {
  if (guard.is_tautology()) return true;
  if (gating && label.empty()) return false;
  return guard.evaluate(label);
}

struct Candidate {
  std::size_t index;
  const Guard* guard;
};

// Reports every pair of candidates that can fire on a common label set.
void check_overlaps(const std::vector<Candidate>& candidates, const PropositionList& props,
                    bool gating, const std::string& where,
                    std::function<std::string(LabelSet)> describe, ValidationReport& report) {
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    for (std::size_t j = i + 1; j < candidates.size(); ++j) {
      const auto& a = candidates[i];
      const auto& b = candidates[j];
      std::uint32_t mask = atom_mask(*a.guard, props) | atom_mask(*b.guard, props);
      std::optional<LabelSet> witness;
      for_each_relevant_label(mask, props.size(), [&](LabelSet label) {
        if (!witness && guard_fires(*a.guard, gating, label) &&
            guard_fires(*b.guard, gating, label)) {
          witness = label;
        }
      });
      if (witness) {
        add(report, ViolationKind::nondeterminism,
            "nondeterminism at " + where.substr(0, where.size() - 1) + "," +
                describe(*witness) + "): " + rule_name(a.index) + " and " +
                rule_name(b.index) + " both fire",
            {a.index, b.index});
      }
    }
  }
}

bool satisfiable(const Guard& guard, const PropositionList& props, bool gating) {
  bool found = false;
  for_each_relevant_label(atom_mask(guard, props), props.size(), [&](LabelSet label) {
    found = found || guard_fires(guard, gating, label);
  });
  return found;
}

}  // namespace

ValidationReport validate(const CountingRewardAutomaton& m) {
  ValidationReport report;
  check_states(m, report);
  if (m.counters > kMaxCounters) {
    add(report, ViolationKind::dimension_mismatch,
        "at most " + std::to_string(kMaxCounters) + " counters are supported");
  }

  std::vector<TransitionRule> rules = m.rules;
  std::vector<bool> well_formed(rules.size(), true);
  for (std::size_t i = 0; i < rules.size(); ++i) {
    auto& rule = rules[i];
    rule.guard.bind(m.propositions);
    if (rule.source >= m.states.size()) {
      add(report, ViolationKind::bad_reference,
          rule_name(i) + ": source must be a non-terminal state", {i});
      well_formed[i] = false;
    }
    if (rule.target >= m.state_count()) {
      add(report, ViolationKind::bad_reference, rule_name(i) + ": unknown target state", {i});
      well_formed[i] = false;
    }
    if (rule.zero_test.size() != m.counters || rule.modifier.size() != m.counters) {
      add(report, ViolationKind::dimension_mismatch,
          rule_name(i) + ": expected vectors of length " + std::to_string(m.counters) +
              ", got ZT " + std::to_string(rule.zero_test.size()) + " and ADD " +
              std::to_string(rule.modifier.size()),
          {i});
      well_formed[i] = false;
    }
    if (std::any_of(rule.zero_test.begin(), rule.zero_test.end(),
                    [](std::uint8_t b) { return b > 1; })) {
      add(report, ViolationKind::dimension_mismatch,
          rule_name(i) + ": zero-test entries must be 0 or 1", {i});
      well_formed[i] = false;
    }
    check_guard_atoms(rule.guard, m.propositions, i, report);
    if (rule.epsilon && !(rule.reward == RewardSpec::constant(0.0))) {
      add(report, ViolationKind::epsilon_reward,
          rule_name(i) + ": epsilon rules must carry reward 0", {i});
    }
    if (m.reward_kind == RewardKind::constants && !rule.reward.is_constant()) {
      add(report, ViolationKind::not_constant,
          rule_name(i) + ": constant-reward machine has a table reward", {i});
    }
  }
  if (report.has(ViolationKind::too_many_propositions)) return report;

  for (StateId u = 0; u < m.states.size(); ++u) {
    std::map<std::vector<std::uint8_t>, std::vector<std::size_t>> by_omega;
    for (std::size_t i = 0; i < rules.size(); ++i) {
      if (well_formed[i] && rules[i].source == u) by_omega[rules[i].zero_test].push_back(i);
    }
    for (const auto& [omega, indices] : by_omega) {
      std::string where = "(" + m.states[u] + "," +
                          CounterStateVector::from_bits(omega).to_string() + ")";
      std::vector<Candidate> symbol_rules;
      std::vector<std::size_t> epsilon_rules;
      for (std::size_t i : indices) {
        if (rules[i].epsilon) {
          epsilon_rules.push_back(i);
        } else {
          symbol_rules.push_back({i, &rules[i].guard});
        }
      }
      check_overlaps(symbol_rules, m.propositions, m.empty_label_gating, where,
                     [&](LabelSet l) { return l.to_string(m.propositions); }, report);
      if (epsilon_rules.size() > 1) {
        add(report, ViolationKind::nondeterminism,
            "nondeterminism at " + where + ": several epsilon rules", epsilon_rules);
      }
      if (!epsilon_rules.empty()) {
        for (const auto& c : symbol_rules) {
          if (satisfiable(*c.guard, m.propositions, m.empty_label_gating)) {
            add(report, ViolationKind::epsilon_conflict,
                "epsilon conflict at " + where + ": " + rule_name(c.index) +
                    " can fire alongside " + rule_name(epsilon_rules.front()),
                {c.index, epsilon_rules.front()});
          }
        }
      }
    }
  }
  return report;
}

ValidationReport validate(const RewardMachine& m) {
  ValidationReport report;
  check_states(m, report);
  std::vector<RewardMachine::Edge> edges = m.edges;
  std::vector<bool> well_formed(edges.size(), true);
  for (std::size_t i = 0; i < edges.size(); ++i) {
    auto& edge = edges[i];
    edge.guard.bind(m.propositions);
    if (edge.source >= m.states.size()) {
      add(report, ViolationKind::bad_reference,
          rule_name(i) + ": source must be a non-terminal state", {i});
      well_formed[i] = false;
    }
    if (edge.target >= m.state_count()) {
      add(report, ViolationKind::bad_reference, rule_name(i) + ": unknown target state", {i});
      well_formed[i] = false;
    }
    check_guard_atoms(edge.guard, m.propositions, i, report);
  }
  if (report.has(ViolationKind::too_many_propositions)) return report;
  for (StateId u = 0; u < m.states.size(); ++u) {
    std::vector<Candidate> candidates;
    for (std::size_t i = 0; i < edges.size(); ++i) {
      if (well_formed[i] && edges[i].source == u) candidates.push_back({i, &edges[i].guard});
    }
    check_overlaps(candidates, m.propositions, m.empty_label_gating, "(" + m.states[u] + ")",
                   [&](LabelSet l) { return l.to_string(m.propositions); }, report);
  }
  return report;
}

ValidationReport validate(const AcceptorMachine& acceptor) {
  ValidationReport report = validate(acceptor.machine);
  for (StateId id : acceptor.accepting) {
    if (id >= acceptor.machine.state_count()) {
      add(report, ViolationKind::bad_reference, "accepting state out of range");
    }
  }
  return report;
}

// ---------------------------------------------------------------------------
// Execution

MachineConfiguration initial_configuration(const CountingRewardAutomaton& machine) {
  return {machine.initial, CounterVector(machine.counters)};
}

bool rule_matches(const CountingRewardAutomaton& machine, const TransitionRule& rule,
                  const CounterStateVector& omega, LabelSet label) {
  if (rule.zero_test.size() != omega.size()) return false;
  for (std::size_t i = 0; i < omega.size(); ++i) {
    if (rule.zero_test[i] != omega[i]) return false;
  }
  return guard_fires(rule.guard, machine.empty_label_gating, label);
}

namespace {

void apply_rule(const TransitionRule& rule, MachineConfiguration& config) {
  for (std::size_t i = 0; i < rule.modifier.size(); ++i) {
    std::int64_t next = config.counters[i] + rule.modifier[i];
    if (next < 0) {
      throw Error(ErrorKind::counter_underflow,
                  "counter " + std::to_string(i) + " would drop below zero");
    }
    config.counters[i] = next;
  }
  config.state = rule.target;
}

const TransitionRule* find_epsilon(const CountingRewardAutomaton& machine,
                                   const MachineConfiguration& config) {
  std::vector<std::uint8_t> omega = zero_test(config.counters).to_vector();
  for (const auto& rule : machine.rules) {
    if (rule.epsilon && rule.source == config.state && rule.zero_test == omega) return &rule;
  }
  return nullptr;
}

}  // namespace

StepResult step(const CountingRewardAutomaton& machine, const MachineConfiguration& config,
                LabelSet label) {
  if (machine.is_terminal(config.state)) {
    throw Error(ErrorKind::terminal_step,
                "cannot step from terminal state '" + machine.state_name(config.state) + "'");
  }
  CounterStateVector omega = zero_test(config.counters);
  const TransitionRule* chosen = nullptr;
  for (const auto& rule : machine.rules) {
    if (rule.epsilon || rule.source != config.state) continue;
    if (!rule_matches(machine, rule, omega, label)) continue;
    if (chosen) {
      throw Error(ErrorKind::nondeterministic,
                  "several rules fire in state '" + machine.state_name(config.state) + "'");
    }
    chosen = &rule;
  }

  StepResult result{config, std::cref(zero_reward()), false};
  if (chosen) {
    apply_rule(*chosen, result.config);
    result.reward = std::cref(chosen->reward);
    result.fired = true;
  }
  std::size_t epsilon_steps = 0;
  while (!machine.is_terminal(result.config.state)) {
    const TransitionRule* eps = find_epsilon(machine, result.config);
    if (!eps) break;
    if (++epsilon_steps > machine.states.size()) {
      throw Error(ErrorKind::epsilon_loop, "epsilon closure did not terminate");
    }
    apply_rule(*eps, result.config);
    result.fired = true;
  }
  return result;
}

std::vector<TraceStep> run(const CountingRewardAutomaton& machine,
                           std::span<const LabelSet> inputs,
                           std::span<const TransitionContext> context) {
  std::vector<TraceStep> trace;
  MachineConfiguration config = initial_configuration(machine);
  for (std::size_t t = 0; t < inputs.size(); ++t) {
    if (machine.is_terminal(config.state)) break;
    StepResult r = step(machine, config, inputs[t]);
    TransitionContext ctx = t < context.size() ? context[t] : TransitionContext{};
    config = r.config;
    trace.push_back({config, r.reward.get().evaluate(ctx.state, ctx.action, ctx.next_state),
                     r.fired});
  }
  return trace;
}

bool accept(const AcceptorMachine& acceptor, std::span<const LabelSet> word) {
  const auto& machine = acceptor.machine;
  MachineConfiguration config = initial_configuration(machine);
  for (LabelSet symbol : word) {
    if (machine.is_terminal(config.state)) return false;
    try {
      StepResult r = step(machine, config, symbol);
      if (!r.fired) return false;
      config = r.config;
    } catch (const Error&) {
      return false;
    }
  }
  bool in_accepting = std::find(acceptor.accepting.begin(), acceptor.accepting.end(),
                                config.state) != acceptor.accepting.end();
  if (acceptor.mode == AcceptMode::state_and_zero_counters) {
    return in_accepting && config.counters.all_zero();
  }
  return in_accepting;
}

// ---------------------------------------------------------------------------
// Conversions

CountingRewardAutomaton ccra_to_cra(const CountingRewardAutomaton& ccra) {
  CountingRewardAutomaton out = ccra;
  for (auto& rule : out.rules) {
    rule.reward = RewardSpec::table(rule.reward.constant_value());
  }
  out.reward_kind = RewardKind::functions;
  return out;
}

CountingRewardAutomaton rm_to_cra(const RewardMachine& rm, std::size_t counters) {
  CountingRewardAutomaton out;
  out.states = rm.states;
  out.terminals = rm.terminals;
  out.propositions = rm.propositions;
  out.counters = counters;
  out.initial = rm.initial;
  out.empty_label_gating = rm.empty_label_gating;
  out.reward_kind = RewardKind::functions;
  out.rules.reserve(rm.edges.size());
  for (const auto& edge : rm.edges) {
    TransitionRule rule;
    rule.source = edge.source;
    rule.target = edge.target;
    rule.guard = edge.guard;
    rule.zero_test.assign(counters, 0);
    rule.modifier.assign(counters, 0);
    rule.reward = edge.reward;
    out.rules.push_back(std::move(rule));
  }
  out.bind_guards();
  return out;
}

Complexity complexity(const CountingRewardAutomaton& machine) {
  return {machine.state_count(), machine.rules.size(), machine.states.size()};
}

Complexity complexity(const RewardMachine& machine) {
  return {machine.state_count(), machine.edges.size(), machine.states.size()};
}

}  // namespace cra
