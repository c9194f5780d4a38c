#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <tuple>
#include <variant>
#include <vector>

#include "cra/guard.hpp"

namespace cra {

using StateId = std::size_t;

inline constexpr std::size_t kMaxCounters = 8;

/// Non-negative counter values c ∈ ℕ^k, stored inline (k ≤ kMaxCounters).
class CounterVector {
 public:
  CounterVector() = default;
  explicit CounterVector(std::size_t k);
  CounterVector(std::initializer_list<std::int64_t> values);

  std::size_t size() const { return size_; }
  std::int64_t operator[](std::size_t i) const { return values_[i]; }
  std::int64_t& operator[](std::size_t i) { return values_[i]; }
  const std::int64_t* begin() const { return values_.data(); }
  const std::int64_t* end() const { return values_.data() + size_; }

  bool all_zero() const;
  std::string to_string() const;

  friend bool operator==(const CounterVector& a, const CounterVector& b) {
    return a.size_ == b.size_ && std::equal(a.begin(), a.end(), b.begin());
  }
  friend bool operator<(const CounterVector& a, const CounterVector& b) {
    return std::lexicographical_compare(a.begin(), a.end(), b.begin(), b.end());
  }

 private:
  std::array<std::int64_t, kMaxCounters> values_{};
  std::size_t size_ = 0;
};

/// Image of the zero-test Z: bit i is 0 iff counter i is 0.
class CounterStateVector {
 public:
  CounterStateVector() = default;
  CounterStateVector(std::size_t size, std::uint32_t bits) : bits_(bits), size_(size) {}
  static CounterStateVector from_bits(std::span<const std::uint8_t> bits);

  std::size_t size() const { return size_; }
  std::uint8_t operator[](std::size_t i) const { return (bits_ >> i) & 1u; }
  std::uint32_t bits() const { return bits_; }
  std::vector<std::uint8_t> to_vector() const;
  std::string to_string() const;

  friend bool operator==(const CounterStateVector&, const CounterStateVector&) = default;

 private:
  std::uint32_t bits_ = 0;
  std::size_t size_ = 0;
};

CounterStateVector zero_test(const CounterVector& counters);

struct ConstantReward {
  double value = 0.0;
  friend bool operator==(const ConstantReward&, const ConstantReward&) = default;
};

struct TableReward {
  using Key = std::tuple<std::int64_t, std::int64_t, std::int64_t>;
  double default_value = 0.0;
  std::map<Key, double> overrides;
  friend bool operator==(const TableReward&, const TableReward&) = default;
};

/// Reward output of a transition: either a constant or a function over
/// (state-id, action-id, state-id) triples with a default.
class RewardSpec {
 public:
  using Key = TableReward::Key;
  using Constant = ConstantReward;
  using TransitionTable = TableReward;

  RewardSpec() = default;
  static RewardSpec constant(double value) { return RewardSpec(Constant{value}); }
  static RewardSpec table(double default_value, std::map<Key, double> overrides = {}) {
    return RewardSpec(TransitionTable{default_value, std::move(overrides)});
  }

  bool is_constant() const { return std::holds_alternative<Constant>(value_); }
  /// Value of a Constant; throws not_constant for tables.
  double constant_value() const;
  const TransitionTable* as_table() const { return std::get_if<TransitionTable>(&value_); }

  double evaluate(std::int64_t state, std::int64_t action, std::int64_t next_state) const;

  friend bool operator==(const RewardSpec&, const RewardSpec&) = default;

 private:
  explicit RewardSpec(std::variant<Constant, TransitionTable> v) : value_(std::move(v)) {}
  std::variant<Constant, TransitionTable> value_;
};

/// Edge ⟨φ, ω, μ, r⟩ from `source` to `target`. Epsilon rules read no symbol
/// and ignore their guard.
struct TransitionRule {
  StateId source = 0;
  StateId target = 0;
  Guard guard;
  std::vector<std::uint8_t> zero_test;
  std::vector<std::int64_t> modifier;
  RewardSpec reward;
  bool epsilon = false;

  friend bool operator==(const TransitionRule&, const TransitionRule&) = default;
};

enum class RewardKind { functions, constants };

/// k-counter counting reward automaton. State ids index `all states`:
/// non-terminal states U first, then terminal states F.
struct CountingRewardAutomaton {
  std::vector<std::string> states;     // U
  std::vector<std::string> terminals;  // F
  PropositionList propositions;
  std::size_t counters = 0;
  std::vector<TransitionRule> rules;
  StateId initial = 0;
  RewardKind reward_kind = RewardKind::functions;
  /// Non-tautological guards need a non-empty label set to fire.
  bool empty_label_gating = true;

  std::size_t state_count() const { return states.size() + terminals.size(); }
  bool is_terminal(StateId id) const { return id >= states.size(); }
  const std::string& state_name(StateId id) const;
  /// Id for a name (non-terminal first); nullopt if absent.
  std::optional<StateId> find_state(std::string_view name) const;
  StateId state_id(std::string_view name) const;
  StateId terminal_id(std::size_t index) const { return states.size() + index; }

  /// Binds every guard to `propositions`. Call after building or editing rules.
  void bind_guards();

  friend bool operator==(const CountingRewardAutomaton&, const CountingRewardAutomaton&) = default;
};

/// Reward machine with guard-labelled edges. Unlisted (state, label)
/// pairs stay put with reward 0, like a CRA whose rule does not fire.
struct RewardMachine {
  struct Edge {
    StateId source = 0;
    Guard guard;
    StateId target = 0;
    RewardSpec reward;
    friend bool operator==(const Edge&, const Edge&) = default;
  };

  std::vector<std::string> states;
  std::vector<std::string> terminals;
  PropositionList propositions;
  std::vector<Edge> edges;
  StateId initial = 0;
  bool empty_label_gating = true;

  std::size_t state_count() const { return states.size() + terminals.size(); }
  bool is_terminal(StateId id) const { return id >= states.size(); }
  const std::string& state_name(StateId id) const;
  std::optional<StateId> find_state(std::string_view name) const;
  void bind_guards();

  friend bool operator==(const RewardMachine&, const RewardMachine&) = default;
};

struct MachineConfiguration {
  StateId state = 0;
  CounterVector counters;

  friend bool operator==(const MachineConfiguration&, const MachineConfiguration&) = default;
};

enum class AcceptMode { state_only, state_and_zero_counters };

struct AcceptorMachine {
  CountingRewardAutomaton machine;
  std::vector<StateId> accepting;
  AcceptMode mode = AcceptMode::state_and_zero_counters;

  friend bool operator==(const AcceptorMachine&, const AcceptorMachine&) = default;
};

// ---------------------------------------------------------------------------
// Validation

enum class ViolationKind {
  overlapping_states,
  bad_reference,
  unknown_proposition,
  dimension_mismatch,
  nondeterminism,
  epsilon_conflict,
  epsilon_reward,
  not_constant,
  too_many_propositions,
};

struct Violation {
  ViolationKind kind;
  std::string message;
  std::vector<std::size_t> rules;
};

struct ValidationReport {
  std::vector<Violation> violations;

  bool ok() const { return violations.empty(); }
  bool has(ViolationKind kind) const;
  std::string to_string() const;
};

/// Checks disjoint U/F, references, declared propositions, vector
/// dimensions, determinism over every (u, ω, σ ∈ 2^P) and epsilon rules.
ValidationReport validate(const CountingRewardAutomaton& machine);
ValidationReport validate(const RewardMachine& machine);
ValidationReport validate(const AcceptorMachine& acceptor);

// ---------------------------------------------------------------------------
// Execution

struct StepResult {
  MachineConfiguration config;
  std::reference_wrapper<const RewardSpec> reward;
  bool fired = false;
};

MachineConfiguration initial_configuration(const CountingRewardAutomaton& machine);

/// Whether `rule` fires on `label` under the machine's gating setting.
bool rule_matches(const CountingRewardAutomaton& machine, const TransitionRule& rule,
                  const CounterStateVector& omega, LabelSet label);

/// ⟨u′, c′⟩ = δ(u, σ, Z(c)) followed by epsilon closure. When nothing fires
/// the configuration is returned unchanged with a zero reward.
StepResult step(const CountingRewardAutomaton& machine, const MachineConfiguration& config,
                LabelSet label);

/// Environment transition used to evaluate function-valued rewards.
struct TransitionContext {
  std::int64_t state = 0;
  std::int64_t action = 0;
  std::int64_t next_state = 0;
};

struct TraceStep {
  MachineConfiguration config;
  double reward = 0.0;
  bool fired = false;
};

/// Folds `step` from the initial configuration, stopping once a terminal
/// state is entered. `context[i]` (when given) evaluates the i-th reward.
std::vector<TraceStep> run(const CountingRewardAutomaton& machine,
                           std::span<const LabelSet> inputs,
                           std::span<const TransitionContext> context = {});

/// Consumes `word` one label at a time; rejects when no rule fires.
bool accept(const AcceptorMachine& acceptor, std::span<const LabelSet> word);

// ---------------------------------------------------------------------------
// Conversions

/// Lifts every constant reward x to the function f_x(s, a, s′) = x.
/// Throws not_constant if any rule already carries a table.
CountingRewardAutomaton ccra_to_cra(const CountingRewardAutomaton& ccra);

/// One rule per RM edge, counters unused (all-zero tests and modifiers of
/// length `counters`).
CountingRewardAutomaton rm_to_cra(const RewardMachine& rm, std::size_t counters = 0);

struct Complexity {
  std::size_t states = 0;
  std::size_t transitions = 0;
  std::size_t non_terminal_states = 0;

  friend bool operator==(const Complexity&, const Complexity&) = default;
};

Complexity complexity(const CountingRewardAutomaton& machine);
Complexity complexity(const RewardMachine& machine);

}  // namespace cra
