#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "cra/automaton.hpp"
#include "cra/envs.hpp"

namespace cra {

/// Γ = H × the largest positive counter increment of any rule (0 if none).
std::int64_t gamma_bound(const CountingRewardAutomaton& machine, int horizon);

/// ⟨s, u, c⟩.
struct ProductState {
  EnvState env;
  MachineConfiguration machine;

  friend bool operator==(const ProductState&, const ProductState&) = default;
};

struct ProductOutcome {
  ProductState next;
  double reward = 0.0;
  LabelSet label;           // in machine propositions
  bool fired = false;
  bool machine_terminal = false;
  bool truncated = false;   // horizon reached without terminating
  bool success = false;     // entered F through a reward-1 transition

  bool done() const { return machine_terminal || truncated; }
};

/// Environment × machine. Holds references; both must outlive it.
class Product {
 public:
  Product(const Environment& env, const CountingRewardAutomaton& machine,
          LabelBinding binding = {}, std::int64_t gamma = -1);

  const Environment& env() const { return env_; }
  const CountingRewardAutomaton& machine() const { return machine_; }
  const LabelBinding& binding() const { return binding_; }
  std::int64_t gamma() const { return gamma_; }

  ProductState reset(Rng& rng) const;
  /// env step, label, machine step; reward λ(u, σ, Z(c))(s, a, s′) over
  /// agent cell ids. Throws terminal_step, counter_underflow and
  /// counter_overflow (a counter above Γ).
  ProductOutcome step(const ProductState& x, Action a) const;

  /// Counter overflow check shared with counterfactual updates.
  bool within_gamma(const CounterVector& c) const;

 private:
  const Environment& env_;
  const CountingRewardAutomaton& machine_;
  LabelBinding binding_;
  std::int64_t gamma_;
};

/// Packs ⟨cell, u, c⟩ into 64 bits; throws bad_config when the widths do
/// not fit.
class StateCodec {
 public:
  StateCodec() = default;
  StateCodec(std::int64_t cells, std::size_t machine_states, std::size_t counters,
             std::int64_t gamma);

  std::uint64_t encode(std::int64_t cell, StateId u, const CounterVector& c) const;

 private:
  int cell_bits_ = 0;
  int state_bits_ = 0;
  int counter_bits_ = 0;
};

StateCodec make_codec(const Product& product);

/// Explicit finite MDP with indexed states and per-(state, action)
/// outcome distributions.
struct ExplicitMDP {
  struct Outcome {
    std::size_t next = 0;
    double probability = 1.0;
    double reward = 0.0;
  };
  std::size_t action_count = kActionCount;
  std::vector<std::vector<std::vector<Outcome>>> outcomes;  // [state][action]
  std::vector<bool> terminal;
  std::size_t initial = 0;
  double gamma = 0.9;

  std::size_t size() const { return outcomes.size(); }
};

struct EnumeratedProduct {
  ExplicitMDP mdp;
  std::vector<ProductState> states;  // index -> product state (steps = 0)
  /// Index of a product state, or SIZE_MAX when unreachable.
  std::size_t index_of(const Environment& env, const ProductState& x) const;

  std::vector<std::pair<std::tuple<std::uint64_t, StateId, CounterVector>, std::size_t>> keys;
};

/// Reachable-state enumeration of the product from its initial state. The
/// environment must use a fixed N; the step counter is ignored so the
/// result is a stationary MDP. Machine-terminal states are absorbing with
/// reward 0. Throws cap_exceeded when more than `cap` states are reached.
EnumeratedProduct enumerate_product(const Product& product, double gamma,
                                    std::size_t cap = 2'000'000);

struct ValueIterationResult {
  std::vector<double> values;
  std::vector<int> policy;                   // greedy action per state
  std::vector<std::uint8_t> optimal_actions; // bitmask of near-greedy actions
  std::size_t iterations = 0;
  double residual = 0.0;
};

/// Iterates the Bellman optimality operator until the sup-norm residual is
/// at most `tol`. Actions within `action_tol` of the best are recorded as
/// optimal. Throws non_convergence after `max_iterations`.
ValueIterationResult value_iteration(const ExplicitMDP& mdp, double tol = 1e-10,
                                     std::size_t max_iterations = 1'000'000,
                                     double action_tol = 1e-7);

}  // namespace cra
