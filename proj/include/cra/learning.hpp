#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <set>
#include <unordered_map>
#include <vector>

#include "cra/aamdp.hpp"

namespace cra {

/// Q(x, a) over encoded product states; unseen entries read as 0.
class QTable {
 public:
  using Values = std::array<double, kActionCount>;

  const Values& get(std::uint64_t key) const;
  Values& at(std::uint64_t key) { return table_[key]; }
  std::size_t size() const { return table_.size(); }
  const std::unordered_map<std::uint64_t, Values>& entries() const { return table_; }

  friend bool operator==(const QTable&, const QTable&) = default;

 private:
  std::unordered_map<std::uint64_t, Values> table_;
};

/// With probability ε a uniform action, otherwise an argmax with ties broken
/// uniformly. Always draws one uniform number first.
int epsilon_greedy(const QTable::Values& q, double epsilon, Rng& rng);
/// Lowest-index argmax.
int greedy_action(const QTable::Values& q);

/// The single tabular update: Q(x,a) ← Q + α(target − Q) with target r on
/// terminal transitions and r + γ max_a′ Q(x′,a′) otherwise.
void q_update(QTable& q, std::uint64_t key, int action, double reward, std::uint64_t next_key,
              bool terminal, double alpha, double gamma);

/// Observed counter vectors, in first-seen order; always holds the zero
/// vector.
class CounterCache {
 public:
  explicit CounterCache(std::size_t counters = 0);
  /// Every vector of {0..Γ}^k; throws bad_config above one million entries.
  static CounterCache full(std::size_t counters, std::int64_t gamma);

  bool insert(const CounterVector& c);
  bool contains(const CounterVector& c) const { return seen_.count(c) > 0; }
  const std::vector<CounterVector>& values() const { return order_; }
  std::size_t size() const { return order_.size(); }

 private:
  std::vector<CounterVector> order_;
  std::set<CounterVector> seen_;
};

struct Experience {
  StateId state = 0;
  CounterVector counters;
  StateId next_state = 0;
  CounterVector next_counters;
  double reward = 0.0;
  bool terminal = false;
  bool fired = false;
};

/// One synthetic experience per u ∈ U and c ∈ cache, in that nesting order.
/// Machine errors (underflow, ε loops) and counters above `gamma` drop the
/// experience.
std::vector<Experience> counterfactual_experiences(const CountingRewardAutomaton& machine,
                                                   LabelSet label, std::int64_t s, int action,
                                                   std::int64_t next_s,
                                                   const CounterCache& cache,
                                                   std::int64_t gamma);

struct LearnParams {
  double alpha = 0.5;
  double gamma = 0.9;
  double epsilon = 0.1;
  int episodes = 5000;
  std::uint64_t seed = 0;
  double success_threshold = 0.95;
  /// Greedy evaluation every `eval_every` episodes (0 disables).
  int eval_every = 10;
  int eval_episodes = 100;
  /// When non-empty, each evaluation runs one greedy episode per listed N
  /// instead of sampled episodes.
  std::vector<int> eval_ns;
  /// Consecutive evaluations at or above the threshold that count as solved.
  int solved_window = 10;
  bool stop_when_solved = false;
  /// Stop after this many environment steps (0: no limit).
  std::int64_t max_steps = 0;
  bool full_enumeration = false;
  bool skip_unfired = false;
};

struct EvalResult {
  double mean_return = 0.0;
  double success_rate = 0.0;
  int episodes = 0;

  bool empty() const { return episodes == 0; }
};

struct CurvePoint {
  int episode = 0;
  std::int64_t steps = 0;
  double mean_return = 0.0;
  double success_rate = 0.0;
};

struct LearnResult {
  QTable q;
  std::vector<CurvePoint> curve;
  std::int64_t steps = 0;
  int episodes = 0;
  /// Environment steps at the first of `solved_window` consecutive
  /// evaluations meeting the threshold.
  std::optional<std::int64_t> samples_to_solve;
  std::optional<int> episodes_to_solve;
  std::size_t cache_size = 0;
  std::int64_t updates = 0;
};

/// Deterministic policy over product states.
using GreedyPolicy = std::function<int(const ProductState&)>;

/// Rollouts of a deterministic policy. Environments are deterministic after
/// reset, so an episode that revisits a state with no reward gained in
/// between is cut short as a failure.
EvalResult evaluate_greedy(const Product& product, const GreedyPolicy& policy, int episodes,
                           std::uint64_t seed);
/// One rollout per N.
EvalResult evaluate_greedy_fixed(const Product& product, const GreedyPolicy& policy,
                                 const std::vector<int>& ns);

/// evaluate_greedy with the lowest-index argmax of `q`.
EvalResult evaluate_policy(const QTable& q, const Product& product, const StateCodec& codec,
                           int episodes, std::uint64_t seed);
/// One greedy rollout per N.
EvalResult evaluate_policy_fixed(const QTable& q, const Product& product,
                                 const StateCodec& codec, const std::vector<int>& ns);

/// One real step from `x` with action `a` followed by the Q-learning update.
ProductOutcome q_learning_step(QTable& q, const Product& product, const StateCodec& codec,
                               const ProductState& x, int a, const LearnParams& params);
/// One real step followed by an update per counterfactual experience; the
/// reached counters join the cache. Returns the number of updates applied
/// through `updates`.
ProductOutcome cql_step(QTable& q, const Product& product, const StateCodec& codec,
                        CounterCache& cache, const ProductState& x, int a,
                        const LearnParams& params, std::int64_t* updates = nullptr);

/// Tabular Q-learning on the product.
LearnResult q_learning(const Product& product, const LearnParams& params);
/// Counterfactual Q-learning over the observed-counter cache.
LearnResult cql(const Product& product, const LearnParams& params);

/// Reward machine for A^N B C D^N on LetterEnv. a_0..a_N count A (a_N waits
/// for B), b waits for C, c waits for the first D, d_1..d_N count D and a
/// tautology edge from d_N pays 1. Off-pattern events fail.
RewardMachine generate_rm_letterenv(int n);

/// The office CCRA unrolled for at most N letters. Configurations become
/// states; one more mail than N leads to an `overflow` terminal.
RewardMachine generate_rm_office(int n);

/// Unrolls a CRA into an RM by exploring configurations from the initial
/// one with every counter capped at `bound`. Rewards must be constant.
RewardMachine unroll_to_rm(const CountingRewardAutomaton& machine, std::int64_t bound);

/// The two-counter office machine shipped with the project.
CountingRewardAutomaton office_machine();
/// The two-counter A^N B C D^N machine shipped with the project.
CountingRewardAutomaton letter_machine();

}  // namespace cra
