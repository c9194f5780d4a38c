#include <doctest.h>

#include <cmath>
#include <deque>
#include <map>
#include <set>

#include "cra/aamdp.hpp"
#include "cra/error.hpp"
#include "cra/machine_io.hpp"
#include "support.hpp"

using namespace cra;
using cra::testing::abc_counter_machine;

namespace {

struct Fixture {
  LetterEnv env;
  CountingRewardAutomaton machine = abc_counter_machine();
  LabelBinding binding{env.propositions(), machine.propositions};

  explicit Fixture(int n, int horizon = 500) : env(EnvConfig{horizon, 10, n}) {}
};

ProductState placed(const Product& p, GridPosition agent) {
  Rng rng(0);
  ProductState x = p.reset(rng);
  x.env.agent = agent;
  return x;
}

// Shortest number of steps to a reward-1 terminal transition, found by
// composing environment and machine steps by hand.
int shortest_solution(const LetterEnv& env, const CountingRewardAutomaton& m) {
  using Key = std::tuple<std::uint64_t, StateId, CounterVector>;
  Rng rng(0);
  std::map<Key, int> dist;
  std::deque<std::pair<EnvState, MachineConfiguration>> queue;
  EnvState s0 = env.reset(rng);
  queue.emplace_back(s0, initial_configuration(m));
  dist[{env.full_key(s0), queue.front().second.state, queue.front().second.counters}] = 0;
  while (!queue.empty()) {
    auto [s, c] = queue.front();
    queue.pop_front();
    int d = dist[{env.full_key(s), c.state, c.counters}];
    for (Action a : kActions) {
      EnvState s2 = env.step(s, a);
      s2.steps = 0;
      LabelSet l(env.label(s, a, s2).bits() & 0b111u);
      StepResult r = step(m, c, l);
      if (m.is_terminal(r.config.state)) {
        if (r.reward.get().evaluate(0, 0, 0) == 1.0) return d + 1;
        continue;
      }
      Key key{env.full_key(s2), r.config.state, r.config.counters};
      if (dist.emplace(key, d + 1).second) queue.emplace_back(s2, r.config);
    }
  }
  return -1;
}

}  // namespace

TEST_CASE("gamma bound") {
  CHECK(gamma_bound(abc_counter_machine(), 500) == 500);
  auto m = abc_counter_machine();
  for (auto& r : m.rules) {
    for (auto& d : r.modifier) d = std::min<std::int64_t>(d, 0);
  }
  CHECK(gamma_bound(m, 100) == 0);
  auto office = load_machine(CRA_FIXTURES "/office.ccra").as_cra();
  CHECK(gamma_bound(office, 1000) == 1000);
  CHECK_THROWS_AS(gamma_bound(office, 0), Error);
}

TEST_CASE("product step") {
  Fixture f(2);
  Product p(f.env, f.machine, f.binding);
  CHECK(p.gamma() == 500);

  // A is at (1,4).
  ProductState x = placed(p, {1, 3});
  ProductOutcome o = p.step(x, Action::south);
  CHECK(o.next.env.agent == GridPosition{1, 4});
  CHECK(o.next.machine.state == 0);
  CHECK(o.next.machine.counters == CounterVector{1});
  CHECK(o.reward == 0.0);
  CHECK(o.fired);
  CHECK_FALSE(o.done());

  // Empty label leaves the machine alone.
  ProductOutcome e = p.step(o.next, Action::east);
  CHECK(e.label.empty());
  CHECK(e.next.machine == o.next.machine);
  CHECK_FALSE(e.fired);
  CHECK(e.reward == 0.0);

  // D has no machine proposition and is dropped.
  ProductState nearD = placed(p, {3, 1});
  ProductOutcome d = p.step(nearD, Action::east);
  CHECK(d.label.empty());
  CHECK(d.next.machine == nearD.machine);
}

TEST_CASE("product terminal and overflow errors") {
  Fixture f(3);
  Product p(f.env, f.machine, f.binding);
  ProductState x = placed(p, {1, 3});
  x.machine.state = f.machine.terminal_id(0);
  try {
    p.step(x, Action::south);
    FAIL("expected TerminalStep");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::terminal_step);
  }

  Product tight(f.env, f.machine, f.binding, 1);
  ProductState y = placed(tight, {1, 3});
  y = tight.step(y, Action::south).next;
  y = tight.step(y, Action::north).next;
  try {
    tight.step(y, Action::south);
    FAIL("expected CounterOverflow");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::counter_overflow);
  }
}

TEST_CASE("product rollouts agree with manual composition") {
  LetterEnv env(EnvConfig{60, 4, {}});
  auto m = load_machine(CRA_FIXTURES "/letter_cfl.ccra").as_cra();
  Product p(env, m, LabelBinding(env.propositions(), m.propositions));
  Rng rng(17);
  int terminal = 0;
  for (int episode = 0; episode < 300; ++episode) {
    ProductState x = p.reset(rng);
    EnvState s = x.env;
    MachineConfiguration c = initial_configuration(m);
    for (;;) {
      Action a = kActions[uniform_index(rng, 4)];
      ProductOutcome o = p.step(x, a);
      EnvState s2 = env.step(s, a);
      StepResult r = step(m, c, env.label(s, a, s2));
      CHECK(o.next.env == s2);
      CHECK(o.next.machine == r.config);
      CHECK(o.reward == r.reward.get().evaluate(0, 0, 0));
      x = o.next;
      s = s2;
      c = r.config;
      if (o.done()) {
        terminal += o.machine_terminal;
        break;
      }
    }
  }
  CHECK(terminal > 0);
}

TEST_CASE("table rewards see agent cells") {
  Fixture f(1);
  auto m = f.machine;
  // u0 self-loop on A at [0]: pay 2 only when entering (1,4) from (1,3)
  // moving south.
  m.rules[0].reward = RewardSpec::table(0.0, {{{3 * 6 + 1, 1, 4 * 6 + 1}, 2.0}});
  m.reward_kind = RewardKind::functions;
  Product p(f.env, m, f.binding);
  CHECK(p.step(placed(p, {1, 3}), Action::south).reward == 2.0);
  CHECK(p.step(placed(p, {0, 4}), Action::east).reward == 0.0);
}

TEST_CASE("codec") {
  StateCodec codec(36, 4, 1, 4);
  CHECK(codec.encode(0, 0, CounterVector{0}) == 0);
  CHECK(codec.encode(35, 3, CounterVector{4}) != codec.encode(35, 3, CounterVector{3}));
  std::set<std::uint64_t> keys;
  for (int cell = 0; cell < 36; ++cell) {
    for (StateId u = 0; u < 4; ++u) {
      for (int c = 0; c <= 4; ++c) keys.insert(codec.encode(cell, u, CounterVector{c}));
    }
  }
  CHECK(keys.size() == 36 * 4 * 5);
  CHECK_THROWS_AS(StateCodec(1 << 20, 8, 8, 1 << 20), Error);
}

TEST_CASE("enumeration of the letter product") {
  Fixture f(2);
  Product p(f.env, f.machine, f.binding, 4);
  EnumeratedProduct e = enumerate_product(p, 0.9);
  CHECK(e.mdp.size() == 184);  // golden
  CHECK(e.mdp.size() <= 36 * 4 * 5 * 3);
  for (std::size_t s = 0; s < e.mdp.size(); ++s) {
    for (const auto& outcomes : e.mdp.outcomes[s]) {
      double total = 0.0;
      for (const auto& o : outcomes) total += o.probability;
      CHECK(std::abs(total - 1.0) <= 1e-12);
      if (e.mdp.terminal[s]) {
        REQUIRE(outcomes.size() == 1);
        CHECK(outcomes[0].next == s);
        CHECK(outcomes[0].reward == 0.0);
      }
    }
    CHECK(e.index_of(f.env, e.states[s]) == s);
  }
  CHECK(e.mdp.initial == 0);

  try {
    enumerate_product(p, 0.9, 100);
    FAIL("expected CapExceeded");
  } catch (const Error& err) {
    CHECK(err.kind() == ErrorKind::cap_exceeded);
  }

  LetterEnv random_n(EnvConfig{500, 3, {}});
  Product q(random_n, f.machine, f.binding, 4);
  CHECK_THROWS_AS(enumerate_product(q, 0.9), Error);
}

TEST_CASE("enumeration of a machine that ends on the first event") {
  CountingRewardAutomaton m;
  m.states = {"u"};
  m.terminals = {"f"};
  m.propositions = {"A", "B", "C", "D"};
  m.rules.push_back(cra::testing::rule(0, 1, "A | C | D", {}, {}, 1.0));
  m.reward_kind = RewardKind::constants;
  m.bind_guards();
  REQUIRE(validate(m).ok());
  LetterEnv env(EnvConfig{500, 10, 1});
  Product p(env, m);
  EnumeratedProduct e = enumerate_product(p, 0.9);
  std::size_t terminals = 0;
  for (std::size_t s = 0; s < e.mdp.size(); ++s) terminals += e.mdp.terminal[s];
  CHECK(terminals == 3);  // entering A, C or D
  ValueIterationResult vi = value_iteration(e.mdp);
  CHECK(vi.values[e.mdp.initial] == doctest::Approx(std::pow(0.9, 4)).epsilon(1e-9));
}

TEST_CASE("value iteration on small chains") {
  ExplicitMDP chain;
  chain.gamma = 0.9;
  chain.action_count = 1;
  chain.outcomes = {{{{1, 1.0, 0.0}}}, {{{2, 1.0, 1.0}}}, {{{2, 1.0, 0.0}}}};
  chain.terminal = {false, false, true};
  ValueIterationResult vi = value_iteration(chain, 1e-12);
  CHECK(vi.values[0] == doctest::Approx(0.9).epsilon(1e-12));
  CHECK(vi.values[1] == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(vi.values[2] == 0.0);

  ExplicitMDP zero;
  zero.gamma = 0.95;
  zero.outcomes = {{{{1, 1.0, 0.0}}, {{0, 1.0, 0.0}}}, {{{0, 0.5, 0.0}, {1, 0.5, 0.0}}, {{1, 1.0, 0.0}}}};
  zero.action_count = 2;
  zero.terminal = {false, false};
  vi = value_iteration(zero);
  CHECK(vi.values == std::vector<double>{0.0, 0.0});
  CHECK(vi.optimal_actions[0] == 0b11);

  ExplicitMDP loop;
  loop.gamma = 0.999;
  loop.action_count = 1;
  loop.outcomes = {{{{0, 1.0, 1.0}}}};
  loop.terminal = {false};
  try {
    value_iteration(loop, 1e-12, 10);
    FAIL("expected NonConvergence");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::non_convergence);
  }
}

TEST_CASE("value iteration matches shortest paths on the letter product") {
  for (int n : {1, 2, 3}) {
    Fixture f(n);
    Product p(f.env, f.machine, f.binding, 8);
    EnumeratedProduct e = enumerate_product(p, 0.9);
    ValueIterationResult vi = value_iteration(e.mdp, 1e-12);
    int t = shortest_solution(f.env, f.machine);
    REQUIRE(t > 0);
    CHECK(vi.values[e.mdp.initial] == doctest::Approx(std::pow(0.9, t - 1)).epsilon(1e-9));

    // Bellman optimality holds at every state.
    for (std::size_t s = 0; s < e.mdp.size(); ++s) {
      if (e.mdp.terminal[s]) continue;
      double best = -1.0;
      for (const auto& outcomes : e.mdp.outcomes[s]) {
        const auto& o = outcomes[0];
        best = std::max(best, o.reward + (e.mdp.terminal[o.next] ? 0.0 : 0.9 * vi.values[o.next]));
      }
      CHECK(std::abs(best - vi.values[s]) <= 1e-10);
    }

    // The greedy rollout solves the task in t steps.
    ProductState x = e.states[e.mdp.initial];
    double ret = 0.0, discount = 1.0;
    int steps = 0;
    for (; steps < 200; ++steps) {
      ProductOutcome o = p.step(x, kActions[vi.policy[e.index_of(f.env, x)]]);
      ret += discount * o.reward;
      discount *= 0.9;
      x = o.next;
      x.env.steps = 0;
      if (o.machine_terminal) break;
    }
    CHECK(steps + 1 == t);
    CHECK(ret == doctest::Approx(std::pow(0.9, t - 1)).epsilon(1e-12));
  }
}
