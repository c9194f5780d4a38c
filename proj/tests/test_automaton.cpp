#include <doctest.h>

#include <random>

#include "cra/error.hpp"
#include "support.hpp"

using namespace cra;
using namespace cra::testing;

TEST_CASE("zero test") {
  CHECK(zero_test(CounterVector{0, 0}).to_vector() == std::vector<std::uint8_t>{0, 0});
  CHECK(zero_test(CounterVector{2}).to_vector() == std::vector<std::uint8_t>{1});
  CHECK(zero_test(CounterVector{0, 7, 1}).to_vector() == std::vector<std::uint8_t>{0, 1, 1});
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 500; ++trial) {
    CounterVector c(rng() % 5);
    for (std::size_t i = 0; i < c.size(); ++i) c[i] = static_cast<std::int64_t>(rng() % 3);
    auto z = zero_test(c);
    REQUIRE(z.size() == c.size());
    for (std::size_t i = 0; i < c.size(); ++i) REQUIRE((z[i] == 0) == (c[i] == 0));
  }
}

TEST_CASE("reward specs") {
  auto c = RewardSpec::constant(2.5);
  CHECK(c.evaluate(1, 2, 3) == 2.5);
  CHECK(c.constant_value() == 2.5);
  auto t = RewardSpec::table(-1.0, {{{1, 0, 2}, 4.0}});
  CHECK(t.evaluate(1, 0, 2) == 4.0);
  CHECK(t.evaluate(0, 0, 0) == -1.0);
  CHECK_THROWS_AS(t.constant_value(), Error);
}

TEST_CASE("validate: letter machine is clean") {
  auto report = validate(abc_counter_machine());
  CHECK_MESSAGE(report.ok(), report.to_string());
  CHECK(validate(anbn_acceptor()).ok());
}

TEST_CASE("validate: duplicated self loop is nondeterministic") {
  CountingRewardAutomaton m;
  m.states = {"u0"};
  m.propositions = {"A"};
  m.counters = 1;
  m.rules = {rule(0, 0, "A", {0}, {1}, 0), rule(0, 0, "A", {0}, {1}, 0)};
  auto report = validate(m);
  REQUIRE(report.has(ViolationKind::nondeterminism));
  CHECK(report.violations.front().message.find("(u0,[0],{A})") != std::string::npos);
}

TEST_CASE("validate: literal figure guards overlap on multi-proposition labels") {
  auto m = abc_counter_machine();
  m.rules[0].guard = parse_guard("A");
  m.rules[1].guard = parse_guard("A");
  m.rules[2].guard = parse_guard("B");
  m.bind_guards();
  auto report = validate(m);
  REQUIRE(report.has(ViolationKind::nondeterminism));
  CHECK(report.to_string().find("(u0,[1],{A,B})") != std::string::npos);
}

TEST_CASE("validate: dimension mismatch") {
  CountingRewardAutomaton m;
  m.states = {"u0"};
  m.propositions = {"A"};
  m.counters = 1;
  m.rules = {rule(0, 0, "A", {0}, {1, 0}, 0)};
  CHECK(validate(m).has(ViolationKind::dimension_mismatch));
}

TEST_CASE("validate: structural violations") {
  auto m = abc_counter_machine();
  m.terminals.push_back("u1");
  CHECK(validate(m).has(ViolationKind::overlapping_states));

  m = abc_counter_machine();
  m.rules[0].guard = parse_guard("A & Z");
  CHECK(validate(m).has(ViolationKind::unknown_proposition));

  m = abc_counter_machine();
  m.rules[0].source = 2;
  CHECK(validate(m).has(ViolationKind::bad_reference));

  m = abc_counter_machine();
  m.rules[0].reward = RewardSpec::table(0.0);
  CHECK(validate(m).has(ViolationKind::not_constant));
}

TEST_CASE("validate: gating separates tautology from the all-negative guard") {
  CountingRewardAutomaton m;
  m.states = {"u0"};
  m.terminals = {"f"};
  m.propositions = {"A", "B"};
  m.counters = 0;
  m.rules = {rule(0, 1, "!A", {}, {}, 0), rule(0, 0, "A", {}, {}, 0)};
  CHECK(validate(m).ok());
  m.rules.push_back(rule(0, 1, "TRUE", {}, {}, 0));
  CHECK(validate(m).has(ViolationKind::nondeterminism));
}

TEST_CASE("validate: epsilon rules") {
  CountingRewardAutomaton m;
  m.states = {"u0", "u1"};
  m.terminals = {"f"};
  m.propositions = {"A"};
  m.counters = 1;
  auto eps = rule(1, 2, "TRUE", {0}, {0}, 0);
  eps.epsilon = true;
  m.rules = {rule(0, 1, "A", {0}, {0}, 0), eps};
  CHECK(validate(m).ok());
  m.rules.push_back(rule(1, 1, "A", {0}, {0}, 0));
  CHECK(validate(m).has(ViolationKind::epsilon_conflict));
  m.rules.pop_back();
  m.rules[1].reward = RewardSpec::constant(1.0);
  CHECK(validate(m).has(ViolationKind::epsilon_reward));
}

TEST_CASE("step on the letter machine") {
  auto m = abc_counter_machine();
  const auto& P = m.propositions;

  auto r = step(m, {0, CounterVector{0}}, label(P, "A"));
  CHECK(r.fired);
  CHECK(r.config == MachineConfiguration{0, CounterVector{1}});
  CHECK(r.reward.get() == RewardSpec::constant(0));

  r = step(m, {1, CounterVector{0}}, label(P, "A"));
  CHECK(r.fired);
  CHECK(m.is_terminal(r.config.state));
  CHECK(r.reward.get() == RewardSpec::constant(1));

  r = step(m, {0, CounterVector{1}}, LabelSet{});
  CHECK_FALSE(r.fired);
  CHECK(r.config == MachineConfiguration{0, CounterVector{1}});
  CHECK(r.reward.get() == RewardSpec::constant(0));

  CHECK_THROWS_AS(step(m, {2, CounterVector{0}}, label(P, "A")), Error);
}

TEST_CASE("gating off lets the all-negative guard fire on the empty label") {
  auto m = abc_counter_machine();
  m.empty_label_gating = false;
  auto r = step(m, {0, CounterVector{1}}, LabelSet{});
  CHECK(r.fired);
  CHECK(r.config.state == m.state_id("f0"));
}

TEST_CASE("counter underflow is an error") {
  CountingRewardAutomaton m;
  m.states = {"u0"};
  m.propositions = {"A"};
  m.counters = 1;
  m.rules = {rule(0, 0, "A", {0}, {-1}, 0)};
  m.bind_guards();
  try {
    step(m, initial_configuration(m), LabelSet(1));
    FAIL("expected underflow");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::counter_underflow);
  }
}

TEST_CASE("epsilon closure") {
  CountingRewardAutomaton m;
  m.states = {"u0", "u1", "u2"};
  m.terminals = {"f"};
  m.propositions = {"A"};
  m.counters = 1;
  auto e1 = rule(1, 2, "TRUE", {1}, {-1}, 0);
  auto e2 = rule(2, 3, "TRUE", {0}, {0}, 0);
  e1.epsilon = e2.epsilon = true;
  m.rules = {rule(0, 1, "A", {0}, {1}, 5), e1, e2};
  m.bind_guards();
  REQUIRE(validate(m).ok());
  auto r = step(m, initial_configuration(m), LabelSet(1));
  CHECK(r.fired);
  CHECK(r.config == MachineConfiguration{3, CounterVector{0}});
  CHECK(r.reward.get().constant_value() == 5);

  // u1 and u2 bounce forever without consuming input.
  m.rules = {rule(0, 1, "A", {0}, {0}, 0), rule(1, 2, "TRUE", {0}, {0}, 0),
             rule(2, 1, "TRUE", {0}, {0}, 0)};
  m.rules[1].epsilon = m.rules[2].epsilon = true;
  m.bind_guards();
  try {
    step(m, initial_configuration(m), LabelSet(1));
    FAIL("expected epsilon loop");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::epsilon_loop);
  }
}

TEST_CASE("run on the letter machine") {
  auto m = abc_counter_machine();
  const auto& P = m.propositions;
  std::vector<LabelSet> word{label(P, "A"), label(P, "A"), label(P, "B"),
                             label(P, "C"), label(P, "C"), label(P, "C")};
  auto trace = run(m, word);
  REQUIRE(trace.size() == 6);
  std::vector<double> rewards;
  for (const auto& s : trace) rewards.push_back(s.reward);
  CHECK(rewards == std::vector<double>{0, 0, 0, 0, 0, 1});
  CHECK(trace[1].config.counters == CounterVector{2});
  CHECK(trace[2].config.state == 1);
  CHECK(m.is_terminal(trace.back().config.state));

  CHECK(run(m, std::vector<LabelSet>{}).empty());

  auto fail = run(m, std::vector<LabelSet>{label(P, "C"), label(P, "A")});
  REQUIRE(fail.size() == 1);
  CHECK(fail[0].config.state == m.state_id("f0"));
  CHECK(fail[0].reward == 0);
}

TEST_CASE("run evaluates table rewards on the transition context") {
  auto m = ccra_to_cra(abc_counter_machine());
  m.rules[7].reward = RewardSpec::table(1.0, {{{3, 1, 4}, 9.0}});
  const auto& P = m.propositions;
  std::vector<LabelSet> word{label(P, "A"), label(P, "B"), label(P, "C"), label(P, "C")};
  std::vector<TransitionContext> ctx(4);
  ctx[3] = {3, 1, 4};
  CHECK(run(m, word, ctx).back().reward == 9.0);
}

namespace {

std::vector<LabelSet> word_of(const AcceptorMachine& a, std::string_view text) {
  std::vector<LabelSet> out;
  for (char c : text) out.push_back(label(a.machine.propositions, std::string(1, c)));
  return out;
}

}  // namespace

TEST_CASE("acceptor examples") {
  auto a = anbn_acceptor();
  CHECK(accept(a, word_of(a, "AABB")));
  CHECK_FALSE(accept(a, word_of(a, "")));
  CHECK_FALSE(accept(a, word_of(a, "AAB")));
  CHECK_FALSE(accept(a, word_of(a, "ABB")));
  CHECK_FALSE(accept(a, word_of(a, "BA")));
  a.mode = AcceptMode::state_only;
  CHECK(accept(a, word_of(a, "AAB")));
}

TEST_CASE("acceptor agrees with the A^N B^N predicate up to length 12") {
  auto a = anbn_acceptor();
  for (std::size_t len = 0; len <= 12; ++len) {
    for (std::uint32_t bits = 0; bits < (1u << len); ++bits) {
      std::string w;
      for (std::size_t i = 0; i < len; ++i) w += ((bits >> i) & 1u) ? 'B' : 'A';
      std::size_t n = w.find('B');
      bool expected = len >= 2 && len % 2 == 0 && n == len / 2 &&
                      w == std::string(n, 'A') + std::string(n, 'B');
      REQUIRE_MESSAGE(accept(a, word_of(a, w)) == expected, w);
    }
  }
}

TEST_CASE("determinism holds on every reachable configuration") {
  auto m = abc_counter_machine();
  for (StateId u = 0; u < m.states.size(); ++u) {
    for (std::int64_t c = 0; c <= 3; ++c) {
      for (std::uint32_t bits = 0; bits < 8; ++bits) {
        std::size_t firing = 0;
        auto omega = zero_test(CounterVector{c});
        for (const auto& r : m.rules) {
          if (r.source == u && rule_matches(m, r, omega, LabelSet(bits))) ++firing;
        }
        REQUIRE(firing <= 1);
      }
    }
  }
}

TEST_CASE("ccra_to_cra") {
  auto ccra = abc_counter_machine();
  auto cra = ccra_to_cra(ccra);
  CHECK(cra.reward_kind == RewardKind::functions);
  CHECK(cra.states == ccra.states);
  CHECK(cra.terminals == ccra.terminals);
  CHECK(cra.rules.size() == 8);
  std::mt19937_64 rng(11);
  for (const auto& r : cra.rules) {
    REQUIRE(r.reward.as_table() != nullptr);
    for (int i = 0; i < 20; ++i) {
      auto s = static_cast<std::int64_t>(rng() % 100);
      CHECK(r.reward.evaluate(s, s % 4, s + 1) ==
            ccra.rules[static_cast<std::size_t>(&r - cra.rules.data())].reward.constant_value());
    }
  }
  CHECK_THROWS_AS(ccra_to_cra(cra), Error);
}

TEST_CASE("ccra_to_cra preserves reward traces on random machines") {
  std::mt19937_64 rng(2024);
  for (int trial = 0; trial < 1000; ++trial) {
    auto ccra = random_ccra(rng);
    REQUIRE_MESSAGE(validate(ccra).ok(), validate(ccra).to_string());
    auto cra = ccra_to_cra(ccra);
    auto word = random_word(rng, ccra.propositions.size(), 50);
    std::vector<TransitionContext> ctx;
    for (std::size_t i = 0; i < word.size(); ++i) {
      ctx.push_back({static_cast<std::int64_t>(rng() % 36), static_cast<std::int64_t>(rng() % 4),
                     static_cast<std::int64_t>(rng() % 36)});
    }
    auto a = run(ccra, word, ctx);
    auto b = run(cra, word, ctx);
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
      REQUIRE(a[i].reward == b[i].reward);
      REQUIRE(a[i].config == b[i].config);
    }
  }
}

TEST_CASE("rm_to_cra preserves counts and traces") {
  std::mt19937_64 rng(99);
  for (int trial = 0; trial < 1000; ++trial) {
    auto rm = random_rm(rng);
    REQUIRE(validate(rm).ok());
    auto cra = rm_to_cra(rm, trial % 2);
    REQUIRE(validate(cra).ok());
    CHECK(complexity(cra) == complexity(rm));
    auto word = random_word(rng, rm.propositions.size(), 50);
    auto expected = run_rm_reference(rm, word);
    auto trace = run(cra, word);
    REQUIRE(trace.size() == expected.size());
    for (std::size_t i = 0; i < trace.size(); ++i) {
      REQUIRE(trace[i].config.state == expected[i].first);
      REQUIRE(trace[i].reward == expected[i].second);
    }
  }
}

TEST_CASE("rm_to_cra on a one-state machine emits zero forever") {
  RewardMachine rm;
  rm.states = {"u0"};
  rm.propositions = {"A"};
  rm.edges = {{0, Guard::tautology(), 0, RewardSpec::constant(0)}};
  auto cra = rm_to_cra(rm, 1);
  CHECK(cra.rules[0].modifier == std::vector<std::int64_t>{0});
  std::vector<LabelSet> word(30, LabelSet(1));
  for (const auto& s : run(cra, word)) CHECK(s.reward == 0);
}

TEST_CASE("complexity") {
  CHECK(complexity(abc_counter_machine()) == Complexity{4, 8, 2});
  CountingRewardAutomaton single;
  single.states = {"u0"};
  auto c = complexity(single);
  CHECK(c.states == 1);
  CHECK(c.transitions == 0);
}
