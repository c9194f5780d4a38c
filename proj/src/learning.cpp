#include "cra/learning.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <map>

#include "cra/error.hpp"

namespace cra {

const QTable::Values& QTable::get(std::uint64_t key) const {
  static const Values zeros{};
  auto it = table_.find(key);
  return it == table_.end() ? zeros : it->second;
}

int epsilon_greedy(const QTable::Values& q, double epsilon, Rng& rng) {
  if (uniform01(rng) < epsilon) return static_cast<int>(uniform_index(rng, kActionCount));
  double best = *std::max_element(q.begin(), q.end());
  std::array<int, kActionCount> ties{};
  int count = 0;
  for (int a = 0; a < kActionCount; ++a) {
    if (q[static_cast<std::size_t>(a)] == best) ties[static_cast<std::size_t>(count++)] = a;
  }
  if (count == 1) return ties[0];
  return ties[uniform_index(rng, static_cast<std::uint64_t>(count))];
}

int greedy_action(const QTable::Values& q) {
  return static_cast<int>(std::max_element(q.begin(), q.end()) - q.begin());
}

void q_update(QTable& q, std::uint64_t key, int action, double reward, std::uint64_t next_key,
              bool terminal, double alpha, double gamma) {
  double target = reward;
  if (!terminal) {
    const auto& next = q.get(next_key);
    target += gamma * *std::max_element(next.begin(), next.end());
  }
  double& value = q.at(key)[static_cast<std::size_t>(action)];
  value += alpha * (target - value);
}

CounterCache::CounterCache(std::size_t counters) { insert(CounterVector(counters)); }

CounterCache CounterCache::full(std::size_t counters, std::int64_t gamma) {
  double total = std::pow(static_cast<double>(gamma + 1), static_cast<double>(counters));
  if (total > 1e6) {
    throw Error(ErrorKind::bad_config, "full counter enumeration would need " +
                                           std::to_string(total) + " vectors");
  }
  CounterCache cache(counters);
  CounterVector c(counters);
  for (;;) {
    cache.insert(c);
    std::size_t i = 0;
    while (i < counters && c[i] == gamma) c[i++] = 0;
    if (i == counters) break;
    ++c[i];
  }
  return cache;
}

bool CounterCache::insert(const CounterVector& c) {
  if (!seen_.insert(c).second) return false;
  order_.push_back(c);
  return true;
}

std::vector<Experience> counterfactual_experiences(const CountingRewardAutomaton& machine,
                                                   LabelSet label, std::int64_t s, int action,
                                                   std::int64_t next_s,
                                                   const CounterCache& cache,
                                                   std::int64_t gamma) {
  std::vector<Experience> out;
  out.reserve(machine.states.size() * cache.size());
  for (StateId u = 0; u < machine.states.size(); ++u) {
    for (const CounterVector& c : cache.values()) {
      std::optional<StepResult> stepped;
      try {
        stepped.emplace(step(machine, {u, c}, label));
      } catch (const Error&) {
        continue;
      }
      const StepResult& r = *stepped;
      const auto& next = r.config.counters;
      if (std::any_of(next.begin(), next.end(), [&](std::int64_t v) { return v > gamma; })) {
        continue;
      }
      out.push_back({u, c, r.config.state, next, r.reward.get().evaluate(s, action, next_s),
                     machine.is_terminal(r.config.state), r.fired});
    }
  }
  return out;
}

EvalResult evaluate_greedy(const Product& product, const GreedyPolicy& policy, int episodes,
                           std::uint64_t seed) {
  EvalResult result;
  if (episodes <= 0) return result;
  Rng rng(seed);
  const Environment& env = product.env();
  double total_return = 0.0;
  int successes = 0;
  using Key = std::tuple<std::uint64_t, StateId, CounterVector>;
  std::map<Key, double> visited;
  for (int e = 0; e < episodes; ++e) {
    ProductState x = product.reset(rng);
    double ret = 0.0;
    bool success = false;
    bool detect = true;
    visited.clear();
    for (;;) {
      if (detect) {
        auto [it, fresh] =
            visited.emplace(Key{env.full_key(x.env), x.machine.state, x.machine.counters}, ret);
        if (!fresh) {
          if (it->second == ret) break;
          detect = false;
        }
      }
      ProductOutcome o = product.step(x, kActions[static_cast<std::size_t>(policy(x))]);
      ret += o.reward;
      x = o.next;
      if (o.done()) {
        success = o.success;
        break;
      }
    }
    total_return += ret;
    successes += success;
  }
  result.episodes = episodes;
  result.mean_return = total_return / episodes;
  result.success_rate = static_cast<double>(successes) / episodes;
  return result;
}

EvalResult evaluate_greedy_fixed(const Product& product, const GreedyPolicy& policy,
                                 const std::vector<int>& ns) {
  EvalResult result;
  for (int n : ns) {
    EnvConfig config = product.env().config();
    config.fixed_n = n;
    auto env = product.env().with_config(config);
    Product fixed(*env, product.machine(), product.binding(), product.gamma());
    EvalResult one = evaluate_greedy(fixed, policy, 1, 0);
    result.mean_return += one.mean_return;
    result.success_rate += one.success_rate;
    ++result.episodes;
  }
  if (result.episodes > 0) {
    result.mean_return /= result.episodes;
    result.success_rate /= result.episodes;
  }
  return result;
}

namespace {

GreedyPolicy table_policy(const QTable& q, const Environment& env, const StateCodec& codec) {
  return [&q, &env, &codec](const ProductState& x) {
    return greedy_action(q.get(codec.encode(env.cell_id(x.env), x.machine.state, x.machine.counters)));
  };
}

}  // namespace

EvalResult evaluate_policy(const QTable& q, const Product& product, const StateCodec& codec,
                           int episodes, std::uint64_t seed) {
  return evaluate_greedy(product, table_policy(q, product.env(), codec), episodes, seed);
}

EvalResult evaluate_policy_fixed(const QTable& q, const Product& product,
                                 const StateCodec& codec, const std::vector<int>& ns) {
  return evaluate_greedy_fixed(product, table_policy(q, product.env(), codec), ns);
}

ProductOutcome q_learning_step(QTable& q, const Product& product, const StateCodec& codec,
                               const ProductState& x, int a, const LearnParams& params) {
  const Environment& env = product.env();
  ProductOutcome o = product.step(x, kActions[static_cast<std::size_t>(a)]);
  q_update(q, codec.encode(env.cell_id(x.env), x.machine.state, x.machine.counters), a, o.reward,
           codec.encode(env.cell_id(o.next.env), o.next.machine.state, o.next.machine.counters),
           o.machine_terminal, params.alpha, params.gamma);
  return o;
}

ProductOutcome cql_step(QTable& q, const Product& product, const StateCodec& codec,
                        CounterCache& cache, const ProductState& x, int a,
                        const LearnParams& params, std::int64_t* updates) {
  const Environment& env = product.env();
  ProductOutcome o = product.step(x, kActions[static_cast<std::size_t>(a)]);
  std::int64_t cell = env.cell_id(x.env);
  std::int64_t next_cell = env.cell_id(o.next.env);
  for (const Experience& e : counterfactual_experiences(product.machine(), o.label, cell, a,
                                                        next_cell, cache, product.gamma())) {
    if (params.skip_unfired && !e.fired) continue;
    q_update(q, codec.encode(cell, e.state, e.counters), a, e.reward,
             codec.encode(next_cell, e.next_state, e.next_counters), e.terminal, params.alpha,
             params.gamma);
    if (updates) ++*updates;
  }
  cache.insert(o.next.machine.counters);
  return o;
}

namespace {

void check_params(const LearnParams& p) {
  if (!(p.alpha >= 0.0 && p.alpha <= 1.0)) throw Error(ErrorKind::bad_config, "alpha must be in [0,1]");
  if (!(p.gamma >= 0.0 && p.gamma <= 1.0)) throw Error(ErrorKind::bad_config, "gamma must be in [0,1]");
  if (!(p.epsilon >= 0.0 && p.epsilon <= 1.0)) {
    throw Error(ErrorKind::bad_config, "epsilon must be in [0,1]");
  }
  if (p.episodes < 0) throw Error(ErrorKind::bad_config, "episodes must be non-negative");
  if (p.solved_window < 1) throw Error(ErrorKind::bad_config, "solved window must be at least 1");
}

LearnResult train(const Product& product, const LearnParams& params, bool counterfactual) {
  check_params(params);
  const CountingRewardAutomaton& machine = product.machine();
  const Environment& env = product.env();
  StateCodec codec = make_codec(product);
  CounterCache cache = params.full_enumeration
                           ? CounterCache::full(machine.counters, product.gamma())
                           : CounterCache(machine.counters);
  LearnResult result;
  Rng rng(derive_seed(params.seed, 0));
  std::uint64_t eval_seed = derive_seed(params.seed, 1);
  int streak = 0;

  auto evaluate = [&] {
    EvalResult e = params.eval_ns.empty()
                       ? evaluate_policy(result.q, product, codec, params.eval_episodes, eval_seed)
                       : evaluate_policy_fixed(result.q, product, codec, params.eval_ns);
    result.curve.push_back({result.episodes, result.steps, e.mean_return, e.success_rate});
    streak = e.success_rate >= params.success_threshold && !e.empty() ? streak + 1 : 0;
    if (streak == params.solved_window && !result.samples_to_solve) {
      const CurvePoint& first = result.curve[result.curve.size() - params.solved_window];
      result.samples_to_solve = first.steps;
      result.episodes_to_solve = first.episode;
    }
  };

  for (int episode = 0; episode < params.episodes; ++episode) {
    if (params.max_steps > 0 && result.steps >= params.max_steps) break;
    ProductState x = product.reset(rng);
    for (;;) {
      std::uint64_t key = codec.encode(env.cell_id(x.env), x.machine.state, x.machine.counters);
      int a = epsilon_greedy(result.q.get(key), params.epsilon, rng);
      ProductOutcome o = counterfactual
                             ? cql_step(result.q, product, codec, cache, x, a, params, &result.updates)
                             : q_learning_step(result.q, product, codec, x, a, params);
      if (!counterfactual) ++result.updates;
      ++result.steps;
      x = o.next;
      if (o.done()) break;
    }
    ++result.episodes;
    if (params.eval_every > 0 && result.episodes % params.eval_every == 0) {
      evaluate();
      if (params.stop_when_solved && result.samples_to_solve) break;
    }
  }
  result.cache_size = cache.size();
  return result;
}

}  // namespace

LearnResult q_learning(const Product& product, const LearnParams& params) {
  return train(product, params, false);
}

LearnResult cql(const Product& product, const LearnParams& params) {
  return train(product, params, true);
}

RewardMachine generate_rm_letterenv(int n) {
  if (n < 1) throw Error(ErrorKind::bad_config, "N must be at least 1");
  RewardMachine rm;
  rm.propositions = {"A", "B", "C", "D"};
  for (int i = 0; i <= n; ++i) rm.states.push_back("a" + std::to_string(i));
  rm.states.push_back("b");
  rm.states.push_back("c");
  for (int i = 1; i <= n; ++i) rm.states.push_back("d" + std::to_string(i));
  rm.terminals = {"fail", "success"};
  const StateId fail = rm.states.size();
  const StateId success = fail + 1;
  auto edge = [&](StateId from, const char* guard, StateId to, double reward = 0.0) {
    rm.edges.push_back({from, parse_guard(guard), to, RewardSpec::constant(reward)});
  };
  auto expect = [&](StateId from, const char* symbol, const char* others, StateId to) {
    edge(from, symbol, to);
    edge(from, others, fail);
  };
  const auto un = static_cast<StateId>(n);
  for (StateId i = 0; i < un; ++i) expect(i, "A", "!A", i + 1);
  expect(un, "B", "!B", un + 1);
  expect(un + 1, "C", "!C", un + 2);
  for (StateId i = 0; i < un; ++i) expect(un + 2 + i, "D", "!D", un + 3 + i);
  edge(2 * un + 2, "TRUE", success, 1.0);
  rm.bind_guards();
  return rm;
}

RewardMachine unroll_to_rm(const CountingRewardAutomaton& machine, std::int64_t bound) {
  struct PendingEdge {
    StateId source;
    Guard guard;
    MachineConfiguration target;
    double reward;
  };
  RewardMachine rm;
  rm.propositions = machine.propositions;
  rm.empty_label_gating = machine.empty_label_gating;
  std::map<std::pair<StateId, CounterVector>, StateId> index;
  std::vector<MachineConfiguration> configs;
  std::vector<PendingEdge> pending;
  bool overflow = false;
  const MachineConfiguration overflow_config{SIZE_MAX, {}};

  auto intern = [&](const MachineConfiguration& c) {
    auto [it, fresh] = index.emplace(std::make_pair(c.state, c.counters), configs.size());
    if (fresh) {
      configs.push_back(c);
      rm.states.push_back(machine.state_name(c.state) + c.counters.to_string());
    }
    return it->second;
  };

  intern(initial_configuration(machine));
  for (std::size_t i = 0; i < configs.size(); ++i) {
    MachineConfiguration config = configs[i];
    auto omega = zero_test(config.counters);
    for (const auto& rule : machine.rules) {
      if (rule.source != config.state || rule.zero_test != omega.to_vector()) continue;
      if (rule.epsilon) throw Error(ErrorKind::bad_config, "unrolling does not support epsilon rules");
      MachineConfiguration next{rule.target, config.counters};
      bool negative = false;
      bool too_big = false;
      for (std::size_t j = 0; j < next.counters.size(); ++j) {
        next.counters[j] += rule.modifier[j];
        negative |= next.counters[j] < 0;
        too_big |= next.counters[j] > bound;
      }
      if (negative) continue;
      double reward = rule.reward.constant_value();
      if (machine.is_terminal(next.state)) {
        next.counters = CounterVector(0);
      } else if (too_big) {
        next = overflow_config;
        reward = 0.0;
        overflow = true;
      } else {
        intern(next);
      }
      pending.push_back({i, rule.guard, next, reward});
    }
  }
  rm.terminals = machine.terminals;
  if (overflow) rm.terminals.push_back("overflow");
  for (const auto& e : pending) {
    StateId target;
    if (e.target.state == SIZE_MAX) {
      target = rm.states.size() + rm.terminals.size() - 1;
    } else if (machine.is_terminal(e.target.state)) {
      target = rm.states.size() + (e.target.state - machine.states.size());
    } else {
      target = index.at({e.target.state, e.target.counters});
    }
    rm.edges.push_back({e.source, e.guard, target, RewardSpec::constant(e.reward)});
  }
  rm.bind_guards();
  return rm;
}

RewardMachine generate_rm_office(int n) {
  if (n < 1) throw Error(ErrorKind::bad_config, "N must be at least 1");
  return unroll_to_rm(office_machine(), n);
}

}  // namespace cra
