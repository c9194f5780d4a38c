#include "cra/aamdp.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <map>

#include "cra/error.hpp"

namespace cra {

std::int64_t gamma_bound(const CountingRewardAutomaton& machine, int horizon) {
  if (horizon < 1) throw Error(ErrorKind::bad_config, "horizon must be at least 1");
  std::int64_t max_increment = 0;
  for (const auto& rule : machine.rules) {
    for (std::int64_t d : rule.modifier) max_increment = std::max(max_increment, d);
  }
  return static_cast<std::int64_t>(horizon) * max_increment;
}

Product::Product(const Environment& env, const CountingRewardAutomaton& machine,
                 LabelBinding binding, std::int64_t gamma)
    : env_(env),
      machine_(machine),
      binding_(std::move(binding)),
      gamma_(gamma < 0 ? gamma_bound(machine, env.horizon()) : gamma) {}

ProductState Product::reset(Rng& rng) const {
  return {env_.reset(rng), initial_configuration(machine_)};
}

bool Product::within_gamma(const CounterVector& c) const {
  return std::all_of(c.begin(), c.end(), [&](std::int64_t v) { return v <= gamma_; });
}

ProductOutcome Product::step(const ProductState& x, Action a) const {
  if (machine_.is_terminal(x.machine.state)) {
    throw Error(ErrorKind::terminal_step, "product state is already terminal");
  }
  ProductOutcome out;
  out.next.env = env_.step(x.env, a);
  out.label = binding_(env_.label(x.env, a, out.next.env));
  StepResult r = cra::step(machine_, x.machine, out.label);
  out.next.machine = r.config;
  out.fired = r.fired;
  if (!within_gamma(out.next.machine.counters)) {
    throw Error(ErrorKind::counter_overflow, "counter exceeded the bound " +
                                                 std::to_string(gamma_) + ": " +
                                                 out.next.machine.counters.to_string());
  }
  out.reward = r.reward.get().evaluate(env_.cell_id(x.env), static_cast<std::int64_t>(a),
                                       env_.cell_id(out.next.env));
  out.machine_terminal = machine_.is_terminal(out.next.machine.state);
  out.success = out.machine_terminal && out.reward == 1.0;
  out.truncated = !out.machine_terminal && env_.episode_over(out.next.env);
  return out;
}

namespace {

int bits_for(std::uint64_t values) {
  int bits = 0;
  while (bits < 64 && (std::uint64_t{1} << bits) < values) ++bits;
  return bits;
}

}  // namespace

StateCodec::StateCodec(std::int64_t cells, std::size_t machine_states, std::size_t counters,
                       std::int64_t gamma)
    : cell_bits_(bits_for(static_cast<std::uint64_t>(cells))),
      state_bits_(bits_for(machine_states)),
      counter_bits_(bits_for(static_cast<std::uint64_t>(gamma) + 1)) {
  int total = cell_bits_ + state_bits_ + counter_bits_ * static_cast<int>(counters);
  if (total > 64) {
    throw Error(ErrorKind::bad_config,
                "state key needs " + std::to_string(total) + " bits; reduce the horizon");
  }
}

std::uint64_t StateCodec::encode(std::int64_t cell, StateId u, const CounterVector& c) const {
  std::uint64_t key = static_cast<std::uint64_t>(cell);
  key = (key << state_bits_) | u;
  for (std::int64_t v : c) key = (key << counter_bits_) | static_cast<std::uint64_t>(v);
  return key;
}

StateCodec make_codec(const Product& product) {
  const auto& layout = product.env().layout();
  return StateCodec(static_cast<std::int64_t>(layout.width) * layout.height,
                    product.machine().state_count(), product.machine().counters,
                    product.gamma());
}

std::size_t EnumeratedProduct::index_of(const Environment& env, const ProductState& x) const {
  auto key = std::make_tuple(env.full_key(x.env), x.machine.state, x.machine.counters);
  auto it = std::lower_bound(keys.begin(), keys.end(), key,
                             [](const auto& entry, const auto& k) { return entry.first < k; });
  if (it == keys.end() || it->first != key) return SIZE_MAX;
  return it->second;
}

EnumeratedProduct enumerate_product(const Product& product, double gamma, std::size_t cap) {
  const Environment& env = product.env();
  if (!env.config().fixed_n) {
    throw Error(ErrorKind::bad_config, "explicit enumeration needs a fixed N");
  }
  const auto& machine = product.machine();
  EnumeratedProduct out;
  out.mdp.gamma = gamma;
  using Key = std::tuple<std::uint64_t, StateId, CounterVector>;
  std::map<Key, std::size_t> index;
  std::deque<std::size_t> frontier;

  auto intern = [&](ProductState x) -> std::size_t {
    x.env.steps = 0;
    Key key{env.full_key(x.env), x.machine.state, x.machine.counters};
    auto [it, inserted] = index.emplace(key, out.states.size());
    if (inserted) {
      if (out.states.size() >= cap) {
        throw Error(ErrorKind::cap_exceeded,
                    "product has more than " + std::to_string(cap) + " reachable states");
      }
      out.states.push_back(x);
      out.mdp.outcomes.emplace_back();
      out.mdp.terminal.push_back(machine.is_terminal(x.machine.state));
      frontier.push_back(it->second);
    }
    return it->second;
  };

  Rng rng(0);
  out.mdp.initial = intern(product.reset(rng));
  while (!frontier.empty()) {
    std::size_t i = frontier.front();
    frontier.pop_front();
    std::vector<std::vector<ExplicitMDP::Outcome>> per_action(kActionCount);
    for (int a = 0; a < kActionCount; ++a) {
      if (out.mdp.terminal[i]) {
        per_action[a].push_back({i, 1.0, 0.0});
        continue;
      }
      ProductState x = out.states[i];
      ProductOutcome o = product.step(x, kActions[a]);
      std::size_t next = intern(o.next);
      per_action[a].push_back({next, 1.0, o.reward});
    }
    out.mdp.outcomes[i] = std::move(per_action);
  }
  out.keys.assign(index.begin(), index.end());
  return out;
}

ValueIterationResult value_iteration(const ExplicitMDP& mdp, double tol,
                                     std::size_t max_iterations, double action_tol) {
  const std::size_t n = mdp.size();
  ValueIterationResult result;
  result.values.assign(n, 0.0);
  std::vector<double> next(n, 0.0);
  auto q_value = [&](std::size_t s, std::size_t a, const std::vector<double>& v) {
    double q = 0.0;
    for (const auto& o : mdp.outcomes[s][a]) {
      q += o.probability * (o.reward + (mdp.terminal[o.next] ? 0.0 : mdp.gamma * v[o.next]));
    }
    return q;
  };
  // Terminal states are absorbing with reward 0, so their value is 0 and
  // transitions into them are not bootstrapped.
  for (result.iterations = 0; result.iterations < max_iterations; ++result.iterations) {
    double residual = 0.0;
    for (std::size_t s = 0; s < n; ++s) {
      if (mdp.terminal[s]) {
        next[s] = 0.0;
        continue;
      }
      double best = -INFINITY;
      for (std::size_t a = 0; a < mdp.action_count; ++a) best = std::max(best, q_value(s, a, result.values));
      next[s] = best;
      residual = std::max(residual, std::abs(best - result.values[s]));
    }
    result.values.swap(next);
    result.residual = residual;
    if (residual <= tol) break;
  }
  if (result.residual > tol) {
    throw Error(ErrorKind::non_convergence,
                "value iteration did not converge in " + std::to_string(max_iterations) +
                    " sweeps (residual " + std::to_string(result.residual) + ")");
  }
  result.policy.assign(n, 0);
  result.optimal_actions.assign(n, 0);
  for (std::size_t s = 0; s < n; ++s) {
    std::vector<double> q(mdp.action_count);
    for (std::size_t a = 0; a < mdp.action_count; ++a) q[a] = q_value(s, a, result.values);
    double best = *std::max_element(q.begin(), q.end());
    result.policy[s] = static_cast<int>(std::max_element(q.begin(), q.end()) - q.begin());
    for (std::size_t a = 0; a < mdp.action_count; ++a) {
      if (q[a] >= best - action_tol) result.optimal_actions[s] |= std::uint8_t(1u << a);
    }
  }
  return result;
}

}  // namespace cra
