#include <doctest.h>

#include <cmath>
#include <cstring>
#include <filesystem>

#include "cra/deep.hpp"
#include "cra/error.hpp"
#include "cra/machine_io.hpp"

using namespace cra;
using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

namespace {

Batch<double> random_batch(int inputs, int outputs, int size, Rng& rng) {
  Batch<double> b;
  b.states = Mat(inputs, size);
  b.next_states = Mat(inputs, size);
  for (int c = 0; c < size; ++c) {
    for (int r = 0; r < inputs; ++r) {
      b.states(r, c) = 2 * uniform01(rng) - 1;
      b.next_states(r, c) = 2 * uniform01(rng) - 1;
    }
    b.actions.push_back(static_cast<int>(uniform_index(rng, static_cast<std::uint64_t>(outputs))));
    b.rewards.push_back(uniform01(rng));
    b.terminal.push_back(uniform01(rng) < 0.3);
  }
  return b;
}

std::string temp_path(const char* name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

}  // namespace

TEST_CASE("forward pass") {
  Mlp<double> zero({3, 5, 4});
  zero.layers.back().bias = Vec::LinSpaced(4, 1, 4);
  CHECK(zero.forward(Vec::Ones(3)) == Vec::LinSpaced(4, 1, 4));
  CHECK(zero.parameter_count() == 3 * 5 + 5 + 5 * 4 + 4);

  Mlp<double> toy({1, 1, 1});
  toy.layers[0].weight(0, 0) = 2.0;
  toy.layers[0].bias[0] = -1.0;
  toy.layers[1].weight(0, 0) = 0.5;
  toy.layers[1].bias[0] = 0.25;
  CHECK(toy.forward(Vec::Constant(1, 3.0))[0] == 2.75);  // relu(2·3 − 1)·0.5 + 0.25
  CHECK(toy.forward(Vec::Constant(1, 0.0))[0] == 0.25);  // relu(−1) = 0

  Rng rng(3);
  Mlp<double> net({6, 128, 128, 4}, rng);
  Vec x = Vec::Random(6);
  Vec y1 = net.forward(x);
  Vec y2 = net.forward(x * 1.0);
  CHECK(std::memcmp(y1.data(), y2.data(), sizeof(double) * 4) == 0);
  CHECK(y1.allFinite());
  try {
    net.forward(Vec::Ones(5));
    FAIL("expected DimensionMismatch");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::dimension_mismatch);
  }
  Vec p = net.parameters();
  Mlp<double> copy({6, 128, 128, 4});
  copy.set_parameters(p);
  CHECK(copy.forward(x) == y1);
  CHECK_THROWS_AS(Mlp<double>({4}), Error);
}

TEST_CASE("training step on a two-parameter net") {
  // q = w·x + b, one output, one terminal transition with target 1.
  Mlp<double> net({1, 1});
  net.layers[0].weight(0, 0) = 0.5;
  net.layers[0].bias[0] = 0.1;
  Batch<double> batch;
  batch.states = Mat::Constant(1, 1, 2.0);
  batch.next_states = Mat::Zero(1, 1);
  batch.actions = {0};
  batch.rewards = {1.0};
  batch.terminal = {1};
  Vec g;
  double loss = bellman_loss(net, net, batch, 0.9, &g);
  const double q = 0.5 * 2.0 + 0.1;
  CHECK(loss == doctest::Approx((q - 1) * (q - 1)));
  CHECK(g[0] == doctest::Approx(2 * (q - 1) * 2.0));
  CHECK(g[1] == doctest::Approx(2 * (q - 1)));

  // First Adam step: m̂ = g, v̂ = g², so Δ = −η g / (|g| + ε).
  Adam<double> adam(2, 1e-3);
  Mlp<double> target = net;
  double pre = train_step(net, target, batch, 0.9, adam);
  CHECK(pre == doctest::Approx(loss));
  CHECK(net.layers[0].weight(0, 0) - 0.5 == doctest::Approx(-1e-3 * g[0] / (std::abs(g[0]) + 1e-8)));
  CHECK(net.layers[0].bias[0] - 0.1 == doctest::Approx(-1e-3 * g[1] / (std::abs(g[1]) + 1e-8)));

  // Bootstrapped target uses the target network's max.
  Mlp<double> two({1, 2});
  two.layers[0].bias << 3.0, 5.0;
  batch.terminal = {0};
  batch.rewards = {0.0};
  double l2 = bellman_loss(net, two, batch, 0.5, static_cast<Vec*>(nullptr));
  double q2 = net.forward(Vec::Constant(1, 2.0))[0];
  CHECK(l2 == doctest::Approx((q2 - 2.5) * (q2 - 2.5)));
}

TEST_CASE("zero loss leaves weights unchanged") {
  Rng rng(9);
  Mlp<double> net({3, 8, 4}, rng);
  Batch<double> batch = random_batch(3, 4, 6, rng);
  Mat q = net.forward_batch(batch.states);
  for (std::size_t i = 0; i < batch.size(); ++i) {
    batch.terminal[i] = 1;
    batch.rewards[i] = q(batch.actions[i], static_cast<Eigen::Index>(i));
  }
  Vec before = net.parameters();
  Adam<double> adam(net.parameter_count(), 1e-4);
  CHECK(train_step(net, net, batch, 0.99, adam) == 0.0);
  CHECK(net.parameters() == before);
}

TEST_CASE("gradients match central differences") {
  Rng rng(41);
  for (int trial = 0; trial < 10; ++trial) {
    Mlp<double> net({4, 6, 6, 4}, rng);
    REQUIRE(net.parameter_count() == 100);
    for (auto& layer : net.layers) {
      for (Eigen::Index i = 0; i < layer.bias.size(); ++i) layer.bias[i] = uniform01(rng) - 0.5;
    }
    Mlp<double> target({4, 6, 6, 4}, rng);
    Batch<double> batch = random_batch(4, 4, 8, rng);
    Vec g;
    bellman_loss(net, target, batch, 0.9, &g);
    Vec p = net.parameters();
    Vec fd(p.size());
    const double h = 1e-6;
    for (Eigen::Index i = 0; i < p.size(); ++i) {
      Vec plus = p, minus = p;
      plus[i] += h;
      minus[i] -= h;
      net.set_parameters(plus);
      double lp = bellman_loss(net, target, batch, 0.9, static_cast<Vec*>(nullptr));
      net.set_parameters(minus);
      double lm = bellman_loss(net, target, batch, 0.9, static_cast<Vec*>(nullptr));
      fd[i] = (lp - lm) / (2 * h);
    }
    net.set_parameters(p);
    double rel = (g - fd).norm() / std::max(1e-12, g.norm() + fd.norm());
    CHECK(rel <= 1e-4);
  }
}

TEST_CASE("non-finite loss") {
  Rng rng(1);
  Mlp<double> net({2, 4, 4}, rng);
  Batch<double> batch = random_batch(2, 4, 3, rng);
  batch.rewards[1] = std::numeric_limits<double>::infinity();
  Vec before = net.parameters();
  Adam<double> adam(net.parameter_count(), 1e-4);
  try {
    train_step(net, net, batch, 0.9, adam);
    FAIL("expected NonFiniteLoss");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::non_finite_loss);
  }
  CHECK(net.parameters() == before);
  CHECK(adam.steps() == 0);
}

TEST_CASE("replay buffer") {
  ReplayBuffer<double> buffer(5);
  for (int i = 0; i < 12; ++i) {
    buffer.push({Vec::Constant(1, i), i % 4, double(i), Vec::Constant(1, i + 1), false});
    CHECK(buffer.size() <= 5);
  }
  CHECK(buffer.size() == 5);
  std::set<double> kept;
  for (std::size_t i = 0; i < buffer.size(); ++i) kept.insert(buffer[i].reward);
  CHECK(kept == std::set<double>{7, 8, 9, 10, 11});

  Rng a(4), b(4);
  Batch<double> x = buffer.sample(64, a);
  Batch<double> y = buffer.sample(64, b);
  CHECK(x.states == y.states);
  CHECK(x.actions == y.actions);

  std::array<int, 5> counts{};
  Rng rng(5);
  Batch<double> big = buffer.sample(20000, rng);
  for (double r : big.rewards) ++counts[static_cast<std::size_t>(r) - 7];
  for (int c : counts) CHECK(std::abs(c / 20000.0 - 0.2) < 0.02);
  CHECK_THROWS_AS(ReplayBuffer<double>(0), Error);
  CHECK_THROWS_AS(ReplayBuffer<double>(3).sample(1, rng), Error);
}

TEST_CASE("features") {
  LetterEnv env(EnvConfig{100, 4, {}});
  auto m = letter_machine();
  Product p(env, m, LabelBinding(env.propositions(), m.propositions));
  FeatureEncoder with(p, true), without(p, false);
  CHECK(with.size() == 6 + 6 + 2 + 2);
  CHECK(without.size() == 12);
  Vec v = with.encode<double>({2, 5}, 1, CounterVector{50, 100});
  CHECK(v.sum() == doctest::Approx(3.0 + 0.5 + 1.0));
  CHECK(v[2] == 1.0);
  CHECK(v[6 + 5] == 1.0);
  CHECK(v[12 + 1] == 1.0);
  CHECK(v[14] == 0.5);
  CHECK(v.minCoeff() >= 0.0);
  CHECK(v.maxCoeff() <= 1.0);
  // Terminal machine states have no one-hot slot.
  CHECK(with.encode<double>({0, 0}, 3, CounterVector{0, 0}).sum() == 2.0);
}

TEST_CASE("deep training is deterministic and counts pushes") {
  OfficeEnv env;
  RewardMachine rm = import_dfa_table(parse_dfa_table(read_text_file(CRA_FIXTURES "/office_regular.dfa")));
  auto m = rm_to_cra(rm);
  LabelBinding binding(env.propositions(), m.propositions, {{"P", "Pd"}, {"D", "Dk"}});
  Product p(env, m, binding);
  DeepParams params;
  params.interactions = 400;
  params.hidden = {16, 16};
  params.eval_every = 200;
  params.eval_episodes = 3;
  params.seed = 5;
  auto a = dqn_train<double>(p, DeepAlgorithm::cql, params);
  auto b = dqn_train<double>(p, DeepAlgorithm::cql, params);
  CHECK(a.net.parameters() == b.net.parameters());
  CHECK(a.curve.size() == 2);
  CHECK(a.pushed == 400 * static_cast<std::int64_t>(m.states.size()));
  auto d = dqn_train<double>(p, DeepAlgorithm::dqn, params);
  CHECK(d.pushed == 400);
  CHECK(d.net.input_size() == 17 + 13);
  CHECK(a.net.input_size() == 17 + 13 + 2);
  auto f = dqn_train<float>(p, DeepAlgorithm::crm, params);
  CHECK(f.net.parameters().allFinite());
  CHECK(parse_deep_algorithm("dqn-cql") == DeepAlgorithm::cql);
  CHECK_THROWS_AS(parse_deep_algorithm("ppo"), Error);
}

TEST_CASE("checkpoints") {
  Rng rng(12);
  Mlp<double> net({5, 7, 4}, rng);
  std::string path = temp_path("cra_test_net.bin");
  save_checkpoint(net, path);
  CHECK(std::filesystem::file_size(path) == 12 + 2 * 8 + 8 * (5 * 7 + 7 + 7 * 4 + 4));
  Mlp<double> back = load_checkpoint(path);
  CHECK(back.parameters() == net.parameters());

  Mlp<float> small({2, 4}, rng);
  save_checkpoint(small, path);
  CHECK(load_checkpoint(path).parameters().cast<float>() == small.parameters());

  write_text_file(path, "NOPE");
  CHECK_THROWS_AS(load_checkpoint(path), Error);
  std::string bytes = "CRAQ";
  bytes += std::string("\x01\x00\x00\x00\x01\x00\x00\x00\x02\x00\x00\x00", 12);
  write_text_file(path, bytes);
  CHECK_THROWS_AS(load_checkpoint(path), Error);
  std::filesystem::remove(path);
  CHECK_THROWS_AS(load_checkpoint(path), Error);
}
