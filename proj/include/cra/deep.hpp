#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "cra/learning.hpp"

namespace cra {

template <class T>
struct DenseLayer {
  Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic> weight;  // out × in
  Eigen::Matrix<T, Eigen::Dynamic, 1> bias;
};

/// Fully connected network with ReLU hidden layers and a linear output.
template <class T>
class Mlp {
 public:
  using Matrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>;
  using Vector = Eigen::Matrix<T, Eigen::Dynamic, 1>;

  Mlp() = default;
  /// Zero-initialised layers of the given widths (input first).
  explicit Mlp(const std::vector<int>& sizes);
  /// He-uniform weights, zero biases.
  Mlp(const std::vector<int>& sizes, Rng& rng);

  int input_size() const;
  int output_size() const;
  std::size_t parameter_count() const;

  /// Throws dimension_mismatch.
  Vector forward(const Vector& x) const;
  /// One column per sample.
  Matrix forward_batch(const Matrix& x) const;

  /// Weights then bias of each layer, weights column-major.
  Vector parameters() const;
  void set_parameters(const Vector& p);

  std::vector<DenseLayer<T>> layers;
};

template <class T>
struct Batch {
  typename Mlp<T>::Matrix states;       // input × B
  typename Mlp<T>::Matrix next_states;  // input × B
  std::vector<int> actions;
  std::vector<T> rewards;
  std::vector<std::uint8_t> terminal;

  std::size_t size() const { return actions.size(); }
};

/// Mean over the batch of (Q(x,a) − y)² with y = r on terminal transitions
/// and r + γ max_a′ target(x′, a′) otherwise. Fills the gradient with respect
/// to `net`'s parameters (layout of Mlp::parameters) when given.
template <class T>
T bellman_loss(const Mlp<T>& net, const Mlp<T>& target, const Batch<T>& batch, T gamma,
               typename Mlp<T>::Vector* gradient = nullptr);

template <class T>
class Adam {
 public:
  Adam() = default;
  Adam(std::size_t parameters, T learning_rate, T beta1 = T(0.9), T beta2 = T(0.999),
       T epsilon = T(1e-8));
  void apply(Mlp<T>& net, const typename Mlp<T>::Vector& gradient);
  std::size_t steps() const { return t_; }

 private:
  typename Mlp<T>::Vector m_, v_;
  T lr_ = T(1e-4), beta1_ = T(0.9), beta2_ = T(0.999), eps_ = T(1e-8);
  std::size_t t_ = 0;
};

/// One Adam step on bellman_loss. Returns the loss before the step; throws
/// non_finite_loss (weights untouched) when it is not finite.
template <class T>
T train_step(Mlp<T>& net, const Mlp<T>& target, const Batch<T>& batch, T gamma, Adam<T>& optimizer);

template <class T>
struct Transition {
  typename Mlp<T>::Vector state;
  int action = 0;
  T reward = 0;
  typename Mlp<T>::Vector next_state;
  bool terminal = false;
};

/// Fixed-capacity ring buffer with uniform sampling (with replacement).
template <class T>
class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity);
  void push(Transition<T> t);
  std::size_t size() const { return items_.size(); }
  std::size_t capacity() const { return capacity_; }
  const Transition<T>& operator[](std::size_t i) const { return items_[i]; }
  Batch<T> sample(std::size_t count, Rng& rng) const;

 private:
  std::size_t capacity_;
  std::size_t next_ = 0;
  std::vector<Transition<T>> items_;
};

/// One-hot agent x, one-hot agent y, then (unless `with_machine` is false)
/// one-hot machine state over U and counters divided by Γ.
class FeatureEncoder {
 public:
  FeatureEncoder(const Product& product, bool with_machine);
  int size() const { return size_; }
  template <class T>
  typename Mlp<T>::Vector encode(GridPosition agent, StateId u, const CounterVector& c) const;
  template <class T>
  typename Mlp<T>::Vector encode(const ProductState& x) const {
    return encode<T>(x.env.agent, x.machine.state, x.machine.counters);
  }

 private:
  int width_, height_, states_, counters_;
  double gamma_;
  bool with_machine_;
  int size_;
};

enum class DeepAlgorithm { dqn, crm, cql };
std::string_view to_string(DeepAlgorithm a);
DeepAlgorithm parse_deep_algorithm(std::string_view name);

struct DeepParams {
  int interactions = 12000;
  std::vector<int> hidden{128, 128};
  double learning_rate = 1e-4;
  std::size_t buffer_capacity = 50000;
  int batch_base = 32;
  int target_period = 500;
  double epsilon_start = 1.0;
  double epsilon_end = 0.1;
  int epsilon_anneal = 4000;
  double gamma = 0.99;
  int eval_every = 500;
  int eval_episodes = 20;
  double success_threshold = 0.9;
  std::uint64_t seed = 0;
};

struct DeepCurvePoint {
  std::int64_t steps = 0;
  int episodes = 0;
  double mean_return = 0.0;
  double success_rate = 0.0;
  double loss = 0.0;  // mean training loss since the previous point
};

template <class T>
struct DeepResult {
  Mlp<T> net;
  std::vector<DeepCurvePoint> curve;
  int episodes = 0;
  std::int64_t pushed = 0;
  /// Episodes completed at the first evaluation meeting the threshold.
  std::optional<int> episodes_to_solve;
};

/// DQN on the product. DQN sees only the agent position and learns from the
/// real transition; CRM and CQL see the machine configuration and push one
/// transition per counterfactual experience. Batches hold batch_base × N
/// transitions with N = 1 for DQN and |U| otherwise.
template <class T>
DeepResult<T> dqn_train(const Product& product, DeepAlgorithm algorithm, const DeepParams& params);

/// Greedy policy of a network over encoded product states.
template <class T>
GreedyPolicy network_policy(const Mlp<T>& net, const FeatureEncoder& encoder);

/// Binary checkpoint, little-endian:
///   "CRAQ" | u32 version = 1 | u32 layer count L
///   then per layer: u32 rows | u32 cols | rows×cols f64 weights (row-major)
///   | rows f64 biases.
template <class T>
void save_checkpoint(const Mlp<T>& net, const std::string& path);
Mlp<double> load_checkpoint(const std::string& path);

}  // namespace cra
