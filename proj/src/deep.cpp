#include "cra/deep.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include "cra/error.hpp"

namespace cra {

static_assert(std::endian::native == std::endian::little, "checkpoints assume a little-endian host");

template <class T>
Mlp<T>::Mlp(const std::vector<int>& sizes) {
  if (sizes.size() < 2) throw Error(ErrorKind::bad_config, "a network needs at least two layer sizes");
  for (std::size_t i = 1; i < sizes.size(); ++i) {
    if (sizes[i - 1] < 1 || sizes[i] < 1) throw Error(ErrorKind::bad_config, "layer sizes must be positive");
    layers.push_back({Matrix::Zero(sizes[i], sizes[i - 1]), Vector::Zero(sizes[i])});
  }
}

template <class T>
Mlp<T>::Mlp(const std::vector<int>& sizes, Rng& rng) : Mlp(sizes) {
  for (auto& layer : layers) {
    double limit = std::sqrt(6.0 / static_cast<double>(layer.weight.cols()));
    for (Eigen::Index c = 0; c < layer.weight.cols(); ++c) {
      for (Eigen::Index r = 0; r < layer.weight.rows(); ++r) {
        layer.weight(r, c) = static_cast<T>((2.0 * uniform01(rng) - 1.0) * limit);
      }
    }
  }
}

template <class T>
int Mlp<T>::input_size() const {
  return layers.empty() ? 0 : static_cast<int>(layers.front().weight.cols());
}

template <class T>
int Mlp<T>::output_size() const {
  return layers.empty() ? 0 : static_cast<int>(layers.back().weight.rows());
}

template <class T>
std::size_t Mlp<T>::parameter_count() const {
  std::size_t n = 0;
  for (const auto& layer : layers) n += static_cast<std::size_t>(layer.weight.size() + layer.bias.size());
  return n;
}

template <class T>
typename Mlp<T>::Matrix Mlp<T>::forward_batch(const Matrix& x) const {
  if (x.rows() != input_size()) {
    throw Error(ErrorKind::dimension_mismatch, "input has " + std::to_string(x.rows()) +
                                                   " features, network expects " +
                                                   std::to_string(input_size()));
  }
  Matrix a = x;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    Matrix z = layers[l].weight * a;
    z.colwise() += layers[l].bias;
    a = l + 1 < layers.size() ? Matrix(z.cwiseMax(T(0))) : z;
  }
  return a;
}

template <class T>
typename Mlp<T>::Vector Mlp<T>::forward(const Vector& x) const {
  return forward_batch(x).col(0);
}

template <class T>
typename Mlp<T>::Vector Mlp<T>::parameters() const {
  Vector p(static_cast<Eigen::Index>(parameter_count()));
  Eigen::Index offset = 0;
  for (const auto& layer : layers) {
    p.segment(offset, layer.weight.size()) = layer.weight.reshaped();
    offset += layer.weight.size();
    p.segment(offset, layer.bias.size()) = layer.bias;
    offset += layer.bias.size();
  }
  return p;
}

template <class T>
void Mlp<T>::set_parameters(const Vector& p) {
  if (static_cast<std::size_t>(p.size()) != parameter_count()) {
    throw Error(ErrorKind::dimension_mismatch, "parameter vector has the wrong length");
  }
  Eigen::Index offset = 0;
  for (auto& layer : layers) {
    layer.weight.reshaped() = p.segment(offset, layer.weight.size());
    offset += layer.weight.size();
    layer.bias = p.segment(offset, layer.bias.size());
    offset += layer.bias.size();
  }
}

template <class T>
T bellman_loss(const Mlp<T>& net, const Mlp<T>& target, const Batch<T>& batch, T gamma,
               typename Mlp<T>::Vector* gradient) {
  using Matrix = typename Mlp<T>::Matrix;
  const auto b = static_cast<Eigen::Index>(batch.size());
  if (b == 0) throw Error(ErrorKind::bad_config, "empty batch");
  if (batch.states.rows() != net.input_size()) {
    throw Error(ErrorKind::dimension_mismatch, "batch features do not match the network input");
  }
  std::vector<Matrix> inputs{batch.states};
  std::vector<Matrix> pre;
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    Matrix z = net.layers[l].weight * inputs.back();
    z.colwise() += net.layers[l].bias;
    pre.push_back(z);
    if (l + 1 < net.layers.size()) inputs.push_back(z.cwiseMax(T(0)));
  }
  const Matrix& q = pre.back();
  Matrix next = target.forward_batch(batch.next_states);
  Matrix dq = Matrix::Zero(q.rows(), q.cols());
  T loss = 0;
  for (Eigen::Index i = 0; i < b; ++i) {
    auto si = static_cast<std::size_t>(i);
    T y = batch.rewards[si];
    if (!batch.terminal[si]) y += gamma * next.col(i).maxCoeff();
    T diff = q(batch.actions[si], i) - y;
    loss += diff * diff;
    dq(batch.actions[si], i) = T(2) * diff / static_cast<T>(b);
  }
  loss /= static_cast<T>(b);
  if (!gradient) return loss;

  std::vector<std::pair<Matrix, typename Mlp<T>::Vector>> grads(net.layers.size());
  Matrix dz = dq;
  for (std::size_t l = net.layers.size(); l-- > 0;) {
    grads[l].first = dz * inputs[l].transpose();
    grads[l].second = dz.rowwise().sum();
    if (l > 0) {
      Matrix da = net.layers[l].weight.transpose() * dz;
      dz = da.cwiseProduct((pre[l - 1].array() > T(0)).matrix().template cast<T>());
    }
  }
  gradient->resize(static_cast<Eigen::Index>(net.parameter_count()));
  Eigen::Index offset = 0;
  for (const auto& [dw, db] : grads) {
    gradient->segment(offset, dw.size()) = dw.reshaped();
    offset += dw.size();
    gradient->segment(offset, db.size()) = db;
    offset += db.size();
  }
  return loss;
}

template <class T>
Adam<T>::Adam(std::size_t parameters, T learning_rate, T beta1, T beta2, T epsilon)
    : m_(Mlp<T>::Vector::Zero(static_cast<Eigen::Index>(parameters))),
      v_(Mlp<T>::Vector::Zero(static_cast<Eigen::Index>(parameters))),
      lr_(learning_rate),
      beta1_(beta1),
      beta2_(beta2),
      eps_(epsilon) {}

template <class T>
void Adam<T>::apply(Mlp<T>& net, const typename Mlp<T>::Vector& gradient) {
  if (gradient.size() != m_.size()) throw Error(ErrorKind::dimension_mismatch, "gradient length");
  ++t_;
  m_ = beta1_ * m_ + (T(1) - beta1_) * gradient;
  v_ = beta2_ * v_ + (T(1) - beta2_) * gradient.cwiseProduct(gradient);
  T c1 = T(1) - std::pow(beta1_, static_cast<T>(t_));
  T c2 = T(1) - std::pow(beta2_, static_cast<T>(t_));
  typename Mlp<T>::Vector p = net.parameters();
  p.array() -= lr_ * (m_.array() / c1) / ((v_.array() / c2).sqrt() + eps_);
  net.set_parameters(p);
}

template <class T>
T train_step(Mlp<T>& net, const Mlp<T>& target, const Batch<T>& batch, T gamma, Adam<T>& optimizer) {
  typename Mlp<T>::Vector gradient;
  T loss = bellman_loss(net, target, batch, gamma, &gradient);
  if (!std::isfinite(loss) || !gradient.allFinite()) {
    throw Error(ErrorKind::non_finite_loss, "training loss is not finite");
  }
  optimizer.apply(net, gradient);
  return loss;
}

template <class T>
ReplayBuffer<T>::ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
  if (capacity == 0) throw Error(ErrorKind::bad_config, "replay capacity must be positive");
  items_.reserve(std::min<std::size_t>(capacity, 1 << 16));
}

template <class T>
void ReplayBuffer<T>::push(Transition<T> t) {
  if (items_.size() < capacity_) {
    items_.push_back(std::move(t));
  } else {
    items_[next_] = std::move(t);
  }
  next_ = (next_ + 1) % capacity_;
}

template <class T>
Batch<T> ReplayBuffer<T>::sample(std::size_t count, Rng& rng) const {
  if (items_.empty()) throw Error(ErrorKind::bad_config, "cannot sample an empty replay buffer");
  Batch<T> batch;
  const auto dim = items_.front().state.size();
  batch.states.resize(dim, static_cast<Eigen::Index>(count));
  batch.next_states.resize(dim, static_cast<Eigen::Index>(count));
  for (std::size_t i = 0; i < count; ++i) {
    const auto& t = items_[uniform_index(rng, items_.size())];
    batch.states.col(static_cast<Eigen::Index>(i)) = t.state;
    batch.next_states.col(static_cast<Eigen::Index>(i)) = t.next_state;
    batch.actions.push_back(t.action);
    batch.rewards.push_back(t.reward);
    batch.terminal.push_back(t.terminal);
  }
  return batch;
}

FeatureEncoder::FeatureEncoder(const Product& product, bool with_machine)
    : width_(product.env().layout().width),
      height_(product.env().layout().height),
      states_(with_machine ? static_cast<int>(product.machine().states.size()) : 0),
      counters_(with_machine ? static_cast<int>(product.machine().counters) : 0),
      gamma_(static_cast<double>(product.gamma())),
      with_machine_(with_machine),
      size_(width_ + height_ + states_ + counters_) {}

template <class T>
typename Mlp<T>::Vector FeatureEncoder::encode(GridPosition agent, StateId u,
                                               const CounterVector& c) const {
  typename Mlp<T>::Vector v = Mlp<T>::Vector::Zero(size_);
  v[agent.x] = T(1);
  v[width_ + agent.y] = T(1);
  if (with_machine_) {
    if (u < static_cast<StateId>(states_)) v[width_ + height_ + static_cast<int>(u)] = T(1);
    for (int j = 0; j < counters_; ++j) {
      v[width_ + height_ + states_ + j] =
          gamma_ > 0 ? static_cast<T>(static_cast<double>(c[static_cast<std::size_t>(j)]) / gamma_) : T(0);
    }
  }
  return v;
}

std::string_view to_string(DeepAlgorithm a) {
  switch (a) {
    case DeepAlgorithm::dqn: return "dqn";
    case DeepAlgorithm::crm: return "crm";
    case DeepAlgorithm::cql: return "cql";
  }
  return "?";
}

DeepAlgorithm parse_deep_algorithm(std::string_view name) {
  if (name == "dqn") return DeepAlgorithm::dqn;
  if (name == "crm" || name == "dqn-crm") return DeepAlgorithm::crm;
  if (name == "cql" || name == "dqn-cql") return DeepAlgorithm::cql;
  throw Error(ErrorKind::bad_config, "unknown deep algorithm '" + std::string(name) + "'");
}

template <class T>
GreedyPolicy network_policy(const Mlp<T>& net, const FeatureEncoder& encoder) {
  return [&net, &encoder](const ProductState& x) {
    auto q = net.forward(encoder.encode<T>(x));
    Eigen::Index best = 0;
    q.maxCoeff(&best);
    return static_cast<int>(best);
  };
}

template <class T>
DeepResult<T> dqn_train(const Product& product, DeepAlgorithm algorithm, const DeepParams& params) {
  if (params.interactions < 0 || params.batch_base < 1 || params.target_period < 1 ||
      params.eval_every < 0 || params.epsilon_anneal < 0) {
    throw Error(ErrorKind::bad_config, "invalid deep learning parameters");
  }
  const auto& machine = product.machine();
  const Environment& env = product.env();
  const bool counterfactual = algorithm != DeepAlgorithm::dqn;
  FeatureEncoder encoder(product, counterfactual);
  std::vector<int> sizes{encoder.size()};
  sizes.insert(sizes.end(), params.hidden.begin(), params.hidden.end());
  sizes.push_back(kActionCount);

  Rng rng(derive_seed(params.seed, 0));
  Rng init(derive_seed(params.seed, 2));
  const std::uint64_t eval_seed = derive_seed(params.seed, 1);

  DeepResult<T> result;
  result.net = Mlp<T>(sizes, init);
  Mlp<T> target = result.net;
  Adam<T> optimizer(result.net.parameter_count(), static_cast<T>(params.learning_rate));
  ReplayBuffer<T> buffer(params.buffer_capacity);
  const std::size_t batch_size =
      static_cast<std::size_t>(params.batch_base) * (counterfactual ? machine.states.size() : 1);
  CounterCache cache(machine.counters);
  double loss_sum = 0.0;
  int loss_count = 0;

  ProductState x = product.reset(rng);
  for (int t = 0; t < params.interactions; ++t) {
    double progress = params.epsilon_anneal > 0 ? std::min(1.0, double(t) / params.epsilon_anneal) : 1.0;
    double epsilon = params.epsilon_start + (params.epsilon_end - params.epsilon_start) * progress;
    auto out = result.net.forward(encoder.encode<T>(x));
    QTable::Values values{};
    for (int a = 0; a < kActionCount; ++a) values[static_cast<std::size_t>(a)] = static_cast<double>(out[a]);
    int a = epsilon_greedy(values, epsilon, rng);
    ProductOutcome o = product.step(x, kActions[static_cast<std::size_t>(a)]);

    if (!counterfactual) {
      buffer.push({encoder.encode<T>(x), a, static_cast<T>(o.reward), encoder.encode<T>(o.next),
                   o.machine_terminal});
      ++result.pushed;
    } else {
      for (const Experience& e : counterfactual_experiences(machine, o.label, env.cell_id(x.env), a,
                                                            env.cell_id(o.next.env), cache,
                                                            product.gamma())) {
        buffer.push({encoder.encode<T>(x.env.agent, e.state, e.counters), a, static_cast<T>(e.reward),
                     encoder.encode<T>(o.next.env.agent, e.next_state, e.next_counters), e.terminal});
        ++result.pushed;
      }
      cache.insert(o.next.machine.counters);
    }

    if (buffer.size() >= batch_size) {
      Batch<T> batch = buffer.sample(batch_size, rng);
      loss_sum += static_cast<double>(
          train_step(result.net, target, batch, static_cast<T>(params.gamma), optimizer));
      ++loss_count;
    }
    if ((t + 1) % params.target_period == 0) target = result.net;

    if (o.done()) {
      ++result.episodes;
      x = product.reset(rng);
    } else {
      x = o.next;
    }

    if (params.eval_every > 0 && (t + 1) % params.eval_every == 0) {
      EvalResult e = evaluate_greedy(product, network_policy(result.net, encoder),
                                     params.eval_episodes, eval_seed);
      result.curve.push_back({t + 1, result.episodes, e.mean_return, e.success_rate,
                              loss_count > 0 ? loss_sum / loss_count : 0.0});
      loss_sum = 0.0;
      loss_count = 0;
      if (!result.episodes_to_solve && !e.empty() && e.success_rate >= params.success_threshold) {
        result.episodes_to_solve = result.episodes;
      }
    }
  }
  return result;
}

template <class T>
void save_checkpoint(const Mlp<T>& net, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::io, "cannot write " + path);
  auto u32 = [&](std::uint32_t v) { out.write(reinterpret_cast<const char*>(&v), 4); };
  auto f64 = [&](double v) { out.write(reinterpret_cast<const char*>(&v), 8); };
  out.write("CRAQ", 4);
  u32(1);
  u32(static_cast<std::uint32_t>(net.layers.size()));
  for (const auto& layer : net.layers) {
    u32(static_cast<std::uint32_t>(layer.weight.rows()));
    u32(static_cast<std::uint32_t>(layer.weight.cols()));
    for (Eigen::Index r = 0; r < layer.weight.rows(); ++r) {
      for (Eigen::Index c = 0; c < layer.weight.cols(); ++c) f64(static_cast<double>(layer.weight(r, c)));
    }
    for (Eigen::Index r = 0; r < layer.bias.size(); ++r) f64(static_cast<double>(layer.bias[r]));
  }
  if (!out) throw Error(ErrorKind::io, "failed writing " + path);
}

Mlp<double> load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::io, "cannot read " + path);
  auto u32 = [&] {
    std::uint32_t v = 0;
    in.read(reinterpret_cast<char*>(&v), 4);
    return v;
  };
  auto f64 = [&] {
    double v = 0;
    in.read(reinterpret_cast<char*>(&v), 8);
    return v;
  };
  char magic[4] = {};
  in.read(magic, 4);
  if (!in || std::memcmp(magic, "CRAQ", 4) != 0) throw Error(ErrorKind::io, path + " is not a checkpoint");
  if (u32() != 1) throw Error(ErrorKind::io, path + ": unsupported checkpoint version");
  std::uint32_t count = u32();
  if (!in || count == 0 || count > 64) throw Error(ErrorKind::io, path + ": bad layer count");
  Mlp<double> net;
  for (std::uint32_t l = 0; l < count; ++l) {
    std::uint32_t rows = u32();
    std::uint32_t cols = u32();
    if (!in || rows == 0 || cols == 0 || rows > (1u << 16) || cols > (1u << 16)) {
      throw Error(ErrorKind::io, path + ": bad layer shape");
    }
    if (l > 0 && static_cast<Eigen::Index>(cols) != net.layers.back().weight.rows()) {
      throw Error(ErrorKind::dimension_mismatch, path + ": layer shapes do not chain");
    }
    DenseLayer<double> layer{Eigen::MatrixXd(rows, cols), Eigen::VectorXd(rows)};
    for (std::uint32_t r = 0; r < rows; ++r) {
      for (std::uint32_t c = 0; c < cols; ++c) layer.weight(r, c) = f64();
    }
    for (std::uint32_t r = 0; r < rows; ++r) layer.bias[r] = f64();
    if (!in) throw Error(ErrorKind::io, path + ": truncated checkpoint");
    net.layers.push_back(std::move(layer));
  }
  in.peek();
  if (!in.eof()) throw Error(ErrorKind::io, path + ": trailing bytes after checkpoint");
  return net;
}

#define CRA_DEEP_INSTANTIATE(T)                                                                  \
  template class Mlp<T>;                                                                         \
  template class Adam<T>;                                                                        \
  template class ReplayBuffer<T>;                                                                \
  template T bellman_loss<T>(const Mlp<T>&, const Mlp<T>&, const Batch<T>&, T,                   \
                             typename Mlp<T>::Vector*);                                          \
  template T train_step<T>(Mlp<T>&, const Mlp<T>&, const Batch<T>&, T, Adam<T>&);                \
  template typename Mlp<T>::Vector FeatureEncoder::encode<T>(GridPosition, StateId,              \
                                                             const CounterVector&) const;        \
  template GreedyPolicy network_policy<T>(const Mlp<T>&, const FeatureEncoder&);                 \
  template DeepResult<T> dqn_train<T>(const Product&, DeepAlgorithm, const DeepParams&);         \
  template void save_checkpoint<T>(const Mlp<T>&, const std::string&);

CRA_DEEP_INSTANTIATE(double)
CRA_DEEP_INSTANTIATE(float)

}  // namespace cra
