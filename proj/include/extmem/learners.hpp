#pragma once

// Bounded value learners: linear Q-learning over transduced pixels and a DQN with
// uniform replay and a periodically synced target network.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <istream>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "extmem/errors.hpp"
#include "extmem/grid.hpp"
#include "extmem/gridworld.hpp"
#include "extmem/rng.hpp"
#include "extmem/tinynet.hpp"

namespace extmem {

/// Index of the largest value; ties go to the lowest index.
inline std::size_t argmax_lowest(std::span<const double> values) {
  expects(!values.empty(), "argmax of empty vector");
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i)
    if (values[i] > values[best]) best = i;
  return best;
}

/// With probability epsilon a uniform action, otherwise the greedy one.
inline std::size_t epsilon_greedy(std::span<const double> qvals, double epsilon, RngStream& rng) {
  expects(!qvals.empty(), "epsilon_greedy needs at least one action value");
  if (epsilon > 0.0 && rng.uniform() < epsilon) return rng.index(qvals.size());
  return argmax_lowest(qvals);
}

inline TransitionRef as_ref(const Transition& t) {
  return {t.obs.flat, static_cast<int>(t.action), t.reward, t.next_obs.flat, t.done};
}

// ---------------------------------------------------------------------------
// Linear Q-learning

class LinearQ {
 public:
  LinearQ(int input_dim, double alpha, double gamma, double epsilon)
      : dim_(input_dim), alpha_(alpha), gamma_(gamma), epsilon_(epsilon),
        weights_(static_cast<std::size_t>(kNumActions * input_dim), 0.0) {
    if (input_dim < 1) throw config_error("linear agent needs a positive input dimension");
    if (!(alpha > 0.0)) throw config_error("step size must be positive");
    if (!(gamma >= 0.0 && gamma < 1.0)) throw config_error("discount must lie in [0, 1)");
    if (!(epsilon >= 0.0 && epsilon <= 1.0)) throw config_error("epsilon must lie in [0, 1]");
  }

  /// Weights drawn uniformly from [lo, hi).
  void randomize(double lo, double hi, RngStream& rng) {
    if (hi > lo)
      for (auto& w : weights_) w = rng.uniform(lo, hi);
  }

  std::size_t capacity() const { return static_cast<std::size_t>(dim_); }
  int input_dim() const { return dim_; }
  double alpha() const { return alpha_; }
  double gamma() const { return gamma_; }
  double epsilon() const { return epsilon_; }

  /// Action-major storage: weights for action a occupy [a*dim, (a+1)*dim).
  std::span<double> weights(Action a) {
    return std::span<double>(weights_).subspan(static_cast<std::size_t>(a) * capacity(), capacity());
  }
  std::span<const double> weights(Action a) const {
    return std::span<const double>(weights_).subspan(static_cast<std::size_t>(a) * capacity(), capacity());
  }
  std::span<const double> all_weights() const { return weights_; }
  std::span<double> all_weights() { return weights_; }

  std::array<double, kNumActions> q_values(std::span<const double> obs) const {
    expects(obs.size() == capacity(), "observation length does not match linear weights");
    std::array<double, kNumActions> q{};
    for (std::size_t i = 0; i < obs.size(); ++i) {
      if (obs[i] == 0.0) continue;
      for (int a = 0; a < kNumActions; ++a) q[static_cast<std::size_t>(a)] += weights_[static_cast<std::size_t>(a) * capacity() + i] * obs[i];
    }
    return q;
  }

  Action act(std::span<const double> obs, RngStream& rng) const {
    const auto q = q_values(obs);
    return static_cast<Action>(epsilon_greedy(q, epsilon_, rng));
  }

  /// w_a <- w_a + alpha * delta * o, delta = r + gamma * max_a' w_a'.o' * (1 - done) - w_a.o.
  /// Returns delta.
  double update(const TransitionRef& t) {
    expects(t.action >= 0 && t.action < kNumActions, "action index out of range");
    const auto q = q_values(t.obs);
    double target = t.reward;
    if (!t.done) {
      const auto q_next = q_values(t.next_obs);
      target += gamma_ * *std::max_element(q_next.begin(), q_next.end());
    }
    const double delta = target - q[static_cast<std::size_t>(t.action)];
    auto w = weights(static_cast<Action>(t.action));
    const double step = alpha_ * delta;
    for (std::size_t i = 0; i < w.size(); ++i)
      if (t.obs[i] != 0.0) w[i] += step * t.obs[i];
    if (!std::isfinite(delta)) diverged_ = true;
    return delta;
  }
  double update(const Transition& t) { return update(as_ref(t)); }

  bool diverged() const { return diverged_; }

 private:
  int dim_;
  double alpha_;
  double gamma_;
  double epsilon_;
  std::vector<double> weights_;
  bool diverged_ = false;
};

// ---------------------------------------------------------------------------
// DQN

/// Binary image packed 64 pixels per word.
struct PackedObs {
  std::vector<std::uint64_t> words;
  std::uint32_t length = 0;

  static PackedObs pack(std::span<const double> flat) {
    PackedObs p;
    p.length = static_cast<std::uint32_t>(flat.size());
    p.words.assign((flat.size() + 63) / 64, 0);
    for (std::size_t i = 0; i < flat.size(); ++i)
      if (flat[i] != 0.0) p.words[i / 64] |= std::uint64_t{1} << (i % 64);
    return p;
  }
  void unpack(std::vector<double>& out) const {
    out.assign(length, 0.0);
    for (std::size_t i = 0; i < length; ++i)
      if ((words[i / 64] >> (i % 64)) & 1U) out[i] = 1.0;
  }
  bool operator==(const PackedObs&) const = default;
};

struct StoredTransition {
  PackedObs obs;
  std::uint8_t action = 0;
  double reward = 0.0;
  PackedObs next_obs;
  bool done = false;
  bool operator==(const StoredTransition&) const = default;
};

/// Fixed-capacity FIFO; pushing into a full buffer overwrites the oldest element.
template <class T>
class RingBuffer {
 public:
  explicit RingBuffer(std::size_t capacity) : capacity_(capacity) {
    if (capacity == 0) throw config_error("replay capacity must be positive");
    items_.reserve(std::min<std::size_t>(capacity, 1 << 16));
  }

  void push(T item) {
    if (items_.size() < capacity_) {
      items_.push_back(std::move(item));
    } else {
      items_[head_] = std::move(item);
      head_ = (head_ + 1) % capacity_;
    }
  }

  /// i = 0 is the oldest element.
  const T& at(std::size_t i) const {
    expects(i < items_.size(), "replay index out of range");
    return items_[(head_ + i) % items_.size()];
  }
  std::size_t size() const { return items_.size(); }
  std::size_t capacity() const { return capacity_; }

 private:
  std::size_t capacity_;
  std::size_t head_ = 0;
  std::vector<T> items_;
};

struct DqnConfig {
  NetSpec net;
  double alpha = 1e-3;
  double gamma = 0.99;
  double epsilon = 0.1;
  std::size_t replay_capacity = 10000;
  std::size_t batch_size = 32;
  std::size_t sync_period = 200;  // in learning steps
  std::size_t learn_start = 500;  // buffered transitions before learning begins

  void validate() const {
    net.validate();
    if (!(alpha > 0.0)) throw config_error("step size must be positive");
    if (!(gamma >= 0.0 && gamma < 1.0)) throw config_error("discount must lie in [0, 1)");
    if (!(epsilon >= 0.0 && epsilon <= 1.0)) throw config_error("epsilon must lie in [0, 1]");
    if (batch_size == 0 || sync_period == 0) throw config_error("batch_size and sync_period must be positive");
    if (replay_capacity == 0) throw config_error("replay capacity must be positive");
  }
};

class DqnAgent {
 public:
  DqnAgent(DqnConfig config, RngStream init_rng, RngStream replay_rng)
      : config_((config.validate(), std::move(config))),
        online_(NetParams::glorot(config_.net, init_rng)),
        target_(online_),
        replay_(config_.replay_capacity),
        replay_rng_(std::move(replay_rng)) {}

  const DqnConfig& config() const { return config_; }
  const NetParams& online() const { return online_; }
  const NetParams& target() const { return target_; }
  NetParams& online() { return online_; }
  const RingBuffer<StoredTransition>& replay() const { return replay_; }
  std::size_t capacity() const { return online_.spec.parameter_count(); }
  std::size_t learning_steps() const { return learning_steps_; }
  bool diverged() const { return diverged_; }

  std::vector<double> q_values(std::span<const double> obs) const { return forward(online_, obs); }

  Action act(std::span<const double> obs, RngStream& rng) const {
    const auto q = q_values(obs);
    return static_cast<Action>(epsilon_greedy(q, config_.epsilon, rng));
  }

  /// Buffers the transition; once learn_start transitions are stored, takes one SGD
  /// step on a uniform with-replacement minibatch and syncs the target every
  /// sync_period learning steps. Returns the minibatch loss (0 during warm-up).
  double observe(const TransitionRef& t) {
    replay_.push(StoredTransition{PackedObs::pack(t.obs), static_cast<std::uint8_t>(t.action), t.reward,
                                  PackedObs::pack(t.next_obs), t.done});
    if (replay_.size() < config_.learn_start) return 0.0;

    const std::size_t n = config_.batch_size;
    obs_scratch_.resize(n);
    next_scratch_.resize(n);
    batch_.resize(n);
    for (std::size_t k = 0; k < n; ++k) {
      const auto& s = replay_.at(replay_rng_.index(replay_.size()));
      s.obs.unpack(obs_scratch_[k]);
      s.next_obs.unpack(next_scratch_[k]);
      batch_[k] = TransitionRef{obs_scratch_[k], s.action, s.reward, next_scratch_[k], s.done};
    }
    const auto lg = td_loss_and_grad(online_, target_, batch_, config_.gamma);
    sgd_apply(online_, lg.grad, config_.alpha);
    ++learning_steps_;
    if (learning_steps_ % config_.sync_period == 0) target_ = online_;
    if (!std::isfinite(lg.loss) || !online_.all_finite()) diverged_ = true;
    return lg.loss;
  }
  double observe(const Transition& t) { return observe(as_ref(t)); }

 private:
  DqnConfig config_;
  NetParams online_;
  NetParams target_;
  RingBuffer<StoredTransition> replay_;
  RngStream replay_rng_;
  std::size_t learning_steps_ = 0;
  bool diverged_ = false;
  std::vector<std::vector<double>> obs_scratch_;
  std::vector<std::vector<double>> next_scratch_;
  std::vector<TransitionRef> batch_;
};

// ---------------------------------------------------------------------------
// Checkpoints: text header ("key = value" lines) terminated by "---", then the
// little-endian parameter payload.

inline void save_checkpoint(std::ostream& out, const LinearQ& agent) {
  out << "extmem-checkpoint 1\nkind = linear\ninput_dim = " << agent.input_dim() << "\nalpha = "
      << agent.alpha() << "\ngamma = " << agent.gamma() << "\nepsilon = " << agent.epsilon() << "\n---\n";
  for (double w : agent.all_weights()) detail::put_double(out, w);
}

inline void save_checkpoint(std::ostream& out, const DqnAgent& agent) {
  const auto& c = agent.config();
  out << "extmem-checkpoint 1\nkind = dqn\nnet = " << c.net.label() << "\nalpha = " << c.alpha
      << "\ngamma = " << c.gamma << "\nepsilon = " << c.epsilon << "\nlearning_steps = "
      << agent.learning_steps() << "\n---\n";
  save_net(out, agent.online());
  save_net(out, agent.target());
}

/// Reads the header of a checkpoint, leaving the stream at the payload.
inline std::vector<std::pair<std::string, std::string>> read_checkpoint_header(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != "extmem-checkpoint 1") throw config_error("not an extmem checkpoint");
  std::vector<std::pair<std::string, std::string>> fields;
  while (std::getline(in, line) && line != "---") {
    const auto eq = line.find(" = ");
    if (eq == std::string::npos) throw config_error("malformed checkpoint header line '" + line + "'");
    fields.emplace_back(line.substr(0, eq), line.substr(eq + 3));
  }
  return fields;
}

inline void load_linear_weights(std::istream& in, LinearQ& agent) {
  for (auto& w : agent.all_weights()) w = detail::get_double(in);
}

}  // namespace extmem
