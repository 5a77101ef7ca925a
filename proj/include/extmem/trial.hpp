#pragma once

// A single seeded trial: one environment, one bounded agent, a fixed number of steps.

#include <cmath>
#include <concepts>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "extmem/artifacts.hpp"
#include "extmem/errors.hpp"
#include "extmem/gridworld.hpp"
#include "extmem/learners.hpp"
#include "extmem/rng.hpp"
#include "extmem/tinynet.hpp"

namespace extmem {

enum class AgentKind : std::uint8_t { linear, dqn };

constexpr std::string_view to_string(AgentKind k) { return k == AgentKind::linear ? "linear" : "dqn"; }

inline AgentKind parse_agent_kind(std::string_view s) {
  if (s == "linear") return AgentKind::linear;
  if (s == "dqn") return AgentKind::dqn;
  throw config_error("unknown agent kind '" + std::string(s) + "'");
}

/// Everything that determines a trial.
struct TrialConfig {
  GridSpec grid;
  ArtifactParams artifacts;
  AgentKind agent = AgentKind::linear;
  int crop_side = 24;  // linear capacity selector
  NetSpec net;         // dqn capacity selector (input_dim follows the full view)
  double alpha = 0.01;
  double gamma = 0.99;
  double epsilon = 0.1;
  double linear_init_scale = 0.01;  // linear weights ~ U[0, scale)
  std::size_t replay_capacity = 10000;
  std::size_t batch_size = 32;
  std::size_t sync_period = 200;
  std::size_t learn_start = 500;
  std::uint64_t trial_length = 200000;
  std::uint64_t seed = 0;

  /// Learnable action-value parameters: |w_a| for linear, |theta| for DQN.
  std::size_t capacity() const {
    return agent == AgentKind::linear ? static_cast<std::size_t>(crop_side * crop_side)
                                      : dqn_net().parameter_count();
  }
  NetSpec dqn_net() const {
    NetSpec s = net;
    s.input_dim = grid.observation_side() * grid.observation_side();
    s.output_dim = kNumActions;
    return s;
  }
  DqnConfig dqn_config() const {
    return DqnConfig{dqn_net(), alpha, gamma, epsilon, replay_capacity, batch_size, sync_period, learn_start};
  }
  int input_side() const { return agent == AgentKind::linear ? crop_side : grid.observation_side(); }
  std::string capacity_label() const {
    return agent == AgentKind::linear ? std::to_string(crop_side * crop_side) : net.label();
  }

  bool operator==(const TrialConfig&) const = default;
};

/// Sparse reward stream: rewards are 0 except at the listed (1-based) steps, where
/// they are 1.
struct TrialRecord {
  TrialConfig config;
  std::uint64_t length = 0;  // steps actually executed
  std::vector<std::uint64_t> reward_steps;
  std::uint64_t episodes = 0;
  std::uint64_t truncated_episodes = 0;
  bool diverged = false;
  std::uint64_t diverged_at = 0;

  double total_reward() const { return static_cast<double>(reward_steps.size()); }

  /// Dense r_1..r_N.
  std::vector<double> reward_stream() const {
    std::vector<double> r(length, 0.0);
    for (auto s : reward_steps) r[s - 1] = 1.0;
    return r;
  }

  bool operator==(const TrialRecord&) const = default;
};

template <class A>
concept TrialAgent = requires(A a, const A ca, std::span<const double> obs, RngStream& rng,
                              const TransitionRef& t) {
  { ca.act(obs, rng) } -> std::same_as<Action>;
  a.learn(t);
  { ca.diverged() } -> std::convertible_to<bool>;
};

struct LinearAgent {
  LinearQ q;
  Action act(std::span<const double> obs, RngStream& rng) const { return q.act(obs, rng); }
  void learn(const TransitionRef& t) { q.update(t); }
  bool diverged() const { return q.diverged(); }
};

struct DeepAgent {
  DqnAgent q;
  Action act(std::span<const double> obs, RngStream& rng) const { return q.act(obs, rng); }
  void learn(const TransitionRef& t) { q.observe(t); }
  bool diverged() const { return q.diverged(); }
};

/// Runs `steps` interaction steps. Every transition is learned from; a reward of 1
/// at step n (1-based) is recorded. Stops early on divergence.
template <TrialAgent A>
void run_loop(GridWorld& env, A& agent, int crop_side, std::uint64_t steps, RngStream& action_rng,
              TrialRecord& record) {
  const GridSpec& spec = env.spec();
  const bool crop = crop_side != spec.observation_side();
  // Static masks without pixel flips give one fixed view per cell.
  const bool cacheable = env.artifacts().kind != ArtifactKind::dynamic_path && spec.flip_probability == 0.0;
  std::vector<Observation> cache;
  Observation full;
  Observation cur;
  Observation next;
  auto fresh = [&](Cell at, Observation& out) {
    if (crop) {
      env.observe_into(at, full);
      transduce_into(full, crop_side, out);
    } else {
      env.observe_into(at, out);
    }
  };
  if (cacheable) {
    cache.resize(static_cast<std::size_t>(spec.width * spec.height));
    for (int y = 0; y < spec.height; ++y)
      for (int x = 0; x < spec.width; ++x) fresh(Cell{x, y}, cache[static_cast<std::size_t>(y * spec.width + x)]);
  }
  // Views live either in the cache or in the two scratch buffers.
  auto view = [&](Cell at, Observation& scratch) -> std::span<const double> {
    if (cacheable) return cache[static_cast<std::size_t>(at.y * spec.width + at.x)].flat;
    fresh(at, scratch);
    return scratch.flat;
  };

  std::span<const double> cur_flat = view(env.position(), cur);
  for (std::uint64_t n = 1; n <= steps; ++n) {
    const Action a = agent.act(cur_flat, action_rng);
    const StepResult r = env.step(a);
    const std::span<const double> next_flat = view(r.reached, next);
    agent.learn(TransitionRef{cur_flat, static_cast<int>(a), r.reward, next_flat, r.done});
    record.length = n;
    if (r.reward > 0.0) record.reward_steps.push_back(n);
    if (agent.diverged()) {
      record.diverged = true;
      record.diverged_at = n;
      break;
    }
    if (r.done || r.truncated) {
      cur_flat = view(env.position(), cur);
    } else {
      std::swap(cur, next);
      cur_flat = cacheable ? next_flat : std::span<const double>(cur.flat);
    }
  }
  record.episodes = env.state().episode_count;
  record.truncated_episodes = env.state().truncated_count;
}

/// Seeds every stream from config.seed and runs the env/agent loop. Deterministic.
inline TrialRecord run_trial(const TrialConfig& config) {
  config.grid.validate();
  TrialRecord record;
  record.config = config;
  GridWorld env(config.grid, config.artifacts, config.seed);
  RngStream action_rng(config.seed, "actions");
  RngStream init_rng(config.seed, "init");

  if (config.agent == AgentKind::linear) {
    if (!valid_crop_side(config.crop_side))
      throw config_error("invalid crop side " + std::to_string(config.crop_side));
    LinearAgent agent{LinearQ(config.crop_side * config.crop_side, config.alpha, config.gamma, config.epsilon)};
    agent.q.randomize(0.0, config.linear_init_scale, init_rng);
    run_loop(env, agent, config.crop_side, config.trial_length, action_rng, record);
  } else {
    DeepAgent agent{DqnAgent(config.dqn_config(), init_rng, RngStream(config.seed, "replay"))};
    run_loop(env, agent, config.grid.observation_side(), config.trial_length, action_rng, record);
  }
  return record;
}

}  // namespace extmem
