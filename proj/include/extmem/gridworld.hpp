#pragma once

#include <cstdint>
#include <optional>
#include <utility>

#include "extmem/artifacts.hpp"
#include "extmem/grid.hpp"
#include "extmem/rng.hpp"

namespace extmem {

struct EnvState {
  Cell agent_pos;
  std::uint64_t step_count = 0;
  std::uint64_t episode_count = 0;      // episodes ended at the goal
  std::uint64_t truncated_count = 0;    // episodes cut by the step cap
  std::uint64_t episode_steps = 0;
  Bitmap artifact_mask;

  bool operator==(const EnvState&) const = default;
};

struct Transition {
  Observation obs;
  Action action = Action::up;
  double reward = 0.0;
  Observation next_obs;
  bool done = false;
};

/// Result of one move. `reached` is the cell entered by the move, before any reset.
struct StepResult {
  Cell from;
  Cell reached;
  double reward = 0.0;
  bool done = false;
  bool truncated = false;
};

/// The 13x13 navigation arena with its artifact layer. Copyable value type; all
/// randomness after construction comes from the dynamics stream seeded in the ctor.
class GridWorld {
 public:
  GridWorld(GridSpec spec, ArtifactParams artifacts, std::uint64_t dynamics_seed = 0)
      : spec_(std::move(spec)),
        artifacts_(std::move(artifacts)),
        atlas_(generate_textures(spec_)),
        rng_(dynamics_seed, "env_dynamics") {
    artifacts_.dynamic.validate();
    state_.agent_pos = spec_.start;
    state_.artifact_mask = artifacts_.kind == ArtifactKind::dynamic_path
                               ? empty_mask(spec_)
                               : build_fixed_mask(artifacts_, spec_);
  }

  const GridSpec& spec() const { return spec_; }
  const ArtifactParams& artifacts() const { return artifacts_; }
  const TextureAtlas& atlas() const { return atlas_; }
  const EnvState& state() const { return state_; }
  const Bitmap& mask() const { return state_.artifact_mask; }
  Cell position() const { return state_.agent_pos; }

  /// Deterministic move; walls self-loop. Entering the goal pays 1 and resets to start.
  StepResult step(Action action) {
    StepResult r;
    r.from = state_.agent_pos;
    const Cell target = moved(r.from, action);
    r.reached = spec_.contains(target) ? target : r.from;

    if (artifacts_.kind == ArtifactKind::dynamic_path)
      dynamic_path_update(state_.artifact_mask, spec_, r.from, r.reached, artifacts_.dynamic, rng_);

    ++state_.step_count;
    ++state_.episode_steps;
    state_.agent_pos = r.reached;
    if (r.reached == spec_.goal) {
      r.reward = 1.0;
      r.done = true;
      ++state_.episode_count;
      reset_episode();
    } else if (state_.episode_steps >= static_cast<std::uint64_t>(spec_.episode_step_cap)) {
      r.truncated = true;
      ++state_.truncated_count;
      reset_episode();
    }
    return r;
  }

  /// Full 24x24 view from an arbitrary cell under the current mask (no side effects).
  void render_into(Cell at, Observation& out) const {
    render_observation_into(spec_, atlas_, at, state_.artifact_mask, out);
  }
  Observation render(Cell at) const {
    Observation o;
    render_into(at, o);
    return o;
  }

  /// View from `at` with the optional per-step pixel flips applied.
  void observe_into(Cell at, Observation& out) {
    render_into(at, out);
    if (spec_.flip_probability > 0.0) {
      for (auto& p : out.pixels)
        if (rng_.bernoulli(spec_.flip_probability)) p ^= 1;
      out.sync_flat();
    }
  }
  Observation observe() {
    Observation o;
    observe_into(state_.agent_pos, o);
    return o;
  }

  /// Convenience wrapper assembling a full-resolution Transition.
  Transition transition(Action action) {
    Transition t;
    t.obs = observe();
    const StepResult r = step(action);
    t.action = action;
    t.reward = r.reward;
    t.done = r.done;
    observe_into(r.reached, t.next_obs);
    return t;
  }

 private:
  void reset_episode() {
    state_.agent_pos = spec_.start;
    state_.episode_steps = 0;
  }

  GridSpec spec_;
  ArtifactParams artifacts_;
  TextureAtlas atlas_;
  EnvState state_;
  RngStream rng_;
};

}  // namespace extmem
