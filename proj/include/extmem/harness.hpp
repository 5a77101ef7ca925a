#pragma once

// Sweeps, step-size selection, average-reward curves and the externalization scan.

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <cstdlib>
#include <exception>
#include <functional>
#include <map>
#include <mutex>
#include <span>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "extmem/artifacts.hpp"
#include "extmem/errors.hpp"
#include "extmem/stats.hpp"
#include "extmem/trial.hpp"

namespace extmem {

inline constexpr double kSignificance = 0.05;

/// {2^-12, 2^-10, ..., 2^-2}
inline std::vector<double> default_step_sizes() {
  std::vector<double> grid;
  for (int e = -12; e <= -2; e += 2) grid.push_back(std::ldexp(1.0, e));
  return grid;
}

inline std::vector<std::uint64_t> seed_range(std::uint64_t first, std::uint64_t count) {
  std::vector<std::uint64_t> seeds(count);
  for (std::uint64_t i = 0; i < count; ++i) seeds[i] = first + i;
  return seeds;
}

// ---------------------------------------------------------------------------
// Work queue

/// EXTMEM_WORKERS if set and positive, otherwise the hardware concurrency.
inline unsigned worker_count() {
  if (const char* env = std::getenv("EXTMEM_WORKERS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && v > 0) return static_cast<unsigned>(v);
  }
  return std::max(1U, std::thread::hardware_concurrency());
}

/// Evaluates fn(i) for i in [0, n) on `workers` threads; results land at index i,
/// so the output never depends on scheduling. The first exception is rethrown.
template <class R, class F>
std::vector<R> parallel_map(std::size_t n, F&& fn, unsigned workers = worker_count()) {
  std::vector<R> out(n);
  workers = static_cast<unsigned>(std::min<std::size_t>(std::max(1U, workers), std::max<std::size_t>(n, 1)));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) out[i] = fn(i);
    return out;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto work = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        out[i] = fn(i);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
        next = n;
      }
    }
  };
  std::vector<std::thread> pool;
  for (unsigned w = 0; w < workers; ++w) pool.emplace_back(work);
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
  return out;
}

inline std::vector<TrialRecord> run_trials(std::span<const TrialConfig> configs, unsigned workers = worker_count()) {
  return parallel_map<TrialRecord>(configs.size(), [&](std::size_t i) { return run_trial(configs[i]); }, workers);
}

// ---------------------------------------------------------------------------
// Two-stage step-size selection

struct SelectionResult {
  double best_alpha = 0.0;
  std::vector<double> alphas;
  std::vector<double> selection_means;  // per alpha, over seeds A
  std::vector<double> evaluation;       // per seed in B, at best_alpha
};

/// `evaluate(jobs)` maps (alpha, seed) pairs to scores in order. The best step size
/// maximizes the mean over `selection_seeds` (first one wins ties); the returned
/// sample is drawn fresh on `evaluation_seeds`.
template <class Evaluate>
SelectionResult two_stage_select(std::span<const double> alphas, std::span<const std::uint64_t> selection_seeds,
                                 std::span<const std::uint64_t> evaluation_seeds, Evaluate&& evaluate) {
  expects(!alphas.empty(), "step-size grid is empty");
  expects(!selection_seeds.empty() && !evaluation_seeds.empty(), "seed sets must be non-empty");
  for (auto a : selection_seeds)
    expects(std::find(evaluation_seeds.begin(), evaluation_seeds.end(), a) == evaluation_seeds.end(),
            "selection and evaluation seeds overlap");

  std::vector<std::pair<double, std::uint64_t>> jobs;
  for (double alpha : alphas)
    for (auto s : selection_seeds) jobs.emplace_back(alpha, s);
  const std::vector<double> scores = evaluate(std::as_const(jobs));
  expects(scores.size() == jobs.size(), "evaluator returned the wrong number of scores");

  SelectionResult r;
  r.alphas.assign(alphas.begin(), alphas.end());
  const std::size_t per = selection_seeds.size();
  std::size_t best = 0;
  for (std::size_t i = 0; i < alphas.size(); ++i) {
    r.selection_means.push_back(
        summarize(std::span<const double>(scores).subspan(i * per, per)).mean);
    if (r.selection_means[i] > r.selection_means[best]) best = i;
  }
  r.best_alpha = alphas[best];

  jobs.clear();
  for (auto s : evaluation_seeds) jobs.emplace_back(r.best_alpha, s);
  r.evaluation = evaluate(std::as_const(jobs));
  expects(r.evaluation.size() == jobs.size(), "evaluator returned the wrong number of scores");
  return r;
}

// ---------------------------------------------------------------------------
// Average reward

/// Prefix means (1/t) sum_{n<=t} r_n at t = stride, 2*stride, ... and always at t = N.
inline std::vector<std::pair<std::uint64_t, double>> average_reward_curve(std::span<const double> rewards,
                                                                          std::uint64_t stride = 1) {
  expects(!rewards.empty(), "empty reward stream");
  expects(stride >= 1, "stride must be positive");
  std::vector<std::pair<std::uint64_t, double>> curve;
  double sum = 0.0;
  const std::uint64_t n = rewards.size();
  for (std::uint64_t t = 1; t <= n; ++t) {
    sum += rewards[t - 1];
    if (t % stride == 0 || t == n) curve.emplace_back(t, sum / static_cast<double>(t));
  }
  return curve;
}

inline std::vector<std::pair<std::uint64_t, double>> average_reward_curve(const TrialRecord& record,
                                                                          std::uint64_t stride = 1) {
  return average_reward_curve(record.reward_stream(), stride);
}

// ---------------------------------------------------------------------------
// Externalization scan

/// Evaluation sample of one (artifact, capacity) cell.
struct CellSample {
  ArtifactKind artifact = ArtifactKind::none;
  std::size_t capacity = 0;
  std::string label;
  std::vector<double> values;
};

struct PairTest {
  ArtifactKind artifact = ArtifactKind::none;
  std::size_t capacity = 0;          // C, artifact environment
  std::size_t nopath_capacity = 0;   // C', No Path
  std::string label;
  std::string nopath_label;
  double mean = 0.0;
  double nopath_mean = 0.0;
  double p_value = 0.5;
};

struct ExternalizationVerdict {
  PairTest test;
  bool verdict = false;  // C < C' and p < 0.05
};

struct ScanResult {
  std::vector<PairTest> matrix;  // every (artifact cell, No Path cell) pair
  std::vector<ExternalizationVerdict> verdicts;  // pairs with C < C'

  std::size_t true_verdicts() const {
    return static_cast<std::size_t>(
        std::count_if(verdicts.begin(), verdicts.end(), [](const auto& v) { return v.verdict; }));
  }
};

/// Compares every artifact cell with every No Path cell. Needs a No Path sample for
/// each capacity that appears among the artifact cells.
inline ScanResult externalization_scan(std::span<const CellSample> cells) {
  std::vector<const CellSample*> nopath;
  std::vector<const CellSample*> artifact;
  for (const auto& c : cells) (c.artifact == ArtifactKind::none ? nopath : artifact).push_back(&c);
  auto by_capacity = [](const CellSample* a, const CellSample* b) {
    return a->capacity != b->capacity ? a->capacity < b->capacity : a->label < b->label;
  };
  std::sort(nopath.begin(), nopath.end(), by_capacity);
  std::stable_sort(artifact.begin(), artifact.end(), [&](const CellSample* a, const CellSample* b) {
    return a->artifact != b->artifact ? a->artifact < b->artifact : by_capacity(a, b);
  });
  for (const auto* a : artifact)
    if (std::none_of(nopath.begin(), nopath.end(), [&](const CellSample* q) { return q->capacity == a->capacity; }))
      throw config_error("No Path results missing for capacity " + std::to_string(a->capacity));

  ScanResult out;
  for (const auto* a : artifact)
    for (const auto* q : nopath) {
      PairTest t;
      t.artifact = a->artifact;
      t.capacity = a->capacity;
      t.nopath_capacity = q->capacity;
      t.label = a->label;
      t.nopath_label = q->label;
      t.mean = summarize(a->values).mean;
      t.nopath_mean = summarize(q->values).mean;
      t.p_value = one_sided_test(a->values, q->values);
      out.matrix.push_back(t);
      if (t.capacity < t.nopath_capacity) out.verdicts.push_back({t, t.p_value < kSignificance});
    }
  return out;
}

}  // namespace extmem
