#include <gtest/gtest.h>

#include <algorithm>
#include <random>
#include <set>

#include "extmem/harness.hpp"
#include "extmem/stats.hpp"
#include "extmem/trial.hpp"
#include "oracles.hpp"

using namespace extmem;

namespace {

std::vector<double> normal_sample(RngStream& rng, std::size_t n, double mean, double sd) {
  std::normal_distribution<double> dist(mean, sd);
  std::vector<double> xs(n);
  for (auto& x : xs) x = dist(rng);
  return xs;
}

/// Follows the shortest start-goal route of the default layout: 10 downs, then 10 rights.
struct RouteFollower {
  std::uint64_t k = 0;
  Action act(std::span<const double>, RngStream&) const { return k % 20 < 10 ? Action::down : Action::right; }
  void learn(const TransitionRef&) { ++k; }
  bool diverged() const { return false; }
};

}  // namespace

// ---------------------------------------------------------------------------
// Welch test

TEST(Welch, MatchesReferenceValues) {
  // Reference statistic, degrees of freedom and upper-tail p from an independent implementation.
  const std::vector<double> a{3.1, 2.4, 5.6, 4.4, 3.9, 4.8};
  const std::vector<double> b{2.2, 1.9, 3.5, 2.8, 2.0};
  const auto r = welch_one_sided(a, b);
  EXPECT_NEAR(r.t, 2.772729093012639, 1e-12);
  EXPECT_NEAR(r.df, 8.158460816572196, 1e-10);
  EXPECT_NEAR(r.p_value, 0.011872177743601229, 1e-12);
}

TEST(Welch, IdenticalSamplesGiveOneHalf) {
  const std::vector<double> a{1, 2, 3, 4};
  EXPECT_DOUBLE_EQ(one_sided_test(a, a), 0.5);
  const std::vector<double> c{7, 7, 7};
  EXPECT_DOUBLE_EQ(one_sided_test(c, c), 0.5);
}

TEST(Welch, ConstantSamplesWithDifferentMeans) {
  const std::vector<double> hi{3, 3, 3};
  const std::vector<double> lo{1, 1, 1};
  EXPECT_EQ(one_sided_test(hi, lo), 0.0);
  EXPECT_EQ(one_sided_test(lo, hi), 1.0);
}

TEST(Welch, LargeSeparationIsSignificant) {
  RngStream rng(1, "welch");
  const auto q = normal_sample(rng, 30, 0.0, 0.1);
  std::vector<double> p = q;
  for (auto& x : p) x += 10.0;
  EXPECT_LT(one_sided_test(p, q), 1e-6);
}

TEST(Welch, TooFewSamplesIsContractViolation) {
  const std::vector<double> one{1.0};
  const std::vector<double> two{1.0, 2.0};
  EXPECT_THROW(one_sided_test(one, two), contract_violation);
  EXPECT_THROW(one_sided_test(two, one), contract_violation);
}

TEST(Welch, DirectionsSumToOne) {
  RngStream rng(2, "welch");
  for (int k = 0; k < 200; ++k) {
    const auto p = normal_sample(rng, 2 + rng.index(30), rng.uniform(-1, 1), 0.5 + rng.uniform());
    const auto q = normal_sample(rng, 2 + rng.index(30), rng.uniform(-1, 1), 0.5 + rng.uniform());
    EXPECT_NEAR(one_sided_test(p, q) + one_sided_test(q, p), 1.0, 1e-12);
  }
}

TEST(Welch, PowerMatchesNoncentralT) {
  RngStream rng(3, "power");
  const int reps = 10000;
  int rejected = 0;
  for (int r = 0; r < reps; ++r) {
    const auto p = normal_sample(rng, 30, 1.0, 1.0);
    const auto q = normal_sample(rng, 30, 0.0, 1.0);
    rejected += one_sided_test(p, q) < kSignificance;
  }
  const double power = oracle::welch_power(1.0, 1.0, 30, kSignificance);
  EXPECT_NEAR(rejected / static_cast<double>(reps), power, 0.02);
}

TEST(Welch, SizeUnderNullIsFivePercent) {
  RngStream rng(4, "size");
  const int reps = 10000;
  int rejected = 0;
  for (int r = 0; r < reps; ++r) {
    const auto p = normal_sample(rng, 30, 0.0, 1.0);
    const auto q = normal_sample(rng, 30, 0.0, 1.0);
    rejected += one_sided_test(p, q) < kSignificance;
  }
  EXPECT_NEAR(rejected / static_cast<double>(reps), 0.05, 0.01);
}

TEST(Summary, MeanVarianceStdError) {
  const std::vector<double> xs{2, 4, 4, 4, 5, 5, 7, 9};
  const auto s = summarize(xs);
  EXPECT_EQ(s.n, 8u);
  EXPECT_DOUBLE_EQ(s.mean, 5.0);
  EXPECT_DOUBLE_EQ(s.variance, 32.0 / 7.0);
  EXPECT_DOUBLE_EQ(s.std_error(), std::sqrt(32.0 / 7.0 / 8.0));
}

// ---------------------------------------------------------------------------
// Two-stage selection

TEST(TwoStage, SingleStepSizeIsSelectedAndEvaluatedOnFreshSeeds) {
  const std::vector<double> alphas{0.5};
  const auto sel = seed_range(0, 30);
  const auto eval = seed_range(30, 30);
  std::set<std::uint64_t> evaluated;
  int calls = 0;
  const auto r = two_stage_select(alphas, sel, eval, [&](const std::vector<std::pair<double, std::uint64_t>>& jobs) {
    std::vector<double> out;
    for (auto [a, s] : jobs) {
      if (calls == 1) evaluated.insert(s);
      out.push_back(a * static_cast<double>(s));
    }
    ++calls;
    return out;
  });
  EXPECT_EQ(r.best_alpha, 0.5);
  EXPECT_EQ(evaluated, std::set<std::uint64_t>(eval.begin(), eval.end()));
  ASSERT_EQ(r.evaluation.size(), 30u);
  EXPECT_EQ(r.evaluation.front(), 15.0);
}

TEST(TwoStage, DominantStepSizeWins) {
  const std::vector<double> alphas{0.1, 0.2, 0.3};
  const auto sel = seed_range(0, 30);
  const auto eval = seed_range(30, 30);
  const auto r = two_stage_select(alphas, sel, eval, [](const std::vector<std::pair<double, std::uint64_t>>& jobs) {
    std::vector<double> out;
    for (auto [a, s] : jobs) out.push_back((a == 0.2 ? 10.0 : 1.0) + 0.01 * static_cast<double>(s % 3));
    return out;
  });
  EXPECT_EQ(r.best_alpha, 0.2);
  EXPECT_EQ(r.selection_means.size(), 3u);
  EXPECT_GT(r.selection_means[1], r.selection_means[0]);
}

TEST(TwoStage, TiesGoToFirstStepSize) {
  const std::vector<double> alphas{0.1, 0.2};
  const auto r = two_stage_select(alphas, seed_range(0, 3), seed_range(3, 3),
                                  [](const auto& jobs) { return std::vector<double>(jobs.size(), 1.0); });
  EXPECT_EQ(r.best_alpha, 0.1);
}

TEST(TwoStage, OverlappingSeedSetsRejected) {
  const std::vector<double> alphas{0.1};
  auto eval = seed_range(29, 30);
  EXPECT_THROW(two_stage_select(alphas, seed_range(0, 30), eval,
                                [](const auto& jobs) { return std::vector<double>(jobs.size(), 0.0); }),
               contract_violation);
}

TEST(TwoStage, MaximizationBiasShowsUpOnNoise) {
  RngStream rng(5, "bias");
  const std::vector<double> alphas = default_step_sizes();
  const auto sel = seed_range(0, 30);
  const auto eval = seed_range(30, 30);
  const int reps = 2000;
  double max_sel = 0.0;
  double mean_eval = 0.0;
  std::normal_distribution<double> noise(0.0, 1.0);
  for (int k = 0; k < reps; ++k) {
    const auto r = two_stage_select(alphas, sel, eval, [&](const auto& jobs) {
      std::vector<double> out;
      for (std::size_t i = 0; i < jobs.size(); ++i) out.push_back(noise(rng));
      return out;
    });
    max_sel += *std::max_element(r.selection_means.begin(), r.selection_means.end()) / reps;
    mean_eval += summarize(r.evaluation).mean / reps;
  }
  // Expected maximum of six N(0, 1/30) means is about 1.267 / sqrt(30).
  EXPECT_NEAR(max_sel, 1.267 / std::sqrt(30.0), 0.02);
  EXPECT_NEAR(mean_eval, 0.0, 4.0 / std::sqrt(30.0 * reps));
  EXPECT_LT(mean_eval, max_sel);
}

TEST(StepSizes, DefaultGrid) {
  const auto g = default_step_sizes();
  const std::vector<double> expect{1.0 / 4096, 1.0 / 1024, 1.0 / 256, 1.0 / 64, 1.0 / 16, 1.0 / 4};
  EXPECT_EQ(g, expect);
}

// ---------------------------------------------------------------------------
// Average-reward curve

TEST(Curve, DirectFormula) {
  const std::vector<double> r{1, 0, 0, 1};
  const auto c = average_reward_curve(r);
  ASSERT_EQ(c.size(), 4u);
  EXPECT_DOUBLE_EQ(c[0].second, 1.0);
  EXPECT_DOUBLE_EQ(c[1].second, 0.5);
  EXPECT_DOUBLE_EQ(c[2].second, 1.0 / 3.0);
  EXPECT_DOUBLE_EQ(c[3].second, 0.5);
}

TEST(Curve, AllZero) {
  const std::vector<double> r(100, 0.0);
  for (auto [t, v] : average_reward_curve(r, 7)) EXPECT_EQ(v, 0.0);
}

TEST(Curve, FinalPointTimesLengthIsTotal) {
  RngStream rng(6, "curve");
  for (int k = 0; k < 100; ++k) {
    const std::size_t n = 1 + rng.index(5000);
    std::vector<double> r(n);
    double total = 0.0;
    for (auto& x : r) {
      x = rng.bernoulli(0.05) ? 1.0 : 0.0;
      total += x;
    }
    const std::uint64_t stride = 1 + rng.index(100);
    const auto c = average_reward_curve(r, stride);
    EXPECT_EQ(c.back().first, n);
    EXPECT_NEAR(c.back().second * static_cast<double>(n), total, 1e-9);
    for (auto [t, v] : c) EXPECT_TRUE(t % stride == 0 || t == n);
  }
  EXPECT_THROW(average_reward_curve(std::vector<double>{}), contract_violation);
}

TEST(Curve, FromRecord) {
  TrialRecord rec;
  rec.length = 10;
  rec.reward_steps = {2, 5, 10};
  const auto c = average_reward_curve(rec, 5);
  ASSERT_EQ(c.size(), 2u);
  EXPECT_DOUBLE_EQ(c[0].second, 2.0 / 5.0);
  EXPECT_DOUBLE_EQ(c[1].second, 3.0 / 10.0);
  EXPECT_EQ(rec.total_reward(), 3.0);
}

// ---------------------------------------------------------------------------
// Externalization scan

namespace {

CellSample cell(ArtifactKind k, std::size_t cap, std::vector<double> v) {
  return CellSample{k, cap, std::to_string(cap), std::move(v)};
}

std::vector<CellSample> synthetic_cells(RngStream& rng, double artifact_shift) {
  std::vector<CellSample> cells;
  for (std::size_t cap : {16u, 64u, 256u}) {
    cells.push_back(cell(ArtifactKind::none, cap, normal_sample(rng, 30, static_cast<double>(cap), 5.0)));
    cells.push_back(cell(ArtifactKind::optimal_path, cap,
                         normal_sample(rng, 30, static_cast<double>(cap) + artifact_shift, 5.0)));
  }
  return cells;
}

}  // namespace

TEST(Scan, DominantSmallArtifactAgentExternalizes) {
  RngStream rng(7, "scan");
  std::vector<CellSample> cells{cell(ArtifactKind::none, 16, normal_sample(rng, 30, 0.0, 1.0)),
                                cell(ArtifactKind::none, 64, normal_sample(rng, 30, 10.0, 1.0)),
                                cell(ArtifactKind::optimal_path, 16, normal_sample(rng, 30, 50.0, 1.0))};
  const auto s = externalization_scan(cells);
  EXPECT_EQ(s.matrix.size(), 2u);
  ASSERT_EQ(s.verdicts.size(), 1u);
  EXPECT_TRUE(s.verdicts[0].verdict);
  EXPECT_EQ(s.verdicts[0].test.capacity, 16u);
  EXPECT_EQ(s.verdicts[0].test.nopath_capacity, 64u);
  EXPECT_LT(s.verdicts[0].test.p_value, 0.05);
}

TEST(Scan, OnlySmallerCapacitiesGetVerdicts) {
  RngStream rng(8, "scan");
  const auto s = externalization_scan(synthetic_cells(rng, 1000.0));
  EXPECT_EQ(s.matrix.size(), 9u);
  EXPECT_EQ(s.verdicts.size(), 3u);
  for (const auto& v : s.verdicts) {
    EXPECT_LT(v.test.capacity, v.test.nopath_capacity);
    EXPECT_EQ(v.verdict, v.test.p_value < 0.05);
  }
}

TEST(Scan, EqualResultsNeverExternalize) {
  std::vector<CellSample> cells;
  for (std::size_t cap : {16u, 64u, 256u}) {
    cells.push_back(cell(ArtifactKind::none, cap, std::vector<double>(30, 3.0)));
    cells.push_back(cell(ArtifactKind::landmarks, cap, std::vector<double>(30, 3.0)));
  }
  const auto s = externalization_scan(cells);
  EXPECT_EQ(s.true_verdicts(), 0u);
  for (const auto& t : s.matrix) EXPECT_EQ(t.p_value, 0.5);
}

TEST(Scan, MissingNoPathIsAnError) {
  std::vector<CellSample> cells{cell(ArtifactKind::none, 16, {1, 2}), cell(ArtifactKind::optimal_path, 64, {1, 2})};
  EXPECT_THROW(externalization_scan(cells), config_error);
}

TEST(Scan, MonotoneInEvidence) {
  RngStream rng(9, "scan");
  for (int k = 0; k < 50; ++k) {
    auto cells = synthetic_cells(rng, rng.uniform(-100.0, 300.0));
    const auto before = externalization_scan(cells);
    for (auto& c : cells)
      if (c.artifact != ArtifactKind::none)
        for (auto& v : c.values) v += 25.0;
    const auto after = externalization_scan(cells);
    ASSERT_EQ(before.verdicts.size(), after.verdicts.size());
    for (std::size_t i = 0; i < before.verdicts.size(); ++i)
      if (before.verdicts[i].verdict) EXPECT_TRUE(after.verdicts[i].verdict);
  }
}

TEST(Scan, OrderIndependent) {
  RngStream rng(10, "scan");
  auto cells = synthetic_cells(rng, 50.0);
  const auto base = externalization_scan(cells);
  for (int k = 0; k < 20; ++k) {
    std::shuffle(cells.begin(), cells.end(), rng);
    const auto s = externalization_scan(cells);
    ASSERT_EQ(s.matrix.size(), base.matrix.size());
    for (std::size_t i = 0; i < s.matrix.size(); ++i) {
      EXPECT_EQ(s.matrix[i].capacity, base.matrix[i].capacity);
      EXPECT_EQ(s.matrix[i].nopath_capacity, base.matrix[i].nopath_capacity);
      EXPECT_EQ(s.matrix[i].p_value, base.matrix[i].p_value);
    }
  }
}

// ---------------------------------------------------------------------------
// Trials

TEST(Trial, RouteFollowerScoresClosedForm) {
  for (std::uint64_t n : {19u, 20u, 1000u, 12345u}) {
    GridWorld env(GridSpec{}, ArtifactParams{});
    RouteFollower agent;
    RngStream rng(0, "actions");
    TrialRecord rec;
    run_loop(env, agent, 24, n, rng, rec);
    EXPECT_EQ(rec.total_reward(), static_cast<double>(n / 20)) << n;
    EXPECT_EQ(rec.episodes, n / 20);
    EXPECT_EQ(rec.length, n);
  }
}

TEST(Trial, RandomAgentRewardEqualsEpisodes) {
  TrialConfig c;
  c.epsilon = 1.0;
  c.crop_side = 4;
  c.trial_length = 20000;
  c.grid.start = Cell{5, 5};
  c.grid.goal = Cell{6, 6};
  const auto r = run_trial(c);
  EXPECT_GE(r.total_reward(), 0.0);
  EXPECT_EQ(r.total_reward(), static_cast<double>(r.episodes));
  EXPECT_GT(r.episodes, 0u);
}

TEST(Trial, SameConfigIsBitIdentical) {
  for (auto kind : {ArtifactKind::none, ArtifactKind::optimal_path, ArtifactKind::dynamic_path}) {
    TrialConfig c;
    c.artifacts.kind = kind;
    c.crop_side = 16;
    c.alpha = 1.0 / 16;
    c.trial_length = 5000;
    c.seed = 42;
    EXPECT_EQ(run_trial(c), run_trial(c)) << to_string(kind);
  }
  TrialConfig d;
  d.agent = AgentKind::dqn;
  d.trial_length = 800;
  d.learn_start = 100;
  d.alpha = 1.0 / 256;
  EXPECT_EQ(run_trial(d), run_trial(d));
}

TEST(Trial, DifferentSeedsDiffer) {
  TrialConfig c;
  c.crop_side = 8;
  c.alpha = 1.0 / 16;
  c.trial_length = 20000;
  c.seed = 1;
  const auto a = run_trial(c);
  c.seed = 2;
  const auto b = run_trial(c);
  EXPECT_NE(a.reward_steps, b.reward_steps);
}

TEST(Trial, CachedViewsMatchFreshRendering) {
  // Reference loop: render, transduce and learn at every step without any caching.
  for (auto kind : {ArtifactKind::none, ArtifactKind::optimal_path}) {
    TrialConfig c;
    c.artifacts.kind = kind;
    c.crop_side = 8;
    c.alpha = 1.0 / 16;
    c.trial_length = 30000;
    c.seed = 3;
    const auto fast = run_trial(c);

    TrialRecord slow;
    GridWorld env(c.grid, c.artifacts, c.seed);
    RngStream action_rng(c.seed, "actions");
    RngStream init_rng(c.seed, "init");
    LinearQ q(64, c.alpha, c.gamma, c.epsilon);
    q.randomize(0.0, c.linear_init_scale, init_rng);
    for (std::uint64_t n = 1; n <= c.trial_length; ++n) {
      const auto o = transduce(env.render(env.position()), 8);
      const Action a = q.act(o.flat, action_rng);
      const auto r = env.step(a);
      const auto o2 = transduce(env.render(r.reached), 8);
      q.update(TransitionRef{o.flat, static_cast<int>(a), r.reward, o2.flat, r.done});
      if (r.reward > 0) slow.reward_steps.push_back(n);
    }
    EXPECT_EQ(fast.reward_steps, slow.reward_steps) << to_string(kind);
  }
}

TEST(Trial, DivergenceStopsTheTrial) {
  TrialConfig c;
  c.crop_side = 24;
  c.alpha = 1e200;
  c.linear_init_scale = 1e200;
  c.trial_length = 10000;
  const auto r = run_trial(c);
  EXPECT_TRUE(r.diverged);
  EXPECT_EQ(r.length, r.diverged_at);
  EXPECT_LT(r.length, c.trial_length);
}

TEST(Trial, InvalidCropRejected) {
  TrialConfig c;
  c.crop_side = 5;
  EXPECT_THROW(run_trial(c), config_error);
}

TEST(Parallel, ResultsIndependentOfWorkerCount) {
  std::vector<TrialConfig> configs;
  for (std::uint64_t s = 0; s < 6; ++s) {
    TrialConfig c;
    c.crop_side = 8;
    c.alpha = 1.0 / 16;
    c.trial_length = 4000;
    c.seed = s;
    configs.push_back(c);
  }
  const auto one = run_trials(configs, 1);
  const auto four = run_trials(configs, 4);
  EXPECT_EQ(one, four);
  for (std::size_t i = 0; i < configs.size(); ++i) EXPECT_EQ(one[i], run_trial(configs[i]));
}

TEST(Parallel, FirstErrorPropagates) {
  EXPECT_THROW(parallel_map<int>(
                   50,
                   [](std::size_t i) {
                     if (i == 17) throw config_error("boom");
                     return static_cast<int>(i);
                   },
                   3),
               config_error);
  const auto v = parallel_map<int>(10, [](std::size_t i) { return static_cast<int>(i * i); }, 3);
  for (std::size_t i = 0; i < v.size(); ++i) EXPECT_EQ(v[i], static_cast<int>(i * i));
}
