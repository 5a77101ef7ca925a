// Acceptance run: one PASS/FAIL line per criterion. Exit status 1 if any fails.
//
// EXTMEM_ACCEPTANCE_OUT names the directory for sweep records and CSV tables
// (default: ./acceptance_results). EXTMEM_WORKERS caps the worker threads.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "extmem/experiment.hpp"
#include "extmem/manifest.hpp"
#include "extmem/records.hpp"
#include "extmem/stats.hpp"
#include "extmem/theory.hpp"
#include "oracles.hpp"

using namespace extmem;
namespace fs = std::filesystem;

namespace {

int failures = 0;

void report(int id, bool pass, const std::string& what, const std::string& detail) {
  std::cout << (pass ? "PASS" : "FAIL") << "  [" << std::setw(2) << id << "] " << what << ": " << detail << std::endl;
  if (!pass) ++failures;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(double v, int digits = 4) {
  std::ostringstream out;
  out << std::setprecision(digits) << v;
  return out.str();
}

int symbol_index(const TabularEnv& env, const std::string& s) {
  const auto it = std::find(env.symbols.begin(), env.symbols.end(), s);
  if (it == env.symbols.end()) throw config_error("symbol " + s + " missing");
  return static_cast<int>(it - env.symbols.begin());
}

void page_keeping_exactness() {
  const auto t0 = std::chrono::steady_clock::now();
  const TabularEnv env = load_tabular_env(std::string(EXTMEM_DATA_DIR) + "/page_keeping.tenv");
  const int a = symbol_index(env, "A");
  const int b = symbol_index(env, "B");
  bool found = false;
  double certainty = 0.0;
  double worst = 0.0;
  bool all_equal = true;
  for (int h = 2; h <= 6; ++h) {
    for (const auto& r : detect_artifacts(env, h))
      if (r.artifact == a && r.referent == b) {
        found = true;
        certainty = r.certainty;
      }
    for (const auto& c : verify_artifact_reduction(env, h).checks) {
      worst = std::max(worst, std::abs(c.i_full - c.i_reduced));
      all_equal = all_equal && c.equal;
    }
  }
  const double secs = seconds_since(t0);
  const bool pass = found && certainty == 1.0 && all_equal && worst <= 1e-9 && secs < 60.0;
  report(1, pass, "Page Keeping artifact (A,B) and MI preservation, horizons <= 6",
         std::string(found ? "found" : "missing") + " with certainty " + fmt(certainty, 17) + ", max |dI| " +
             fmt(worst, 3) + ", " + fmt(secs, 3) + " s");
}

void two_artifact_chain() {
  const TabularEnv env = load_tabular_env(std::string(EXTMEM_DATA_DIR) + "/two_artifacts.tenv");
  const int m = 6;
  const auto reduction = verify_artifact_reduction(env, m);
  const auto multi = independent_relations(reduction.relations);
  const ReductionCheck* both = nullptr;
  for (const auto& c : reduction.checks)
    if (c.deleted.size() == 2) both = &c;
  bool shrinks = false;
  bool shrink_ok = true;
  for (const auto& [seq, p] : enumerate_histories(env, m).support) {
    History h;
    for (int t = 1; t < m; ++t) h.emplace_back(t, seq[static_cast<std::size_t>(t - 1)]);
    History r = h;
    for (const auto& rel : multi) r = reduce_history(std::move(r), rel);
    const bool carries_both = std::all_of(multi.begin(), multi.end(), [&](const ArtifactRelation& rel) {
      return seq[static_cast<std::size_t>(rel.time - 1)] == rel.artifact;
    });
    if (carries_both) {
      shrinks = true;
      shrink_ok = shrink_ok && r.size() == h.size() - 2;
    }
  }
  const double diff = both ? std::abs(both->i_full - both->i_reduced) : INFINITY;
  const bool pass = env.num_states() == 5 && multi.size() == 2 && both && diff <= 1e-9 && shrinks && shrink_ok;
  report(2, pass, "two-artifact chain, iterated reduction to m-2 observations",
         std::to_string(env.num_states()) + " states, " + std::to_string(multi.size()) +
             " independent relations, I(O;H) = " + (both ? fmt(both->i_full, 12) : "n/a") + ", |dI| " +
             fmt(diff, 3));
}

void artifactless_copy() {
  const TabularEnv env = load_tabular_env(std::string(EXTMEM_DATA_DIR) + "/page_keeping.tenv");
  const double eps = 0.25;
  const TabularEnv copy = make_artifactless_copy(env, eps);
  double worst = 0.0;
  std::size_t relations = 0;
  for (int h = 2; h <= 6; ++h) {
    const auto dist = enumerate_histories(copy, h);
    worst = std::max(worst, max_conditional_certainty(dist, copy.num_symbols()));
    relations += detect_artifacts(dist, copy.num_symbols()).size();
  }
  report(3, worst <= 1.0 - eps + kCertaintySlack && relations == 0, "artifactless copy at noise 0.25, horizons <= 6",
         "max certainty " + fmt(worst, 12) + ", " + std::to_string(relations) + " artifact relations");
}

void gradient_check() {
  RngStream rng(2024, "acceptance_gradcheck");
  double worst = 0.0;
  for (int k = 0; k < 100; ++k) worst = std::max(worst, oracle::gradient_check_draw(rng));
  report(4, worst < 1e-4, "DQN loss gradient vs central differences, 100 draws",
         "max relative error " + fmt(worst, 3));
}

void determinism(const std::vector<StoredRecord>& sweep) {
  std::vector<TrialConfig> configs;
  TrialConfig base;
  base.trial_length = 20000;
  base.seed = 99;
  for (auto kind : {ArtifactKind::none, ArtifactKind::optimal_path, ArtifactKind::random_path,
                    ArtifactKind::dynamic_path}) {
    TrialConfig c = base;
    c.artifacts.kind = kind;
    c.crop_side = 8;
    c.alpha = 0.0625;
    configs.push_back(c);
  }
  TrialConfig flip = base;
  flip.grid.flip_probability = 0.01;
  configs.push_back(flip);
  TrialConfig dqn = base;
  dqn.agent = AgentKind::dqn;
  dqn.alpha = 0.001;
  dqn.trial_length = 3000;
  dqn.artifacts.kind = ArtifactKind::optimal_path;
  configs.push_back(dqn);
  // A few cells of the sweep itself, re-run from their stored configurations.
  for (std::size_t i = 0; i < sweep.size(); i += std::max<std::size_t>(1, sweep.size() / 4))
    configs.push_back(sweep[i].record.config);

  std::size_t identical = 0;
  for (const auto& c : configs) {
    const TrialRecord a = run_trial(c);
    const TrialRecord b = run_trial(c);
    std::ostringstream sa;
    std::ostringstream sb;
    write_record(sa, a, {});
    write_record(sb, b, {});
    bool same = a == b && sa.str() == sb.str();
    for (const auto& s : sweep)
      if (s.record.config == c) same = same && s.record == a;
    identical += same;
  }
  report(5, identical == configs.size(), "repeated trials are bit-identical",
         std::to_string(identical) + " of " + std::to_string(configs.size()) + " configurations");
}

const CellAnalysis* cell_of(const Analysis& a, ArtifactKind kind, std::size_t capacity) {
  const auto* c = a.find(AgentKind::linear, kind, capacity);
  if (!c) throw config_error("missing cell " + std::string(to_string(kind)) + " C=" + std::to_string(capacity));
  return c;
}

std::vector<StoredRecord> sweep(const RunManifest& m, const fs::path& out) {
  const auto t0 = std::chrono::steady_clock::now();
  SweepOptions opt;
  opt.out_dir = out;
  opt.progress = &std::cout;
  auto records = run_sweep(m, opt);
  const auto analysis = analyze_records(records, m.curve_stride);
  write_analysis(out, records, analysis);
  std::cout << "  " << records.size() << " trials in " << fmt(seconds_since(t0) / 60.0, 3) << " min, tables in "
            << out.string() << std::endl;
  return records;
}

void experiment1(const Analysis& a) {
  std::string detail;
  bool beats = true;
  bool collapse = true;
  std::string collapse_detail;
  for (std::size_t cap : {16u, 64u}) {
    const auto* opt = cell_of(a, ArtifactKind::optimal_path, cap);
    const auto* none = cell_of(a, ArtifactKind::none, cap);
    const double p = one_sided_test(opt->evaluation, none->evaluation);
    const double mo = summarize(opt->evaluation).mean;
    const double mn = summarize(none->evaluation).mean;
    beats = beats && opt->evaluation.size() == 30 && none->evaluation.size() == 30 && p < kSignificance;
    detail += "C=" + std::to_string(cap) + " optimal " + fmt(mo) + " vs none " + fmt(mn) + " p=" + fmt(p, 3) + "; ";
    collapse = collapse && mn < 0.1 * mo;
    collapse_detail += "C=" + std::to_string(cap) + " none/optimal = " + fmt(mo > 0 ? mn / mo : INFINITY, 3) + "; ";
  }
  const auto& scan = a.scans.at(AgentKind::linear);
  std::string verdicts;
  for (const auto& v : scan.verdicts)
    if (v.verdict)
      verdicts += " [" + std::string(to_string(v.test.artifact)) + " C=" + std::to_string(v.test.capacity) +
                  " > none C'=" + std::to_string(v.test.nopath_capacity) + " p=" + fmt(v.test.p_value, 3) + "]";
  const bool any_verdict = scan.true_verdicts() > 0;
  report(6, beats && any_verdict, "optimal path beats no path at C=16 and C=64, with an externalization verdict",
         detail + std::to_string(scan.true_verdicts()) + " of " + std::to_string(scan.verdicts.size()) +
             " verdicts hold" + verdicts);
  report(7, collapse, "no-path mean below 10% of optimal-path mean at C=16 and C=64", collapse_detail);
}

void experiment3(const Analysis& a, const RunManifest& m) {
  const auto* dyn = cell_of(a, ArtifactKind::dynamic_path, 256);
  const auto* none = cell_of(a, ArtifactKind::none, 256);
  const double p = one_sided_test(dyn->evaluation, none->evaluation);
  const auto& d = m.artifacts.dynamic;
  report(8, dyn->evaluation.size() == 30 && none->evaluation.size() == 30 && p < kSignificance,
         "dynamic path beats no path at C=256",
         "dynamic " + fmt(summarize(dyn->evaluation).mean) + " vs none " + fmt(summarize(none->evaluation).mean) +
             " p=" + fmt(p, 3) + " at new_pixels_per_step=" + std::to_string(d.new_pixels_per_step) +
             " vanishing_pixels_per_step=" + std::to_string(d.vanishing_pixels_per_step) +
             " vanishing_rate=" + fmt(d.vanishing_rate) + " dynamic_thickness=" + std::to_string(d.path_thickness));
}

void calibration() {
  std::mt19937_64 rng(7);
  std::normal_distribution<double> normal;
  const int resamples = 10000;
  int rejections = 0;
  std::vector<double> p(30);
  std::vector<double> q(30);
  for (int k = 0; k < resamples; ++k) {
    for (auto& v : p) v = normal(rng);
    for (auto& v : q) v = normal(rng);
    rejections += one_sided_test(p, q) < kSignificance;
  }
  const double rate = rejections / static_cast<double>(resamples);
  report(9, std::abs(rate - 0.05) <= 0.01, "one-sided test size under H0, n=30, 1e4 resamples",
         "rejection rate " + fmt(rate));
}

void capacities() {
  std::vector<std::size_t> linear;
  const auto m = parse_manifest("[experiment]\nid = exp1\n");
  const TrialConfig base = base_trial_config(m);
  for (const auto& label : m.capacities) {
    const TrialConfig c = with_capacity(base, label);
    linear.push_back(LinearQ(c.crop_side * c.crop_side, 0.1, 0.9, 0.1).capacity());
  }
  bool ok = linear == std::vector<std::size_t>{16, 64, 256, 400, 576};
  std::string dqn;
  const auto d = parse_manifest("[experiment]\nid = exp1\n[agent]\nkind = dqn\n");
  for (const auto& label : d.capacities) {
    const TrialConfig c = with_capacity(base_trial_config(d), label);
    const std::size_t l = static_cast<std::size_t>(c.net.hidden_layers);
    const std::size_t h = static_cast<std::size_t>(c.net.hidden_units);
    const std::size_t closed = 576 * h + h + (l - 1) * (h * h + h) + 4 * h + 4;
    const DqnAgent agent(c.dqn_config(), RngStream(0, "i"), RngStream(0, "r"));
    ok = ok && agent.capacity() == closed && c.capacity() == closed;
    dqn += " " + label + "=" + std::to_string(agent.capacity());
  }
  std::string lin;
  for (auto v : linear) lin += " " + std::to_string(v);
  report(10, ok && d.capacities.size() == 8, "capacity accounting", "linear" + lin + "; dqn" + dqn);
}

template <class F>
void guarded(std::initializer_list<int> ids, const char* what, F&& f) {
  try {
    f();
  } catch (const std::exception& e) {
    for (int id : ids) report(id, false, what, std::string("error: ") + e.what());
  }
}

}  // namespace

int main() {
  const char* out_env = std::getenv("EXTMEM_ACCEPTANCE_OUT");
  const fs::path out = out_env ? fs::path(out_env) : fs::path("acceptance_results");
  std::cout << "workers: " << worker_count() << std::endl;

  guarded({1}, "Page Keeping", page_keeping_exactness);
  guarded({2}, "two-artifact chain", two_artifact_chain);
  guarded({3}, "artifactless copy", artifactless_copy);
  guarded({4}, "gradient check", gradient_check);
  guarded({9}, "calibration", calibration);
  guarded({10}, "capacity accounting", capacities);

  std::vector<StoredRecord> exp1_records;
  guarded({6, 7}, "experiment 1", [&] {
    const RunManifest m = load_manifest(fs::path(EXTMEM_MANIFEST_DIR) / "exp1.ini");
    std::cout << "experiment 1 sweep (linear, " << m.capacities.size() << " capacities)" << std::endl;
    exp1_records = sweep(m, out / "exp1");
    experiment1(analyze_records(exp1_records, m.curve_stride));
  });
  guarded({8}, "experiment 3", [&] {
    RunManifest m = load_manifest(fs::path(EXTMEM_MANIFEST_DIR) / "exp3.ini");
    m.capacities = {"256"};
    std::cout << "experiment 3 sweep (linear, C=256)" << std::endl;
    const auto records = sweep(m, out / "exp3");
    experiment3(analyze_records(records, m.curve_stride), m);
  });
  guarded({5}, "determinism", [&] { determinism(exp1_records); });

  std::cout << (failures == 0 ? "all criteria passed" : std::to_string(failures) + " criterion line(s) failed")
            << std::endl;
  return failures == 0 ? 0 : 1;
}
