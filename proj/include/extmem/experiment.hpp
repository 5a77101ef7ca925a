#pragma once

// Manifest-driven sweeps: run every (artifact, capacity) cell through two-stage
// selection, store records, and analyze them into CSV tables.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <ostream>
#include <set>
#include <string>
#include <tuple>
#include <vector>

#include "extmem/errors.hpp"
#include "extmem/harness.hpp"
#include "extmem/manifest.hpp"
#include "extmem/records.hpp"
#include "extmem/stats.hpp"
#include "extmem/textio.hpp"

namespace extmem {

struct SweepOptions {
  bool smoke = false;
  unsigned workers = worker_count();
  std::filesystem::path out_dir;  // empty: keep records in memory only
  std::ostream* progress = nullptr;
};

/// Runs the manifest's sweep and returns every record, selection stage first.
inline std::vector<StoredRecord> run_sweep(const RunManifest& m, const SweepOptions& opt = {}) {
  const TrialConfig base = base_trial_config(m);
  const std::string mh = manifest_hash(m);
  const std::string eh = environment_hash(m);
  if (!opt.out_dir.empty()) std::filesystem::create_directories(opt.out_dir);

  std::vector<StoredRecord> all;
  for (const auto kind : m.kinds) {
    for (const auto& label : m.capacities) {
      TrialConfig cell = with_capacity(base, label);
      cell.artifacts.kind = kind;
      cell.trial_length = opt.smoke ? m.smoke_length : m.trial_length;
      std::string stage = "selection";
      auto evaluate = [&](const std::vector<std::pair<double, std::uint64_t>>& jobs) {
        std::vector<TrialConfig> configs;
        for (const auto& [alpha, index] : jobs) {
          TrialConfig c = cell;
          c.alpha = alpha;
          c.seed = trial_seed(m.seed, index);
          configs.push_back(c);
        }
        const auto records = run_trials(configs, opt.workers);
        std::vector<double> totals;
        for (std::size_t i = 0; i < records.size(); ++i) {
          StoredRecord s{RecordMeta{mh, eh, stage, jobs[i].second}, records[i]};
          if (!opt.out_dir.empty()) save_record(opt.out_dir / record_filename(s.record, s.meta), s.record, s.meta);
          totals.push_back(records[i].total_reward());
          all.push_back(std::move(s));
        }
        stage = "evaluation";
        return totals;
      };
      const auto sel = two_stage_select(m.step_sizes, m.selection_seeds, m.evaluation_seeds, evaluate);
      if (opt.progress) {
        const auto ev = summarize(sel.evaluation);
        *opt.progress << to_string(m.agent) << ' ' << to_string(kind) << " C=" << cell.capacity()
                      << " best alpha=" << sel.best_alpha << " mean total reward=" << ev.mean << " (se "
                      << ev.std_error() << ")" << std::endl;
      }
    }
  }
  return all;
}

inline std::vector<StoredRecord> load_records(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw config_error("results directory '" + dir.string() + "' does not exist");
  std::vector<std::filesystem::path> files;
  for (const auto& e : std::filesystem::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".rec") files.push_back(e.path());
  if (files.empty()) throw config_error("no trial records (*.rec) in '" + dir.string() + "'");
  std::sort(files.begin(), files.end());
  std::vector<StoredRecord> out;
  for (const auto& f : files) out.push_back(load_record(f));
  return out;
}

// ---------------------------------------------------------------------------
// Analysis

struct CellAnalysis {
  AgentKind agent = AgentKind::linear;
  ArtifactKind artifact = ArtifactKind::none;
  std::string label;
  std::size_t capacity = 0;
  std::vector<double> alphas;
  std::vector<double> selection_means;
  double best_alpha = 0.0;
  std::vector<double> evaluation;  // totals, ordered by seed index
  std::vector<std::pair<std::uint64_t, double>> curve;  // mean average reward over evaluation seeds
  std::size_t diverged = 0;
};

struct Analysis {
  std::string manifest_hashes;
  std::string environment_hash;
  std::vector<CellAnalysis> cells;
  std::map<AgentKind, ScanResult> scans;

  const CellAnalysis* find(AgentKind agent, ArtifactKind artifact, std::size_t capacity) const {
    for (const auto& c : cells)
      if (c.agent == agent && c.artifact == artifact && c.capacity == capacity) return &c;
    return nullptr;
  }
};

/// Recomputes selection, evaluation samples and the scan from records alone. The
/// result does not depend on the order of `records`.
inline Analysis analyze_records(std::vector<StoredRecord> records, std::uint64_t curve_stride = 1000) {
  if (records.empty()) throw config_error("no records to analyze");
  std::set<std::string> env_hashes;
  std::set<std::string> manifest_hashes;
  for (const auto& r : records) {
    env_hashes.insert(r.meta.environment_hash);
    manifest_hashes.insert(r.meta.manifest_hash);
  }
  if (env_hashes.size() != 1) throw config_error("records come from different environment configurations");

  std::sort(records.begin(), records.end(), [](const StoredRecord& a, const StoredRecord& b) {
    const auto ka = std::make_tuple(a.record.config.agent, a.record.config.artifacts.kind, a.record.config.capacity(),
                                    a.record.config.capacity_label(), a.record.config.alpha, a.meta.stage,
                                    a.meta.seed_index);
    const auto kb = std::make_tuple(b.record.config.agent, b.record.config.artifacts.kind, b.record.config.capacity(),
                                    b.record.config.capacity_label(), b.record.config.alpha, b.meta.stage,
                                    b.meta.seed_index);
    return ka < kb;
  });

  Analysis out;
  out.environment_hash = *env_hashes.begin();
  for (const auto& h : manifest_hashes) out.manifest_hashes += (out.manifest_hashes.empty() ? "" : " ") + h;

  using Key = std::tuple<AgentKind, ArtifactKind, std::size_t, std::string>;
  std::map<Key, std::vector<const StoredRecord*>> groups;
  for (const auto& r : records)
    groups[{r.record.config.agent, r.record.config.artifacts.kind, r.record.config.capacity(),
            r.record.config.capacity_label()}]
        .push_back(&r);

  for (const auto& [key, rs] : groups) {
    CellAnalysis cell;
    std::tie(cell.agent, cell.artifact, cell.capacity, cell.label) = key;
    std::map<double, std::vector<double>> by_alpha;
    for (const auto* r : rs)
      if (r->meta.stage == "selection") by_alpha[r->record.config.alpha].push_back(r->record.total_reward());
    std::size_t best = 0;
    for (const auto& [alpha, totals] : by_alpha) {
      cell.alphas.push_back(alpha);
      cell.selection_means.push_back(summarize(totals).mean);
      if (cell.selection_means.back() > cell.selection_means[best]) best = cell.selection_means.size() - 1;
    }
    std::vector<const StoredRecord*> eval;
    for (const auto* r : rs)
      if (r->meta.stage != "selection") eval.push_back(r);
    // Evaluation records name the selected step size; selection means decide only
    // when evaluation ran at several.
    std::set<double> eval_alphas;
    for (const auto* r : eval) eval_alphas.insert(r->record.config.alpha);
    if (eval_alphas.size() == 1) {
      cell.best_alpha = *eval_alphas.begin();
    } else if (!cell.alphas.empty()) {
      cell.best_alpha = cell.alphas[best];
      std::erase_if(eval, [&](const StoredRecord* r) { return r->record.config.alpha != cell.best_alpha; });
    }
    std::map<std::uint64_t, double> curve_sum;
    for (const auto* r : eval) {
      cell.evaluation.push_back(r->record.total_reward());
      if (r->record.diverged) ++cell.diverged;
      if (r->record.length > 0)
        for (const auto& [t, v] : average_reward_curve(r->record, curve_stride)) curve_sum[t] += v;
    }
    for (const auto& [t, v] : curve_sum) cell.curve.emplace_back(t, v / static_cast<double>(eval.size()));
    out.cells.push_back(std::move(cell));
  }

  std::map<AgentKind, std::vector<CellSample>> samples;
  for (const auto& c : out.cells)
    if (c.evaluation.size() >= 2) samples[c.agent].push_back({c.artifact, c.capacity, c.label, c.evaluation});
  for (const auto& [agent, cs] : samples) {
    const bool has_nopath = std::any_of(cs.begin(), cs.end(), [](const auto& c) { return c.artifact == ArtifactKind::none; });
    if (has_nopath) out.scans[agent] = externalization_scan(cs);
  }
  return out;
}

// ---------------------------------------------------------------------------
// CSV output. Each file opens with a '#' line naming the manifest and environment
// hashes, followed by the header row.

namespace detail {

inline std::ofstream open_csv(const std::filesystem::path& path, const Analysis& a, const std::string& header) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw config_error("cannot write '" + path.string() + "'");
  out << "# manifest " << a.manifest_hashes << " environment " << a.environment_hash << "\n" << header << "\n";
  return out;
}

}  // namespace detail

inline void write_summary_csv(const std::filesystem::path& path, const std::vector<StoredRecord>& records,
                              const Analysis& a) {
  auto out = detail::open_csv(path, a, "artifact,agent,capacity,alpha,seed,total_reward,stage,diverged");
  std::vector<const StoredRecord*> sorted;
  for (const auto& r : records) sorted.push_back(&r);
  std::sort(sorted.begin(), sorted.end(), [](const StoredRecord* x, const StoredRecord* y) {
    return std::make_tuple(x->record.config.agent, x->record.config.artifacts.kind, x->record.config.capacity(),
                           x->record.config.alpha, x->meta.seed_index) <
           std::make_tuple(y->record.config.agent, y->record.config.artifacts.kind, y->record.config.capacity(),
                           y->record.config.alpha, y->meta.seed_index);
  });
  for (const auto* r : sorted) {
    const auto& c = r->record.config;
    out << to_string(c.artifacts.kind) << ',' << to_string(c.agent) << ',' << c.capacity_label() << ','
        << text::format_double(c.alpha) << ',' << r->meta.seed_index << ',' << r->record.reward_steps.size() << ','
        << r->meta.stage << ',' << (r->record.diverged ? 1 : 0) << '\n';
  }
}

inline void write_selection_csv(const std::filesystem::path& path, const Analysis& a) {
  auto out = detail::open_csv(path, a, "artifact,agent,capacity,alpha,selection_mean,selected");
  for (const auto& c : a.cells)
    for (std::size_t i = 0; i < c.alphas.size(); ++i)
      out << to_string(c.artifact) << ',' << to_string(c.agent) << ',' << c.label << ','
          << text::format_double(c.alphas[i]) << ',' << text::format_double(c.selection_means[i]) << ','
          << (c.alphas[i] == c.best_alpha ? 1 : 0) << '\n';
}

inline void write_evaluation_csv(const std::filesystem::path& path, const Analysis& a) {
  auto out = detail::open_csv(path, a, "artifact,agent,capacity,alpha,n,mean,std_error,diverged");
  for (const auto& c : a.cells) {
    const auto s = summarize(c.evaluation);
    out << to_string(c.artifact) << ',' << to_string(c.agent) << ',' << c.label << ','
        << text::format_double(c.best_alpha) << ',' << s.n << ',' << text::format_double(s.mean) << ','
        << text::format_double(s.std_error()) << ',' << c.diverged << '\n';
  }
}

inline void write_pvalues_csv(const std::filesystem::path& path, const Analysis& a) {
  auto out = detail::open_csv(path, a, "agent,artifact,capacity,nopath_capacity,mean,nopath_mean,p_value");
  for (const auto& [agent, scan] : a.scans)
    for (const auto& t : scan.matrix)
      out << to_string(agent) << ',' << to_string(t.artifact) << ',' << t.label << ',' << t.nopath_label << ','
          << text::format_double(t.mean) << ',' << text::format_double(t.nopath_mean) << ','
          << text::format_double(t.p_value) << '\n';
}

inline void write_verdicts_csv(const std::filesystem::path& path, const Analysis& a) {
  auto out = detail::open_csv(path, a, "agent,artifact,capacity,nopath_capacity,mean,nopath_mean,p_value,verdict");
  for (const auto& [agent, scan] : a.scans)
    for (const auto& v : scan.verdicts)
      out << to_string(agent) << ',' << to_string(v.test.artifact) << ',' << v.test.label << ','
          << v.test.nopath_label << ',' << text::format_double(v.test.mean) << ','
          << text::format_double(v.test.nopath_mean) << ',' << text::format_double(v.test.p_value) << ','
          << (v.verdict ? 1 : 0) << '\n';
}

inline void write_curves_csv(const std::filesystem::path& path, const Analysis& a) {
  auto out = detail::open_csv(path, a, "artifact,agent,capacity,t,average_reward");
  for (const auto& c : a.cells)
    for (const auto& [t, v] : c.curve)
      out << to_string(c.artifact) << ',' << to_string(c.agent) << ',' << c.label << ',' << t << ','
          << text::format_double(v) << '\n';
}

inline void write_analysis(const std::filesystem::path& dir, const std::vector<StoredRecord>& records,
                           const Analysis& a) {
  std::filesystem::create_directories(dir);
  write_summary_csv(dir / "summary.csv", records, a);
  write_selection_csv(dir / "selection.csv", a);
  write_evaluation_csv(dir / "evaluation.csv", a);
  write_pvalues_csv(dir / "pvalues.csv", a);
  write_verdicts_csv(dir / "verdicts.csv", a);
  write_curves_csv(dir / "curves.csv", a);
}

}  // namespace extmem
