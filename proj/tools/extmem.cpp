// extmem: theory reports, single trials, sweeps, analysis and image dumps.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <string>

#include "extmem/experiment.hpp"
#include "extmem/gridworld.hpp"
#include "extmem/manifest.hpp"
#include "extmem/pgm.hpp"
#include "extmem/records.hpp"
#include "extmem/theory.hpp"

#ifndef EXTMEM_DATA_DIR
#define EXTMEM_DATA_DIR "data"
#endif

namespace fs = std::filesystem;
using namespace extmem;

namespace {

std::string relation_text(const TabularEnv& env, const ArtifactRelation& r) {
  return env.symbols[static_cast<std::size_t>(r.artifact)] + "@" + std::to_string(r.time) + " => " +
         env.symbols[static_cast<std::size_t>(r.referent)] + "@" + std::to_string(r.referent_time);
}

int cmd_theory(const std::string& env_path, int horizon, double epsilon) {
  const TabularEnv env = load_tabular_env(env_path);
  std::cout << "environment " << env_path << ": " << env.num_states() << " states, symbols";
  for (const auto& s : env.symbols) std::cout << ' ' << s;
  std::cout << "\n";
  bool ok = true;
  std::cout << std::setprecision(12);
  for (int h = 2; h <= horizon; ++h) {
    const auto report = verify_artifact_reduction(env, h);
    std::cout << "\nhorizon " << h << ": history O_1..O_" << h - 1 << ", target O_" << h << ", "
              << report.relations.size() << " artifact relation(s)\n";
    for (const auto& c : report.checks) {
      std::cout << "  delete";
      for (const auto& r : c.deleted) std::cout << " [" << relation_text(env, r) << "]";
      std::cout << "\n    I(O;H) = " << c.i_full << "  I(O;H') = " << c.i_reduced
                << "  whole-coordinate deletion = " << c.i_coordinate << "  " << (c.equal ? "PASS" : "FAIL")
                << "\n";
      ok = ok && c.equal;
    }
  }
  const TabularEnv copy = make_artifactless_copy(env, epsilon);
  std::cout << "\nartifactless copy, noise " << epsilon << ":\n";
  for (int h = 2; h <= horizon; ++h) {
    const auto dist = enumerate_histories(copy, h);
    const double cert = max_conditional_certainty(dist, copy.num_symbols());
    const auto rels = detect_artifacts(dist, copy.num_symbols());
    const bool pass = rels.empty() && cert <= 1.0 - epsilon + kCertaintySlack;
    std::cout << "  horizon " << h << ": max certainty " << cert << ", artifacts " << rels.size() << "  "
              << (pass ? "PASS" : "FAIL") << "\n";
    ok = ok && pass;
  }
  std::cout << "\n" << (ok ? "all checks passed" : "some checks FAILED") << "\n";
  return ok ? 0 : 1;
}

void print_record(const TrialRecord& r) {
  const auto& c = r.config;
  std::cout << to_string(c.agent) << ' ' << to_string(c.artifacts.kind) << " C=" << c.capacity()
            << " alpha=" << c.alpha << " seed=" << c.seed << ": total reward " << r.total_reward() << " over "
            << r.length << " steps, " << r.truncated_episodes << " truncated episode(s)"
            << (r.diverged ? ", DIVERGED at step " + std::to_string(r.diverged_at) : std::string()) << "\n";
}

int cmd_run(const std::string& manifest_path, std::uint64_t seed_index, const std::string& out) {
  const RunManifest m = load_manifest(manifest_path);
  TrialConfig c = base_trial_config(m);
  c.artifacts.kind = m.kinds.front();
  c.seed = trial_seed(m.seed, seed_index);
  const TrialRecord r = run_trial(c);
  print_record(r);
  const fs::path dir = out.empty() ? fs::path(m.output) : fs::path(out);
  fs::create_directories(dir);
  const RecordMeta meta{manifest_hash(m), environment_hash(m), "single", seed_index};
  const fs::path file = dir / record_filename(r, meta);
  save_record(file, r, meta);
  std::cout << "record written to " << file.string() << "\n";
  return 0;
}

void print_analysis(const Analysis& a) {
  for (const auto& c : a.cells) {
    const auto s = summarize(c.evaluation);
    std::cout << std::setw(7) << to_string(c.agent) << ' ' << std::setw(16) << to_string(c.artifact) << " C="
              << std::setw(5) << c.capacity << " alpha=" << std::setw(12) << c.best_alpha << " mean=" << std::setw(10)
              << s.mean << " se=" << s.std_error() << (c.diverged ? " diverged=" + std::to_string(c.diverged) : "")
              << "\n";
  }
  for (const auto& [agent, scan] : a.scans) {
    std::cout << to_string(agent) << ": " << scan.true_verdicts() << " of " << scan.verdicts.size()
              << " externalization verdicts hold\n";
    for (const auto& v : scan.verdicts)
      if (v.verdict)
        std::cout << "  " << to_string(v.test.artifact) << " C=" << v.test.capacity << " beats no path C'="
                  << v.test.nopath_capacity << " (p=" << v.test.p_value << ")\n";
  }
}

int cmd_sweep(const std::string& manifest_path, bool smoke, const std::string& out) {
  const RunManifest m = load_manifest(manifest_path);
  SweepOptions opt;
  opt.smoke = smoke;
  opt.out_dir = out.empty() ? fs::path(m.output) : fs::path(out);
  opt.progress = &std::cout;
  const auto records = run_sweep(m, opt);
  const auto analysis = analyze_records(records, m.curve_stride);
  write_analysis(opt.out_dir, records, analysis);
  print_analysis(analysis);
  std::cout << "results in " << opt.out_dir.string() << "\n";
  return 0;
}

int cmd_analyze(const std::string& dir, std::uint64_t stride) {
  const auto records = load_records(dir);
  const auto analysis = analyze_records(records, stride);
  write_analysis(dir, records, analysis);
  print_analysis(analysis);
  return 0;
}

int cmd_render(const std::string& manifest_path, const std::string& out, std::uint64_t steps) {
  const RunManifest m = load_manifest(manifest_path);
  const fs::path dir(out);
  fs::create_directories(dir);
  for (const auto kind : m.kinds) {
    TrialConfig c = base_trial_config(m);
    c.artifacts.kind = kind;
    GridWorld env(c.grid, c.artifacts, c.seed);
    if (kind == ArtifactKind::dynamic_path) {
      RngStream walk(c.seed, "render_walk");
      for (std::uint64_t i = 0; i < steps; ++i) env.step(kAllActions[walk.index(kAllActions.size())]);
    }
    const std::string name(to_string(kind));
    save_pgm(dir / ("arena_" + name + ".pgm"), arena_image(c.grid, env.atlas(), env.mask()));
    save_pgm(dir / ("mask_" + name + ".pgm"), env.mask());
    const Observation full = env.render(env.position());
    for (int side : kTransductionSides)
      save_pgm(dir / ("view_" + name + "_" + std::to_string(side) + ".pgm"), transduce(full, side));
  }
  std::cout << "images written to " << dir.string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Artifacts, bounded agents and externalized memory in gridworlds"};
  app.require_subcommand(1);

  std::string env_path = std::string(EXTMEM_DATA_DIR) + "/page_keeping.tenv";
  int horizon = 6;
  double epsilon = 0.25;
  auto* theory = app.add_subcommand("theory", "Artifact detection, history reduction and artifactless copies");
  theory->add_option("--env", env_path, "Tabular environment file")->capture_default_str();
  theory->add_option("--horizon", horizon, "Largest horizon to enumerate")->check(CLI::Range(2, 64));
  theory->add_option("--epsilon", epsilon, "Emission noise of the artifactless copy")->check(CLI::Range(0.0, 1.0));

  std::string manifest;
  std::string out;
  std::uint64_t seed_index = 0;
  auto* run = app.add_subcommand("run", "Run a single trial");
  run->add_option("--manifest", manifest, "Run manifest")->required()->check(CLI::ExistingFile);
  run->add_option("--seed", seed_index, "Seed index");
  run->add_option("--out", out, "Output directory (default: manifest output)");

  bool smoke = false;
  auto* sweep = app.add_subcommand("sweep", "Two-stage step-size selection over every cell of the manifest");
  sweep->add_option("--manifest", manifest, "Run manifest")->required()->check(CLI::ExistingFile);
  sweep->add_flag("--smoke", smoke, "Use the short smoke trial length");
  sweep->add_option("--out", out, "Output directory (default: manifest output)");

  std::string results;
  std::uint64_t stride = 1000;
  auto* analyze = app.add_subcommand("analyze", "Scan stored records for externalization verdicts");
  analyze->add_option("--results", results, "Directory of *.rec files")->required();
  analyze->add_option("--stride", stride, "Average-reward curve stride")->check(CLI::PositiveNumber);

  std::uint64_t render_steps = 500;
  auto* render = app.add_subcommand("render", "Dump arena, mask and view images as graymaps");
  render->add_option("--manifest", manifest, "Run manifest")->required()->check(CLI::ExistingFile);
  render->add_option("--out", out, "Output directory")->required();
  render->add_option("--steps", render_steps, "Random steps before dumping a dynamic path");

  CLI11_PARSE(app, argc, argv);
  try {
    if (*theory) return cmd_theory(env_path, horizon, epsilon);
    if (*run) return cmd_run(manifest, seed_index, out);
    if (*sweep) return cmd_sweep(manifest, smoke, out);
    if (*analyze) return cmd_analyze(results, stride);
    if (*render) return cmd_render(manifest, out, render_steps);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
