#pragma once

// Run manifests: INI-style "[section]" blocks of "key = value" lines.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "extmem/artifacts.hpp"
#include "extmem/errors.hpp"
#include "extmem/harness.hpp"
#include "extmem/records.hpp"
#include "extmem/rng.hpp"
#include "extmem/textio.hpp"
#include "extmem/tinynet.hpp"
#include "extmem/trial.hpp"

namespace extmem {

inline constexpr std::array<std::string_view, 5> kExperimentIds{"exp1", "exp2", "exp3", "theory", "custom"};

inline std::vector<std::string> default_capacities(AgentKind agent) {
  if (agent == AgentKind::linear) return {"16", "64", "256", "400", "576"};
  std::vector<std::string> out;
  for (int layers : {2, 3})
    for (int units : {4, 8, 16, 32}) out.push_back(std::to_string(layers) + "x" + std::to_string(units));
  return out;
}

inline std::vector<ArtifactKind> default_kinds(std::string_view experiment) {
  using K = ArtifactKind;
  if (experiment == "exp1") return {K::none, K::optimal_path};
  if (experiment == "exp2")
    return {K::none, K::optimal_path, K::suboptimal_path, K::misleading_path, K::random_path, K::landmarks};
  if (experiment == "exp3") return {K::none, K::dynamic_path};
  return {K::none};
}

inline std::uint64_t default_trial_length(AgentKind agent) { return agent == AgentKind::linear ? 200000 : 150000; }

struct RunManifest {
  std::string experiment = "custom";
  std::uint64_t seed = 0;
  std::string output = "results";

  GridSpec grid;
  ArtifactParams artifacts;  // kind is taken from `kinds`
  std::vector<ArtifactKind> kinds = default_kinds("custom");
  std::string misleading_file;
  std::string landmarks_file;

  AgentKind agent = AgentKind::linear;
  double alpha = 1.0 / 64;
  int crop_side = 24;
  int hidden_layers = 2;
  int hidden_units = 4;
  double gamma = 0.99;
  double epsilon = 0.1;
  double linear_init_scale = 0.01;
  std::size_t replay_capacity = 10000;
  std::size_t batch_size = 32;
  std::size_t sync_period = 200;
  std::size_t learn_start = 500;

  std::vector<std::string> capacities = default_capacities(AgentKind::linear);
  std::vector<double> step_sizes = default_step_sizes();
  std::vector<std::uint64_t> selection_seeds = seed_range(0, 30);
  std::vector<std::uint64_t> evaluation_seeds = seed_range(30, 30);
  std::uint64_t trial_length = default_trial_length(AgentKind::linear);
  std::uint64_t smoke_length = 20000;
  std::uint64_t curve_stride = 1000;

  std::string theory_env;
  int horizon = 6;
  double theory_epsilon = 0.25;

  bool operator==(const RunManifest&) const = default;
};

namespace detail {

struct ManifestKey {
  std::string section;
  std::string key;
  std::function<std::string(const RunManifest&)> get;
  std::function<void(RunManifest&, const std::string&, const std::string&)> set;  // (m, value, where)
};

inline std::string fmt_kind(ArtifactKind k) { return std::string(to_string(k)); }
inline std::string fmt_str(std::string s) { return s; }

inline std::vector<ManifestKey> manifest_keys() {
  using text::format_double;
  using text::parse_number;
  std::vector<ManifestKey> keys;
  auto add = [&](std::string section, std::string key, auto get, auto set) {
    keys.push_back({std::move(section), std::move(key), get, set});
  };
#define EXTMEM_INT_KEY(section, name, member)                                                       \
  add(section, name, [](const RunManifest& m) { return std::to_string(m.member); },                 \
      [](RunManifest& m, const std::string& v, const std::string& w) {                              \
        m.member = parse_number<std::decay_t<decltype(m.member)>>(v, name, w);                      \
      })
#define EXTMEM_DOUBLE_KEY(section, name, member)                                                    \
  add(section, name, [](const RunManifest& m) { return format_double(m.member); },                  \
      [](RunManifest& m, const std::string& v, const std::string& w) { m.member = parse_number<double>(v, name, w); })
#define EXTMEM_STRING_KEY(section, name, member)                                                    \
  add(section, name, [](const RunManifest& m) { return m.member; },                                 \
      [](RunManifest& m, const std::string& v, const std::string&) { m.member = v; })

  add("experiment", "id", [](const RunManifest& m) { return m.experiment; },
      [](RunManifest& m, const std::string& v, const std::string& w) {
        if (std::find(kExperimentIds.begin(), kExperimentIds.end(), v) == kExperimentIds.end())
          throw text::bad_value(w, "id", "expected one of exp1, exp2, exp3, theory, custom");
        m.experiment = v;
      });
  EXTMEM_INT_KEY("experiment", "seed", seed);
  EXTMEM_STRING_KEY("experiment", "output", output);

  EXTMEM_INT_KEY("environment", "width", grid.width);
  EXTMEM_INT_KEY("environment", "height", grid.height);
  add("environment", "start", [](const RunManifest& m) { return text::format_cell(m.grid.start); },
      [](RunManifest& m, const std::string& v, const std::string& w) { m.grid.start = text::parse_cell(v, "start", w); });
  add("environment", "goal", [](const RunManifest& m) { return text::format_cell(m.grid.goal); },
      [](RunManifest& m, const std::string& v, const std::string& w) { m.grid.goal = text::parse_cell(v, "goal", w); });
  EXTMEM_INT_KEY("environment", "tile_size", grid.tile_size);
  EXTMEM_INT_KEY("environment", "view_radius", grid.view_radius);
  EXTMEM_DOUBLE_KEY("environment", "noise_fraction", grid.noise_fraction);
  EXTMEM_INT_KEY("environment", "texture_seed", grid.texture_seed);
  EXTMEM_INT_KEY("environment", "episode_step_cap", grid.episode_step_cap);
  EXTMEM_DOUBLE_KEY("environment", "flip_probability", grid.flip_probability);

  add("artifacts", "kinds", [](const RunManifest& m) { return text::join(m.kinds, &fmt_kind); },
      [](RunManifest& m, const std::string& v, const std::string& w) {
        m.kinds.clear();
        for (const auto& part : text::split(v, ',')) {
          try {
            m.kinds.push_back(parse_artifact_kind(part));
          } catch (const config_error& e) {
            throw text::bad_value(w, "kinds", e.what());
          }
        }
      });
  EXTMEM_INT_KEY("artifacts", "path_thickness", artifacts.path_thickness);
  EXTMEM_INT_KEY("artifacts", "random_walk_length", artifacts.random_walk_length);
  EXTMEM_INT_KEY("artifacts", "artifact_seed", artifacts.artifact_seed);
  EXTMEM_STRING_KEY("artifacts", "misleading_file", misleading_file);
  EXTMEM_STRING_KEY("artifacts", "landmarks_file", landmarks_file);
  EXTMEM_INT_KEY("artifacts", "new_pixels_per_step", artifacts.dynamic.new_pixels_per_step);
  EXTMEM_INT_KEY("artifacts", "vanishing_pixels_per_step", artifacts.dynamic.vanishing_pixels_per_step);
  EXTMEM_DOUBLE_KEY("artifacts", "vanishing_rate", artifacts.dynamic.vanishing_rate);
  EXTMEM_INT_KEY("artifacts", "dynamic_thickness", artifacts.dynamic.path_thickness);

  add("agent", "kind", [](const RunManifest& m) { return std::string(to_string(m.agent)); },
      [](RunManifest& m, const std::string& v, const std::string& w) {
        try {
          m.agent = parse_agent_kind(v);
        } catch (const config_error& e) {
          throw text::bad_value(w, "kind", e.what());
        }
      });
  EXTMEM_DOUBLE_KEY("agent", "alpha", alpha);
  EXTMEM_INT_KEY("agent", "crop_side", crop_side);
  EXTMEM_INT_KEY("agent", "hidden_layers", hidden_layers);
  EXTMEM_INT_KEY("agent", "hidden_units", hidden_units);
  EXTMEM_DOUBLE_KEY("agent", "gamma", gamma);
  EXTMEM_DOUBLE_KEY("agent", "epsilon", epsilon);
  EXTMEM_DOUBLE_KEY("agent", "linear_init_scale", linear_init_scale);
  EXTMEM_INT_KEY("agent", "replay_capacity", replay_capacity);
  EXTMEM_INT_KEY("agent", "batch_size", batch_size);
  EXTMEM_INT_KEY("agent", "sync_period", sync_period);
  EXTMEM_INT_KEY("agent", "learn_start", learn_start);

  add("sweep", "capacities", [](const RunManifest& m) { return text::join(m.capacities, &fmt_str); },
      [](RunManifest& m, const std::string& v, const std::string&) { m.capacities = text::split(v, ','); });
  add("sweep", "step_sizes", [](const RunManifest& m) { return text::join(m.step_sizes, &format_double); },
      [](RunManifest& m, const std::string& v, const std::string& w) {
        m.step_sizes.clear();
        for (const auto& part : text::split(v, ',')) m.step_sizes.push_back(parse_number<double>(part, "step_sizes", w));
      });
  add("sweep", "selection_seeds", [](const RunManifest& m) { return text::format_seed_list(m.selection_seeds); },
      [](RunManifest& m, const std::string& v, const std::string& w) {
        m.selection_seeds = text::parse_seed_list(v, "selection_seeds", w);
      });
  add("sweep", "evaluation_seeds", [](const RunManifest& m) { return text::format_seed_list(m.evaluation_seeds); },
      [](RunManifest& m, const std::string& v, const std::string& w) {
        m.evaluation_seeds = text::parse_seed_list(v, "evaluation_seeds", w);
      });
  EXTMEM_INT_KEY("sweep", "trial_length", trial_length);
  EXTMEM_INT_KEY("sweep", "smoke_length", smoke_length);
  EXTMEM_INT_KEY("sweep", "curve_stride", curve_stride);

  EXTMEM_STRING_KEY("theory", "env", theory_env);
  EXTMEM_INT_KEY("theory", "horizon", horizon);
  EXTMEM_DOUBLE_KEY("theory", "epsilon", theory_epsilon);
#undef EXTMEM_INT_KEY
#undef EXTMEM_DOUBLE_KEY
#undef EXTMEM_STRING_KEY
  return keys;
}

}  // namespace detail

/// Parsed linear capacity ("64") or network shape ("3x16").
struct CapacitySelector {
  int crop_side = 24;
  NetSpec net;
};

inline CapacitySelector parse_capacity(AgentKind agent, const std::string& label, const std::string& where = "capacity") {
  CapacitySelector c;
  if (agent == AgentKind::linear) {
    const auto n = text::parse_number<int>(label, "capacities", where);
    const int side = static_cast<int>(std::lround(std::sqrt(static_cast<double>(std::max(n, 0)))));
    if (side * side != n || !valid_crop_side(side))
      throw text::bad_value(where, "capacities", "linear capacity " + label + " is not one of 16, 64, 256, 400, 576");
    c.crop_side = side;
    return c;
  }
  const auto x = label.find('x');
  if (x == std::string::npos) throw text::bad_value(where, "capacities", "expected LAYERSxUNITS, got '" + label + "'");
  c.net.hidden_layers = text::parse_number<int>(label.substr(0, x), "capacities", where);
  c.net.hidden_units = text::parse_number<int>(label.substr(x + 1), "capacities", where);
  if (c.net.hidden_layers < 1 || c.net.hidden_units < 1)
    throw text::bad_value(where, "capacities", "network shape must be positive, got '" + label + "'");
  return c;
}

/// Cross-field checks. `where_of(key)` names the location reported for a key.
inline void validate_manifest(const RunManifest& m,
                              const std::function<std::string(const std::string&)>& where_of =
                                  [](const std::string&) { return std::string("manifest"); }) {
  auto fail = [&](const std::string& key, const std::string& what) { throw text::bad_value(where_of(key), key, what); };
  const std::string where = where_of("");
  try {
    m.grid.validate();
    m.artifacts.dynamic.validate();
  } catch (const config_error& e) {
    throw config_error(where + ": " + e.what());
  }
  if (!valid_crop_side(m.crop_side)) fail("crop_side", "must be one of 4, 8, 16, 20, 24, got " + std::to_string(m.crop_side));
  if (m.hidden_layers < 1 || m.hidden_units < 1) fail("hidden_layers", "network shape must be positive");
  if (!(m.alpha > 0.0)) fail("alpha", "must be positive");
  if (!(m.gamma >= 0.0 && m.gamma < 1.0)) fail("gamma", "must lie in [0, 1)");
  if (!(m.epsilon >= 0.0 && m.epsilon <= 1.0)) fail("epsilon", "must lie in [0, 1]");
  if (m.linear_init_scale < 0.0) fail("linear_init_scale", "must be >= 0");
  if (m.replay_capacity == 0) fail("replay_capacity", "must be positive");
  if (m.batch_size == 0) fail("batch_size", "must be positive");
  if (m.sync_period == 0) fail("sync_period", "must be positive");
  if (m.artifacts.path_thickness < 1) fail("path_thickness", "must be >= 1");
  if (m.artifacts.random_walk_length < 0) fail("random_walk_length", "must be >= 0");
  if (m.kinds.empty()) fail("kinds", "at least one artifact kind is required");
  for (const auto& c : m.capacities) parse_capacity(m.agent, c, where_of("capacities"));
  if (m.capacities.empty()) fail("capacities", "at least one capacity is required");
  if (m.step_sizes.empty()) fail("step_sizes", "at least one step size is required");
  for (double a : m.step_sizes)
    if (!(a > 0.0)) fail("step_sizes", "step sizes must be positive");
  if (m.selection_seeds.empty() || m.evaluation_seeds.empty()) fail("selection_seeds", "seed sets must be non-empty");
  for (auto s : m.selection_seeds)
    if (std::find(m.evaluation_seeds.begin(), m.evaluation_seeds.end(), s) != m.evaluation_seeds.end())
      fail("evaluation_seeds", "overlaps selection_seeds at seed " + std::to_string(s));
  if (m.trial_length == 0) fail("trial_length", "must be positive");
  if (m.smoke_length == 0) fail("smoke_length", "must be positive");
  if (m.curve_stride == 0) fail("curve_stride", "must be positive");
  if (m.horizon < 2) fail("horizon", "must be >= 2");
  if (!(m.theory_epsilon > 0.0 && m.theory_epsilon < 1.0)) fail("epsilon", "theory noise must lie in (0, 1)");
  const bool needs_misleading = std::count(m.kinds.begin(), m.kinds.end(), ArtifactKind::misleading_path) > 0;
  const bool needs_landmarks = std::count(m.kinds.begin(), m.kinds.end(), ArtifactKind::landmarks) > 0;
  if (needs_misleading && m.misleading_file.empty()) fail("misleading_file", "required for misleading_path");
  if (needs_landmarks && m.landmarks_file.empty()) fail("landmarks_file", "required for landmarks");
}

/// Parses a manifest. Keys absent from the text take the defaults of the experiment
/// preset and agent kind; the result records every value explicitly.
inline RunManifest parse_manifest(std::string_view text_in, const std::string& source = "<manifest>") {
  struct Entry {
    std::string value;
    std::string where;
  };
  std::map<std::pair<std::string, std::string>, Entry> entries;
  const auto keys = detail::manifest_keys();
  std::set<std::string> sections;
  for (const auto& k : keys) sections.insert(k.section);

  std::istringstream in{std::string(text_in)};
  std::string line;
  std::string section;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string where = source + ":" + std::to_string(line_no);
    if (const auto c = line.find_first_of("#;"); c != std::string::npos) line.erase(c);
    const std::string t = text::trim(line);
    if (t.empty()) continue;
    if (t.front() == '[') {
      if (t.back() != ']') throw config_error(where + ": malformed section header '" + t + "'");
      section = text::trim(t.substr(1, t.size() - 2));
      if (!sections.count(section)) throw config_error(where + ": unknown section [" + section + "]");
      continue;
    }
    const auto eq = t.find('=');
    if (eq == std::string::npos) throw config_error(where + ": expected 'key = value'");
    if (section.empty()) throw config_error(where + ": key outside of any section");
    const std::string key = text::trim(t.substr(0, eq));
    const bool known = std::any_of(keys.begin(), keys.end(),
                                   [&](const auto& k) { return k.section == section && k.key == key; });
    if (!known) throw config_error(where + ": unknown key '" + key + "' in [" + section + "]");
    if (entries.count({section, key})) throw config_error(where + ": duplicate key '" + key + "'");
    entries[{section, key}] = {text::trim(t.substr(eq + 1)), where};
  }

  RunManifest m;
  auto apply = [&](const std::string& sec, const std::string& key) {
    const auto it = entries.find({sec, key});
    if (it == entries.end()) return false;
    for (const auto& k : keys)
      if (k.section == sec && k.key == key) k.set(m, it->second.value, it->second.where);
    return true;
  };
  // Preset-dependent defaults first.
  apply("experiment", "id");
  apply("agent", "kind");
  m.kinds = default_kinds(m.experiment);
  m.capacities = default_capacities(m.agent);
  m.trial_length = default_trial_length(m.agent);
  for (const auto& k : keys) apply(k.section, k.key);

  validate_manifest(m, [&](const std::string& key) {
    for (const auto& [k, e] : entries)
      if (k.second == key) return e.where;
    return source;
  });
  return m;
}

/// Every key, grouped by section, in a fixed order.
inline std::string serialize_manifest(const RunManifest& m) {
  std::ostringstream out;
  std::string section;
  for (const auto& k : detail::manifest_keys()) {
    if (k.section != section) {
      out << (section.empty() ? "" : "\n") << "[" << k.section << "]\n";
      section = k.section;
    }
    out << k.key << " = " << k.get(m) << "\n";
  }
  return out.str();
}

/// Reads a manifest file; relative data-file paths are resolved against its directory.
inline RunManifest load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw config_error("cannot open manifest '" + path.string() + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  RunManifest m = parse_manifest(buf.str(), path.string());
  const auto base = path.parent_path();
  for (std::string* f : {&m.misleading_file, &m.landmarks_file, &m.theory_env})
    if (!f->empty() && std::filesystem::path(*f).is_relative()) *f = (base / *f).lexically_normal().string();
  return m;
}

inline std::string manifest_hash(const RunManifest& m) { return hex64(fnv1a(serialize_manifest(m))); }

/// Hash of everything that shapes the environments: the grid and the artifact
/// parameters, not the list of kinds compared.
inline std::string environment_hash(const RunManifest& m) {
  std::uint64_t h = fnv1a("environment");
  for (const auto& k : detail::manifest_keys())
    if (k.section == "environment" || (k.section == "artifacts" && k.key != "kinds"))
      h = fnv1a(k.get(m), fnv1a(k.key, h));
  return hex64(h);
}

inline std::uint64_t trial_seed(std::uint64_t global_seed, std::uint64_t index) {
  return splitmix64(global_seed) ^ index;
}

/// Trial template from the manifest: no artifact, the single-run capacity and step size.
inline TrialConfig base_trial_config(const RunManifest& m) {
  TrialConfig c;
  c.grid = m.grid;
  c.artifacts = m.artifacts;
  c.artifacts.kind = ArtifactKind::none;
  if (!m.misleading_file.empty()) c.artifacts.misleading_route = load_cell_list(m.misleading_file);
  if (!m.landmarks_file.empty()) c.artifacts.landmark_anchors = load_cell_list(m.landmarks_file);
  c.agent = m.agent;
  c.crop_side = m.crop_side;
  c.net.hidden_layers = m.hidden_layers;
  c.net.hidden_units = m.hidden_units;
  c.net.input_dim = m.grid.observation_side() * m.grid.observation_side();
  c.alpha = m.alpha;
  c.gamma = m.gamma;
  c.epsilon = m.epsilon;
  c.linear_init_scale = m.linear_init_scale;
  c.replay_capacity = m.replay_capacity;
  c.batch_size = m.batch_size;
  c.sync_period = m.sync_period;
  c.learn_start = m.learn_start;
  c.trial_length = m.trial_length;
  c.seed = trial_seed(m.seed, 0);
  return c;
}

inline TrialConfig with_capacity(TrialConfig c, const std::string& label) {
  const auto sel = parse_capacity(c.agent, label);
  if (c.agent == AgentKind::linear) {
    c.crop_side = sel.crop_side;
  } else {
    c.net.hidden_layers = sel.net.hidden_layers;
    c.net.hidden_units = sel.net.hidden_units;
  }
  return c;
}

}  // namespace extmem
