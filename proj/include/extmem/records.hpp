#pragma once

// Trial record files: "key = value" header, "---", then the gaps between rewarded
// steps (a run-length code of the sparse reward stream).

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "extmem/errors.hpp"
#include "extmem/rng.hpp"
#include "extmem/textio.hpp"
#include "extmem/trial.hpp"

namespace extmem {

using Fields = std::vector<std::pair<std::string, std::string>>;

inline Fields trial_config_fields(const TrialConfig& c) {
  using text::format_cell;
  using text::format_cells;
  using text::format_double;
  const auto& g = c.grid;
  const auto& a = c.artifacts;
  return {
      {"width", std::to_string(g.width)},
      {"height", std::to_string(g.height)},
      {"start", format_cell(g.start)},
      {"goal", format_cell(g.goal)},
      {"tile_size", std::to_string(g.tile_size)},
      {"view_radius", std::to_string(g.view_radius)},
      {"noise_fraction", format_double(g.noise_fraction)},
      {"texture_seed", std::to_string(g.texture_seed)},
      {"episode_step_cap", std::to_string(g.episode_step_cap)},
      {"flip_probability", format_double(g.flip_probability)},
      {"artifact", std::string(to_string(a.kind))},
      {"path_thickness", std::to_string(a.path_thickness)},
      {"random_walk_length", std::to_string(a.random_walk_length)},
      {"artifact_seed", std::to_string(a.artifact_seed)},
      {"misleading_route", format_cells(a.misleading_route)},
      {"landmark_anchors", format_cells(a.landmark_anchors)},
      {"new_pixels_per_step", std::to_string(a.dynamic.new_pixels_per_step)},
      {"vanishing_pixels_per_step", std::to_string(a.dynamic.vanishing_pixels_per_step)},
      {"vanishing_rate", format_double(a.dynamic.vanishing_rate)},
      {"dynamic_thickness", std::to_string(a.dynamic.path_thickness)},
      {"agent", std::string(to_string(c.agent))},
      {"crop_side", std::to_string(c.crop_side)},
      {"hidden_layers", std::to_string(c.net.hidden_layers)},
      {"hidden_units", std::to_string(c.net.hidden_units)},
      {"input_dim", std::to_string(c.net.input_dim)},
      {"output_dim", std::to_string(c.net.output_dim)},
      {"alpha", format_double(c.alpha)},
      {"gamma", format_double(c.gamma)},
      {"epsilon", format_double(c.epsilon)},
      {"linear_init_scale", format_double(c.linear_init_scale)},
      {"replay_capacity", std::to_string(c.replay_capacity)},
      {"batch_size", std::to_string(c.batch_size)},
      {"sync_period", std::to_string(c.sync_period)},
      {"learn_start", std::to_string(c.learn_start)},
      {"trial_length", std::to_string(c.trial_length)},
      {"seed", std::to_string(c.seed)},
  };
}

/// Sets one TrialConfig field; returns false for keys it does not know.
inline bool set_trial_config_field(TrialConfig& c, const std::string& key, const std::string& v,
                                   const std::string& where) {
  using text::parse_cell;
  using text::parse_cells;
  using text::parse_number;
  auto& g = c.grid;
  auto& a = c.artifacts;
  auto i32 = [&] { return parse_number<int>(v, key, where); };
  auto u64 = [&] { return parse_number<std::uint64_t>(v, key, where); };
  auto f64 = [&] { return parse_number<double>(v, key, where); };
  auto sz = [&] { return static_cast<std::size_t>(u64()); };
  try {
    if (key == "width") g.width = i32();
    else if (key == "height") g.height = i32();
    else if (key == "start") g.start = parse_cell(v, key, where);
    else if (key == "goal") g.goal = parse_cell(v, key, where);
    else if (key == "tile_size") g.tile_size = i32();
    else if (key == "view_radius") g.view_radius = i32();
    else if (key == "noise_fraction") g.noise_fraction = f64();
    else if (key == "texture_seed") g.texture_seed = u64();
    else if (key == "episode_step_cap") g.episode_step_cap = i32();
    else if (key == "flip_probability") g.flip_probability = f64();
    else if (key == "artifact") a.kind = parse_artifact_kind(v);
    else if (key == "path_thickness") a.path_thickness = i32();
    else if (key == "random_walk_length") a.random_walk_length = i32();
    else if (key == "artifact_seed") a.artifact_seed = u64();
    else if (key == "misleading_route") a.misleading_route = parse_cells(v, key, where);
    else if (key == "landmark_anchors") a.landmark_anchors = parse_cells(v, key, where);
    else if (key == "new_pixels_per_step") a.dynamic.new_pixels_per_step = i32();
    else if (key == "vanishing_pixels_per_step") a.dynamic.vanishing_pixels_per_step = i32();
    else if (key == "vanishing_rate") a.dynamic.vanishing_rate = f64();
    else if (key == "dynamic_thickness") a.dynamic.path_thickness = i32();
    else if (key == "agent") c.agent = parse_agent_kind(v);
    else if (key == "crop_side") c.crop_side = i32();
    else if (key == "hidden_layers") c.net.hidden_layers = i32();
    else if (key == "hidden_units") c.net.hidden_units = i32();
    else if (key == "input_dim") c.net.input_dim = i32();
    else if (key == "output_dim") c.net.output_dim = i32();
    else if (key == "alpha") c.alpha = f64();
    else if (key == "gamma") c.gamma = f64();
    else if (key == "epsilon") c.epsilon = f64();
    else if (key == "linear_init_scale") c.linear_init_scale = f64();
    else if (key == "replay_capacity") c.replay_capacity = sz();
    else if (key == "batch_size") c.batch_size = sz();
    else if (key == "sync_period") c.sync_period = sz();
    else if (key == "learn_start") c.learn_start = sz();
    else if (key == "trial_length") c.trial_length = u64();
    else if (key == "seed") c.seed = u64();
    else return false;
  } catch (const config_error& e) {
    const std::string msg = e.what();
    if (msg.rfind(where, 0) == 0) throw;
    throw text::bad_value(where, key, msg);
  }
  return true;
}

/// Stable identity of a trial configuration.
inline std::uint64_t config_hash(const TrialConfig& c) {
  std::uint64_t h = fnv1a("trial");
  for (const auto& [k, v] : trial_config_fields(c)) h = fnv1a(v, fnv1a(k, h));
  return h;
}

inline std::string hex64(std::uint64_t v) {
  std::ostringstream out;
  out << std::hex;
  out.width(16);
  out.fill('0');
  out << v;
  return out.str();
}

/// Where a trial sits in a sweep.
struct RecordMeta {
  std::string manifest_hash;
  std::string environment_hash;
  std::string stage;  // "selection", "evaluation" or "single"
  std::uint64_t seed_index = 0;
  bool operator==(const RecordMeta&) const = default;
};

struct StoredRecord {
  RecordMeta meta;
  TrialRecord record;
};

inline void write_record(std::ostream& out, const TrialRecord& r, const RecordMeta& meta) {
  out << "extmem-record 1\n";
  out << "manifest_hash = " << meta.manifest_hash << "\n";
  out << "environment_hash = " << meta.environment_hash << "\n";
  out << "stage = " << meta.stage << "\n";
  out << "seed_index = " << meta.seed_index << "\n";
  for (const auto& [k, v] : trial_config_fields(r.config)) out << k << " = " << v << "\n";
  out << "capacity = " << r.config.capacity() << "\n";
  out << "length = " << r.length << "\n";
  out << "episodes = " << r.episodes << "\n";
  out << "truncated_episodes = " << r.truncated_episodes << "\n";
  out << "diverged = " << (r.diverged ? "true" : "false") << "\n";
  out << "diverged_at = " << r.diverged_at << "\n";
  out << "total_reward = " << r.reward_steps.size() << "\n";
  out << "---\n";
  std::uint64_t prev = 0;
  for (std::size_t i = 0; i < r.reward_steps.size(); ++i) {
    out << (r.reward_steps[i] - prev) << ((i + 1) % 16 == 0 || i + 1 == r.reward_steps.size() ? '\n' : ' ');
    prev = r.reward_steps[i];
  }
}

inline StoredRecord read_record(std::istream& in, const std::string& source = "<record>") {
  std::string line;
  int line_no = 1;
  if (!std::getline(in, line) || line != "extmem-record 1") throw config_error(source + ": not an extmem record");
  StoredRecord s;
  std::uint64_t total = 0;
  bool have_total = false;
  while (true) {
    if (!std::getline(in, line)) throw config_error(source + ": missing '---' separator");
    ++line_no;
    if (line == "---") break;
    const std::string where = source + ":" + std::to_string(line_no);
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw config_error(where + ": expected 'key = value'");
    const std::string key = text::trim(line.substr(0, eq));
    const std::string value = text::trim(line.substr(eq + 1));
    if (key == "manifest_hash") s.meta.manifest_hash = value;
    else if (key == "environment_hash") s.meta.environment_hash = value;
    else if (key == "stage") s.meta.stage = value;
    else if (key == "seed_index") s.meta.seed_index = text::parse_number<std::uint64_t>(value, key, where);
    else if (key == "capacity") continue;
    else if (key == "length") s.record.length = text::parse_number<std::uint64_t>(value, key, where);
    else if (key == "episodes") s.record.episodes = text::parse_number<std::uint64_t>(value, key, where);
    else if (key == "truncated_episodes") s.record.truncated_episodes = text::parse_number<std::uint64_t>(value, key, where);
    else if (key == "diverged") s.record.diverged = text::parse_bool(value, key, where);
    else if (key == "diverged_at") s.record.diverged_at = text::parse_number<std::uint64_t>(value, key, where);
    else if (key == "total_reward") {
      total = text::parse_number<std::uint64_t>(value, key, where);
      have_total = true;
    } else if (!set_trial_config_field(s.record.config, key, value, where)) {
      throw config_error(where + ": unknown key '" + key + "'");
    }
  }
  std::uint64_t gap = 0;
  std::uint64_t step = 0;
  while (in >> gap) {
    step += gap;
    s.record.reward_steps.push_back(step);
  }
  if (!in.eof()) throw config_error(source + ": malformed reward gaps");
  if (have_total && total != s.record.reward_steps.size())
    throw config_error(source + ": total_reward does not match the reward stream");
  if (step > s.record.length) throw config_error(source + ": reward step beyond the trial length");
  return s;
}

inline void save_record(const std::filesystem::path& path, const TrialRecord& r, const RecordMeta& meta) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw config_error("cannot write record '" + path.string() + "'");
  write_record(out, r, meta);
}

inline StoredRecord load_record(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw config_error("cannot open record '" + path.string() + "'");
  return read_record(in, path.string());
}

/// e.g. "linear-optimal_path-64-a0.015625-s12.rec"
inline std::string record_filename(const TrialRecord& r, const RecordMeta& meta) {
  return std::string(to_string(r.config.agent)) + "-" + std::string(to_string(r.config.artifacts.kind)) + "-" +
         r.config.capacity_label() + "-a" + text::format_double(r.config.alpha) + "-s" +
         std::to_string(meta.seed_index) + ".rec";
}

}  // namespace extmem
