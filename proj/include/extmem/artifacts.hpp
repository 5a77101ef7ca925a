#pragma once

// Artifact layers painted over the arena: fixed path/landmark masks and the
// agent-written vanishing path.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <optional>
#include <queue>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "extmem/errors.hpp"
#include "extmem/grid.hpp"
#include "extmem/rng.hpp"

namespace extmem {

enum class ArtifactKind : std::uint8_t {
  none,
  optimal_path,
  suboptimal_path,
  misleading_path,
  random_path,
  landmarks,
  dynamic_path,
};

inline constexpr std::array<ArtifactKind, 7> kAllArtifactKinds{
    ArtifactKind::none,       ArtifactKind::optimal_path, ArtifactKind::suboptimal_path,
    ArtifactKind::misleading_path, ArtifactKind::random_path, ArtifactKind::landmarks,
    ArtifactKind::dynamic_path};

constexpr std::string_view to_string(ArtifactKind k) {
  switch (k) {
    case ArtifactKind::none: return "none";
    case ArtifactKind::optimal_path: return "optimal_path";
    case ArtifactKind::suboptimal_path: return "suboptimal_path";
    case ArtifactKind::misleading_path: return "misleading_path";
    case ArtifactKind::random_path: return "random_path";
    case ArtifactKind::landmarks: return "landmarks";
    case ArtifactKind::dynamic_path: return "dynamic_path";
  }
  return "?";
}

inline ArtifactKind parse_artifact_kind(std::string_view name) {
  for (auto k : kAllArtifactKinds)
    if (to_string(k) == name) return k;
  throw config_error("unknown artifact kind '" + std::string(name) + "'");
}

struct DynamicPathParams {
  int new_pixels_per_step = 12;
  int vanishing_pixels_per_step = 40;
  double vanishing_rate = 0.5;
  int path_thickness = 2;

  void validate() const {
    if (new_pixels_per_step < 0 || vanishing_pixels_per_step < 0)
      throw config_error("dynamic path pixel counts must be >= 0");
    if (!(vanishing_rate >= 0.0 && vanishing_rate <= 1.0))
      throw config_error("vanishing_rate must lie in [0, 1]");
    if (path_thickness < 1) throw config_error("path_thickness must be >= 1");
  }
  bool operator==(const DynamicPathParams&) const = default;
};

/// Landmark shapes, in the order their anchor cells appear in a layout file.
enum class LandmarkShape : std::uint8_t { diamond, donut, circle, rectangle, triangle, square };
inline constexpr int kNumLandmarks = 6;
/// Landmarks occupy a 2x2-cell box anchored at the listed (top-left) cell.
inline constexpr int kLandmarkCells = 2;

struct ArtifactParams {
  ArtifactKind kind = ArtifactKind::none;
  int path_thickness = 2;
  int random_walk_length = 60;
  std::uint64_t artifact_seed = 11;
  std::vector<Cell> misleading_route;
  std::vector<Cell> landmark_anchors;
  DynamicPathParams dynamic;

  bool operator==(const ArtifactParams&) const = default;
};

// ---------------------------------------------------------------------------
// Cell lists

/// Parses "x,y" lines; '#' starts a comment, blank lines are skipped.
inline std::vector<Cell> parse_cell_list(std::string_view text, std::string_view source = "<text>") {
  std::vector<Cell> cells;
  std::istringstream in{std::string(text)};
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    Cell c;
    char comma = 0;
    std::istringstream fields(line);
    std::string rest;
    if (!(fields >> c.x >> comma >> c.y) || comma != ',' || (fields >> rest)) {
      throw config_error(std::string(source) + ":" + std::to_string(lineno) +
                         ": expected 'x,y', got '" + line + "'");
    }
    cells.push_back(c);
  }
  return cells;
}

inline std::vector<Cell> load_cell_list(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw config_error("cannot open cell list '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_cell_list(buf.str(), path);
}

inline std::string format_cell_list(std::span<const Cell> cells) {
  std::string out;
  for (auto c : cells) out += std::to_string(c.x) + "," + std::to_string(c.y) + "\n";
  return out;
}

// ---------------------------------------------------------------------------
// Routes (cell sequences)

/// BFS shortest route through the grid, inclusive of both ends. Neighbors are
/// expanded in action order so the route is deterministic.
inline std::vector<Cell> shortest_route(const GridSpec& spec, Cell from, Cell to) {
  expects(spec.contains(from) && spec.contains(to), "route endpoints outside grid");
  const auto idx = [&](Cell c) { return static_cast<std::size_t>(c.y * spec.width + c.x); };
  std::vector<int> parent(static_cast<std::size_t>(spec.width * spec.height), -1);
  std::vector<bool> seen(parent.size(), false);
  std::queue<Cell> frontier;
  frontier.push(from);
  seen[idx(from)] = true;
  while (!frontier.empty()) {
    const Cell c = frontier.front();
    frontier.pop();
    if (c == to) break;
    for (Action a : kAllActions) {
      const Cell n = moved(c, a);
      if (!spec.contains(n) || seen[idx(n)]) continue;
      seen[idx(n)] = true;
      parent[idx(n)] = static_cast<int>(idx(c));
      frontier.push(n);
    }
  }
  std::vector<Cell> route{to};
  for (int p = parent[idx(to)]; p >= 0; p = parent[static_cast<std::size_t>(p)])
    route.push_back({p % spec.width, p / spec.width});
  std::reverse(route.begin(), route.end());
  return route;
}

inline bool is_connected_route(std::span<const Cell> route) {
  for (std::size_t i = 1; i < route.size(); ++i)
    if (manhattan(route[i - 1], route[i]) > 1) return false;
  return true;
}

/// Shortest route with two rectangular detours two cells deep, each adding four
/// steps, placed around one and two thirds of the way along.
inline std::vector<Cell> suboptimal_route(const GridSpec& spec) {
  std::vector<Cell> route = shortest_route(spec, spec.start, spec.goal);
  const std::size_t optimal_steps = route.size() - 1;
  constexpr int kDepth = 2;

  auto try_insert = [&](std::size_t i) -> bool {
    const Cell a = route[i];
    const Cell b = route[i + 1];
    const int dx = b.x - a.x;
    const int dy = b.y - a.y;
    for (int sign : {-1, 1}) {
      const Cell n{dy * sign, dx * sign};  // perpendicular unit step
      std::vector<Cell> detour;
      for (int k = 1; k <= kDepth; ++k) detour.push_back({a.x + k * n.x, a.y + k * n.y});
      for (int k = kDepth; k >= 1; --k) detour.push_back({b.x + k * n.x, b.y + k * n.y});
      const bool ok = std::all_of(detour.begin(), detour.end(), [&](Cell c) {
        return spec.contains(c) && c != spec.goal &&
               std::find(route.begin(), route.end(), c) == route.end();
      });
      if (ok) {
        route.insert(route.begin() + static_cast<std::ptrdiff_t>(i + 1), detour.begin(), detour.end());
        return true;
      }
    }
    return false;
  };

  for (double frac : {2.0 / 3.0, 1.0 / 3.0}) {  // later one first keeps earlier indices valid
    const auto target = static_cast<std::size_t>(frac * static_cast<double>(route.size() - 1));
    bool placed = false;
    for (std::size_t off = 0; off < route.size() && !placed; ++off) {
      for (std::size_t i : {target + off, target - off}) {
        if (i + 1 < route.size() && i <= target + off && try_insert(i)) {
          placed = true;
          break;
        }
      }
    }
    if (!placed) throw config_error("no room for a suboptimal detour on this grid");
  }
  if (route.size() - 1 != optimal_steps + 8)
    throw config_error("suboptimal route does not have optimal + 8 steps");
  return route;
}

/// Uniform random walk from the start; blocked moves repeat the current cell.
inline std::vector<Cell> random_walk_route(const GridSpec& spec, int steps, std::uint64_t seed) {
  RngStream rng(seed, "random_path");
  std::vector<Cell> route{spec.start};
  for (int s = 0; s < steps; ++s) {
    const Cell next = moved(route.back(), kAllActions[rng.index(kNumActions)]);
    route.push_back(spec.contains(next) ? next : route.back());
  }
  return route;
}

// ---------------------------------------------------------------------------
// Pixel geometry

/// Pixels of the band of width `thickness` joining the centers of two cells that
/// are adjacent or equal, as arena pixel indices (row-major).
inline std::vector<std::size_t> segment_pixels(const GridSpec& spec, Cell from, Cell to,
                                               int thickness) {
  expects(manhattan(from, to) <= 1, "segment endpoints must be adjacent or equal");
  expects(spec.contains(from) && spec.contains(to), "segment endpoints outside grid");
  const int ts = spec.tile_size;
  const int lo = spec.center_offset(thickness);
  const int x0 = std::min(from.x, to.x) * ts + lo;
  const int x1 = std::max(from.x, to.x) * ts + lo + thickness - 1;
  const int y0 = std::min(from.y, to.y) * ts + lo;
  const int y1 = std::max(from.y, to.y) * ts + lo + thickness - 1;
  const int aw = spec.arena_width();
  const int ah = spec.arena_height();
  std::vector<std::size_t> out;
  for (int y = std::max(y0, 0); y <= std::min(y1, ah - 1); ++y)
    for (int x = std::max(x0, 0); x <= std::min(x1, aw - 1); ++x)
      out.push_back(static_cast<std::size_t>(y * aw + x));
  return out;
}

inline Bitmap empty_mask(const GridSpec& spec) { return Bitmap(spec.arena_width(), spec.arena_height()); }

inline Bitmap route_mask(const GridSpec& spec, std::span<const Cell> route, int thickness) {
  Bitmap mask = empty_mask(spec);
  if (route.empty()) return mask;
  for (std::size_t i = 0; i < route.size(); ++i) {
    const Cell next = i + 1 < route.size() ? route[i + 1] : route[i];
    for (auto p : segment_pixels(spec, route[i], next, thickness)) mask.set(p, true);
  }
  return mask;
}

namespace detail {

inline bool landmark_pixel(LandmarkShape shape, int px, int py, int box) {
  const double c = (box - 1) / 2.0;
  const double dx = px - c;
  const double dy = py - c;
  const double r = std::sqrt(dx * dx + dy * dy);
  const double half = box / 2.0;
  switch (shape) {
    case LandmarkShape::diamond: return std::abs(dx) + std::abs(dy) <= half - 0.5;
    case LandmarkShape::donut: return r <= half - 0.5 && r >= half * 0.45;
    case LandmarkShape::circle: return r <= half * 0.75;
    case LandmarkShape::rectangle: return std::abs(dy) <= half * 0.4;
    case LandmarkShape::triangle: {
      // apex at the top, base on the bottom row
      const double t = (py + 0.5) / box;
      return std::abs(dx) <= t * half;
    }
    case LandmarkShape::square: return std::abs(dx) <= half * 0.7 && std::abs(dy) <= half * 0.7;
  }
  return false;
}

}  // namespace detail

/// Six filled shapes, each inscribed in a 2x2-cell box anchored at the given cells,
/// in the order diamond, donut, circle, rectangle, triangle, square.
inline Bitmap landmarks_mask(const GridSpec& spec, std::span<const Cell> anchors) {
  if (anchors.size() != kNumLandmarks)
    throw config_error("landmark layout needs exactly 6 anchor cells, got " +
                       std::to_string(anchors.size()));
  Bitmap mask = empty_mask(spec);
  const int box = kLandmarkCells * spec.tile_size;
  for (std::size_t s = 0; s < anchors.size(); ++s) {
    const Cell a = anchors[s];
    if (!spec.contains(a) || !spec.contains({a.x + kLandmarkCells - 1, a.y + kLandmarkCells - 1}))
      throw config_error("landmark box at " + std::to_string(a.x) + "," + std::to_string(a.y) +
                         " leaves the grid");
    for (int py = 0; py < box; ++py)
      for (int px = 0; px < box; ++px)
        if (detail::landmark_pixel(static_cast<LandmarkShape>(s), px, py, box))
          mask.set(a.x * spec.tile_size + px, a.y * spec.tile_size + py, true);
  }
  return mask;
}

inline void validate_route(const GridSpec& spec, std::span<const Cell> route, std::string_view what) {
  if (route.empty()) throw config_error(std::string(what) + " route is empty");
  for (auto c : route)
    if (!spec.contains(c)) throw config_error(std::string(what) + " route leaves the grid");
  if (!is_connected_route(route))
    throw config_error(std::string(what) + " route has non-adjacent consecutive cells");
}

/// Static artifact mask over the arena; a pure function of its arguments.
inline Bitmap build_fixed_mask(const ArtifactParams& params, const GridSpec& spec) {
  expects(params.kind != ArtifactKind::dynamic_path, "dynamic paths have no fixed mask");
  switch (params.kind) {
    case ArtifactKind::none: return empty_mask(spec);
    case ArtifactKind::optimal_path:
      return route_mask(spec, shortest_route(spec, spec.start, spec.goal), params.path_thickness);
    case ArtifactKind::suboptimal_path:
      return route_mask(spec, suboptimal_route(spec), params.path_thickness);
    case ArtifactKind::misleading_path:
      validate_route(spec, params.misleading_route, "misleading");
      return route_mask(spec, params.misleading_route, params.path_thickness);
    case ArtifactKind::random_path:
      return route_mask(spec, random_walk_route(spec, params.random_walk_length, params.artifact_seed),
                        params.path_thickness);
    case ArtifactKind::landmarks: return landmarks_mask(spec, params.landmark_anchors);
    case ArtifactKind::dynamic_path: break;
  }
  return empty_mask(spec);
}

// ---------------------------------------------------------------------------
// Dynamic path

/// k distinct indices from [0, n), uniformly, in draw order (Floyd's algorithm).
inline std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t k, RngStream& rng) {
  k = std::min(k, n);
  std::vector<std::size_t> picked;
  picked.reserve(k);
  for (std::size_t j = n - k; j < n; ++j) {
    const std::size_t t = rng.index(j + 1);
    if (std::find(picked.begin(), picked.end(), t) == picked.end())
      picked.push_back(t);
    else
      picked.push_back(j);
  }
  return picked;
}

/// One transition of the agent-written path: a without-replacement sample of the
/// segment pixels is switched ON, then a without-replacement sample of all arena
/// pixels is each switched OFF with probability vanishing_rate.
inline void dynamic_path_update(Bitmap& mask, const GridSpec& spec, Cell from, Cell to,
                                const DynamicPathParams& params, RngStream& rng) {
  const auto segment = segment_pixels(spec, from, to, params.path_thickness);
  const auto n_new = static_cast<std::size_t>(params.new_pixels_per_step);
  for (auto i : sample_without_replacement(segment.size(), n_new, rng)) mask.set(segment[i], true);

  const auto n_vanish = static_cast<std::size_t>(params.vanishing_pixels_per_step);
  for (auto p : sample_without_replacement(mask.size(), n_vanish, rng))
    if (rng.bernoulli(params.vanishing_rate)) mask.set(p, false);
}

}  // namespace extmem
