#pragma once

// Grid geometry, tile textures, and the observation pipeline (render + transduce)
// for the artifactual navigation arena.

#include <algorithm>
#include <array>
#include <cmath>
#include <compare>
#include <cstdint>
#include <numeric>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "extmem/errors.hpp"
#include "extmem/rng.hpp"

namespace extmem {

struct Cell {
  int x = 0;  // column
  int y = 0;  // row, grows downward
  auto operator<=>(const Cell&) const = default;
};

enum class Action : std::uint8_t { up = 0, down = 1, left = 2, right = 3 };

inline constexpr int kNumActions = 4;
inline constexpr std::array<Action, kNumActions> kAllActions{Action::up, Action::down,
                                                             Action::left, Action::right};

constexpr std::string_view to_string(Action a) {
  switch (a) {
    case Action::up: return "up";
    case Action::down: return "down";
    case Action::left: return "left";
    case Action::right: return "right";
  }
  return "?";
}

constexpr Cell moved(Cell c, Action a) {
  switch (a) {
    case Action::up: return {c.x, c.y - 1};
    case Action::down: return {c.x, c.y + 1};
    case Action::left: return {c.x - 1, c.y};
    case Action::right: return {c.x + 1, c.y};
  }
  return c;
}

constexpr int manhattan(Cell a, Cell b) {
  return (a.x > b.x ? a.x - b.x : b.x - a.x) + (a.y > b.y ? a.y - b.y : b.y - a.y);
}

/// Crop sides the transduction function accepts; capacities 16, 64, 256, 400, 576.
inline constexpr std::array<int, 5> kTransductionSides{4, 8, 16, 20, 24};

struct GridSpec {
  int width = 13;
  int height = 13;
  Cell start{1, 1};
  Cell goal{11, 11};
  int tile_size = 8;
  int view_radius = 1;
  double noise_fraction = 0.10;
  std::uint64_t texture_seed = 7;
  /// Steps after which an episode is reset without reward.
  int episode_step_cap = 2000;
  /// Optional per-step salt-and-pepper flips on rendered observations (0 disables).
  double flip_probability = 0.0;

  bool contains(Cell c) const { return c.x >= 0 && c.y >= 0 && c.x < width && c.y < height; }
  int observation_side() const { return tile_size * (2 * view_radius + 1); }
  int arena_width() const { return width * tile_size; }
  int arena_height() const { return height * tile_size; }
  int on_pixels_per_tile() const {
    return static_cast<int>(std::lround(noise_fraction * tile_size * tile_size));
  }
  /// Pixel coordinate of the first pixel of the band through a cell center.
  int center_offset(int thickness) const { return tile_size / 2 - thickness / 2; }

  void validate() const {
    if (width < 2 || height < 2) throw config_error("grid must be at least 2x2");
    if (!contains(start)) throw config_error("start cell outside the grid");
    if (!contains(goal)) throw config_error("goal cell outside the grid");
    if (start == goal) throw config_error("start and goal must differ");
    if (tile_size < 2) throw config_error("tile_size must be >= 2");
    if (view_radius < 0) throw config_error("view_radius must be >= 0");
    if (noise_fraction < 0.0 || noise_fraction > 1.0)
      throw config_error("noise_fraction must lie in [0, 1]");
    if (episode_step_cap < 1) throw config_error("episode_step_cap must be >= 1");
    if (flip_probability < 0.0 || flip_probability > 1.0)
      throw config_error("flip_probability must lie in [0, 1]");
  }

  bool operator==(const GridSpec&) const = default;
};

/// Binary image, row-major, one byte per pixel holding 0 or 1.
class Bitmap {
 public:
  Bitmap() = default;
  Bitmap(int width, int height)
      : width_(width), height_(height), bits_(static_cast<std::size_t>(width * height), 0) {}

  int width() const { return width_; }
  int height() const { return height_; }
  std::size_t size() const { return bits_.size(); }
  bool empty() const { return bits_.empty(); }

  bool get(int x, int y) const { return bits_[index(x, y)] != 0; }
  void set(int x, int y, bool on = true) { bits_[index(x, y)] = on ? 1 : 0; }
  bool get(std::size_t i) const { return bits_[i] != 0; }
  void set(std::size_t i, bool on) { bits_[i] = on ? 1 : 0; }
  bool in_bounds(int x, int y) const { return x >= 0 && y >= 0 && x < width_ && y < height_; }

  std::size_t count() const {
    return static_cast<std::size_t>(std::count(bits_.begin(), bits_.end(), std::uint8_t{1}));
  }
  std::span<const std::uint8_t> data() const { return bits_; }

  Bitmap& operator|=(const Bitmap& other) {
    expects(width_ == other.width_ && height_ == other.height_, "bitmap shape mismatch");
    for (std::size_t i = 0; i < bits_.size(); ++i) bits_[i] |= other.bits_[i];
    return *this;
  }

  bool operator==(const Bitmap&) const = default;
  auto operator<=>(const Bitmap& other) const { return bits_ <=> other.bits_; }

 private:
  std::size_t index(int x, int y) const {
    return static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) +
           static_cast<std::size_t>(x);
  }

  int width_ = 0;
  int height_ = 0;
  std::vector<std::uint8_t> bits_;
};

/// Square binary image handed to an agent, plus the same pixels as reals.
struct Observation {
  int side = 0;
  std::vector<std::uint8_t> pixels;
  std::vector<double> flat;

  Observation() = default;
  Observation(int side_, std::vector<std::uint8_t> pixels_) : side(side_), pixels(std::move(pixels_)) {
    expects(pixels.size() == static_cast<std::size_t>(side * side), "observation size mismatch");
    sync_flat();
  }

  std::uint8_t at(int row, int col) const { return pixels[static_cast<std::size_t>(row * side + col)]; }
  std::size_t size() const { return pixels.size(); }

  void sync_flat() {
    flat.resize(pixels.size());
    for (std::size_t i = 0; i < pixels.size(); ++i) flat[i] = pixels[i] ? 1.0 : 0.0;
  }

  bool operator==(const Observation& o) const { return side == o.side && pixels == o.pixels; }
};

/// Per-cell tiles for the grid plus a ring of padding tiles for out-of-grid views.
class TextureAtlas {
 public:
  TextureAtlas() = default;
  TextureAtlas(int width, int height, int ring, std::vector<Bitmap> tiles)
      : width_(width), height_(height), ring_(ring), tiles_(std::move(tiles)) {}

  /// Tile for any cell within `ring` of the grid; cells outside the grid are padding.
  const Bitmap& at(Cell c) const {
    expects(c.x >= -ring_ && c.y >= -ring_ && c.x < width_ + ring_ && c.y < height_ + ring_,
            "cell outside the textured region");
    const int stride = width_ + 2 * ring_;
    return tiles_[static_cast<std::size_t>((c.y + ring_) * stride + (c.x + ring_))];
  }
  int ring() const { return ring_; }
  int width() const { return width_; }
  int height() const { return height_; }
  std::span<const Bitmap> tiles() const { return tiles_; }

 private:
  int width_ = 0;
  int height_ = 0;
  int ring_ = 0;
  std::vector<Bitmap> tiles_;
};

namespace detail {

inline Bitmap random_tile(int side, int on_pixels, RngStream& rng) {
  std::vector<int> order(static_cast<std::size_t>(side * side));
  std::iota(order.begin(), order.end(), 0);
  Bitmap tile(side, side);
  for (int k = 0; k < on_pixels; ++k) {
    const auto j = static_cast<std::size_t>(k) + rng.index(order.size() - static_cast<std::size_t>(k));
    std::swap(order[static_cast<std::size_t>(k)], order[j]);
    tile.set(static_cast<std::size_t>(order[static_cast<std::size_t>(k)]), true);
  }
  return tile;
}

}  // namespace detail

/// Seeded salt-and-pepper tiles: every tile has exactly round(noise_fraction * side^2)
/// ON pixels and all tiles (grid and padding) are pairwise distinct. Grid tiles come
/// from texture_seed, padding tiles from texture_seed + 1.
inline TextureAtlas generate_textures(const GridSpec& spec) {
  spec.validate();
  const int ring = spec.view_radius;
  const int stride = spec.width + 2 * ring;
  const int rows = spec.height + 2 * ring;
  const int on = spec.on_pixels_per_tile();
  RngStream grid_rng(spec.texture_seed, "textures");
  RngStream pad_rng(spec.texture_seed + 1, "textures");

  std::vector<Bitmap> tiles(static_cast<std::size_t>(stride * rows));
  std::set<Bitmap> seen;
  constexpr int kMaxAttempts = 1000;
  auto fill = [&](Cell c, RngStream& rng) {
    for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
      Bitmap tile = detail::random_tile(spec.tile_size, on, rng);
      if (seen.insert(tile).second) {
        tiles[static_cast<std::size_t>((c.y + ring) * stride + (c.x + ring))] = std::move(tile);
        return;
      }
    }
    throw config_error("cannot generate pairwise-distinct tile textures for this grid");
  };
  // Grid cells first so their textures do not depend on the view radius.
  for (int y = 0; y < spec.height; ++y)
    for (int x = 0; x < spec.width; ++x) fill({x, y}, grid_rng);
  for (int y = -ring; y < spec.height + ring; ++y)
    for (int x = -ring; x < spec.width + ring; ++x)
      if (!spec.contains({x, y})) fill({x, y}, pad_rng);
  return TextureAtlas(spec.width, spec.height, ring, std::move(tiles));
}

/// Full allocentric view around `agent`: a (2r+1)x(2r+1) mosaic of tiles. Grid cells
/// have the artifact mask OR-ed over their texture; padding cells never carry mask bits.
inline void render_observation_into(const GridSpec& spec, const TextureAtlas& atlas, Cell agent,
                                    const Bitmap& mask, Observation& out) {
  const int side = spec.observation_side();
  const int ts = spec.tile_size;
  const bool has_mask = !mask.empty();
  out.side = side;
  out.pixels.assign(static_cast<std::size_t>(side * side), 0);
  for (int dy = -spec.view_radius; dy <= spec.view_radius; ++dy) {
    for (int dx = -spec.view_radius; dx <= spec.view_radius; ++dx) {
      const Cell c{agent.x + dx, agent.y + dy};
      const Bitmap& tile = atlas.at(c);
      const bool inside = spec.contains(c);
      const int oy = (dy + spec.view_radius) * ts;
      const int ox = (dx + spec.view_radius) * ts;
      for (int py = 0; py < ts; ++py) {
        for (int px = 0; px < ts; ++px) {
          bool on = tile.get(px, py);
          if (inside && has_mask) on = on || mask.get(c.x * ts + px, c.y * ts + py);
          out.pixels[static_cast<std::size_t>((oy + py) * side + ox + px)] = on ? 1 : 0;
        }
      }
    }
  }
  out.sync_flat();
}

inline Observation render_observation(const GridSpec& spec, const TextureAtlas& atlas, Cell agent,
                                      const Bitmap& mask) {
  Observation out;
  render_observation_into(spec, atlas, agent, mask, out);
  return out;
}

inline bool valid_crop_side(int crop_side) {
  return std::find(kTransductionSides.begin(), kTransductionSides.end(), crop_side) !=
         kTransductionSides.end();
}

/// Centered crop: output (i, j) = input (i + off, j + off), off = (side - crop) / 2.
inline void transduce_into(const Observation& in, int crop_side, Observation& out) {
  if (!valid_crop_side(crop_side) || crop_side > in.side || (in.side - crop_side) % 2 != 0)
    throw config_error("invalid crop side " + std::to_string(crop_side) +
                       " (expected one of 4, 8, 16, 20, 24, no larger than the view)");
  const int off = (in.side - crop_side) / 2;
  out.side = crop_side;
  out.pixels.resize(static_cast<std::size_t>(crop_side * crop_side));
  for (int i = 0; i < crop_side; ++i)
    for (int j = 0; j < crop_side; ++j)
      out.pixels[static_cast<std::size_t>(i * crop_side + j)] = in.at(i + off, j + off);
  out.sync_flat();
}

inline Observation transduce(const Observation& in, int crop_side) {
  Observation out;
  transduce_into(in, crop_side, out);
  return out;
}

}  // namespace extmem
