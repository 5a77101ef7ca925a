#pragma once

// Binary portable graymap (P5). ON pixels are written black (0), OFF white (255).

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <span>
#include <string>

#include "extmem/errors.hpp"
#include "extmem/grid.hpp"

namespace extmem {

inline void write_pgm(std::ostream& out, int width, int height, std::span<const std::uint8_t> on) {
  expects(width > 0 && height > 0, "image dimensions must be positive");
  expects(on.size() == static_cast<std::size_t>(width) * static_cast<std::size_t>(height),
          "pixel count does not match the image size");
  out << "P5\n" << width << ' ' << height << "\n255\n";
  for (auto p : on) out.put(static_cast<char>(p ? 0 : 255));
}

inline void write_pgm(std::ostream& out, const Observation& obs) { write_pgm(out, obs.side, obs.side, obs.pixels); }

inline void write_pgm(std::ostream& out, const Bitmap& bm) { write_pgm(out, bm.width(), bm.height(), bm.data()); }

template <class Image>
void save_pgm(const std::filesystem::path& path, const Image& image) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw config_error("cannot write image '" + path.string() + "'");
  write_pgm(out, image);
}

/// Whole arena: every cell texture with the artifact mask on top.
inline Bitmap arena_image(const GridSpec& spec, const TextureAtlas& atlas, const Bitmap& mask) {
  Bitmap img(spec.arena_width(), spec.arena_height());
  for (int cy = 0; cy < spec.height; ++cy)
    for (int cx = 0; cx < spec.width; ++cx) {
      const Bitmap& tile = atlas.at(Cell{cx, cy});
      for (int py = 0; py < spec.tile_size; ++py)
        for (int px = 0; px < spec.tile_size; ++px)
          if (tile.get(px, py)) img.set(cx * spec.tile_size + px, cy * spec.tile_size + py, 1);
    }
  img |= mask;
  return img;
}

}  // namespace extmem
