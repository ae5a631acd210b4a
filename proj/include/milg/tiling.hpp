#pragma once
// Non-overlapping grid tiling of a slide raster with a background filter.

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "milg/image.hpp"

namespace milg {

/// Returns true for pixels that count as background (glass).
using BackgroundPredicate = std::function<bool(const Rgb&)>;

/// Near-white rule: background iff every channel is >= 220.
bool is_near_white(const Rgb& px);

struct Patch {
  std::string slide_id;
  std::size_t row = 0;
  std::size_t col = 0;
  std::size_t origin_x = 0;
  std::size_t origin_y = 0;
  RgbImage pixels;
  double tissue_fraction = 0.0;
};

struct TilingConfig {
  std::size_t patch_size = 32;
  /// Minimum tissue percentage z in [0, 100] for a patch to be kept.
  double tissue_threshold = 50.0;
  BackgroundPredicate background = is_near_white;
};

struct TileResult {
  std::vector<Patch> patches;  // row-major order
  std::size_t grid_rows = 0;
  std::size_t grid_cols = 0;
  std::size_t discarded = 0;
  /// Set when the image cannot hold a single patch; patches is then empty.
  bool image_too_small = false;
};

/// Fraction of pixels that are not background.
double tissue_fraction(const RgbImage& patch, const BackgroundPredicate& background = is_near_white);

TileResult tile(const RgbImage& image, const std::string& slide_id, const TilingConfig& cfg);

/// One row of coords.csv.
struct PatchCoord {
  std::size_t patch_id = 0;
  std::size_t row = 0;
  std::size_t col = 0;
  std::size_t origin_x = 0;
  std::size_t origin_y = 0;
  double tissue_fraction = 0.0;
};

/// Writes patch_<id>.ppm files plus coords.csv into dir.
void write_tiles(const std::filesystem::path& dir, const TileResult& result);
std::vector<PatchCoord> read_coords(const std::filesystem::path& coords_csv);
/// Loads the patch images listed in dir/coords.csv, in patch_id order.
std::vector<RgbImage> read_patch_images(const std::filesystem::path& dir, const std::vector<PatchCoord>& coords);

}  // namespace milg
