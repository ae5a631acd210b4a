#include "milg/tiling.hpp"

#include <cstdio>

#include "milg/csv.hpp"
#include "milg/error.hpp"

namespace milg {

bool is_near_white(const Rgb& px) { return px[0] >= 220 && px[1] >= 220 && px[2] >= 220; }

namespace {

std::size_t tissue_pixels(const RgbImage& patch, const BackgroundPredicate& background) {
  std::size_t count = 0;
  for (std::size_t y = 0; y < patch.height(); ++y)
    for (std::size_t x = 0; x < patch.width(); ++x)
      if (!background(patch.at(x, y))) ++count;
  return count;
}

std::string patch_file(std::size_t id) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "patch_%05zu.ppm", id);
  return buf;
}

}  // namespace

double tissue_fraction(const RgbImage& patch, const BackgroundPredicate& background) {
  const std::size_t total = patch.width() * patch.height();
  if (total == 0) return 0.0;
  return static_cast<double>(tissue_pixels(patch, background)) / static_cast<double>(total);
}

TileResult tile(const RgbImage& image, const std::string& slide_id, const TilingConfig& cfg) {
  if (cfg.patch_size == 0) throw UserError("patch size must be positive");
  if (!(cfg.tissue_threshold >= 0.0 && cfg.tissue_threshold <= 100.0))
    throw UserError("tissue threshold must lie in [0, 100]");
  const auto& background = cfg.background ? cfg.background : BackgroundPredicate(is_near_white);

  TileResult out;
  const std::size_t n = cfg.patch_size;
  out.grid_rows = image.height() / n;
  out.grid_cols = image.width() / n;
  if (out.grid_rows == 0 || out.grid_cols == 0) {
    out.image_too_small = true;
    return out;
  }
  const double total = static_cast<double>(n * n);
  for (std::size_t r = 0; r < out.grid_rows; ++r) {
    for (std::size_t c = 0; c < out.grid_cols; ++c) {
      RgbImage px = image.crop(c * n, r * n, n, n);
      const std::size_t tissue = tissue_pixels(px, background);
      // Integer-exact form of tissue/total >= z/100.
      if (static_cast<double>(tissue) * 100.0 < cfg.tissue_threshold * total) {
        ++out.discarded;
        continue;
      }
      out.patches.push_back(Patch{slide_id, r, c, c * n, r * n, std::move(px), static_cast<double>(tissue) / total});
    }
  }
  return out;
}

void write_tiles(const std::filesystem::path& dir, const TileResult& result) {
  std::filesystem::create_directories(dir);
  CsvTable t;
  t.header = {"patch_id", "row", "col", "origin_x", "origin_y", "tissue_fraction"};
  for (std::size_t i = 0; i < result.patches.size(); ++i) {
    const auto& p = result.patches[i];
    write_ppm(dir / patch_file(i), p.pixels);
    t.rows.push_back({std::to_string(i), std::to_string(p.row), std::to_string(p.col), std::to_string(p.origin_x),
                      std::to_string(p.origin_y), format_number(p.tissue_fraction)});
  }
  write_csv(dir / "coords.csv", t);
}

std::vector<PatchCoord> read_coords(const std::filesystem::path& coords_csv) {
  const auto t = read_csv(coords_csv, {"patch_id", "row", "col", "origin_x", "origin_y", "tissue_fraction"});
  std::vector<PatchCoord> out;
  out.reserve(t.rows.size());
  for (const auto& r : t.rows) {
    PatchCoord c;
    c.patch_id = static_cast<std::size_t>(parse_long(r[0], "patch_id"));
    c.row = static_cast<std::size_t>(parse_long(r[1], "row"));
    c.col = static_cast<std::size_t>(parse_long(r[2], "col"));
    c.origin_x = static_cast<std::size_t>(parse_long(r[3], "origin_x"));
    c.origin_y = static_cast<std::size_t>(parse_long(r[4], "origin_y"));
    c.tissue_fraction = parse_double(r[5], "tissue_fraction");
    if (c.patch_id != out.size()) throw UserError(coords_csv.string() + ": patch ids must be 0..M-1 in order");
    out.push_back(c);
  }
  return out;
}

std::vector<RgbImage> read_patch_images(const std::filesystem::path& dir, const std::vector<PatchCoord>& coords) {
  std::vector<RgbImage> out;
  out.reserve(coords.size());
  for (const auto& c : coords) out.push_back(read_ppm(dir / patch_file(c.patch_id)));
  return out;
}

}  // namespace milg
