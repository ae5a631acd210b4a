#include <doctest.h>

#include "milg/error.hpp"
#include "milg/tiling.hpp"
#include "test_util.hpp"

using namespace milg;

namespace {

constexpr Rgb kWhite{255, 255, 255};
constexpr Rgb kTissue{200, 120, 170};

RgbImage random_slide(std::size_t w, std::size_t h, Rng& rng) {
  RgbImage img(w, h);
  // Blocky layout so tissue fractions spread over the whole range.
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) img.set(x, y, rng.uniform() < 0.5 ? kWhite : kTissue);
  return img;
}

}  // namespace

TEST_CASE("uniform slides") {
  TilingConfig cfg;
  cfg.patch_size = 8;
  CHECK(tile(RgbImage(32, 32, kWhite), "s", cfg).patches.empty());
  const auto r = tile(RgbImage(32, 32, kTissue), "s", cfg);
  CHECK(r.patches.size() == 16);
  CHECK(r.grid_rows == 4);
  CHECK(r.grid_cols == 4);
  CHECK(r.discarded == 0);
}

TEST_CASE("half white, half tissue keeps the tissue side") {
  TilingConfig cfg;
  cfg.patch_size = 8;
  RgbImage img(32, 32, kWhite);
  for (std::size_t y = 0; y < 32; ++y)
    for (std::size_t x = 16; x < 32; ++x) img.set(x, y, kTissue);
  const auto r = tile(img, "s", cfg);
  REQUIRE(r.patches.size() == 8);
  for (const auto& p : r.patches) CHECK(p.col >= 2);
  CHECK(r.discarded == 8);
}

TEST_CASE("tissue fraction counts non-white pixels") {
  CHECK(tissue_fraction(RgbImage(4, 4, kWhite)) == 0.0);
  CHECK(tissue_fraction(RgbImage(4, 4, {0, 0, 0})) == 1.0);
  RgbImage q(4, 4, {0, 0, 0});
  for (std::size_t y = 0; y < 2; ++y)
    for (std::size_t x = 0; x < 2; ++x) q.set(x, y, kWhite);
  CHECK(tissue_fraction(q) == 0.75);
  CHECK(is_near_white({220, 220, 220}));
  CHECK_FALSE(is_near_white({219, 255, 255}));
}

TEST_CASE("threshold boundary is inclusive") {
  TilingConfig cfg;
  cfg.patch_size = 2;
  RgbImage img(2, 2, kWhite);
  img.set(0, 0, kTissue);
  img.set(1, 0, kTissue);
  cfg.tissue_threshold = 50;
  CHECK(tile(img, "s", cfg).patches.size() == 1);
  cfg.tissue_threshold = 50.5;
  CHECK(tile(img, "s", cfg).patches.empty());
  cfg.tissue_threshold = 0;
  CHECK(tile(RgbImage(2, 2, kWhite), "s", cfg).patches.size() == 1);
}

TEST_CASE("partial border tiles are dropped and coordinates follow the grid") {
  Rng rng(1);
  TilingConfig cfg;
  cfg.patch_size = 8;
  cfg.tissue_threshold = 0;
  const auto img = random_slide(35, 20, rng);
  const auto r = tile(img, "slide", cfg);
  CHECK(r.grid_cols == 4);
  CHECK(r.grid_rows == 2);
  REQUIRE(r.patches.size() == 8);
  for (std::size_t i = 0; i < r.patches.size(); ++i) {
    const auto& p = r.patches[i];
    CHECK(p.row == i / 4);
    CHECK(p.col == i % 4);
    CHECK(p.origin_x == p.col * 8);
    CHECK(p.origin_y == p.row * 8);
    CHECK(p.slide_id == "slide");
    CHECK(p.pixels == img.crop(p.origin_x, p.origin_y, 8, 8));
  }
}

TEST_CASE("retained and discarded tiles cover the aligned grid exactly once") {
  Rng rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    TilingConfig cfg;
    cfg.patch_size = 4;
    cfg.tissue_threshold = rng.uniform(0.0, 100.0);
    const auto img = random_slide(4 + rng.below(30), 4 + rng.below(30), rng);
    const auto r = tile(img, "s", cfg);
    CHECK(r.patches.size() + r.discarded == r.grid_rows * r.grid_cols);
    for (const auto& p : r.patches) CHECK(p.tissue_fraction * 100.0 >= cfg.tissue_threshold - 1e-9);
  }
}

TEST_CASE("raising the threshold never adds a patch") {
  Rng rng(3);
  const auto img = random_slide(64, 64, rng);
  TilingConfig cfg;
  cfg.patch_size = 4;
  std::size_t prev = SIZE_MAX;
  for (double z = 0; z <= 100; z += 5) {
    cfg.tissue_threshold = z;
    const std::size_t n = tile(img, "s", cfg).patches.size();
    CHECK(n <= prev);
    prev = n;
  }
}

TEST_CASE("small images and bad thresholds") {
  TilingConfig cfg;
  cfg.patch_size = 32;
  const auto r = tile(RgbImage(16, 40, kTissue), "s", cfg);
  CHECK(r.image_too_small);
  CHECK(r.patches.empty());
  cfg.tissue_threshold = 101;
  CHECK_THROWS_AS(tile(RgbImage(64, 64), "s", cfg), UserError);
  cfg.tissue_threshold = 50;
  cfg.patch_size = 0;
  CHECK_THROWS_AS(tile(RgbImage(64, 64), "s", cfg), UserError);
}

TEST_CASE("tiles round-trip through disk") {
  Rng rng(4);
  TilingConfig cfg;
  cfg.patch_size = 8;
  cfg.tissue_threshold = 30;
  const auto r = tile(random_slide(40, 24, rng), "s", cfg);
  testutil::TempDir dir("tiles");
  write_tiles(dir.path(), r);
  const auto coords = read_coords(dir / "coords.csv");
  REQUIRE(coords.size() == r.patches.size());
  const auto images = read_patch_images(dir.path(), coords);
  for (std::size_t i = 0; i < coords.size(); ++i) {
    CHECK(coords[i].patch_id == i);
    CHECK(coords[i].row == r.patches[i].row);
    CHECK(coords[i].origin_x == r.patches[i].origin_x);
    CHECK(coords[i].tissue_fraction == doctest::Approx(r.patches[i].tissue_fraction));
    CHECK(images[i] == r.patches[i].pixels);
  }
}
