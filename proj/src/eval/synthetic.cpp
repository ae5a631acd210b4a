#include "milg/synthetic.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>

#include "milg/csv.hpp"
#include "milg/error.hpp"
#include "milg/rng.hpp"

namespace milg {

SyntheticVariant parse_synthetic_variant(const std::string& name) {
  if (name == "motif") return SyntheticVariant::Motif;
  if (name == "mixture") return SyntheticVariant::Mixture;
  if (name == "adjacency") return SyntheticVariant::Adjacency;
  throw UserError("unknown synthetic variant '" + name + "' (expected motif, mixture or adjacency)");
}

std::string to_string(SyntheticVariant v) {
  switch (v) {
    case SyntheticVariant::Motif: return "motif";
    case SyntheticVariant::Mixture: return "mixture";
    case SyntheticVariant::Adjacency: return "adjacency";
  }
  return "?";
}

void SyntheticSpec::validate() const {
  if (n_classes < 2) throw UserError("synthetic data needs at least two classes");
  if (n_classes > kMaxMotifs) throw UserError("synthetic data supports at most " + std::to_string(kMaxMotifs) + " classes");
  if (!(motif_region_fraction > 0.0 && motif_region_fraction < 1.0))
    throw UserError("motif_region_fraction must lie in (0, 1)");
  if (grid_size == 0 || patch_size == 0) throw UserError("grid and patch size must be positive");
  if (noise_level < 0.0) throw UserError("noise level must be non-negative");
  if (variant == SyntheticVariant::Mixture) {
    if (!(secondary_fraction > 0.0 && secondary_fraction < motif_region_fraction))
      throw UserError("secondary_fraction must lie in (0, motif_region_fraction)");
    if (motif_region_fraction + secondary_fraction >= 1.0)
      throw UserError("motif regions cover the whole slide");
  }
  if (variant == SyntheticVariant::Adjacency && n_classes != 2)
    throw UserError("the adjacency variant is binary (--classes 2)");
}

namespace {

using Color = std::array<double, 3>;

struct Motif {
  Color ink;
  Color base;
  int pattern;
};

// Distinct hue and texture per motif id.
constexpr std::array<Motif, kMaxMotifs> kMotifs{{
    {{80, 30, 110}, {200, 120, 170}, 0},   // nuclei dots
    {{60, 70, 170}, {185, 170, 225}, 1},   // horizontal bands
    {{160, 80, 50}, {225, 175, 150}, 2},   // checker
    {{30, 120, 115}, {165, 210, 200}, 3},  // rings
    {{110, 150, 40}, {200, 215, 165}, 4},  // diagonal bands
    {{150, 40, 45}, {215, 160, 160}, 5},   // vertical bands
    {{55, 55, 55}, {175, 175, 175}, 6},    // coarse blobs
    {{95, 55, 160}, {215, 200, 232}, 7},   // crosshatch
}};

constexpr Color kTissue{232, 178, 212};
constexpr Color kTissueSpeck{196, 140, 190};

double pattern_value(int pattern, double x, double y, double phase, double n) {
  switch (pattern) {
    case 0: {  // dots on a 6px lattice
      const double cx = std::fmod(x + phase, 6.0) - 3.0, cy = std::fmod(y + 2 * phase, 6.0) - 3.0;
      return cx * cx + cy * cy <= 3.5 ? 1.0 : 0.0;
    }
    case 1: return std::fmod(y + phase, 6.0) < 3.0 ? 1.0 : 0.0;
    case 2: return (static_cast<int>((x + phase) / 4.0) + static_cast<int>((y + phase) / 4.0)) % 2 == 0 ? 1.0 : 0.0;
    case 3: {
      const double dx = x - n / 2.0, dy = y - n / 2.0;
      return std::fmod(std::sqrt(dx * dx + dy * dy) + phase, 5.0) < 2.5 ? 1.0 : 0.0;
    }
    case 4: return std::fmod(x + y + phase, 8.0) < 4.0 ? 1.0 : 0.0;
    case 5: return std::fmod(x + phase, 6.0) < 3.0 ? 1.0 : 0.0;
    case 6: return std::sin((x + phase) * 0.35) * std::cos((y + phase) * 0.3) > 0.2 ? 1.0 : 0.0;
    case 7: return (std::fmod(x + phase, 7.0) < 2.0 || std::fmod(y + phase, 7.0) < 2.0) ? 1.0 : 0.0;
    default: return 0.0;
  }
}

std::uint8_t to_byte(double v) { return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L)); }

void paint_cell(RgbImage& img, std::size_t row, std::size_t col, int motif, std::size_t n, double noise, Rng& rng) {
  const double phase = rng.uniform(0.0, 12.0);
  const double shade = rng.uniform(-8.0, 8.0);
  for (std::size_t y = 0; y < n; ++y) {
    for (std::size_t x = 0; x < n; ++x) {
      Color c;
      if (motif < 0) {
        const bool speck = rng.uniform() < 0.04;
        c = speck ? kTissueSpeck : kTissue;
      } else {
        const auto& m = kMotifs[static_cast<std::size_t>(motif)];
        const double t = pattern_value(m.pattern, static_cast<double>(x), static_cast<double>(y), phase,
                                       static_cast<double>(n));
        for (int k = 0; k < 3; ++k) c[k] = t * m.ink[k] + (1.0 - t) * m.base[k];
      }
      Rgb px;
      for (int k = 0; k < 3; ++k) {
        double v = c[k] + shade;
        if (noise > 0.0) v += rng.normal() * noise * 255.0;
        px[k] = to_byte(v);
      }
      img.set(col * n + x, row * n + y, px);
    }
  }
}

// Grows a 4-connected region of exactly `count` cells from `start`, never
// entering cells with blocked[i] set. Returns false if it runs out of room.
bool grow_region(std::size_t g, std::size_t start, std::size_t count, const std::vector<bool>& blocked,
                 std::vector<bool>& region, Rng& rng) {
  region.assign(g * g, false);
  if (blocked[start]) return false;
  std::vector<std::size_t> members{start}, frontier;
  region[start] = true;
  auto push_neighbours = [&](std::size_t cell) {
    const std::size_t r = cell / g, c = cell % g;
    const long dr[4] = {-1, 1, 0, 0}, dc[4] = {0, 0, -1, 1};
    for (int k = 0; k < 4; ++k) {
      const long nr = static_cast<long>(r) + dr[k], nc = static_cast<long>(c) + dc[k];
      if (nr < 0 || nc < 0 || nr >= static_cast<long>(g) || nc >= static_cast<long>(g)) continue;
      const std::size_t nb = static_cast<std::size_t>(nr) * g + static_cast<std::size_t>(nc);
      if (!region[nb] && !blocked[nb] && std::find(frontier.begin(), frontier.end(), nb) == frontier.end())
        frontier.push_back(nb);
    }
  };
  push_neighbours(start);
  while (members.size() < count) {
    if (frontier.empty()) return false;
    const std::size_t pick = rng.below(frontier.size());
    const std::size_t cell = frontier[pick];
    frontier.erase(frontier.begin() + static_cast<std::ptrdiff_t>(pick));
    region[cell] = true;
    members.push_back(cell);
    push_neighbours(cell);
  }
  return true;
}

std::size_t cells_for(double fraction, std::size_t total) {
  return std::clamp<std::size_t>(static_cast<std::size_t>(std::lround(fraction * static_cast<double>(total))), 1,
                                 total - 1);
}

// Cells within Chebyshev distance < gap of any region cell.
std::vector<bool> dilate(const std::vector<bool>& region, std::size_t g, long gap) {
  std::vector<bool> out(g * g, false);
  for (std::size_t i = 0; i < g * g; ++i) {
    if (!region[i]) continue;
    const long r = static_cast<long>(i / g), c = static_cast<long>(i % g);
    for (long dr = -(gap - 1); dr <= gap - 1; ++dr)
      for (long dc = -(gap - 1); dc <= gap - 1; ++dc) {
        const long nr = r + dr, nc = c + dc;
        if (nr >= 0 && nc >= 0 && nr < static_cast<long>(g) && nc < static_cast<long>(g))
          out[static_cast<std::size_t>(nr) * g + static_cast<std::size_t>(nc)] = true;
      }
  }
  return out;
}

std::vector<int> layout_cells(const SyntheticSpec& spec, std::size_t label, Rng& rng) {
  const std::size_t g = spec.grid_size, total = g * g;
  std::vector<int> cells(total, -1);
  std::vector<bool> none(total, false), first, second;
  for (int attempt = 0; attempt < 1000; ++attempt) {
    std::fill(cells.begin(), cells.end(), -1);
    switch (spec.variant) {
      case SyntheticVariant::Motif: {
        if (!grow_region(g, rng.below(total), cells_for(spec.motif_region_fraction, total), none, first, rng)) continue;
        for (std::size_t i = 0; i < total; ++i)
          if (first[i]) cells[i] = static_cast<int>(label);
        return cells;
      }
      case SyntheticVariant::Mixture: {
        const auto other = static_cast<int>((label + 1 + rng.below(spec.n_classes - 1)) % spec.n_classes);
        if (!grow_region(g, rng.below(total), cells_for(spec.motif_region_fraction, total), none, first, rng)) continue;
        if (!grow_region(g, rng.below(total), cells_for(spec.secondary_fraction, total), first, second, rng)) continue;
        for (std::size_t i = 0; i < total; ++i) {
          if (first[i]) cells[i] = static_cast<int>(label);
          if (second[i]) cells[i] = other;
        }
        return cells;
      }
      case SyntheticVariant::Adjacency: {
        const std::size_t each = std::max<std::size_t>(1, cells_for(spec.motif_region_fraction, total) / 2);
        if (!grow_region(g, rng.below(total), each, none, first, rng)) continue;
        std::size_t start;
        if (label == 1) {
          // Start the second region on a free cell that touches the first.
          const auto ring = dilate(first, g, 2);
          std::vector<std::size_t> touching;
          for (std::size_t i = 0; i < total; ++i) {
            if (first[i]) continue;
            const std::size_t r = i / g, c = i % g;
            const bool adj = (r > 0 && first[i - g]) || (r + 1 < g && first[i + g]) || (c > 0 && first[i - 1]) ||
                             (c + 1 < g && first[i + 1]);
            if (adj && ring[i]) touching.push_back(i);
          }
          if (touching.empty()) continue;
          start = touching[rng.below(touching.size())];
          if (!grow_region(g, start, each, first, second, rng)) continue;
        } else {
          const auto blocked = dilate(first, g, 3);
          std::vector<std::size_t> free;
          for (std::size_t i = 0; i < total; ++i)
            if (!blocked[i]) free.push_back(i);
          if (free.empty()) continue;
          start = free[rng.below(free.size())];
          if (!grow_region(g, start, each, blocked, second, rng)) continue;
        }
        for (std::size_t i = 0; i < total; ++i) {
          if (first[i]) cells[i] = 0;
          if (second[i]) cells[i] = 1;
        }
        return cells;
      }
    }
  }
  throw UserError("could not place motif regions on a " + std::to_string(g) + "x" + std::to_string(g) +
                  " grid; lower the region fractions");
}

}  // namespace

SyntheticSlide generate_slide(const SyntheticSpec& spec, std::size_t index) {
  spec.validate();
  Rng rng(derive_seed(spec.seed, index));
  SyntheticSlide s;
  char id[32];
  std::snprintf(id, sizeof id, "slide_%04zu", index);
  s.slide_id = id;
  s.label = index % spec.n_classes;
  s.cell_motif = layout_cells(spec, s.label, rng);
  const std::size_t g = spec.grid_size, n = spec.patch_size;
  s.image = RgbImage(g * n, g * n);
  for (std::size_t r = 0; r < g; ++r)
    for (std::size_t c = 0; c < g; ++c) paint_cell(s.image, r, c, s.cell_motif[r * g + c], n, spec.noise_level, rng);
  return s;
}

std::vector<SyntheticSlide> generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  std::vector<SyntheticSlide> out;
  out.reserve(spec.n_bags);
  for (std::size_t i = 0; i < spec.n_bags; ++i) out.push_back(generate_slide(spec, i));
  return out;
}

void write_synthetic(const std::filesystem::path& dir, const std::vector<SyntheticSlide>& slides) {
  CsvTable manifest{{"slide_id", "path", "label"}, {}};
  for (const auto& s : slides) {
    const std::string rel = "slides/" + s.slide_id + ".ppm";
    write_ppm(dir / rel, s.image);
    const std::size_t g = static_cast<std::size_t>(std::lround(std::sqrt(static_cast<double>(s.cell_motif.size()))));
    CsvTable truth{{"row", "col", "motif"}, {}};
    for (std::size_t i = 0; i < s.cell_motif.size(); ++i)
      truth.rows.push_back({std::to_string(i / g), std::to_string(i % g), std::to_string(s.cell_motif[i])});
    write_csv(dir / "truth" / (s.slide_id + ".csv"), truth);
    manifest.rows.push_back({s.slide_id, rel, std::to_string(s.label)});
  }
  write_csv(dir / "manifest.csv", manifest);
}

std::vector<int> read_truth(const std::filesystem::path& csv, std::size_t grid_rows, std::size_t grid_cols) {
  const auto t = read_csv(csv, {"row", "col", "motif"});
  std::vector<int> out(grid_rows * grid_cols, -1);
  for (const auto& r : t.rows) {
    const auto row = static_cast<std::size_t>(parse_long(r[0], "row"));
    const auto col = static_cast<std::size_t>(parse_long(r[1], "col"));
    if (row >= grid_rows || col >= grid_cols) throw UserError(csv.string() + ": cell outside the grid");
    out[row * grid_cols + col] = static_cast<int>(parse_long(r[2], "motif"));
  }
  return out;
}

RetrievalScore retrieval_score(std::span<const std::size_t> selected, const std::vector<bool>& is_motif) {
  if (selected.empty()) throw UserError("retrieval_score: empty selection");
  std::size_t hits = 0;
  for (auto i : selected) {
    if (i >= is_motif.size()) throw UserError("retrieval_score: index " + std::to_string(i) + " outside the bag");
    if (is_motif[i]) ++hits;
  }
  const auto motif = static_cast<std::size_t>(std::count(is_motif.begin(), is_motif.end(), true));
  RetrievalScore s;
  s.precision = static_cast<double>(hits) / static_cast<double>(selected.size());
  s.recall = motif == 0 ? 0.0 : static_cast<double>(hits) / static_cast<double>(motif);
  return s;
}

}  // namespace milg
