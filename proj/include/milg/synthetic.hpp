#pragma once
// Planted-motif synthetic slides for desk-scale validation.
//
// Every slide is a grid_size x grid_size grid of patch_size cells. Cells are
// painted with a tissue-coloured background texture, except for contiguous
// regions that carry a class-specific motif texture. The per-cell motif id
// is the ground truth for discriminative-patch retrieval.

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "milg/image.hpp"

namespace milg {

enum class SyntheticVariant {
  /// One region of the label's motif.
  Motif,
  /// A primary region of the label's motif plus a smaller region of another
  /// class's motif; the label is the motif covering more area.
  Mixture,
  /// Two motif types (ids 0 and 1) in every slide; label 1 iff the regions
  /// touch, label 0 iff they are at least three cells apart.
  Adjacency,
};

SyntheticVariant parse_synthetic_variant(const std::string& name);
std::string to_string(SyntheticVariant v);

inline constexpr std::size_t kMaxMotifs = 8;

struct SyntheticSpec {
  std::size_t n_bags = 200;
  std::size_t grid_size = 8;
  std::size_t patch_size = 32;
  std::size_t n_classes = 4;
  /// Share of cells covered by the (primary) motif region; in (0, 1).
  /// For Adjacency this is the combined share of both regions.
  double motif_region_fraction = 0.25;
  /// Mixture only: share covered by the secondary motif.
  double secondary_fraction = 0.125;
  /// Standard deviation of additive Gaussian pixel noise, as a fraction of 255.
  double noise_level = 0.0;
  std::uint64_t seed = 0;
  SyntheticVariant variant = SyntheticVariant::Motif;

  void validate() const;
};

struct SyntheticSlide {
  std::string slide_id;
  RgbImage image;
  std::size_t label = 0;
  /// Row-major per-cell motif id, -1 for background.
  std::vector<int> cell_motif;
};

/// Slide i depends only on (spec, i).
SyntheticSlide generate_slide(const SyntheticSpec& spec, std::size_t index);
std::vector<SyntheticSlide> generate_synthetic(const SyntheticSpec& spec);

/// Writes slides/<id>.ppm, truth/<id>.csv (row,col,motif) and manifest.csv
/// (slide_id,path,label) under dir. Manifest paths are relative to dir.
void write_synthetic(const std::filesystem::path& dir, const std::vector<SyntheticSlide>& slides);

/// Reads truth/<id>.csv back as a row-major motif grid.
std::vector<int> read_truth(const std::filesystem::path& csv, std::size_t grid_rows, std::size_t grid_cols);

struct RetrievalScore {
  double precision = 0.0;
  double recall = 0.0;
};

/// precision = |selected and motif| / |selected|, recall = |selected and motif| / |motif|
/// (recall is 0 when the bag has no motif patches). Throws UserError on an
/// empty selection or an index outside the bag.
RetrievalScore retrieval_score(std::span<const std::size_t> selected, const std::vector<bool>& is_motif);

}  // namespace milg
