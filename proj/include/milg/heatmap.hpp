#pragma once
// Slide overlays: attention rectangles over the selected patches and the
// patch graph drawn at patch centres.

#include <vector>

#include "milg/graph_builder.hpp"
#include "milg/image.hpp"
#include "milg/tiling.hpp"
#include "milg/workspace.hpp"

namespace milg {

inline constexpr Rgb kOutlineColor{0, 0, 255};
inline constexpr Rgb kEdgeColor{0, 140, 0};
inline constexpr Rgb kNodeColor{220, 0, 0};

struct OverlayStats {
  std::size_t rectangles = 0;
  std::size_t nodes = 0;
  std::size_t edges = 0;
};

/// Outlines every selected patch with a 1px blue border at its origin and
/// blends blue into its interior with alpha = 0.5 * score / max selected score.
/// Scores and coords are matched by patch id; throws UserError on a mismatch.
RgbImage render_attention_overlay(const RgbImage& slide, const std::vector<PatchCoord>& coords,
                                  const std::vector<ScoreRow>& scores, std::size_t patch_size,
                                  OverlayStats* stats = nullptr);

/// Draws each undirected edge as a straight line between node centres, then a
/// 3x3 marker per node. Nodes need coordinates.
RgbImage render_graph_overlay(const RgbImage& slide, const PatchGraph& graph, OverlayStats* stats = nullptr);

/// Integer line from (x0, y0) to (x1, y1), both endpoints included; pixels
/// outside the image are skipped.
void draw_line(RgbImage& img, long x0, long y0, long x1, long y1, Rgb color);

}  // namespace milg
