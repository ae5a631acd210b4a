#include "milg/heatmap.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>

#include "milg/error.hpp"

namespace milg {

namespace {

void put(RgbImage& img, long x, long y, Rgb c) {
  if (x < 0 || y < 0 || x >= static_cast<long>(img.width()) || y >= static_cast<long>(img.height())) return;
  img.set(static_cast<std::size_t>(x), static_cast<std::size_t>(y), c);
}

std::uint8_t blend(std::uint8_t base, std::uint8_t over, double alpha) {
  return static_cast<std::uint8_t>(std::lround((1.0 - alpha) * base + alpha * over));
}

}  // namespace

void draw_line(RgbImage& img, long x0, long y0, long x1, long y1, Rgb color) {
  const long dx = std::labs(x1 - x0), dy = -std::labs(y1 - y0);
  const long sx = x0 < x1 ? 1 : -1, sy = y0 < y1 ? 1 : -1;
  long err = dx + dy;
  for (;;) {
    put(img, x0, y0, color);
    if (x0 == x1 && y0 == y1) break;
    const long e2 = 2 * err;
    if (e2 >= dy) {
      err += dy;
      x0 += sx;
    }
    if (e2 <= dx) {
      err += dx;
      y0 += sy;
    }
  }
}

RgbImage render_attention_overlay(const RgbImage& slide, const std::vector<PatchCoord>& coords,
                                  const std::vector<ScoreRow>& scores, std::size_t patch_size,
                                  OverlayStats* stats) {
  if (coords.size() != scores.size())
    throw UserError("scores.csv lists " + std::to_string(scores.size()) + " patches, coords.csv " +
                    std::to_string(coords.size()));
  for (std::size_t i = 0; i < coords.size(); ++i)
    if (coords[i].patch_id != scores[i].patch_id)
      throw UserError("patch id mismatch between coords.csv (" + std::to_string(coords[i].patch_id) +
                      ") and scores.csv (" + std::to_string(scores[i].patch_id) + ")");

  double max_score = 0.0;
  for (const auto& s : scores)
    if (s.selected) max_score = std::max(max_score, s.attention_score);

  RgbImage out = slide;
  OverlayStats st;
  const long n = static_cast<long>(patch_size);
  for (std::size_t i = 0; i < coords.size(); ++i) {
    if (!scores[i].selected) continue;
    const long x0 = static_cast<long>(coords[i].origin_x), y0 = static_cast<long>(coords[i].origin_y);
    const double alpha = max_score > 0.0 ? 0.5 * scores[i].attention_score / max_score : 0.0;
    for (long y = y0 + 1; y < y0 + n - 1; ++y)
      for (long x = x0 + 1; x < x0 + n - 1; ++x) {
        if (x >= static_cast<long>(out.width()) || y >= static_cast<long>(out.height())) continue;
        const Rgb p = out.at(static_cast<std::size_t>(x), static_cast<std::size_t>(y));
        out.set(static_cast<std::size_t>(x), static_cast<std::size_t>(y),
                {blend(p[0], kOutlineColor[0], alpha), blend(p[1], kOutlineColor[1], alpha),
                 blend(p[2], kOutlineColor[2], alpha)});
      }
    for (long t = 0; t < n; ++t) {
      put(out, x0 + t, y0, kOutlineColor);
      put(out, x0 + t, y0 + n - 1, kOutlineColor);
      put(out, x0, y0 + t, kOutlineColor);
      put(out, x0 + n - 1, y0 + t, kOutlineColor);
    }
    ++st.rectangles;
  }
  if (stats) *stats = st;
  return out;
}

RgbImage render_graph_overlay(const RgbImage& slide, const PatchGraph& graph, OverlayStats* stats) {
  if (graph.coords.size() != graph.size()) throw UserError("graph nodes lack coordinates");
  RgbImage out = slide;
  OverlayStats st;
  auto px = [&](std::size_t i) {
    return std::pair<long, long>{std::lround(graph.coords[i].x), std::lround(graph.coords[i].y)};
  };
  for (const auto& [i, j] : graph.adjacency.edges()) {
    const auto [x0, y0] = px(i);
    const auto [x1, y1] = px(j);
    draw_line(out, x0, y0, x1, y1, kEdgeColor);
    ++st.edges;
  }
  for (std::size_t i = 0; i < graph.size(); ++i) {
    const auto [x, y] = px(i);
    for (long dy = -1; dy <= 1; ++dy)
      for (long dx = -1; dx <= 1; ++dx) put(out, x + dx, y + dy, kNodeColor);
    ++st.nodes;
  }
  if (stats) *stats = st;
  return out;
}

}  // namespace milg
