#pragma once
// Spatial K-nearest-neighbour graphs over the selected patches of a slide.

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "milg/mil_attention.hpp"

namespace milg {

/// Dense symmetric 0/1 adjacency with an empty diagonal.
class Adjacency {
 public:
  Adjacency() = default;
  explicit Adjacency(std::size_t n) : n_(n), cells_(n * n, 0) {}

  std::size_t size() const { return n_; }
  bool operator()(std::size_t i, std::size_t j) const { return cells_[i * n_ + j] != 0; }
  /// Adds the undirected edge {i, j}; self-loops are rejected.
  void connect(std::size_t i, std::size_t j);
  std::size_t degree(std::size_t i) const;
  /// Each undirected edge once, as (i, j) with i < j, lexicographic.
  std::vector<std::pair<std::size_t, std::size_t>> edges() const;
  bool symmetric() const;
  /// Rows and columns restricted to `keep` (in the given order).
  Adjacency induced(std::span<const std::size_t> keep) const;

  friend bool operator==(const Adjacency&, const Adjacency&) = default;

 private:
  std::size_t n_ = 0;
  std::vector<std::uint8_t> cells_;
};

struct PatchGraph {
  std::string slide_id;
  std::size_t label = 0;
  Tensor<float> node_features;  // [n x F]
  Adjacency adjacency;
  std::vector<Point> coords;
  std::vector<std::size_t> patch_ids;  // node -> patch id within the slide

  std::size_t size() const { return patch_ids.size(); }
};

/// Nodes are bag.coords[selected]; each node links to its K nearest other
/// nodes by Euclidean distance (ties to the lower node index), then the
/// directed relation is symmetrised by union. Node features are the rows of
/// `features` at the selected indices.
PatchGraph build_graph(const Bag& bag, std::span<const std::size_t> selected, const Tensor<float>& features,
                       std::size_t k);

/// Reorders nodes by ascending patch id.
PatchGraph canonical_order(const PatchGraph& g);

/// Writes graph.csv (src,dst with src < dst), nodes.csv (node,patch_id) and
/// features.milf into dir.
void write_graph(const std::filesystem::path& dir, const PatchGraph& g);
/// Reads a graph written by write_graph. Coordinates are filled in from
/// `patch_centers` (indexed by patch id) when provided.
PatchGraph read_graph(const std::filesystem::path& dir, const std::string& slide_id, std::size_t label,
                      std::span<const Point> patch_centers = {});

}  // namespace milg
