#include "milg/graph_builder.hpp"

#include <algorithm>
#include <numeric>

#include "milg/csv.hpp"
#include "milg/feature_store.hpp"

namespace milg {

void Adjacency::connect(std::size_t i, std::size_t j) {
  if (i >= n_ || j >= n_) throw std::out_of_range("adjacency index out of range");
  if (i == j) throw std::invalid_argument("adjacency cannot hold self-loops");
  cells_[i * n_ + j] = 1;
  cells_[j * n_ + i] = 1;
}

std::size_t Adjacency::degree(std::size_t i) const {
  return static_cast<std::size_t>(std::count(cells_.begin() + static_cast<std::ptrdiff_t>(i * n_),
                                             cells_.begin() + static_cast<std::ptrdiff_t>((i + 1) * n_), 1));
}

std::vector<std::pair<std::size_t, std::size_t>> Adjacency::edges() const {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  for (std::size_t i = 0; i < n_; ++i)
    for (std::size_t j = i + 1; j < n_; ++j)
      if ((*this)(i, j)) out.emplace_back(i, j);
  return out;
}

bool Adjacency::symmetric() const {
  for (std::size_t i = 0; i < n_; ++i) {
    if ((*this)(i, i)) return false;
    for (std::size_t j = i + 1; j < n_; ++j)
      if ((*this)(i, j) != (*this)(j, i)) return false;
  }
  return true;
}

Adjacency Adjacency::induced(std::span<const std::size_t> keep) const {
  Adjacency out(keep.size());
  for (std::size_t a = 0; a < keep.size(); ++a)
    for (std::size_t b = 0; b < keep.size(); ++b) out.cells_[a * keep.size() + b] = cells_[keep[a] * n_ + keep[b]];
  return out;
}

PatchGraph build_graph(const Bag& bag, std::span<const std::size_t> selected, const Tensor<float>& features,
                       std::size_t k) {
  if (selected.empty()) throw UserError("build_graph: no selected patches for slide '" + bag.slide_id + "'");
  if (k == 0) throw UserError("build_graph: K must be at least 1");
  if (features.rank() != 2 || features.dim(0) != bag.coords.size())
    throw DimensionError("build_graph: feature rows do not match the bag's patches");
  const std::size_t n = selected.size();
  PatchGraph g;
  g.slide_id = bag.slide_id;
  g.label = bag.label;
  g.adjacency = Adjacency(n);
  const std::size_t width = features.dim(1);
  g.node_features = Tensor<float>({n, width});
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t p = selected[i];
    if (p >= bag.coords.size()) throw UserError("build_graph: selected index out of range");
    g.patch_ids.push_back(p);
    g.coords.push_back(bag.coords[p]);
    std::copy(features.row(p).begin(), features.row(p).end(), g.node_features.row(i).begin());
  }

  const std::size_t kk = std::min(k, n - 1);
  std::vector<std::size_t> others;
  std::vector<double> dist(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const double dx = g.coords[i].x - g.coords[j].x, dy = g.coords[i].y - g.coords[j].y;
      dist[j] = dx * dx + dy * dy;
    }
    others.clear();
    for (std::size_t j = 0; j < n; ++j)
      if (j != i) others.push_back(j);
    std::partial_sort(others.begin(), others.begin() + static_cast<std::ptrdiff_t>(kk), others.end(),
                      [&](std::size_t a, std::size_t b) { return dist[a] < dist[b] || (dist[a] == dist[b] && a < b); });
    for (std::size_t r = 0; r < kk; ++r) g.adjacency.connect(i, others[r]);
  }
  return g;
}

PatchGraph canonical_order(const PatchGraph& g) {
  std::vector<std::size_t> order(g.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return g.patch_ids[a] < g.patch_ids[b]; });
  PatchGraph out;
  out.slide_id = g.slide_id;
  out.label = g.label;
  out.adjacency = g.adjacency.induced(order);
  const std::size_t width = g.node_features.dim(1);
  out.node_features = Tensor<float>({g.size(), width});
  for (std::size_t i = 0; i < order.size(); ++i) {
    out.patch_ids.push_back(g.patch_ids[order[i]]);
    if (!g.coords.empty()) out.coords.push_back(g.coords[order[i]]);
    std::copy(g.node_features.row(order[i]).begin(), g.node_features.row(order[i]).end(),
              out.node_features.row(i).begin());
  }
  return out;
}

void write_graph(const std::filesystem::path& dir, const PatchGraph& g) {
  std::filesystem::create_directories(dir);
  CsvTable edges{{"src", "dst"}, {}};
  for (auto [i, j] : g.adjacency.edges()) edges.rows.push_back({std::to_string(i), std::to_string(j)});
  write_csv(dir / "graph.csv", edges);
  CsvTable nodes{{"node", "patch_id"}, {}};
  for (std::size_t i = 0; i < g.size(); ++i) nodes.rows.push_back({std::to_string(i), std::to_string(g.patch_ids[i])});
  write_csv(dir / "nodes.csv", nodes);
  write_features(dir / "features.milf", g.node_features);
}

PatchGraph read_graph(const std::filesystem::path& dir, const std::string& slide_id, std::size_t label,
                      std::span<const Point> patch_centers) {
  PatchGraph g;
  g.slide_id = slide_id;
  g.label = label;
  const auto nodes = read_csv(dir / "nodes.csv", {"node", "patch_id"});
  for (std::size_t i = 0; i < nodes.rows.size(); ++i) {
    if (static_cast<std::size_t>(parse_long(nodes.rows[i][0], "node")) != i)
      throw UserError((dir / "nodes.csv").string() + ": node indices must be 0..n-1 in order");
    const auto pid = static_cast<std::size_t>(parse_long(nodes.rows[i][1], "patch_id"));
    g.patch_ids.push_back(pid);
    if (!patch_centers.empty()) {
      if (pid >= patch_centers.size()) throw UserError("graph node refers to unknown patch " + std::to_string(pid));
      g.coords.push_back(patch_centers[pid]);
    }
  }
  g.node_features = read_features(dir / "features.milf");
  if (g.node_features.dim(0) != g.size())
    throw UserError((dir / "features.milf").string() + ": row count does not match nodes.csv");
  g.adjacency = Adjacency(g.size());
  const auto edges = read_csv(dir / "graph.csv", {"src", "dst"});
  for (const auto& r : edges.rows) {
    const auto s = static_cast<std::size_t>(parse_long(r[0], "src"));
    const auto d = static_cast<std::size_t>(parse_long(r[1], "dst"));
    if (s >= d || d >= g.size()) throw UserError((dir / "graph.csv").string() + ": invalid edge " + r[0] + "," + r[1]);
    g.adjacency.connect(s, d);
  }
  return g;
}

}  // namespace milg
