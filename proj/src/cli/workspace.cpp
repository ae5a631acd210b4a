#include "milg/workspace.hpp"

#include <set>

#include "milg/csv.hpp"
#include "milg/error.hpp"
#include "milg/feature_store.hpp"

namespace milg {

std::vector<ManifestRow> read_manifest(const std::filesystem::path& csv, std::size_t n_classes) {
  const auto t = read_csv(csv, {"slide_id", "path", "label"});
  std::vector<ManifestRow> rows;
  std::set<std::string> seen;
  for (const auto& r : t.rows) {
    ManifestRow m;
    m.slide_id = r[0];
    m.path = r[1];
    const long label = parse_long(r[2], "label");
    if (m.slide_id.empty()) throw UserError(csv.string() + ": empty slide_id");
    if (!seen.insert(m.slide_id).second) throw UserError(csv.string() + ": duplicate slide_id '" + m.slide_id + "'");
    if (label < 0 || (n_classes > 0 && static_cast<std::size_t>(label) >= n_classes))
      throw UserError(csv.string() + ": label " + r[2] + " of '" + m.slide_id + "' outside [0, " +
                      std::to_string(n_classes) + ")");
    m.label = static_cast<std::size_t>(label);
    rows.push_back(std::move(m));
  }
  return rows;
}

void write_manifest(const std::filesystem::path& csv, const std::vector<ManifestRow>& rows) {
  CsvTable t{{"slide_id", "path", "label"}, {}};
  for (const auto& r : rows) t.rows.push_back({r.slide_id, r.path.generic_string(), std::to_string(r.label)});
  write_csv(csv, t);
}

void write_scores(const std::filesystem::path& csv, const std::vector<ScoreRow>& rows) {
  CsvTable t{{"patch_id", "attention_score", "selected"}, {}};
  for (const auto& r : rows)
    t.rows.push_back({std::to_string(r.patch_id), format_number(r.attention_score), r.selected ? "1" : "0"});
  write_csv(csv, t);
}

std::vector<ScoreRow> read_scores(const std::filesystem::path& csv) {
  const auto t = read_csv(csv, {"patch_id", "attention_score", "selected"});
  std::vector<ScoreRow> rows;
  for (const auto& r : t.rows) {
    ScoreRow s;
    const long id = parse_long(r[0], "patch_id");
    if (id < 0) throw UserError(csv.string() + ": negative patch_id");
    s.patch_id = static_cast<std::size_t>(id);
    s.attention_score = parse_double(r[1], "attention_score");
    const long sel = parse_long(r[2], "selected");
    if (sel != 0 && sel != 1) throw UserError(csv.string() + ": selected must be 0 or 1");
    s.selected = sel == 1;
    rows.push_back(s);
  }
  return rows;
}

std::filesystem::path Workspace::slide_image(const ManifestRow& row) const {
  return row.path.is_absolute() ? row.path : root_ / row.path;
}

std::vector<ManifestRow> Workspace::slides(std::size_t n_classes) const {
  require(manifest(), "synth (or a hand-written manifest)");
  return read_manifest(manifest(), n_classes);
}

void Workspace::require(const std::filesystem::path& path, const std::string& producer) {
  if (!std::filesystem::exists(path))
    throw UserError("missing artifact " + path.string() + "; run `" + producer + "` first");
}

std::vector<Point> patch_centers(const std::vector<PatchCoord>& coords, std::size_t patch_size) {
  std::vector<Point> out;
  out.reserve(coords.size());
  const double half = static_cast<double>(patch_size) / 2.0;
  for (const auto& c : coords)
    out.push_back({static_cast<double>(c.origin_x) + half, static_cast<double>(c.origin_y) + half});
  return out;
}

Bag load_bag(const Workspace& ws, const ManifestRow& row, std::size_t patch_size) {
  const auto dir = ws.tiles(row.slide_id);
  Workspace::require(dir / "coords.csv", "tile");
  Workspace::require(dir / "features.milf", "featurize");
  const auto coords = read_coords(dir / "coords.csv");
  Bag bag;
  bag.slide_id = row.slide_id;
  bag.label = row.label;
  bag.features = read_features(dir / "features.milf");
  bag.coords = patch_centers(coords, patch_size);
  if (bag.features.dim(0) != coords.size())
    throw UserError("slide '" + row.slide_id + "': " + std::to_string(bag.features.dim(0)) + " feature rows for " +
                    std::to_string(coords.size()) + " patches");
  return bag;
}

std::vector<Bag> load_bags(const Workspace& ws, const std::vector<ManifestRow>& rows, std::size_t patch_size) {
  std::vector<Bag> bags;
  bags.reserve(rows.size());
  for (const auto& r : rows) bags.push_back(load_bag(ws, r, patch_size));
  return bags;
}

void write_epoch_log(const std::filesystem::path& csv, const std::vector<EpochStat>& log) {
  CsvTable t{{"epoch", "loss", "train_acc"}, {}};
  for (std::size_t e = 0; e < log.size(); ++e)
    t.rows.push_back({std::to_string(e + 1), format_number(log[e].loss), format_number(log[e].train_acc)});
  write_csv(csv, t);
}

}  // namespace milg
