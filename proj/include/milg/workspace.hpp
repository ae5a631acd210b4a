#pragma once
// On-disk layout shared by the CLI subcommands.
//
//   manifest.csv                  slide_id,path,label
//   slides/<id>.ppm
//   tiles/<id>/patch_*.ppm, coords.csv, features.milf, scores.csv
//   graphs/<id>/graph.csv, nodes.csv, features.milf
//   models/{autoencoder,mil,asg}.ckpt
//   logs/*.csv
//   reports/metrics.json, confusion.csv, sweep.csv
//   heatmaps/<id>_attention.ppm, <id>_graph.ppm

#include <filesystem>
#include <string>
#include <vector>

#include "milg/mil_attention.hpp"
#include "milg/tiling.hpp"

namespace milg {

struct ManifestRow {
  std::string slide_id;
  std::filesystem::path path;  // as written; relative paths resolve against the workspace
  std::size_t label = 0;
};

/// Throws UserError on duplicate ids or labels >= n_classes (n_classes 0 skips
/// the label check).
std::vector<ManifestRow> read_manifest(const std::filesystem::path& csv, std::size_t n_classes = 0);
void write_manifest(const std::filesystem::path& csv, const std::vector<ManifestRow>& rows);

/// One row of scores.csv.
struct ScoreRow {
  std::size_t patch_id = 0;
  double attention_score = 0.0;
  bool selected = false;
};

void write_scores(const std::filesystem::path& csv, const std::vector<ScoreRow>& rows);
std::vector<ScoreRow> read_scores(const std::filesystem::path& csv);

class Workspace {
 public:
  explicit Workspace(std::filesystem::path root) : root_(std::move(root)) {}

  const std::filesystem::path& root() const { return root_; }
  std::filesystem::path manifest() const { return root_ / "manifest.csv"; }
  std::filesystem::path slide_image(const ManifestRow& row) const;
  std::filesystem::path tiles(const std::string& id) const { return root_ / "tiles" / id; }
  std::filesystem::path graphs(const std::string& id) const { return root_ / "graphs" / id; }
  std::filesystem::path model(const std::string& name) const { return root_ / "models" / (name + ".ckpt"); }
  std::filesystem::path log(const std::string& name) const { return root_ / "logs" / (name + ".csv"); }
  std::filesystem::path report(const std::string& name) const { return root_ / "reports" / name; }
  std::filesystem::path heatmaps() const { return root_ / "heatmaps"; }

  /// Reads the manifest; a missing file is a user error naming the step that makes it.
  std::vector<ManifestRow> slides(std::size_t n_classes = 0) const;

  /// Requires `path` to exist, otherwise throws UserError naming `producer`.
  static void require(const std::filesystem::path& path, const std::string& producer);

 private:
  std::filesystem::path root_;
};

/// Patch centre = origin + patch_size / 2.
std::vector<Point> patch_centers(const std::vector<PatchCoord>& coords, std::size_t patch_size);

/// Bag of one slide from its tiles directory (coords.csv + features.milf).
Bag load_bag(const Workspace& ws, const ManifestRow& row, std::size_t patch_size);
std::vector<Bag> load_bags(const Workspace& ws, const std::vector<ManifestRow>& rows, std::size_t patch_size);

/// Training log with header epoch,loss,train_acc.
void write_epoch_log(const std::filesystem::path& csv, const std::vector<EpochStat>& log);

}  // namespace milg
