#include <doctest.h>

#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include "milg/cli.hpp"
#include "milg/feature_store.hpp"
#include "milg/workspace.hpp"
#include "test_util.hpp"

using namespace milg;

namespace {

int run(const std::vector<std::string>& args, std::string* err = nullptr) {
  std::ostringstream captured;
  auto* old = std::cerr.rdbuf(captured.rdbuf());
  std::vector<std::string> full = args;
  full.push_back("--quiet");
  const int code = cli::dispatch(full);
  std::cerr.rdbuf(old);
  if (err) *err = captured.str();
  return code;
}

std::map<std::string, std::string> tree(const std::filesystem::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : std::filesystem::recursive_directory_iterator(root)) {
    if (!e.is_regular_file()) continue;
    std::ifstream is(e.path(), std::ios::binary);
    std::ostringstream ss;
    ss << is.rdbuf();
    out[std::filesystem::relative(e.path(), root).generic_string()] = ss.str();
  }
  return out;
}

void full_pipeline(const std::filesystem::path& ws) {
  const std::string out = ws.string();
  REQUIRE(run({"synth", "--classes", "2", "--bags", "8", "--grid", "4", "--seed", "3", "--out", out}) == 0);
  REQUIRE(run({"tile", "--out", out}) == 0);
  REQUIRE(run({"train-ae", "--epochs", "1", "--max-patches", "32", "--latent-dim", "8", "--seed", "3", "--out", out}) == 0);
  REQUIRE(run({"featurize", "--out", out}) == 0);
  REQUIRE(run({"train-mil", "--epochs", "2", "--proj-dim", "8", "--att-dim", "4", "--seed", "3", "--out", out}) == 0);
  REQUIRE(run({"score", "--top-s", "50", "--out", out}) == 0);
  REQUIRE(run({"build-graph", "--knn-k", "3", "--out", out}) == 0);
  REQUIRE(run({"train-gcn", "--epochs", "2", "--asg-modules", "2", "--hidden", "8", "--seed", "3", "--out", out}) == 0);
  REQUIRE(run({"eval", "--out", out}) == 0);
  REQUIRE(run({"heatmap", "--out", out}) == 0);
}

}  // namespace

TEST_CASE("usage errors exit 1") {
  std::string err;
  CHECK(run({}, &err) == 1);
  CHECK(run({"frobnicate"}, &err) == 1);
  CHECK(err.find("Usage") != std::string::npos);
  CHECK(run({"tile", "--no-such-flag"}, &err) == 1);
  CHECK(err.find("--no-such-flag") != std::string::npos);
  CHECK(run({"--help"}) == 0);
}

TEST_CASE("eval without a trained graph network reports the missing artifact") {
  testutil::TempDir dir("cli_eval");
  REQUIRE(run({"synth", "--bags", "4", "--grid", "2", "--out", dir.path().string()}) == 0);
  std::string err;
  CHECK(run({"eval", "--out", dir.path().string()}, &err) == 1);
  CHECK(err.find("missing artifact") != std::string::npos);
  CHECK(err.find("asg.ckpt") != std::string::npos);
  CHECK(run({"tile", "--out", (dir / "nowhere").string()}, &err) == 1);
  CHECK(err.find("manifest.csv") != std::string::npos);
}

TEST_CASE("synth is byte-identical for the same seed") {
  testutil::TempDir a("cli_synth_a"), b("cli_synth_b");
  REQUIRE(run({"synth", "--classes", "4", "--bags", "12", "--seed", "7", "--out", a.path().string()}) == 0);
  REQUIRE(run({"synth", "--classes", "4", "--bags", "12", "--seed", "7", "--out", b.path().string()}) == 0);
  CHECK(tree(a.path()) == tree(b.path()));
  CHECK(tree(a.path()).size() == 1 + 12 + 12);
}

TEST_CASE("full pipeline runs and is reproducible") {
  testutil::TempDir a("cli_full_a"), b("cli_full_b");
  full_pipeline(a.path());
  full_pipeline(b.path());
  const auto ta = tree(a.path()), tb = tree(b.path());
  CHECK(ta.size() == tb.size());
  for (const auto& [name, bytes] : ta) {
    INFO(name);
    CHECK(tb.count(name) == 1);
    if (tb.count(name)) CHECK(tb.at(name) == bytes);
  }
  for (const char* f : {"models/autoencoder.ckpt", "models/mil.ckpt", "models/asg.ckpt", "logs/mil.csv",
                        "logs/asg.csv", "reports/metrics.json", "reports/confusion.csv",
                        "tiles/slide_0000/scores.csv", "graphs/slide_0000/graph.csv",
                        "heatmaps/slide_0000_attention.ppm", "heatmaps/slide_0000_graph.ppm"})
    CHECK(ta.count(f) == 1);
  const auto scores = read_scores(a / "tiles/slide_0003/scores.csv");
  CHECK(std::count_if(scores.begin(), scores.end(), [](const ScoreRow& s) { return s.selected; }) == 8);
}

TEST_CASE("score --top-s 60 selects 6 of 10 patches") {
  testutil::TempDir dir("cli_score");
  const auto ws = dir.path();
  // Two hand-made 5x2-patch slides with imported features.
  std::vector<ManifestRow> rows;
  Rng rng(5);
  for (int s = 0; s < 2; ++s) {
    const std::string id = "s" + std::to_string(s);
    RgbImage img(5 * 32, 2 * 32, {150, 100, 150});
    write_ppm(ws / (id + ".ppm"), img);
    rows.push_back({id, id + ".ppm", static_cast<std::size_t>(s)});
  }
  write_manifest(ws / "manifest.csv", rows);
  const std::string out = ws.string();
  REQUIRE(run({"tile", "--out", out}) == 0);
  for (const auto& r : rows) write_features(ws / "import" / (r.slide_id + ".milf"), testutil::random_tensor<float>({10, 4}, rng));
  REQUIRE(run({"featurize", "--import", (ws / "import").string(), "--out", out}) == 0);
  REQUIRE(run({"train-mil", "--epochs", "1", "--out", out}) == 0);
  REQUIRE(run({"score", "--top-s", "60", "--out", out}) == 0);
  const auto scores = read_scores(ws / "tiles/s0/scores.csv");
  REQUIRE(scores.size() == 10);
  CHECK(std::count_if(scores.begin(), scores.end(), [](const ScoreRow& s) { return s.selected; }) == 6);

  std::string err;
  write_features(ws / "bad.milf", Tensor<float>({3, 4}));
  CHECK(run({"featurize", "--import", (ws / "bad.milf").string(), "--slide", "s0", "--out", out}, &err) == 1);
  CHECK(err.find("3 rows for 10 patches") != std::string::npos);
}

TEST_CASE("cross-validated eval writes reports") {
  testutil::TempDir dir("cli_cv");
  const std::string out = dir.path().string();
  REQUIRE(run({"synth", "--classes", "2", "--bags", "6", "--grid", "4", "--seed", "1", "--out", out}) == 0);
  REQUIRE(run({"tile", "--out", out}) == 0);
  REQUIRE(run({"train-ae", "--epochs", "1", "--max-patches", "16", "--latent-dim", "8", "--out", out}) == 0);
  REQUIRE(run({"featurize", "--out", out}) == 0);
  REQUIRE(run({"eval", "--cv", "3", "--mil-epochs", "2", "--gcn-epochs", "2", "--asg-modules", "2", "--hidden", "8",
               "--proj-dim", "8", "--att-dim", "4", "--out", out}) == 0);
  CHECK(std::filesystem::exists(dir / "reports/metrics.json"));
  CHECK(std::filesystem::exists(dir / "reports/cv.json"));
  REQUIRE(run({"sweep", "--axis", "K", "--values", "2,3", "--folds", "3", "--mil-epochs", "1", "--gcn-epochs", "1",
               "--asg-modules", "1", "--hidden", "8", "--proj-dim", "8", "--att-dim", "4", "--out", out}) == 0);
  std::ifstream sw(dir / "reports/sweep.csv");
  std::string header, line;
  std::getline(sw, header);
  CHECK(header == "axis,value,accuracy,f1,sensitivity,precision,kappa");
  int n = 0;
  while (std::getline(sw, line)) ++n;
  CHECK(n == 2);
  std::string err;
  CHECK(run({"eval", "--cv", "4", "--out", out}, &err) == 1);
  CHECK(err.find("class counts") != std::string::npos);
}
