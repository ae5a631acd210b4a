#include "milg/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <fstream>
#include <iostream>
#include <optional>

#include "milg/asg_network.hpp"
#include "milg/autoencoder.hpp"
#include "milg/csv.hpp"
#include "milg/error.hpp"
#include "milg/feature_store.hpp"
#include "milg/heatmap.hpp"
#include "milg/log.hpp"
#include "milg/parallel.hpp"
#include "milg/pipeline.hpp"
#include "milg/rng.hpp"
#include "milg/sweep.hpp"
#include "milg/synthetic.hpp"
#include "milg/tiling.hpp"
#include "milg/workspace.hpp"

namespace milg::cli {

namespace {

struct Options {
  // global
  std::uint64_t seed = 0;
  std::size_t patch_size = 32;
  double tissue_z = 50.0;
  std::size_t latent_dim = 64;
  std::size_t proj_dim = 64;
  std::size_t att_dim = 32;
  double top_s = 60.0;
  std::size_t knn_k = 10;
  std::size_t asg_modules = 8;
  std::size_t hidden = 64;
  double pool_ratio = 0.8;
  std::size_t classes = 0;  // 0: infer from the manifest
  std::string out = "workspace";
  bool quiet = false;

  // synth
  std::size_t bags = 200;
  std::size_t grid = 8;
  std::string variant = "motif";
  double fraction = 0.25;
  double secondary = 0.125;
  double noise = 0.0;

  // single-stage training
  std::size_t epochs = 0;  // 0: stage default
  std::size_t batch = 0;
  double lr = 0.0;
  std::string optimizer;
  std::size_t max_patches = 2048;

  // featurize
  std::string import_path;
  std::string slide;

  // eval / sweep
  std::size_t cv = 0;
  std::size_t folds = 5;
  std::size_t mil_epochs = 100;
  double mil_lr = 1e-2;
  std::string mil_optimizer = "sgd";
  std::size_t gcn_epochs = 200;
  double gcn_lr = 1e-3;
  std::string gcn_optimizer = "sgd";
  std::size_t pipeline_batch = 8;
  bool raw_node_features = false;
  bool quadratic_kappa = false;
  std::string axis;
  std::vector<double> values;
};

std::size_t resolve_classes(const Options& o, const std::vector<ManifestRow>& rows) {
  if (o.classes > 0) return o.classes;
  std::size_t c = 2;
  for (const auto& r : rows) c = std::max(c, r.label + 1);
  return c;
}

template <typename T>
T or_default(T v, T fallback) {
  return v == T{} ? fallback : v;
}

OptimizerConfig optimizer_from(const std::string& kind, double lr) {
  OptimizerConfig c;
  c.kind = parse_optimizer_kind(kind);
  c.lr = lr;
  return c;
}

PipelineConfig pipeline_from(const Options& o, std::size_t n_classes) {
  PipelineConfig p;
  p.mil.proj_dim = o.proj_dim;
  p.mil.att_dim = o.att_dim;
  p.mil_train = {o.mil_epochs, o.pipeline_batch, optimizer_from(o.mil_optimizer, o.mil_lr), 0};
  p.top_s = o.top_s;
  p.knn_k = o.knn_k;
  p.asg.num_modules = o.asg_modules;
  p.asg.hidden = o.hidden;
  p.asg.pool_ratio = o.pool_ratio;
  p.asg_train = {o.gcn_epochs, o.pipeline_batch, optimizer_from(o.gcn_optimizer, o.gcn_lr), 0};
  p.raw_node_features = o.raw_node_features;
  p.n_classes = n_classes;
  p.seed = o.seed;
  return p;
}

std::vector<RgbImage> load_patches(const Workspace& ws, const ManifestRow& row) {
  const auto dir = ws.tiles(row.slide_id);
  Workspace::require(dir / "coords.csv", "tile");
  return read_patch_images(dir, read_coords(dir / "coords.csv"));
}

std::vector<PatchGraph> load_graphs(const Workspace& ws, const std::vector<ManifestRow>& rows,
                                    std::size_t patch_size) {
  std::vector<PatchGraph> graphs(rows.size());
  parallel_for(rows.size(), [&](std::size_t i) {
    const auto& r = rows[i];
    Workspace::require(ws.graphs(r.slide_id) / "graph.csv", "build-graph");
    const auto centers = patch_centers(read_coords(ws.tiles(r.slide_id) / "coords.csv"), patch_size);
    graphs[i] = read_graph(ws.graphs(r.slide_id), r.slide_id, r.label, centers);
  });
  return graphs;
}

void report_metrics(const Workspace& ws, const MetricsReport& m) {
  write_metrics_json(ws.report("metrics.json"), m);
  write_confusion_csv(ws.report("confusion.csv"), m);
  log::info("accuracy=" + format_number(m.accuracy) + " f1=" + format_number(m.macro_f1) +
            " kappa=" + format_number(m.cohen_kappa));
}

// ---- subcommands ---------------------------------------------------------

void cmd_synth(const Options& o) {
  SyntheticSpec spec;
  spec.n_bags = o.bags;
  spec.grid_size = o.grid;
  spec.patch_size = o.patch_size;
  spec.n_classes = o.classes == 0 ? 4 : o.classes;
  spec.motif_region_fraction = o.fraction;
  spec.secondary_fraction = o.secondary;
  spec.noise_level = o.noise;
  spec.seed = o.seed;
  spec.variant = parse_synthetic_variant(o.variant);
  spec.validate();
  std::vector<SyntheticSlide> slides(spec.n_bags);
  parallel_for(spec.n_bags, [&](std::size_t i) { slides[i] = generate_slide(spec, i); });
  write_synthetic(o.out, slides);
  log::info("wrote " + std::to_string(slides.size()) + " slides to " + o.out);
}

void cmd_tile(const Options& o) {
  const Workspace ws(o.out);
  const auto rows = ws.slides();
  TilingConfig cfg;
  cfg.patch_size = o.patch_size;
  cfg.tissue_threshold = o.tissue_z;
  parallel_for(rows.size(), [&](std::size_t i) {
    const auto& r = rows[i];
    const RgbImage img = read_ppm(ws.slide_image(r));
    const TileResult res = tile(img, r.slide_id, cfg);
    if (res.image_too_small) log::warn("slide '" + r.slide_id + "' is smaller than one patch");
    else if (res.patches.empty()) log::warn("slide '" + r.slide_id + "' has no tissue patches at z=" + format_number(o.tissue_z));
    std::filesystem::remove_all(ws.tiles(r.slide_id));
    write_tiles(ws.tiles(r.slide_id), res);
  });
  log::info("tiled " + std::to_string(rows.size()) + " slides");
}

void cmd_train_ae(const Options& o) {
  const Workspace ws(o.out);
  const auto rows = ws.slides();
  std::vector<std::vector<RgbImage>> per_slide(rows.size());
  parallel_for(rows.size(), [&](std::size_t i) { per_slide[i] = load_patches(ws, rows[i]); });
  std::vector<RgbImage> patches;
  for (auto& v : per_slide) std::move(v.begin(), v.end(), std::back_inserter(patches));
  if (patches.empty()) throw UserError("no patches to train on; check the tissue threshold");

  EncoderConfig cfg;
  cfg.patch_size = o.patch_size;
  cfg.latent_dim = o.latent_dim;
  cfg.epochs = or_default<std::size_t>(o.epochs, 50);
  cfg.batch_size = or_default<std::size_t>(o.batch, 32);
  cfg.optimizer = optimizer_from(o.optimizer.empty() ? "adam" : o.optimizer, or_default(o.lr, 2e-3));
  cfg.max_train_patches = o.max_patches;
  cfg.seed = o.seed;
  AeTrainLog log;
  const auto model = train_autoencoder(patches, cfg, &log);
  model.to_checkpoint().save(ws.model("autoencoder"));
  CsvTable t{{"epoch", "loss"}, {{"0", format_number(log.initial_loss)}}};
  for (std::size_t e = 0; e < log.epoch_loss.size(); ++e)
    t.rows.push_back({std::to_string(e + 1), format_number(log.epoch_loss[e])});
  write_csv(ws.log("autoencoder"), t);
}

void cmd_featurize(const Options& o) {
  const Workspace ws(o.out);
  auto rows = ws.slides();
  if (!o.slide.empty()) {
    std::erase_if(rows, [&](const ManifestRow& r) { return r.slide_id != o.slide; });
    if (rows.empty()) throw UserError("slide '" + o.slide + "' is not in the manifest");
  }

  if (!o.import_path.empty()) {
    const std::filesystem::path src(o.import_path);
    const bool is_dir = std::filesystem::is_directory(src);
    if (!is_dir && rows.size() != 1)
      throw UserError("--import FILE needs a single slide; pass --slide ID or a directory of <slide_id>.milf files");
    for (const auto& r : rows) {
      const auto file = is_dir ? src / (r.slide_id + ".milf") : src;
      Workspace::require(file, "an external feature extractor");
      const Tensor<float> f = read_features(file);
      const auto coords = read_coords(ws.tiles(r.slide_id) / "coords.csv");
      if (f.dim(0) != coords.size())
        throw UserError(file.string() + ": " + std::to_string(f.dim(0)) + " rows for " +
                        std::to_string(coords.size()) + " patches of '" + r.slide_id + "'");
      write_features(ws.tiles(r.slide_id) / "features.milf", f);
    }
    log::info("imported features for " + std::to_string(rows.size()) + " slides");
    return;
  }

  Workspace::require(ws.model("autoencoder"), "train-ae");
  const auto model = Autoencoder<float>::from_checkpoint(Checkpoint::load(ws.model("autoencoder")));
  parallel_for(rows.size(), [&](std::size_t i) {
    const auto patches = load_patches(ws, rows[i]);
    write_features(ws.tiles(rows[i].slide_id) / "features.milf", featurize(patches, model));
  });
  log::info("featurized " + std::to_string(rows.size()) + " slides");
}

void cmd_train_mil(const Options& o) {
  const Workspace ws(o.out);
  const auto rows = ws.slides(o.classes);
  const auto bags = load_bags(ws, rows, o.patch_size);
  if (bags.empty()) throw UserError("manifest lists no slides");
  MilConfig cfg;
  cfg.input_dim = bags.front().features.dim(1);
  cfg.proj_dim = o.proj_dim;
  cfg.att_dim = o.att_dim;
  cfg.n_classes = resolve_classes(o, rows);
  cfg.seed = o.seed;
  TrainConfig train{or_default<std::size_t>(o.epochs, 100), or_default<std::size_t>(o.batch, 8),
                    optimizer_from(o.optimizer.empty() ? "sgd" : o.optimizer, or_default(o.lr, 1e-2)),
                    derive_seed(o.seed, 1)};
  std::vector<EpochStat> log;
  const auto model = train_mil(bags, cfg, train, &log);
  model.to_checkpoint().save(ws.model("mil"));
  write_epoch_log(ws.log("mil"), log);
}

void cmd_score(const Options& o) {
  const Workspace ws(o.out);
  const auto rows = ws.slides();
  Workspace::require(ws.model("mil"), "train-mil");
  const auto mil = MilModel<float>::from_checkpoint(Checkpoint::load(ws.model("mil")));
  if (!(o.top_s > 0.0 && o.top_s <= 100.0)) throw UserError("--top-s must lie in (0, 100]");
  parallel_for(rows.size(), [&](std::size_t i) {
    const Bag bag = load_bag(ws, rows[i], o.patch_size);
    const auto att = mil.attend(bag.features);
    const auto selected = select_top(att.scores, o.top_s);
    std::vector<ScoreRow> out(bag.size());
    for (std::size_t h = 0; h < out.size(); ++h) out[h] = {h, att.scores[h], false};
    for (auto h : selected) out[h].selected = true;
    write_scores(ws.tiles(rows[i].slide_id) / "scores.csv", out);
  });
  log::info("scored " + std::to_string(rows.size()) + " slides at S=" + format_number(o.top_s) + "%");
}

void cmd_build_graph(const Options& o) {
  const Workspace ws(o.out);
  const auto rows = ws.slides();
  std::optional<MilModel<float>> mil;
  if (!o.raw_node_features) {
    Workspace::require(ws.model("mil"), "train-mil");
    mil.emplace(MilModel<float>::from_checkpoint(Checkpoint::load(ws.model("mil"))));
  }
  parallel_for(rows.size(), [&](std::size_t i) {
    const auto& r = rows[i];
    const Bag bag = load_bag(ws, r, o.patch_size);
    Workspace::require(ws.tiles(r.slide_id) / "scores.csv", "score");
    const auto scores = read_scores(ws.tiles(r.slide_id) / "scores.csv");
    if (scores.size() != bag.size())
      throw UserError("slide '" + r.slide_id + "': scores.csv has " + std::to_string(scores.size()) +
                      " rows for " + std::to_string(bag.size()) + " patches");
    std::vector<std::size_t> selected;
    for (std::size_t h = 0; h < scores.size(); ++h) {
      if (scores[h].patch_id != h) throw UserError("slide '" + r.slide_id + "': scores.csv is not in patch order");
      if (scores[h].selected) selected.push_back(h);
    }
    if (selected.empty()) throw UserError("slide '" + r.slide_id + "' has no selected patches");
    const Tensor<float> nodes = mil ? mil->project(bag.features) : bag.features;
    write_graph(ws.graphs(r.slide_id), build_graph(bag, selected, nodes, o.knn_k));
  });
  log::info("built " + std::to_string(rows.size()) + " graphs with K=" + std::to_string(o.knn_k));
}

void cmd_train_gcn(const Options& o) {
  const Workspace ws(o.out);
  const auto rows = ws.slides(o.classes);
  const auto graphs = load_graphs(ws, rows, o.patch_size);
  if (graphs.empty()) throw UserError("manifest lists no slides");
  AsgConfig cfg;
  cfg.num_modules = o.asg_modules;
  cfg.hidden = o.hidden;
  cfg.pool_ratio = o.pool_ratio;
  cfg.n_classes = resolve_classes(o, rows);
  cfg.input_dim = graphs.front().node_features.dim(1);
  cfg.seed = o.seed;
  TrainConfig train{or_default<std::size_t>(o.epochs, 200), or_default<std::size_t>(o.batch, 8),
                    optimizer_from(o.optimizer.empty() ? "sgd" : o.optimizer, or_default(o.lr, 1e-3)),
                    derive_seed(o.seed, 2)};
  std::vector<EpochStat> log;
  const auto net = train_gcn(graphs, cfg, train, &log);
  net.to_checkpoint().save(ws.model("asg"));
  write_epoch_log(ws.log("asg"), log);
}

void cmd_eval(const Options& o) {
  const Workspace ws(o.out);
  const auto rows = ws.slides(o.classes);
  const std::size_t n_classes = resolve_classes(o, rows);
  std::vector<std::size_t> truth;
  for (const auto& r : rows) truth.push_back(r.label);

  if (o.cv > 0) {
    const auto bags = load_bags(ws, rows, o.patch_size);
    const CvReport cv = kfold_run(bags, o.cv, pipeline_from(o, n_classes));
    report_metrics(ws, compute_metrics(truth, cv.oof_predictions, n_classes, o.quadratic_kappa));
    nlohmann::json j;
    j["folds"] = nlohmann::json::array();
    for (const auto& f : cv.folds)
      j["folds"].push_back({{"fold", f.fold},
                            {"test_indices", f.test_indices},
                            {"metrics", f.metrics.to_json()},
                            {"attention_metrics", f.attention_metrics.to_json()}});
    j["aggregate"] = cv.aggregate.to_json();
    j["attention_aggregate"] = cv.attention_aggregate.to_json();
    std::ofstream(ws.report("cv.json")) << j.dump(2) << '\n';
    log::info("attention-only accuracy=" + format_number(cv.attention_aggregate.accuracy));
    return;
  }

  Workspace::require(ws.model("asg"), "train-gcn");
  const auto net = AsgNetwork<float>::from_checkpoint(Checkpoint::load(ws.model("asg")));
  const auto graphs = load_graphs(ws, rows, o.patch_size);
  std::vector<std::size_t> pred(graphs.size());
  parallel_for(graphs.size(), [&](std::size_t i) { pred[i] = net.predict(graphs[i]); });
  report_metrics(ws, compute_metrics(truth, pred, std::max(n_classes, net.config().n_classes), o.quadratic_kappa));
}

void cmd_sweep(const Options& o) {
  const Workspace ws(o.out);
  const auto rows = ws.slides(o.classes);
  const auto bags = load_bags(ws, rows, o.patch_size);
  const auto axis = parse_sweep_axis(o.axis);
  if (o.values.empty()) throw UserError("--values needs at least one value");
  const auto result = sweep(axis, o.values, bags, o.folds, pipeline_from(o, resolve_classes(o, rows)));
  write_sweep_csv(ws.report("sweep.csv"), result);
}

void cmd_heatmap(const Options& o) {
  const Workspace ws(o.out);
  const auto rows = ws.slides();
  parallel_for(rows.size(), [&](std::size_t i) {
    const auto& r = rows[i];
    const auto dir = ws.tiles(r.slide_id);
    Workspace::require(dir / "scores.csv", "score");
    const RgbImage slide = read_ppm(ws.slide_image(r));
    const auto coords = read_coords(dir / "coords.csv");
    write_ppm(ws.heatmaps() / (r.slide_id + "_attention.ppm"),
              render_attention_overlay(slide, coords, read_scores(dir / "scores.csv"), o.patch_size));
    if (std::filesystem::exists(ws.graphs(r.slide_id) / "graph.csv")) {
      const auto g = read_graph(ws.graphs(r.slide_id), r.slide_id, r.label, patch_centers(coords, o.patch_size));
      write_ppm(ws.heatmaps() / (r.slide_id + "_graph.ppm"), render_graph_overlay(slide, g));
    }
  });
  log::info("rendered heatmaps for " + std::to_string(rows.size()) + " slides");
}

void add_pipeline_options(CLI::App* sub, Options& o) {
  sub->add_option("--mil-epochs", o.mil_epochs, "Stage-1 epochs per fold")->capture_default_str();
  sub->add_option("--mil-lr", o.mil_lr, "Stage-1 learning rate")->capture_default_str();
  sub->add_option("--mil-optimizer", o.mil_optimizer, "sgd or adam")->capture_default_str();
  sub->add_option("--gcn-epochs", o.gcn_epochs, "Stage-2 epochs per fold")->capture_default_str();
  sub->add_option("--gcn-lr", o.gcn_lr, "Stage-2 learning rate")->capture_default_str();
  sub->add_option("--gcn-optimizer", o.gcn_optimizer, "sgd or adam")->capture_default_str();
  sub->add_option("--batch", o.pipeline_batch, "Bags per mini-batch")->capture_default_str();
  sub->add_flag("--raw-node-features", o.raw_node_features, "Use patch latents as node features");
}

void add_training_options(CLI::App* sub, Options& o) {
  sub->add_option("--epochs", o.epochs, "Training epochs");
  sub->add_option("--batch", o.batch, "Mini-batch size");
  sub->add_option("--lr", o.lr, "Learning rate");
  sub->add_option("--optimizer", o.optimizer, "sgd or adam");
}

}  // namespace

int dispatch(const std::vector<std::string>& args) {
  Options o;
  CLI::App app{"Two-stage attention MIL and graph network for slide grading", "milg"};
  app.require_subcommand(1, 1);
  app.fallthrough();

  app.add_option("--seed", o.seed, "Seed for all randomness")->capture_default_str();
  app.add_option("--patch-size", o.patch_size, "Patch side in pixels")->capture_default_str();
  app.add_option("--tissue-z", o.tissue_z, "Minimum tissue percentage per patch")->capture_default_str();
  app.add_option("--latent-dim", o.latent_dim, "Autoencoder latent size")->capture_default_str();
  app.add_option("--proj-dim", o.proj_dim, "Attention projection size")->capture_default_str();
  app.add_option("--att-dim", o.att_dim, "Attention gate size")->capture_default_str();
  app.add_option("--top-s", o.top_s, "Percentage of top-attention patches kept")->capture_default_str();
  app.add_option("--knn-k", o.knn_k, "Neighbours per graph node")->capture_default_str();
  app.add_option("--asg-modules", o.asg_modules, "Number of GCN + pooling modules")->capture_default_str();
  app.add_option("--hidden", o.hidden, "GCN feature width")->capture_default_str();
  app.add_option("--pool-ratio", o.pool_ratio, "Share of nodes kept per pooling")->capture_default_str();
  app.add_option("--classes", o.classes, "Number of classes (default: from the manifest; synth: 4)");
  app.add_option("--out", o.out, "Workspace directory")->capture_default_str();
  app.add_flag("--quiet", o.quiet, "Suppress progress messages");

  std::vector<std::pair<CLI::App*, void (*)(const Options&)>> handlers;

  auto* synth = app.add_subcommand("synth", "Generate planted-motif synthetic slides");
  synth->add_option("--bags", o.bags, "Number of slides")->capture_default_str();
  synth->add_option("--grid", o.grid, "Patches per slide side")->capture_default_str();
  synth->add_option("--variant", o.variant, "motif, mixture or adjacency")->capture_default_str();
  synth->add_option("--fraction", o.fraction, "Share of cells in the motif region")->capture_default_str();
  synth->add_option("--secondary", o.secondary, "Mixture: share of the secondary motif")->capture_default_str();
  synth->add_option("--noise", o.noise, "Pixel noise std as a fraction of 255")->capture_default_str();
  handlers.emplace_back(synth, cmd_synth);

  handlers.emplace_back(app.add_subcommand("tile", "Cut slides into tissue patches"), cmd_tile);

  auto* train_ae = app.add_subcommand("train-ae", "Train the patch autoencoder");
  add_training_options(train_ae, o);
  train_ae->add_option("--max-patches", o.max_patches, "Training patch cap (0 = all)")->capture_default_str();
  handlers.emplace_back(train_ae, cmd_train_ae);

  auto* feat = app.add_subcommand("featurize", "Encode patches into feature files");
  feat->add_option("--import", o.import_path, "Feature file or directory of <slide_id>.milf to import");
  feat->add_option("--slide", o.slide, "Only this slide");
  handlers.emplace_back(feat, cmd_featurize);

  auto* train_mil = app.add_subcommand("train-mil", "Train the attention MIL classifier");
  add_training_options(train_mil, o);
  handlers.emplace_back(train_mil, cmd_train_mil);

  handlers.emplace_back(app.add_subcommand("score", "Write attention scores and top-S selections"), cmd_score);

  auto* bg = app.add_subcommand("build-graph", "Build KNN graphs over selected patches");
  bg->add_flag("--raw-node-features", o.raw_node_features, "Use patch latents as node features");
  handlers.emplace_back(bg, cmd_build_graph);

  auto* train_gcn = app.add_subcommand("train-gcn", "Train the graph network");
  add_training_options(train_gcn, o);
  handlers.emplace_back(train_gcn, cmd_train_gcn);

  auto* eval = app.add_subcommand("eval", "Evaluate the trained graph network, or cross-validate with --cv");
  eval->add_option("--cv", o.cv, "Run stratified k-fold cross-validation of the full pipeline");
  eval->add_flag("--quadratic-kappa", o.quadratic_kappa, "Also report quadratic-weighted kappa");
  add_pipeline_options(eval, o);
  handlers.emplace_back(eval, cmd_eval);

  auto* sw = app.add_subcommand("sweep", "Cross-validate over one hyperparameter");
  sw->add_option("--axis", o.axis, "asg_modules, K or S_percent")->required();
  sw->add_option("--values", o.values, "Comma-separated values")->required()->delimiter(',');
  sw->add_option("--folds", o.folds, "Folds per run")->capture_default_str();
  add_pipeline_options(sw, o);
  handlers.emplace_back(sw, cmd_sweep);

  handlers.emplace_back(app.add_subcommand("heatmap", "Render attention and graph overlays"), cmd_heatmap);

  try {
    std::vector<std::string> rev(args.rbegin(), args.rend());
    app.parse(rev);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "milg: " << e.what() << "\n\n" << app.help();
    return 1;
  }

  log::set_quiet(o.quiet);
  try {
    for (const auto& [sub, fn] : handlers)
      if (sub->parsed()) fn(o);
    return 0;
  } catch (const UserError& e) {
    std::cerr << "milg: error: " << e.what() << '\n';
    return 1;
  } catch (const DimensionError& e) {
    std::cerr << "milg: error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "milg: internal error: " << e.what() << '\n';
    return 2;
  }
}

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return dispatch(args);
}

}  // namespace milg::cli
