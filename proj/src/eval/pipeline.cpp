#include "milg/pipeline.hpp"

#include <algorithm>
#include <optional>
#include <stdexcept>

#include "milg/kfold.hpp"
#include "milg/log.hpp"
#include "milg/parallel.hpp"
#include "milg/rng.hpp"

namespace milg {

PatchGraph bag_to_graph(const MilModel<float>& mil, const Bag& bag, const PipelineConfig& cfg) {
  const AttentionResult att = mil.attend(bag.features);
  const auto selected = select_top(att.scores, cfg.top_s);
  const Tensor<float> node_source = cfg.raw_node_features ? bag.features : mil.project(bag.features);
  return build_graph(bag, selected, node_source, cfg.knn_k);
}

namespace {

std::vector<Bag> subset(const std::vector<Bag>& bags, const std::vector<std::size_t>& idx) {
  std::vector<Bag> out;
  out.reserve(idx.size());
  for (auto i : idx) out.push_back(bags[i]);
  return out;
}

std::vector<std::vector<std::size_t>> make_folds(const std::vector<Bag>& bags, std::size_t k,
                                                 const PipelineConfig& cfg) {
  if (bags.empty()) throw UserError("kfold_run: no bags");
  std::vector<std::size_t> labels;
  for (const auto& b : bags) {
    b.validate(cfg.n_classes);
    labels.push_back(b.label);
  }
  return stratified_folds(labels, k, cfg.n_classes, cfg.seed);
}

std::vector<std::size_t> train_indices(const std::vector<std::vector<std::size_t>>& folds, std::size_t f) {
  std::vector<std::size_t> train;
  for (std::size_t g = 0; g < folds.size(); ++g)
    if (g != f) train.insert(train.end(), folds[g].begin(), folds[g].end());
  std::sort(train.begin(), train.end());
  return train;
}

}  // namespace

MilModel<float> train_fold_mil(const std::vector<Bag>& bags, const std::vector<std::size_t>& train,
                               const PipelineConfig& cfg, std::size_t fold_id) {
  if (bags.empty()) throw UserError("no bags to evaluate");
  MilConfig mil_cfg = cfg.mil;
  mil_cfg.input_dim = bags.front().features.dim(1);
  mil_cfg.n_classes = cfg.n_classes;
  mil_cfg.seed = derive_seed(cfg.seed, 1000 + fold_id);
  TrainConfig mil_train = cfg.mil_train;
  mil_train.seed = derive_seed(cfg.seed, 2000 + fold_id);
  return train_mil(subset(bags, train), mil_cfg, mil_train);
}

FoldReport run_fold(const std::vector<Bag>& bags, const std::vector<std::size_t>& train,
                    const std::vector<std::size_t>& test, const PipelineConfig& cfg, std::size_t fold_id,
                    const MilModel<float>* supplied) {
  if (bags.empty()) throw UserError("no bags to evaluate");
  const std::vector<Bag> train_bags = subset(bags, train);
  const MilModel<float> mil = supplied ? *supplied : train_fold_mil(bags, train, cfg, fold_id);

  std::vector<PatchGraph> train_graphs;
  train_graphs.reserve(train.size());
  for (const auto& b : train_bags) train_graphs.push_back(bag_to_graph(mil, b, cfg));

  AsgConfig asg_cfg = cfg.asg;
  asg_cfg.input_dim = train_graphs.front().node_features.dim(1);
  asg_cfg.n_classes = cfg.n_classes;
  asg_cfg.seed = derive_seed(cfg.seed, 3000 + fold_id);
  TrainConfig asg_train = cfg.asg_train;
  asg_train.seed = derive_seed(cfg.seed, 4000 + fold_id);
  const AsgNetwork<float> net = train_gcn(train_graphs, asg_cfg, asg_train);

  FoldReport r;
  r.fold = fold_id;
  r.test_indices = test;
  std::vector<std::size_t> truth;
  for (auto i : test) {
    const Bag& b = bags[i];
    r.attention_predictions.push_back(mil.attend(b.features).predicted());
    r.predictions.push_back(net.predict(bag_to_graph(mil, b, cfg)));
    truth.push_back(b.label);
  }
  r.metrics = compute_metrics(truth, r.predictions, cfg.n_classes);
  r.attention_metrics = compute_metrics(truth, r.attention_predictions, cfg.n_classes);
  log::info("fold " + std::to_string(fold_id) + ": accuracy=" + std::to_string(r.metrics.accuracy) +
            " attention-only=" + std::to_string(r.attention_metrics.accuracy));
  return r;
}

std::vector<MilModel<float>> kfold_stage1(const std::vector<Bag>& bags, std::size_t k, const PipelineConfig& cfg) {
  const auto folds = make_folds(bags, k, cfg);
  std::vector<std::optional<MilModel<float>>> slots(k);
  parallel_for(k, [&](std::size_t f) { slots[f].emplace(train_fold_mil(bags, train_indices(folds, f), cfg, f)); });
  std::vector<MilModel<float>> out;
  for (auto& s : slots) out.push_back(std::move(*s));
  return out;
}

CvReport kfold_run(const std::vector<Bag>& bags, std::size_t k, const PipelineConfig& cfg,
                   const std::vector<MilModel<float>>* stage1) {
  const auto folds = make_folds(bags, k, cfg);
  if (stage1 && stage1->size() != k)
    throw std::invalid_argument("kfold_run: " + std::to_string(stage1->size()) + " stage-1 models for " +
                                std::to_string(k) + " folds");
  std::vector<std::size_t> labels;
  for (const auto& b : bags) labels.push_back(b.label);

  CvReport report;
  report.folds.resize(k);
  parallel_for(k, [&](std::size_t f) {
    report.folds[f] = run_fold(bags, train_indices(folds, f), folds[f], cfg, f, stage1 ? &(*stage1)[f] : nullptr);
  });

  report.oof_predictions.assign(bags.size(), 0);
  report.oof_attention_predictions.assign(bags.size(), 0);
  for (const auto& fr : report.folds)
    for (std::size_t t = 0; t < fr.test_indices.size(); ++t) {
      report.oof_predictions[fr.test_indices[t]] = fr.predictions[t];
      report.oof_attention_predictions[fr.test_indices[t]] = fr.attention_predictions[t];
    }
  report.aggregate = compute_metrics(labels, report.oof_predictions, cfg.n_classes);
  report.attention_aggregate = compute_metrics(labels, report.oof_attention_predictions, cfg.n_classes);
  return report;
}

}  // namespace milg
