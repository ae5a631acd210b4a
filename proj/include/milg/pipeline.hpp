#pragma once
// Two-stage pipeline: attention MIL -> top-S selection -> KNN graph -> ASG
// network, plus k-fold evaluation around it.

#include <cstdint>
#include <vector>

#include "milg/asg_network.hpp"
#include "milg/graph_builder.hpp"
#include "milg/metrics.hpp"
#include "milg/mil_attention.hpp"

namespace milg {

struct PipelineConfig {
  MilConfig mil;  // input_dim is taken from the bags
  TrainConfig mil_train{100, 8, {OptimizerKind::Sgd, 1e-2, 0.9}, 0};
  double top_s = 60.0;
  std::size_t knn_k = 10;
  AsgConfig asg;  // input_dim and n_classes are filled in by the pipeline
  TrainConfig asg_train{200, 8, {OptimizerKind::Sgd, 1e-3, 0.9}, 0};
  /// Use raw patch latents as node features instead of the stage-1 projection.
  bool raw_node_features = false;
  std::size_t n_classes = 2;
  std::uint64_t seed = 0;
};

/// Stage-1 scoring, selection and graph construction for one bag.
PatchGraph bag_to_graph(const MilModel<float>& mil, const Bag& bag, const PipelineConfig& cfg);

struct FoldReport {
  std::size_t fold = 0;
  std::vector<std::size_t> test_indices;
  std::vector<std::size_t> predictions;            // graph pipeline
  std::vector<std::size_t> attention_predictions;  // stage-1 head alone
  MetricsReport metrics;
  MetricsReport attention_metrics;
};

struct CvReport {
  std::vector<FoldReport> folds;
  std::vector<std::size_t> oof_predictions;  // per bag
  std::vector<std::size_t> oof_attention_predictions;
  MetricsReport aggregate;            // on pooled out-of-fold predictions
  MetricsReport attention_aggregate;  // same, stage-1 head alone
};

/// Stage-1 model for one fold, seeded from cfg.seed and the fold id.
MilModel<float> train_fold_mil(const std::vector<Bag>& bags, const std::vector<std::size_t>& train,
                               const PipelineConfig& cfg, std::size_t fold_id);

/// Trains both stages on `train` and predicts `test`. A supplied stage-1
/// model is used as is.
FoldReport run_fold(const std::vector<Bag>& bags, const std::vector<std::size_t>& train,
                    const std::vector<std::size_t>& test, const PipelineConfig& cfg, std::size_t fold_id,
                    const MilModel<float>* mil = nullptr);

/// Per-fold stage-1 models, as kfold_run would train them.
std::vector<MilModel<float>> kfold_stage1(const std::vector<Bag>& bags, std::size_t k, const PipelineConfig& cfg);

/// Stratified k-fold cross-validation of the full pipeline. `stage1`, when
/// given, holds one model per fold from kfold_stage1 with the same bags, k,
/// seed and stage-1 settings.
CvReport kfold_run(const std::vector<Bag>& bags, std::size_t k, const PipelineConfig& cfg,
                   const std::vector<MilModel<float>>* stage1 = nullptr);

}  // namespace milg
