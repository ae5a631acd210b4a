#pragma once
// One-axis hyperparameter sweeps over k-fold runs.

#include <filesystem>
#include <string>
#include <vector>

#include "milg/pipeline.hpp"

namespace milg {

enum class SweepAxis { AsgModules, K, SPercent };

/// Accepts "asg_modules", "K" and "S_percent".
SweepAxis parse_sweep_axis(const std::string& name);
std::string to_string(SweepAxis axis);

struct SweepRow {
  SweepAxis axis = SweepAxis::SPercent;
  double value = 0.0;
  MetricsReport metrics;
};

/// Applies `value` on `axis` to a copy of `base`.
PipelineConfig with_axis_value(const PipelineConfig& base, SweepAxis axis, double value);

/// Runs kfold_run once per value, everything else (seed included) fixed.
/// Stage-1 models are trained once per fold and shared across values.
std::vector<SweepRow> sweep(SweepAxis axis, const std::vector<double>& values, const std::vector<Bag>& bags,
                            std::size_t k_folds, const PipelineConfig& base);

/// Header: axis,value,accuracy,f1,sensitivity,precision,kappa
void write_sweep_csv(const std::filesystem::path& path, const std::vector<SweepRow>& rows);

}  // namespace milg
