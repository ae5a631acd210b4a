#include "milg/sweep.hpp"

#include <cmath>

#include "milg/csv.hpp"
#include "milg/log.hpp"

namespace milg {

SweepAxis parse_sweep_axis(const std::string& name) {
  if (name == "asg_modules") return SweepAxis::AsgModules;
  if (name == "K") return SweepAxis::K;
  if (name == "S_percent") return SweepAxis::SPercent;
  throw UserError("unknown sweep axis '" + name + "' (expected asg_modules, K or S_percent)");
}

std::string to_string(SweepAxis axis) {
  switch (axis) {
    case SweepAxis::AsgModules: return "asg_modules";
    case SweepAxis::K: return "K";
    case SweepAxis::SPercent: return "S_percent";
  }
  return "?";
}

PipelineConfig with_axis_value(const PipelineConfig& base, SweepAxis axis, double value) {
  PipelineConfig cfg = base;
  const auto as_count = [&](const char* what) {
    if (!(value >= 1.0) || std::floor(value) != value)
      throw UserError(std::string(what) + " sweep values must be positive integers");
    return static_cast<std::size_t>(value);
  };
  switch (axis) {
    case SweepAxis::AsgModules: cfg.asg.num_modules = as_count("asg_modules"); break;
    case SweepAxis::K: cfg.knn_k = as_count("K"); break;
    case SweepAxis::SPercent: cfg.top_s = value; break;
  }
  return cfg;
}

std::vector<SweepRow> sweep(SweepAxis axis, const std::vector<double>& values, const std::vector<Bag>& bags,
                            std::size_t k_folds, const PipelineConfig& base) {
  if (values.empty()) throw UserError("sweep needs at least one value");
  for (double v : values) with_axis_value(base, axis, v);
  // None of the axes touch stage 1, so each fold's attention model is shared.
  const auto stage1 = kfold_stage1(bags, k_folds, base);
  std::vector<SweepRow> rows;
  for (double v : values) {
    log::info("sweep " + to_string(axis) + "=" + format_number(v));
    const CvReport cv = kfold_run(bags, k_folds, with_axis_value(base, axis, v), &stage1);
    rows.push_back(SweepRow{axis, v, cv.aggregate});
  }
  return rows;
}

void write_sweep_csv(const std::filesystem::path& path, const std::vector<SweepRow>& rows) {
  CsvTable t{{"axis", "value", "accuracy", "f1", "sensitivity", "precision", "kappa"}, {}};
  for (const auto& r : rows)
    t.rows.push_back({to_string(r.axis), format_number(r.value), format_number(r.metrics.accuracy),
                      format_number(r.metrics.macro_f1), format_number(r.metrics.sensitivity),
                      format_number(r.metrics.precision), format_number(r.metrics.cohen_kappa)});
  write_csv(path, t);
}

}  // namespace milg
