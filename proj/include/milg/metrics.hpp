#pragma once
// Bag-level classification metrics.

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

namespace milg {

struct MetricsReport {
  std::size_t n_classes = 0;
  std::vector<std::vector<std::size_t>> confusion;  // [truth][predicted]
  double accuracy = 0.0;
  double macro_f1 = 0.0;
  double sensitivity = 0.0;  // macro recall
  double precision = 0.0;    // macro precision
  double cohen_kappa = 0.0;  // unweighted
  std::optional<double> quadratic_kappa;
  /// Per-class terms that hit an empty denominator and were counted as 0.
  std::vector<std::string> zero_division;

  std::size_t total() const;
  nlohmann::json to_json() const;
};

/// Macro scores average over the classes present in `truth`. Kappa is
/// (p_o - p_e) / (1 - p_e) with p_e from the marginals, 0 when p_e == 1.
/// Throws std::invalid_argument on length mismatch, empty input or a class
/// index >= n_classes.
MetricsReport compute_metrics(std::span<const std::size_t> truth, std::span<const std::size_t> predicted,
                              std::size_t n_classes, bool with_quadratic_kappa = false);

void write_metrics_json(const std::filesystem::path& path, const MetricsReport& r);
/// Header: truth,pred_0,...,pred_{C-1}
void write_confusion_csv(const std::filesystem::path& path, const MetricsReport& r);

}  // namespace milg
