#include "milg/metrics.hpp"

#include <fstream>
#include <stdexcept>

#include "milg/csv.hpp"
#include "milg/error.hpp"

namespace milg {

std::size_t MetricsReport::total() const {
  std::size_t n = 0;
  for (const auto& row : confusion)
    for (auto v : row) n += v;
  return n;
}

nlohmann::json MetricsReport::to_json() const {
  nlohmann::json j = {{"n_classes", n_classes},     {"confusion", confusion},     {"accuracy", accuracy},
                      {"f1", macro_f1},             {"sensitivity", sensitivity}, {"precision", precision},
                      {"cohen_kappa", cohen_kappa}, {"n", total()},               {"zero_division", zero_division}};
  if (quadratic_kappa) j["quadratic_kappa"] = *quadratic_kappa;
  return j;
}

MetricsReport compute_metrics(std::span<const std::size_t> truth, std::span<const std::size_t> predicted,
                              std::size_t n_classes, bool with_quadratic_kappa) {
  if (truth.size() != predicted.size())
    throw std::invalid_argument("compute_metrics: " + std::to_string(truth.size()) + " truths vs " +
                                std::to_string(predicted.size()) + " predictions");
  if (truth.empty()) throw std::invalid_argument("compute_metrics: no samples");
  if (n_classes == 0) throw std::invalid_argument("compute_metrics: n_classes must be positive");

  MetricsReport r;
  r.n_classes = n_classes;
  r.confusion.assign(n_classes, std::vector<std::size_t>(n_classes, 0));
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (truth[i] >= n_classes || predicted[i] >= n_classes)
      throw std::invalid_argument("compute_metrics: class index out of range at sample " + std::to_string(i));
    ++r.confusion[truth[i]][predicted[i]];
  }

  const auto n = static_cast<double>(truth.size());
  std::vector<double> row_sum(n_classes, 0.0), col_sum(n_classes, 0.0);
  double diag = 0.0;
  for (std::size_t a = 0; a < n_classes; ++a) {
    for (std::size_t b = 0; b < n_classes; ++b) {
      row_sum[a] += static_cast<double>(r.confusion[a][b]);
      col_sum[b] += static_cast<double>(r.confusion[a][b]);
    }
    diag += static_cast<double>(r.confusion[a][a]);
  }
  r.accuracy = diag / n;

  std::size_t present = 0;
  double f1_sum = 0.0, rec_sum = 0.0, prec_sum = 0.0;
  for (std::size_t c = 0; c < n_classes; ++c) {
    if (row_sum[c] == 0.0) continue;
    ++present;
    const double tp = static_cast<double>(r.confusion[c][c]);
    const double rec = tp / row_sum[c];
    double prec = 0.0;
    if (col_sum[c] > 0.0) prec = tp / col_sum[c];
    else r.zero_division.push_back("precision[" + std::to_string(c) + "]");
    double f1 = 0.0;
    if (prec + rec > 0.0) f1 = 2.0 * prec * rec / (prec + rec);
    else r.zero_division.push_back("f1[" + std::to_string(c) + "]");
    f1_sum += f1;
    rec_sum += rec;
    prec_sum += prec;
  }
  r.macro_f1 = f1_sum / static_cast<double>(present);
  r.sensitivity = rec_sum / static_cast<double>(present);
  r.precision = prec_sum / static_cast<double>(present);

  double pe = 0.0;
  for (std::size_t c = 0; c < n_classes; ++c) pe += (row_sum[c] / n) * (col_sum[c] / n);
  r.cohen_kappa = pe == 1.0 ? 0.0 : (r.accuracy - pe) / (1.0 - pe);

  if (with_quadratic_kappa) {
    if (n_classes < 2) {
      r.quadratic_kappa = 0.0;
    } else {
      double observed = 0.0, expected = 0.0;
      const double scale = static_cast<double>((n_classes - 1) * (n_classes - 1));
      for (std::size_t a = 0; a < n_classes; ++a)
        for (std::size_t b = 0; b < n_classes; ++b) {
          const double d = static_cast<double>(a) - static_cast<double>(b);
          const double w = d * d / scale;
          observed += w * static_cast<double>(r.confusion[a][b]) / n;
          expected += w * (row_sum[a] / n) * (col_sum[b] / n);
        }
      r.quadratic_kappa = expected == 0.0 ? 0.0 : 1.0 - observed / expected;
    }
  }
  return r;
}

void write_metrics_json(const std::filesystem::path& path, const MetricsReport& r) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw UserError("cannot write " + path.string());
  os << r.to_json().dump(2) << '\n';
}

void write_confusion_csv(const std::filesystem::path& path, const MetricsReport& r) {
  CsvTable t;
  t.header.push_back("truth");
  for (std::size_t c = 0; c < r.n_classes; ++c) t.header.push_back("pred_" + std::to_string(c));
  for (std::size_t a = 0; a < r.n_classes; ++a) {
    std::vector<std::string> row{std::to_string(a)};
    for (auto v : r.confusion[a]) row.push_back(std::to_string(v));
    t.rows.push_back(std::move(row));
  }
  write_csv(path, t);
}

}  // namespace milg
