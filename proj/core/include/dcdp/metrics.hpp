#pragma once

#include <cstddef>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace dcdp {

/// Rows are true classes, columns are predictions.
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(std::size_t classes = 0);
  static ConfusionMatrix from_counts(const std::vector<std::vector<std::size_t>>& counts);
  static ConfusionMatrix from_predictions(std::span<const int> truth, std::span<const int> predicted,
                                          std::size_t classes);

  void add(int truth, int predicted);
  std::size_t at(std::size_t truth, std::size_t predicted) const { return counts_[truth * classes_ + predicted]; }
  std::size_t classes() const noexcept { return classes_; }
  std::size_t total() const noexcept { return total_; }
  std::size_t trace() const;

  /// Header row "true\pred,0,1,...", then one row per true class.
  void write_csv(std::ostream& os) const;

 private:
  std::size_t classes_ = 0;
  std::size_t total_ = 0;
  std::vector<std::size_t> counts_;
};

struct ClassMetrics {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;
  std::size_t support = 0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  /// Share of evaluated windows whose true class is this one.
  double weight = 0.0;
  /// Nothing was predicted as this class; precision reported as 0.
  bool precision_undefined = false;
  /// The class never occurs in the truth; recall reported as 0.
  bool recall_undefined = false;
};

/// Macro averages run over classes that occur in the truth or the predictions.
/// Weighted averages use the true-class share of each class.
struct MetricsReport {
  std::size_t total = 0;
  double accuracy = 0.0;
  std::vector<ClassMetrics> per_class;
  double precision_macro = 0.0;
  double recall_macro = 0.0;
  double f1_macro = 0.0;
  double precision_weighted = 0.0;
  double recall_weighted = 0.0;
  double f1_weighted = 0.0;
};

MetricsReport compute_metrics(const ConfusionMatrix& cm);

/// Machine-readable single JSON object.
std::string metrics_to_json(const MetricsReport& report);
/// Fixed-width human summary.
std::string metrics_summary(const MetricsReport& report);

/// Index of the largest entry; ties go to the lowest index.
int argmax(std::span<const double> row);

}  // namespace dcdp
