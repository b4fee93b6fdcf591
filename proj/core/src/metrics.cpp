#include "dcdp/metrics.hpp"

#include <cstdio>
#include <ostream>

#include "dcdp/error.hpp"
#include "json.hpp"

namespace dcdp {

ConfusionMatrix::ConfusionMatrix(std::size_t classes) : classes_(classes), counts_(classes * classes, 0) {}

ConfusionMatrix ConfusionMatrix::from_counts(const std::vector<std::vector<std::size_t>>& counts) {
  ConfusionMatrix cm(counts.size());
  for (std::size_t t = 0; t < counts.size(); ++t) {
    if (counts[t].size() != counts.size()) throw DimensionError("confusion matrix must be square");
    for (std::size_t p = 0; p < counts.size(); ++p) {
      cm.counts_[t * cm.classes_ + p] = counts[t][p];
      cm.total_ += counts[t][p];
    }
  }
  return cm;
}

ConfusionMatrix ConfusionMatrix::from_predictions(std::span<const int> truth, std::span<const int> predicted,
                                                  std::size_t classes) {
  if (truth.size() != predicted.size()) throw DimensionError("confusion matrix: truth/prediction length mismatch");
  ConfusionMatrix cm(classes);
  for (std::size_t i = 0; i < truth.size(); ++i) cm.add(truth[i], predicted[i]);
  return cm;
}

void ConfusionMatrix::add(int truth, int predicted) {
  if (truth < 0 || predicted < 0 || static_cast<std::size_t>(truth) >= classes_ ||
      static_cast<std::size_t>(predicted) >= classes_) {
    throw LabelError("confusion matrix: pair (" + std::to_string(truth) + "," + std::to_string(predicted) +
                     ") outside [0," + std::to_string(classes_) + ")");
  }
  ++counts_[static_cast<std::size_t>(truth) * classes_ + static_cast<std::size_t>(predicted)];
  ++total_;
}

std::size_t ConfusionMatrix::trace() const {
  std::size_t s = 0;
  for (std::size_t c = 0; c < classes_; ++c) s += at(c, c);
  return s;
}

void ConfusionMatrix::write_csv(std::ostream& os) const {
  os << "true\\pred";
  for (std::size_t p = 0; p < classes_; ++p) os << ',' << p;
  os << '\n';
  for (std::size_t t = 0; t < classes_; ++t) {
    os << t;
    for (std::size_t p = 0; p < classes_; ++p) os << ',' << at(t, p);
    os << '\n';
  }
}

MetricsReport compute_metrics(const ConfusionMatrix& cm) {
  MetricsReport r;
  const std::size_t k = cm.classes();
  r.total = cm.total();
  if (r.total == 0) throw ContractError("compute_metrics: empty confusion matrix");
  r.accuracy = static_cast<double>(cm.trace()) / static_cast<double>(r.total);
  std::size_t active = 0;
  for (std::size_t c = 0; c < k; ++c) {
    ClassMetrics m;
    m.tp = cm.at(c, c);
    for (std::size_t o = 0; o < k; ++o) {
      if (o == c) continue;
      m.fp += cm.at(o, c);
      m.fn += cm.at(c, o);
    }
    m.support = m.tp + m.fn;
    m.weight = static_cast<double>(m.support) / static_cast<double>(r.total);
    m.precision_undefined = m.tp + m.fp == 0;
    m.recall_undefined = m.support == 0;
    m.precision = m.precision_undefined ? 0.0 : static_cast<double>(m.tp) / static_cast<double>(m.tp + m.fp);
    m.recall = m.recall_undefined ? 0.0 : static_cast<double>(m.tp) / static_cast<double>(m.support);
    m.f1 = (m.precision + m.recall) > 0.0 ? 2.0 * m.precision * m.recall / (m.precision + m.recall) : 0.0;
    if (!(m.precision_undefined && m.recall_undefined)) {
      ++active;
      r.precision_macro += m.precision;
      r.recall_macro += m.recall;
      r.f1_macro += m.f1;
    }
    r.precision_weighted += m.weight * m.precision;
    r.recall_weighted += m.weight * m.recall;
    r.f1_weighted += m.weight * m.f1;
    r.per_class.push_back(m);
  }
  r.precision_macro /= static_cast<double>(active);
  r.recall_macro /= static_cast<double>(active);
  r.f1_macro /= static_cast<double>(active);
  return r;
}

std::string metrics_to_json(const MetricsReport& report) {
  nlohmann::json j;
  j["total"] = report.total;
  j["accuracy"] = report.accuracy;
  j["precision_macro"] = report.precision_macro;
  j["recall_macro"] = report.recall_macro;
  j["f1_macro"] = report.f1_macro;
  j["precision_weighted"] = report.precision_weighted;
  j["recall_weighted"] = report.recall_weighted;
  j["f1_weighted"] = report.f1_weighted;
  j["per_class"] = nlohmann::json::array();
  for (const ClassMetrics& m : report.per_class) {
    j["per_class"].push_back({{"tp", m.tp},
                              {"fp", m.fp},
                              {"fn", m.fn},
                              {"support", m.support},
                              {"weight", m.weight},
                              {"precision", m.precision},
                              {"recall", m.recall},
                              {"f1", m.f1},
                              {"precision_undefined", m.precision_undefined},
                              {"recall_undefined", m.recall_undefined}});
  }
  return j.dump();
}

std::string metrics_summary(const MetricsReport& report) {
  std::string out;
  char buf[160];
  std::snprintf(buf, sizeof(buf), "windows %zu  accuracy %.4f  F1-macro %.4f  F1-weighted %.4f\n", report.total,
                report.accuracy, report.f1_macro, report.f1_weighted);
  out += buf;
  out += "class  support  precision  recall     f1\n";
  for (std::size_t c = 0; c < report.per_class.size(); ++c) {
    const ClassMetrics& m = report.per_class[c];
    std::snprintf(buf, sizeof(buf), "%5zu  %7zu  %9.4f%s %6.4f  %6.4f\n", c, m.support, m.precision,
                  m.precision_undefined ? "*" : " ", m.recall, m.f1);
    out += buf;
  }
  bool flagged = false;
  for (const auto& m : report.per_class) flagged = flagged || m.precision_undefined;
  if (flagged) out += "* no predictions for this class; precision reported as 0\n";
  return out;
}

int argmax(std::span<const double> row) {
  if (row.empty()) throw ContractError("argmax of empty row");
  std::size_t best = 0;
  for (std::size_t i = 1; i < row.size(); ++i) {
    if (row[i] > row[best]) best = i;
  }
  return static_cast<int>(best);
}

}  // namespace dcdp
