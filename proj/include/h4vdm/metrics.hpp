#pragma once

#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "h4vdm/errors.hpp"
#include "h4vdm/pairs.hpp"

namespace h4vdm {

// Area under the ROC curve via the Mann-Whitney statistic with average ranks:
// P(score_pos > score_neg) + 0.5 * P(score_pos == score_neg).
// Throws DimensionMismatch (length disagreement) and SingleClass (labels all
// equal).
double auc(std::span<const double> scores, std::span<const int> labels);

// Smallest threshold maximizing TPR + TNR when predicting label 1 for
// score >= t. Candidates are midpoints between adjacent distinct sorted
// scores; with a single distinct score the score itself is returned.
double choose_threshold(std::span<const double> scores, std::span<const int> labels);

struct ClassMetrics {
  double precision = 0;
  double recall = 0;
  double f1 = 0;
  size_t support = 0;
};

// Per-class precision/recall/F1 with the zero-denominator convention (0) and
// the unweighted macro average over the two classes.
struct PrfReport {
  ClassMetrics class0;  // label 0 treated as the positive class
  ClassMetrics class1;
  ClassMetrics macro;   // support = total sample count
};

PrfReport prf(std::span<const int> labels, std::span<const int> predictions);

struct AccuracyCell {
  size_t correct = 0;
  size_t total = 0;
  double accuracy() const { return total ? double(correct) / double(total) : 0.0; }
};

// Keyed by the unordered device pair (first <= second). Diagonal cells hold
// same-device (label-1) pairs; off-diagonal cells hold cross-device pairs.
// Device pairs with no evaluated pairs are simply absent.
using AccuracyMatrix = std::map<std::pair<std::string, std::string>, AccuracyCell>;

AccuracyMatrix accuracy_matrix(const std::vector<PairSample>& pairs,
                               std::span<const int> predictions);

struct EvalReport {
  std::string dataset_name;
  size_t n_pairs = 0;
  size_t n_label0 = 0;
  size_t n_label1 = 0;
  double auc_value = 0;
  double threshold = 0;
  double accuracy = 0;
  PrfReport prf_report;
  AccuracyMatrix matrix;
};

nlohmann::json report_to_json(const EvalReport& r);
EvalReport report_from_json(const nlohmann::json& j);

// Writes report.json (full precision), matrix.csv (4 decimals, sorted device
// headers), matrix_heatmap.dat (gnuplot grid) and summary.txt into dir.
// Throws IoError.
void emit_report(const std::filesystem::path& dir, const EvalReport& r);

}  // namespace h4vdm
