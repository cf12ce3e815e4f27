#include "h4vdm/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <set>

namespace h4vdm {

namespace {

using nlohmann::json;

void check_inputs(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size())
    throw DimensionMismatch("scores and labels differ in length");
  size_t pos = 0;
  for (int l : labels) {
    if (l != 0 && l != 1) throw DimensionMismatch("labels must be 0 or 1");
    pos += size_t(l);
  }
  if (scores.empty() || pos == 0 || pos == labels.size())
    throw SingleClass("need both classes to evaluate");
}

}  // namespace

double auc(std::span<const double> scores, std::span<const int> labels) {
  check_inputs(scores, labels);
  const size_t n = scores.size();
  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](size_t a, size_t b) { return scores[a] < scores[b]; });

  // average ranks over tie groups (1-based)
  std::vector<double> rank(n);
  size_t i = 0;
  while (i < n) {
    size_t j = i;
    while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) ++j;
    double avg = 0.5 * double(i + 1 + j + 1);
    for (size_t k = i; k <= j; ++k) rank[order[k]] = avg;
    i = j + 1;
  }

  double pos_rank_sum = 0;
  size_t n1 = 0;
  for (size_t k = 0; k < n; ++k)
    if (labels[k] == 1) {
      pos_rank_sum += rank[k];
      ++n1;
    }
  size_t n0 = n - n1;
  return (pos_rank_sum - 0.5 * double(n1) * double(n1 + 1)) / (double(n0) * double(n1));
}

double choose_threshold(std::span<const double> scores, std::span<const int> labels) {
  check_inputs(scores, labels);
  std::vector<double> uniq(scores.begin(), scores.end());
  std::sort(uniq.begin(), uniq.end());
  uniq.erase(std::unique(uniq.begin(), uniq.end()), uniq.end());
  if (uniq.size() == 1) return uniq[0];

  size_t n1 = 0, n0 = 0;
  for (int l : labels) (l ? n1 : n0)++;

  double best_t = 0, best_j = -1;
  for (size_t i = 0; i + 1 < uniq.size(); ++i) {
    double t = 0.5 * (uniq[i] + uniq[i + 1]);
    size_t tp = 0, tn = 0;
    for (size_t k = 0; k < scores.size(); ++k) {
      bool pred = scores[k] >= t;
      if (pred && labels[k] == 1) ++tp;
      if (!pred && labels[k] == 0) ++tn;
    }
    double j = double(tp) / double(n1) + double(tn) / double(n0);
    if (j > best_j) {  // strict: earliest (smallest) maximizer wins ties
      best_j = j;
      best_t = t;
    }
  }
  return best_t;
}

namespace {

ClassMetrics class_metrics(std::span<const int> labels, std::span<const int> preds, int cls) {
  size_t tp = 0, fp = 0, fn = 0, support = 0;
  for (size_t i = 0; i < labels.size(); ++i) {
    bool truth = labels[i] == cls, pred = preds[i] == cls;
    if (truth) ++support;
    if (truth && pred) ++tp;
    if (!truth && pred) ++fp;
    if (truth && !pred) ++fn;
  }
  ClassMetrics m;
  m.support = support;
  m.precision = (tp + fp) ? double(tp) / double(tp + fp) : 0.0;
  m.recall = (tp + fn) ? double(tp) / double(tp + fn) : 0.0;
  m.f1 = (m.precision + m.recall) > 0 ? 2 * m.precision * m.recall / (m.precision + m.recall)
                                      : 0.0;
  return m;
}

}  // namespace

PrfReport prf(std::span<const int> labels, std::span<const int> predictions) {
  if (labels.size() != predictions.size())
    throw DimensionMismatch("labels and predictions differ in length");
  PrfReport r;
  r.class0 = class_metrics(labels, predictions, 0);
  r.class1 = class_metrics(labels, predictions, 1);
  r.macro.precision = 0.5 * (r.class0.precision + r.class1.precision);
  r.macro.recall = 0.5 * (r.class0.recall + r.class1.recall);
  r.macro.f1 = 0.5 * (r.class0.f1 + r.class1.f1);
  r.macro.support = labels.size();
  return r;
}

AccuracyMatrix accuracy_matrix(const std::vector<PairSample>& pairs,
                               std::span<const int> predictions) {
  if (pairs.size() != predictions.size())
    throw DimensionMismatch("pairs and predictions differ in length");
  AccuracyMatrix m;
  for (size_t i = 0; i < pairs.size(); ++i) {
    auto key = std::minmax(pairs[i].a.device_id, pairs[i].b.device_id);
    AccuracyCell& c = m[{key.first, key.second}];
    c.total++;
    if (predictions[i] == pairs[i].label) c.correct++;
  }
  return m;
}

namespace {

json class_to_json(const ClassMetrics& c) {
  return {{"precision", c.precision}, {"recall", c.recall}, {"f1", c.f1}, {"support", c.support}};
}

ClassMetrics class_from_json(const json& j) {
  ClassMetrics c;
  c.precision = j.at("precision").get<double>();
  c.recall = j.at("recall").get<double>();
  c.f1 = j.at("f1").get<double>();
  c.support = j.at("support").get<size_t>();
  return c;
}

}  // namespace

json report_to_json(const EvalReport& r) {
  json matrix = json::array();
  for (const auto& [key, cell] : r.matrix)
    matrix.push_back({{"device_a", key.first},
                      {"device_b", key.second},
                      {"correct", cell.correct},
                      {"total", cell.total},
                      {"accuracy", cell.accuracy()}});
  return {{"kind", "h4vdm_eval_report"},
          {"format_version", 1},
          {"dataset_name", r.dataset_name},
          {"n_pairs", r.n_pairs},
          {"n_label0", r.n_label0},
          {"n_label1", r.n_label1},
          {"auc", r.auc_value},
          {"threshold", r.threshold},
          {"accuracy", r.accuracy},
          {"prf",
           {{"class0", class_to_json(r.prf_report.class0)},
            {"class1", class_to_json(r.prf_report.class1)},
            {"macro", class_to_json(r.prf_report.macro)}}},
          {"matrix", std::move(matrix)}};
}

EvalReport report_from_json(const json& j) {
  if (j.value("kind", "") != "h4vdm_eval_report")
    throw FormatError("not an evaluation report");
  EvalReport r;
  try {
    r.dataset_name = j.at("dataset_name").get<std::string>();
    r.n_pairs = j.at("n_pairs").get<size_t>();
    r.n_label0 = j.at("n_label0").get<size_t>();
    r.n_label1 = j.at("n_label1").get<size_t>();
    r.auc_value = j.at("auc").get<double>();
    r.threshold = j.at("threshold").get<double>();
    r.accuracy = j.at("accuracy").get<double>();
    r.prf_report.class0 = class_from_json(j.at("prf").at("class0"));
    r.prf_report.class1 = class_from_json(j.at("prf").at("class1"));
    r.prf_report.macro = class_from_json(j.at("prf").at("macro"));
    for (const auto& e : j.at("matrix")) {
      AccuracyCell c;
      c.correct = e.at("correct").get<size_t>();
      c.total = e.at("total").get<size_t>();
      r.matrix[{e.at("device_a").get<std::string>(), e.at("device_b").get<std::string>()}] = c;
    }
  } catch (const json::exception& e) {
    throw FormatError(std::string("malformed evaluation report: ") + e.what());
  }
  return r;
}

void emit_report(const std::filesystem::path& dir, const EvalReport& r) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);

  {
    std::ofstream out(dir / "report.json");
    if (!out) throw IoError("cannot write report.json in " + dir.string());
    out << report_to_json(r).dump(2) << "\n";
    if (!out) throw IoError("write failure on report.json");
  }

  std::set<std::string> devset;
  for (const auto& [key, cell] : r.matrix) {
    devset.insert(key.first);
    devset.insert(key.second);
  }
  std::vector<std::string> devices(devset.begin(), devset.end());

  auto cell_of = [&](const std::string& a, const std::string& b) -> const AccuracyCell* {
    auto key = std::minmax(a, b);
    auto it = r.matrix.find({key.first, key.second});
    return it == r.matrix.end() ? nullptr : &it->second;
  };

  {
    std::ofstream out(dir / "matrix.csv");
    if (!out) throw IoError("cannot write matrix.csv in " + dir.string());
    out << "device";
    for (const auto& d : devices) out << "," << d;
    out << "\n";
    char buf[32];
    for (const auto& row : devices) {
      out << row;
      for (const auto& col : devices) {
        const AccuracyCell* c = cell_of(row, col);
        if (c) {
          std::snprintf(buf, sizeof(buf), "%.4f", c->accuracy());
          out << "," << buf;
        } else {
          out << ",";
        }
      }
      out << "\n";
    }
    if (!out) throw IoError("write failure on matrix.csv");
  }

  {
    std::ofstream out(dir / "matrix_heatmap.dat");
    if (!out) throw IoError("cannot write matrix_heatmap.dat in " + dir.string());
    out << "# gnuplot: plot with image; rows/cols indexed over the devices below\n# devices:";
    for (const auto& d : devices) out << " " << d;
    out << "\n# row col accuracy\n";
    for (size_t i = 0; i < devices.size(); ++i) {
      for (size_t j = 0; j < devices.size(); ++j) {
        const AccuracyCell* c = cell_of(devices[i], devices[j]);
        if (c) out << i << " " << j << " " << c->accuracy() << "\n";
      }
      out << "\n";
    }
    if (!out) throw IoError("write failure on matrix_heatmap.dat");
  }

  {
    std::ofstream out(dir / "summary.txt");
    if (!out) throw IoError("cannot write summary.txt in " + dir.string());
    char line[160];
    out << "Evaluation summary";
    if (!r.dataset_name.empty()) out << " (" << r.dataset_name << ")";
    out << "\n";
    std::snprintf(line, sizeof(line), "pairs: %zu (label0 %zu, label1 %zu)  threshold: %.6f\n\n",
                  r.n_pairs, r.n_label0, r.n_label1, r.threshold);
    out << line;
    out << "Class   Pre.    Rec.    F1      AUC     Acc.\n";
    auto row = [&](const char* name, const ClassMetrics& c) {
      std::snprintf(line, sizeof(line), "%-7s %-7.4f %-7.4f %-7.4f %-7.4f %-7.4f\n", name,
                    c.precision, c.recall, c.f1, r.auc_value, r.accuracy);
      out << line;
    };
    row("0", r.prf_report.class0);
    row("1", r.prf_report.class1);
    row("All", r.prf_report.macro);
    if (!out) throw IoError("write failure on summary.txt");
  }
}

}  // namespace h4vdm
