#include "eegfm/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace eegfm {

namespace {

nlohmann::json opt_json(const std::optional<double>& v) {
  if (!v) return nullptr;
  return *v;
}

}  // namespace

nlohmann::json Metrics::to_json() const {
  return {{"balanced_accuracy", opt_json(balanced_accuracy)},
          {"cohen_kappa", opt_json(cohen_kappa)},
          {"weighted_f1", opt_json(weighted_f1)},
          {"auroc", opt_json(auroc)},
          {"auc_pr", opt_json(auc_pr)}};
}

Metrics metrics_from_json(const nlohmann::json& j) {
  const auto opt = [&](const char* key) -> std::optional<double> {
    if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
    return j.at(key).get<double>();
  };
  Metrics m;
  m.balanced_accuracy = opt("balanced_accuracy");
  m.cohen_kappa = opt("cohen_kappa");
  m.weighted_f1 = opt("weighted_f1");
  m.auroc = opt("auroc");
  m.auc_pr = opt("auc_pr");
  return m;
}

Metrics classification_metrics(const std::vector<int>& y_true, const std::vector<int>& y_pred) {
  if (y_true.size() != y_pred.size())
    throw std::invalid_argument("metrics: y_true and y_pred sizes differ");
  if (y_true.empty()) throw std::invalid_argument("metrics: empty label vectors");
  const double n = static_cast<double>(y_true.size());

  std::map<int, std::map<int, int64_t>> confusion;  // true -> pred -> count
  std::map<int, int64_t> support, predicted;
  for (size_t i = 0; i < y_true.size(); ++i) {
    ++confusion[y_true[i]][y_pred[i]];
    ++support[y_true[i]];
    ++predicted[y_pred[i]];
  }

  Metrics m;

  double recall_sum = 0.0;
  for (const auto& [cls, count] : support) {
    const auto& row = confusion[cls];
    const auto it = row.find(cls);
    const int64_t tp = it == row.end() ? 0 : it->second;
    recall_sum += static_cast<double>(tp) / static_cast<double>(count);
  }
  m.balanced_accuracy = recall_sum / static_cast<double>(support.size());

  double p_o = 0.0, p_e = 0.0;
  for (const auto& [cls, count] : support) {
    const auto& row = confusion[cls];
    const auto it = row.find(cls);
    p_o += it == row.end() ? 0.0 : static_cast<double>(it->second) / n;
    const auto pit = predicted.find(cls);
    const double pred_c = pit == predicted.end() ? 0.0 : static_cast<double>(pit->second);
    p_e += static_cast<double>(count) * pred_c / (n * n);
  }
  if (p_e < 1.0) m.cohen_kappa = (p_o - p_e) / (1.0 - p_e);

  double f1_weighted = 0.0;
  for (const auto& [cls, count] : support) {
    const auto& row = confusion[cls];
    const auto it = row.find(cls);
    const double tp = it == row.end() ? 0.0 : static_cast<double>(it->second);
    const auto pit = predicted.find(cls);
    const double pred_c = pit == predicted.end() ? 0.0 : static_cast<double>(pit->second);
    const double prec = pred_c > 0.0 ? tp / pred_c : 0.0;
    const double rec = tp / static_cast<double>(count);
    const double f1 = (prec + rec) > 0.0 ? 2.0 * prec * rec / (prec + rec) : 0.0;
    f1_weighted += static_cast<double>(count) / n * f1;
  }
  m.weighted_f1 = f1_weighted;

  return m;
}

std::optional<double> auroc_score(const std::vector<int>& y_true01,
                                  const std::vector<double>& scores) {
  if (y_true01.size() != scores.size())
    throw std::invalid_argument("auroc: label and score sizes differ");
  const size_t n = scores.size();
  int64_t n_pos = 0;
  for (int y : y_true01) {
    if (y != 0 && y != 1) throw std::invalid_argument("auroc: labels must be 0/1");
    n_pos += y;
  }
  const int64_t n_neg = static_cast<int64_t>(n) - n_pos;
  if (n_pos == 0 || n_neg == 0) return std::nullopt;

  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), size_t{0});
  std::sort(order.begin(), order.end(),
            [&](size_t a, size_t b) { return scores[a] < scores[b]; });

  // Midranks over tie groups, then the Mann-Whitney rank-sum identity.
  double rank_sum_pos = 0.0;
  size_t i = 0;
  while (i < n) {
    size_t j = i;
    while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) ++j;
    const double midrank = 0.5 * static_cast<double>(i + 1 + j + 1);
    for (size_t k = i; k <= j; ++k)
      if (y_true01[order[k]] == 1) rank_sum_pos += midrank;
    i = j + 1;
  }
  const double u = rank_sum_pos - 0.5 * static_cast<double>(n_pos) * static_cast<double>(n_pos + 1);
  return u / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

std::optional<double> auc_pr_score(const std::vector<int>& y_true01,
                                   const std::vector<double>& scores) {
  if (y_true01.size() != scores.size())
    throw std::invalid_argument("auc_pr: label and score sizes differ");
  int64_t n_pos = 0;
  for (int y : y_true01) {
    if (y != 0 && y != 1) throw std::invalid_argument("auc_pr: labels must be 0/1");
    n_pos += y;
  }
  if (n_pos == 0) return std::nullopt;

  const size_t n = scores.size();
  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), size_t{0});
  std::sort(order.begin(), order.end(),
            [&](size_t a, size_t b) { return scores[a] > scores[b]; });

  // Average precision: sum over thresholds (descending, tie groups whole)
  // of precision * recall increment.
  double ap = 0.0;
  int64_t tp = 0, fp = 0;
  double prev_recall = 0.0;
  size_t i = 0;
  while (i < n) {
    size_t j = i;
    while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) ++j;
    for (size_t k = i; k <= j; ++k) {
      if (y_true01[order[k]] == 1)
        ++tp;
      else
        ++fp;
    }
    const double recall = static_cast<double>(tp) / static_cast<double>(n_pos);
    const double precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
    ap += (recall - prev_recall) * precision;
    prev_recall = recall;
    i = j + 1;
  }
  return ap;
}

Metrics binary_metrics(const std::vector<int>& y_true01, const std::vector<int>& y_pred01,
                       const std::vector<double>& scores) {
  Metrics m = classification_metrics(y_true01, y_pred01);
  m.auroc = auroc_score(y_true01, scores);
  m.auc_pr = auc_pr_score(y_true01, scores);
  return m;
}

nlohmann::json aggregate_metrics(const std::vector<Metrics>& runs) {
  const char* names[] = {"balanced_accuracy", "cohen_kappa", "weighted_f1", "auroc", "auc_pr"};
  auto field = [](const Metrics& m, int i) -> const std::optional<double>& {
    switch (i) {
      case 0: return m.balanced_accuracy;
      case 1: return m.cohen_kappa;
      case 2: return m.weighted_f1;
      case 3: return m.auroc;
      default: return m.auc_pr;
    }
  };
  nlohmann::json out;
  out["runs"] = runs.size();
  for (int i = 0; i < 5; ++i) {
    std::vector<double> vals;
    for (const Metrics& m : runs)
      if (field(m, i)) vals.push_back(*field(m, i));
    if (vals.empty()) {
      out[names[i]] = nullptr;
      continue;
    }
    double mean = 0.0;
    for (double v : vals) mean += v;
    mean /= static_cast<double>(vals.size());
    double var = 0.0;
    for (double v : vals) var += (v - mean) * (v - mean);
    var /= static_cast<double>(vals.size());
    out[names[i]] = {{"mean", mean}, {"std", std::sqrt(var)}, {"defined_in", vals.size()}};
  }
  return out;
}

std::string metrics_csv(const Metrics& m) {
  auto cell = [](const std::optional<double>& v) {
    if (!v) return std::string("undefined");
    std::ostringstream s;
    s.precision(10);
    s << *v;
    return s.str();
  };
  std::ostringstream out;
  out << "metric,value\n";
  out << "balanced_accuracy," << cell(m.balanced_accuracy) << "\n";
  out << "cohen_kappa," << cell(m.cohen_kappa) << "\n";
  out << "weighted_f1," << cell(m.weighted_f1) << "\n";
  out << "auroc," << cell(m.auroc) << "\n";
  out << "auc_pr," << cell(m.auc_pr) << "\n";
  return out.str();
}

std::string runs_csv(const std::vector<Metrics>& runs) {
  auto cell = [](const std::optional<double>& v) {
    if (!v) return std::string("undefined");
    std::ostringstream s;
    s.precision(10);
    s << *v;
    return s.str();
  };
  std::ostringstream out;
  out << "run,balanced_accuracy,cohen_kappa,weighted_f1,auroc,auc_pr\n";
  for (size_t i = 0; i < runs.size(); ++i)
    out << i << "," << cell(runs[i].balanced_accuracy) << "," << cell(runs[i].cohen_kappa) << ","
        << cell(runs[i].weighted_f1) << "," << cell(runs[i].auroc) << ","
        << cell(runs[i].auc_pr) << "\n";
  return out.str();
}

}  // namespace eegfm
