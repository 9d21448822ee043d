#pragma once

#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

namespace eegfm {

// Undefined entries (e.g. kappa with a single class, AUROC with one label)
// stay disengaged and serialize as JSON null.
struct Metrics {
  std::optional<double> balanced_accuracy;
  std::optional<double> cohen_kappa;
  std::optional<double> weighted_f1;
  std::optional<double> auroc;
  std::optional<double> auc_pr;

  nlohmann::json to_json() const;
};

Metrics metrics_from_json(const nlohmann::json& j);

Metrics classification_metrics(const std::vector<int>& y_true, const std::vector<int>& y_pred);

// Binary ranking metrics from scores (higher = more positive). AUROC uses
// the rank-sum form with midranks for ties; AUC-PR is average precision
// over the descending-score sweep.
std::optional<double> auroc_score(const std::vector<int>& y_true01,
                                  const std::vector<double>& scores);
std::optional<double> auc_pr_score(const std::vector<int>& y_true01,
                                   const std::vector<double>& scores);

// Classification metrics plus the binary ranking metrics when the task is
// binary; `scores` holds the positive-class score per sample.
Metrics binary_metrics(const std::vector<int>& y_true01, const std::vector<int>& y_pred01,
                       const std::vector<double>& scores);

// Per-metric mean/std across runs (e.g. seeds); undefined entries are
// skipped and a metric defined in no run stays null.
nlohmann::json aggregate_metrics(const std::vector<Metrics>& runs);

// Flat CSV (metric,value) with "undefined" for disengaged entries.
std::string metrics_csv(const Metrics& m);

// One row per run (run,balanced_accuracy,...), same "undefined" convention.
std::string runs_csv(const std::vector<Metrics>& runs);

}  // namespace eegfm
