#include "eegfm/finetune.hpp"

#include <map>

#include <Eigen/Eigenvalues>

namespace eegfm {

NcmResult ncm_few_shot(const MatD& features, const std::vector<int>& labels, int n_shots,
                       int n_runs, uint64_t seed) {
  if (features.rows() != static_cast<int64_t>(labels.size()))
    throw std::invalid_argument("ncm_few_shot: feature/label count mismatch");
  if (n_shots < 1 || n_runs < 1)
    throw std::invalid_argument("ncm_few_shot: n_shots and n_runs must be >= 1");

  std::map<int, std::vector<int64_t>> by_class;
  for (int64_t i = 0; i < features.rows(); ++i) by_class[labels[i]].push_back(i);
  if (by_class.size() < 2) throw std::invalid_argument("ncm_few_shot: need at least two classes");
  for (const auto& [cls, idx] : by_class)
    if (static_cast<int>(idx.size()) <= n_shots)
      throw std::invalid_argument("ncm_few_shot: class " + std::to_string(cls) + " has " +
                                  std::to_string(idx.size()) +
                                  " samples; needs more than n_shots=" + std::to_string(n_shots));

  Rng rng = Rng(seed).stream("ncm");
  NcmResult res;
  for (int run = 0; run < n_runs; ++run) {
    std::map<int, VecD> centroid;
    std::vector<int64_t> eval_idx;
    for (auto& [cls, idx] : by_class) {
      std::vector<int64_t> shuffled = idx;
      rng.shuffle(shuffled);
      VecD c = VecD::Zero(features.cols());
      for (int s = 0; s < n_shots; ++s) c += features.row(shuffled[s]).transpose();
      centroid[cls] = c / static_cast<double>(n_shots);
      for (size_t s = n_shots; s < shuffled.size(); ++s) eval_idx.push_back(shuffled[s]);
    }
    std::vector<int> y_true, y_pred;
    for (int64_t i : eval_idx) {
      double best = std::numeric_limits<double>::infinity();
      int best_cls = 0;
      for (const auto& [cls, c] : centroid) {
        const double d = (features.row(i).transpose() - c).squaredNorm();
        if (d < best) {
          best = d;
          best_cls = cls;
        }
      }
      y_true.push_back(labels[i]);
      y_pred.push_back(best_cls);
    }
    const Metrics m = classification_metrics(y_true, y_pred);
    res.per_run.push_back(*m.balanced_accuracy);
  }
  double mean = 0.0;
  for (double v : res.per_run) mean += v;
  mean /= static_cast<double>(res.per_run.size());
  double var = 0.0;
  for (double v : res.per_run) var += (v - mean) * (v - mean);
  var /= static_cast<double>(res.per_run.size());
  res.mean = mean;
  res.stddev = std::sqrt(var);
  return res;
}

std::vector<MatD> euclidean_alignment(const std::vector<MatD>& trials, double ridge) {
  if (trials.empty()) throw std::invalid_argument("euclidean_alignment: no trials");
  const int64_t c = trials[0].rows();
  MatD r_bar = MatD::Zero(c, c);
  for (const MatD& x : trials) {
    if (x.rows() != c)
      throw std::invalid_argument("euclidean_alignment: trials disagree on channel count");
    if (x.cols() < 1) throw std::invalid_argument("euclidean_alignment: empty trial");
    r_bar += (x * x.transpose()) / static_cast<double>(x.cols());
  }
  r_bar /= static_cast<double>(trials.size());
  r_bar += ridge * MatD::Identity(c, c);

  Eigen::SelfAdjointEigenSolver<MatD> eig(r_bar);
  if (eig.info() != Eigen::Success)
    throw std::runtime_error("euclidean_alignment: eigendecomposition failed");
  const VecD evals = eig.eigenvalues();
  if ((evals.array() <= 0.0).any())
    throw std::runtime_error("euclidean_alignment: average covariance is singular beyond ridge");
  const MatD w = eig.eigenvectors() * evals.cwiseSqrt().cwiseInverse().asDiagonal() *
                 eig.eigenvectors().transpose();

  std::vector<MatD> aligned;
  aligned.reserve(trials.size());
  for (const MatD& x : trials) aligned.push_back(w * x);
  return aligned;
}

}  // namespace eegfm
