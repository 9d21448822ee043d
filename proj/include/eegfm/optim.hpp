#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "eegfm/nn.hpp"

namespace eegfm {

struct OptimConfig {
  double lr_peak = 2.4e-4;
  double beta1 = 0.9;
  double beta2 = 0.95;
  double epsilon = 1e-9;
  double weight_decay = 0.01;  // decoupled; applies to weight matrices only
  double clip_threshold = 1.0;

  void validate() const {
    std::string out;
    if (!(beta1 > 0.0 && beta1 < 1.0)) out += "beta1 must be in (0,1); ";
    if (!(beta2 > 0.0 && beta2 < 1.0)) out += "beta2 must be in (0,1); ";
    if (!(epsilon > 0.0)) out += "epsilon must be positive; ";
    if (lr_peak < 0.0) out += "lr_peak must be non-negative; ";
    if (weight_decay < 0.0) out += "weight_decay must be non-negative; ";
    if (!(clip_threshold > 0.0)) out += "clip_threshold must be positive; ";
    if (!out.empty()) throw std::invalid_argument("OptimConfig: " + out);
  }
};

struct ScheduleConfig {
  int64_t steps_per_epoch = 0;
  int64_t n_epochs = 1;
  double warmup_frac = 0.10;  // of the first epoch
  double stable_frac = 0.80;  // of the horizon (of each epoch when cyclic)
  double floor_frac = 0.01;
  bool cyclic = false;

  int64_t horizon() const { return steps_per_epoch * n_epochs; }
  int64_t warmup_steps() const { return std::llround(warmup_frac * static_cast<double>(steps_per_epoch)); }

  void validate() const {
    std::string out;
    if (steps_per_epoch <= 0) out += "steps_per_epoch must be positive; ";
    if (n_epochs <= 0) out += "n_epochs must be positive; ";
    if (!(warmup_frac > 0.0 && warmup_frac <= 1.0)) out += "warmup_frac must be in (0,1]; ";
    if (!(stable_frac > 0.0 && stable_frac <= 1.0)) out += "stable_frac must be in (0,1]; ";
    if (!(floor_frac >= 0.0 && floor_frac <= 1.0)) out += "floor_frac must be in [0,1]; ";
    if (out.empty()) {
      if (!cyclic && warmup_steps() + std::llround(stable_frac * static_cast<double>(horizon())) > horizon())
        out += "warmup plus stable phase exceeds the horizon; ";
      if (cyclic && warmup_steps() > std::llround(stable_frac * static_cast<double>(steps_per_epoch)))
        out += "cyclic warmup extends past the per-epoch stable phase; ";
    }
    if (!out.empty()) throw std::invalid_argument("ScheduleConfig: " + out);
  }
};

// Learning rate at `step`, defined on the closed interval [0, horizon].
// Update k (1-based) uses wsd_lr(k), so step 0 is the left endpoint of the
// warmup ramp. Phase boundaries take explicit branches so the endpoint
// values (0, peak, floor_frac*peak) hold exactly rather than up to
// round-off in the interpolation.
inline double wsd_lr(int64_t step, const ScheduleConfig& sched, double peak) {
  sched.validate();
  const int64_t horizon = sched.horizon();
  if (step < 0 || step > horizon)
    throw std::out_of_range("wsd_lr: step " + std::to_string(step) + " outside [0, " +
                            std::to_string(horizon) + "]");
  const int64_t warm = sched.warmup_steps();
  if (step <= warm) {
    if (step == warm) return peak;
    if (warm == 0) return peak;
    return peak * (static_cast<double>(step) / static_cast<double>(warm));
  }
  const double floor_lr = sched.floor_frac * peak;
  if (!sched.cyclic) {
    const int64_t decay_start = warm + std::llround(sched.stable_frac * static_cast<double>(horizon));
    if (step <= decay_start) return peak;
    if (step == horizon) return floor_lr;
    const double f = static_cast<double>(step - decay_start) / static_cast<double>(horizon - decay_start);
    return peak + (floor_lr - peak) * f;
  }
  // Cyclic: one warmup, then every epoch holds the peak through its stable
  // portion and cools to the floor by the epoch boundary. Each new epoch
  // restarts at the peak (the restart jump is the point of this mode).
  const int64_t spe = sched.steps_per_epoch;
  const int64_t local = (step - 1) % spe + 1;  // position within the epoch, 1..spe
  const int64_t stable_end = std::llround(sched.stable_frac * static_cast<double>(spe));
  if (local <= stable_end) return peak;
  if (local == spe) return floor_lr;
  const double f = static_cast<double>(local - stable_end) / static_cast<double>(spe - stable_end);
  return peak + (floor_lr - peak) * f;
}

// Width-based learning-rate power law: lr ∝ dim^(-0.90), anchored at 512.
inline double scale_lr(int dim, int base_dim = 512, double base_lr = 2.4e-4) {
  if (dim <= 0 || base_dim <= 0) throw std::invalid_argument("scale_lr: dims must be positive");
  return base_lr * std::pow(static_cast<double>(dim) / static_cast<double>(base_dim), -0.90);
}

// AdamW with Adafactor-style per-tensor update clipping. The unclipped
// update is u = m_hat / (sqrt(v_hat) + eps); the step uses
// lr' = lr / max(1, RMS(u)/clip) with RMS accumulated in double, so whenever
// RMS(u) <= clip the step is bitwise plain AdamW. Decoupled weight decay
// multiplies the parameter by (1 - lr'*wd) before the update and touches
// weight matrices only: gains, offsets, biases and tokens are exempt.
// Frozen parameters are skipped entirely (no state advance, no decay).
template <typename S>
class StableAdamW {
 public:
  StableAdamW(std::vector<Param<S>*> params, OptimConfig cfg)
      : params_(std::move(params)), cfg_(cfg) {
    cfg_.validate();
    m_.resize(params_.size());
    v_.resize(params_.size());
    for (size_t i = 0; i < params_.size(); ++i) {
      m_[i] = Mat<S>::Zero(params_[i]->w.rows(), params_[i]->w.cols());
      v_[i] = Mat<S>::Zero(params_[i]->w.rows(), params_[i]->w.cols());
    }
  }

  int64_t t() const { return t_; }

  void step(double lr) {
    ++t_;
    const S b1 = static_cast<S>(cfg_.beta1);
    const S b2 = static_cast<S>(cfg_.beta2);
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (size_t i = 0; i < params_.size(); ++i) {
      Param<S>& p = *params_[i];
      if (p.frozen) continue;
      if (!p.g.allFinite())
        throw std::runtime_error("StableAdamW: non-finite gradient in " + p.name);
      m_[i] = b1 * m_[i] + (S(1) - b1) * p.g;
      v_[i] = b2 * v_[i] + (S(1) - b2) * p.g.cwiseProduct(p.g);
      const Mat<S> m_hat = m_[i] / static_cast<S>(bc1);
      const Mat<S> v_hat = v_[i] / static_cast<S>(bc2);
      const Mat<S> u =
          m_hat.cwiseQuotient(v_hat.cwiseSqrt() + Mat<S>::Constant(v_hat.rows(), v_hat.cols(),
                                                                   static_cast<S>(cfg_.epsilon)));
      double sq = 0.0;
      for (int64_t r = 0; r < u.rows(); ++r)
        for (int64_t c = 0; c < u.cols(); ++c) sq += static_cast<double>(u(r, c)) * static_cast<double>(u(r, c));
      const double rms = std::sqrt(sq / static_cast<double>(u.size()));
      const double lr_eff = lr / std::max(1.0, rms / cfg_.clip_threshold);
      if (cfg_.weight_decay != 0.0 && p.kind == ParamKind::weight)
        p.w *= static_cast<S>(1.0 - lr_eff * cfg_.weight_decay);
      p.w -= static_cast<S>(lr_eff) * u;
    }
  }

 private:
  std::vector<Param<S>*> params_;
  OptimConfig cfg_;
  std::vector<Mat<S>> m_, v_;
  int64_t t_ = 0;
};

// Global gradient norm across a parameter set, accumulated in double.
template <typename S>
double grad_norm(const std::vector<Param<S>*>& params) {
  double sq = 0.0;
  for (const Param<S>* p : params)
    for (int64_t r = 0; r < p->g.rows(); ++r)
      for (int64_t c = 0; c < p->g.cols(); ++c)
        sq += static_cast<double>(p->g(r, c)) * static_cast<double>(p->g(r, c));
  return std::sqrt(sq);
}

}  // namespace eegfm
