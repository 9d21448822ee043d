#include "eegfm/preprocess.hpp"

#include <cmath>
#include <stdexcept>

namespace eegfm {

void PreprocessConfig::validate() const {
  std::string issues;
  if (target_rate <= 0.0) issues += "target_rate must be positive; ";
  if (!(0.0 < band_low && band_low < band_high && band_high < target_rate / 2.0))
    issues += "band must satisfy 0 < low < high < target_rate/2; ";
  if (min_duration_s < 0.0) issues += "min_duration_s must be non-negative; ";
  if (clip_sigma <= 0.0) issues += "clip_sigma must be positive; ";
  if (std_floor <= 0.0) issues += "std_floor must be positive; ";
  if (!issues.empty()) throw std::invalid_argument("PreprocessConfig: " + issues);
}

double PreprocessConfig::filter_transition_hz() const {
  const double nyq = target_rate / 2.0;
  // Lower edge: transition centered at band_low must stay above band_low/4
  // and below 2*band_low. Upper edge: centered at band_high, inside
  // [0.9*band_high, nyquist].
  const double lo = 2.0 * std::min(band_low - band_low / 4.0, 2.0 * band_low - band_low);
  const double hi = 2.0 * std::min(band_high - 0.9 * band_high, nyq - band_high);
  return std::min(lo, hi);
}

bool accept_duration(int64_t samples, double rate, const PreprocessConfig& cfg) {
  if (rate <= 0.0) throw std::invalid_argument("accept_duration: rate must be positive");
  return static_cast<double>(samples) / rate >= cfg.min_duration_s;
}

EegRecording preprocess_recording(const EegRecording& rec, const PreprocessConfig& cfg) {
  cfg.validate();
  EegRecording out = rec;
  out.data = resample_channels(rec.data, rec.rate, cfg.target_rate);
  out.rate = cfg.target_rate;
  const VecD h = design_bandpass_fir(cfg.band_low, cfg.band_high, cfg.target_rate,
                                     cfg.filter_transition_hz(), cfg.filter_atten_db);
  out.data = filtfilt_channels(h, out.data);
  if (!out.data.allFinite()) throw std::runtime_error("preprocess_recording: non-finite output");
  return out;
}

SessionStats session_stats(const std::vector<EegRecording>& session) {
  if (session.empty()) throw std::invalid_argument("session_stats: empty session");
  const int c = static_cast<int>(session.front().data.rows());
  for (const auto& r : session)
    if (r.data.rows() != c)
      throw std::invalid_argument("session_stats: recordings disagree on channel count");
  VecD sum = VecD::Zero(c), sumsq = VecD::Zero(c);
  int64_t n = 0;
  for (const auto& r : session) {
    for (int ch = 0; ch < c; ++ch) {
      const auto row = r.data.row(ch).cast<double>();
      sum[ch] += row.sum();
      sumsq[ch] += row.array().square().sum();
    }
    n += r.data.cols();
  }
  SessionStats st;
  st.mean = sum / static_cast<double>(n);
  st.stddev = (sumsq / static_cast<double>(n) - st.mean.array().square().matrix())
                  .array()
                  .max(0.0)
                  .sqrt();
  return st;
}

void zscore_clip(EegRecording& rec, const SessionStats& stats, const PreprocessConfig& cfg) {
  const int c = static_cast<int>(rec.data.rows());
  if (stats.mean.size() != c) throw std::invalid_argument("zscore_clip: stats/channel mismatch");
  for (int ch = 0; ch < c; ++ch) {
    const double mu = stats.mean[ch];
    const double sd = std::max(stats.stddev[ch], cfg.std_floor);
    rec.data.row(ch) = (((rec.data.row(ch).cast<double>().array() - mu) / sd)
                            .min(cfg.clip_sigma)
                            .max(-cfg.clip_sigma))
                           .cast<float>();
  }
}

std::vector<EegRecording> preprocess_session(const std::vector<EegRecording>& session,
                                             const PreprocessConfig& cfg,
                                             PreprocessReport* report) {
  cfg.validate();
  std::vector<EegRecording> kept;
  for (const auto& rec : session) {
    if (!accept_duration(rec.data.cols(), rec.rate, cfg)) {
      if (report) report->rejected_ids.push_back(rec.id);
      continue;
    }
    kept.push_back(preprocess_recording(rec, cfg));
  }
  if (kept.empty()) return kept;
  const SessionStats stats = session_stats(kept);
  for (auto& rec : kept) zscore_clip(rec, stats, cfg);
  return kept;
}

}  // namespace eegfm
