#pragma once

#include <string>
#include <vector>

#include "eegfm/signal.hpp"
#include "eegfm/types.hpp"

namespace eegfm {

struct PreprocessConfig {
  double target_rate = 200.0;
  double band_low = 0.5;    // Hz
  double band_high = 99.5;  // Hz
  double min_duration_s = 10.0;
  double clip_sigma = 15.0;
  double std_floor = 1e-8;
  double filter_atten_db = 90.0;

  void validate() const;

  // Transition width that keeps the stopband edges at band_low/4 and the
  // target Nyquist, and the passband edges at 2*band_low and 0.9*band_high.
  double filter_transition_hz() const;
};

// True when the recording is long enough to keep.
bool accept_duration(int64_t samples, double rate, const PreprocessConfig& cfg);

// Resample + band-pass one recording (no normalization; that is pooled per
// session). Duration gate must have been applied by the caller.
EegRecording preprocess_recording(const EegRecording& rec, const PreprocessConfig& cfg);

// Per-channel mean/std pooled over all recordings of one session.
struct SessionStats {
  VecD mean;  // per channel
  VecD stddev;
};
SessionStats session_stats(const std::vector<EegRecording>& session);

// z-score with the pooled stats (std floored at cfg.std_floor, so constant
// channels map to zeros), then clip to +-clip_sigma. In place.
void zscore_clip(EegRecording& rec, const SessionStats& stats, const PreprocessConfig& cfg);

struct PreprocessReport {
  std::vector<std::string> rejected_ids;  // too short
};

// Full pipeline over one session: duration gate -> resample -> band-pass ->
// pooled z-score -> clip. Recordings must share a channel layout.
std::vector<EegRecording> preprocess_session(const std::vector<EegRecording>& session,
                                             const PreprocessConfig& cfg,
                                             PreprocessReport* report = nullptr);

}  // namespace eegfm
