#pragma once

#include <string>
#include <vector>

#include "eegfm/montage.hpp"
#include "eegfm/rng.hpp"
#include "eegfm/types.hpp"

namespace eegfm {

struct PeakSpec {
  double center_hz = 10.0;
  double bandwidth_hz = 2.0;
  double amplitude = 2.0;
};

struct SynthSpec {
  int n_recordings = 64;
  std::vector<std::string> channel_names = {"C3", "C4", "Cz", "Pz"};
  double duration_s = 10.0;
  double rate = 200.0;
  int n_classes = 2;
  // one spectral peak per class; defaults put class 0 at 10 Hz, class 1 at 22 Hz
  std::vector<PeakSpec> peaks = {{10.0, 2.0, 2.0}, {22.0, 2.0, 2.0}};
  double noise_exponent = 1.0;  // 1/f^exponent background
  double noise_amplitude = 0.3;
  std::string session_id = "synth";
  std::string subject_id = "s00";

  void validate() const;
};

// Labeled sinusoid-in-pink-noise corpus. Each recording draws its class peak
// frequency uniformly within the class band and a random phase per channel;
// labels cycle round-robin over classes. Positions come from `layout`.
std::vector<EegRecording> synth_generate(const SynthSpec& spec, const ElectrodeLayout& layout,
                                         Rng& rng);

// 1/f^exponent noise with unit variance, via spectral shaping of white noise.
VecD pink_noise(int64_t n, double rate, double exponent, Rng& rng);

}  // namespace eegfm
