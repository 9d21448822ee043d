#include "eegfm/synth.hpp"

#include <cmath>
#include <complex>
#include <stdexcept>

#include <unsupported/Eigen/FFT>

namespace eegfm {

void SynthSpec::validate() const {
  std::string issues;
  if (n_recordings <= 0) issues += "n_recordings must be positive; ";
  if (channel_names.empty()) issues += "channel_names must not be empty; ";
  if (duration_s <= 0.0) issues += "duration_s must be positive; ";
  if (rate <= 0.0) issues += "rate must be positive; ";
  if (n_classes <= 0) issues += "n_classes must be positive; ";
  if (static_cast<int>(peaks.size()) != n_classes)
    issues += "peaks must list exactly one spectral peak per class; ";
  for (const auto& p : peaks) {
    if (p.center_hz - p.bandwidth_hz / 2.0 <= 0.0 ||
        p.center_hz + p.bandwidth_hz / 2.0 >= rate / 2.0)
      issues += "peak band must lie strictly inside (0, rate/2); ";
    if (p.amplitude < 0.0) issues += "peak amplitude must be non-negative; ";
  }
  if (noise_amplitude < 0.0) issues += "noise_amplitude must be non-negative; ";
  if (!issues.empty()) throw std::invalid_argument("SynthSpec: " + issues);
}

VecD pink_noise(int64_t n, double rate, double exponent, Rng& rng) {
  if (n <= 0) throw std::invalid_argument("pink_noise: n must be positive");
  std::vector<double> white(n);
  for (auto& w : white) w = rng.normal();
  Eigen::FFT<double> fft;
  std::vector<std::complex<double>> spec;
  fft.fwd(spec, white);
  spec[0] = 0.0;  // no DC
  for (size_t k = 1; k < spec.size(); ++k) {
    const double f = std::min<double>(k, n - k) * rate / n;
    spec[k] *= std::pow(f, -exponent / 2.0);
  }
  std::vector<double> shaped;
  fft.inv(shaped, spec);
  VecD out = Eigen::Map<VecD>(shaped.data(), n);
  const double sd = std::sqrt(out.array().square().mean());
  if (sd > 0.0) out /= sd;
  return out;
}

std::vector<EegRecording> synth_generate(const SynthSpec& spec, const ElectrodeLayout& layout,
                                         Rng& rng) {
  spec.validate();
  const int64_t n = static_cast<int64_t>(std::llround(spec.duration_s * spec.rate));
  const int c = static_cast<int>(spec.channel_names.size());
  const Points3 positions = layout.resolve(spec.channel_names);
  std::vector<EegRecording> out;
  out.reserve(spec.n_recordings);
  for (int i = 0; i < spec.n_recordings; ++i) {
    const int label = i % spec.n_classes;
    const PeakSpec& pk = spec.peaks[label];
    const double f = rng.uniform(pk.center_hz - pk.bandwidth_hz / 2.0,
                                 pk.center_hz + pk.bandwidth_hz / 2.0);
    EegRecording rec;
    char id[32];
    std::snprintf(id, sizeof(id), "synth%05d", i);
    rec.id = id;
    rec.channels = spec.channel_names;
    rec.rate = spec.rate;
    rec.session_id = spec.session_id;
    rec.subject_id = spec.subject_id;
    rec.positions = positions;
    rec.label = label;
    rec.data.resize(c, n);
    for (int ch = 0; ch < c; ++ch) {
      const double phase = rng.uniform(0.0, 2.0 * M_PI);
      const VecD noise = spec.noise_amplitude > 0.0
                             ? pink_noise(n, spec.rate, spec.noise_exponent, rng)
                             : VecD::Zero(n);
      for (int64_t t = 0; t < n; ++t) {
        const double s = pk.amplitude * std::sin(2.0 * M_PI * f * t / spec.rate + phase);
        rec.data(ch, t) = static_cast<float>(s + spec.noise_amplitude * noise[t]);
      }
    }
    out.push_back(std::move(rec));
  }
  return out;
}

}  // namespace eegfm
