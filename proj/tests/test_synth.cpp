#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <vector>

#include <unsupported/Eigen/FFT>

#include "eegfm/montage.hpp"
#include "eegfm/rng.hpp"
#include "eegfm/synth.hpp"

using namespace eegfm;

namespace {

// per-bin power spectrum of one channel
std::vector<double> channel_power(const EegRecording& rec, int ch) {
  const int64_t n = rec.data.cols();
  std::vector<double> x(n);
  for (int64_t t = 0; t < n; ++t) x[size_t(t)] = double(rec.data(ch, t));
  Eigen::FFT<double> fft;
  std::vector<std::complex<double>> spec;
  fft.fwd(spec, x);
  std::vector<double> p(size_t(n / 2 + 1));
  for (size_t k = 0; k < p.size(); ++k) p[k] = std::norm(spec[k]);
  return p;
}

double band_power(const EegRecording& rec, double lo_hz, double hi_hz) {
  const int64_t n = rec.data.cols();
  double total = 0.0;
  for (int ch = 0; ch < rec.data.rows(); ++ch) {
    const std::vector<double> p = channel_power(rec, ch);
    for (size_t k = 1; k < p.size(); ++k) {
      const double f = double(k) * rec.rate / double(n);
      if (f >= lo_hz && f <= hi_hz) total += p[k];
    }
  }
  return total;
}

// pair-counting AUC: fraction of (positive, negative) pairs ranked correctly
double pair_auc(const std::vector<double>& pos, const std::vector<double>& neg) {
  double wins = 0.0;
  for (double p : pos)
    for (double q : neg) wins += p > q ? 1.0 : (p == q ? 0.5 : 0.0);
  return wins / (double(pos.size()) * double(neg.size()));
}

}  // namespace

TEST_CASE("generation is deterministic and shaped by the spec") {
  const ElectrodeLayout& layout = ElectrodeLayout::builtin_1010();
  SynthSpec spec;
  spec.n_recordings = 7;
  spec.duration_s = 4.0;

  Rng rng_a = Rng(42).stream("synth");
  Rng rng_b = Rng(42).stream("synth");
  const auto a = synth_generate(spec, layout, rng_a);
  const auto b = synth_generate(spec, layout, rng_b);
  REQUIRE(a.size() == 7);
  REQUIRE(b.size() == 7);
  for (size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].id == b[i].id);
    CHECK(a[i].label == b[i].label);
    CHECK((a[i].data - b[i].data).cwiseAbs().maxCoeff() == 0.0f);
  }

  Rng rng_c = Rng(43).stream("synth");
  const auto c = synth_generate(spec, layout, rng_c);
  CHECK((a[0].data - c[0].data).cwiseAbs().maxCoeff() > 0.0f);

  const Points3 want = layout.resolve(spec.channel_names);
  for (size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].data.rows() == 4);
    CHECK(a[i].data.cols() == 800);
    CHECK(a[i].rate == 200.0);
    CHECK(a[i].channels == spec.channel_names);
    CHECK((a[i].positions - want).cwiseAbs().maxCoeff() == 0.0);
    CHECK(a[i].label == int(i) % 2);  // labels cycle round-robin
    CHECK(a[i].session_id == "synth");
  }
  CHECK(a[0].id != a[1].id);
}

TEST_CASE("each recording's dominant frequency falls in its class band") {
  const ElectrodeLayout& layout = ElectrodeLayout::builtin_1010();
  SynthSpec spec;
  spec.n_recordings = 16;
  Rng rng = Rng(7).stream("synth");
  const auto recs = synth_generate(spec, layout, rng);
  for (const auto& rec : recs) {
    const PeakSpec& pk = spec.peaks[size_t(rec.label.value())];
    const int64_t n = rec.data.cols();
    const double df = rec.rate / double(n);
    for (int ch = 0; ch < rec.data.rows(); ++ch) {
      const std::vector<double> p = channel_power(rec, ch);
      const size_t kmax = size_t(std::max_element(p.begin() + 1, p.end()) - p.begin());
      const double fmax = double(kmax) * df;
      CHECK(fmax > pk.center_hz - pk.bandwidth_hz / 2.0 - df);
      CHECK(fmax < pk.center_hz + pk.bandwidth_hz / 2.0 + df);
    }
  }
}

TEST_CASE("class band power separates the classes almost perfectly") {
  const ElectrodeLayout& layout = ElectrodeLayout::builtin_1010();
  SynthSpec spec;
  spec.n_recordings = 40;
  Rng rng = Rng(11).stream("synth");
  const auto recs = synth_generate(spec, layout, rng);
  // score every recording by power in the class-1 band (22 +- 1 Hz)
  std::vector<double> pos, neg;
  for (const auto& rec : recs) {
    const double s = band_power(rec, 21.0, 23.0);
    (rec.label == 1 ? pos : neg).push_back(s);
  }
  REQUIRE(pos.size() == 20);
  REQUIRE(neg.size() == 20);
  CHECK(pair_auc(pos, neg) > 0.95);
}

TEST_CASE("single-class corpora label everything zero") {
  const ElectrodeLayout& layout = ElectrodeLayout::builtin_1010();
  SynthSpec spec;
  spec.n_recordings = 5;
  spec.n_classes = 1;
  spec.peaks = {{12.0, 2.0, 2.0}};
  spec.duration_s = 2.0;
  Rng rng = Rng(3).stream("synth");
  const auto recs = synth_generate(spec, layout, rng);
  for (const auto& rec : recs) CHECK(rec.label == 0);
}

TEST_CASE("spec validation rejects inconsistent settings") {
  const ElectrodeLayout& layout = ElectrodeLayout::builtin_1010();
  Rng rng = Rng(1).stream("synth");
  SynthSpec spec;

  SynthSpec bad = spec;
  bad.peaks.push_back({30.0, 2.0, 1.0});  // three peaks, two classes
  CHECK_THROWS_AS(synth_generate(bad, layout, rng), std::invalid_argument);

  bad = spec;
  bad.peaks[1].center_hz = 99.5;  // band tips over Nyquist at rate 200
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);

  bad = spec;
  bad.noise_amplitude = -0.1;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);

  bad = spec;
  bad.n_recordings = 0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);

  spec.validate();  // defaults are fine
}

TEST_CASE("pink noise is normalized and follows the requested spectral slope") {
  const int64_t n = 1 << 16;
  const double rate = 200.0;
  Rng rng = Rng(5).stream("noise");

  const VecD x = pink_noise(n, rate, 1.0, rng);
  CHECK(std::abs(std::sqrt(x.array().square().mean()) - 1.0) < 1e-12);
  CHECK(std::abs(x.mean()) < 1e-12);  // DC bin is zeroed

  // mean per-bin power in octave bands should fall as f^-exponent
  auto slope = [&](const VecD& sig, double& out) {
    std::vector<double> v(sig.data(), sig.data() + sig.size());
    Eigen::FFT<double> fft;
    std::vector<std::complex<double>> spec;
    fft.fwd(spec, v);
    std::vector<double> logf, logp;
    for (double lo = 1.0; lo < 64.0; lo *= 2.0) {
      const double hi = lo * 2.0;
      double sum = 0.0;
      int count = 0;
      for (size_t k = 1; k < size_t(n / 2); ++k) {
        const double f = double(k) * rate / double(n);
        if (f >= lo && f < hi) {
          sum += std::norm(spec[k]);
          ++count;
        }
      }
      logf.push_back(std::log2(std::sqrt(lo * hi)));
      logp.push_back(std::log2(sum / count));
    }
    // least squares line through (logf, logp)
    const double m = double(logf.size());
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (size_t i = 0; i < logf.size(); ++i) {
      sx += logf[i];
      sy += logp[i];
      sxx += logf[i] * logf[i];
      sxy += logf[i] * logp[i];
    }
    out = (m * sxy - sx * sy) / (m * sxx - sx * sx);
  };

  double s1 = 0.0;
  slope(x, s1);
  CHECK(std::abs(s1 - (-1.0)) < 0.15);

  Rng rng2 = Rng(5).stream("noise2");
  const VecD flat = pink_noise(n, rate, 0.0, rng2);
  double s0 = 0.0;
  slope(flat, s0);
  CHECK(std::abs(s0) < 0.15);

  Rng rng3 = Rng(5).stream("noise3");
  CHECK_THROWS_AS(pink_noise(0, rate, 1.0, rng3), std::invalid_argument);
}
