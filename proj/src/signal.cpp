#include "eegfm/signal.hpp"

#include <cmath>
#include <stdexcept>

namespace eegfm {

double bessel_i0(double x) {
  // Power series sum_k ((x/2)^k / k!)^2; converges fast for the beta range
  // used by window design.
  const double half = x / 2.0;
  double term = 1.0;
  double sum = 1.0;
  for (int k = 1; k < 64; ++k) {
    term *= (half / k) * (half / k);
    sum += term;
    if (term < 1e-18 * sum) break;
  }
  return sum;
}

double kaiser_beta(double atten_db) {
  if (atten_db > 50.0) return 0.1102 * (atten_db - 8.7);
  if (atten_db >= 21.0) return 0.5842 * std::pow(atten_db - 21.0, 0.4) + 0.07886 * (atten_db - 21.0);
  return 0.0;
}

namespace {

int kaiser_taps(double atten_db, double trans_hz, double fs) {
  int n = static_cast<int>(std::ceil((atten_db - 7.95) / (14.36 * trans_hz / fs))) + 1;
  if (n % 2 == 0) ++n;  // symmetric zero-phase kernel needs odd length
  return std::max(n, 11);
}

VecD kaiser_sinc(double cutoff_hz, double fs, int taps, double beta) {
  VecD h(taps);
  const int mid = taps / 2;
  const double fc = cutoff_hz / fs;  // cycles per sample
  const double denom = bessel_i0(beta);
  for (int i = 0; i < taps; ++i) {
    const double m = i - mid;
    const double sinc = (m == 0.0) ? 2.0 * fc : std::sin(2.0 * M_PI * fc * m) / (M_PI * m);
    const double t = m / mid;  // [-1, 1]
    const double win = bessel_i0(beta * std::sqrt(std::max(0.0, 1.0 - t * t))) / denom;
    h[i] = sinc * win;
  }
  return h;
}

}  // namespace

VecD design_lowpass_fir(double cutoff_hz, double fs, double trans_hz, double atten_db) {
  if (cutoff_hz <= 0.0 || cutoff_hz >= fs / 2.0)
    throw std::invalid_argument("design_lowpass_fir: cutoff must lie in (0, fs/2)");
  if (trans_hz <= 0.0) throw std::invalid_argument("design_lowpass_fir: transition must be positive");
  const int taps = kaiser_taps(atten_db, trans_hz, fs);
  VecD h = kaiser_sinc(cutoff_hz, fs, taps, kaiser_beta(atten_db));
  h /= h.sum();  // unity DC gain
  return h;
}

VecD design_bandpass_fir(double low_hz, double high_hz, double fs, double trans_hz,
                         double atten_db) {
  if (!(0.0 < low_hz && low_hz < high_hz && high_hz < fs / 2.0))
    throw std::invalid_argument("design_bandpass_fir: need 0 < low < high < fs/2");
  if (trans_hz <= 0.0) throw std::invalid_argument("design_bandpass_fir: transition must be positive");
  const int taps = kaiser_taps(atten_db, trans_hz, fs);
  const double beta = kaiser_beta(atten_db);
  VecD lo = kaiser_sinc(low_hz, fs, taps, beta);
  VecD hi = kaiser_sinc(high_hz, fs, taps, beta);
  lo /= lo.sum();
  hi /= hi.sum();
  return hi - lo;
}

double fir_response(const VecD& h, double freq_hz, double fs) {
  const double w = 2.0 * M_PI * freq_hz / fs;
  double re = 0.0, im = 0.0;
  for (int i = 0; i < h.size(); ++i) {
    re += h[i] * std::cos(w * i);
    im -= h[i] * std::sin(w * i);
  }
  return std::sqrt(re * re + im * im);
}

namespace {

// x padded by odd reflection about its endpoints; pad = kernel length.
VecD odd_reflect_pad(const VecD& x, int pad) {
  const int64_t n = x.size();
  VecD out(n + 2 * pad);
  for (int i = 0; i < pad; ++i) out[i] = 2.0 * x[0] - x[std::min<int64_t>(pad - i, n - 1)];
  out.segment(pad, n) = x;
  for (int i = 0; i < pad; ++i)
    out[pad + n + i] = 2.0 * x[n - 1] - x[std::max<int64_t>(n - 2 - i, 0)];
  return out;
}

VecD convolve_same(const VecD& h, const VecD& x) {
  const int64_t n = x.size();
  const int taps = static_cast<int>(h.size());
  const int mid = taps / 2;
  VecD y(n);
  for (int64_t i = 0; i < n; ++i) {
    const int64_t lo = std::max<int64_t>(0, i - mid);
    const int64_t hi = std::min<int64_t>(n - 1, i + taps - 1 - mid);
    double acc = 0.0;
    for (int64_t j = lo; j <= hi; ++j) acc += x[j] * h[mid + (i - j)];
    y[i] = acc;
  }
  return y;
}

}  // namespace

VecD filtfilt(const VecD& h, const VecD& x) {
  if (x.size() == 0) return x;
  const int pad = static_cast<int>(h.size());
  VecD padded = odd_reflect_pad(x, pad);
  VecD fwd = convolve_same(h, padded);
  VecD rev = fwd.reverse();
  VecD bwd = convolve_same(h, rev);
  VecD out = bwd.reverse().segment(pad, x.size());
  return out;
}

VecD resample(const VecD& x, double rate_in, double rate_out) {
  if (rate_in <= 0.0 || rate_out <= 0.0)
    throw std::invalid_argument("resample: rates must be positive");
  if (rate_in == rate_out) return x;  // exact pass-through
  const int64_t n = x.size();
  const int64_t out_n = static_cast<int64_t>(std::llround(n * rate_out / rate_in));
  const double step = rate_in / rate_out;  // input samples per output sample
  // Anti-alias at the smaller Nyquist with some roll-off margin.
  const double fc = 0.5 * std::min(1.0, rate_out / rate_in) * 0.96;
  const double beta = kaiser_beta(90.0);
  const double denom = bessel_i0(beta);
  const int half = static_cast<int>(std::ceil(32.0 * std::max(1.0, step)));
  VecD y(out_n);
  for (int64_t i = 0; i < out_n; ++i) {
    const double t = i * step;
    const int64_t j0 = static_cast<int64_t>(std::floor(t)) - half + 1;
    const int64_t j1 = static_cast<int64_t>(std::floor(t)) + half;
    double acc = 0.0, mass = 0.0;
    for (int64_t j = j0; j <= j1; ++j) {
      const double u = t - j;
      const double arg = u / half;
      if (arg <= -1.0 || arg >= 1.0) continue;
      const double sinc = (u == 0.0) ? 2.0 * fc : std::sin(2.0 * M_PI * fc * u) / (M_PI * u);
      const double w = bessel_i0(beta * std::sqrt(1.0 - arg * arg)) / denom;
      const double k = sinc * w;
      // mirror padding at the edges
      int64_t jj = j;
      if (jj < 0) jj = -jj;
      if (jj >= n) jj = 2 * (n - 1) - jj;
      jj = std::clamp<int64_t>(jj, 0, n - 1);
      acc += x[jj] * k;
      mass += k;
    }
    y[i] = acc / mass;
  }
  return y;
}

MatF resample_channels(const MatF& data, double rate_in, double rate_out) {
  if (rate_in == rate_out) return data;
  const int c = static_cast<int>(data.rows());
  const int64_t out_n = static_cast<int64_t>(std::llround(data.cols() * rate_out / rate_in));
  MatF out(c, out_n);
  for (int ch = 0; ch < c; ++ch) {
    VecD row = data.row(ch).transpose().cast<double>();
    out.row(ch) = resample(row, rate_in, rate_out).transpose().cast<float>();
  }
  return out;
}

MatF filtfilt_channels(const VecD& h, const MatF& data) {
  MatF out(data.rows(), data.cols());
  for (int ch = 0; ch < data.rows(); ++ch) {
    VecD row = data.row(ch).transpose().cast<double>();
    out.row(ch) = filtfilt(h, row).transpose().cast<float>();
  }
  return out;
}

}  // namespace eegfm
