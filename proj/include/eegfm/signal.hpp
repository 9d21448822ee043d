#pragma once

#include "eegfm/types.hpp"

namespace eegfm {

// Modified Bessel function of the first kind, order zero (power series).
double bessel_i0(double x);

// Kaiser window shape parameter for a target stopband attenuation in dB.
double kaiser_beta(double atten_db);

// Symmetric odd-length lowpass windowed-sinc kernel. `cutoff_hz` is the
// -6 dB point, `trans_hz` the full transition width, `atten_db` the target
// stopband attenuation; tap count is derived from the Kaiser estimate.
VecD design_lowpass_fir(double cutoff_hz, double fs, double trans_hz, double atten_db);

// Bandpass as the difference of two lowpass kernels of equal length.
VecD design_bandpass_fir(double low_hz, double high_hz, double fs, double trans_hz,
                         double atten_db);

// Magnitude of the kernel's frequency response at `freq_hz` (single pass).
double fir_response(const VecD& h, double freq_hz, double fs);

// Zero-phase filtering: forward pass, then backward pass, with odd-reflection
// padding of one kernel length at each end. The effective magnitude response
// is the square of the kernel's.
VecD filtfilt(const VecD& h, const VecD& x);

// Windowed-sinc rational resampling with anti-alias cutoff at the smaller
// Nyquist. Output length is round(n * rate_out / rate_in); equal rates are an
// exact pass-through. Edges are mirror-padded and each output point is
// normalized by its local kernel mass.
VecD resample(const VecD& x, double rate_in, double rate_out);

// Channel-wise variants (recordings are float32 row-per-channel).
MatF resample_channels(const MatF& data, double rate_in, double rate_out);
MatF filtfilt_channels(const VecD& h, const MatF& data);

}  // namespace eegfm
