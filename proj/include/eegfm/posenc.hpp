#pragma once

#include <cmath>
#include <stdexcept>
#include <string>

#include "eegfm/nn.hpp"
#include "eegfm/types.hpp"

namespace eegfm {

struct FourierConfig {
  int n_freq = 4;                 // integer frequencies 0..n_freq-1 per axis
  double time_scale = 1.0 / 32.0; // t-axis scale s_t
  double spatial_extent_cm = 15.0;

  int width() const { return 2 * n_freq * n_freq * n_freq * n_freq; }

  void validate() const {
    std::string issues;
    if (n_freq < 2 || n_freq > 5)
      issues += "n_freq must be in {2, 3, 4, 5} (512-wide at 4, 1250-wide at 5); ";
    if (time_scale <= 0.0) issues += "time_scale must be positive; ";
    if (spatial_extent_cm <= 0.0) issues += "spatial_extent_cm must be positive; ";
    if (!issues.empty()) throw std::invalid_argument("FourierConfig: " + issues);
  }
};

// Extends channel coordinates to per-token 4D positions. Spatial axes are
// affinely mapped from [-extent, extent] cm to [0, 1]; the time axis is the
// 1-based patch index scaled by time_scale. Row order: token (c, k) at
// c * patches + k. Coordinates beyond twice the extent are rejected as a
// likely unit mistake (meters or millimeters instead of centimeters).
inline MatD extend_positions(const Points3& positions_cm, int patches, const FourierConfig& cfg) {
  cfg.validate();
  if (patches <= 0) throw std::invalid_argument("extend_positions: patches must be positive");
  const double ext = cfg.spatial_extent_cm;
  if ((positions_cm.array().abs() > 2.0 * ext).any())
    throw std::invalid_argument(
        "extend_positions: coordinate beyond twice the spatial extent; positions must be in cm");
  const int c = static_cast<int>(positions_cm.rows());
  MatD out(static_cast<int64_t>(c) * patches, 4);
  for (int ch = 0; ch < c; ++ch)
    for (int k = 0; k < patches; ++k) {
      const int64_t row = static_cast<int64_t>(ch) * patches + k;
      for (int ax = 0; ax < 3; ++ax) out(row, ax) = (positions_cm(ch, ax) + ext) / (2.0 * ext);
      out(row, 3) = (k + 1) * cfg.time_scale;  // 1-based patch index
    }
  return out;
}

// Fourier features over the 4D Cartesian frequency grid. Flattened frequency
// index m = i + j*n + k*n^2 + l*n^3 (x fastest), angle
// theta_m = 2*pi*(i*x + j*y + k*z + l*t); output row layout is
// [cos theta_0 .. cos theta_{n^4-1}, sin theta_0 .. sin theta_{n^4-1}].
// This ordering is a compatibility contract: checkpoints depend on it.
template <typename S>
Mat<S> fourier_encode(const MatD& ext, const FourierConfig& cfg) {
  cfg.validate();
  if (ext.cols() != 4) throw std::invalid_argument("fourier_encode: expected 4 coordinates");
  const int n = cfg.n_freq;
  const int n4 = n * n * n * n;
  Mat<S> out(ext.rows(), 2 * n4);
  for (int64_t r = 0; r < ext.rows(); ++r) {
    int m = 0;
    for (int l = 0; l < n; ++l)
      for (int k = 0; k < n; ++k)
        for (int j = 0; j < n; ++j)
          for (int i = 0; i < n; ++i, ++m) {
            const double theta = 2.0 * M_PI *
                                 (i * ext(r, 0) + j * ext(r, 1) + k * ext(r, 2) + l * ext(r, 3));
            out(r, m) = static_cast<S>(std::cos(theta));
            out(r, n4 + m) = static_cast<S>(std::sin(theta));
          }
  }
  return out;
}

// Learned half of the positional encoding plus the merge:
//   P = LayerNorm_out(fit(F_pe) + LayerNorm_branch(GELU(Linear(ext))))
// Linear is bias-free; the two LayerNorms have separate parameters. fit()
// truncates or zero-pads the Fourier block to the model width; the named
// configurations match exactly and need no adjustment, and the learned
// branch compensates for truncation in the small desk configurations.
template <typename S>
struct PosEnc {
  int dim = 0;
  Linear<S> lin;  // 4 -> dim
  NormLayer<S> ln_branch, ln_out;

  Mat<S> ext_cache, act_cache, fpe_fit_cache;

  void setup(const std::string& name, int d, double eps) {
    dim = d;
    lin.setup(name + ".lin", 4, d, false);
    ln_branch.setup(name + ".ln_branch", d, NormKind::layernorm, eps);
    ln_out.setup(name + ".ln_out", d, NormKind::layernorm, eps);
  }

  Mat<S> fit_width(const Mat<S>& f_pe) const {
    if (f_pe.cols() == dim) return f_pe;
    Mat<S> out = Mat<S>::Zero(f_pe.rows(), dim);
    const int64_t keep = std::min<int64_t>(dim, f_pe.cols());
    out.leftCols(keep) = f_pe.leftCols(keep);
    return out;
  }

  Mat<S> forward(const Mat<S>& ext, const Mat<S>& f_pe) {
    if (ext.rows() != f_pe.rows())
      throw std::invalid_argument("PosEnc: ext and Fourier block disagree on rows");
    ext_cache = ext;
    act_cache = lin.forward(ext);
    const Mat<S> branch =
        ln_branch.forward(act_cache.unaryExpr([](S v) { return gelu(v); }));
    fpe_fit_cache = fit_width(f_pe);
    return ln_out.forward(fpe_fit_cache + branch);
  }

  // No gradient flows to the coordinates or the Fourier block (constants).
  void backward(const Mat<S>& dp) {
    const Mat<S> dsum = ln_out.backward(dp);
    const Mat<S> dact =
        ln_branch.backward(dsum).cwiseProduct(act_cache.unaryExpr([](S v) { return gelu_grad(v); }));
    lin.backward(dact);
  }
};

}  // namespace eegfm
