#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

#include "eegfm/types.hpp"

namespace eegfm {

struct PatchConfig {
  int window = 200;  // samples per patch (1 s at 200 Hz)
  int overlap = 20;  // samples shared between consecutive patches (0.1 s)

  int stride() const { return window - overlap; }

  void validate() const {
    if (window <= 0) throw std::invalid_argument("PatchConfig: window must be positive");
    if (overlap < 0 || overlap >= window)
      throw std::invalid_argument("PatchConfig: overlap must satisfy 0 <= overlap < window");
  }
};

// Number of complete windows of length `window` with hop `window - overlap`
// that fit into `total` samples; trailing samples that cannot fill a whole
// window are dropped. A ceil-style count would include a final window that
// overruns the signal end (e.g. a 12th patch for 10 s at 200 Hz with the
// default 200/20 geometry), so the floor form is used: it is the unique
// count consistent with keeping complete windows only, and it yields 11
// patches for that 10 s example.
inline int patch_count(int64_t total, const PatchConfig& pc) {
  pc.validate();
  if (total < 0) throw std::invalid_argument("patch_count: total must be non-negative");
  if (total < pc.window) return 0;
  return static_cast<int>((total - pc.window) / pc.stride() + 1);
}

// Patch grid for one recording. Rows are flattened channel-major:
// row(c * patches + k) holds patch k of channel c. This flat order is the
// token order used everywhere downstream (masking, encodings, losses).
template <typename Scalar>
struct PatchGrid {
  int channels = 0;
  int patches = 0;
  int window = 0;
  Mat<Scalar> x;  // (channels * patches) x window

  int64_t tokens() const { return static_cast<int64_t>(channels) * patches; }
  int flat(int c, int k) const { return c * patches + k; }
};

template <typename Scalar = float>
PatchGrid<Scalar> segment(const MatF& data, const PatchConfig& pc) {
  pc.validate();
  const int c_count = static_cast<int>(data.rows());
  const int p = patch_count(data.cols(), pc);
  if (c_count == 0) throw std::invalid_argument("segment: recording has no channels");
  if (p == 0)
    throw std::invalid_argument("segment: recording shorter than one window (" +
                                std::to_string(data.cols()) + " < " +
                                std::to_string(pc.window) + " samples)");
  PatchGrid<Scalar> grid;
  grid.channels = c_count;
  grid.patches = p;
  grid.window = pc.window;
  grid.x.resize(static_cast<int64_t>(c_count) * p, pc.window);
  const int hop = pc.stride();
  for (int c = 0; c < c_count; ++c)
    for (int k = 0; k < p; ++k)
      grid.x.row(grid.flat(c, k)) =
          data.row(c).segment(static_cast<int64_t>(k) * hop, pc.window).template cast<Scalar>();
  return grid;
}

}  // namespace eegfm
