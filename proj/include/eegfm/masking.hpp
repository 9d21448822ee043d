#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "eegfm/rng.hpp"
#include "eegfm/types.hpp"

namespace eegfm {

struct MaskParams {
  double ratio = 0.55;        // fraction of tokens masked
  double r_spatial_cm = 3.0;  // spatial seed-growth radius
  double r_temporal_s = 3.0;  // temporal seed-growth radius
  double dropout = 0.10;      // probability a seed drops whole channels
  double r_dropout_cm = 4.0;  // channel-dropout neighborhood
  enum class Mode { block, random } mode = Mode::block;

  void validate() const {
    std::string issues;
    if (ratio < 0.0 || ratio > 1.0) issues += "ratio must be in [0, 1]; ";
    if (r_spatial_cm < 0.0) issues += "r_spatial_cm must be >= 0; ";
    if (r_temporal_s < 0.0) issues += "r_temporal_s must be >= 0; ";
    if (dropout < 0.0 || dropout > 1.0) issues += "dropout must be in [0, 1]; ";
    if (r_dropout_cm < 0.0) issues += "r_dropout_cm must be >= 0; ";
    if (!issues.empty()) throw std::invalid_argument("MaskParams: " + issues);
  }
};

// Boolean grid over tokens, flat index c * patches + k (same order as
// PatchGrid rows).
struct Mask {
  int channels = 0;
  int patches = 0;
  std::vector<uint8_t> masked;

  int64_t count() const {
    int64_t n = 0;
    for (uint8_t v : masked) n += v;
    return n;
  }
  bool at(int c, int k) const { return masked[static_cast<size_t>(c) * patches + k] != 0; }
};

struct Partition {
  std::vector<int64_t> visible;  // flat indices, ascending
  std::vector<int64_t> masked;
};

inline Partition partition(const Mask& mask) {
  Partition p;
  for (int64_t i = 0; i < static_cast<int64_t>(mask.masked.size()); ++i)
    (mask.masked[i] ? p.masked : p.visible).push_back(i);
  return p;
}

inline int64_t mask_target(int channels, int patches, double ratio) {
  return std::llround(ratio * channels * patches);
}

// Uniformly random subset of exactly round(ratio * C * p) tokens.
inline Mask random_mask(int channels, int patches, double ratio, Rng& rng) {
  if (channels <= 0 || patches <= 0)
    throw std::invalid_argument("random_mask: grid must be non-empty");
  if (ratio < 0.0 || ratio > 1.0) throw std::invalid_argument("random_mask: ratio must be in [0,1]");
  Mask m;
  m.channels = channels;
  m.patches = patches;
  m.masked.assign(static_cast<size_t>(channels) * patches, 0);
  const int64_t target = mask_target(channels, patches, ratio);
  std::vector<int> perm = rng.permutation(channels * patches);
  for (int64_t i = 0; i < target; ++i) m.masked[perm[i]] = 1;
  return m;
}

// Seed-and-grow spatio-temporal block masking. Each iteration draws a seed
// token (c, tau); with probability `dropout` every patch of the channels
// within r_dropout_cm of c is masked, otherwise the patches within the
// temporal radius (converted to patch steps via the hop duration) are masked
// for every channel within r_spatial_cm. Seeds accumulate until the masked
// count reaches round(ratio * C * p); a uniformly random subset of the
// overshoot is then unmasked so the count is exact.
inline Mask block_mask(const Points3& positions_cm, int patches, const MaskParams& params,
                       double stride_seconds, Rng& rng) {
  params.validate();
  const int channels = static_cast<int>(positions_cm.rows());
  if (channels <= 0 || patches <= 0)
    throw std::invalid_argument("block_mask: grid must be non-empty");
  if (stride_seconds <= 0.0)
    throw std::invalid_argument("block_mask: stride_seconds must be positive");
  Mask m;
  m.channels = channels;
  m.patches = patches;
  m.masked.assign(static_cast<size_t>(channels) * patches, 0);
  const int64_t total = static_cast<int64_t>(channels) * patches;
  const int64_t target = mask_target(channels, patches, params.ratio);
  if (target == 0) return m;

  const int r_t = static_cast<int>(std::llround(params.r_temporal_s / stride_seconds));
  std::vector<std::vector<int>> spatial_nbrs(channels), dropout_nbrs(channels);
  for (int a = 0; a < channels; ++a)
    for (int b = 0; b < channels; ++b) {
      const double d = (positions_cm.row(a) - positions_cm.row(b)).norm();
      if (d <= params.r_spatial_cm) spatial_nbrs[a].push_back(b);
      if (d <= params.r_dropout_cm) dropout_nbrs[a].push_back(b);
    }

  int64_t count = 0;
  auto set_masked = [&](int c, int k) {
    uint8_t& cell = m.masked[static_cast<size_t>(c) * patches + k];
    if (!cell) {
      cell = 1;
      ++count;
    }
  };
  const int64_t seed_cap = 50 * total + 100;
  int64_t iters = 0;
  while (count < target && iters < seed_cap) {
    ++iters;
    const int c = static_cast<int>(rng.uniform_int(channels));
    const int tau = static_cast<int>(rng.uniform_int(patches));
    if (rng.bernoulli(params.dropout)) {
      for (int cc : dropout_nbrs[c])
        for (int k = 0; k < patches; ++k) set_masked(cc, k);
    } else {
      const int k0 = std::max(0, tau - r_t);
      const int k1 = std::min(patches - 1, tau + r_t);
      for (int cc : spatial_nbrs[c])
        for (int k = k0; k <= k1; ++k) set_masked(cc, k);
    }
  }
  if (count < target) {
    // Degenerate geometries can starve the sampler; finish uniformly.
    std::vector<int64_t> open;
    for (int64_t i = 0; i < total; ++i)
      if (!m.masked[i]) open.push_back(i);
    rng.shuffle(open);
    for (int64_t i = 0; count < target; ++i, ++count) m.masked[open[i]] = 1;
  } else if (count > target) {
    std::vector<int64_t> on;
    for (int64_t i = 0; i < total; ++i)
      if (m.masked[i]) on.push_back(i);
    rng.shuffle(on);
    for (int64_t i = 0; i < count - target; ++i) m.masked[on[i]] = 0;
  }
  return m;
}

inline Mask sample_mask(const Points3& positions_cm, int patches, const MaskParams& params,
                        double stride_seconds, Rng& rng) {
  if (params.mode == MaskParams::Mode::random)
    return random_mask(static_cast<int>(positions_cm.rows()), patches, params.ratio, rng);
  return block_mask(positions_cm, patches, params, stride_seconds, rng);
}

}  // namespace eegfm
