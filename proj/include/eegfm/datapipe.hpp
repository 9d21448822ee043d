#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "eegfm/rng.hpp"

namespace eegfm {

struct SampleRef {
  int64_t sample = 0;  // index into the corpus
  int channels = 0;
};

struct Bucket {
  int channels = 0;
  std::vector<int64_t> samples;  // shuffled member order
};

struct EpochPlan {
  std::vector<Bucket> buckets;  // ascending channel count
  uint64_t seed = 0;
};

struct Batch {
  int channels = 0;
  std::vector<int64_t> samples;
};

// Groups samples by channel count and shuffles within each bucket. Batches
// are always drawn from a single bucket, so every batch is homogeneous in
// channel count and nothing is ever padded.
inline EpochPlan bucket_shuffle(const std::vector<SampleRef>& index, uint64_t seed) {
  if (index.empty()) throw std::invalid_argument("bucket_shuffle: empty index");
  std::map<int, std::vector<int64_t>> by_channels;
  for (const SampleRef& s : index) {
    if (s.channels <= 0)
      throw std::invalid_argument("bucket_shuffle: sample " + std::to_string(s.sample) +
                                  " has non-positive channel count");
    by_channels[s.channels].push_back(s.sample);
  }
  EpochPlan plan;
  plan.seed = seed;
  Rng rng = Rng(seed).stream("bucket_shuffle");
  for (auto& [channels, samples] : by_channels) {
    rng.shuffle(samples);
    plan.buckets.push_back(Bucket{channels, std::move(samples)});
  }
  return plan;
}

// Emits homogeneous batches; each bucket's ragged tail (fewer than
// batch_size samples) is dropped so every epoch runs a constant number of
// optimization steps. The bucket order of the emitted batches is a
// seed-derived shuffle with each bucket appearing once per batch it can
// fill, i.e. interleaving proportional to bucket size.
inline std::vector<Batch> make_batches(const EpochPlan& plan, int batch_size) {
  if (batch_size < 1) throw std::invalid_argument("make_batches: batch_size must be >= 1");
  std::vector<int> slots;
  for (size_t b = 0; b < plan.buckets.size(); ++b) {
    const int64_t n = static_cast<int64_t>(plan.buckets[b].samples.size()) / batch_size;
    for (int64_t i = 0; i < n; ++i) slots.push_back(static_cast<int>(b));
  }
  if (slots.empty())
    throw std::invalid_argument("make_batches: batch_size " + std::to_string(batch_size) +
                                " exceeds every bucket's size");
  Rng rng = Rng(plan.seed).stream("interleave");
  rng.shuffle(slots);
  std::vector<size_t> cursor(plan.buckets.size(), 0);
  std::vector<Batch> batches;
  batches.reserve(slots.size());
  for (int b : slots) {
    const Bucket& bucket = plan.buckets[b];
    Batch batch;
    batch.channels = bucket.channels;
    batch.samples.assign(bucket.samples.begin() + cursor[b],
                         bucket.samples.begin() + cursor[b] + batch_size);
    cursor[b] += batch_size;
    batches.push_back(std::move(batch));
  }
  return batches;
}

// Audit dump: one line per sample, "batch,channels,sample".
inline std::string plan_csv(const std::vector<Batch>& batches) {
  std::ostringstream out;
  out << "batch,channels,sample\n";
  for (size_t i = 0; i < batches.size(); ++i)
    for (int64_t s : batches[i].samples) out << i << "," << batches[i].channels << "," << s << "\n";
  return out.str();
}

}  // namespace eegfm
