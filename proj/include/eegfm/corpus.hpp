#pragma once

#include <string>
#include <vector>

#include "eegfm/types.hpp"

namespace eegfm {

// Corpus container: `corpus.json` (UTF-8 metadata: channels, rate, session
// and subject ids, electrode positions in cm, optional integer label, byte
// offset and sample count per record) next to `corpus.bin`, the raw payload.
// Payload layout per record: C x T float32, little-endian, row-major by
// channel (channel 0's T samples, then channel 1's, ...).
void save_corpus(const std::string& dir, const std::vector<EegRecording>& recs);

std::vector<EegRecording> load_corpus(const std::string& dir);

// Keeps only the named channels (rows, names and positions stay aligned;
// order follows the recording, not the request). Matching is
// case-insensitive. Throws listing every requested name the recording does
// not have, and rejects an empty request or an empty result.
EegRecording select_channels(const EegRecording& rec, const std::vector<std::string>& keep);

}  // namespace eegfm
