#pragma once

#include <filesystem>
#include <string>

#include <json.hpp>

#include "eegfm/finetune.hpp"
#include "eegfm/flops.hpp"
#include "eegfm/masking.hpp"
#include "eegfm/model.hpp"
#include "eegfm/optim.hpp"
#include "eegfm/patching.hpp"
#include "eegfm/preprocess.hpp"
#include "eegfm/pretrain.hpp"
#include "eegfm/synth.hpp"

namespace eegfm {

struct TrainParams {
  int batch_size = 4;
  double jitter_sigma_cm = 0.1;
  int64_t steps = 0;  // 0: run the schedule's full horizon
  int64_t log_every = 10;
  double lr_peak = 0.0;  // 0: width law from the model dim
};

struct ProbeParams {
  ProbeConfig cfg;
  double test_fraction = 0.3;
};

// Every knob a run can depend on, serialized next to every artifact. The
// JSON form is strict: unknown keys, type mismatches and invariant
// violations are all collected and reported together.
struct RunConfig {
  int schema_version = 1;
  uint64_t seed = 1;
  std::string montage_file;  // empty: built-in idealized layout
  ModelConfig model;
  OptimConfig optim;
  ScheduleConfig schedule;
  MaskParams mask;
  LossOpts loss;
  PatchConfig patch;
  PreprocessConfig preprocess;
  SynthSpec synth;
  TrainParams train;
  ProbeParams probe;
  FinetunePlan finetune;
  FlopsInputs flops;
};

nlohmann::json run_config_to_json(const RunConfig& cfg);

// Parses and validates; throws std::invalid_argument whose message lists
// every violation (unknown keys, wrong types, broken invariants), one per
// line.
RunConfig run_config_from_json(const nlohmann::json& j);

RunConfig load_run_config(const std::filesystem::path& path);

// Applies a dotted-path override ("model.dim=64") to the raw JSON before
// parsing. The value is parsed as JSON when possible, else kept as a string.
void apply_override(nlohmann::json& j, const std::string& assignment);

}  // namespace eegfm
