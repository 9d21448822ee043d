#include "eegfm/config.hpp"

#include <fstream>
#include <functional>
#include <set>
#include <sstream>

namespace eegfm {

namespace {

struct ObjReader {
  const nlohmann::json* j;
  std::string prefix;  // dotted, ends with '.' unless top level
  std::vector<std::string>* errors;
  std::set<std::string> used;

  ObjReader(const nlohmann::json& obj, std::string pfx, std::vector<std::string>& errs)
      : j(&obj), prefix(std::move(pfx)), errors(&errs) {
    if (!obj.is_object()) {
      errors->push_back("'" + label() + "' must be a JSON object");
      j = nullptr;
    }
  }

  std::string label() const {
    return prefix.empty() ? std::string("<root>") : prefix.substr(0, prefix.size() - 1);
  }

  bool has(const char* key) {
    if (!j) return false;
    used.insert(key);
    return j->contains(key);
  }

  const nlohmann::json& at(const char* key) { return (*j)[key]; }

  void number(const char* key, double& out) {
    if (!has(key)) return;
    if (!at(key).is_number()) {
      errors->push_back("'" + prefix + key + "' must be a number");
      return;
    }
    out = at(key).get<double>();
  }
  void integer(const char* key, int& out) {
    if (!has(key)) return;
    if (!at(key).is_number_integer()) {
      errors->push_back("'" + prefix + key + "' must be an integer");
      return;
    }
    out = at(key).get<int>();
  }
  void integer64(const char* key, int64_t& out) {
    if (!has(key)) return;
    if (!at(key).is_number_integer()) {
      errors->push_back("'" + prefix + key + "' must be an integer");
      return;
    }
    out = at(key).get<int64_t>();
  }
  void uinteger64(const char* key, uint64_t& out) {
    if (!has(key)) return;
    if (!at(key).is_number_unsigned() && !at(key).is_number_integer()) {
      errors->push_back("'" + prefix + key + "' must be a non-negative integer");
      return;
    }
    out = at(key).get<uint64_t>();
  }
  void boolean(const char* key, bool& out) {
    if (!has(key)) return;
    if (!at(key).is_boolean()) {
      errors->push_back("'" + prefix + key + "' must be a boolean");
      return;
    }
    out = at(key).get<bool>();
  }
  void text(const char* key, std::string& out) {
    if (!has(key)) return;
    if (!at(key).is_string()) {
      errors->push_back("'" + prefix + key + "' must be a string");
      return;
    }
    out = at(key).get<std::string>();
  }
  void choice(const char* key, std::string& out, std::initializer_list<const char*> allowed) {
    if (!has(key)) return;
    if (!at(key).is_string()) {
      errors->push_back("'" + prefix + key + "' must be a string");
      return;
    }
    const std::string v = at(key).get<std::string>();
    for (const char* a : allowed)
      if (v == a) {
        out = v;
        return;
      }
    std::string opts;
    for (const char* a : allowed) opts += std::string(opts.empty() ? "" : ", ") + a;
    errors->push_back("'" + prefix + key + "' must be one of {" + opts + "}, got '" + v + "'");
  }

  void finish() {
    if (!j) return;
    for (const auto& item : j->items())
      if (!used.count(item.key()))
        errors->push_back("unknown config key '" + prefix + item.key() + "'");
  }
};

void check(std::vector<std::string>& errors, const std::string& section,
           const std::function<void()>& validate) {
  try {
    validate();
  } catch (const std::invalid_argument& e) {
    errors.push_back(section + ": " + e.what());
  }
}

void parse_model(const nlohmann::json& j, ModelConfig& m, std::vector<std::string>& errors) {
  ObjReader r(j, "model.", errors);
  std::string preset;
  r.choice("preset", preset, {"tiny", "small", "base", "large", "large_star"});
  if (preset == "tiny") m = ModelConfig::tiny_cfg();
  else if (preset == "small") m = ModelConfig::small_cfg();
  else if (preset == "base") m = ModelConfig::base_cfg();
  else if (preset == "large") m = ModelConfig::large_cfg();
  else if (preset == "large_star") m = ModelConfig::large_star_cfg();
  r.integer("dim", m.dim);
  r.integer("depth", m.depth);
  r.integer("heads", m.heads);
  r.integer("decoder_depth", m.decoder_depth);
  r.integer("decoder_dim", m.decoder_dim);
  r.integer("window", m.window);
  std::string act = m.activation == Activation::geglu ? "geglu" : "gelu";
  r.choice("activation", act, {"geglu", "gelu"});
  m.activation = act == "geglu" ? Activation::geglu : Activation::gelu;
  std::string norm = m.norm == NormKind::rmsnorm ? "rmsnorm" : "layernorm";
  r.choice("norm", norm, {"rmsnorm", "layernorm"});
  m.norm = norm == "rmsnorm" ? NormKind::rmsnorm : NormKind::layernorm;
  r.number("norm_eps", m.norm_eps);
  r.number("dropout", m.dropout);
  r.integer("n_freq", m.fourier.n_freq);
  r.number("time_scale", m.fourier.time_scale);
  r.number("spatial_extent_cm", m.fourier.spatial_extent_cm);
  r.finish();
}

void parse_optim(const nlohmann::json& j, OptimConfig& o, std::vector<std::string>& errors) {
  ObjReader r(j, "optim.", errors);
  r.number("lr_peak", o.lr_peak);
  r.number("beta1", o.beta1);
  r.number("beta2", o.beta2);
  r.number("epsilon", o.epsilon);
  r.number("weight_decay", o.weight_decay);
  r.number("clip_threshold", o.clip_threshold);
  r.finish();
}

void parse_schedule(const nlohmann::json& j, ScheduleConfig& s, std::vector<std::string>& errors) {
  ObjReader r(j, "schedule.", errors);
  r.integer64("steps_per_epoch", s.steps_per_epoch);
  r.integer64("n_epochs", s.n_epochs);
  r.number("warmup_frac", s.warmup_frac);
  r.number("stable_frac", s.stable_frac);
  r.number("floor_frac", s.floor_frac);
  r.boolean("cyclic", s.cyclic);
  r.finish();
}

void parse_mask(const nlohmann::json& j, MaskParams& m, std::vector<std::string>& errors) {
  ObjReader r(j, "mask.", errors);
  r.number("ratio", m.ratio);
  r.number("r_spatial_cm", m.r_spatial_cm);
  r.number("r_temporal_s", m.r_temporal_s);
  r.number("dropout", m.dropout);
  r.number("r_dropout_cm", m.r_dropout_cm);
  std::string mode = m.mode == MaskParams::Mode::block ? "block" : "random";
  r.choice("mode", mode, {"block", "random"});
  m.mode = mode == "block" ? MaskParams::Mode::block : MaskParams::Mode::random;
  r.finish();
}

void parse_loss(const nlohmann::json& j, LossOpts& l, std::vector<std::string>& errors) {
  ObjReader r(j, "loss.", errors);
  r.number("lambda", l.lambda);
  r.boolean("per_sample_mean", l.per_sample_mean);
  r.boolean("secondary", l.secondary);
  r.finish();
}

void parse_patch(const nlohmann::json& j, PatchConfig& p, std::vector<std::string>& errors) {
  ObjReader r(j, "patch.", errors);
  r.integer("window", p.window);
  r.integer("overlap", p.overlap);
  r.finish();
}

void parse_preprocess(const nlohmann::json& j, PreprocessConfig& p,
                      std::vector<std::string>& errors) {
  ObjReader r(j, "preprocess.", errors);
  r.number("target_rate", p.target_rate);
  r.number("band_low", p.band_low);
  r.number("band_high", p.band_high);
  r.number("min_duration_s", p.min_duration_s);
  r.number("clip_sigma", p.clip_sigma);
  r.number("std_floor", p.std_floor);
  r.number("filter_atten_db", p.filter_atten_db);
  r.finish();
}

void parse_synth(const nlohmann::json& j, SynthSpec& s, std::vector<std::string>& errors) {
  ObjReader r(j, "synth.", errors);
  r.integer("n_recordings", s.n_recordings);
  if (r.has("channel_names")) {
    const auto& arr = r.at("channel_names");
    if (!arr.is_array()) {
      errors.push_back("'synth.channel_names' must be an array of strings");
    } else {
      s.channel_names.clear();
      for (const auto& v : arr) {
        if (!v.is_string()) {
          errors.push_back("'synth.channel_names' must contain only strings");
          break;
        }
        s.channel_names.push_back(v.get<std::string>());
      }
    }
  }
  r.number("duration_s", s.duration_s);
  r.number("rate", s.rate);
  r.integer("n_classes", s.n_classes);
  if (r.has("peaks")) {
    const auto& arr = r.at("peaks");
    if (!arr.is_array()) {
      errors.push_back("'synth.peaks' must be an array of objects");
    } else {
      s.peaks.clear();
      for (size_t i = 0; i < arr.size(); ++i) {
        PeakSpec pk;
        ObjReader pr(arr[i], "synth.peaks[" + std::to_string(i) + "].", errors);
        pr.number("center_hz", pk.center_hz);
        pr.number("bandwidth_hz", pk.bandwidth_hz);
        pr.number("amplitude", pk.amplitude);
        pr.finish();
        s.peaks.push_back(pk);
      }
    }
  }
  r.number("noise_exponent", s.noise_exponent);
  r.number("noise_amplitude", s.noise_amplitude);
  r.text("session_id", s.session_id);
  r.text("subject_id", s.subject_id);
  r.finish();
}

void parse_train(const nlohmann::json& j, TrainParams& t, std::vector<std::string>& errors) {
  ObjReader r(j, "train.", errors);
  r.integer("batch_size", t.batch_size);
  r.number("jitter_sigma_cm", t.jitter_sigma_cm);
  r.integer64("steps", t.steps);
  r.integer64("log_every", t.log_every);
  r.number("lr_peak", t.lr_peak);
  r.finish();
  if (t.batch_size < 1) errors.push_back("train.batch_size must be >= 1");
  if (t.jitter_sigma_cm < 0.0) errors.push_back("train.jitter_sigma_cm must be >= 0");
  if (t.steps < 0) errors.push_back("train.steps must be >= 0");
  if (t.log_every < 1) errors.push_back("train.log_every must be >= 1");
  if (t.lr_peak < 0.0) errors.push_back("train.lr_peak must be >= 0");
}

void parse_probe(const nlohmann::json& j, ProbeParams& p, std::vector<std::string>& errors) {
  ObjReader r(j, "probe.", errors);
  std::string pooling = p.cfg.pooling == Pooling::mean
                            ? "mean"
                            : (p.cfg.pooling == Pooling::attention ? "attention" : "flatten");
  r.choice("pooling", pooling, {"mean", "attention", "flatten"});
  p.cfg.pooling = pooling == "mean" ? Pooling::mean
                                    : (pooling == "attention" ? Pooling::attention : Pooling::flatten);
  r.integer("classes", p.cfg.classes);
  r.integer("epochs", p.cfg.epochs);
  r.number("lr", p.cfg.lr);
  r.number("weight_decay", p.cfg.weight_decay);
  r.number("test_fraction", p.test_fraction);
  r.finish();
  if (!(p.test_fraction > 0.0 && p.test_fraction < 1.0))
    errors.push_back("probe.test_fraction must be in (0, 1)");
}

void parse_finetune(const nlohmann::json& j, FinetunePlan& f, std::vector<std::string>& errors) {
  ObjReader r(j, "finetune.", errors);
  r.integer64("freeze_steps", f.freeze_steps);
  r.integer64("total_steps", f.total_steps);
  r.number("mixup_alpha", f.mixup_alpha);
  r.number("dropout", f.dropout);
  r.integer("plateau_patience", f.plateau_patience);
  r.number("plateau_factor", f.plateau_factor);
  r.integer64("warmup_steps", f.warmup_steps);
  r.number("lr", f.lr);
  r.number("weight_decay", f.weight_decay);
  r.integer("batch_size", f.batch_size);
  r.integer64("eval_every", f.eval_every);
  r.integer("classes", f.classes);
  r.boolean("use_lora", f.use_lora);
  r.integer("lora_rank", f.lora.rank);
  r.number("lora_alpha", f.lora.alpha);
  r.boolean("lora_on_q", f.lora.on_q);
  r.boolean("lora_on_k", f.lora.on_k);
  r.boolean("lora_on_v", f.lora.on_v);
  r.boolean("lora_on_o", f.lora.on_o);
  r.boolean("lora_from_start", f.lora_from_start);
  r.finish();
}

void parse_flops(const nlohmann::json& j, FlopsInputs& f, std::vector<std::string>& errors) {
  ObjReader r(j, "flops.", errors);
  r.number("d_tokens", f.d_tokens);
  r.number("n_params", f.n_params);
  r.number("layers", f.layers);
  r.number("heads", f.heads);
  r.number("head_dim", f.head_dim);
  r.number("tokens_per_sample", f.tokens_per_sample);
  r.number("throughput", f.throughput);
  r.number("mfu", f.mfu);
  r.finish();
}

}  // namespace

nlohmann::json run_config_to_json(const RunConfig& cfg) {
  nlohmann::json j;
  j["schema_version"] = cfg.schema_version;
  j["seed"] = cfg.seed;
  j["montage_file"] = cfg.montage_file;
  j["model"] = {{"dim", cfg.model.dim},
                {"depth", cfg.model.depth},
                {"heads", cfg.model.heads},
                {"decoder_depth", cfg.model.decoder_depth},
                {"decoder_dim", cfg.model.decoder_dim},
                {"window", cfg.model.window},
                {"activation", cfg.model.activation == Activation::geglu ? "geglu" : "gelu"},
                {"norm", cfg.model.norm == NormKind::rmsnorm ? "rmsnorm" : "layernorm"},
                {"norm_eps", cfg.model.norm_eps},
                {"dropout", cfg.model.dropout},
                {"n_freq", cfg.model.fourier.n_freq},
                {"time_scale", cfg.model.fourier.time_scale},
                {"spatial_extent_cm", cfg.model.fourier.spatial_extent_cm}};
  j["optim"] = {{"lr_peak", cfg.optim.lr_peak},       {"beta1", cfg.optim.beta1},
                {"beta2", cfg.optim.beta2},           {"epsilon", cfg.optim.epsilon},
                {"weight_decay", cfg.optim.weight_decay},
                {"clip_threshold", cfg.optim.clip_threshold}};
  j["schedule"] = {{"steps_per_epoch", cfg.schedule.steps_per_epoch},
                   {"n_epochs", cfg.schedule.n_epochs},
                   {"warmup_frac", cfg.schedule.warmup_frac},
                   {"stable_frac", cfg.schedule.stable_frac},
                   {"floor_frac", cfg.schedule.floor_frac},
                   {"cyclic", cfg.schedule.cyclic}};
  j["mask"] = {{"ratio", cfg.mask.ratio},
               {"r_spatial_cm", cfg.mask.r_spatial_cm},
               {"r_temporal_s", cfg.mask.r_temporal_s},
               {"dropout", cfg.mask.dropout},
               {"r_dropout_cm", cfg.mask.r_dropout_cm},
               {"mode", cfg.mask.mode == MaskParams::Mode::block ? "block" : "random"}};
  j["loss"] = {{"lambda", cfg.loss.lambda},
               {"per_sample_mean", cfg.loss.per_sample_mean},
               {"secondary", cfg.loss.secondary}};
  j["patch"] = {{"window", cfg.patch.window}, {"overlap", cfg.patch.overlap}};
  j["preprocess"] = {{"target_rate", cfg.preprocess.target_rate},
                     {"band_low", cfg.preprocess.band_low},
                     {"band_high", cfg.preprocess.band_high},
                     {"min_duration_s", cfg.preprocess.min_duration_s},
                     {"clip_sigma", cfg.preprocess.clip_sigma},
                     {"std_floor", cfg.preprocess.std_floor},
                     {"filter_atten_db", cfg.preprocess.filter_atten_db}};
  nlohmann::json peaks = nlohmann::json::array();
  for (const PeakSpec& p : cfg.synth.peaks)
    peaks.push_back({{"center_hz", p.center_hz},
                     {"bandwidth_hz", p.bandwidth_hz},
                     {"amplitude", p.amplitude}});
  j["synth"] = {{"n_recordings", cfg.synth.n_recordings},
                {"channel_names", cfg.synth.channel_names},
                {"duration_s", cfg.synth.duration_s},
                {"rate", cfg.synth.rate},
                {"n_classes", cfg.synth.n_classes},
                {"peaks", peaks},
                {"noise_exponent", cfg.synth.noise_exponent},
                {"noise_amplitude", cfg.synth.noise_amplitude},
                {"session_id", cfg.synth.session_id},
                {"subject_id", cfg.synth.subject_id}};
  j["train"] = {{"batch_size", cfg.train.batch_size},
                {"jitter_sigma_cm", cfg.train.jitter_sigma_cm},
                {"steps", cfg.train.steps},
                {"log_every", cfg.train.log_every},
                {"lr_peak", cfg.train.lr_peak}};
  const char* pooling = cfg.probe.cfg.pooling == Pooling::mean
                            ? "mean"
                            : (cfg.probe.cfg.pooling == Pooling::attention ? "attention"
                                                                           : "flatten");
  j["probe"] = {{"pooling", pooling},
                {"classes", cfg.probe.cfg.classes},
                {"epochs", cfg.probe.cfg.epochs},
                {"lr", cfg.probe.cfg.lr},
                {"weight_decay", cfg.probe.cfg.weight_decay},
                {"test_fraction", cfg.probe.test_fraction}};
  j["finetune"] = {{"freeze_steps", cfg.finetune.freeze_steps},
                   {"total_steps", cfg.finetune.total_steps},
                   {"mixup_alpha", cfg.finetune.mixup_alpha},
                   {"dropout", cfg.finetune.dropout},
                   {"plateau_patience", cfg.finetune.plateau_patience},
                   {"plateau_factor", cfg.finetune.plateau_factor},
                   {"warmup_steps", cfg.finetune.warmup_steps},
                   {"lr", cfg.finetune.lr},
                   {"weight_decay", cfg.finetune.weight_decay},
                   {"batch_size", cfg.finetune.batch_size},
                   {"eval_every", cfg.finetune.eval_every},
                   {"classes", cfg.finetune.classes},
                   {"use_lora", cfg.finetune.use_lora},
                   {"lora_rank", cfg.finetune.lora.rank},
                   {"lora_alpha", cfg.finetune.lora.alpha},
                   {"lora_on_q", cfg.finetune.lora.on_q},
                   {"lora_on_k", cfg.finetune.lora.on_k},
                   {"lora_on_v", cfg.finetune.lora.on_v},
                   {"lora_on_o", cfg.finetune.lora.on_o},
                   {"lora_from_start", cfg.finetune.lora_from_start}};
  j["flops"] = {{"d_tokens", cfg.flops.d_tokens},
                {"n_params", cfg.flops.n_params},
                {"layers", cfg.flops.layers},
                {"heads", cfg.flops.heads},
                {"head_dim", cfg.flops.head_dim},
                {"tokens_per_sample", cfg.flops.tokens_per_sample},
                {"throughput", cfg.flops.throughput},
                {"mfu", cfg.flops.mfu}};
  return j;
}

RunConfig run_config_from_json(const nlohmann::json& j) {
  RunConfig cfg;
  std::vector<std::string> errors;
  ObjReader r(j, "", errors);
  r.integer("schema_version", cfg.schema_version);
  if (cfg.schema_version != 1)
    errors.push_back("schema_version " + std::to_string(cfg.schema_version) + " is unsupported (expected 1)");
  r.uinteger64("seed", cfg.seed);
  r.text("montage_file", cfg.montage_file);
  if (r.has("model")) parse_model(r.at("model"), cfg.model, errors);
  if (r.has("optim")) parse_optim(r.at("optim"), cfg.optim, errors);
  if (r.has("schedule")) parse_schedule(r.at("schedule"), cfg.schedule, errors);
  if (r.has("mask")) parse_mask(r.at("mask"), cfg.mask, errors);
  if (r.has("loss")) parse_loss(r.at("loss"), cfg.loss, errors);
  if (r.has("patch")) parse_patch(r.at("patch"), cfg.patch, errors);
  if (r.has("preprocess")) parse_preprocess(r.at("preprocess"), cfg.preprocess, errors);
  if (r.has("synth")) parse_synth(r.at("synth"), cfg.synth, errors);
  if (r.has("train")) parse_train(r.at("train"), cfg.train, errors);
  if (r.has("probe")) parse_probe(r.at("probe"), cfg.probe, errors);
  if (r.has("finetune")) parse_finetune(r.at("finetune"), cfg.finetune, errors);
  if (r.has("flops")) parse_flops(r.at("flops"), cfg.flops, errors);
  r.finish();

  // Cross-field invariants, every violation reported.
  check(errors, "model", [&] { cfg.model.validate(); });
  check(errors, "optim", [&] { cfg.optim.validate(); });
  if (cfg.schedule.steps_per_epoch > 0)
    check(errors, "schedule", [&] { cfg.schedule.validate(); });
  check(errors, "mask", [&] { cfg.mask.validate(); });
  check(errors, "patch", [&] { cfg.patch.validate(); });
  check(errors, "preprocess", [&] { cfg.preprocess.validate(); });
  check(errors, "synth", [&] { cfg.synth.validate(); });
  check(errors, "probe", [&] { cfg.probe.cfg.validate(); });
  check(errors, "finetune", [&] { cfg.finetune.validate(); });
  if (cfg.loss.lambda < 0.0) errors.push_back("loss.lambda must be >= 0");
  if (cfg.patch.window != cfg.model.window)
    errors.push_back("patch.window (" + std::to_string(cfg.patch.window) +
                     ") must equal model.window (" + std::to_string(cfg.model.window) + ")");

  if (!errors.empty()) {
    std::string msg = "configuration invalid (" + std::to_string(errors.size()) + " problem" +
                      (errors.size() == 1 ? "" : "s") + "):";
    for (const std::string& e : errors) msg += "\n  - " + e;
    throw std::invalid_argument(msg);
  }
  return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in.good()) throw std::runtime_error("cannot open config file " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw std::invalid_argument("config file " + path.string() + " is not valid JSON: " + e.what());
  }
  return run_config_from_json(j);
}

void apply_override(nlohmann::json& j, const std::string& assignment) {
  const size_t eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0)
    throw std::invalid_argument("override '" + assignment + "' must have the form key.path=value");
  const std::string path = assignment.substr(0, eq);
  const std::string value = assignment.substr(eq + 1);

  nlohmann::json parsed;
  try {
    parsed = nlohmann::json::parse(value);
  } catch (const nlohmann::json::parse_error&) {
    parsed = value;  // plain string
  }

  nlohmann::json* node = &j;
  std::stringstream keys(path);
  std::string key;
  std::vector<std::string> parts;
  while (std::getline(keys, key, '.')) {
    if (key.empty())
      throw std::invalid_argument("override '" + assignment + "' has an empty path segment");
    parts.push_back(key);
  }
  for (size_t i = 0; i + 1 < parts.size(); ++i) node = &(*node)[parts[i]];
  (*node)[parts.back()] = parsed;
}

}  // namespace eegfm
