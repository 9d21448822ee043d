// Run configuration: strict JSON parsing that reports every problem at
// once, presets under per-field overrides, dotted-path CLI overrides, and a
// faithful serialization round trip.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <string>

#include "eegfm/config.hpp"

using namespace eegfm;
namespace fs = std::filesystem;

namespace {

std::string thrown_message(const nlohmann::json& j) {
  try {
    run_config_from_json(j);
  } catch (const std::invalid_argument& e) {
    return e.what();
  }
  return {};
}

size_t count_occurrences(const std::string& hay, const std::string& needle) {
  size_t n = 0, pos = 0;
  while ((pos = hay.find(needle, pos)) != std::string::npos) {
    ++n;
    pos += needle.size();
  }
  return n;
}

}  // namespace

TEST_CASE("an empty object parses to the defaults and round-trips exactly") {
  const RunConfig defaults = run_config_from_json(nlohmann::json::object());
  const nlohmann::json j = run_config_to_json(defaults);

  CHECK(j.at("model").at("dim").get<int>() == RunConfig{}.model.dim);
  CHECK(j.at("seed").get<uint64_t>() == 1);

  // Serialize -> parse -> serialize is a fixed point.
  const RunConfig back = run_config_from_json(j);
  CHECK(run_config_to_json(back) == j);
}

TEST_CASE("a fully customized config survives the round trip") {
  nlohmann::json j;
  j["seed"] = 777;
  j["montage_file"] = "layout.json";
  j["model"] = {{"dim", 64},       {"depth", 3},          {"heads", 4},
                {"window", 100},   {"activation", "gelu"}, {"norm", "layernorm"},
                {"dropout", 0.2},  {"n_freq", 3}};
  j["patch"] = {{"window", 100}, {"overlap", 10}};
  j["mask"] = {{"ratio", 0.4}, {"mode", "random"}};
  j["loss"] = {{"lambda", 0.3}, {"per_sample_mean", true}, {"secondary", false}};
  j["schedule"] = {{"steps_per_epoch", 50}, {"n_epochs", 2}, {"cyclic", true},
                   {"warmup_frac", 0.1},    {"stable_frac", 0.5}};
  j["train"] = {{"batch_size", 2}, {"jitter_sigma_cm", 0.0}};
  j["synth"] = {{"n_recordings", 7},
                {"n_classes", 1},  // one spectral peak per class
                {"peaks", {{{"center_hz", 12.0}, {"bandwidth_hz", 2.0}, {"amplitude", 1.5}}}}};
  j["finetune"] = {{"use_lora", true}, {"lora_rank", 4}, {"lora_on_k", false}};

  const RunConfig cfg = run_config_from_json(j);
  CHECK(cfg.seed == 777);
  CHECK(cfg.montage_file == "layout.json");
  CHECK(cfg.model.dim == 64);
  CHECK(cfg.model.activation == Activation::gelu);
  CHECK(cfg.model.norm == NormKind::layernorm);
  CHECK(cfg.model.fourier.n_freq == 3);
  CHECK(cfg.patch.overlap == 10);
  CHECK(cfg.mask.mode == MaskParams::Mode::random);
  CHECK(cfg.loss.per_sample_mean);
  CHECK(!cfg.loss.secondary);
  CHECK(cfg.schedule.cyclic);
  CHECK(cfg.synth.peaks.size() == 1);
  CHECK(cfg.synth.peaks[0].center_hz == 12.0);
  CHECK(cfg.finetune.use_lora);
  CHECK(cfg.finetune.lora.rank == 4);
  CHECK(!cfg.finetune.lora.on_k);
  CHECK(cfg.finetune.lora.on_q);  // untouched fields keep their defaults

  const nlohmann::json out = run_config_to_json(cfg);
  CHECK(run_config_to_json(run_config_from_json(out)) == out);
  CHECK(out.at("mask").at("mode") == "random");
  CHECK(out.at("model").at("activation") == "gelu");
}

TEST_CASE("presets load first, explicit fields override them") {
  nlohmann::json j;
  j["model"] = {{"preset", "small"}, {"depth", 2}};
  const RunConfig cfg = run_config_from_json(j);
  CHECK(cfg.model.dim == 512);   // from the preset
  CHECK(cfg.model.heads == 8);   // from the preset
  CHECK(cfg.model.fourier.n_freq == 4);
  CHECK(cfg.model.depth == 2);   // explicit override wins

  nlohmann::json t;
  t["model"] = {{"preset", "tiny"}};
  CHECK(run_config_from_json(t).model.dim == 32);

  // The published large configuration fails its own width/heads invariant.
  nlohmann::json l;
  l["model"] = {{"preset", "large"}};
  const std::string msg = thrown_message(l);
  CHECK(msg.find("model:") != std::string::npos);

  nlohmann::json ls;
  ls["model"] = {{"preset", "large_star"}};
  CHECK(run_config_from_json(ls).model.heads == 25);

  nlohmann::json bad;
  bad["model"] = {{"preset", "huge"}};
  CHECK(thrown_message(bad).find("must be one of {tiny, small, base, large, large_star}") !=
        std::string::npos);
}

TEST_CASE("unknown keys are rejected with their dotted path") {
  nlohmann::json j;
  j["model"] = {{"dims", 64}};
  const std::string msg = thrown_message(j);
  CHECK(msg.find("unknown config key 'model.dims'") != std::string::npos);

  nlohmann::json top;
  top["modle"] = nlohmann::json::object();
  CHECK(thrown_message(top).find("unknown config key 'modle'") != std::string::npos);

  nlohmann::json peak;
  peak["synth"] = {{"peaks", {{{"freq", 10.0}}}}};
  CHECK(thrown_message(peak).find("unknown config key 'synth.peaks[0].freq'") !=
        std::string::npos);
}

TEST_CASE("type errors carry the offending path") {
  nlohmann::json j;
  j["model"] = {{"dim", "big"}};
  CHECK(thrown_message(j).find("'model.dim' must be an integer") != std::string::npos);

  nlohmann::json b;
  b["schedule"] = {{"cyclic", 3}};
  CHECK(thrown_message(b).find("'schedule.cyclic' must be a boolean") != std::string::npos);

  nlohmann::json c;
  c["mask"] = {{"mode", "diagonal"}};
  CHECK(thrown_message(c).find("'mask.mode' must be one of {block, random}, got 'diagonal'") !=
        std::string::npos);

  nlohmann::json d;
  d["montage_file"] = 9;
  CHECK(thrown_message(d).find("'montage_file' must be a string") != std::string::npos);

  nlohmann::json e;
  e["model"] = 5;
  CHECK(thrown_message(e).find("'model' must be a JSON object") != std::string::npos);
}

TEST_CASE("every violation is collected into one report") {
  nlohmann::json j;
  j["model"] = {{"dims", 64}};               // unknown key
  j["schedule"] = {{"cyclic", 3}};           // type error
  j["train"] = {{"batch_size", 0}};          // invariant
  j["loss"] = {{"lambda", -1.0}};            // invariant
  j["patch"] = {{"window", 100}};            // disagrees with model.window

  const std::string msg = thrown_message(j);
  CHECK(msg.find("configuration invalid (5 problems):") != std::string::npos);
  CHECK(count_occurrences(msg, "\n  - ") == 5);
  CHECK(msg.find("unknown config key 'model.dims'") != std::string::npos);
  CHECK(msg.find("'schedule.cyclic' must be a boolean") != std::string::npos);
  CHECK(msg.find("train.batch_size must be >= 1") != std::string::npos);
  CHECK(msg.find("loss.lambda must be >= 0") != std::string::npos);
  CHECK(msg.find("patch.window (100) must equal model.window (200)") != std::string::npos);

  // Singular form for a single problem.
  nlohmann::json one;
  one["loss"] = {{"lambda", -1.0}};
  CHECK(thrown_message(one).find("configuration invalid (1 problem):") != std::string::npos);
}

TEST_CASE("patch and model windows must agree, jointly overridable") {
  nlohmann::json j;
  j["model"] = {{"window", 100}};
  j["patch"] = {{"window", 100}};
  CHECK(run_config_from_json(j).patch.window == 100);

  nlohmann::json bad;
  bad["model"] = {{"window", 100}};
  CHECK(thrown_message(bad).find("patch.window (200) must equal model.window (100)") !=
        std::string::npos);
}

TEST_CASE("schema version gate") {
  nlohmann::json j;
  j["schema_version"] = 2;
  CHECK(thrown_message(j).find("schema_version 2 is unsupported") != std::string::npos);
}

TEST_CASE("dotted-path overrides edit the raw JSON") {
  nlohmann::json j;
  j["model"] = {{"dim", 32}};

  apply_override(j, "model.dim=64");
  CHECK(j["model"]["dim"].get<int>() == 64);
  CHECK(j["model"]["dim"].is_number_integer());

  apply_override(j, "montage_file=layout.json");
  CHECK(j["montage_file"].get<std::string>() == "layout.json");  // unparseable: string

  apply_override(j, "loss.per_sample_mean=true");
  CHECK(j["loss"]["per_sample_mean"].get<bool>() == true);

  apply_override(j, "schedule.warmup_frac=0.05");
  CHECK(j["schedule"]["warmup_frac"].get<double>() == 0.05);

  apply_override(j, "a.b.c=3");  // intermediate objects spring into being
  CHECK(j["a"]["b"]["c"].get<int>() == 3);

  apply_override(j, "synth.peaks=[]");
  CHECK(j["synth"]["peaks"].is_array());
  CHECK(j["synth"]["peaks"].empty());

  CHECK_THROWS_AS(apply_override(j, "noequals"), std::invalid_argument);
  CHECK_THROWS_AS(apply_override(j, "=5"), std::invalid_argument);
  CHECK_THROWS_AS(apply_override(j, "a..b=1"), std::invalid_argument);
}

TEST_CASE("preset via override on an empty config is not shadowed") {
  // Starting from {} means absent keys fall back to struct defaults, so a
  // preset override actually takes effect instead of being overwritten by
  // re-serialized default fields.
  nlohmann::json j = nlohmann::json::object();
  apply_override(j, "model.preset=small");
  apply_override(j, "model.depth=2");
  const RunConfig cfg = run_config_from_json(j);
  CHECK(cfg.model.dim == 512);
  CHECK(cfg.model.depth == 2);
}

TEST_CASE("config files load with parse errors distinguished from IO errors") {
  const fs::path dir = fs::temp_directory_path() / "eegfm_cfg_test";
  fs::create_directories(dir);

  {
    std::ofstream out(dir / "good.json");
    out << R"({"seed": 9, "model": {"preset": "tiny"}})";
  }
  const RunConfig cfg = load_run_config(dir / "good.json");
  CHECK(cfg.seed == 9);
  CHECK(cfg.model.dim == 32);

  {
    std::ofstream out(dir / "broken.json");
    out << "{ not json";
  }
  CHECK_THROWS_WITH_AS(load_run_config(dir / "broken.json"),
                       doctest::Contains("not valid JSON"), std::invalid_argument);

  CHECK_THROWS_AS(load_run_config(dir / "missing.json"), std::runtime_error);
  fs::remove_all(dir);
}
