// Command-line front end. One command = one process; every artifact
// directory receives a run.json with the resolved configuration, the seed
// and the argv that produced it.

#include <sys/wait.h>
#include <unistd.h>

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "eegfm/checkpoint.hpp"
#include "eegfm/config.hpp"
#include "eegfm/corpus.hpp"
#include "eegfm/datapipe.hpp"
#include "eegfm/finetune.hpp"
#include "eegfm/flops.hpp"
#include "eegfm/model.hpp"
#include "eegfm/montage.hpp"
#include "eegfm/optim.hpp"
#include "eegfm/pretrain.hpp"
#include "eegfm/synth.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace eegfm;

namespace {

struct CommonArgs {
  std::string config_path;
  std::vector<std::string> overrides;
  int64_t seed = -1;  // -1: keep the config's seed
  std::string out;
};

struct Resolved {
  RunConfig cfg;
  json raw;  // resolved JSON form, written into run.json
};

Resolved resolve_config(const CommonArgs& args) {
  // Missing keys mean defaults, so the no-config case starts from {} rather
  // than a serialized default dump; otherwise "model.preset=tiny" would be
  // shadowed by the dump's explicit per-field values.
  json j = json::object();
  if (!args.config_path.empty()) {
    std::ifstream in(args.config_path);
    if (!in.good()) throw std::runtime_error("cannot open config file " + args.config_path);
    j = json::parse(in);
  }
  for (const std::string& ov : args.overrides) apply_override(j, ov);
  if (args.seed >= 0) j["seed"] = static_cast<uint64_t>(args.seed);
  Resolved r;
  r.cfg = run_config_from_json(j);
  r.raw = run_config_to_json(r.cfg);  // canonical form, defaults filled in
  return r;
}

void write_run_record(const fs::path& dir, const Resolved& r, int argc, char** argv) {
  fs::create_directories(dir);
  json rec;
  rec["argv"] = json::array();
  for (int i = 0; i < argc; ++i) rec["argv"].push_back(argv[i]);
  rec["seed"] = r.cfg.seed;
  rec["config"] = r.raw;
  std::ofstream out(dir / "run.json");
  out << rec.dump(2) << "\n";
}

ElectrodeLayout load_layout(const RunConfig& cfg) {
  if (cfg.montage_file.empty()) return ElectrodeLayout::builtin_1010();
  return ElectrodeLayout::from_json_file(cfg.montage_file);
}

double stride_seconds(const RunConfig& cfg) {
  return (cfg.patch.window - cfg.patch.overlap) / cfg.preprocess.target_rate;
}

double resolve_peak_lr(const RunConfig& cfg) {
  if (cfg.train.lr_peak > 0.0) return cfg.train.lr_peak;
  return scale_lr(cfg.model.dim, 512, cfg.optim.lr_peak);
}

std::vector<TrainSample<float>> corpus_samples(const std::vector<EegRecording>& recs,
                                               const PatchConfig& pc) {
  std::vector<TrainSample<float>> out;
  out.reserve(recs.size());
  for (const EegRecording& rec : recs) out.push_back(make_sample<float>(rec.data, rec.positions, pc));
  return out;
}

std::vector<LabeledSample<float>> labeled_samples(const std::vector<EegRecording>& recs,
                                                  const PatchConfig& pc) {
  std::vector<LabeledSample<float>> out;
  for (const EegRecording& rec : recs) {
    if (!rec.label) continue;
    out.push_back(LabeledSample<float>{make_sample<float>(rec.data, rec.positions, pc), *rec.label});
  }
  if (out.empty()) throw std::runtime_error("corpus has no labeled recordings");
  return out;
}

// Architecture travels with the weights: the full resolved config is stored
// in the manifest, and loading reconstructs the model from that copy rather
// than from whatever config the current command happens to hold.
void save_model_checkpoint(const fs::path& dir, MaeModel<float>& model, const json& resolved,
                           const Linear<float>* head = nullptr) {
  TensorArchive a = archive_from_model(model);
  if (head != nullptr) {
    const auto put = [&](const Param<float>& p) {
      NamedTensor t;
      t.name = p.name;
      t.rows = p.w.rows();
      t.cols = p.w.cols();
      t.data.resize(static_cast<size_t>(p.w.size()));
      for (int64_t i = 0; i < p.w.rows(); ++i)
        for (int64_t j = 0; j < p.w.cols(); ++j)
          t.data[static_cast<size_t>(i * p.w.cols() + j)] = p.w(i, j);
      a.tensors.push_back(std::move(t));
    };
    put(head->w);
    put(head->b);
    a.meta["kind"] = "classifier";
    a.meta["classes"] = head->w.w.cols();
  } else {
    a.meta["kind"] = "encoder";
  }
  a.meta["config"] = resolved;
  save_archive(dir, a);
}

struct LoadedModel {
  MaeModel<float> model;
  RunConfig cfg;
  TensorArchive archive;
};

LoadedModel load_model_checkpoint(const fs::path& dir) {
  LoadedModel lm;
  lm.archive = load_archive(dir);
  if (!lm.archive.meta.contains("config"))
    throw std::runtime_error("checkpoint " + dir.string() + " has no embedded config");
  lm.cfg = run_config_from_json(lm.archive.meta.at("config"));
  lm.model = MaeModel<float>::make(lm.cfg.model);
  model_from_archive(lm.archive, lm.model, /*require_exact=*/false);
  return lm;
}

Linear<float> head_from_archive(const TensorArchive& a, int dim) {
  if (a.meta.value("kind", "") != "classifier")
    throw std::runtime_error("checkpoint is not a classifier (kind '" +
                             a.meta.value("kind", "?") + "')");
  const int classes = a.meta.at("classes").get<int>();
  Linear<float> head;
  head.setup("head", dim, classes, /*with_bias=*/true);
  const auto fill = [&](Param<float>& p) {
    const NamedTensor* t = a.find(p.name);
    if (t == nullptr) throw std::runtime_error("checkpoint misses tensor " + p.name);
    if (t->rows != p.w.rows() || t->cols != p.w.cols())
      throw std::runtime_error("checkpoint tensor " + p.name + " has the wrong shape");
    for (int64_t i = 0; i < p.w.rows(); ++i)
      for (int64_t j = 0; j < p.w.cols(); ++j)
        p.w(i, j) = t->data[static_cast<size_t>(i * p.w.cols() + j)];
  };
  fill(head.w);
  fill(head.b);
  return head;
}

// Label-stratified-ish holdout: a seeded permutation, first part train.
void split_holdout(const std::vector<LabeledSample<float>>& all, double test_fraction,
                   uint64_t seed, std::vector<LabeledSample<float>>& train,
                   std::vector<LabeledSample<float>>& test) {
  const int64_t n = static_cast<int64_t>(all.size());
  int64_t n_test = std::llround(test_fraction * static_cast<double>(n));
  n_test = std::max<int64_t>(1, std::min(n - 1, n_test));
  Rng rng = Rng(seed).stream("holdout");
  std::vector<int> order = rng.permutation(static_cast<int>(n));
  for (int64_t i = 0; i < n; ++i)
    (i < n - n_test ? train : test).push_back(all[order[i]]);
}

int run_synth(const CommonArgs& args, int argc, char** argv) {
  Resolved r = resolve_config(args);
  const ElectrodeLayout layout = load_layout(r.cfg);
  Rng rng = Rng(r.cfg.seed).stream("synth");
  const std::vector<EegRecording> recs = synth_generate(r.cfg.synth, layout, rng);
  save_corpus(args.out, recs);
  write_run_record(args.out, r, argc, argv);
  std::cout << "wrote " << recs.size() << " recordings to " << args.out << "\n";
  return 0;
}

int run_preprocess(const CommonArgs& args, const std::string& in, int argc, char** argv) {
  Resolved r = resolve_config(args);
  std::vector<EegRecording> recs = load_corpus(in);
  // group by session, preserving first-appearance order
  std::vector<std::string> session_order;
  std::map<std::string, std::vector<EegRecording>> sessions;
  for (EegRecording& rec : recs) {
    if (!sessions.count(rec.session_id)) session_order.push_back(rec.session_id);
    sessions[rec.session_id].push_back(std::move(rec));
  }
  std::vector<EegRecording> out;
  PreprocessReport report;
  for (const std::string& sid : session_order) {
    std::vector<EegRecording> done = preprocess_session(sessions[sid], r.cfg.preprocess, &report);
    for (EegRecording& rec : done) out.push_back(std::move(rec));
  }
  save_corpus(args.out, out);
  write_run_record(args.out, r, argc, argv);
  json rep;
  rep["rejected_ids"] = report.rejected_ids;
  rep["kept"] = out.size();
  std::ofstream rf(fs::path(args.out) / "preprocess_report.json");
  rf << rep.dump(2) << "\n";
  std::cout << "kept " << out.size() << " of " << recs.size() << " recordings\n";
  return 0;
}

int run_pretrain(const CommonArgs& args, const std::string& in, int argc, char** argv) {
  Resolved r = resolve_config(args);
  const std::vector<EegRecording> recs = load_corpus(in);
  const std::vector<TrainSample<float>> samples = corpus_samples(recs, r.cfg.patch);

  std::vector<SampleRef> index;
  for (size_t i = 0; i < samples.size(); ++i)
    index.push_back(SampleRef{static_cast<int64_t>(i),
                              static_cast<int>(samples[i].positions.rows())});

  MaeModel<float> model = MaeModel<float>::make(r.cfg.model);
  Rng init_rng = Rng(r.cfg.seed).stream("init");
  model.init(init_rng);

  TrainerConfig tc;
  tc.mask = r.cfg.mask;
  tc.loss = r.cfg.loss;
  tc.jitter_sigma_cm = r.cfg.train.jitter_sigma_cm;
  tc.dropout = r.cfg.model.dropout;
  tc.stride_seconds = stride_seconds(r.cfg);
  Trainer<float> trainer(model, r.cfg.optim, r.cfg.schedule, tc, r.cfg.seed);
  trainer.set_peak_lr(resolve_peak_lr(r.cfg));

  const int64_t horizon = r.cfg.schedule.horizon();
  const int64_t n_steps = r.cfg.train.steps > 0 ? r.cfg.train.steps : horizon;

  fs::create_directories(args.out);
  std::ofstream log(fs::path(args.out) / "log.jsonl");
  int64_t step = 0;
  int64_t epoch = 0;
  while (step < n_steps) {
    const EpochPlan plan = bucket_shuffle(index, r.cfg.seed + static_cast<uint64_t>(epoch));
    const std::vector<Batch> batches = make_batches(plan, r.cfg.train.batch_size);
    if (epoch == 0) {
      std::ofstream csv(fs::path(args.out) / "batches.csv");
      csv << plan_csv(batches);
    }
    for (const Batch& b : batches) {
      std::vector<TrainSample<float>> batch;
      for (int64_t s : b.samples) batch.push_back(samples[s]);
      const StepStats st = trainer.step(batch);
      if (st.step % r.cfg.train.log_every == 0 || st.step == n_steps) {
        json line = {{"step", st.step},       {"lr", st.lr},
                     {"primary", st.primary}, {"secondary", st.secondary},
                     {"total", st.total},     {"grad_norm", st.grad_norm},
                     {"wall_ms", st.wall_ms}};
        log << line.dump() << "\n";
        log.flush();
      }
      ++step;
      if (step >= n_steps) break;
    }
    ++epoch;
  }
  save_model_checkpoint(fs::path(args.out) / "checkpoint", model, r.raw);
  write_run_record(args.out, r, argc, argv);
  std::cout << "pretrained " << step << " steps; checkpoint at " << args.out << "/checkpoint\n";
  return 0;
}

int run_embed(const CommonArgs& args, const std::string& in, const std::string& ckpt, int argc,
              char** argv) {
  Resolved r = resolve_config(args);
  LoadedModel lm = load_model_checkpoint(ckpt);
  const std::vector<EegRecording> recs = load_corpus(in);
  fs::create_directories(args.out);
  std::ofstream csv(fs::path(args.out) / "embeddings.csv");
  csv << "id,label";
  for (int j = 0; j < lm.cfg.model.dim; ++j) csv << ",e" << j;
  csv << "\n";
  csv.precision(9);
  for (const EegRecording& rec : recs) {
    const TrainSample<float> s = make_sample<float>(rec.data, rec.positions, lm.cfg.patch);
    const EmbeddingResult<float> emb = extract_embeddings(lm.model, s);
    csv << rec.id << ",";
    if (rec.label) csv << *rec.label;
    for (int j = 0; j < emb.pooled.cols(); ++j) csv << "," << emb.pooled(0, j);
    csv << "\n";
  }
  write_run_record(args.out, r, argc, argv);
  std::cout << "wrote embeddings for " << recs.size() << " recordings\n";
  return 0;
}

int run_probe(const CommonArgs& args, const std::string& in, const std::string& ckpt, int argc,
              char** argv) {
  Resolved r = resolve_config(args);
  LoadedModel lm = load_model_checkpoint(ckpt);
  const std::vector<EegRecording> recs = load_corpus(in);
  const std::vector<LabeledSample<float>> all = labeled_samples(recs, lm.cfg.patch);
  std::vector<LabeledSample<float>> train, test;
  split_holdout(all, r.cfg.probe.test_fraction, r.cfg.seed, train, test);

  std::vector<TrainSample<float>> train_s, test_s;
  std::vector<int> train_y, test_y;
  for (const auto& ls : train) train_s.push_back(ls.sample), train_y.push_back(ls.label);
  for (const auto& ls : test) test_s.push_back(ls.sample), test_y.push_back(ls.label);
  const MatD train_x = probe_features(lm.model, train_s, r.cfg.probe.cfg.pooling);
  const MatD test_x = probe_features(lm.model, test_s, r.cfg.probe.cfg.pooling);
  const ProbeResult res =
      linear_probe(train_x, train_y, test_x, test_y, r.cfg.probe.cfg, r.cfg.seed);

  fs::create_directories(args.out);
  json m = res.metrics.to_json();
  m["train_loss"] = res.train_loss;
  m["n_train"] = train_y.size();
  m["n_test"] = test_y.size();
  std::ofstream mf(fs::path(args.out) / "metrics.json");
  mf << m.dump(2) << "\n";
  write_run_record(args.out, r, argc, argv);
  std::cout << "probe metrics: " << m.dump() << "\n";
  return 0;
}

void write_finetune_artifacts(const fs::path& out, MaeModel<float>& model, Linear<float>& head,
                              const FinetuneResult& res, const json& resolved) {
  save_model_checkpoint(out / "checkpoint", model, resolved, &head);
  json m = res.val_metrics.to_json();
  m["lora_params"] = res.lora_param_count;
  m["final_lr"] = res.final_lr;
  std::ofstream mf(out / "metrics.json");
  mf << m.dump(2) << "\n";
  std::ofstream lf(out / "log.csv");
  lf << "step,lr,train_loss,val_loss,backbone_grad_norm,plateau_cut\n";
  lf.precision(10);
  for (const FinetuneLogEntry& e : res.log) {
    lf << e.step << "," << e.lr << "," << e.train_loss << ",";
    if (std::isfinite(e.val_loss)) lf << e.val_loss;
    lf << "," << e.backbone_grad_norm << "," << (e.plateau_cut ? 1 : 0) << "\n";
  }
}

int finetune_single(const Resolved& r, const std::string& in, const std::string& ckpt,
                    const fs::path& out, int argc, char** argv) {
  LoadedModel lm = load_model_checkpoint(ckpt);
  // The saved classifier must describe the architecture it actually has,
  // which is pinned by the input checkpoint, not by this command's config.
  json saved_cfg = r.raw;
  saved_cfg["model"] = lm.archive.meta.at("config").at("model");
  saved_cfg["patch"] = lm.archive.meta.at("config").at("patch");
  const std::vector<EegRecording> recs = load_corpus(in);
  const std::vector<LabeledSample<float>> all = labeled_samples(recs, lm.cfg.patch);
  std::vector<LabeledSample<float>> train, val;
  split_holdout(all, r.cfg.probe.test_fraction, r.cfg.seed, train, val);

  Linear<float> head;
  head.setup("head", lm.cfg.model.dim, r.cfg.finetune.classes, /*with_bias=*/true);
  Rng head_rng = Rng(r.cfg.seed).stream("head_init");
  for (int64_t i = 0; i < head.w.w.rows(); ++i)
    for (int64_t j = 0; j < head.w.w.cols(); ++j)
      head.w.w(i, j) = static_cast<float>(head_rng.normal(0.0, 0.02));
  head.b.w.setZero();

  const FinetuneResult res =
      two_step_finetune(lm.model, head, train, val, r.cfg.finetune, r.cfg.seed);
  write_finetune_artifacts(out, lm.model, head, res, saved_cfg);
  write_run_record(out, r, argc, argv);
  std::cout << "finetune metrics: " << res.val_metrics.to_json().dump() << "\n";
  return 0;
}

// Re-invokes this binary once per seed so every run is process-isolated;
// --parallel caps how many children run at once.
int finetune_multi(const CommonArgs& args, const Resolved& r, const std::string& in,
                   const std::string& ckpt, const std::vector<int64_t>& seeds, int parallel,
                   int argc, char** argv) {
  fs::create_directories(args.out);
  const fs::path cfg_path = fs::path(args.out) / "resolved_config.json";
  {
    std::ofstream cf(cfg_path);
    cf << r.raw.dump(2) << "\n";
  }
  char exe[4096];
  const ssize_t n = readlink("/proc/self/exe", exe, sizeof(exe) - 1);
  if (n <= 0) throw std::runtime_error("cannot resolve own executable path");
  exe[n] = '\0';

  std::vector<pid_t> running;
  std::vector<int64_t> running_seed;
  int failures = 0;
  const auto reap = [&](bool all) {
    while (!running.empty() && (all || static_cast<int>(running.size()) >= parallel)) {
      int status = 0;
      const pid_t pid = waitpid(-1, &status, 0);
      if (pid < 0) throw std::runtime_error("waitpid failed");
      for (size_t i = 0; i < running.size(); ++i)
        if (running[i] == pid) {
          if (!WIFEXITED(status) || WEXITSTATUS(status) != 0) {
            std::cerr << "seed " << running_seed[i] << " exited with status "
                      << (WIFEXITED(status) ? WEXITSTATUS(status) : -1) << "\n";
            ++failures;
          }
          running.erase(running.begin() + i);
          running_seed.erase(running_seed.begin() + i);
          break;
        }
    }
  };

  for (int64_t s : seeds) {
    reap(false);
    const std::string child_out = (fs::path(args.out) / ("seed-" + std::to_string(s))).string();
    const pid_t pid = fork();
    if (pid < 0) throw std::runtime_error("fork failed");
    if (pid == 0) {
      std::vector<std::string> cargs = {exe,
                                        "finetune",
                                        "--config", cfg_path.string(),
                                        "--in", in,
                                        "--checkpoint", ckpt,
                                        "--out", child_out,
                                        "--seed", std::to_string(s)};
      std::vector<char*> cargv;
      for (std::string& a : cargs) cargv.push_back(a.data());
      cargv.push_back(nullptr);
      execv(exe, cargv.data());
      std::perror("execv");
      _exit(127);
    }
    running.push_back(pid);
    running_seed.push_back(s);
  }
  reap(true);
  if (failures > 0) throw std::runtime_error(std::to_string(failures) + " child run(s) failed");

  std::vector<Metrics> per_run;
  for (int64_t s : seeds) {
    std::ifstream mf(fs::path(args.out) / ("seed-" + std::to_string(s)) / "metrics.json");
    if (!mf.good()) throw std::runtime_error("missing metrics for seed " + std::to_string(s));
    per_run.push_back(metrics_from_json(json::parse(mf)));
  }
  const json agg = aggregate_metrics(per_run);
  std::ofstream af(fs::path(args.out) / "metrics_aggregate.json");
  af << agg.dump(2) << "\n";
  std::ofstream cf(fs::path(args.out) / "metrics.csv");
  cf << runs_csv(per_run);
  write_run_record(args.out, r, argc, argv);
  std::cout << "aggregate: " << agg.dump() << "\n";
  return 0;
}

int run_soup(const CommonArgs& args, const std::vector<std::string>& inputs, int argc,
             char** argv) {
  Resolved r = resolve_config(args);
  std::vector<TensorArchive> archives;
  for (const std::string& p : inputs) {
    fs::path dir(p);
    if (fs::exists(dir / "checkpoint" / "manifest.json")) dir /= "checkpoint";
    archives.push_back(load_archive(dir));
  }
  const TensorArchive souped = soup_archives(archives);
  save_archive(fs::path(args.out) / "checkpoint", souped);
  write_run_record(args.out, r, argc, argv);
  std::cout << "souped " << archives.size() << " checkpoints\n";
  return 0;
}

int run_eval(const CommonArgs& args, const std::string& in, const std::string& ckpt,
             const std::vector<std::string>& channels, int argc, char** argv) {
  Resolved r = resolve_config(args);
  LoadedModel lm = load_model_checkpoint(ckpt);
  Linear<float> head = head_from_archive(lm.archive, lm.cfg.model.dim);
  std::vector<EegRecording> recs = load_corpus(in);
  if (!channels.empty())
    for (EegRecording& rec : recs) rec = select_channels(rec, channels);
  const std::vector<LabeledSample<float>> data = labeled_samples(recs, lm.cfg.patch);
  const int classes = static_cast<int>(head.w.w.cols());
  const Metrics m = eval_classifier_metrics(lm.model, head, data, classes);
  fs::create_directories(args.out);
  json mj = m.to_json();
  mj["n_eval"] = data.size();
  if (!channels.empty()) mj["channels"] = channels;
  std::ofstream mf(fs::path(args.out) / "metrics.json");
  mf << mj.dump(2) << "\n";
  write_run_record(args.out, r, argc, argv);
  std::cout << "eval metrics: " << mj.dump() << "\n";
  return 0;
}

int run_flops(const CommonArgs& args, int argc, char** argv) {
  Resolved r = resolve_config(args);
  const FlopsEstimate est = flops_estimate(r.cfg.flops);
  json out = {{"total_flops", est.total_flops},
              {"seconds", est.seconds},
              {"gpu_hours", est.gpu_hours}};
  std::cout << out.dump() << "\n";
  if (!args.out.empty()) {
    fs::create_directories(args.out);
    std::ofstream f(fs::path(args.out) / "flops.json");
    f << out.dump(2) << "\n";
    write_run_record(args.out, r, argc, argv);
  }
  return 0;
}

int run_lr_curve(const CommonArgs& args, int argc, char** argv) {
  Resolved r = resolve_config(args);
  const double peak = resolve_peak_lr(r.cfg);
  fs::create_directories(args.out);
  std::ofstream csv(fs::path(args.out) / "lr_curve.csv");
  csv << "step,lr\n";
  csv.precision(17);
  for (int64_t s = 0; s <= r.cfg.schedule.horizon(); ++s)
    csv << s << "," << wsd_lr(s, r.cfg.schedule, peak) << "\n";
  write_run_record(args.out, r, argc, argv);
  std::cout << "wrote lr curve for " << r.cfg.schedule.horizon() + 1 << " steps\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"EEG foundation model trainer"};
  app.require_subcommand(1);

  CommonArgs common;
  std::string in, ckpt;
  std::vector<std::string> soup_inputs, eval_channels;
  std::vector<int64_t> seeds;
  int runs = 1;
  int parallel = 1;

  const auto add_common = [&](CLI::App* cmd, bool needs_out) {
    cmd->add_option("--config", common.config_path, "JSON config file (defaults when omitted)");
    cmd->add_option("--override", common.overrides,
                    "dotted-path config override, e.g. model.dim=64 (repeatable)");
    cmd->add_option("--seed", common.seed, "overrides the config's seed");
    auto* out = cmd->add_option("--out", common.out, "artifact directory");
    if (needs_out) out->required();
  };

  auto* c_synth = app.add_subcommand("synth", "generate a labeled synthetic corpus");
  add_common(c_synth, true);
  auto* c_prep = app.add_subcommand("preprocess", "resample, band-pass, z-score and clip a corpus");
  add_common(c_prep, true);
  c_prep->add_option("--in", in, "input corpus directory")->required();
  auto* c_pre = app.add_subcommand("pretrain", "masked-autoencoder pretraining");
  add_common(c_pre, true);
  c_pre->add_option("--in", in, "corpus directory")->required();
  auto* c_emb = app.add_subcommand("embed", "extract pooled embeddings");
  add_common(c_emb, true);
  c_emb->add_option("--in", in, "corpus directory")->required();
  c_emb->add_option("--checkpoint", ckpt, "model checkpoint directory")->required();
  auto* c_probe = app.add_subcommand("probe", "linear probe on frozen embeddings");
  add_common(c_probe, true);
  c_probe->add_option("--in", in, "corpus directory")->required();
  c_probe->add_option("--checkpoint", ckpt, "model checkpoint directory")->required();
  auto* c_ft = app.add_subcommand("finetune", "two-step fine-tuning");
  add_common(c_ft, true);
  c_ft->add_option("--in", in, "corpus directory")->required();
  c_ft->add_option("--checkpoint", ckpt, "model checkpoint directory")->required();
  c_ft->add_option("--runs", runs, "number of seeds (seed, seed+1, ...)");
  c_ft->add_option("--seeds", seeds, "explicit seed list (overrides --runs)");
  c_ft->add_option("--parallel", parallel, "max concurrent child runs");
  auto* c_soup = app.add_subcommand("soup", "average parameter-compatible checkpoints");
  add_common(c_soup, true);
  c_soup->add_option("inputs", soup_inputs, "checkpoint (or run) directories")->required();
  auto* c_eval = app.add_subcommand("eval", "evaluate a fine-tuned classifier");
  add_common(c_eval, true);
  c_eval->add_option("--in", in, "corpus directory")->required();
  c_eval->add_option("--checkpoint", ckpt, "classifier checkpoint directory")->required();
  c_eval->add_option("--channels", eval_channels, "evaluate on this channel subset only");
  auto* c_flops = app.add_subcommand("flops", "compute-budget estimate");
  add_common(c_flops, false);
  auto* c_lr = app.add_subcommand("lr-curve", "dump the LR schedule as CSV");
  add_common(c_lr, true);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help
    std::cerr << json{{"error", {{"kind", "usage"}, {"message", e.what()}}}}.dump() << "\n";
    return app.exit(e, std::cout, std::cerr);
  }

  try {
    if (c_synth->parsed()) return run_synth(common, argc, argv);
    if (c_prep->parsed()) return run_preprocess(common, in, argc, argv);
    if (c_pre->parsed()) return run_pretrain(common, in, argc, argv);
    if (c_emb->parsed()) return run_embed(common, in, ckpt, argc, argv);
    if (c_probe->parsed()) return run_probe(common, in, ckpt, argc, argv);
    if (c_ft->parsed()) {
      Resolved r = resolve_config(common);
      if (seeds.empty())
        for (int i = 0; i < runs; ++i) seeds.push_back(static_cast<int64_t>(r.cfg.seed) + i);
      if (seeds.size() == 1) {
        CommonArgs single = common;
        single.seed = seeds[0];
        Resolved rs = resolve_config(single);
        return finetune_single(rs, in, ckpt, common.out, argc, argv);
      }
      return finetune_multi(common, r, in, ckpt, seeds, std::max(1, parallel), argc, argv);
    }
    if (c_soup->parsed()) return run_soup(common, soup_inputs, argc, argv);
    if (c_eval->parsed()) return run_eval(common, in, ckpt, eval_channels, argc, argv);
    if (c_flops->parsed()) return run_flops(common, argc, argv);
    if (c_lr->parsed()) return run_lr_curve(common, argc, argv);
  } catch (const std::invalid_argument& e) {
    std::cerr << json{{"error", {{"kind", "config"}, {"message", e.what()}}}}.dump() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << json{{"error", {{"kind", "runtime"}, {"message", e.what()}}}}.dump() << "\n";
    return 1;
  }
  return 0;
}
