#pragma once

#include <algorithm>
#include <limits>
#include <memory>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "eegfm/metrics.hpp"
#include "eegfm/model.hpp"
#include "eegfm/optim.hpp"
#include "eegfm/pretrain.hpp"

namespace eegfm {

template <typename S>
struct LabeledSample {
  TrainSample<S> sample;
  int label = 0;
};

// ---------------------------------------------------------------------------
// Cross entropy over logits with (possibly soft) targets.

template <typename S>
Mat<S> softmax_rows(const Mat<S>& logits) {
  Mat<S> p(logits.rows(), logits.cols());
  for (int64_t i = 0; i < logits.rows(); ++i) {
    const S mx = logits.row(i).maxCoeff();
    S denom = S(0);
    for (int64_t j = 0; j < logits.cols(); ++j) {
      p(i, j) = std::exp(logits(i, j) - mx);
      denom += p(i, j);
    }
    p.row(i) /= denom;
  }
  return p;
}

// Mean cross entropy over rows; writes d(loss)/d(logits) scaled by `scale`
// into dlogits when given.
template <typename S>
double cross_entropy(const Mat<S>& logits, const MatD& targets, Mat<S>* dlogits = nullptr,
                     double scale = 1.0) {
  if (logits.rows() != targets.rows() || logits.cols() != targets.cols())
    throw std::invalid_argument("cross_entropy: shape mismatch");
  const Mat<S> p = softmax_rows(logits);
  double loss = 0.0;
  for (int64_t i = 0; i < logits.rows(); ++i)
    for (int64_t j = 0; j < logits.cols(); ++j)
      if (targets(i, j) != 0.0)
        loss -= targets(i, j) * std::log(std::max(static_cast<double>(p(i, j)), 1e-300));
  loss /= static_cast<double>(logits.rows());
  if (dlogits) {
    dlogits->resize(logits.rows(), logits.cols());
    const S g = static_cast<S>(scale / static_cast<double>(logits.rows()));
    for (int64_t i = 0; i < logits.rows(); ++i)
      for (int64_t j = 0; j < logits.cols(); ++j)
        (*dlogits)(i, j) = g * (p(i, j) - static_cast<S>(targets(i, j)));
  }
  return loss;
}

inline MatD one_hot(const std::vector<int>& labels, int classes) {
  MatD y = MatD::Zero(static_cast<int64_t>(labels.size()), classes);
  for (size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= classes)
      throw std::invalid_argument("one_hot: label " + std::to_string(labels[i]) +
                                  " outside [0, " + std::to_string(classes) + ")");
    y(static_cast<int64_t>(i), labels[i]) = 1.0;
  }
  return y;
}

// ---------------------------------------------------------------------------
// Mixup.

// Convex combination of the batch with a permuted copy of itself; one
// lambda per call. Applies identically to features and one-hot labels, so
// mixed label rows still sum to 1.
template <typename S>
void mixup_apply(Mat<S>& x, MatD& y, double lambda, const std::vector<int>& perm) {
  if (x.rows() != y.rows() || static_cast<int64_t>(perm.size()) != x.rows())
    throw std::invalid_argument("mixup_apply: batch size mismatch");
  const Mat<S> x0 = x;
  const MatD y0 = y;
  for (int64_t i = 0; i < x.rows(); ++i) {
    x.row(i) = static_cast<S>(lambda) * x0.row(i) + static_cast<S>(1.0 - lambda) * x0.row(perm[i]);
    y.row(i) = lambda * y0.row(i) + (1.0 - lambda) * y0.row(perm[i]);
  }
}

template <typename S>
void mixup_apply(std::vector<Mat<S>>& grids, MatD& y, double lambda,
                 const std::vector<int>& perm) {
  if (static_cast<int64_t>(grids.size()) != y.rows() || perm.size() != grids.size())
    throw std::invalid_argument("mixup_apply: batch size mismatch");
  const std::vector<Mat<S>> g0 = grids;
  const MatD y0 = y;
  for (size_t i = 0; i < grids.size(); ++i) {
    if (g0[perm[i]].rows() != g0[i].rows() || g0[perm[i]].cols() != g0[i].cols())
      throw std::invalid_argument("mixup_apply: grids in a batch must share a shape");
    grids[i] = static_cast<S>(lambda) * g0[i] + static_cast<S>(1.0 - lambda) * g0[perm[i]];
    y.row(static_cast<int64_t>(i)) =
        lambda * y0.row(static_cast<int64_t>(i)) + (1.0 - lambda) * y0.row(perm[i]);
  }
}

// Draws lambda ~ Beta(alpha, alpha) and a batch permutation, then mixes.
// Returns the drawn lambda.
template <typename S>
double mixup_batch(Mat<S>& x, MatD& y, double alpha, Rng& rng) {
  if (alpha <= 0.0) throw std::invalid_argument("mixup_batch: alpha must be positive");
  const double lambda = rng.beta(alpha, alpha);
  const std::vector<int> perm = rng.permutation(static_cast<int>(x.rows()));
  mixup_apply(x, y, lambda, perm);
  return lambda;
}

// ---------------------------------------------------------------------------
// LoRA on the encoder's attention projections.

struct LoraConfig {
  int rank = 8;
  double alpha = 16.0;
  bool on_q = true, on_k = true, on_v = true, on_o = true;

  void validate(int dim) const {
    std::string out;
    if (rank < 1) out += "rank must be >= 1; ";
    if (rank >= dim)
      out += "rank must be smaller than the projection width " + std::to_string(dim) + "; ";
    if (alpha <= 0.0) out += "alpha must be positive; ";
    if (!(on_q || on_k || on_v || on_o)) out += "at least one of Q/K/V/O must be targeted; ";
    if (!out.empty()) throw std::invalid_argument("LoraConfig: " + out);
  }
};

// Owns the adapter tensors; the model's Linear layers hold raw pointers into
// this object, so it must outlive them (or be detached via lora_remove).
template <typename S>
struct LoraAdapters {
  LoraConfig cfg;
  std::vector<std::unique_ptr<LoraState<S>>> states;

  std::vector<Param<S>*> params() {
    std::vector<Param<S>*> out;
    for (auto& s : states) {
      out.push_back(&s->a);
      out.push_back(&s->b);
    }
    return out;
  }
  int64_t param_count() const {
    int64_t n = 0;
    for (const auto& s : states) n += s->a.size() + s->b.size();
    return n;
  }
  void set_frozen(bool f) {
    for (auto& s : states) {
      s->a.frozen = f;
      s->b.frozen = f;
    }
  }
};

// Attaches W + (alpha/rank)*A*B adapters to the selected encoder attention
// projections. A ~ Normal(0, 0.02^2), B = 0, so injection leaves every model
// output bit-identical until B moves away from zero.
template <typename S>
LoraAdapters<S> lora_inject(MaeModel<S>& model, const LoraConfig& cfg, Rng& rng,
                            double sigma = 0.02) {
  cfg.validate(model.cfg.dim);
  LoraAdapters<S> adapters;
  adapters.cfg = cfg;
  auto attach = [&](Linear<S>& lin, bool on) {
    if (!on) return;
    if (lin.lora) throw std::logic_error("lora_inject: " + lin.w.name + " already has an adapter");
    auto state = std::make_unique<LoraState<S>>();
    state->a.setup(lin.w.name + ".lora_a", static_cast<int>(lin.w.w.rows()), cfg.rank,
                   ParamKind::weight);
    state->b.setup(lin.w.name + ".lora_b", cfg.rank, static_cast<int>(lin.w.w.cols()),
                   ParamKind::weight);
    for (int64_t i = 0; i < state->a.w.rows(); ++i)
      for (int64_t j = 0; j < state->a.w.cols(); ++j)
        state->a.w(i, j) = static_cast<S>(rng.normal(0.0, sigma));
    state->scale = static_cast<S>(cfg.alpha / static_cast<double>(cfg.rank));
    lin.lora = state.get();
    adapters.states.push_back(std::move(state));
  };
  for (auto& block : model.encoder.blocks) {
    attach(block.attn.wq, cfg.on_q);
    attach(block.attn.wk, cfg.on_k);
    attach(block.attn.wv, cfg.on_v);
    attach(block.attn.wo, cfg.on_o);
  }
  return adapters;
}

template <typename S>
void lora_remove(MaeModel<S>& model) {
  for (auto& block : model.encoder.blocks) {
    block.attn.wq.lora = nullptr;
    block.attn.wk.lora = nullptr;
    block.attn.wv.lora = nullptr;
    block.attn.wo.lora = nullptr;
  }
}

// Folds every adapter product into its base weight, then detaches. The
// merged model computes the same function as the adapted one.
template <typename S>
void lora_merge(MaeModel<S>& model, LoraAdapters<S>& adapters) {
  auto fold = [&](Linear<S>& lin) {
    if (!lin.lora) return;
    lin.w.w += lin.lora->scale * (lin.lora->a.w * lin.lora->b.w);
    lin.lora = nullptr;
  };
  for (auto& block : model.encoder.blocks) {
    fold(block.attn.wq);
    fold(block.attn.wk);
    fold(block.attn.wv);
    fold(block.attn.wo);
  }
  (void)adapters;
}

// ---------------------------------------------------------------------------
// Pooled classification path: embed + posenc -> encoder -> learned-query
// pool over all layers' records -> linear head. Mirrors the pooled probing
// variant; gradient flows into the backbone through the pooled records.

template <typename S>
Mat<S> classify_forward(MaeModel<S>& model, Linear<S>& head, const Mat<S>& patches,
                        const MatD& ext, const TrainCtx& ctx) {
  const Mat<S> ext_s = ext.cast<S>();
  const Mat<S> f_pe = fourier_encode<S>(ext, model.cfg.fourier);
  const Mat<S> p_enc = model.posenc.forward(ext_s, f_pe);
  Mat<S> enc_in = model.embed.forward(patches);
  enc_in += p_enc;
  model.encoder.forward(enc_in, ctx);
  const int depth = static_cast<int>(model.encoder.blocks.size());
  if (depth == 0) throw std::invalid_argument("classify_forward: encoder depth must be >= 1");
  Mat<S> rec_tokens(static_cast<int64_t>(depth) * patches.rows(), model.cfg.dim);
  for (int l = 0; l < depth; ++l)
    rec_tokens.middleRows(static_cast<int64_t>(l) * patches.rows(), patches.rows()) =
        model.encoder.records[l];
  const Mat<S> pooled = model.pool.forward(rec_tokens);
  return head.forward(pooled);
}

template <typename S>
void classify_backward(MaeModel<S>& model, Linear<S>& head, const Mat<S>& dlogits) {
  const Mat<S> dpooled = head.backward(dlogits);
  const Mat<S> drec_tokens = model.pool.backward(dpooled);
  const int depth = static_cast<int>(model.encoder.blocks.size());
  const int64_t n_tok = drec_tokens.rows() / depth;
  std::vector<Mat<S>> drecords(depth);
  for (int l = 0; l < depth; ++l)
    drecords[l] = drec_tokens.middleRows(static_cast<int64_t>(l) * n_tok, n_tok);
  const Mat<S> dzero = Mat<S>::Zero(n_tok, model.cfg.dim);
  const Mat<S> denc_in = model.encoder.backward(dzero, &drecords);
  model.embed.backward(denc_in);
  model.posenc.backward(denc_in);
}

// ---------------------------------------------------------------------------
// Linear probing on frozen embeddings.

enum class Pooling { mean, attention, flatten };

struct ProbeConfig {
  Pooling pooling = Pooling::attention;
  int classes = 2;
  int epochs = 300;  // full-batch updates
  double lr = 1e-2;
  double weight_decay = 0.0;

  void validate() const {
    std::string out;
    if (classes < 2) out += "classes must be >= 2; ";
    if (epochs < 1) out += "epochs must be >= 1; ";
    if (lr <= 0.0) out += "lr must be positive; ";
    if (weight_decay < 0.0) out += "weight_decay must be >= 0; ";
    if (!out.empty()) throw std::invalid_argument("ProbeConfig: " + out);
  }
};

// Frozen-encoder feature extraction for probing. mean: average of per-token
// states; attention: the learned-query pooled vector; flatten: all token
// states concatenated (requires a homogeneous grid across samples).
template <typename S>
MatD probe_features(MaeModel<S>& model, const std::vector<TrainSample<S>>& samples,
                    Pooling pooling) {
  if (samples.empty()) throw std::invalid_argument("probe_features: no samples");
  MatD out;
  for (size_t i = 0; i < samples.size(); ++i) {
    const EmbeddingResult<S> emb = extract_embeddings(model, samples[i]);
    VecD row;
    switch (pooling) {
      case Pooling::mean: {
        row = emb.tokens.template cast<double>().colwise().mean().transpose();
        break;
      }
      case Pooling::attention: {
        row = emb.pooled.row(0).template cast<double>().transpose();
        break;
      }
      case Pooling::flatten: {
        const MatD t = emb.tokens.template cast<double>();
        row.resize(t.size());
        int64_t k = 0;
        for (int64_t r = 0; r < t.rows(); ++r)
          for (int64_t c = 0; c < t.cols(); ++c) row[k++] = t(r, c);
        break;
      }
    }
    if (i == 0) out.resize(static_cast<int64_t>(samples.size()), row.size());
    if (row.size() != out.cols())
      throw std::invalid_argument("probe_features: inconsistent feature widths across samples");
    out.row(static_cast<int64_t>(i)) = row.transpose();
  }
  return out;
}

struct ProbeResult {
  MatD weight;  // features x classes
  MatD bias;    // 1 x classes
  Metrics metrics;
  double train_loss = 0.0;
};

inline std::vector<int> probe_predict(const MatD& x, const MatD& weight, const MatD& bias) {
  std::vector<int> pred(static_cast<size_t>(x.rows()));
  const MatD logits = (x * weight).rowwise() + bias.row(0);
  for (int64_t i = 0; i < logits.rows(); ++i) {
    int arg = 0;
    logits.row(i).maxCoeff(&arg);
    pred[static_cast<size_t>(i)] = arg;
  }
  return pred;
}

// Trains a softmax head on fixed features with full-batch AdamW-style
// updates; the encoder is never touched (it is not even reachable from
// here). Metrics are computed on the held-out set.
inline ProbeResult linear_probe(const MatD& train_x, const std::vector<int>& train_y,
                                const MatD& test_x, const std::vector<int>& test_y,
                                const ProbeConfig& cfg, uint64_t seed) {
  cfg.validate();
  if (train_x.rows() != static_cast<int64_t>(train_y.size()))
    throw std::invalid_argument("linear_probe: feature/label count mismatch");
  {
    std::vector<int> distinct;
    for (int y : train_y)
      if (std::find(distinct.begin(), distinct.end(), y) == distinct.end()) distinct.push_back(y);
    if (distinct.size() < 2)
      throw std::invalid_argument("linear_probe: training labels contain a single class");
  }
  const MatD y = one_hot(train_y, cfg.classes);

  Param<double> w, b;
  w.setup("probe.w", static_cast<int>(train_x.cols()), cfg.classes, ParamKind::weight);
  b.setup("probe.b", 1, cfg.classes, ParamKind::bias);
  Rng rng = Rng(seed).stream("probe_init");
  for (int64_t i = 0; i < w.w.rows(); ++i)
    for (int64_t j = 0; j < w.w.cols(); ++j) w.w(i, j) = rng.normal(0.0, 0.02);

  OptimConfig ocfg;
  ocfg.weight_decay = cfg.weight_decay;
  StableAdamW<double> opt({&w, &b}, ocfg);
  double loss = 0.0;
  for (int e = 0; e < cfg.epochs; ++e) {
    w.zero_grad();
    b.zero_grad();
    MatD logits = (train_x * w.w).rowwise() + b.w.row(0);
    MatD dlogits;
    loss = cross_entropy(logits, y, &dlogits);
    w.accumulate(train_x.transpose() * dlogits);
    b.accumulate(dlogits.colwise().sum());
    opt.step(cfg.lr);
  }

  ProbeResult res;
  res.weight = w.w;
  res.bias = b.w;
  res.train_loss = loss;
  const std::vector<int> pred = probe_predict(test_x, w.w, b.w);
  if (cfg.classes == 2) {
    const MatD logits = (test_x * w.w).rowwise() + b.w.row(0);
    std::vector<double> scores(static_cast<size_t>(logits.rows()));
    const MatD p = softmax_rows(logits);
    for (int64_t i = 0; i < logits.rows(); ++i) scores[static_cast<size_t>(i)] = p(i, 1);
    res.metrics = binary_metrics(test_y, pred, scores);
  } else {
    res.metrics = classification_metrics(test_y, pred);
  }
  return res;
}

// ---------------------------------------------------------------------------
// Two-step fine-tuning: head-only phase, then unfreeze (full weights, or
// adapters when LoRA is on) within a single continuous run. Warmup ramp into
// a reduce-on-plateau learning rate; dropout and mixup regularize the run.

struct FinetunePlan {
  int64_t freeze_steps = 100;
  int64_t total_steps = 300;
  double mixup_alpha = 0.2;
  double dropout = 0.1;
  int plateau_patience = 3;
  double plateau_factor = 0.5;
  int64_t warmup_steps = 20;
  double lr = 1e-3;
  double weight_decay = 0.01;
  int batch_size = 8;
  int64_t eval_every = 20;
  int classes = 2;
  bool use_lora = false;
  LoraConfig lora;
  bool lora_from_start = true;  // adapters train together with the head

  void validate() const {
    std::string out;
    if (freeze_steps < 0) out += "freeze_steps must be >= 0; ";
    if (total_steps < 1) out += "total_steps must be >= 1; ";
    if (freeze_steps >= total_steps && freeze_steps != total_steps)
      out += "freeze_steps must be <= total_steps; ";
    if (mixup_alpha < 0.0) out += "mixup_alpha must be >= 0 (0 disables mixup); ";
    if (dropout < 0.0 || dropout >= 1.0) out += "dropout must be in [0, 1); ";
    if (plateau_patience < 1) out += "plateau_patience must be >= 1; ";
    if (!(plateau_factor > 0.0 && plateau_factor < 1.0))
      out += "plateau_factor must be in (0, 1); ";
    if (warmup_steps < 0) out += "warmup_steps must be >= 0; ";
    if (lr <= 0.0) out += "lr must be positive; ";
    if (weight_decay < 0.0) out += "weight_decay must be >= 0; ";
    if (batch_size < 1) out += "batch_size must be >= 1; ";
    if (eval_every < 1) out += "eval_every must be >= 1; ";
    if (classes < 2) out += "classes must be >= 2; ";
    if (!out.empty()) throw std::invalid_argument("FinetunePlan: " + out);
  }
};

struct FinetuneLogEntry {
  int64_t step = 0;
  double lr = 0.0;
  double train_loss = 0.0;
  double val_loss = std::numeric_limits<double>::quiet_NaN();  // NaN between evals
  double backbone_grad_norm = 0.0;
  bool plateau_cut = false;
};

struct FinetuneResult {
  Metrics val_metrics;
  std::vector<FinetuneLogEntry> log;
  int64_t lora_param_count = 0;
  double final_lr = 0.0;
};

template <typename S>
double eval_classifier_loss(MaeModel<S>& model, Linear<S>& head,
                            const std::vector<LabeledSample<S>>& data, int classes) {
  TrainCtx ctx;  // eval mode
  double loss = 0.0;
  for (const auto& ls : data) {
    const MatD ext =
        extend_positions(ls.sample.positions, ls.sample.n_patches, model.cfg.fourier);
    const Mat<S> logits = classify_forward(model, head, ls.sample.patches, ext, ctx);
    MatD target = MatD::Zero(1, classes);
    target(0, ls.label) = 1.0;
    loss += cross_entropy(logits, target);
  }
  return loss / static_cast<double>(data.size());
}

template <typename S>
Metrics eval_classifier_metrics(MaeModel<S>& model, Linear<S>& head,
                                const std::vector<LabeledSample<S>>& data, int classes) {
  TrainCtx ctx;
  std::vector<int> y_true, y_pred;
  std::vector<double> scores;
  for (const auto& ls : data) {
    const MatD ext =
        extend_positions(ls.sample.positions, ls.sample.n_patches, model.cfg.fourier);
    const Mat<S> logits = classify_forward(model, head, ls.sample.patches, ext, ctx);
    const Mat<S> p = softmax_rows(logits);
    int arg = 0;
    logits.row(0).maxCoeff(&arg);
    y_true.push_back(ls.label);
    y_pred.push_back(arg);
    if (classes == 2) scores.push_back(static_cast<double>(p(0, 1)));
  }
  return classes == 2 ? binary_metrics(y_true, y_pred, scores)
                      : classification_metrics(y_true, y_pred);
}

template <typename S>
FinetuneResult two_step_finetune(MaeModel<S>& model, Linear<S>& head,
                                 const std::vector<LabeledSample<S>>& train,
                                 const std::vector<LabeledSample<S>>& val,
                                 const FinetunePlan& plan, uint64_t seed) {
  plan.validate();
  if (train.empty() || val.empty())
    throw std::invalid_argument("two_step_finetune: train and val must be non-empty");
  if (head.w.w.cols() != plan.classes)
    throw std::invalid_argument("two_step_finetune: head width does not match classes");

  Rng order_rng = Rng(seed).stream("ft_order");
  Rng mixup_rng = Rng(seed).stream("ft_mixup");
  Rng dropout_rng = Rng(seed).stream("ft_dropout");
  Rng lora_rng = Rng(seed).stream("ft_lora");

  std::vector<Param<S>*> backbone;
  model.visit_params([&](Param<S>& p) { backbone.push_back(&p); });
  for (Param<S>* p : backbone) p->frozen = true;

  LoraAdapters<S> adapters;
  if (plan.use_lora) {
    adapters = lora_inject(model, plan.lora, lora_rng);
    adapters.set_frozen(!plan.lora_from_start);
  }

  std::vector<Param<S>*> all = backbone;
  for (Param<S>* p : adapters.params()) all.push_back(p);
  all.push_back(&head.w);
  if (!head.b.empty()) all.push_back(&head.b);

  OptimConfig ocfg;
  ocfg.weight_decay = plan.weight_decay;
  StableAdamW<S> opt(all, ocfg);

  auto zero_all = [&]() {
    for (Param<S>* p : all) p->zero_grad();
  };

  FinetuneResult res;
  res.lora_param_count = adapters.param_count();
  double current_lr = plan.lr;
  double best_val = std::numeric_limits<double>::infinity();
  int bad_evals = 0;

  std::vector<int> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  order_rng.shuffle(order);
  size_t cursor = 0;

  TrainCtx ctx;
  ctx.train = true;
  ctx.dropout = plan.dropout;
  ctx.rng = &dropout_rng;

  for (int64_t step = 1; step <= plan.total_steps; ++step) {
    if (step == plan.freeze_steps + 1) {
      // Unfreeze point of the continuous run. Under LoRA the base stays
      // frozen and the adapters take over; otherwise the whole backbone
      // opens up.
      if (plan.use_lora)
        adapters.set_frozen(false);
      else
        for (Param<S>* p : backbone) p->frozen = false;
    }

    std::vector<Mat<S>> grids(plan.batch_size);
    std::vector<const TrainSample<S>*> refs(plan.batch_size);
    MatD targets = MatD::Zero(plan.batch_size, plan.classes);
    for (int b = 0; b < plan.batch_size; ++b) {
      if (cursor >= order.size()) {
        order_rng.shuffle(order);
        cursor = 0;
      }
      const LabeledSample<S>& ls = train[order[cursor++]];
      grids[b] = ls.sample.patches;
      refs[b] = &ls.sample;
      targets(b, ls.label) = 1.0;
    }
    if (plan.mixup_alpha > 0.0 && plan.batch_size > 1) {
      const double lambda = mixup_rng.beta(plan.mixup_alpha, plan.mixup_alpha);
      const std::vector<int> perm = mixup_rng.permutation(plan.batch_size);
      mixup_apply(grids, targets, lambda, perm);
    }

    zero_all();
    double train_loss = 0.0;
    const double grad_scale = 1.0 / static_cast<double>(plan.batch_size);
    for (int b = 0; b < plan.batch_size; ++b) {
      const MatD ext = extend_positions(refs[b]->positions, refs[b]->n_patches, model.cfg.fourier);
      const Mat<S> logits = classify_forward(model, head, grids[b], ext, ctx);
      Mat<S> dlogits;
      train_loss += cross_entropy(logits, MatD(targets.row(b)), &dlogits, grad_scale);
      classify_backward(model, head, dlogits);
    }
    train_loss *= grad_scale;
    if (!std::isfinite(train_loss))
      throw std::runtime_error("two_step_finetune: non-finite loss at step " +
                               std::to_string(step));

    FinetuneLogEntry entry;
    entry.step = step;
    entry.train_loss = train_loss;
    entry.backbone_grad_norm = grad_norm(backbone);
    entry.lr = plan.warmup_steps > 0 && step <= plan.warmup_steps
                   ? current_lr * static_cast<double>(step) / static_cast<double>(plan.warmup_steps)
                   : current_lr;
    opt.step(entry.lr);

    if (step % plan.eval_every == 0 || step == plan.total_steps) {
      const double val_loss = eval_classifier_loss(model, head, val, plan.classes);
      entry.val_loss = val_loss;
      if (val_loss < best_val) {
        best_val = val_loss;
        bad_evals = 0;
      } else if (++bad_evals >= plan.plateau_patience) {
        current_lr *= plan.plateau_factor;
        bad_evals = 0;
        entry.plateau_cut = true;
      }
    }
    res.log.push_back(entry);
  }

  if (plan.use_lora) lora_merge(model, adapters);
  for (Param<S>* p : backbone) p->frozen = false;

  res.val_metrics = eval_classifier_metrics(model, head, val, plan.classes);
  res.final_lr = current_lr;
  return res;
}

// ---------------------------------------------------------------------------
// Nearest-class-mean few-shot evaluation and Euclidean alignment.

struct NcmResult {
  double mean = 0.0;
  double stddev = 0.0;
  std::vector<double> per_run;
};

NcmResult ncm_few_shot(const MatD& features, const std::vector<int>& labels, int n_shots,
                       int n_runs, uint64_t seed);

// Whitens each trial by the inverse square root of the subject's average
// spatial covariance (ridge-stabilized).
std::vector<MatD> euclidean_alignment(const std::vector<MatD>& trials, double ridge = 1e-8);

}  // namespace eegfm
