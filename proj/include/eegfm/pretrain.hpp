#pragma once

#include <chrono>
#include <cmath>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "eegfm/masking.hpp"
#include "eegfm/model.hpp"
#include "eegfm/montage.hpp"
#include "eegfm/optim.hpp"
#include "eegfm/patching.hpp"
#include "eegfm/posenc.hpp"

namespace eegfm {

struct LossOpts {
  double lambda = 0.1;          // secondary loss multiplier
  bool per_sample_mean = false; // divide per-patch L1 by the window length
  bool secondary = true;        // disable to ablate the secondary objective
};

struct LossBreakdown {
  double primary = 0.0;
  double secondary = 0.0;
  double total = 0.0;
  double lambda = 0.1;
};

// One training sample: a flattened patch grid plus channel coordinates.
template <typename S>
struct TrainSample {
  Mat<S> patches;      // (channels * n_patches) x window, channel-major rows
  Points3 positions;   // channels x 3, cm
  int channels = 0;
  int n_patches = 0;
};

template <typename S>
TrainSample<S> make_sample(const MatF& data, const Points3& positions, const PatchConfig& pc) {
  PatchGrid<S> grid = segment<S>(data, pc);
  if (grid.channels != positions.rows())
    throw std::invalid_argument("make_sample: positions and data disagree on channel count");
  TrainSample<S> s;
  s.patches = std::move(grid.x);
  s.positions = positions;
  s.channels = grid.channels;
  s.n_patches = grid.patches;
  return s;
}

// Patch embedding of a full grid (every token). Each row depends on its own
// patch only, so embedding is linear and row-local.
template <typename S>
Mat<S> embed_patches(const Mat<S>& patches, const Mat<S>& weights) {
  if (patches.cols() != weights.rows())
    throw std::invalid_argument("embed_patches: patch width " + std::to_string(patches.cols()) +
                                " does not match weight rows " + std::to_string(weights.rows()));
  return patches * weights;
}

// Mean over masked patches of the per-patch L1 distance; the per-patch norm
// is the sum over the window's samples (per_sample_mean divides it by the
// window length). Accumulated in double regardless of the model scalar.
template <typename S>
double primary_loss(const Mat<S>& recon, const Mat<S>& truth, bool per_sample_mean = false) {
  if (recon.rows() == 0) throw std::invalid_argument("primary_loss: no masked patches");
  if (recon.rows() != truth.rows() || recon.cols() != truth.cols())
    throw std::invalid_argument("primary_loss: shape mismatch");
  double acc = 0.0;
  for (int64_t i = 0; i < recon.rows(); ++i)
    for (int64_t j = 0; j < recon.cols(); ++j)
      acc += std::abs(static_cast<double>(recon(i, j)) - static_cast<double>(truth(i, j)));
  double denom = static_cast<double>(recon.rows());
  if (per_sample_mean) denom *= static_cast<double>(recon.cols());
  return acc / denom;
}

template <typename S>
Mat<S> l1_grad(const Mat<S>& recon, const Mat<S>& truth, bool per_sample_mean, double scale) {
  double denom = static_cast<double>(recon.rows());
  if (per_sample_mean) denom *= static_cast<double>(recon.cols());
  const S g = static_cast<S>(scale / denom);
  Mat<S> out(recon.rows(), recon.cols());
  for (int64_t i = 0; i < recon.rows(); ++i)
    for (int64_t j = 0; j < recon.cols(); ++j) {
      const S d = recon(i, j) - truth(i, j);
      out(i, j) = d > S(0) ? g : (d < S(0) ? -g : S(0));
    }
  return out;
}

// One masked-autoencoding pass over a single sample. Forward always;
// backward (gradient accumulation into the model) when grad_scale is
// non-null, scaled by *grad_scale (1/batch for batch means).
//
// Data flow: the encoder sees visible tokens only (embedding + positional
// encoding at visible coordinates); the decoder sees every slot in original
// order, visible slots as encoder states and masked slots as the shared
// mask token, with the same positional encoding re-added to both; the
// secondary path pools every encoder layer's post-FFN states with a learned
// query and reconstructs each masked patch from (pooled + positional
// encoding) through a 2-layer FFN. Masked-slot signal content is never read
// on the encoder path, which is the central hiding property.
template <typename S>
LossBreakdown mae_run(MaeModel<S>& model, const Mat<S>& patches, const MatD& ext,
                      const Mask& mask, const LossOpts& opts, const TrainCtx& ctx,
                      const double* grad_scale = nullptr) {
  const int dim = model.cfg.dim;
  const int64_t n_tok = patches.rows();
  if (static_cast<int64_t>(mask.masked.size()) != n_tok)
    throw std::invalid_argument("mae_run: mask and grid disagree on token count");
  const Partition part = partition(mask);
  const int64_t n_vis = static_cast<int64_t>(part.visible.size());
  const int64_t n_m = static_cast<int64_t>(part.masked.size());
  if (n_vis == 0) throw std::invalid_argument("mae_run: empty visible set");
  if (n_m == 0) throw std::invalid_argument("mae_run: nothing is masked");

  const Mat<S> ext_s = ext.cast<S>();
  const Mat<S> f_pe = fourier_encode<S>(ext, model.cfg.fourier);
  const Mat<S> p_enc = model.posenc.forward(ext_s, f_pe);

  Mat<S> x_vis(n_vis, patches.cols());
  for (int64_t i = 0; i < n_vis; ++i) x_vis.row(i) = patches.row(part.visible[i]);
  Mat<S> enc_in = model.embed.forward(x_vis);
  for (int64_t i = 0; i < n_vis; ++i) enc_in.row(i) += p_enc.row(part.visible[i]);

  const Mat<S> h = model.encoder.forward(enc_in, ctx);
  const Mat<S> f_vis = model.enc_norm.forward(h);

  Mat<S> slots(n_tok, dim);
  for (int64_t i = 0; i < n_vis; ++i)
    slots.row(part.visible[i]) = f_vis.row(i) + p_enc.row(part.visible[i]);
  for (int64_t j = 0; j < n_m; ++j)
    slots.row(part.masked[j]) = model.mask_token.w.row(0) + p_enc.row(part.masked[j]);

  const bool project = !model.dec_in.w.empty();
  Mat<S> dec_h = project ? model.dec_in.forward(slots) : slots;
  dec_h = model.decoder.forward(dec_h, ctx);
  dec_h = model.dec_norm.forward(dec_h);
  Mat<S> dec_masked(n_m, dec_h.cols());
  for (int64_t j = 0; j < n_m; ++j) dec_masked.row(j) = dec_h.row(part.masked[j]);
  const Mat<S> recon = model.dec_out.forward(dec_masked);

  Mat<S> truth(n_m, patches.cols());
  for (int64_t j = 0; j < n_m; ++j) truth.row(j) = patches.row(part.masked[j]);

  LossBreakdown loss;
  loss.lambda = opts.lambda;
  loss.primary = primary_loss(recon, truth, opts.per_sample_mean);

  const int depth = static_cast<int>(model.encoder.blocks.size());
  const bool use_secondary = opts.secondary && depth > 0;
  Mat<S> rec_tokens, rep, sec_recon;
  if (use_secondary) {
    rec_tokens.resize(static_cast<int64_t>(depth) * n_vis, dim);
    for (int l = 0; l < depth; ++l)
      rec_tokens.middleRows(static_cast<int64_t>(l) * n_vis, n_vis) = model.encoder.records[l];
    const Mat<S> pooled = model.pool.forward(rec_tokens);
    rep.resize(n_m, dim);
    for (int64_t j = 0; j < n_m; ++j) rep.row(j) = pooled.row(0) + p_enc.row(part.masked[j]);
    sec_recon = model.secondary.forward(rep);
    loss.secondary = primary_loss(sec_recon, truth, opts.per_sample_mean);
  }
  loss.total = loss.primary + loss.lambda * loss.secondary;

  if (!grad_scale) return loss;
  const double scale = *grad_scale;

  // Primary path back through the decoder.
  const Mat<S> drecon = l1_grad(recon, truth, opts.per_sample_mean, scale);
  const Mat<S> ddec_masked = model.dec_out.backward(drecon);
  Mat<S> ddec_h = Mat<S>::Zero(n_tok, ddec_masked.cols());
  for (int64_t j = 0; j < n_m; ++j) ddec_h.row(part.masked[j]) = ddec_masked.row(j);
  ddec_h = model.dec_norm.backward(ddec_h);
  ddec_h = model.decoder.backward(ddec_h);
  const Mat<S> dslots = project ? model.dec_in.backward(ddec_h) : ddec_h;

  Mat<S> dp = dslots;  // every slot carries its positional encoding
  Mat<S> dmask_tok = Mat<S>::Zero(1, dim);
  for (int64_t j = 0; j < n_m; ++j) dmask_tok.row(0) += dslots.row(part.masked[j]);
  model.mask_token.accumulate(dmask_tok);
  Mat<S> df_vis(n_vis, dim);
  for (int64_t i = 0; i < n_vis; ++i) df_vis.row(i) = dslots.row(part.visible[i]);

  // Secondary path: head, pooled broadcast, pooling attention, per-layer
  // record gradients.
  std::vector<Mat<S>> drecords(depth);
  if (use_secondary) {
    const Mat<S> dsec = l1_grad(sec_recon, truth, opts.per_sample_mean, scale * opts.lambda);
    const Mat<S> drep = model.secondary.backward(dsec);
    for (int64_t j = 0; j < n_m; ++j) dp.row(part.masked[j]) += drep.row(j);
    const Mat<S> dpooled = drep.colwise().sum();
    const Mat<S> drec_tokens = model.pool.backward(dpooled);
    for (int l = 0; l < depth; ++l)
      drecords[l] = drec_tokens.middleRows(static_cast<int64_t>(l) * n_vis, n_vis);
  }

  const Mat<S> dh = model.enc_norm.backward(df_vis);
  const Mat<S> denc_in = model.encoder.backward(dh, &drecords);
  for (int64_t i = 0; i < n_vis; ++i) dp.row(part.visible[i]) += denc_in.row(i);
  model.embed.backward(denc_in);
  model.posenc.backward(dp);
  return loss;
}

// Deterministic inference embeddings: every token visible, no jitter, no
// dropout, and by construction no dependence on the masking module (this
// function takes no random source at all).
template <typename S>
struct EmbeddingResult {
  Mat<S> tokens;  // (channels * n_patches) x dim, flat channel-major order
  Mat<S> pooled;  // 1 x dim, learned-query pool over all layers' records
};

template <typename S>
EmbeddingResult<S> extract_embeddings(MaeModel<S>& model, const Mat<S>& patches, const MatD& ext) {
  TrainCtx ctx;  // eval mode
  const Mat<S> ext_s = ext.cast<S>();
  const Mat<S> f_pe = fourier_encode<S>(ext, model.cfg.fourier);
  const Mat<S> p_enc = model.posenc.forward(ext_s, f_pe);
  Mat<S> enc_in = model.embed.forward(patches);
  enc_in += p_enc;
  const Mat<S> h = model.encoder.forward(enc_in, ctx);
  EmbeddingResult<S> out;
  out.tokens = model.enc_norm.forward(h);
  const int depth = static_cast<int>(model.encoder.blocks.size());
  if (depth > 0) {
    Mat<S> rec_tokens(static_cast<int64_t>(depth) * patches.rows(), model.cfg.dim);
    for (int l = 0; l < depth; ++l)
      rec_tokens.middleRows(static_cast<int64_t>(l) * patches.rows(), patches.rows()) =
          model.encoder.records[l];
    out.pooled = model.pool.forward(rec_tokens);
  } else {
    out.pooled = Mat<S>::Zero(1, model.cfg.dim);
  }
  return out;
}

template <typename S>
EmbeddingResult<S> extract_embeddings(MaeModel<S>& model, const TrainSample<S>& sample) {
  const MatD ext = extend_positions(sample.positions, sample.n_patches, model.cfg.fourier);
  return extract_embeddings(model, sample.patches, ext);
}

struct StepStats {
  int64_t step = 0;  // 1-based update index
  double lr = 0.0;
  double primary = 0.0;
  double secondary = 0.0;
  double total = 0.0;
  double grad_norm = 0.0;
  double wall_ms = 0.0;
};

struct TrainerConfig {
  MaskParams mask;
  LossOpts loss;
  double jitter_sigma_cm = 0.0;
  double dropout = 0.0;
  double stride_seconds = 0.9;  // hop duration of the patch geometry
};

// Single-threaded pretraining driver. All randomness comes from named
// substreams of one seed (mask, jitter, dropout), so a (seed, step) pair
// pins every draw and two runs from the same seed produce bit-identical
// parameters.
template <typename S>
class Trainer {
 public:
  Trainer(MaeModel<S>& model, const OptimConfig& optim_cfg, ScheduleConfig sched,
          TrainerConfig cfg, uint64_t seed)
      : model_(model),
        sched_(sched),
        cfg_(cfg),
        mask_rng_(Rng(seed).stream("mask")),
        jitter_rng_(Rng(seed).stream("jitter")),
        dropout_rng_(Rng(seed).stream("dropout")) {
    sched_.validate();
    cfg_.mask.validate();
    model_.visit_params([&](Param<S>& p) { params_.push_back(&p); });
    opt_ = std::make_unique<StableAdamW<S>>(params_, optim_cfg);
    peak_ = scale_lr(model_.cfg.dim);
  }

  double peak_lr() const { return peak_; }
  void set_peak_lr(double lr) { peak_ = lr; }
  int64_t step_index() const { return step_; }

  StepStats step(const std::vector<TrainSample<S>>& batch) {
    if (batch.empty()) throw std::invalid_argument("Trainer: empty batch");
    const auto t0 = std::chrono::steady_clock::now();
    model_.zero_grad();
    TrainCtx ctx;
    ctx.train = true;
    ctx.dropout = cfg_.dropout;
    ctx.rng = &dropout_rng_;
    const double grad_scale = 1.0 / static_cast<double>(batch.size());
    double primary = 0.0, secondary = 0.0, total = 0.0;
    for (const TrainSample<S>& s : batch) {
      Points3 pos = s.positions;
      if (cfg_.jitter_sigma_cm > 0.0)
        pos = jitter_positions(pos, cfg_.jitter_sigma_cm, jitter_rng_);
      const MatD ext = extend_positions(pos, s.n_patches, model_.cfg.fourier);
      const Mask mask =
          sample_mask(s.positions, s.n_patches, cfg_.mask, cfg_.stride_seconds, mask_rng_);
      const LossBreakdown lb = mae_run(model_, s.patches, ext, mask, cfg_.loss, ctx, &grad_scale);
      primary += lb.primary;
      secondary += lb.secondary;
      total += lb.total;
    }
    StepStats st;
    st.step = step_ + 1;
    st.primary = primary * grad_scale;
    st.secondary = secondary * grad_scale;
    st.total = total * grad_scale;
    if (!std::isfinite(st.total))
      throw std::runtime_error("Trainer: non-finite loss at step " + std::to_string(st.step) +
                               " (primary " + std::to_string(st.primary) + ", secondary " +
                               std::to_string(st.secondary) + ")");
    st.grad_norm = grad_norm(params_);
    st.lr = wsd_lr(std::min(st.step, sched_.horizon()), sched_, peak_);
    opt_->step(st.lr);
    ++step_;
    st.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
                     .count();
    return st;
  }

 private:
  MaeModel<S>& model_;
  ScheduleConfig sched_;
  TrainerConfig cfg_;
  Rng mask_rng_, jitter_rng_, dropout_rng_;
  std::vector<Param<S>*> params_;
  std::unique_ptr<StableAdamW<S>> opt_;
  double peak_ = 2.4e-4;
  int64_t step_ = 0;
};

}  // namespace eegfm
