#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "eegfm/rng.hpp"
#include "eegfm/types.hpp"

namespace eegfm {

enum class ParamKind { weight, gain, offset, bias, token };

template <typename S>
struct Param {
  std::string name;
  Mat<S> w;
  Mat<S> g;
  ParamKind kind = ParamKind::weight;
  bool frozen = false;

  void setup(std::string n, int rows, int cols, ParamKind k) {
    name = std::move(n);
    w = Mat<S>::Zero(rows, cols);
    g = Mat<S>::Zero(rows, cols);
    kind = k;
  }
  int64_t size() const { return w.size(); }
  bool empty() const { return w.size() == 0; }
  void zero_grad() { g.setZero(); }
  void accumulate(const Mat<S>& delta) {
    if (!frozen) g += delta;
  }
};

// Sum that is a function of the multiset of addends only: values are sorted
// before accumulation, so reordering the inputs (e.g. permuting tokens)
// cannot change the rounded result. Used for the two token-indexed
// reductions in attention; feature-axis reductions keep their natural order.
template <typename S>
S multiset_sum(std::vector<S>& buf) {
  std::sort(buf.begin(), buf.end());
  S acc = S(0);
  for (const S v : buf) acc += v;
  return acc;
}

// x * w with a fixed per-element accumulation order (k ascending, scalar
// axpy rows). Out-of-the-box GEMM kernels may round a row differently
// depending on which panel it lands in, which would break the bitwise
// row-permutation equivariance the forward pass guarantees; this form makes
// every output row a pure function of its own input row.
template <typename S>
Mat<S> row_stable_matmul(const Mat<S>& x, const Mat<S>& w) {
  Mat<S> out = Mat<S>::Zero(x.rows(), w.cols());
  for (int64_t i = 0; i < x.rows(); ++i)
    for (int64_t k = 0; k < x.cols(); ++k) out.row(i) += x(i, k) * w.row(k);
  return out;
}

// Dot product accumulated strictly left to right, independent of operand
// placement (same rationale as row_stable_matmul).
template <typename S, typename A, typename B>
S stable_dot(const A& a, const B& b) {
  S acc = S(0);
  for (int64_t k = 0; k < a.size(); ++k) acc += a(k) * b(k);
  return acc;
}

template <typename S>
S gelu(S x) {
  return S(0.5) * x * (S(1) + std::erf(x * S(M_SQRT1_2)));
}

template <typename S>
S gelu_grad(S x) {
  const S phi_cdf = S(0.5) * (S(1) + std::erf(x * S(M_SQRT1_2)));
  const S phi_pdf = std::exp(S(-0.5) * x * x) * S(0.3989422804014326779);
  return phi_cdf + x * phi_pdf;
}

struct TrainCtx {
  bool train = false;
  double dropout = 0.0;
  Rng* rng = nullptr;
};

template <typename S>
struct LoraState {
  Param<S> a;  // in x rank, Gaussian init
  Param<S> b;  // rank x out, zero init
  S scale = S(0);
};

template <typename S>
struct Linear {
  Param<S> w;                    // in x out
  Param<S> b;                    // 1 x out; empty when bias-free
  LoraState<S>* lora = nullptr;  // optional adapter, owned elsewhere

  Mat<S> x_cache;
  Mat<S> w_eff_cache;

  void setup(const std::string& name, int in, int out, bool with_bias) {
    w.setup(name + ".w", in, out, ParamKind::weight);
    if (with_bias) b.setup(name + ".b", 1, out, ParamKind::bias);
  }

  Mat<S> effective_weight() const {
    if (!lora) return w.w;
    return w.w + lora->scale * (lora->a.w * lora->b.w);
  }

  Mat<S> forward(const Mat<S>& x) {
    x_cache = x;
    Mat<S> y;
    if (lora) {
      w_eff_cache = effective_weight();
      y = row_stable_matmul(x, w_eff_cache);
    } else {
      y = row_stable_matmul(x, w.w);
    }
    if (!b.empty()) y.rowwise() += b.w.row(0);
    return y;
  }

  Mat<S> backward(const Mat<S>& dy) {
    const Mat<S> dweff = x_cache.transpose() * dy;
    if (lora) {
      lora->a.accumulate(lora->scale * (dweff * lora->b.w.transpose()));
      lora->b.accumulate(lora->scale * (lora->a.w.transpose() * dweff));
      w.accumulate(dweff);
      if (!b.empty()) b.accumulate(dy.colwise().sum());
      return dy * w_eff_cache.transpose();
    }
    w.accumulate(dweff);
    if (!b.empty()) b.accumulate(dy.colwise().sum());
    return dy * w.w.transpose();
  }
};

enum class NormKind { rmsnorm, layernorm };

template <typename S>
struct NormLayer {
  NormKind kind = NormKind::rmsnorm;
  double eps = 1e-6;
  Param<S> gain;    // 1 x d
  Param<S> offset;  // 1 x d; layernorm only

  Mat<S> x_cache;
  Vec<S> scale_cache;  // rms or sigma per row
  Vec<S> mean_cache;   // layernorm only

  void setup(const std::string& name, int d, NormKind k, double e) {
    kind = k;
    eps = e;
    gain.setup(name + ".g", 1, d, ParamKind::gain);
    if (kind == NormKind::layernorm) offset.setup(name + ".b", 1, d, ParamKind::offset);
  }

  // Per-row statistics use fixed-order scalar loops (not Eigen reductions)
  // so a row normalizes identically wherever it sits in the matrix; see
  // row_stable_matmul.
  Mat<S> forward(const Mat<S>& x) {
    x_cache = x;
    const int64_t n = x.rows();
    const int d = static_cast<int>(x.cols());
    Mat<S> y(n, d);
    scale_cache.resize(n);
    if (kind == NormKind::rmsnorm) {
      for (int64_t i = 0; i < n; ++i) {
        S sq = S(0);
        for (int j = 0; j < d; ++j) sq += x(i, j) * x(i, j);
        const S r = std::sqrt(sq / S(d) + S(eps));
        scale_cache[i] = r;
        y.row(i) = x.row(i).cwiseProduct(gain.w.row(0)) / r;
      }
    } else {
      mean_cache.resize(n);
      for (int64_t i = 0; i < n; ++i) {
        S sum = S(0);
        for (int j = 0; j < d; ++j) sum += x(i, j);
        const S mu = sum / S(d);
        S var_sum = S(0);
        for (int j = 0; j < d; ++j) var_sum += (x(i, j) - mu) * (x(i, j) - mu);
        const S sd = std::sqrt(var_sum / S(d) + S(eps));
        mean_cache[i] = mu;
        scale_cache[i] = sd;
        y.row(i) = (((x.row(i).array() - mu) / sd) * gain.w.row(0).array()).matrix() +
                   offset.w.row(0);
      }
    }
    return y;
  }

  Mat<S> backward(const Mat<S>& dy) {
    const int64_t n = dy.rows();
    const int d = static_cast<int>(dy.cols());
    Mat<S> dx(n, d);
    Mat<S> dg = Mat<S>::Zero(1, d);
    if (kind == NormKind::rmsnorm) {
      for (int64_t i = 0; i < n; ++i) {
        const S r = scale_cache[i];
        dg.row(0) += dy.row(i).cwiseProduct(x_cache.row(i)) / r;
        const auto dyg = dy.row(i).cwiseProduct(gain.w.row(0));
        const S inner = dyg.cwiseProduct(x_cache.row(i)).sum();
        dx.row(i) = dyg / r - x_cache.row(i) * (inner / (S(d) * r * r * r));
      }
      gain.accumulate(dg);
    } else {
      Mat<S> db = Mat<S>::Zero(1, d);
      for (int64_t i = 0; i < n; ++i) {
        const S sd = scale_cache[i];
        const auto xhat = ((x_cache.row(i).array() - mean_cache[i]) / sd).matrix();
        dg.row(0) += dy.row(i).cwiseProduct(xhat);
        db.row(0) += dy.row(i);
        const auto dxhat = dy.row(i).cwiseProduct(gain.w.row(0));
        const S m1 = dxhat.mean();
        const S m2 = dxhat.cwiseProduct(xhat).mean();
        dx.row(i) = (dxhat.array() - m1 - xhat.array() * m2).matrix() / sd;
      }
      gain.accumulate(dg);
      offset.accumulate(db);
    }
    return dx;
  }

  // Normalized rows before the affine transform (diagnostics/tests).
  Mat<S> normalized(const Mat<S>& x) const {
    const int64_t n = x.rows();
    const int d = static_cast<int>(x.cols());
    Mat<S> y(n, d);
    for (int64_t i = 0; i < n; ++i) {
      if (kind == NormKind::rmsnorm) {
        S sq = S(0);
        for (int j = 0; j < d; ++j) sq += x(i, j) * x(i, j);
        const S r = std::sqrt(sq / S(d) + S(eps));
        y.row(i) = x.row(i) / r;
      } else {
        S sum = S(0);
        for (int j = 0; j < d; ++j) sum += x(i, j);
        const S mu = sum / S(d);
        S var_sum = S(0);
        for (int j = 0; j < d; ++j) var_sum += (x(i, j) - mu) * (x(i, j) - mu);
        const S sd = std::sqrt(var_sum / S(d) + S(eps));
        y.row(i) = ((x.row(i).array() - mu) / sd).matrix();
      }
    }
    return y;
  }
};

// Multi-head softmax attention, non-causal, bias-free projections. The
// softmax denominator and the attention-weighted value sum are the only
// reductions over the token axis; both use multiset_sum so the layer is
// exactly permutation-equivariant (see that function's comment).
template <typename S>
struct Attention {
  int heads = 0;
  int head_dim = 0;
  Linear<S> wq, wk, wv, wo;

  Mat<S> q_cache, k_cache, v_cache, concat_cache;
  std::vector<Mat<S>> attn_cache;  // per head, N x N

  void setup(const std::string& name, int dim, int n_heads) {
    if (dim % n_heads != 0)
      throw std::invalid_argument("Attention: dim must be divisible by heads");
    heads = n_heads;
    head_dim = dim / n_heads;
    wq.setup(name + ".wq", dim, dim, false);
    wk.setup(name + ".wk", dim, dim, false);
    wv.setup(name + ".wv", dim, dim, false);
    wo.setup(name + ".wo", dim, dim, false);
  }

  Mat<S> forward(const Mat<S>& x) {
    const int64_t n = x.rows();
    const int dim = heads * head_dim;
    q_cache = wq.forward(x);
    k_cache = wk.forward(x);
    v_cache = wv.forward(x);
    concat_cache.resize(n, dim);
    attn_cache.assign(heads, Mat<S>());
    const S inv_sqrt = S(1) / std::sqrt(S(head_dim));
    std::vector<S> buf;
    for (int h = 0; h < heads; ++h) {
      const auto qh = q_cache.middleCols(h * head_dim, head_dim);
      const auto kh = k_cache.middleCols(h * head_dim, head_dim);
      const auto vh = v_cache.middleCols(h * head_dim, head_dim);
      Mat<S> scores(n, n);
      for (int64_t i = 0; i < n; ++i)
        for (int64_t j = 0; j < n; ++j)
          scores(i, j) = stable_dot<S>(qh.row(i), kh.row(j)) * inv_sqrt;
      Mat<S>& a = attn_cache[h];
      a.resize(n, n);
      for (int64_t i = 0; i < n; ++i) {
        const S m = scores.row(i).maxCoeff();
        buf.resize(n);
        for (int64_t j = 0; j < n; ++j) {
          const S e = std::exp(scores(i, j) - m);
          a(i, j) = e;
          buf[j] = e;
        }
        const S denom = multiset_sum(buf);
        a.row(i) /= denom;
      }
      for (int64_t i = 0; i < n; ++i)
        for (int d = 0; d < head_dim; ++d) {
          buf.resize(n);
          for (int64_t j = 0; j < n; ++j) buf[j] = a(i, j) * vh(j, d);
          concat_cache(i, h * head_dim + d) = multiset_sum(buf);
        }
    }
    return wo.forward(concat_cache);
  }

  Mat<S> backward(const Mat<S>& dy) {
    const Mat<S> dconcat = wo.backward(dy);
    const int64_t n = dconcat.rows();
    const S inv_sqrt = S(1) / std::sqrt(S(head_dim));
    Mat<S> dq(n, heads * head_dim), dk(n, heads * head_dim), dv(n, heads * head_dim);
    for (int h = 0; h < heads; ++h) {
      const auto dout = dconcat.middleCols(h * head_dim, head_dim);
      const auto vh = v_cache.middleCols(h * head_dim, head_dim);
      const auto qh = q_cache.middleCols(h * head_dim, head_dim);
      const auto kh = k_cache.middleCols(h * head_dim, head_dim);
      const Mat<S>& a = attn_cache[h];
      Mat<S> da = dout * vh.transpose();          // N x N
      dv.middleCols(h * head_dim, head_dim) = a.transpose() * dout;
      Mat<S> ds(n, n);
      for (int64_t i = 0; i < n; ++i) {
        const S inner = da.row(i).cwiseProduct(a.row(i)).sum();
        ds.row(i) = a.row(i).cwiseProduct((da.row(i).array() - inner).matrix());
      }
      ds *= inv_sqrt;
      dq.middleCols(h * head_dim, head_dim) = ds * kh;
      dk.middleCols(h * head_dim, head_dim) = ds.transpose() * qh;
    }
    Mat<S> dx = wq.backward(dq);
    dx += wk.backward(dk);
    dx += wv.backward(dv);
    return dx;
  }
};

enum class Activation { geglu, gelu };

// Position-wise feed-forward. geglu: W_out(GELU(W_gate x) .* (W_val x));
// gelu: W_out(GELU(W_gate x)).
template <typename S>
struct Ffn {
  Activation kind = Activation::geglu;
  Linear<S> w_gate, w_val, w_out;

  Mat<S> a_cache, b_cache, h_cache;

  void setup(const std::string& name, int dim, int hidden, Activation act) {
    kind = act;
    w_gate.setup(name + ".wg", dim, hidden, false);
    if (kind == Activation::geglu) w_val.setup(name + ".wv", dim, hidden, false);
    w_out.setup(name + ".wo", hidden, dim, false);
  }

  Mat<S> forward(const Mat<S>& x) {
    a_cache = w_gate.forward(x);
    if (kind == Activation::geglu) {
      b_cache = w_val.forward(x);
      h_cache = a_cache.unaryExpr([](S v) { return gelu(v); }).cwiseProduct(b_cache);
    } else {
      h_cache = a_cache.unaryExpr([](S v) { return gelu(v); });
    }
    return w_out.forward(h_cache);
  }

  Mat<S> backward(const Mat<S>& dy) {
    const Mat<S> dh = w_out.backward(dy);
    if (kind == Activation::geglu) {
      const Mat<S> ga = a_cache.unaryExpr([](S v) { return gelu(v); });
      const Mat<S> da =
          dh.cwiseProduct(b_cache).cwiseProduct(a_cache.unaryExpr([](S v) { return gelu_grad(v); }));
      const Mat<S> db = dh.cwiseProduct(ga);
      Mat<S> dx = w_gate.backward(da);
      dx += w_val.backward(db);
      return dx;
    }
    const Mat<S> da = dh.cwiseProduct(a_cache.unaryExpr([](S v) { return gelu_grad(v); }));
    return w_gate.backward(da);
  }
};

// Pre-norm residual block: x + Attn(norm1(x)), then x + Ffn(norm2(x)).
template <typename S>
struct Block {
  NormLayer<S> norm1, norm2;
  Attention<S> attn;
  Ffn<S> ffn;

  Mat<S> drop1_mask, drop2_mask;  // inverted dropout; empty when inactive

  void setup(const std::string& name, int dim, int heads, int hidden, Activation act,
             NormKind norm, double eps) {
    norm1.setup(name + ".norm1", dim, norm, eps);
    norm2.setup(name + ".norm2", dim, norm, eps);
    attn.setup(name + ".attn", dim, heads);
    ffn.setup(name + ".ffn", dim, hidden, act);
  }

  static Mat<S> make_dropout_mask(int64_t rows, int64_t cols, double p, Rng& rng) {
    Mat<S> m(rows, cols);
    const S keep_scale = S(1.0 / (1.0 - p));
    for (int64_t i = 0; i < rows; ++i)
      for (int64_t j = 0; j < cols; ++j) m(i, j) = rng.uniform() < p ? S(0) : keep_scale;
    return m;
  }

  Mat<S> forward(const Mat<S>& x, const TrainCtx& ctx) {
    const bool drop = ctx.train && ctx.dropout > 0.0 && ctx.rng != nullptr;
    Mat<S> attn_out = attn.forward(norm1.forward(x));
    if (drop) {
      drop1_mask = make_dropout_mask(attn_out.rows(), attn_out.cols(), ctx.dropout, *ctx.rng);
      attn_out = attn_out.cwiseProduct(drop1_mask);
    } else {
      drop1_mask.resize(0, 0);
    }
    const Mat<S> x1 = x + attn_out;
    Mat<S> ffn_out = ffn.forward(norm2.forward(x1));
    if (drop) {
      drop2_mask = make_dropout_mask(ffn_out.rows(), ffn_out.cols(), ctx.dropout, *ctx.rng);
      ffn_out = ffn_out.cwiseProduct(drop2_mask);
    } else {
      drop2_mask.resize(0, 0);
    }
    return x1 + ffn_out;
  }

  Mat<S> backward(const Mat<S>& dy) {
    Mat<S> dffn = dy;
    if (drop2_mask.size()) dffn = dffn.cwiseProduct(drop2_mask);
    Mat<S> dx1 = dy + norm2.backward(ffn.backward(dffn));
    Mat<S> dattn = dx1;
    if (drop1_mask.size()) dattn = dattn.cwiseProduct(drop1_mask);
    return dx1 + norm1.backward(attn.backward(dattn));
  }
};

template <typename S>
struct TransformerStack {
  std::vector<Block<S>> blocks;
  std::vector<Mat<S>> records;  // post-FFN output of each block

  void setup(const std::string& name, int depth, int dim, int heads, int hidden, Activation act,
             NormKind norm, double eps) {
    blocks.resize(depth);
    for (int l = 0; l < depth; ++l)
      blocks[l].setup(name + ".block" + std::to_string(l), dim, heads, hidden, act, norm, eps);
  }

  // depth == 0 is the identity (and leaves no records).
  Mat<S> forward(const Mat<S>& x, const TrainCtx& ctx) {
    records.assign(blocks.size(), Mat<S>());
    Mat<S> h = x;
    for (size_t l = 0; l < blocks.size(); ++l) {
      h = blocks[l].forward(h, ctx);
      records[l] = h;
    }
    return h;
  }

  // drecords, when given, adds an external gradient to each block's output.
  Mat<S> backward(const Mat<S>& dfinal, const std::vector<Mat<S>>* drecords = nullptr) {
    Mat<S> dx = dfinal;
    for (int64_t l = static_cast<int64_t>(blocks.size()) - 1; l >= 0; --l) {
      if (drecords && (*drecords)[l].size()) dx += (*drecords)[l];
      dx = blocks[l].backward(dx);
    }
    return dx;
  }
};

// Single learned-query attention pooling with its own projection set.
// With one input token the output is that token's value projection passed
// through the output projection (softmax over a singleton is 1).
template <typename S>
struct AttnPool {
  int heads = 0;
  int head_dim = 0;
  Param<S> query;  // 1 x dim
  Linear<S> wq, wk, wv, wo;

  Mat<S> q_cache, k_cache, v_cache, concat_cache;
  std::vector<Vec<S>> attn_cache;  // per head, M

  void setup(const std::string& name, int dim, int n_heads) {
    if (dim % n_heads != 0) throw std::invalid_argument("AttnPool: dim must be divisible by heads");
    heads = n_heads;
    head_dim = dim / n_heads;
    query.setup(name + ".query", 1, dim, ParamKind::token);
    wq.setup(name + ".wq", dim, dim, false);
    wk.setup(name + ".wk", dim, dim, false);
    wv.setup(name + ".wv", dim, dim, false);
    wo.setup(name + ".wo", dim, dim, false);
  }

  Mat<S> forward(const Mat<S>& tokens) {
    const int64_t m = tokens.rows();
    if (m == 0) throw std::invalid_argument("AttnPool: empty token set");
    q_cache = wq.forward(query.w);
    k_cache = wk.forward(tokens);
    v_cache = wv.forward(tokens);
    concat_cache.resize(1, heads * head_dim);
    attn_cache.assign(heads, Vec<S>());
    const S inv_sqrt = S(1) / std::sqrt(S(head_dim));
    std::vector<S> buf;
    for (int h = 0; h < heads; ++h) {
      const auto qh = q_cache.middleCols(h * head_dim, head_dim);
      const auto kh = k_cache.middleCols(h * head_dim, head_dim);
      const auto vh = v_cache.middleCols(h * head_dim, head_dim);
      Vec<S> scores(m);
      for (int64_t j = 0; j < m; ++j)
        scores[j] = stable_dot<S>(kh.row(j), qh.row(0)) * inv_sqrt;
      const S mx = scores.maxCoeff();
      Vec<S>& a = attn_cache[h];
      a.resize(m);
      buf.resize(m);
      for (int64_t j = 0; j < m; ++j) {
        a[j] = std::exp(scores[j] - mx);
        buf[j] = a[j];
      }
      const S denom = multiset_sum(buf);
      a /= denom;
      for (int d = 0; d < head_dim; ++d) {
        buf.resize(m);
        for (int64_t j = 0; j < m; ++j) buf[j] = a[j] * vh(j, d);
        concat_cache(0, h * head_dim + d) = multiset_sum(buf);
      }
    }
    return wo.forward(concat_cache);
  }

  Mat<S> backward(const Mat<S>& dpooled) {
    const Mat<S> dconcat = wo.backward(dpooled);
    const int64_t m = k_cache.rows();
    const S inv_sqrt = S(1) / std::sqrt(S(head_dim));
    Mat<S> dq(1, heads * head_dim);
    Mat<S> dk(m, heads * head_dim), dv(m, heads * head_dim);
    for (int h = 0; h < heads; ++h) {
      const auto dout = dconcat.middleCols(h * head_dim, head_dim);  // 1 x dh
      const auto vh = v_cache.middleCols(h * head_dim, head_dim);
      const auto kh = k_cache.middleCols(h * head_dim, head_dim);
      const auto qh = q_cache.middleCols(h * head_dim, head_dim);
      const Vec<S>& a = attn_cache[h];
      Vec<S> da = vh * dout.transpose();  // M
      dv.middleCols(h * head_dim, head_dim) = a * dout;
      const S inner = da.dot(a);
      Vec<S> ds = a.cwiseProduct(da - Vec<S>::Constant(m, inner)) * inv_sqrt;
      dq.middleCols(h * head_dim, head_dim) = ds.transpose() * kh;
      dk.middleCols(h * head_dim, head_dim) = ds * qh;
    }
    query.accumulate(wq.backward(dq));
    Mat<S> dtokens = wk.backward(dk);
    dtokens += wv.backward(dv);
    return dtokens;
  }
};

}  // namespace eegfm
