#include "forge/pfn/net.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace forge::pfn {
namespace {

constexpr double kLnEps = 1e-5;

template <class T>
T gelu(T x) {
  const T phi = T(0.5) * (T(1) + std::erf(x * T(0.7071067811865475)));
  return x * phi;
}

template <class T>
T gelu_grad(T x) {
  const T phi = T(0.5) * (T(1) + std::erf(x * T(0.7071067811865475)));
  const T pdf = T(0.3989422804014327) * std::exp(T(-0.5) * x * x);
  return phi + x * pdf;
}

// C = A (n x k) * W (k x m) + b (1 x m)
template <class T>
void affine(const Matrix<T>& a, const Tensor<T>& w, const Tensor<T>& b,
            Matrix<T>& out) {
  const std::size_t n = a.rows(), k = a.cols(), m = w.c;
  out = Matrix<T>(n, m);
  for (std::size_t i = 0; i < n; ++i) {
    T* orow = out.row(i);
    for (std::size_t j = 0; j < m; ++j) orow[j] = b.v[j];
    const T* arow = a.row(i);
    for (std::size_t kk = 0; kk < k; ++kk) {
      const T av = arow[kk];
      const T* wrow = &w.v[kk * m];
      for (std::size_t j = 0; j < m; ++j) orow[j] += av * wrow[j];
    }
  }
}

// dA += dOut * W^T ; dW += A^T * dOut ; db += colsum(dOut)
template <class T>
void affine_backward(const Matrix<T>& a, const Tensor<T>& w,
                     const Matrix<T>& dout, Matrix<T>& da, Tensor<T>& dw,
                     Tensor<T>& db) {
  const std::size_t n = a.rows(), k = a.cols(), m = w.c;
  for (std::size_t i = 0; i < n; ++i) {
    const T* drow = dout.row(i);
    const T* arow = a.row(i);
    T* darow = da.row(i);
    for (std::size_t j = 0; j < m; ++j) db.v[j] += drow[j];
    for (std::size_t kk = 0; kk < k; ++kk) {
      const T* wrow = &w.v[kk * m];
      T* dwrow = &dw.v[kk * m];
      const T av = arow[kk];
      T acc = T(0);
      for (std::size_t j = 0; j < m; ++j) {
        acc += drow[j] * wrow[j];
        dwrow[j] += av * drow[j];
      }
      darow[kk] += acc;
    }
  }
}

template <class T>
void layer_norm(const Matrix<T>& x, const Tensor<T>& g, const Tensor<T>& b,
                Matrix<T>& xhat, std::vector<T>& inv, Matrix<T>& out) {
  const std::size_t n = x.rows(), d = x.cols();
  xhat = Matrix<T>(n, d);
  out = Matrix<T>(n, d);
  inv.assign(n, T(0));
  for (std::size_t i = 0; i < n; ++i) {
    const T* row = x.row(i);
    T mean = T(0);
    for (std::size_t j = 0; j < d; ++j) mean += row[j];
    mean /= T(d);
    T var = T(0);
    for (std::size_t j = 0; j < d; ++j) {
      const T c = row[j] - mean;
      var += c * c;
    }
    var /= T(d);
    const T iv = T(1) / std::sqrt(var + T(kLnEps));
    inv[i] = iv;
    T* xr = xhat.row(i);
    T* orow = out.row(i);
    for (std::size_t j = 0; j < d; ++j) {
      xr[j] = (row[j] - mean) * iv;
      orow[j] = g.v[j] * xr[j] + b.v[j];
    }
  }
}

template <class T>
void layer_norm_backward(const Matrix<T>& xhat, const std::vector<T>& inv,
                         const Tensor<T>& g, const Matrix<T>& dout,
                         Matrix<T>& dx, Tensor<T>& dg, Tensor<T>& db) {
  const std::size_t n = xhat.rows(), d = xhat.cols();
  std::vector<T> dxh(d);
  for (std::size_t i = 0; i < n; ++i) {
    const T* dr = dout.row(i);
    const T* xr = xhat.row(i);
    T m1 = T(0), m2 = T(0);
    for (std::size_t j = 0; j < d; ++j) {
      dg.v[j] += dr[j] * xr[j];
      db.v[j] += dr[j];
      dxh[j] = dr[j] * g.v[j];
      m1 += dxh[j];
      m2 += dxh[j] * xr[j];
    }
    m1 /= T(d);
    m2 /= T(d);
    T* dxr = dx.row(i);
    for (std::size_t j = 0; j < d; ++j)
      dxr[j] += inv[i] * (dxh[j] - m1 - xr[j] * m2);
  }
}

template <class T>
void check_finite(const Matrix<T>& m, const char* where, int block) {
  for (const T& v : m.storage())
    if (!std::isfinite(v))
      throw NumericError(std::string("non-finite value in ") + where +
                         " of block " + std::to_string(block));
}

}  // namespace

template <class T>
NetParams<T> NetParams<T>::shaped(const ModelConfig& config) {
  const auto d = static_cast<std::size_t>(config.embed_dim);
  const auto ff = static_cast<std::size_t>(config.ff_dim);
  const auto mf = static_cast<std::size_t>(config.max_features);
  NetParams<T> p;
  p.embed_w.reset("embed.w", mf, d);
  p.embed_b.reset("embed.b", 1, d);
  p.prot_w.reset("prot.w", 1, d);
  p.prot_b.reset("prot.b", 1, d);
  p.lbl_ctx0.reset("label.ctx0", 1, d);
  p.lbl_ctx1.reset("label.ctx1", 1, d);
  p.lbl_query.reset("label.query", 1, d);
  p.blocks.resize(static_cast<std::size_t>(config.num_layers));
  for (std::size_t l = 0; l < p.blocks.size(); ++l) {
    auto& blk = p.blocks[l];
    const std::string pre = "block" + std::to_string(l) + ".";
    blk.ln1_g.reset(pre + "ln1.g", 1, d);
    blk.ln1_b.reset(pre + "ln1.b", 1, d);
    blk.wq.reset(pre + "attn.wq", d, d);
    blk.bq.reset(pre + "attn.bq", 1, d);
    blk.wk.reset(pre + "attn.wk", d, d);
    blk.bk.reset(pre + "attn.bk", 1, d);
    blk.wv.reset(pre + "attn.wv", d, d);
    blk.bv.reset(pre + "attn.bv", 1, d);
    blk.wo.reset(pre + "attn.wo", d, d);
    blk.bo.reset(pre + "attn.bo", 1, d);
    blk.ln2_g.reset(pre + "ln2.g", 1, d);
    blk.ln2_b.reset(pre + "ln2.b", 1, d);
    blk.w1.reset(pre + "ff.w1", d, ff);
    blk.b1.reset(pre + "ff.b1", 1, ff);
    blk.w2.reset(pre + "ff.w2", ff, d);
    blk.b2.reset(pre + "ff.b2", 1, d);
  }
  p.lnf_g.reset("final.ln.g", 1, d);
  p.lnf_b.reset("final.ln.b", 1, d);
  p.out_w.reset("out.w", d, 1);
  p.out_b.reset("out.b", 1, 1);
  return p;
}

template <class T>
std::size_t NetParams<T>::tensor_count() const {
  std::size_t n = 0;
  for_each([&](const Tensor<T>&) { ++n; });
  return n;
}

template <class T>
std::size_t NetParams<T>::value_count() const {
  std::size_t n = 0;
  for_each([&](const Tensor<T>& t) { n += t.size(); });
  return n;
}

template <class T>
Net<T>::Net(const ModelConfig& config) : config_(config) {
  config_.validate();
  params_ = NetParams<T>::shaped(config_);
}

template <class T>
void Net<T>::init(std::uint64_t seed) {
  Rng rng(mix_seed(seed, 0x1417));
  const double d = config_.embed_dim;
  const double residual_scale = 1.0 / std::sqrt(2.0 * config_.num_layers);
  params_.for_each([&](Tensor<T>& t) {
    const std::string& n = t.name;
    auto fill_normal = [&](double scale) {
      for (auto& v : t.v) v = static_cast<T>(rng.normal() * scale);
    };
    auto fill_const = [&](double c) {
      for (auto& v : t.v) v = static_cast<T>(c);
    };
    if (n == "embed.w") {
      fill_normal(1.0 / std::sqrt(static_cast<double>(config_.max_features)));
    } else if (n == "prot.w" || n == "prot.b" || n.rfind("label.", 0) == 0) {
      fill_normal(0.5);
    } else if (n.find("ln") != std::string::npos) {
      fill_const(n.back() == 'g' ? 1.0 : 0.0);
    } else if (n.find(".wo") != std::string::npos) {
      fill_normal(residual_scale / std::sqrt(d));
    } else if (n.find("ff.w2") != std::string::npos) {
      fill_normal(residual_scale / std::sqrt(static_cast<double>(config_.ff_dim)));
    } else if (n.find("ff.w1") != std::string::npos ||
               n.find(".wq") != std::string::npos ||
               n.find(".wk") != std::string::npos ||
               n.find(".wv") != std::string::npos || n == "out.w") {
      fill_normal(1.0 / std::sqrt(d));
    } else {
      fill_const(0.0);  // biases
    }
  });
}

template <class T>
void Net<T>::check_batch(const BatchInput<T>& batch) const {
  const std::size_t n = batch.n_rows();
  if (batch.features.cols() > static_cast<std::size_t>(config_.max_features))
    throw DimensionError("batch exceeds max_features");
  if (n > static_cast<std::size_t>(config_.max_rows))
    throw DimensionError("batch exceeds max_rows");
  if (batch.n_context < 1 || batch.n_context >= n)
    throw DimensionError("batch needs at least one context and one query row");
  if (batch.protected_col.size() != n)
    throw DimensionError("protected column is not row-aligned");
  if (batch.context_labels.size() != batch.n_context)
    throw DimensionError("context labels must cover exactly the context rows");
}

template <class T>
Matrix<T> Net<T>::embed(const BatchInput<T>& batch) const {
  check_batch(batch);
  const std::size_t n = batch.n_rows();
  const std::size_t f = batch.features.cols();
  const auto d = static_cast<std::size_t>(config_.embed_dim);
  const NetParams<T>& p = params_;

  Matrix<T> tokens(n, d);
  for (std::size_t i = 0; i < n; ++i) {
    T* tok = tokens.row(i);
    const Tensor<T>& lbl =
        i < batch.n_context
            ? (batch.context_labels[i] == 1 ? p.lbl_ctx1 : p.lbl_ctx0)
            : p.lbl_query;
    const T a = batch.protected_col[i];
    for (std::size_t j = 0; j < d; ++j)
      tok[j] = p.embed_b.v[j] + a * p.prot_w.v[j] + p.prot_b.v[j] + lbl.v[j];
    const T* feat = batch.features.row(i);
    for (std::size_t c = 0; c < f; ++c) {
      const T fv = feat[c];
      if (fv == T(0)) continue;
      const T* wrow = &p.embed_w.v[c * d];
      for (std::size_t j = 0; j < d; ++j) tok[j] += fv * wrow[j];
    }
  }
  return tokens;
}

template <class T>
std::vector<T> Net<T>::forward(const BatchInput<T>& batch,
                               ForwardCache<T>* cache) const {
  check_batch(batch);
  const std::size_t n = batch.n_rows();
  const std::size_t ctx = batch.n_context;
  const auto d = static_cast<std::size_t>(config_.embed_dim);
  const auto heads = static_cast<std::size_t>(config_.num_heads);
  const auto dh = static_cast<std::size_t>(config_.head_dim());
  const T scale = T(1) / std::sqrt(static_cast<T>(dh));
  const NetParams<T>& p = params_;

  ForwardCache<T> local;
  ForwardCache<T>& cc = cache ? *cache : local;
  cc.blocks.assign(p.blocks.size(), BlockCache<T>{});

  cc.tokens = embed(batch);
  Matrix<T> x = cc.tokens;

  for (std::size_t l = 0; l < p.blocks.size(); ++l) {
    const BlockParams<T>& blk = p.blocks[l];
    BlockCache<T>& bc = cc.blocks[l];
    bc.x_in = x;

    layer_norm(bc.x_in, blk.ln1_g, blk.ln1_b, bc.xhat1, bc.inv1, bc.normed1);
    affine(bc.normed1, blk.wq, blk.bq, bc.q);
    affine(bc.normed1, blk.wk, blk.bk, bc.k);
    affine(bc.normed1, blk.wv, blk.bv, bc.vv);

    bc.probs.assign(heads, Matrix<T>(n, ctx + 1));
    bc.att_concat = Matrix<T>(n, d);
    for (std::size_t h = 0; h < heads; ++h) {
      const std::size_t off = h * dh;
      Matrix<T>& probs = bc.probs[h];
      std::vector<T> scores(ctx + 1);
      for (std::size_t i = 0; i < n; ++i) {
        const bool query = i >= ctx;
        const std::size_t cols = query ? ctx + 1 : ctx;
        const T* qi = bc.q.row(i) + off;
        for (std::size_t j = 0; j < ctx; ++j) {
          const T* kj = bc.k.row(j) + off;
          T dot = T(0);
          for (std::size_t e = 0; e < dh; ++e) dot += qi[e] * kj[e];
          scores[j] = dot * scale;
        }
        if (query) {
          const T* ki = bc.k.row(i) + off;
          T dot = T(0);
          for (std::size_t e = 0; e < dh; ++e) dot += qi[e] * ki[e];
          scores[ctx] = dot * scale;
        }
        T mx = scores[0];
        for (std::size_t j = 1; j < cols; ++j) mx = std::max(mx, scores[j]);
        T denom = T(0);
        for (std::size_t j = 0; j < cols; ++j) {
          scores[j] = std::exp(scores[j] - mx);
          denom += scores[j];
        }
        T* prow = probs.row(i);
        for (std::size_t j = 0; j < cols; ++j) prow[j] = scores[j] / denom;
        if (!query) prow[ctx] = T(0);

        T* orow = bc.att_concat.row(i) + off;
        for (std::size_t e = 0; e < dh; ++e) orow[e] = T(0);
        for (std::size_t j = 0; j < ctx; ++j) {
          const T pj = prow[j];
          if (pj == T(0)) continue;
          const T* vj = bc.vv.row(j) + off;
          for (std::size_t e = 0; e < dh; ++e) orow[e] += pj * vj[e];
        }
        if (query) {
          const T pj = prow[ctx];
          const T* vi = bc.vv.row(i) + off;
          for (std::size_t e = 0; e < dh; ++e) orow[e] += pj * vi[e];
        }
      }
    }

    Matrix<T> proj;
    affine(bc.att_concat, blk.wo, blk.bo, proj);
    bc.after_attn = Matrix<T>(n, d);
    for (std::size_t i = 0; i < n * d; ++i)
      bc.after_attn.storage()[i] = bc.x_in.storage()[i] + proj.storage()[i];

    layer_norm(bc.after_attn, blk.ln2_g, blk.ln2_b, bc.xhat2, bc.inv2,
               bc.normed2);
    affine(bc.normed2, blk.w1, blk.b1, bc.h1);
    bc.g1 = Matrix<T>(n, bc.h1.cols());
    for (std::size_t i = 0; i < bc.h1.size(); ++i)
      bc.g1.storage()[i] = gelu(bc.h1.storage()[i]);
    Matrix<T> ff_out;
    affine(bc.g1, blk.w2, blk.b2, ff_out);

    x = Matrix<T>(n, d);
    for (std::size_t i = 0; i < n * d; ++i)
      x.storage()[i] = bc.after_attn.storage()[i] + ff_out.storage()[i];
    check_finite(x, "output", static_cast<int>(l));
  }

  layer_norm(x, p.lnf_g, p.lnf_b, cc.xhatf, cc.invf, cc.normedf);

  const std::size_t nq = n - ctx;
  cc.logits.assign(nq, T(0));
  cc.probs.assign(nq, T(0));
  for (std::size_t qi = 0; qi < nq; ++qi) {
    const T* row = cc.normedf.row(ctx + qi);
    T z = p.out_b.v[0];
    for (std::size_t j = 0; j < d; ++j) z += row[j] * p.out_w.v[j];
    if (!std::isfinite(z)) throw NumericError("non-finite logit at output head");
    cc.logits[qi] = z;
    cc.probs[qi] = T(1) / (T(1) + std::exp(-z));
  }
  return cc.probs;
}

template <class T>
double Net<T>::bce(const std::vector<T>& probs,
                   const std::vector<std::int8_t>& targets) {
  if (probs.size() != targets.size())
    throw DimensionError("bce: predictions and targets misaligned");
  if (probs.empty()) throw DimensionError("bce on empty predictions");
  double loss = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    double pc = static_cast<double>(probs[i]);
    pc = std::min(std::max(pc, kProbClamp), 1.0 - kProbClamp);
    loss += targets[i] == 1 ? -std::log(pc) : -std::log(1.0 - pc);
  }
  return loss / static_cast<double>(probs.size());
}

template <class T>
double Net<T>::loss_and_grad(const BatchInput<T>& batch,
                             const std::vector<std::int8_t>& query_targets,
                             NetParams<T>* grads) const {
  ForwardCache<T> cc;
  forward(batch, &cc);
  const std::size_t n = batch.n_rows();
  const std::size_t ctx = batch.n_context;
  const std::size_t nq = n - ctx;
  if (query_targets.size() != nq)
    throw DimensionError("query targets misaligned with batch");
  const double loss = bce(cc.probs, query_targets);
  if (!grads) return loss;

  const auto d = static_cast<std::size_t>(config_.embed_dim);
  const auto heads = static_cast<std::size_t>(config_.num_heads);
  const auto dh = static_cast<std::size_t>(config_.head_dim());
  const T scale = T(1) / std::sqrt(static_cast<T>(dh));
  const NetParams<T>& p = params_;
  NetParams<T>& g = *grads;

  // Output head.
  Matrix<T> dnormf(n, d);
  for (std::size_t qi = 0; qi < nq; ++qi) {
    const double prob = static_cast<double>(cc.probs[qi]);
    double dz = 0.0;
    if (prob > kProbClamp && prob < 1.0 - kProbClamp)
      dz = (prob - static_cast<double>(query_targets[qi])) /
           static_cast<double>(nq);
    const T dzt = static_cast<T>(dz);
    g.out_b.v[0] += dzt;
    const T* row = cc.normedf.row(ctx + qi);
    T* drow = dnormf.row(ctx + qi);
    for (std::size_t j = 0; j < d; ++j) {
      g.out_w.v[j] += dzt * row[j];
      drow[j] = dzt * p.out_w.v[j];
    }
  }

  Matrix<T> dx(n, d);
  layer_norm_backward(cc.xhatf, cc.invf, p.lnf_g, dnormf, dx, g.lnf_g,
                      g.lnf_b);

  for (std::size_t l = p.blocks.size(); l-- > 0;) {
    const BlockParams<T>& blk = p.blocks[l];
    const BlockCache<T>& bc = cc.blocks[l];
    BlockParams<T>& gb = g.blocks[l];

    // Feed-forward branch; dx currently holds d(block output).
    Matrix<T> dg1(n, bc.g1.cols());
    affine_backward(bc.g1, blk.w2, dx, dg1, gb.w2, gb.b2);
    Matrix<T> dh1(n, bc.h1.cols());
    for (std::size_t i = 0; i < bc.h1.size(); ++i)
      dh1.storage()[i] = dg1.storage()[i] * gelu_grad(bc.h1.storage()[i]);
    Matrix<T> dnormed2(n, d);
    affine_backward(bc.normed2, blk.w1, dh1, dnormed2, gb.w1, gb.b1);

    Matrix<T> dafter(n, d);
    dafter = dx;  // residual path
    layer_norm_backward(bc.xhat2, bc.inv2, blk.ln2_g, dnormed2, dafter,
                        gb.ln2_g, gb.ln2_b);

    // Attention branch.
    Matrix<T> datt(n, d);
    affine_backward(bc.att_concat, blk.wo, dafter, datt, gb.wo, gb.bo);

    Matrix<T> dq(n, d), dk(n, d), dv(n, d);
    std::vector<T> dprow(ctx + 1), dsrow(ctx + 1);
    for (std::size_t h = 0; h < heads; ++h) {
      const std::size_t off = h * dh;
      const Matrix<T>& probs = bc.probs[h];
      for (std::size_t i = 0; i < n; ++i) {
        const bool query = i >= ctx;
        const std::size_t cols = query ? ctx + 1 : ctx;
        const T* doi = datt.row(i) + off;
        const T* prow = probs.row(i);

        for (std::size_t j = 0; j < ctx; ++j) {
          const T* vj = bc.vv.row(j) + off;
          T dot = T(0);
          for (std::size_t e = 0; e < dh; ++e) dot += doi[e] * vj[e];
          dprow[j] = dot;
        }
        if (query) {
          const T* vi = bc.vv.row(i) + off;
          T dot = T(0);
          for (std::size_t e = 0; e < dh; ++e) dot += doi[e] * vi[e];
          dprow[ctx] = dot;
        }

        T inner = T(0);
        for (std::size_t j = 0; j < cols; ++j) inner += prow[j] * dprow[j];
        for (std::size_t j = 0; j < cols; ++j)
          dsrow[j] = prow[j] * (dprow[j] - inner) * scale;

        // dV accumulation.
        for (std::size_t j = 0; j < ctx; ++j) {
          const T pj = prow[j];
          if (pj == T(0)) continue;
          T* dvj = dv.row(j) + off;
          for (std::size_t e = 0; e < dh; ++e) dvj[e] += pj * doi[e];
        }
        if (query) {
          T* dvi = dv.row(i) + off;
          const T pj = prow[ctx];
          for (std::size_t e = 0; e < dh; ++e) dvi[e] += pj * doi[e];
        }

        // dQ and dK.
        const T* qi = bc.q.row(i) + off;
        T* dqi = dq.row(i) + off;
        for (std::size_t j = 0; j < ctx; ++j) {
          const T ds = dsrow[j];
          if (ds == T(0)) continue;
          const T* kj = bc.k.row(j) + off;
          T* dkj = dk.row(j) + off;
          for (std::size_t e = 0; e < dh; ++e) {
            dqi[e] += ds * kj[e];
            dkj[e] += ds * qi[e];
          }
        }
        if (query) {
          const T ds = dsrow[ctx];
          const T* ki = bc.k.row(i) + off;
          T* dki = dk.row(i) + off;
          for (std::size_t e = 0; e < dh; ++e) {
            dqi[e] += ds * ki[e];
            dki[e] += ds * qi[e];
          }
        }
      }
    }

    Matrix<T> dnormed1(n, d);
    affine_backward(bc.normed1, blk.wq, dq, dnormed1, gb.wq, gb.bq);
    affine_backward(bc.normed1, blk.wk, dk, dnormed1, gb.wk, gb.bk);
    affine_backward(bc.normed1, blk.wv, dv, dnormed1, gb.wv, gb.bv);

    Matrix<T> dx_in(n, d);
    dx_in = dafter;  // residual path
    layer_norm_backward(bc.xhat1, bc.inv1, blk.ln1_g, dnormed1, dx_in,
                        gb.ln1_g, gb.ln1_b);
    dx = std::move(dx_in);
  }

  // Embedding backward.
  const std::size_t f = batch.features.cols();
  for (std::size_t i = 0; i < n; ++i) {
    const T* dtok = dx.row(i);
    Tensor<T>& dlbl = i < ctx ? (batch.context_labels[i] == 1 ? g.lbl_ctx1
                                                              : g.lbl_ctx0)
                              : g.lbl_query;
    const T a = batch.protected_col[i];
    for (std::size_t j = 0; j < d; ++j) {
      g.embed_b.v[j] += dtok[j];
      g.prot_w.v[j] += a * dtok[j];
      g.prot_b.v[j] += dtok[j];
      dlbl.v[j] += dtok[j];
    }
    const T* feat = batch.features.row(i);
    for (std::size_t c = 0; c < f; ++c) {
      const T fv = feat[c];
      if (fv == T(0)) continue;
      T* dwrow = &g.embed_w.v[c * d];
      for (std::size_t j = 0; j < d; ++j) dwrow[j] += fv * dtok[j];
    }
  }
  return loss;
}

template struct NetParams<float>;
template struct NetParams<double>;
template class Net<float>;
template class Net<double>;

}  // namespace forge::pfn
