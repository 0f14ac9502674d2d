#ifndef FORGE_PFN_NET_HPP
#define FORGE_PFN_NET_HPP

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "forge/errors.hpp"
#include "forge/matrix.hpp"
#include "forge/pfn/config.hpp"
#include "forge/rng.hpp"

namespace forge::pfn {

inline constexpr double kProbClamp = 1e-7;

// One standardized in-context batch: context rows followed by query rows.
// Every row is a token; context rows carry revealed labels.
template <class T>
struct BatchInput {
  Matrix<T> features;        // n x f, already standardized
  std::vector<T> protected_col;  // n, standardized protected values
  std::vector<std::int8_t> context_labels;  // first n_context rows
  std::size_t n_context = 0;

  std::size_t n_rows() const { return features.rows(); }
  std::size_t n_query() const { return features.rows() - n_context; }
};

template <class T>
struct Tensor {
  std::string name;
  std::size_t r = 0, c = 0;
  std::vector<T> v;

  void reset(std::string n, std::size_t rows, std::size_t cols) {
    name = std::move(n);
    r = rows;
    c = cols;
    v.assign(rows * cols, T{});
  }
  T& at(std::size_t i, std::size_t j) { return v[i * c + j]; }
  const T& at(std::size_t i, std::size_t j) const { return v[i * c + j]; }
  std::size_t size() const { return v.size(); }
};

template <class T>
struct BlockParams {
  Tensor<T> ln1_g, ln1_b;
  Tensor<T> wq, bq, wk, bk, wv, bv, wo, bo;
  Tensor<T> ln2_g, ln2_b;
  Tensor<T> w1, b1, w2, b2;
};

// All learned tensors. for_each visits them in one fixed order, which is the
// canonical order for serialization, optimizer state and gradient checks.
template <class T>
struct NetParams {
  Tensor<T> embed_w, embed_b;  // feature affine
  Tensor<T> prot_w, prot_b;    // protected attribute encoder
  Tensor<T> lbl_ctx0, lbl_ctx1, lbl_query;
  std::vector<BlockParams<T>> blocks;
  Tensor<T> lnf_g, lnf_b;
  Tensor<T> out_w, out_b;

  static NetParams shaped(const ModelConfig& config);

  template <class F>
  void for_each(F&& f) {
    f(embed_w);
    f(embed_b);
    f(prot_w);
    f(prot_b);
    f(lbl_ctx0);
    f(lbl_ctx1);
    f(lbl_query);
    for (auto& blk : blocks) {
      f(blk.ln1_g);
      f(blk.ln1_b);
      f(blk.wq);
      f(blk.bq);
      f(blk.wk);
      f(blk.bk);
      f(blk.wv);
      f(blk.bv);
      f(blk.wo);
      f(blk.bo);
      f(blk.ln2_g);
      f(blk.ln2_b);
      f(blk.w1);
      f(blk.b1);
      f(blk.w2);
      f(blk.b2);
    }
    f(lnf_g);
    f(lnf_b);
    f(out_w);
    f(out_b);
  }
  template <class F>
  void for_each(F&& f) const {
    const_cast<NetParams*>(this)->for_each(
        [&](auto& t) { f(const_cast<const Tensor<T>&>(t)); });
  }

  std::size_t tensor_count() const;
  std::size_t value_count() const;
};

template <class T>
struct BlockCache {
  Matrix<T> x_in;                 // n x d, block input
  Matrix<T> xhat1;                // layernorm output pre-scale
  std::vector<T> inv1;            // per-row inverse std
  Matrix<T> normed1;              // g*xhat+b, attention input
  Matrix<T> q, k, vv;             // n x d
  std::vector<Matrix<T>> probs;   // per head, n x (C+1); column C = self
  Matrix<T> att_concat;           // n x d, pre output-projection
  Matrix<T> after_attn;           // n x d, residual sum
  Matrix<T> xhat2;
  std::vector<T> inv2;
  Matrix<T> normed2;
  Matrix<T> h1;                   // n x ff pre-activation
  Matrix<T> g1;                   // gelu(h1)
};

template <class T>
struct ForwardCache {
  Matrix<T> tokens;
  std::vector<BlockCache<T>> blocks;
  Matrix<T> xhatf;
  std::vector<T> invf;
  Matrix<T> normedf;
  std::vector<T> logits;  // query rows only
  std::vector<T> probs;
};

// Fixed-architecture encoder transformer over row tokens with hand-derived
// reverse-mode gradients. Attention is masked so query tokens see the
// context and themselves only; context tokens see the context.
template <class T>
class Net {
 public:
  explicit Net(const ModelConfig& config);

  void init(std::uint64_t seed);

  const ModelConfig& config() const { return config_; }
  NetParams<T>& params() { return params_; }
  const NetParams<T>& params() const { return params_; }

  // Row tokens: affine feature map + protected encoder + label embedding.
  Matrix<T> embed(const BatchInput<T>& batch) const;

  // Query probabilities. The cache carries everything backward needs.
  std::vector<T> forward(const BatchInput<T>& batch,
                         ForwardCache<T>* cache = nullptr) const;

  // Mean binary cross-entropy of query predictions against targets, with
  // probabilities clamped to [kProbClamp, 1-kProbClamp].
  static double bce(const std::vector<T>& probs,
                    const std::vector<std::int8_t>& targets);

  // Loss plus parameter gradients accumulated into *grads.
  double loss_and_grad(const BatchInput<T>& batch,
                       const std::vector<std::int8_t>& query_targets,
                       NetParams<T>* grads) const;

 private:
  void check_batch(const BatchInput<T>& batch) const;

  ModelConfig config_;
  NetParams<T> params_;
};

extern template class Net<float>;
extern template class Net<double>;
extern template struct NetParams<float>;
extern template struct NetParams<double>;

}  // namespace forge::pfn

#endif  // FORGE_PFN_NET_HPP
