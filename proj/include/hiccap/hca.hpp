#pragma once

// Hierarchical cross-attention: two chained scaled dot-product cross-attention
// stages per target modality, followed by additive attention pooling.

#include <array>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "hiccap/data_model.hpp"
#include "hiccap/encoders.hpp"
#include "hiccap/layers.hpp"

namespace hiccap {

struct AttentionConfig {
  Index d_k = 0;  // 0 means d_model
  Index n_heads = 1;
  bool output_projection = true;
  Index pool_hidden = 0;  // 0 means d_model

  Index key_width(Index d_model) const { return d_k > 0 ? d_k : d_model; }
  Index pool_width(Index d_model) const { return pool_hidden > 0 ? pool_hidden : d_model; }
};

template <class S>
struct AttentionResult {
  ad::Var<S> output;
  std::vector<ad::Var<S>> weights;  // one T1 x T2 row-stochastic matrix per head
};

template <class S>
struct CrossAttention {
  Linear<S> query, key, value;
  ad::Param<S>* output = nullptr;  // d_k x d_model, absent when disabled
  Index n_heads = 1;

  CrossAttention() = default;
  CrossAttention(ParamStore<S>& store, const std::string& name, Index d_model, const AttentionConfig& cfg,
                 const CounterRng& rng)
      : n_heads(cfg.n_heads) {
    const Index dk = cfg.key_width(d_model);
    if (n_heads < 1 || dk % n_heads != 0)
      throw Error(ErrorKind::InvalidConfig, name + ": d_k must be divisible by n_heads");
    if (!cfg.output_projection && dk != d_model)
      throw Error(ErrorKind::InvalidConfig, name + ": without an output map d_k must equal d_model");
    query = Linear<S>(store, name + ".q", d_model, dk, rng);
    key = Linear<S>(store, name + ".k", d_model, dk, rng);
    value = Linear<S>(store, name + ".v", d_model, dk, rng);
    if (cfg.output_projection) output = &store.add_uniform(name + ".o", dk, d_model, dk, rng);
  }

  Index d_k() const { return query.out(); }

  AttentionResult<S> operator()(ad::Tape<S>& t, ad::Var<S> q_in, ad::Var<S> ctx) const {
    ad::require(q_in.cols() == query.in() && ctx.cols() == key.in(), "cross_attention: width differs from d_model");
    ad::require(q_in.rows() >= 1 && ctx.rows() >= 1, "cross_attention: empty sequence");
    ad::Var<S> q = query(t, q_in);
    ad::Var<S> k = key(t, ctx);
    ad::Var<S> v = value(t, ctx);
    const Index head_w = d_k() / n_heads;
    const S inv_sqrt = S(1) / std::sqrt(static_cast<S>(head_w));
    AttentionResult<S> res;
    std::vector<ad::Var<S>> parts;
    for (Index h = 0; h < n_heads; ++h) {
      ad::Var<S> qh = n_heads == 1 ? q : ad::col_slice(q, h * head_w, head_w);
      ad::Var<S> kh = n_heads == 1 ? k : ad::col_slice(k, h * head_w, head_w);
      ad::Var<S> vh = n_heads == 1 ? v : ad::col_slice(v, h * head_w, head_w);
      ad::Var<S> logits = ad::scale(ad::matmul_nt(qh, kh), inv_sqrt);
      if (!logits.value().allFinite()) throw Error(ErrorKind::NonFiniteLogit, "cross_attention logits");
      ad::Var<S> a = ad::softmax_rows(logits);
      res.weights.push_back(a);
      parts.push_back(ad::matmul(a, vh));
    }
    ad::Var<S> o = n_heads == 1 ? parts.front() : ad::hcat(parts);
    res.output = output ? ad::matmul(o, t.param(*output)) : o;
    return res;
  }
};

template <class S>
struct HcaHead {
  CrossAttention<S> stage1, stage2;

  HcaHead() = default;
  HcaHead(ParamStore<S>& store, const std::string& name, Index d_model, const AttentionConfig& cfg,
          const CounterRng& rng)
      : stage1(store, name + ".stage1", d_model, cfg, rng), stage2(store, name + ".stage2", d_model, cfg, rng) {}

  /// Stage-1 output (target refined by the first context) is the query of stage 2.
  AttentionResult<S> operator()(ad::Tape<S>& t, ad::Var<S> target, ad::Var<S> first, ad::Var<S> second) const {
    AttentionResult<S> s1 = stage1(t, target, first);
    AttentionResult<S> s2 = stage2(t, s1.output, second);
    s2.weights.insert(s2.weights.begin(), s1.weights.begin(), s1.weights.end());
    return s2;
  }
};

template <class S>
struct PoolResult {
  ad::Var<S> pooled;  // 1 x d
  ad::Var<S> alpha;   // 1 x T
};

/// alpha = softmax_i(v . tanh(W_h x_i + b_h)), r = sum_i alpha_i x_i
template <class S>
struct AttentionPool {
  ad::Param<S>* w_h = nullptr;  // d x d_h
  ad::Param<S>* b_h = nullptr;  // 1 x d_h
  ad::Param<S>* v = nullptr;    // 1 x d_h

  AttentionPool() = default;
  AttentionPool(ParamStore<S>& store, const std::string& name, Index d, Index d_h, const CounterRng& rng)
      : w_h(&store.add_uniform(name + ".w_h", d, d_h, d, rng)),
        b_h(&store.add_uniform(name + ".b_h", 1, d_h, d, rng)),
        v(&store.add_uniform(name + ".v", 1, d_h, d_h, rng)) {}

  PoolResult<S> operator()(ad::Tape<S>& t, ad::Var<S> x) const {
    ad::require(x.rows() >= 1, "attention_pool: empty sequence");
    ad::require(x.cols() == w_h->value.rows(), "attention_pool: width differs");
    ad::Var<S> hidden = ad::tanh(ad::add_row(ad::matmul(x, t.param(*w_h)), t.param(*b_h)));
    ad::Var<S> scores = ad::matmul_nt(hidden, t.param(*v));  // T x 1
    ad::Var<S> alpha = ad::softmax_rows(ad::transpose(scores));
    return {ad::matmul(alpha, x), alpha};
  }
};

/// One HCA head and one pooling layer per target modality.
template <class S>
struct FusionParams {
  std::array<HcaHead<S>, 3> heads;
  std::array<AttentionPool<S>, 3> pools;

  FusionParams() = default;
  FusionParams(ParamStore<S>& store, Index d_model, const AttentionConfig& cfg, const CounterRng& rng) {
    for (Modality m : kModalities) {
      const std::string name = std::string("hca.") + to_string(m);
      heads[index_of(m)] = HcaHead<S>(store, name, d_model, cfg, rng);
      pools[index_of(m)] = AttentionPool<S>(store, std::string("pool.") + to_string(m), d_model,
                                            cfg.pool_width(d_model), rng);
    }
  }
};

/// Pooled representation for every target modality (indexed by Modality).
template <class S>
std::array<ad::Var<S>, 3> fuse(ad::Tape<S>& t, const std::array<ad::Var<S>, 3>& encoded,
                               const ModalityOrdering& ordering, const FusionParams<S>& p) {
  std::array<ad::Var<S>, 3> out;
  for (Modality m : kModalities) {
    auto [first, second] = ordering.for_target(m);
    auto head = p.heads[index_of(m)](t, encoded[index_of(m)], encoded[index_of(first)], encoded[index_of(second)]);
    out[index_of(m)] = p.pools[index_of(m)](t, head.output).pooled;
  }
  return out;
}

// Inference-only conveniences over plain matrices.

template <class S>
struct CrossAttentionOutput {
  Matrix<S> output;
  std::vector<Matrix<S>> weights;
};

template <class S>
CrossAttentionOutput<S> cross_attention(const Matrix<S>& query_seq, const Matrix<S>& context_seq,
                                        const CrossAttention<S>& params) {
  ad::Tape<S> t(false);
  auto r = params(t, t.constant(query_seq), t.constant(context_seq));
  CrossAttentionOutput<S> out{r.output.value(), {}};
  for (auto& w : r.weights) out.weights.push_back(w.value());
  return out;
}

template <class S>
Matrix<S> hca_head(const Matrix<S>& target, const Matrix<S>& ctx_first, const Matrix<S>& ctx_second,
                   const HcaHead<S>& params) {
  ad::Tape<S> t(false);
  return params(t, t.constant(target), t.constant(ctx_first), t.constant(ctx_second)).output.value();
}

template <class S>
struct PoolOutput {
  Matrix<S> pooled;
  Matrix<S> alpha;
};

template <class S>
PoolOutput<S> attention_pool(const Matrix<S>& seq, const AttentionPool<S>& params) {
  ad::Tape<S> t(false);
  auto r = params(t, t.constant(seq));
  return {r.pooled.value(), r.alpha.value()};
}

template <class S>
std::array<Matrix<S>, 3> fuse(const EncodedSequence<S>& text, const EncodedSequence<S>& audio,
                              const EncodedSequence<S>& video, const ModalityOrdering& ordering,
                              const FusionParams<S>& params) {
  ad::Tape<S> t(false);
  std::array<ad::Var<S>, 3> enc{t.constant(text.data), t.constant(audio.data), t.constant(video.data)};
  auto r = fuse(t, enc, ordering, params);
  return {r[0].value(), r[1].value(), r[2].value()};
}

}  // namespace hiccap
