#pragma once

#include <array>
#include <cmath>
#include <vector>

#include "hiccap/layers.hpp"

namespace hiccap {

/// Pair spaces of the contrastive objective.
enum class PairSpace { AudioVideo = 0, AudioText = 1, VideoText = 2 };
/// Matching tasks: video-text, video-audio, audio-text.
enum class MatchTask { VTM = 0, VAM = 1, ATM = 2 };

const char* to_string(PairSpace p);
const char* to_string(MatchTask m);

// --- tape-level building blocks ------------------------------------------

/// sum_i softplus(theta_i) * losses_i
template <class S>
ad::Var<S> softplus_weighted_sum(ad::Tape<S>& t, const std::vector<ad::Var<S>>& losses, ad::Param<S>& theta) {
  ad::require(static_cast<Index>(losses.size()) == theta.value.cols(), "weighted sum: weight count differs");
  ad::Var<S> l = ad::hcat(losses);
  ad::Var<S> w = ad::softplus(t.param(theta));
  return ad::sum(ad::mul(w, l));
}

/// -log( sum_i exp(s_ii) / sum_ij exp(s_ij) ), s = U U'^T / tau, pooled over the whole batch.
template <class S>
ad::Var<S> nce_loss(ad::Var<S> u, ad::Var<S> u_prime, S tau) {
  ad::require(u.rows() == u_prime.rows() && u.cols() == u_prime.cols(), "nce_loss: shapes differ");
  ad::require(u.rows() >= 1, "nce_loss: empty batch");
  ad::Var<S> sims = ad::scale(ad::matmul_nt(u, u_prime), S(1) / tau);
  return ad::sub(ad::logsumexp_all(sims), ad::logsumexp_all(ad::diagonal(sims)));
}

/// Projection stack followed by row-wise L2 normalization.
template <class S>
ad::Var<S> project_pair(ad::Tape<S>& t, ad::Var<S> z, const MlpBlock<S>& projection, Mode mode) {
  return ad::l2_normalize_rows(projection(t, z, mode));
}

template <class S>
struct ContrastiveTerms {
  ad::Var<S> total;
  std::array<ad::Var<S>, 3> pair_losses;  // indexed by PairSpace
};

/// lambda_AV NCE(g_av(z_a), g_av(z_v)) + lambda_AT NCE(g_at(z_a), g_at(z_t)) + lambda_VT NCE(g_vt(z_v), g_vt(z_t))
template <class S>
ContrastiveTerms<S> contrastive_total(ad::Tape<S>& t, ad::Var<S> z_audio, ad::Var<S> z_video, ad::Var<S> z_text,
                                      const std::array<MlpBlock<S>, 3>& projections, ad::Param<S>& theta, S tau,
                                      Mode mode) {
  const std::array<std::pair<ad::Var<S>, ad::Var<S>>, 3> pairs{{
      {z_audio, z_video},
      {z_audio, z_text},
      {z_video, z_text},
  }};
  ContrastiveTerms<S> out;
  std::vector<ad::Var<S>> losses;
  for (int p = 0; p < 3; ++p) {
    // Both sides go through g in one stacked batch. Projecting them separately would give the
    // batch norm different train-time statistics per side while its running averages blend the
    // two, so eval-mode projections would not match what training saw.
    const auto [first, second] = pairs[p];
    const Index n = first.rows();
    ad::Var<S> both = project_pair(t, ad::vcat<S>({first, second}), projections[p], mode);
    std::vector<Index> top(static_cast<std::size_t>(n)), bottom(static_cast<std::size_t>(n));
    for (Index i = 0; i < n; ++i) {
      top[static_cast<std::size_t>(i)] = i;
      bottom[static_cast<std::size_t>(i)] = n + i;
    }
    out.pair_losses[p] = nce_loss(ad::select_rows(both, std::move(top)), ad::select_rows(both, std::move(bottom)), tau);
    losses.push_back(out.pair_losses[p]);
  }
  out.total = softplus_weighted_sum(t, losses, theta);
  return out;
}

// --- matrix-level conveniences ----------------------------------------

template <class S>
Matrix<S> mlp_block(const Matrix<S>& x, const MlpBlock<S>& params, Mode mode) {
  ad::Tape<S> t(false);
  return params(t, t.constant(x), mode).value();
}

template <class S>
Matrix<S> softmax_probabilities(const Matrix<S>& logits) {
  return ad::softmax_rows_value(logits);
}

/// Concatenates the three pooled representations and returns per-row class probabilities.
template <class S>
Matrix<S> binary_forward(const Matrix<S>& r_text, const Matrix<S>& r_audio, const Matrix<S>& r_video,
                         const MlpBlock<S>& head, Mode mode = Mode::Eval) {
  Matrix<S> x(r_text.rows(), r_text.cols() + r_audio.cols() + r_video.cols());
  x << r_text, r_audio, r_video;
  return softmax_probabilities(mlp_block(x, head, mode));
}

template <class S>
std::array<Matrix<S>, 4> multitask_forward(const Matrix<S>& r_text, const Matrix<S>& r_audio,
                                           const Matrix<S>& r_video, const std::array<MlpBlock<S>, 4>& heads,
                                           Mode mode = Mode::Eval) {
  std::array<Matrix<S>, 4> out;
  for (int i = 0; i < 4; ++i) out[i] = binary_forward(r_text, r_audio, r_video, heads[i], mode);
  return out;
}

template <class S>
Matrix<S> matching_forward(const Matrix<S>& r_a, const Matrix<S>& r_b, const MlpBlock<S>& head,
                           Mode mode = Mode::Eval) {
  Matrix<S> x(r_a.rows(), r_a.cols() + r_b.cols());
  x << r_a, r_b;
  return softmax_probabilities(mlp_block(x, head, mode));
}

/// -log p[gold] for one probability row.
template <class S>
S task_loss(const Matrix<S>& probs, int gold) {
  return -std::log(probs(0, gold));
}

template <class S>
S softplus_weighted_total(const std::vector<S>& losses, const Matrix<S>& theta) {
  S total = 0;
  for (std::size_t i = 0; i < losses.size(); ++i)
    total += ad::softplus_value(theta(0, static_cast<Index>(i))) * losses[i];
  return total;
}

template <class S>
S multitask_total(const std::array<S, 4>& losses, const Matrix<S>& theta) {
  return softplus_weighted_total(std::vector<S>(losses.begin(), losses.end()), theta);
}

template <class S>
S matching_total(const std::array<S, 3>& losses, const Matrix<S>& theta) {
  return softplus_weighted_total(std::vector<S>(losses.begin(), losses.end()), theta);
}

template <class S>
S nce_loss(const Matrix<S>& u, const Matrix<S>& u_prime, S tau) {
  ad::Tape<S> t(false);
  return nce_loss(t.constant(u), t.constant(u_prime), tau).scalar();
}

template <class S>
Matrix<S> project_pair(const Matrix<S>& z, const MlpBlock<S>& projection, Mode mode = Mode::Eval) {
  ad::Tape<S> t(false);
  return project_pair(t, t.constant(z), projection, mode).value();
}

}  // namespace hiccap
