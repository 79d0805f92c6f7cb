#pragma once

#include <string>
#include <vector>

#include "faceqa/parameters.hpp"
#include "faceqa/profile.hpp"

namespace faceqa {

/// One task's regression head: width -> hidden -> hidden -> 1 with GELU after
/// the first two layers. Weights are stored [in, out].
struct HeadWeights {
  Tensor w1, b1, w2, b2, w3, b3;
};

/// Refines task tokens T [K, W] against the unified feature F [W, H, W']:
/// each pass runs T' = Attn(T, T, T), then T = Attn(T', F_flat, F_flat) where
/// F_flat holds the H*W' spatial positions as rows.
Tensor decode(const Tensor& tokens, const Tensor& feature, std::size_t heads, std::size_t passes);

/// Scores [K]: row k of `refined` goes through heads[k].
Tensor regress(const Tensor& refined, const std::vector<HeadWeights>& heads);

/// (1/K) * sum_k (q_k - q_hat_k)^2. Non-finite input raises NumericalError.
Tensor quality_loss(const Tensor& predicted, const Tensor& target);

/// Task names used for head parameters: the six dimension names when K = 6,
/// otherwise task0, task1, ...
std::vector<std::string> task_names(std::size_t num_tasks);

class QualityDecoder {
 public:
  QualityDecoder(const ModelProfile& profile, ParameterSet& params, InitRng& rng);

  Tensor refine(const Tensor& feature) const { return decode(tokens_, feature, heads_, passes_); }
  Tensor scores(const Tensor& refined) const { return regress(refined, heads_weights_); }
  Tensor forward(const Tensor& feature) const { return scores(refine(feature)); }

  const Tensor& tokens() const { return tokens_; }
  const std::vector<HeadWeights>& head_weights() const { return heads_weights_; }

 private:
  std::size_t heads_;
  std::size_t passes_;
  Tensor tokens_;
  std::vector<HeadWeights> heads_weights_;
};

}  // namespace faceqa
