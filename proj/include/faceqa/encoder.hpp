#pragma once

#include <array>
#include <vector>

#include "faceqa/parameters.hpp"
#include "faceqa/profile.hpp"
#include "faceqa/views.hpp"

namespace faceqa {

struct BackboneWeights {
  std::vector<Tensor> weight;  // [D_i, D_{i-1}, k, k]
  std::vector<Tensor> bias;    // [D_i]
};

struct ScaleFusionWeights {
  std::vector<Tensor> proj_weight;  // [D_o, D_i, 1, 1]
  std::vector<Tensor> proj_bias;    // [D_o]
  Tensor fuse_weight;               // [D_o, N_s*D_o, 1, 1]
  Tensor fuse_bias;                 // [D_o]
};

struct ViewAttentionWeights {
  Tensor down;  // W_d [D_o, D_l]
  Tensor up;    // W_u [D_l, D_o]
  std::size_t heads = 1;
};

/// Stage feature maps of one view. Stage i is conv(k, stride_i, pad k/2) +
/// bias followed by GELU.
std::vector<Tensor> backbone_forward(const Tensor& x, const BackboneWeights& w, const BackboneConfig& cfg);

/// Per-stage affine projection to D_o, adaptive average pooling to the deepest
/// grid, channel concatenation and a 1x1 conv back to D_o. Pooling is applied
/// before the projection; the two commute because the projection is affine
/// and the pooling weights of each window sum to one.
Tensor fuse_scales(const std::vector<Tensor>& stages, const ScaleFusionWeights& w);

/// GAP each view, project with W_d, self-attend across the three view rows,
/// project back with W_u and average the channel-modulated view maps.
Tensor cross_view_fuse(const std::array<Tensor, 3>& views, const ViewAttentionWeights& w);

/// Owns the encoder parameters inside a model's ParameterSet.
class FeatureEncoder {
 public:
  FeatureEncoder(const ModelProfile& profile, ParameterSet& params, InitRng& rng);

  std::vector<Tensor> backbone(const Tensor& x) const { return backbone_forward(x, backbone_, cfg_); }
  Tensor fuse(const std::vector<Tensor>& stages) const { return fuse_scales(stages, fusion_); }
  Tensor cross_view(const std::array<Tensor, 3>& maps) const { return cross_view_fuse(maps, attention_); }

  /// Unified feature F [D_o, H_deep, W_deep].
  Tensor forward(const ViewTriplet& views) const;

  const BackboneWeights& backbone_weights() const { return backbone_; }
  const ScaleFusionWeights& fusion_weights() const { return fusion_; }
  const ViewAttentionWeights& attention_weights() const { return attention_; }

 private:
  BackboneConfig cfg_;
  std::size_t input_size_;
  BackboneWeights backbone_;
  ScaleFusionWeights fusion_;
  ViewAttentionWeights attention_;
};

}  // namespace faceqa
