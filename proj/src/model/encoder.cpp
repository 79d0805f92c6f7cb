#include "faceqa/encoder.hpp"

#include "faceqa/ops.hpp"

namespace faceqa {

std::vector<Tensor> backbone_forward(const Tensor& x, const BackboneWeights& w, const BackboneConfig& cfg) {
  if (w.weight.size() != cfg.stages() || w.bias.size() != cfg.stages()) {
    throw ConfigError("backbone weights do not match the stage count");
  }
  std::vector<Tensor> stages;
  stages.reserve(cfg.stages());
  Tensor h = x;
  for (std::size_t i = 0; i < cfg.stages(); ++i) {
    h = ops::gelu(ops::conv2d(h, w.weight[i], w.bias[i], cfg.strides[i], cfg.kernel / 2));
    stages.push_back(h);
  }
  return stages;
}

Tensor fuse_scales(const std::vector<Tensor>& stages, const ScaleFusionWeights& w) {
  if (stages.empty() || stages.size() != w.proj_weight.size() || stages.size() != w.proj_bias.size()) {
    throw ConfigError("fuse_scales: " + std::to_string(stages.size()) + " stages for " +
                      std::to_string(w.proj_weight.size()) + " projections");
  }
  const std::size_t h = stages.back().dim(1), wd = stages.back().dim(2);
  std::vector<Tensor> projected;
  projected.reserve(stages.size());
  for (std::size_t i = 0; i < stages.size(); ++i) {
    Tensor pooled = ops::adaptive_avg_pool2d(stages[i], h, wd);
    projected.push_back(ops::conv2d(pooled, w.proj_weight[i], w.proj_bias[i], 1, 0));
  }
  return ops::conv2d(ops::concat_channels(projected), w.fuse_weight, w.fuse_bias, 1, 0);
}

Tensor cross_view_fuse(const std::array<Tensor, 3>& views, const ViewAttentionWeights& w) {
  for (const auto& v : views) {
    if (v.rank() != 3 || v.shape() != views[0].shape()) {
      throw DimensionError("cross_view_fuse: views must share one [D_o,H,W] shape");
    }
  }
  std::vector<Tensor> pooled;
  for (const auto& v : views) pooled.push_back(ops::global_average_pool(v));
  Tensor low = ops::matmul(ops::stack_rows(pooled), w.down);  // [3, D_l]
  Tensor g = ops::scaled_dot_attention(low, low, low, w.heads);
  Tensor u = ops::matmul(g, w.up);  // [3, D_o]
  Tensor acc = ops::channel_scale(views[0], ops::row(u, 0));
  for (std::size_t j = 1; j < 3; ++j) acc = ops::add(acc, ops::channel_scale(views[j], ops::row(u, j)));
  return ops::scale(acc, 1.0 / 3.0);
}

FeatureEncoder::FeatureEncoder(const ModelProfile& profile, ParameterSet& params, InitRng& rng)
    : cfg_(profile.backbone), input_size_(profile.input_size) {
  profile.validate();
  const std::size_t k = cfg_.kernel, d_o = profile.d_out;
  // Fan-in of a [out, in, k, k] conv or an [in, out] matrix.
  auto weight = [&](const std::string& name, Shape shape) {
    const std::size_t fan_in = shape.size() == 4 ? shape[1] * shape[2] * shape[3] : shape[0];
    Tensor t = params.create(name, std::move(shape));
    rng.fill_normal(t, profile.weight_std(fan_in));
    return t;
  };
  std::size_t in = 3;
  for (std::size_t i = 0; i < cfg_.stages(); ++i) {
    const std::string p = "encoder.backbone.stage" + std::to_string(i);
    backbone_.weight.push_back(weight(p + ".weight", {cfg_.channels[i], in, k, k}));
    backbone_.bias.push_back(params.create(p + ".bias", {cfg_.channels[i]}));
    in = cfg_.channels[i];
  }
  for (std::size_t i = 0; i < cfg_.stages(); ++i) {
    const std::string p = "encoder.scale_proj." + std::to_string(i);
    fusion_.proj_weight.push_back(weight(p + ".weight", {d_o, cfg_.channels[i], 1, 1}));
    fusion_.proj_bias.push_back(params.create(p + ".bias", {d_o}));
  }
  fusion_.fuse_weight = weight("encoder.fuse.weight", {d_o, cfg_.stages() * d_o, 1, 1});
  fusion_.fuse_bias = params.create("encoder.fuse.bias", {d_o});
  attention_.down = weight("encoder.lrp.weight", {d_o, profile.d_latent});
  attention_.up = weight("encoder.hrp.weight", {profile.d_latent, d_o});
  attention_.heads = profile.view_heads;
}

Tensor FeatureEncoder::forward(const ViewTriplet& views) const {
  std::array<Tensor, 3> maps;
  const Tensor* inputs[3] = {&views.original, &views.face, &views.eyes_mouth};
  for (std::size_t j = 0; j < 3; ++j) {
    const Tensor& x = *inputs[j];
    if (x.shape() != Shape{3, input_size_, input_size_}) {
      throw DimensionError("encoder expects 3x" + std::to_string(input_size_) + "x" + std::to_string(input_size_) +
                           " views, got " + shape_str(x.shape()));
    }
    maps[j] = fuse(backbone(x));
  }
  return cross_view(maps);
}

}  // namespace faceqa
