#include "faceqa/decoder.hpp"

#include "faceqa/dimensions.hpp"
#include "faceqa/ops.hpp"

namespace faceqa {

Tensor decode(const Tensor& tokens, const Tensor& feature, std::size_t heads, std::size_t passes) {
  if (tokens.rank() != 2) throw DimensionError("decode: tokens must be [K,W]");
  if (feature.rank() != 3) throw DimensionError("decode: feature must be [D_o,H,W]");
  const std::size_t width = tokens.dim(1), d_o = feature.dim(0);
  if (d_o != width) {
    throw ConfigError("decode: feature has D_o=" + std::to_string(d_o) + " but tokens have width " +
                      std::to_string(width) + "; set d_out equal to the decoder width in the profile");
  }
  const std::size_t positions = feature.dim(1) * feature.dim(2);
  Tensor flat = ops::transpose(ops::reshape(feature, {d_o, positions}));  // [HW, D_o]
  Tensor t = tokens;
  for (std::size_t p = 0; p < passes; ++p) {
    Tensor self = ops::scaled_dot_attention(t, t, t, heads);
    t = ops::scaled_dot_attention(self, flat, flat, heads);
  }
  return t;
}

Tensor regress(const Tensor& refined, const std::vector<HeadWeights>& heads) {
  if (refined.rank() != 2 || refined.dim(0) != heads.size()) {
    throw DimensionError("regress: " + shape_str(refined.shape()) + " rows for " + std::to_string(heads.size()) +
                         " heads");
  }
  std::vector<Tensor> out;
  out.reserve(heads.size());
  for (std::size_t k = 0; k < heads.size(); ++k) {
    const auto& h = heads[k];
    Tensor x = ops::row(refined, k);
    x = ops::gelu(ops::add_row_bias(ops::matmul(x, h.w1), h.b1));
    x = ops::gelu(ops::add_row_bias(ops::matmul(x, h.w2), h.b2));
    out.push_back(ops::add_row_bias(ops::matmul(x, h.w3), h.b3));
  }
  return ops::reshape(ops::stack_rows(out), {heads.size()});
}

Tensor quality_loss(const Tensor& predicted, const Tensor& target) {
  if (predicted.numel() != target.numel()) throw DimensionError("quality_loss: length mismatch");
  if (!all_finite(predicted.data()) || !all_finite(target.data())) {
    throw NumericalError("quality_loss", "non-finite score");
  }
  return ops::mse_loss(predicted, target);
}

std::vector<std::string> task_names(std::size_t num_tasks) {
  std::vector<std::string> names;
  for (std::size_t k = 0; k < num_tasks; ++k) {
    names.push_back(num_tasks == kNumDimensions ? std::string(kDimensionNames[k]) : "task" + std::to_string(k));
  }
  return names;
}

QualityDecoder::QualityDecoder(const ModelProfile& profile, ParameterSet& params, InitRng& rng)
    : heads_(profile.decoder_heads), passes_(profile.decoder_passes) {
  profile.validate();
  const std::size_t w = profile.decoder_width, hid = profile.head_hidden;
  tokens_ = params.create("decoder.tokens", {profile.num_tasks, w});
  rng.fill_normal(tokens_, profile.token_std());
  for (const auto& name : task_names(profile.num_tasks)) {
    const std::string p = "decoder.heads." + name;
    auto weight = [&](const std::string& n, Shape s) {
      const std::size_t fan_in = s[0];
      Tensor t = params.create(p + n, std::move(s));
      rng.fill_normal(t, profile.weight_std(fan_in));
      return t;
    };
    HeadWeights h;
    h.w1 = weight(".fc1.weight", {w, hid});
    h.b1 = params.create(p + ".fc1.bias", {hid});
    h.w2 = weight(".fc2.weight", {hid, hid});
    h.b2 = params.create(p + ".fc2.bias", {hid});
    h.w3 = weight(".fc3.weight", {hid, 1});
    h.b3 = params.create(p + ".fc3.bias", {1});
    h.b3.mutable_data()[0] = profile.head_bias_init;
    heads_weights_.push_back(h);
  }
}

}  // namespace faceqa
