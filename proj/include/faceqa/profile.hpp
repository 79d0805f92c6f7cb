#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "faceqa/errors.hpp"

namespace faceqa {

/// Strided-conv backbone: stage i is conv(kernel, stride_i, pad kernel/2) +
/// bias + GELU producing channels_i maps.
struct BackboneConfig {
  std::vector<std::size_t> channels;
  std::vector<std::size_t> strides;
  std::size_t kernel = 3;

  std::size_t stages() const { return channels.size(); }
  bool operator==(const BackboneConfig&) const = default;
};

/// Everything that fixes the model architecture.
struct ModelProfile {
  std::string name = "S";
  std::size_t input_size = 224;
  BackboneConfig backbone;
  std::size_t d_out = 128;         // unified channel width
  std::size_t d_latent = 64;       // low-rank width of the view attention
  std::size_t view_heads = 4;
  std::size_t decoder_width = 128;
  std::size_t decoder_heads = 8;
  std::size_t decoder_passes = 2;
  std::size_t num_tasks = 6;
  std::size_t head_hidden = 128;
  /// "normal": every weight ~ N(0, init_std^2). "fan_in": N(0, 1/fan_in),
  /// task tokens N(0, 1).
  std::string init_scheme = "normal";
  double init_std = 0.02;
  double head_bias_init = 3.0;  // final regression-head bias

  /// Throws ConfigError describing the first violated constraint.
  void validate() const;

  double weight_std(std::size_t fan_in) const;
  double token_std() const;

  /// Spatial size after each backbone stage.
  std::vector<std::size_t> stage_sizes() const;

  bool operator==(const ModelProfile&) const = default;
};

/// Built-in profiles: "S", "XS", "XXS" (224 inputs, D_o 128, D_l 64), plus
/// the desk-scale "toy" and "desk" profiles used for tests and quick runs.
ModelProfile builtin_profile(const std::string& name);
std::vector<std::string> builtin_profile_names();

std::string profile_to_json(const ModelProfile& p);
ModelProfile profile_from_json(const std::string& text);
/// A builtin name or a path to a JSON profile file.
ModelProfile load_profile(const std::string& name_or_path);

}  // namespace faceqa
