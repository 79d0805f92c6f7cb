#include "faceqa/profile.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace faceqa {

using nlohmann::json;

void ModelProfile::validate() const {
  const auto fail = [&](const std::string& why) { throw ConfigError("profile " + name + ": " + why); };
  if (backbone.channels.empty()) fail("backbone needs at least one stage");
  if (backbone.channels.size() != backbone.strides.size()) fail("channels and strides differ in length");
  if (backbone.kernel == 0 || backbone.kernel % 2 == 0) fail("kernel must be odd and positive");
  std::size_t total = 1;
  for (std::size_t i = 0; i < backbone.stages(); ++i) {
    if (backbone.channels[i] == 0) fail("stage channels must be positive");
    if (backbone.strides[i] == 0) fail("stage strides must be positive");
    total *= backbone.strides[i];
    if (total > input_size) fail("stride product exceeds input size");
  }
  if (input_size == 0 || input_size % total != 0) {
    fail("cumulative stride " + std::to_string(total) + " must divide input size " + std::to_string(input_size));
  }
  if (d_out == 0 || d_latent == 0 || num_tasks == 0 || head_hidden == 0) fail("widths must be positive");
  if (view_heads == 0 || d_latent % view_heads != 0) fail("view heads must divide d_latent");
  if (decoder_heads == 0 || decoder_width % decoder_heads != 0) fail("decoder heads must divide decoder width");
  if (decoder_width != d_out) {
    fail("decoder width " + std::to_string(decoder_width) + " must equal d_out " + std::to_string(d_out) +
         "; set d_out to the decoder width (128 in the default profiles)");
  }
  if (!(init_std > 0.0)) fail("init_std must be positive");
  if (init_scheme != "normal" && init_scheme != "fan_in") fail("init_scheme must be normal or fan_in");
}

double ModelProfile::weight_std(std::size_t fan_in) const {
  return init_scheme == "fan_in" ? 1.0 / std::sqrt(static_cast<double>(fan_in)) : init_std;
}

double ModelProfile::token_std() const { return init_scheme == "fan_in" ? 1.0 : init_std; }

std::vector<std::size_t> ModelProfile::stage_sizes() const {
  std::vector<std::size_t> sizes;
  std::size_t s = input_size;
  for (std::size_t stride : backbone.strides) {
    s /= stride;
    sizes.push_back(s);
  }
  return sizes;
}

namespace {

ModelProfile paper_scale(const std::string& name, std::vector<std::size_t> channels) {
  ModelProfile p;
  p.name = name;
  p.backbone = {std::move(channels), {4, 2, 2, 2}, 3};
  return p;
}

}  // namespace

ModelProfile builtin_profile(const std::string& name) {
  if (name == "S") return paper_scale("S", {48, 96, 160, 304});
  if (name == "XS") return paper_scale("XS", {32, 64, 100, 192});
  if (name == "XXS") return paper_scale("XXS", {24, 48, 88, 168});
  if (name == "toy") {
    ModelProfile p;
    p.name = "toy";
    p.input_size = 16;
    p.backbone = {{8, 16}, {2, 2}, 3};
    p.d_out = 8;
    p.d_latent = 4;
    p.view_heads = 2;
    p.decoder_width = 8;
    p.decoder_heads = 2;
    p.head_hidden = 32;
    p.init_scheme = "fan_in";
    return p;
  }
  if (name == "desk") {
    ModelProfile p;
    p.name = "desk";
    p.input_size = 64;
    p.backbone = {{8, 16, 24, 32}, {2, 2, 2, 2}, 3};
    p.d_out = 32;
    p.d_latent = 16;
    p.view_heads = 4;
    p.decoder_width = 32;
    p.decoder_heads = 4;
    p.head_hidden = 32;
    p.init_scheme = "fan_in";
    return p;
  }
  throw ConfigError("unknown profile '" + name + "'");
}

std::vector<std::string> builtin_profile_names() { return {"S", "XS", "XXS", "toy", "desk"}; }

std::string profile_to_json(const ModelProfile& p) {
  json j;
  j["name"] = p.name;
  j["input_size"] = p.input_size;
  j["backbone"] = {{"channels", p.backbone.channels}, {"strides", p.backbone.strides}, {"kernel", p.backbone.kernel}};
  j["d_out"] = p.d_out;
  j["d_latent"] = p.d_latent;
  j["view_heads"] = p.view_heads;
  j["decoder_width"] = p.decoder_width;
  j["decoder_heads"] = p.decoder_heads;
  j["decoder_passes"] = p.decoder_passes;
  j["num_tasks"] = p.num_tasks;
  j["head_hidden"] = p.head_hidden;
  j["init_scheme"] = p.init_scheme;
  j["init_std"] = p.init_std;
  j["head_bias_init"] = p.head_bias_init;
  return j.dump(2);
}

ModelProfile profile_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("profile is not valid JSON: ") + e.what());
  }
  try {
    // A profile may start from a builtin and override single keys.
    ModelProfile p = j.contains("base") ? builtin_profile(j["base"].get<std::string>()) : ModelProfile{};
    p.name = j.value("name", p.name);
    p.input_size = j.value("input_size", p.input_size);
    if (j.contains("backbone")) {
      const auto& b = j["backbone"];
      p.backbone.channels = b.value("channels", p.backbone.channels);
      p.backbone.strides = b.value("strides", p.backbone.strides);
      p.backbone.kernel = b.value("kernel", p.backbone.kernel);
    }
    p.d_out = j.value("d_out", p.d_out);
    p.d_latent = j.value("d_latent", p.d_latent);
    p.view_heads = j.value("view_heads", p.view_heads);
    p.decoder_width = j.value("decoder_width", p.decoder_width);
    p.decoder_heads = j.value("decoder_heads", p.decoder_heads);
    p.decoder_passes = j.value("decoder_passes", p.decoder_passes);
    p.num_tasks = j.value("num_tasks", p.num_tasks);
    p.head_hidden = j.value("head_hidden", p.head_hidden);
    p.init_scheme = j.value("init_scheme", p.init_scheme);
    p.init_std = j.value("init_std", p.init_std);
    p.head_bias_init = j.value("head_bias_init", p.head_bias_init);
    p.validate();
    return p;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad profile field: ") + e.what());
  }
}

ModelProfile load_profile(const std::string& name_or_path) {
  for (const auto& n : builtin_profile_names())
    if (n == name_or_path) return builtin_profile(n);
  std::ifstream in(name_or_path);
  if (!in) throw ConfigError("no builtin profile or readable file named '" + name_or_path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return profile_from_json(ss.str());
}

}  // namespace faceqa
