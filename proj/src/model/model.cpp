#include "faceqa/model.hpp"

#include <algorithm>

#include "faceqa/checkpoint.hpp"
#include "json.hpp"

namespace faceqa {

using nlohmann::json;

QualityAssessor::QualityAssessor(const ModelProfile& profile, std::uint64_t seed)
    : profile_(profile), seed_(seed), params_(std::make_unique<ParameterSet>()) {
  profile_.validate();
  InitRng rng(seed);
  encoder_ = std::make_unique<FeatureEncoder>(profile_, *params_, rng);
  decoder_ = std::make_unique<QualityDecoder>(profile_, *params_, rng);
}

Tensor QualityAssessor::forward(const ViewTriplet& views) const { return decoder_->forward(encoder_->forward(views)); }

DimensionScores QualityAssessor::predict(const ViewTriplet& views) const {
  if (profile_.num_tasks != kNumDimensions) {
    throw ConfigError("predict needs a six-task profile, got " + std::to_string(profile_.num_tasks));
  }
  NoGradGuard guard;
  Tensor raw = forward(views);
  DimensionScores out{};
  for (std::size_t k = 0; k < kNumDimensions; ++k) out[k] = std::clamp(raw.data()[k], 1.0, 5.0);
  return out;
}

std::string QualityAssessor::header() const {
  json j;
  j["format"] = "faceqa-model";
  j["profile"] = json::parse(profile_to_json(profile_));
  j["seed"] = seed_;
  return j.dump();
}

void QualityAssessor::save(const std::filesystem::path& path) const { save_checkpoint(path, header(), *params_); }

QualityAssessor QualityAssessor::from_checkpoint_bytes(const std::string& bytes) {
  CheckpointData data = decode_checkpoint(bytes);
  json j;
  try {
    j = json::parse(data.header);
  } catch (const json::exception& e) {
    throw DataError(std::string("checkpoint header is not JSON: ") + e.what());
  }
  if (j.value("format", "") != "faceqa-model" || !j.contains("profile")) {
    throw DataError("checkpoint header does not describe a model");
  }
  QualityAssessor model(profile_from_json(j["profile"].dump()), j.value("seed", std::uint64_t{0}));
  restore_parameters(data, *model.params_);
  return model;
}

QualityAssessor QualityAssessor::load(const std::filesystem::path& path) {
  return from_checkpoint_bytes(read_file_bytes(path));
}

}  // namespace faceqa
