#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>

#include "faceqa/decoder.hpp"
#include "faceqa/dimensions.hpp"
#include "faceqa/encoder.hpp"

namespace faceqa {

/// Encoder, task-token decoder and regression heads behind one parameter set.
class QualityAssessor {
 public:
  QualityAssessor(const ModelProfile& profile, std::uint64_t seed);

  QualityAssessor(const QualityAssessor&) = delete;
  QualityAssessor& operator=(const QualityAssessor&) = delete;
  QualityAssessor(QualityAssessor&&) = default;
  QualityAssessor& operator=(QualityAssessor&&) = default;

  const ModelProfile& profile() const { return profile_; }
  std::uint64_t seed() const { return seed_; }
  ParameterSet& parameters() { return *params_; }
  const ParameterSet& parameters() const { return *params_; }
  const FeatureEncoder& encoder() const { return *encoder_; }
  const QualityDecoder& decoder() const { return *decoder_; }

  /// Raw scores [K] with the graph recorded when grad mode is on.
  Tensor forward(const ViewTriplet& views) const;

  /// Inference scores clamped to [1, 5]; requires a six-task profile.
  DimensionScores predict(const ViewTriplet& views) const;

  /// JSON text holding the profile and seed; stored as checkpoint header.
  std::string header() const;
  void save(const std::filesystem::path& path) const;
  static QualityAssessor load(const std::filesystem::path& path);
  static QualityAssessor from_checkpoint_bytes(const std::string& bytes);

 private:
  ModelProfile profile_;
  std::uint64_t seed_;
  std::unique_ptr<ParameterSet> params_;
  std::unique_ptr<FeatureEncoder> encoder_;
  std::unique_ptr<QualityDecoder> decoder_;
};

}  // namespace faceqa
