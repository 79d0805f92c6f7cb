#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "faceqa/manifest.hpp"
#include "faceqa/model.hpp"
#include "faceqa/synth.hpp"

namespace faceqa {

// ------------------------------------------------------------------ splits

class SplitSizeError : public DataError {
 public:
  using DataError::DataError;
};

struct FoldAssignment {
  std::vector<std::string> train, val, test;
  bool operator==(const FoldAssignment&) const = default;
};

struct SplitPlan {
  std::uint64_t seed = 0;
  std::vector<FoldAssignment> folds;
  bool operator==(const SplitPlan&) const = default;
};

struct SplitSizes {
  std::size_t train = 0, val = 0, test = 0;
  bool operator==(const SplitSizes&) const = default;
};

/// Sizes of fold f out of 5 for n images: test = floor(n/5) (+1 for the first
/// n mod 5 folds), val = floor(n/10), train takes the remainder.
SplitSizes fold_sizes(std::size_t n, std::size_t fold);

/// Five folds over a seeded shuffle. Fold f's test set is the f-th contiguous
/// chunk; its validation set is the next floor(n/10) images cyclically after
/// that chunk; everything else trains. Needs at least 10 unique ids.
SplitPlan split_folds(const std::vector<std::string>& image_ids, std::uint64_t seed);

std::string split_to_json(const SplitPlan& plan);
SplitPlan split_from_json(const std::string& text);

// -------------------------------------------------------------------- Adam

struct AdamConfig {
  double lr = 5e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  std::vector<std::vector<double>> m, v;  // per parameter, registration order
  std::uint64_t step = 0;
};

/// One bias-corrected Adam update from the gradients stored on `params`.
/// Checks every gradient first; a non-finite value raises NumericalError
/// naming the parameter and leaves parameters and state untouched.
void adam_step(ParameterSet& params, AdamState& state, const AdamConfig& config);

// ---------------------------------------------------------------- training

struct Sample {
  std::string id;
  ViewTriplet views;
  DimensionScores mos{};
};

/// Loads and preprocesses labelled manifest rows (DataError lists rows
/// without labels).
std::vector<Sample> load_samples(const std::vector<ManifestRow>& rows, const std::filesystem::path& base_dir,
                                 const ViewOptions& views);
std::vector<Sample> samples_from_synthetic(const std::vector<SynthSample>& synth, const ViewOptions& views);
/// Rows of `all` whose ids are listed, in list order.
std::vector<Sample> select_samples(const std::vector<Sample>& all, const std::vector<std::string>& ids);

struct TrainConfig {
  std::string profile = "toy";
  AdamConfig adam;
  std::size_t batch_size = 4;
  std::size_t max_steps = 2000;
  std::uint64_t seed = 0;
  std::size_t eval_every = 0;  // steps between validations; 0 = once per epoch
};

std::string train_config_to_json(const TrainConfig& c);
TrainConfig train_config_from_json(const std::string& text);

struct TrainLogEntry {
  std::size_t step = 0;
  double loss = 0.0;                  // batch loss
  std::optional<double> val_srcc;    // overall SRCC when validated at this step
};

struct TrainResult {
  std::string best_checkpoint;  // checkpoint bytes of the selected model
  std::vector<TrainLogEntry> log;
  std::size_t best_step = 0;
  double best_val_srcc = 0.0;
  bool validated = false;  // false when there was no usable validation set
};

using TrainCallback = std::function<void(const TrainLogEntry&)>;

/// Minimises the mean over the batch of the task-averaged MSE. Batches are
/// taken in order from a per-epoch seeded shuffle. The best overall SRCC on
/// `val` selects the returned checkpoint; without validation the final
/// parameters are returned. Bit-identical for equal inputs and seeds.
TrainResult train(const std::vector<Sample>& train_set, const std::vector<Sample>& val_set,
                  const TrainConfig& config, const TrainCallback& on_step = {});
/// Same, continuing from an existing model.
TrainResult train(QualityAssessor& model, const std::vector<Sample>& train_set, const std::vector<Sample>& val_set,
                  const TrainConfig& config, const TrainCallback& on_step = {});

/// Mean of per-sample task-averaged MSE, no gradient.
double dataset_loss(const QualityAssessor& model, const std::vector<Sample>& samples);

// -------------------------------------------------------------- evaluation

struct Correlations {
  std::array<std::optional<double>, kNumDimensions> srcc, plcc;  // empty when undefined
  std::size_t n = 0;
};

/// SRCC/PLCC per dimension. Constant predictions or labels leave that
/// dimension empty instead of throwing.
Correlations correlate(const std::vector<DimensionScores>& predictions, const std::vector<DimensionScores>& labels);

std::vector<DimensionScores> predict_all(const QualityAssessor& model, const std::vector<Sample>& samples);
Correlations evaluate(const QualityAssessor& model, const std::vector<Sample>& samples);

/// Mean over folds of each defined value; a dimension undefined in every
/// fold stays empty.
Correlations average_folds(const std::vector<Correlations>& folds);

// -------------------------------------------------------------- complexity

struct LayerCount {
  std::string name;
  std::uint64_t params = 0;
  std::uint64_t macs = 0;
};

struct ComplexityReport {
  std::uint64_t params = 0;
  std::uint64_t macs = 0;
  std::optional<double> latency_ms;
  std::vector<LayerCount> layers;
};

// Per-layer multiply-accumulate counts.
std::uint64_t conv_macs(std::size_t c_in, std::size_t c_out, std::size_t kernel, std::size_t out_h, std::size_t out_w);
std::uint64_t affine_macs(std::size_t in, std::size_t out, std::size_t sites);
/// n queries against m keys of width d: QK^T plus the value mix.
std::uint64_t attention_macs(std::size_t n, std::size_t m, std::size_t d);

/// Parameters and MACs of one ViewTriplet forward, from profile shapes alone.
ComplexityReport count_params_macs(const ModelProfile& profile);

/// Table row: name & six (SRCC & PLCC) pairs & params (M) & GMACs & ms.
std::string format_table_row(const std::string& name, const Correlations& c, const ComplexityReport& r);

struct LatencyReport {
  double mean_ms = 0.0, min_ms = 0.0, max_ms = 0.0;
  std::size_t warmup = 0;
  std::vector<double> timings_ms;  // timed runs only
};

/// End-to-end single-image timing (views preprocessing plus predict) over
/// `timed` runs after `warmup` untimed runs, cycling through `images`.
LatencyReport measure_latency(const QualityAssessor& model, const std::vector<ImageRecord>& images,
                              const ViewOptions& views, std::size_t warmup = 10, std::size_t timed = 100);

}  // namespace faceqa
