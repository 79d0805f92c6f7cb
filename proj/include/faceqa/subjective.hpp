#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "faceqa/dimensions.hpp"
#include "faceqa/errors.hpp"

namespace faceqa {

enum class RatingRole { test, golden, repeated_first, repeated_second };
std::string to_string(RatingRole role);
RatingRole parse_role(const std::string& text);

using AcrScores = std::array<int, kNumDimensions>;

struct RatingRecord {
  std::string rater_id;
  std::string session_id;
  std::string image_id;
  AcrScores scores{};
  RatingRole role = RatingRole::test;
  double timestamp = 0.0;
};

/// Throws DataError unless every score is an integer in [1, 5].
void validate_scores(const AcrScores& scores);

struct GoldenItem {
  std::string image_id;
  AcrScores expert{};
};

/// Test images (the first showing of each repeated image is one of them),
/// golden controls and the repeated images shown a second time.
struct SessionSpec {
  std::string session_id;
  std::vector<std::string> test_image_ids;
  std::vector<GoldenItem> golden;
  std::vector<std::string> repeated;

  std::size_t total_items() const { return test_image_ids.size() + golden.size() + repeated.size(); }
};

/// Every threshold of the protocol, with the paper's defaults.
struct ScreeningConfig {
  int golden_max_deviation = 1;          // golden outlier when |score - expert| exceeds this
  int repeat_max_difference = 1;         // repeat outlier when |first - second| exceeds this
  double session_outlier_fraction = 0.10;
  double rater_outlier_fraction = 0.05;  // BT.500 rater exclusion
  double kurtosis_low = 2.0;             // beta_2 in [low, high] -> k_normal
  double kurtosis_high = 4.0;
  double k_normal = 2.0;
  double k_heavy = 4.47213595499958;     // sqrt(20)
  double pilot_srcc_threshold = 0.9;
  std::size_t pilot_items = 20;
};

ScreeningConfig screening_config_from_json(const std::string& text);
std::string screening_config_to_json(const ScreeningConfig& cfg);

class IncompleteSessionError : public DataError {
 public:
  IncompleteSessionError(const std::string& session, std::vector<std::string> missing);
  const std::vector<std::string>& missing() const { return missing_; }

 private:
  std::vector<std::string> missing_;
};

struct SessionScreening {
  std::size_t outliers = 0;
  std::size_t screened = 0;
  bool discard = false;
  std::vector<std::string> flagged_items;  // golden ids and repeated ids that failed
};

/// Golden/repeat screening of one rater's complete session.
SessionScreening screen_session(const std::vector<RatingRecord>& ratings, const SessionSpec& spec,
                                const ScreeningConfig& cfg = {});

/// Live per-item rules, shared with the rating service.
bool golden_is_outlier(const AcrScores& given, const AcrScores& expert, const ScreeningConfig& cfg = {});
bool repeat_is_outlier(const AcrScores& first, const AcrScores& second, const ScreeningConfig& cfg = {});

/// One score of one rating: (rater, image, dimension).
struct ScoreRef {
  std::string rater_id;
  std::string image_id;
  std::size_t dimension = 0;
  int value = 0;
  auto operator<=>(const ScoreRef&) const = default;
};

struct CellStats {
  std::size_t n = 0;
  double mean = 0.0;
  double stddev = 0.0;    // sample (n - 1) standard deviation
  double kurtosis = 0.0;  // m4 / m2^2 from population moments; 0 when m2 = 0
  double k = 0.0;         // applied threshold multiplier
};

/// Mean, spread, kurtosis and the threshold multiplier of one cell.
CellStats cell_statistics(const std::vector<int>& values, const ScreeningConfig& cfg = {});

struct Bt500Result {
  std::vector<ScoreRef> flagged;                 // individual outlier scores, sorted
  std::vector<std::string> excluded_raters;      // sorted
  std::vector<ScoreRef> removed;                 // flagged plus every score of excluded raters, sorted
  std::vector<RatingRecord> ratings;             // input echo
  std::vector<std::array<bool, kNumDimensions>> keep;  // per input rating and dimension
  std::size_t unscreened_cells = 0;              // cells with fewer than two ratings
};

/// Single-pass BT.500 screening over the ratings that feed MOS (roles test
/// and repeated_first; other roles are ignored and never kept).
Bt500Result bt500_screen(const std::vector<RatingRecord>& ratings, const ScreeningConfig& cfg = {});

struct MosEntry {
  DimensionScores mos{};
  std::array<std::size_t, kNumDimensions> count{};
  DimensionScores stddev{};  // sample std; 0 for a single rating
};

struct MosTable {
  std::map<std::string, MosEntry> images;
  std::vector<std::string> dropped;  // images with a dimension left without ratings
};

/// Arithmetic mean of the kept scores per image and dimension (raw 1-5 scale).
MosTable compute_mos(const Bt500Result& screened);
/// Convenience: every test / repeated_first score counts.
MosTable compute_mos(const std::vector<RatingRecord>& ratings);

struct PilotGate {
  bool pass = false;
  DimensionScores per_dimension_srcc{};
  std::vector<std::string> diagnostics;
};

/// Trainee vs expert on the pilot items; pass iff every dimension's SRCC
/// reaches the threshold. A dimension that cannot be ranked fails the gate.
PilotGate pilot_gate(const std::vector<AcrScores>& trainee, const std::vector<AcrScores>& expert,
                     const ScreeningConfig& cfg = {});

struct PipelineResult {
  std::map<std::pair<std::string, std::string>, SessionScreening> sessions;  // (rater, session)
  std::vector<std::pair<std::string, std::string>> discarded;                // sorted
  Bt500Result bt500;
  MosTable mos;
};

/// Session screening, then BT.500 on the ratings of kept sessions, then MOS.
PipelineResult run_pipeline(const std::vector<RatingRecord>& ratings, const std::vector<SessionSpec>& sessions,
                            const ScreeningConfig& cfg = {});

class SingularDesignError : public Error {
 public:
  using Error::Error;
};

struct RegressionFit {
  std::array<double, 5> coefficients{};  // noise, sharpness, colorfulness, contrast, fidelity
  double intercept = 0.0;
  double r_squared = 0.0;
  std::array<double, 5> coefficients_no_intercept{};
  double r_squared_no_intercept = 0.0;  // 1 - SS_res / SS_tot, SS_tot about the mean
  std::size_t rows = 0;
};

/// Least squares of overall MOS on the five other dimensions.
RegressionFit fit_overall_regression(const std::vector<DimensionScores>& rows);
RegressionFit fit_overall_regression(const MosTable& table);

// Line-delimited JSON I/O.
std::string rating_to_json(const RatingRecord& r);
RatingRecord rating_from_json(const std::string& line);
std::vector<RatingRecord> read_ratings(const std::filesystem::path& path);
void write_ratings(const std::filesystem::path& path, const std::vector<RatingRecord>& ratings);
std::string mos_table_to_jsonl(const MosTable& table);

}  // namespace faceqa
