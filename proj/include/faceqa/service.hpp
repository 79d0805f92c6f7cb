#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <shared_mutex>
#include <string>
#include <vector>

#include "faceqa/subjective.hpp"

namespace faceqa {

// ------------------------------------------------------------------ errors

/// Protocol errors; `http_status()` is the status the HTTP layer answers with.
class ServiceError : public Error {
 public:
  ServiceError(int status, const std::string& what) : Error(what), status_(status) {}
  int http_status() const { return status_; }

 private:
  int status_;
};

class ValidationError : public ServiceError {
 public:
  explicit ValidationError(const std::string& what) : ServiceError(400, what) {}
};

/// Operation not available in this session's mode (gate on a formal session).
class ModeError : public ServiceError {
 public:
  explicit ModeError(const std::string& what) : ServiceError(400, what) {}
};

class NotFoundError : public ServiceError {
 public:
  explicit NotFoundError(const std::string& what) : ServiceError(404, what) {}
};

/// Out-of-order submission, or a session that is not in the needed state.
class SequenceError : public ServiceError {
 public:
  explicit SequenceError(const std::string& what) : ServiceError(409, what) {}
};

/// Formal session requested before the rater passed a pilot.
class GateRequiredError : public ServiceError {
 public:
  explicit GateRequiredError(const std::string& what) : ServiceError(423, what) {}
};

// ----------------------------------------------------------------- catalog

struct Catalog {
  std::vector<GoldenItem> pilot;                           // items with expert scores
  std::vector<SessionSpec> sessions;                       // formal session specs
  std::map<std::string, std::filesystem::path> images;     // image id -> raster file
};

/// {"pilot":[{"image_id","expert":[6]}], "sessions":[{"session_id","test_image_ids",
/// "golden":[{"image_id","expert"}],"repeated"}], "images":{id: path}}. Relative
/// image paths resolve against `base_dir`.
Catalog catalog_from_json(const std::string& text, const std::filesystem::path& base_dir = {});
Catalog load_catalog(const std::filesystem::path& path);
std::string catalog_to_json(const Catalog& catalog);

// ------------------------------------------------------------------ queues

enum class SessionMode { pilot, formal };
enum class SessionStatus { active, passed, failed, discarded, complete };
std::string to_string(SessionMode mode);
std::string to_string(SessionStatus status);
SessionMode parse_mode(const std::string& text);
SessionStatus parse_status(const std::string& text);

struct QueueItem {
  std::string image_id;
  RatingRole role = RatingRole::test;
  bool operator==(const QueueItem&) const = default;
};

struct QueueRules {
  std::size_t protected_prefix = 3;  // golden/repeat never in the first positions
  std::size_t min_repeat_gap = 20;   // second showing >= this many positions after the first
};

/// Stable per-(rater, session) seed.
std::uint64_t session_seed(std::uint64_t service_seed, const std::string& rater_id, const std::string& session_id);

/// Tests shuffled; golden items and second showings of repeats at uniformly
/// drawn positions outside the protected prefix, each repeat's first showing
/// placed at least `min_repeat_gap` earlier. ConfigError when no placement exists.
std::vector<QueueItem> build_formal_queue(const SessionSpec& spec, std::uint64_t seed, const QueueRules& rules = {});
std::vector<QueueItem> build_pilot_queue(const std::vector<GoldenItem>& pilot, std::uint64_t seed);

// ----------------------------------------------------------------- service

struct SessionState {
  std::string session_id;
  std::string rater_id;
  SessionMode mode = SessionMode::pilot;
  std::string spec_id;  // formal: catalog session spec; pilot: "pilot"
  std::uint64_t seed = 0;
  std::vector<QueueItem> queue;
  std::size_t cursor = 0;
  SessionStatus status = SessionStatus::active;
  std::vector<RatingRecord> ratings;  // accepted, in queue order
  std::size_t outliers = 0, screened = 0;
  std::vector<std::string> flagged_items;
  std::uint64_t last_seq = 0;  // log sequence number of the last applied event
  bool operator==(const SessionState& o) const;
};

std::string session_state_to_json(const SessionState& s);
SessionState session_state_from_json(const std::string& text);

struct NextItem {
  bool done = false;
  std::string image_id;  // empty when done
  std::size_t position = 0, total = 0;
  SessionStatus status = SessionStatus::active;
};

struct SubmitResult {
  std::vector<std::string> live_flags;  // "golden_deviation" / "repeat_inconsistent"
  std::size_t position = 0, total = 0;
  SessionStatus status = SessionStatus::active;
};

/// One line of the event log.
struct ServiceEvent {
  std::uint64_t seq = 0;
  std::string type;  // "create" or "rating"
  std::string session_id, rater_id, spec_id, image_id;
  SessionMode mode = SessionMode::pilot;
  std::uint64_t seed = 0;
  AcrScores scores{};
  RatingRole role = RatingRole::test;  // rating: role of the item, for auditing
  double timestamp = 0.0;
};

std::string event_to_json(const ServiceEvent& e);
ServiceEvent event_from_json(const std::string& line);

struct ServiceOptions {
  std::filesystem::path data_dir;  // events.jsonl and snapshot.json
  ScreeningConfig screening;
  QueueRules queue;
  std::uint64_t seed = 0;
  std::size_t snapshot_every = 100;  // events between snapshots; 0 disables
  std::function<double()> clock;     // seconds; defaults to the system clock
};

/// Rating sessions over an append-only event log. Construction replays the
/// snapshot (if any) and the log. Writes to one session are serialized; reads
/// see the last published state of a session without taking its writer lock.
class RatingService {
 public:
  RatingService(Catalog catalog, ServiceOptions options);
  ~RatingService();
  RatingService(const RatingService&) = delete;
  RatingService& operator=(const RatingService&) = delete;

  /// `spec_id` picks a formal spec; by default the first one this rater has
  /// not opened yet.
  SessionState create_session(const std::string& rater_id, SessionMode mode,
                              const std::optional<std::string>& spec_id = std::nullopt);
  NextItem next_item(const std::string& session_id) const;
  SubmitResult submit_rating(const std::string& session_id, const std::string& image_id, const AcrScores& scores);
  PilotGate gate_status(const std::string& session_id) const;

  SessionState session(const std::string& session_id) const;
  std::vector<SessionState> sessions() const;  // ordered by id
  bool pilot_passed(const std::string& rater_id) const;

  const std::filesystem::path* image_path(const std::string& image_id) const;
  /// The event log as written.
  std::string export_log() const;
  /// Ratings of finished formal sessions, ready for run_pipeline.
  std::vector<RatingRecord> formal_ratings() const;
  const Catalog& catalog() const { return catalog_; }

  void write_snapshot() const;

  std::filesystem::path log_path() const { return options_.data_dir / "events.jsonl"; }
  std::filesystem::path snapshot_path() const { return options_.data_dir / "snapshot.json"; }

 private:
  struct Slot {
    std::mutex writer;
    std::shared_ptr<const SessionState> state;
  };
  struct RaterInfo {
    bool pilot_passed = false;
    std::set<std::string> specs;
  };

  std::shared_ptr<Slot> slot(const std::string& session_id) const;
  std::uint64_t append(ServiceEvent& e);
  const SessionSpec& spec(const std::string& spec_id) const;
  void apply_create(SessionState& s, const ServiceEvent& e) const;
  std::vector<std::string> apply_rating(SessionState& s, const ServiceEvent& e) const;
  void note_finished(const SessionState& s);
  void replay();
  double now() const;

  Catalog catalog_;
  ServiceOptions options_;
  std::map<std::string, std::size_t> spec_index_;

  mutable std::shared_mutex registry_mutex_;
  std::map<std::string, std::shared_ptr<Slot>> slots_;
  std::map<std::string, RaterInfo> raters_;
  std::uint64_t next_session_ = 1;

  mutable std::mutex log_mutex_;
  std::ofstream log_;
  std::uint64_t seq_ = 0;
  mutable std::mutex snapshot_mutex_;
};

// -------------------------------------------------------------------- HTTP

/// JSON-over-HTTP binding of a RatingService.
class HttpFrontend {
 public:
  explicit HttpFrontend(RatingService& service);
  ~HttpFrontend();
  /// Binds (port 0 picks a free port) and serves on a background thread.
  /// Returns the bound port.
  int start(const std::string& host, int port);
  /// Binds and serves on the calling thread.
  void listen(const std::string& host, int port);
  void stop();
  int bound_port() const { return port_; }

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
  int port_ = 0;
};

}  // namespace faceqa
