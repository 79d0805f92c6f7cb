#include "faceqa/service.hpp"

#include <algorithm>
#include <chrono>
#include <random>
#include <sstream>

#include "json.hpp"

namespace faceqa {

using nlohmann::json;

namespace {

AcrScores scores_from(const json& j, const std::string& what) {
  const auto v = j.get<std::vector<int>>();
  if (v.size() != kNumDimensions) throw DataError(what + " needs six scores");
  AcrScores out{};
  std::copy(v.begin(), v.end(), out.begin());
  return out;
}

GoldenItem golden_from(const json& j) {
  GoldenItem g;
  g.image_id = j.at("image_id").get<std::string>();
  g.expert = scores_from(j.at("expert"), "expert scores of " + g.image_id);
  validate_scores(g.expert);
  return g;
}

template <class T>
void shuffle_in_place(std::vector<T>& v, std::mt19937_64& rng) {
  for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[rng() % i]);
}

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

void validate_spec(const SessionSpec& spec) {
  std::set<std::string> seen;
  for (const auto& id : spec.test_image_ids)
    if (!seen.insert(id).second) throw ConfigError("session " + spec.session_id + " lists " + id + " twice");
  for (const auto& g : spec.golden)
    if (!seen.insert(g.image_id).second)
      throw ConfigError("golden item " + g.image_id + " of session " + spec.session_id + " is also listed elsewhere");
  std::set<std::string> repeats;
  for (const auto& id : spec.repeated) {
    if (!repeats.insert(id).second) throw ConfigError("session " + spec.session_id + " repeats " + id + " twice");
    if (!std::count(spec.test_image_ids.begin(), spec.test_image_ids.end(), id))
      throw ConfigError("repeated image " + id + " is not a test image of session " + spec.session_id);
  }
}

bool valid_rater_id(const std::string& id) {
  if (id.empty() || id.size() > 64) return false;
  return std::all_of(id.begin(), id.end(), [](char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-' || c == '.';
  });
}

std::vector<std::string> read_lines(const std::filesystem::path& path) {
  std::vector<std::string> out;
  std::ifstream in(path);
  std::string line;
  while (std::getline(in, line))
    if (!line.empty()) out.push_back(line);
  return out;
}

}  // namespace

// ----------------------------------------------------------------- catalog

Catalog catalog_from_json(const std::string& text, const std::filesystem::path& base_dir) {
  Catalog c;
  try {
    const json j = json::parse(text);
    for (const auto& p : j.value("pilot", json::array())) c.pilot.push_back(golden_from(p));
    for (const auto& s : j.value("sessions", json::array())) {
      SessionSpec spec;
      spec.session_id = s.at("session_id").get<std::string>();
      spec.test_image_ids = s.at("test_image_ids").get<std::vector<std::string>>();
      for (const auto& g : s.value("golden", json::array())) spec.golden.push_back(golden_from(g));
      spec.repeated = s.value("repeated", std::vector<std::string>{});
      validate_spec(spec);
      c.sessions.push_back(std::move(spec));
    }
    const json images = j.value("images", json::object());
    for (const auto& [id, path] : images.items()) {
      std::filesystem::path p = path.get<std::string>();
      c.images[id] = p.is_relative() ? base_dir / p : p;
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad catalog: ") + e.what());
  }
  std::set<std::string> ids;
  for (const auto& s : c.sessions)
    if (!ids.insert(s.session_id).second) throw ConfigError("duplicate session spec " + s.session_id);
  if (ids.count("pilot")) throw ConfigError("'pilot' is reserved and cannot name a session spec");
  return c;
}

Catalog load_catalog(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open catalog " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return catalog_from_json(ss.str(), path.parent_path());
}

std::string catalog_to_json(const Catalog& c) {
  auto golden = [](const std::vector<GoldenItem>& items) {
    json a = json::array();
    for (const auto& g : items) a.push_back({{"image_id", g.image_id}, {"expert", g.expert}});
    return a;
  };
  json j;
  j["pilot"] = golden(c.pilot);
  j["sessions"] = json::array();
  for (const auto& s : c.sessions)
    j["sessions"].push_back({{"session_id", s.session_id},
                             {"test_image_ids", s.test_image_ids},
                             {"golden", golden(s.golden)},
                             {"repeated", s.repeated}});
  j["images"] = json::object();
  for (const auto& [id, p] : c.images) j["images"][id] = p.string();
  return j.dump(2);
}

// ------------------------------------------------------------------ queues

std::string to_string(SessionMode mode) { return mode == SessionMode::pilot ? "pilot" : "formal"; }

std::string to_string(SessionStatus status) {
  switch (status) {
    case SessionStatus::active: return "active";
    case SessionStatus::passed: return "passed";
    case SessionStatus::failed: return "failed";
    case SessionStatus::discarded: return "discarded";
    case SessionStatus::complete: return "complete";
  }
  return "?";
}

SessionMode parse_mode(const std::string& text) {
  if (text == "pilot") return SessionMode::pilot;
  if (text == "formal") return SessionMode::formal;
  throw ValidationError("mode must be pilot or formal, got '" + text + "'");
}

SessionStatus parse_status(const std::string& text) {
  for (auto s : {SessionStatus::active, SessionStatus::passed, SessionStatus::failed, SessionStatus::discarded,
                 SessionStatus::complete})
    if (to_string(s) == text) return s;
  throw DataError("unknown session status '" + text + "'");
}

std::uint64_t session_seed(std::uint64_t service_seed, const std::string& rater_id, const std::string& session_id) {
  std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a
  auto mix = [&h](const std::string& s) {
    for (unsigned char c : s) h = (h ^ c) * 0x100000001b3ULL;
    h = (h ^ 0x1f) * 0x100000001b3ULL;
  };
  mix(rater_id);
  mix(session_id);
  return splitmix(h ^ splitmix(service_seed));
}

std::vector<QueueItem> build_formal_queue(const SessionSpec& spec, std::uint64_t seed, const QueueRules& rules) {
  validate_spec(spec);
  const std::size_t g = spec.golden.size(), r = spec.repeated.size(), n = spec.total_items();
  if (g + r > 0 && n < rules.protected_prefix + g + r) {
    throw ConfigError("session " + spec.session_id + " is too short for its controls");
  }
  std::mt19937_64 rng(seed);
  std::vector<std::size_t> candidates;
  for (std::size_t p = rules.protected_prefix; p < n; ++p) candidates.push_back(p);

  constexpr int kAttempts = 1000;
  for (int attempt = 0; attempt < kAttempts; ++attempt) {
    shuffle_in_place(candidates, rng);
    std::vector<QueueItem> queue(n);
    std::vector<bool> control(n, false);
    for (std::size_t i = 0; i < g; ++i) {
      queue[candidates[i]] = {spec.golden[i].image_id, RatingRole::golden};
      control[candidates[i]] = true;
    }
    for (std::size_t i = 0; i < r; ++i) {
      queue[candidates[g + i]] = {spec.repeated[i], RatingRole::repeated_second};
      control[candidates[g + i]] = true;
    }
    std::vector<bool> taken(n, false);
    bool placed = true;
    for (std::size_t i = 0; i < r && placed; ++i) {
      const std::size_t second = candidates[g + i];
      std::vector<std::size_t> eligible;
      for (std::size_t p = 0; p + rules.min_repeat_gap <= second; ++p)
        if (!control[p] && !taken[p]) eligible.push_back(p);
      if (eligible.empty()) {
        placed = false;
        break;
      }
      const std::size_t first = eligible[rng() % eligible.size()];
      queue[first] = {spec.repeated[i], RatingRole::repeated_first};
      taken[first] = true;
    }
    if (!placed) continue;
    const std::set<std::string> repeated(spec.repeated.begin(), spec.repeated.end());
    std::vector<std::string> rest;
    for (const auto& id : spec.test_image_ids)
      if (!repeated.count(id)) rest.push_back(id);
    shuffle_in_place(rest, rng);
    std::size_t k = 0;
    for (std::size_t p = 0; p < n; ++p)
      if (!control[p] && !taken[p]) queue[p] = {rest[k++], RatingRole::test};
    return queue;
  }
  throw ConfigError("no placement of repeats in session " + spec.session_id + " keeps a gap of " +
                    std::to_string(rules.min_repeat_gap));
}

std::vector<QueueItem> build_pilot_queue(const std::vector<GoldenItem>& pilot, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<QueueItem> queue;
  for (const auto& p : pilot) queue.push_back({p.image_id, RatingRole::test});
  shuffle_in_place(queue, rng);
  return queue;
}

// ------------------------------------------------------------ session state

bool SessionState::operator==(const SessionState& o) const {
  auto same_rating = [](const RatingRecord& a, const RatingRecord& b) {
    return a.rater_id == b.rater_id && a.session_id == b.session_id && a.image_id == b.image_id &&
           a.scores == b.scores && a.role == b.role && a.timestamp == b.timestamp;
  };
  return session_id == o.session_id && rater_id == o.rater_id && mode == o.mode && spec_id == o.spec_id &&
         seed == o.seed && queue == o.queue && cursor == o.cursor && status == o.status &&
         std::equal(ratings.begin(), ratings.end(), o.ratings.begin(), o.ratings.end(), same_rating) &&
         outliers == o.outliers && screened == o.screened && flagged_items == o.flagged_items &&
         last_seq == o.last_seq;
}

std::string session_state_to_json(const SessionState& s) {
  json j = {{"session_id", s.session_id}, {"rater_id", s.rater_id},     {"mode", to_string(s.mode)},
            {"spec_id", s.spec_id},       {"seed", s.seed},             {"cursor", s.cursor},
            {"status", to_string(s.status)}, {"outliers", s.outliers},  {"screened", s.screened},
            {"flagged_items", s.flagged_items}, {"last_seq", s.last_seq}};
  j["queue"] = json::array();
  for (const auto& q : s.queue) j["queue"].push_back({{"image_id", q.image_id}, {"role", to_string(q.role)}});
  j["ratings"] = json::array();
  for (const auto& r : s.ratings) j["ratings"].push_back(json::parse(rating_to_json(r)));
  return j.dump();
}

SessionState session_state_from_json(const std::string& text) {
  try {
    const json j = json::parse(text);
    SessionState s;
    s.session_id = j.at("session_id").get<std::string>();
    s.rater_id = j.at("rater_id").get<std::string>();
    s.mode = parse_mode(j.at("mode").get<std::string>());
    s.spec_id = j.at("spec_id").get<std::string>();
    s.seed = j.at("seed").get<std::uint64_t>();
    s.cursor = j.at("cursor").get<std::size_t>();
    s.status = parse_status(j.at("status").get<std::string>());
    s.outliers = j.at("outliers").get<std::size_t>();
    s.screened = j.at("screened").get<std::size_t>();
    s.flagged_items = j.at("flagged_items").get<std::vector<std::string>>();
    s.last_seq = j.at("last_seq").get<std::uint64_t>();
    for (const auto& q : j.at("queue"))
      s.queue.push_back({q.at("image_id").get<std::string>(), parse_role(q.at("role").get<std::string>())});
    for (const auto& r : j.at("ratings")) s.ratings.push_back(rating_from_json(r.dump()));
    if (s.cursor > s.queue.size() || s.ratings.size() != s.cursor) throw DataError("session " + s.session_id + " has an inconsistent cursor");
    return s;
  } catch (const json::exception& e) {
    throw DataError(std::string("bad session snapshot: ") + e.what());
  }
}

std::string event_to_json(const ServiceEvent& e) {
  json j = {{"seq", e.seq}, {"type", e.type}, {"session_id", e.session_id}, {"rater_id", e.rater_id},
            {"spec_id", e.spec_id}, {"timestamp", e.timestamp}};
  if (e.type == "create") {
    j["mode"] = to_string(e.mode);
    j["seed"] = e.seed;
  } else {
    j["image_id"] = e.image_id;
    j["role"] = to_string(e.role);
    j["scores"] = e.scores;
  }
  return j.dump();
}

ServiceEvent event_from_json(const std::string& line) {
  try {
    const json j = json::parse(line);
    ServiceEvent e;
    e.seq = j.at("seq").get<std::uint64_t>();
    e.type = j.at("type").get<std::string>();
    e.session_id = j.at("session_id").get<std::string>();
    e.rater_id = j.at("rater_id").get<std::string>();
    e.spec_id = j.at("spec_id").get<std::string>();
    e.timestamp = j.at("timestamp").get<double>();
    if (e.type == "create") {
      e.mode = parse_mode(j.at("mode").get<std::string>());
      e.seed = j.at("seed").get<std::uint64_t>();
    } else if (e.type == "rating") {
      e.image_id = j.at("image_id").get<std::string>();
      e.role = parse_role(j.at("role").get<std::string>());
      e.scores = scores_from(j.at("scores"), "rating of " + e.image_id);
    } else {
      throw DataError("unknown event type '" + e.type + "'");
    }
    return e;
  } catch (const json::exception& ex) {
    throw DataError(std::string("bad event: ") + ex.what());
  } catch (const ServiceError& ex) {
    throw DataError(std::string("bad event: ") + ex.what());
  }
}

// ----------------------------------------------------------------- service

RatingService::RatingService(Catalog catalog, ServiceOptions options)
    : catalog_(std::move(catalog)), options_(std::move(options)) {
  if (catalog_.pilot.size() != options_.screening.pilot_items) {
    throw ConfigError("catalog has " + std::to_string(catalog_.pilot.size()) + " pilot items, protocol needs " +
                      std::to_string(options_.screening.pilot_items));
  }
  for (std::size_t i = 0; i < catalog_.sessions.size(); ++i) spec_index_[catalog_.sessions[i].session_id] = i;
  if (options_.data_dir.empty()) throw ConfigError("service needs a data directory");
  std::filesystem::create_directories(options_.data_dir);
  replay();
  log_.open(log_path(), std::ios::app);
  if (!log_) throw Error("cannot open event log " + log_path().string());
}

RatingService::~RatingService() = default;

double RatingService::now() const {
  if (options_.clock) return options_.clock();
  return std::chrono::duration<double>(std::chrono::system_clock::now().time_since_epoch()).count();
}

const SessionSpec& RatingService::spec(const std::string& spec_id) const {
  auto it = spec_index_.find(spec_id);
  if (it == spec_index_.end()) throw ValidationError("unknown session spec '" + spec_id + "'");
  return catalog_.sessions[it->second];
}

std::shared_ptr<RatingService::Slot> RatingService::slot(const std::string& session_id) const {
  std::shared_lock lock(registry_mutex_);
  auto it = slots_.find(session_id);
  if (it == slots_.end()) throw NotFoundError("no session '" + session_id + "'");
  return it->second;
}

std::uint64_t RatingService::append(ServiceEvent& e) {
  std::lock_guard lock(log_mutex_);
  e.seq = seq_ + 1;
  log_ << event_to_json(e) << '\n';
  log_.flush();
  if (!log_) throw Error("event log write failed");
  return seq_ = e.seq;
}

void RatingService::apply_create(SessionState& s, const ServiceEvent& e) const {
  s.session_id = e.session_id;
  s.rater_id = e.rater_id;
  s.mode = e.mode;
  s.spec_id = e.spec_id;
  s.seed = e.seed;
  s.queue = e.mode == SessionMode::pilot ? build_pilot_queue(catalog_.pilot, e.seed)
                                         : build_formal_queue(spec(e.spec_id), e.seed, options_.queue);
  s.last_seq = e.seq;
}

std::vector<std::string> RatingService::apply_rating(SessionState& s, const ServiceEvent& e) const {
  const QueueItem& item = s.queue.at(s.cursor);
  std::vector<std::string> flags;
  if (s.mode == SessionMode::formal) {
    const SessionSpec& sp = spec(s.spec_id);
    if (item.role == RatingRole::golden) {
      ++s.screened;
      auto g = std::find_if(sp.golden.begin(), sp.golden.end(),
                            [&](const GoldenItem& x) { return x.image_id == item.image_id; });
      if (golden_is_outlier(e.scores, g->expert, options_.screening)) {
        ++s.outliers;
        s.flagged_items.push_back(item.image_id);
        flags.push_back("golden_deviation");
      }
    } else if (item.role == RatingRole::repeated_second) {
      ++s.screened;
      auto first = std::find_if(s.ratings.begin(), s.ratings.end(), [&](const RatingRecord& r) {
        return r.image_id == item.image_id && r.role == RatingRole::repeated_first;
      });
      if (repeat_is_outlier(first->scores, e.scores, options_.screening)) {
        ++s.outliers;
        s.flagged_items.push_back(item.image_id);
        flags.push_back("repeat_inconsistent");
      }
    }
  }
  s.ratings.push_back({s.rater_id, s.spec_id, item.image_id, e.scores, item.role, e.timestamp});
  ++s.cursor;
  s.last_seq = e.seq;
  if (s.cursor == s.queue.size()) {
    if (s.mode == SessionMode::formal) {
      s.status = screen_session(s.ratings, spec(s.spec_id), options_.screening).discard ? SessionStatus::discarded
                                                                                        : SessionStatus::complete;
    } else {
      std::map<std::string, AcrScores> expert;
      for (const auto& p : catalog_.pilot) expert[p.image_id] = p.expert;
      std::vector<AcrScores> t, x;
      for (const auto& r : s.ratings) {
        t.push_back(r.scores);
        x.push_back(expert.at(r.image_id));
      }
      s.status = pilot_gate(t, x, options_.screening).pass ? SessionStatus::passed : SessionStatus::failed;
    }
  }
  return flags;
}

void RatingService::note_finished(const SessionState& s) {
  if (s.status != SessionStatus::passed) return;
  std::unique_lock lock(registry_mutex_);
  raters_[s.rater_id].pilot_passed = true;
}

void RatingService::replay() {
  std::map<std::string, SessionState> states;
  if (std::filesystem::exists(snapshot_path())) {
    std::ifstream in(snapshot_path());
    std::stringstream ss;
    ss << in.rdbuf();
    try {
      for (const auto& s : json::parse(ss.str()).at("sessions")) {
        SessionState st = session_state_from_json(s.dump());
        states.emplace(st.session_id, std::move(st));
      }
    } catch (const json::exception& e) {
      throw DataError(std::string("bad snapshot: ") + e.what());
    }
  }
  for (const auto& line : read_lines(log_path())) {
    const ServiceEvent e = event_from_json(line);
    if (e.seq != seq_ + 1) throw DataError("event log skips from " + std::to_string(seq_) + " to " + std::to_string(e.seq));
    seq_ = e.seq;
    if (e.type == "create") {
      if (states.count(e.session_id)) continue;
      SessionState s;
      apply_create(s, e);
      states.emplace(e.session_id, std::move(s));
      continue;
    }
    auto it = states.find(e.session_id);
    if (it == states.end()) throw DataError("event " + std::to_string(e.seq) + " rates unknown session " + e.session_id);
    SessionState& s = it->second;
    if (e.seq <= s.last_seq) continue;
    if (s.status != SessionStatus::active || s.queue.at(s.cursor).image_id != e.image_id) {
      throw DataError("event " + std::to_string(e.seq) + " does not follow session " + e.session_id);
    }
    apply_rating(s, e);
  }
  for (auto& [id, s] : states) {
    if (s.last_seq > seq_) throw DataError("snapshot of " + id + " is ahead of the event log");
    RaterInfo& r = raters_[s.rater_id];
    if (s.status == SessionStatus::passed) r.pilot_passed = true;
    if (s.mode == SessionMode::formal) r.specs.insert(s.spec_id);
    if (id.size() > 1 && id[0] == 's') next_session_ = std::max<std::uint64_t>(next_session_, std::stoull(id.substr(1)) + 1);
    auto slot = std::make_shared<Slot>();
    slot->state = std::make_shared<const SessionState>(std::move(s));
    slots_.emplace(id, std::move(slot));
  }
}

SessionState RatingService::create_session(const std::string& rater_id, SessionMode mode,
                                           const std::optional<std::string>& spec_id) {
  if (!valid_rater_id(rater_id)) {
    throw ValidationError("rater id must be 1-64 characters of letters, digits, '.', '_' or '-'");
  }
  std::unique_lock lock(registry_mutex_);
  RaterInfo& rater = raters_[rater_id];
  ServiceEvent e;
  e.type = "create";
  e.rater_id = rater_id;
  e.mode = mode;
  e.spec_id = "pilot";
  if (mode == SessionMode::formal) {
    if (!rater.pilot_passed) throw GateRequiredError("rater " + rater_id + " has not passed the pilot");
    if (spec_id) {
      spec(*spec_id);
      if (rater.specs.count(*spec_id)) throw SequenceError("rater " + rater_id + " already opened " + *spec_id);
      e.spec_id = *spec_id;
    } else {
      auto it = std::find_if(catalog_.sessions.begin(), catalog_.sessions.end(),
                             [&](const SessionSpec& s) { return !rater.specs.count(s.session_id); });
      if (it == catalog_.sessions.end()) throw SequenceError("rater " + rater_id + " has no session left");
      e.spec_id = it->session_id;
    }
  }
  char id[32];
  std::snprintf(id, sizeof id, "s%06llu", static_cast<unsigned long long>(next_session_));
  e.session_id = id;
  e.seed = session_seed(options_.seed, rater_id, e.session_id);
  e.timestamp = now();

  SessionState s;
  apply_create(s, e);
  s.last_seq = append(e);
  ++next_session_;
  if (mode == SessionMode::formal) rater.specs.insert(e.spec_id);
  auto slot = std::make_shared<Slot>();
  slot->state = std::make_shared<const SessionState>(s);
  slots_.emplace(s.session_id, std::move(slot));
  return s;
}

NextItem RatingService::next_item(const std::string& session_id) const {
  const auto s = std::atomic_load(&slot(session_id)->state);
  NextItem out;
  out.position = s->cursor;
  out.total = s->queue.size();
  out.status = s->status;
  out.done = s->status != SessionStatus::active;
  if (!out.done) out.image_id = s->queue[s->cursor].image_id;
  return out;
}

SubmitResult RatingService::submit_rating(const std::string& session_id, const std::string& image_id,
                                          const AcrScores& scores) {
  for (int v : scores)
    if (v < 1 || v > 5) throw ValidationError("scores must be integers from 1 to 5");
  auto sl = slot(session_id);
  std::unique_lock writer(sl->writer);
  const auto current = std::atomic_load(&sl->state);
  if (current->status != SessionStatus::active) {
    throw SequenceError("session " + session_id + " is " + to_string(current->status));
  }
  const QueueItem& item = current->queue[current->cursor];
  if (item.image_id != image_id) {
    throw SequenceError("session " + session_id + " expects item " + std::to_string(current->cursor + 1) +
                        ", not " + image_id);
  }
  ServiceEvent e;
  e.type = "rating";
  e.session_id = session_id;
  e.rater_id = current->rater_id;
  e.spec_id = current->spec_id;
  e.image_id = image_id;
  e.role = item.role;
  e.scores = scores;
  e.timestamp = now();

  auto next = std::make_shared<SessionState>(*current);
  SubmitResult out;
  out.live_flags = apply_rating(*next, e);
  next->last_seq = append(e);
  out.position = next->cursor;
  out.total = next->queue.size();
  out.status = next->status;
  note_finished(*next);
  std::atomic_store(&sl->state, std::shared_ptr<const SessionState>(next));
  writer.unlock();
  if (options_.snapshot_every && e.seq % options_.snapshot_every == 0) write_snapshot();
  return out;
}

PilotGate RatingService::gate_status(const std::string& session_id) const {
  const auto s = std::atomic_load(&slot(session_id)->state);
  if (s->mode != SessionMode::pilot) throw ModeError("session " + session_id + " is not a pilot session");
  if (s->status == SessionStatus::active) {
    throw SequenceError("pilot " + session_id + " has " + std::to_string(s->cursor) + " of " +
                        std::to_string(s->queue.size()) + " items rated");
  }
  std::map<std::string, AcrScores> expert;
  for (const auto& p : catalog_.pilot) expert[p.image_id] = p.expert;
  std::vector<AcrScores> t, x;
  for (const auto& r : s->ratings) {
    t.push_back(r.scores);
    x.push_back(expert.at(r.image_id));
  }
  return pilot_gate(t, x, options_.screening);
}

SessionState RatingService::session(const std::string& session_id) const {
  return *std::atomic_load(&slot(session_id)->state);
}

std::vector<SessionState> RatingService::sessions() const {
  std::vector<std::shared_ptr<Slot>> all;
  {
    std::shared_lock lock(registry_mutex_);
    for (const auto& [id, s] : slots_) all.push_back(s);
  }
  std::vector<SessionState> out;
  for (const auto& s : all) out.push_back(*std::atomic_load(&s->state));
  return out;
}

bool RatingService::pilot_passed(const std::string& rater_id) const {
  std::shared_lock lock(registry_mutex_);
  auto it = raters_.find(rater_id);
  return it != raters_.end() && it->second.pilot_passed;
}

const std::filesystem::path* RatingService::image_path(const std::string& image_id) const {
  auto it = catalog_.images.find(image_id);
  return it == catalog_.images.end() ? nullptr : &it->second;
}

std::string RatingService::export_log() const {
  std::lock_guard lock(log_mutex_);
  std::ifstream in(log_path());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<RatingRecord> RatingService::formal_ratings() const {
  std::vector<RatingRecord> out;
  for (const auto& s : sessions())
    if (s.mode == SessionMode::formal && s.status != SessionStatus::active)
      out.insert(out.end(), s.ratings.begin(), s.ratings.end());
  return out;
}

void RatingService::write_snapshot() const {
  std::lock_guard lock(snapshot_mutex_);
  json j;
  j["sessions"] = json::array();
  for (const auto& s : sessions()) j["sessions"].push_back(json::parse(session_state_to_json(s)));
  const auto tmp = snapshot_path().string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::trunc);
    out << j.dump() << '\n';
    if (!out) throw Error("snapshot write failed");
  }
  std::filesystem::rename(tmp, snapshot_path());
}

}  // namespace faceqa
