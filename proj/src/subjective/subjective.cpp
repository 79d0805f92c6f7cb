#include "faceqa/subjective.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "faceqa/stats.hpp"
#include "json.hpp"

namespace faceqa {

using nlohmann::json;

std::string to_string(RatingRole role) {
  switch (role) {
    case RatingRole::test: return "test";
    case RatingRole::golden: return "golden";
    case RatingRole::repeated_first: return "repeated_first";
    case RatingRole::repeated_second: return "repeated_second";
  }
  return "test";
}

RatingRole parse_role(const std::string& text) {
  if (text == "test") return RatingRole::test;
  if (text == "golden") return RatingRole::golden;
  if (text == "repeated_first") return RatingRole::repeated_first;
  if (text == "repeated_second") return RatingRole::repeated_second;
  throw DataError("unknown rating role '" + text + "'");
}

void validate_scores(const AcrScores& scores) {
  for (int s : scores) {
    if (s < 1 || s > 5) throw DataError("ACR scores must be integers in [1,5], got " + std::to_string(s));
  }
}

ScreeningConfig screening_config_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("screening config is not valid JSON: ") + e.what());
  }
  ScreeningConfig c;
  try {
    c.golden_max_deviation = j.value("golden_max_deviation", c.golden_max_deviation);
    c.repeat_max_difference = j.value("repeat_max_difference", c.repeat_max_difference);
    c.session_outlier_fraction = j.value("session_outlier_fraction", c.session_outlier_fraction);
    c.rater_outlier_fraction = j.value("rater_outlier_fraction", c.rater_outlier_fraction);
    c.kurtosis_low = j.value("kurtosis_low", c.kurtosis_low);
    c.kurtosis_high = j.value("kurtosis_high", c.kurtosis_high);
    c.k_normal = j.value("k_normal", c.k_normal);
    c.k_heavy = j.value("k_heavy", c.k_heavy);
    c.pilot_srcc_threshold = j.value("pilot_srcc_threshold", c.pilot_srcc_threshold);
    c.pilot_items = j.value("pilot_items", c.pilot_items);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad screening config field: ") + e.what());
  }
  return c;
}

std::string screening_config_to_json(const ScreeningConfig& c) {
  json j = {{"golden_max_deviation", c.golden_max_deviation},
            {"repeat_max_difference", c.repeat_max_difference},
            {"session_outlier_fraction", c.session_outlier_fraction},
            {"rater_outlier_fraction", c.rater_outlier_fraction},
            {"kurtosis_low", c.kurtosis_low},
            {"kurtosis_high", c.kurtosis_high},
            {"k_normal", c.k_normal},
            {"k_heavy", c.k_heavy},
            {"pilot_srcc_threshold", c.pilot_srcc_threshold},
            {"pilot_items", c.pilot_items}};
  return j.dump(2);
}

namespace {

std::string join(const std::vector<std::string>& items) {
  std::string out;
  for (const auto& s : items) out += (out.empty() ? "" : ", ") + s;
  return out;
}

int max_abs_difference(const AcrScores& a, const AcrScores& b) {
  int m = 0;
  for (std::size_t d = 0; d < kNumDimensions; ++d) m = std::max(m, std::abs(a[d] - b[d]));
  return m;
}

bool feeds_mos(RatingRole role) { return role == RatingRole::test || role == RatingRole::repeated_first; }

}  // namespace

IncompleteSessionError::IncompleteSessionError(const std::string& session, std::vector<std::string> missing)
    : DataError("session " + session + " is incomplete; missing: " + join(missing)), missing_(std::move(missing)) {}

bool golden_is_outlier(const AcrScores& given, const AcrScores& expert, const ScreeningConfig& cfg) {
  return max_abs_difference(given, expert) > cfg.golden_max_deviation;
}

bool repeat_is_outlier(const AcrScores& first, const AcrScores& second, const ScreeningConfig& cfg) {
  return max_abs_difference(first, second) > cfg.repeat_max_difference;
}

SessionScreening screen_session(const std::vector<RatingRecord>& ratings, const SessionSpec& spec,
                                const ScreeningConfig& cfg) {
  std::map<std::pair<std::string, RatingRole>, const RatingRecord*> by_item;
  for (const auto& r : ratings) {
    if (r.session_id != spec.session_id) {
      throw DataError("rating for session " + r.session_id + " passed to screening of " + spec.session_id);
    }
    validate_scores(r.scores);
    if (!by_item.emplace(std::make_pair(r.image_id, r.role), &r).second) {
      throw DataError("duplicate " + to_string(r.role) + " rating of " + r.image_id + " in session " +
                      spec.session_id);
    }
  }
  const std::set<std::string> repeated(spec.repeated.begin(), spec.repeated.end());
  auto find = [&](const std::string& id, RatingRole role) -> const RatingRecord* {
    auto it = by_item.find({id, role});
    return it == by_item.end() ? nullptr : it->second;
  };

  std::vector<std::string> missing;
  for (const auto& id : spec.test_image_ids) {
    if (!find(id, repeated.count(id) ? RatingRole::repeated_first : RatingRole::test)) missing.push_back(id);
  }
  for (const auto& g : spec.golden)
    if (!find(g.image_id, RatingRole::golden)) missing.push_back(g.image_id);
  for (const auto& id : spec.repeated)
    if (!find(id, RatingRole::repeated_second)) missing.push_back(id + " (second showing)");
  if (!missing.empty()) throw IncompleteSessionError(spec.session_id, std::move(missing));

  SessionScreening out;
  for (const auto& g : spec.golden) {
    ++out.screened;
    if (golden_is_outlier(find(g.image_id, RatingRole::golden)->scores, g.expert, cfg)) {
      ++out.outliers;
      out.flagged_items.push_back(g.image_id);
    }
  }
  for (const auto& id : spec.repeated) {
    ++out.screened;
    const RatingRecord* first = find(id, RatingRole::repeated_first);
    if (!first) throw DataError("repeated image " + id + " is not among the session's test images");
    if (repeat_is_outlier(first->scores, find(id, RatingRole::repeated_second)->scores, cfg)) {
      ++out.outliers;
      out.flagged_items.push_back(id);
    }
  }
  out.discard = out.screened > 0 &&
                static_cast<double>(out.outliers) / static_cast<double>(out.screened) > cfg.session_outlier_fraction;
  return out;
}

CellStats cell_statistics(const std::vector<int>& values, const ScreeningConfig& cfg) {
  CellStats s;
  s.n = values.size();
  if (s.n == 0) return s;
  const double n = static_cast<double>(s.n);
  double sum = 0.0;
  for (int v : values) sum += v;
  s.mean = sum / n;
  double m2 = 0.0, m4 = 0.0;
  for (int v : values) {
    const double d = v - s.mean;
    m2 += d * d;
    m4 += d * d * d * d;
  }
  s.stddev = s.n > 1 ? std::sqrt(m2 / (n - 1.0)) : 0.0;
  m2 /= n;
  m4 /= n;
  s.kurtosis = m2 > 0.0 ? m4 / (m2 * m2) : 0.0;
  s.k = (s.kurtosis >= cfg.kurtosis_low && s.kurtosis <= cfg.kurtosis_high) ? cfg.k_normal : cfg.k_heavy;
  return s;
}

Bt500Result bt500_screen(const std::vector<RatingRecord>& ratings, const ScreeningConfig& cfg) {
  Bt500Result out;
  out.ratings = ratings;
  out.keep.assign(ratings.size(), {});

  // (image, dimension) -> indices of contributing ratings.
  std::map<std::pair<std::string, std::size_t>, std::vector<std::size_t>> cells;
  std::map<std::string, std::size_t> scores_per_rater;
  std::set<std::tuple<std::string, std::string>> seen;
  for (std::size_t i = 0; i < ratings.size(); ++i) {
    const auto& r = ratings[i];
    if (!feeds_mos(r.role)) continue;
    validate_scores(r.scores);
    if (!seen.emplace(r.rater_id, r.image_id).second) {
      throw DataError("rater " + r.rater_id + " rated " + r.image_id + " more than once");
    }
    scores_per_rater[r.rater_id] += kNumDimensions;
    for (std::size_t d = 0; d < kNumDimensions; ++d) cells[{r.image_id, d}].push_back(i);
  }

  std::set<std::pair<std::size_t, std::size_t>> flagged_slots;  // (rating index, dimension)
  std::map<std::string, std::size_t> flagged_per_rater;
  for (const auto& [key, idx] : cells) {
    const std::size_t d = key.second;
    if (idx.size() < 2) {
      ++out.unscreened_cells;
      continue;
    }
    std::vector<int> values;
    for (std::size_t i : idx) values.push_back(ratings[i].scores[d]);
    const CellStats s = cell_statistics(values, cfg);
    if (s.stddev == 0.0) continue;
    for (std::size_t i : idx) {
      if (std::abs(ratings[i].scores[d] - s.mean) > s.k * s.stddev) {
        flagged_slots.emplace(i, d);
        ++flagged_per_rater[ratings[i].rater_id];
        out.flagged.push_back({ratings[i].rater_id, key.first, d, ratings[i].scores[d]});
      }
    }
  }

  std::set<std::string> excluded;
  for (const auto& [rater, total] : scores_per_rater) {
    const auto it = flagged_per_rater.find(rater);
    const std::size_t f = it == flagged_per_rater.end() ? 0 : it->second;
    if (static_cast<double>(f) / static_cast<double>(total) > cfg.rater_outlier_fraction) excluded.insert(rater);
  }
  out.excluded_raters.assign(excluded.begin(), excluded.end());

  for (std::size_t i = 0; i < ratings.size(); ++i) {
    const auto& r = ratings[i];
    if (!feeds_mos(r.role)) continue;
    const bool rater_out = excluded.count(r.rater_id) > 0;
    for (std::size_t d = 0; d < kNumDimensions; ++d) {
      const bool flagged = flagged_slots.count({i, d}) > 0;
      out.keep[i][d] = !rater_out && !flagged;
      if (rater_out || flagged) out.removed.push_back({r.rater_id, r.image_id, d, r.scores[d]});
    }
  }
  std::sort(out.flagged.begin(), out.flagged.end());
  std::sort(out.removed.begin(), out.removed.end());
  return out;
}

MosTable compute_mos(const Bt500Result& screened) {
  std::map<std::string, std::array<std::vector<int>, kNumDimensions>> kept;
  for (std::size_t i = 0; i < screened.ratings.size(); ++i) {
    const auto& r = screened.ratings[i];
    if (!feeds_mos(r.role)) continue;
    auto& slot = kept[r.image_id];
    for (std::size_t d = 0; d < kNumDimensions; ++d)
      if (screened.keep[i][d]) slot[d].push_back(r.scores[d]);
  }
  MosTable table;
  for (const auto& [image, dims] : kept) {
    MosEntry e;
    bool empty = false;
    for (std::size_t d = 0; d < kNumDimensions; ++d) {
      const auto& v = dims[d];
      if (v.empty()) {
        empty = true;
        break;
      }
      double sum = 0.0;
      for (int x : v) sum += x;
      const double n = static_cast<double>(v.size());
      e.mos[d] = sum / n;
      e.count[d] = v.size();
      double ss = 0.0;
      for (int x : v) ss += (x - e.mos[d]) * (x - e.mos[d]);
      e.stddev[d] = v.size() > 1 ? std::sqrt(ss / (n - 1.0)) : 0.0;
    }
    if (empty) {
      table.dropped.push_back(image);
    } else {
      table.images.emplace(image, e);
    }
  }
  return table;
}

MosTable compute_mos(const std::vector<RatingRecord>& ratings) {
  Bt500Result all;
  all.ratings = ratings;
  all.keep.assign(ratings.size(), {});
  for (auto& k : all.keep) k.fill(true);
  return compute_mos(all);
}

PilotGate pilot_gate(const std::vector<AcrScores>& trainee, const std::vector<AcrScores>& expert,
                     const ScreeningConfig& cfg) {
  if (trainee.size() != expert.size() || trainee.size() != cfg.pilot_items) {
    throw DataError("pilot gate needs " + std::to_string(cfg.pilot_items) + " rated items, got " +
                    std::to_string(trainee.size()) + " trainee and " + std::to_string(expert.size()) + " expert");
  }
  PilotGate gate;
  gate.pass = true;
  for (std::size_t d = 0; d < kNumDimensions; ++d) {
    std::vector<double> t, e;
    for (std::size_t i = 0; i < trainee.size(); ++i) {
      t.push_back(trainee[i][d]);
      e.push_back(expert[i][d]);
    }
    try {
      gate.per_dimension_srcc[d] = srcc(t, e);
    } catch (const UndefinedCorrelationError&) {
      gate.per_dimension_srcc[d] = 0.0;
      gate.pass = false;
      gate.diagnostics.push_back(std::string(kDimensionNames[d]) + ": constant scores cannot be ranked");
      continue;
    }
    if (gate.per_dimension_srcc[d] < cfg.pilot_srcc_threshold) {
      gate.pass = false;
      gate.diagnostics.push_back(std::string(kDimensionNames[d]) + ": SRCC " +
                                 std::to_string(gate.per_dimension_srcc[d]) + " below threshold");
    }
  }
  return gate;
}

PipelineResult run_pipeline(const std::vector<RatingRecord>& ratings, const std::vector<SessionSpec>& sessions,
                            const ScreeningConfig& cfg) {
  std::map<std::string, const SessionSpec*> specs;
  for (const auto& s : sessions) {
    if (!specs.emplace(s.session_id, &s).second) throw DataError("duplicate session spec " + s.session_id);
  }
  std::map<std::pair<std::string, std::string>, std::vector<RatingRecord>> groups;
  for (const auto& r : ratings) {
    if (!specs.count(r.session_id)) throw DataError("rating refers to unknown session " + r.session_id);
    groups[{r.rater_id, r.session_id}].push_back(r);
  }
  PipelineResult out;
  std::vector<RatingRecord> kept;
  for (const auto& [key, group] : groups) {
    const SessionScreening s = screen_session(group, *specs.at(key.second), cfg);
    out.sessions.emplace(key, s);
    if (s.discard) {
      out.discarded.push_back(key);
    } else {
      kept.insert(kept.end(), group.begin(), group.end());
    }
  }
  out.bt500 = bt500_screen(kept, cfg);
  out.mos = compute_mos(out.bt500);
  return out;
}

RegressionFit fit_overall_regression(const std::vector<DimensionScores>& rows) {
  const std::size_t n = rows.size();
  if (n < 6) throw DataError("regression needs at least 6 images, got " + std::to_string(n));
  Eigen::MatrixXd x(n, 6);
  Eigen::VectorXd y(n);
  for (std::size_t i = 0; i < n; ++i) {
    x(i, 0) = 1.0;
    for (std::size_t d = 0; d < 5; ++d) x(i, d + 1) = rows[i][d];
    y(i) = rows[i][kOverall];
  }
  const double mean = y.mean();
  const double ss_tot = (y.array() - mean).square().sum();
  if (ss_tot == 0.0) throw NumericalError("overall", "overall MOS is constant; R^2 undefined");

  RegressionFit fit;
  fit.rows = n;
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(x);
  if (qr.rank() < 6) throw SingularDesignError("design matrix with intercept is rank deficient");
  Eigen::VectorXd beta = qr.solve(y);
  fit.intercept = beta(0);
  for (std::size_t d = 0; d < 5; ++d) fit.coefficients[d] = beta(d + 1);
  fit.r_squared = 1.0 - (y - x * beta).squaredNorm() / ss_tot;

  Eigen::MatrixXd x5 = x.rightCols(5);
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr5(x5);
  if (qr5.rank() < 5) throw SingularDesignError("design matrix is rank deficient");
  Eigen::VectorXd beta5 = qr5.solve(y);
  for (std::size_t d = 0; d < 5; ++d) fit.coefficients_no_intercept[d] = beta5(d);
  fit.r_squared_no_intercept = 1.0 - (y - x5 * beta5).squaredNorm() / ss_tot;
  return fit;
}

RegressionFit fit_overall_regression(const MosTable& table) {
  std::vector<DimensionScores> rows;
  for (const auto& [id, e] : table.images) rows.push_back(e.mos);
  return fit_overall_regression(rows);
}

std::string rating_to_json(const RatingRecord& r) {
  json j = {{"rater_id", r.rater_id}, {"session_id", r.session_id}, {"image_id", r.image_id},
            {"role", to_string(r.role)}, {"scores", r.scores},          {"timestamp", r.timestamp}};
  return j.dump();
}

RatingRecord rating_from_json(const std::string& line) {
  try {
    json j = json::parse(line);
    RatingRecord r;
    r.rater_id = j.at("rater_id").get<std::string>();
    r.session_id = j.at("session_id").get<std::string>();
    r.image_id = j.at("image_id").get<std::string>();
    r.role = parse_role(j.value("role", std::string("test")));
    auto s = j.at("scores").get<std::vector<int>>();
    if (s.size() != kNumDimensions) throw DataError("rating of " + r.image_id + " needs six scores");
    std::copy(s.begin(), s.end(), r.scores.begin());
    validate_scores(r.scores);
    r.timestamp = j.value("timestamp", 0.0);
    return r;
  } catch (const json::exception& e) {
    throw DataError(std::string("bad rating record: ") + e.what());
  }
}

std::vector<RatingRecord> read_ratings(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open ratings " + path.string());
  std::vector<RatingRecord> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    out.push_back(rating_from_json(line));
  }
  return out;
}

void write_ratings(const std::filesystem::path& path, const std::vector<RatingRecord>& ratings) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot write ratings " + path.string());
  for (const auto& r : ratings) out << rating_to_json(r) << '\n';
}

std::string mos_table_to_jsonl(const MosTable& table) {
  std::ostringstream os;
  for (const auto& [id, e] : table.images) {
    json j;
    j["image_id"] = id;
    for (std::size_t d = 0; d < kNumDimensions; ++d) {
      const std::string name(kDimensionNames[d]);
      j["mos"][name] = e.mos[d];
      j["count"][name] = e.count[d];
      j["std"][name] = e.stddev[d];
    }
    os << j.dump() << '\n';
  }
  for (const auto& id : table.dropped) os << json{{"image_id", id}, {"dropped", true}}.dump() << '\n';
  return os.str();
}

}  // namespace faceqa
