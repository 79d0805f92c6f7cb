#include <algorithm>
#include <chrono>
#include <csignal>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "faceqa/checkpoint.hpp"
#include "faceqa/harness.hpp"
#include "faceqa/image_io.hpp"
#include "faceqa/service.hpp"
#include "json.hpp"

using namespace faceqa;
using nlohmann::json;

namespace {

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p);
  if (!in) throw ConfigError("cannot read " + p.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Keys of a JSON config fill options not given on the command line.
void apply_config(CLI::App& sub, const std::string& path) {
  if (path.empty()) return;
  json j;
  try {
    j = json::parse(slurp(path));
  } catch (const json::exception& e) {
    throw ConfigError("config " + path + ": " + e.what());
  }
  for (const auto& [key, value] : j.items()) {
    CLI::Option* opt = sub.get_option_no_throw("--" + key);
    if (!opt) throw ConfigError("config " + path + ": unknown key '" + key + "'");
    if (opt->count() > 0) continue;
    auto text = [](const json& v) { return v.is_string() ? v.get<std::string>() : v.dump(); };
    if (value.is_array())
      for (const auto& v : value) opt->add_result(text(v));
    else
      opt->add_result(text(value));
    opt->run_callback();
  }
}

void kv(const std::string& key, const std::string& value) { std::cout << key << ": " << value << '\n'; }
void kv(const std::string& key, double value) {
  std::ostringstream os;
  os << std::setprecision(10) << value;
  kv(key, os.str());
}
void kv_int(const std::string& key, std::uint64_t value) { kv(key, std::to_string(value)); }

// ------------------------------------------------------------------ data

struct DataArgs {
  std::string manifest;
  std::size_t synthetic = 0;
  std::uint64_t synth_seed = 7;
  std::size_t min_face = 8;

  void add(CLI::App* sub) {
    sub->add_option("--manifest", manifest, "labelled manifest (JSONL)");
    sub->add_option("--synthetic", synthetic, "use N generated images instead of a manifest");
    sub->add_option("--synth-seed", synth_seed, "generator seed for --synthetic");
    sub->add_option("--min-face", min_face, "smallest accepted face box side");
  }

  std::vector<Sample> load(std::size_t input_size) const {
    const ViewOptions views{input_size, min_face};
    if (synthetic > 0) return samples_from_synthetic(make_synthetic_set(synth_seed, synthetic), views);
    if (manifest.empty()) throw ConfigError("give --manifest or --synthetic");
    const std::filesystem::path m(manifest);
    return load_samples(read_manifest(m), m.parent_path(), views);
  }

  std::vector<std::string> ids() const {
    std::vector<std::string> out;
    if (synthetic > 0) {
      for (std::size_t i = 0; i < synthetic; ++i) out.push_back("synth" + std::to_string(i));
      return out;
    }
    if (manifest.empty()) throw ConfigError("give --manifest or --synthetic");
    for (const auto& r : read_manifest(manifest)) out.push_back(r.id);
    return out;
  }
};

struct ScreeningArgs {
  ScreeningConfig cfg;
  void add(CLI::App* sub) {
    sub->add_option("--golden-max-deviation", cfg.golden_max_deviation);
    sub->add_option("--repeat-max-difference", cfg.repeat_max_difference);
    sub->add_option("--session-outlier-fraction", cfg.session_outlier_fraction);
    sub->add_option("--rater-outlier-fraction", cfg.rater_outlier_fraction);
    sub->add_option("--kurtosis-low", cfg.kurtosis_low);
    sub->add_option("--kurtosis-high", cfg.kurtosis_high);
    sub->add_option("--k-normal", cfg.k_normal);
    sub->add_option("--k-heavy", cfg.k_heavy);
    sub->add_option("--pilot-srcc-threshold", cfg.pilot_srcc_threshold);
    sub->add_option("--pilot-items", cfg.pilot_items);
  }
};

void print_correlations(const Correlations& c) {
  kv_int("n", c.n);
  for (std::size_t d = 0; d < kNumDimensions; ++d) {
    const std::string name(kDimensionNames[d]);
    kv("srcc." + name, c.srcc[d] ? std::to_string(*c.srcc[d]) : "undefined");
    kv("plcc." + name, c.plcc[d] ? std::to_string(*c.plcc[d]) : "undefined");
  }
}

// -------------------------------------------------------------- commands

int cmd_split(const DataArgs& data, std::uint64_t seed, const std::string& out) {
  const SplitPlan plan = split_folds(data.ids(), seed);
  kv_int("images", plan.folds[0].train.size() + plan.folds[0].val.size() + plan.folds[0].test.size());
  kv_int("seed", plan.seed);
  for (std::size_t f = 0; f < plan.folds.size(); ++f) {
    const std::string p = "fold" + std::to_string(f) + ".";
    kv_int(p + "train", plan.folds[f].train.size());
    kv_int(p + "val", plan.folds[f].val.size());
    kv_int(p + "test", plan.folds[f].test.size());
  }
  if (!out.empty()) {
    std::ofstream(out) << split_to_json(plan) << '\n';
    kv("split", out);
  }
  return 0;
}

int cmd_train(const DataArgs& data, TrainConfig cfg, const std::string& split, std::size_t fold,
              const std::string& out, const std::string& log_path) {
  const ModelProfile profile = load_profile(cfg.profile);
  const auto all = data.load(profile.input_size);
  std::vector<Sample> tr = all, val;
  if (!split.empty()) {
    const SplitPlan plan = split_from_json(slurp(split));
    if (fold >= plan.folds.size()) throw ConfigError("fold " + std::to_string(fold) + " is not in the split");
    tr = select_samples(all, plan.folds[fold].train);
    val = select_samples(all, plan.folds[fold].val);
  }
  std::ofstream log;
  if (!log_path.empty()) log.open(log_path);
  const auto t0 = std::chrono::steady_clock::now();
  const TrainResult r = train(tr, val, cfg, [&](const TrainLogEntry& e) {
    if (!log) return;
    json j = {{"step", e.step}, {"loss", e.loss}};
    if (e.val_srcc) j["val_srcc"] = *e.val_srcc;
    log << j.dump() << '\n';
  });
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  write_file_bytes(out, r.best_checkpoint);
  const QualityAssessor best = QualityAssessor::from_checkpoint_bytes(r.best_checkpoint);
  kv("profile", profile.name);
  kv_int("train_images", tr.size());
  kv_int("val_images", val.size());
  kv_int("steps", r.log.size());
  kv("final_batch_loss", r.log.empty() ? 0.0 : r.log.back().loss);
  kv("train_loss", dataset_loss(best, tr));
  kv("validated", r.validated ? "true" : "false");
  kv_int("best_step", r.best_step);
  if (r.validated) kv("best_val_srcc", r.best_val_srcc);
  kv("seconds", secs);
  kv("checkpoint", out);
  return 0;
}

int cmd_eval(const DataArgs& data, const std::vector<std::string>& checkpoints, const std::string& split,
             std::optional<std::size_t> fold, bool with_latency) {
  if (checkpoints.empty()) throw ConfigError("give at least one --checkpoint");
  QualityAssessor first = QualityAssessor::load(checkpoints[0]);
  const auto all = data.load(first.profile().input_size);
  std::vector<Correlations> folds;
  if (split.empty()) {
    if (checkpoints.size() != 1) throw ConfigError("several checkpoints need a --split");
    folds.push_back(evaluate(first, all));
  } else {
    const SplitPlan plan = split_from_json(slurp(split));
    if (fold) {
      if (checkpoints.size() != 1) throw ConfigError("--fold takes one checkpoint");
      folds.push_back(evaluate(first, select_samples(all, plan.folds.at(*fold).test)));
    } else {
      if (checkpoints.size() != plan.folds.size()) {
        throw ConfigError("five-fold evaluation needs one checkpoint per fold");
      }
      for (std::size_t f = 0; f < plan.folds.size(); ++f) {
        const QualityAssessor m = f == 0 ? std::move(first) : QualityAssessor::load(checkpoints[f]);
        folds.push_back(evaluate(m, select_samples(all, plan.folds[f].test)));
      }
    }
  }
  const QualityAssessor model = QualityAssessor::load(checkpoints[0]);
  const Correlations mean = folds.size() == 1 ? folds[0] : average_folds(folds);
  kv_int("folds", folds.size());
  kv("aggregate", folds.size() == 1 ? "single" : "mean");
  print_correlations(mean);
  ComplexityReport cr = count_params_macs(model.profile());
  if (with_latency) {
    std::vector<ImageRecord> images;
    if (data.synthetic > 0) {
      for (auto& s : make_synthetic_set(data.synth_seed, std::min<std::size_t>(data.synthetic, 16)))
        images.push_back(std::move(s.record));
    } else {
      const std::filesystem::path m(data.manifest);
      for (const auto& row : read_manifest(m)) {
        images.push_back(load_image_record(row, m.parent_path()));
        if (images.size() == 16) break;
      }
    }
    cr.latency_ms = measure_latency(model, images, {model.profile().input_size, data.min_face}).mean_ms;
  }
  kv("table_row", format_table_row(model.profile().name, mean, cr));
  return 0;
}

int cmd_complexity(const std::string& profile_name, const std::string& checkpoint, bool layers, bool roundtrip) {
  std::optional<QualityAssessor> model;
  if (!checkpoint.empty()) model.emplace(QualityAssessor::load(checkpoint));
  const ModelProfile profile = model ? model->profile() : load_profile(profile_name);
  const ComplexityReport r = count_params_macs(profile);
  kv("profile", profile.name);
  kv_int("params", r.params);
  kv_int("macs", r.macs);
  kv("params_m", r.params / 1e6);
  kv("gmacs", r.macs / 1e9);
  if (layers)
    for (const auto& l : r.layers) kv("layer." + l.name, std::to_string(l.params) + " params, " + std::to_string(l.macs) + " macs");
  if (roundtrip) {
    if (!model) model.emplace(profile, 0);
    const std::string bytes = encode_checkpoint(model->header(), model->parameters());
    const QualityAssessor back = QualityAssessor::from_checkpoint_bytes(bytes);
    const bool same = encode_checkpoint(back.header(), back.parameters()) == bytes;
    kv("checkpoint_roundtrip", same ? "identical" : "DIFFERENT");
    if (!same) return 1;
  }
  return 0;
}

int cmd_latency(const DataArgs& data, const std::string& profile_name, const std::string& checkpoint,
                std::uint64_t seed, std::size_t warmup, std::size_t runs) {
  const QualityAssessor model =
      checkpoint.empty() ? QualityAssessor(load_profile(profile_name), seed) : QualityAssessor::load(checkpoint);
  std::vector<ImageRecord> images;
  if (!data.manifest.empty()) {
    const std::filesystem::path m(data.manifest);
    for (const auto& row : read_manifest(m)) images.push_back(load_image_record(row, m.parent_path()));
  } else {
    for (auto& s : make_synthetic_set(data.synth_seed, std::max<std::size_t>(1, std::min<std::size_t>(data.synthetic, 16))))
      images.push_back(std::move(s.record));
  }
  const LatencyReport r = measure_latency(model, images, {model.profile().input_size, data.min_face}, warmup, runs);
  kv("profile", model.profile().name);
  kv_int("warmup", r.warmup);
  kv_int("runs", r.timings_ms.size());
  kv("mean_ms", r.mean_ms);
  kv("min_ms", r.min_ms);
  kv("max_ms", r.max_ms);
  return 0;
}

// Demo catalog: 20 pilot images with expert scores from the labels, formal
// sessions over the rest with golden items drawn from the pilot set.
Catalog demo_catalog(const std::vector<SynthSample>& samples, std::size_t session_tests) {
  Catalog c;
  auto acr = [](const DimensionScores& s) {
    AcrScores out{};
    for (std::size_t d = 0; d < kNumDimensions; ++d) out[d] = static_cast<int>(std::lround(std::clamp(s[d], 1.0, 5.0)));
    return out;
  };
  for (const auto& s : samples) c.images[s.record.id] = "images/" + s.record.id + ".png";
  const std::size_t pilot = std::min<std::size_t>(20, samples.size());
  for (std::size_t i = 0; i < pilot; ++i) c.pilot.push_back({samples[i].record.id, acr(samples[i].labels)});
  for (std::size_t start = pilot, k = 0; start + session_tests <= samples.size(); start += session_tests, ++k) {
    SessionSpec spec;
    spec.session_id = "S" + std::to_string(k + 1);
    for (std::size_t i = start; i < start + session_tests; ++i) spec.test_image_ids.push_back(samples[i].record.id);
    for (std::size_t g = 0; g < 5 && g < pilot; ++g) spec.golden.push_back(c.pilot[(k * 5 + g) % pilot]);
    for (std::size_t r = 0; r < 5 && r < session_tests; ++r) spec.repeated.push_back(spec.test_image_ids[r]);
    c.sessions.push_back(std::move(spec));
  }
  return c;
}

int cmd_synth(const std::string& out, std::size_t count, std::uint64_t seed, const SynthOptions& options,
              bool catalog, std::size_t session_tests) {
  const auto samples = make_synthetic_set(seed, count, options);
  write_synthetic_set(out, samples);
  kv_int("images", samples.size());
  kv_int("seed", seed);
  kv("manifest", (std::filesystem::path(out) / "manifest.jsonl").string());
  if (catalog) {
    const Catalog c = demo_catalog(samples, session_tests);
    std::ofstream(std::filesystem::path(out) / "catalog.json") << catalog_to_json(c) << '\n';
    kv("catalog", (std::filesystem::path(out) / "catalog.json").string());
    kv_int("sessions", c.sessions.size());
  }
  return 0;
}

int cmd_mos(const std::string& ratings_path, const std::string& catalog_path, const ScreeningConfig& cfg,
            const std::string& out, bool regression) {
  const auto ratings = read_ratings(ratings_path);
  MosTable table;
  kv_int("ratings", ratings.size());
  if (!catalog_path.empty()) {
    const PipelineResult r = run_pipeline(ratings, load_catalog(catalog_path).sessions, cfg);
    kv_int("sessions", r.sessions.size());
    kv_int("sessions_discarded", r.discarded.size());
    for (const auto& [rater, session] : r.discarded) kv("discarded", rater + "/" + session);
    kv_int("flagged_scores", r.bt500.flagged.size());
    kv_int("removed_scores", r.bt500.removed.size());
    kv_int("excluded_raters", r.bt500.excluded_raters.size());
    for (const auto& id : r.bt500.excluded_raters) kv("excluded", id);
    kv_int("unscreened_cells", r.bt500.unscreened_cells);
    table = r.mos;
  } else {
    const Bt500Result b = bt500_screen(ratings, cfg);
    kv_int("flagged_scores", b.flagged.size());
    kv_int("removed_scores", b.removed.size());
    kv_int("excluded_raters", b.excluded_raters.size());
    for (const auto& id : b.excluded_raters) kv("excluded", id);
    kv_int("unscreened_cells", b.unscreened_cells);
    table = compute_mos(b);
  }
  kv_int("images", table.images.size());
  kv_int("dropped_images", table.dropped.size());
  if (!out.empty()) {
    std::ofstream(out) << mos_table_to_jsonl(table);
    kv("mos", out);
  }
  if (regression) {
    const RegressionFit fit = fit_overall_regression(table);
    for (std::size_t d = 0; d < 5; ++d) kv("coef." + std::string(kDimensionNames[d]), fit.coefficients[d]);
    kv("intercept", fit.intercept);
    kv("r_squared", fit.r_squared);
    for (std::size_t d = 0; d < 5; ++d)
      kv("coef_no_intercept." + std::string(kDimensionNames[d]), fit.coefficients_no_intercept[d]);
    kv("r_squared_no_intercept", fit.r_squared_no_intercept);
  }
  return 0;
}

HttpFrontend* g_frontend = nullptr;

int cmd_serve(const std::string& catalog_path, ServiceOptions options, const std::string& host, int port) {
  RatingService service(load_catalog(catalog_path), std::move(options));
  HttpFrontend http(service);
  g_frontend = &http;
  std::signal(SIGINT, [](int) {
    if (g_frontend) g_frontend->stop();
  });
  std::signal(SIGTERM, [](int) {
    if (g_frontend) g_frontend->stop();
  });
  kv("listening", host + ":" + std::to_string(port));
  kv_int("sessions", service.sessions().size());
  std::cout.flush();
  http.listen(host, port);
  g_frontend = nullptr;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-dimensional facial image quality: training, evaluation, subjective scores, rating service"};
  app.require_subcommand(1);
  std::map<CLI::App*, std::string> configs;
  auto sub = [&](const std::string& name, const std::string& help) {
    CLI::App* s = app.add_subcommand(name, help);
    s->add_option("--config", configs[s], "JSON file of option values; command-line flags win");
    return s;
  };

  // split
  DataArgs split_data;
  std::uint64_t split_seed = 0;
  std::string split_out;
  CLI::App* split = sub("split", "five-fold 7:1:2 train/val/test assignment");
  split_data.add(split);
  split->add_option("--seed", split_seed);
  split->add_option("--out", split_out, "write the split as JSON");

  // train
  DataArgs train_data;
  TrainConfig tcfg;
  std::string train_split, train_out = "model.ckpt", train_log;
  std::size_t train_fold = 0;
  CLI::App* tr = sub("train", "train a model");
  train_data.add(tr);
  tr->add_option("--profile", tcfg.profile, "builtin profile name or profile JSON path");
  tr->add_option("--lr", tcfg.adam.lr);
  tr->add_option("--beta1", tcfg.adam.beta1);
  tr->add_option("--beta2", tcfg.adam.beta2);
  tr->add_option("--epsilon", tcfg.adam.epsilon);
  tr->add_option("--batch-size", tcfg.batch_size);
  tr->add_option("--max-steps", tcfg.max_steps);
  tr->add_option("--seed", tcfg.seed);
  tr->add_option("--eval-every", tcfg.eval_every, "steps between validations (0 = once per epoch)");
  tr->add_option("--split", train_split);
  tr->add_option("--fold", train_fold);
  tr->add_option("--out", train_out, "checkpoint path");
  tr->add_option("--log", train_log, "per-step loss log (JSONL)");

  // eval
  DataArgs eval_data;
  std::vector<std::string> eval_ckpts;
  std::string eval_split;
  std::optional<std::size_t> eval_fold;
  bool eval_latency = false;
  CLI::App* ev = sub("eval", "SRCC/PLCC per dimension and a table row");
  eval_data.add(ev);
  ev->add_option("--checkpoint", eval_ckpts, "one checkpoint, or one per fold");
  ev->add_option("--split", eval_split);
  ev->add_option("--fold", eval_fold);
  ev->add_flag("--latency", eval_latency, "time the first checkpoint");

  // complexity
  std::string cx_profile = "toy", cx_ckpt;
  bool cx_layers = false, cx_roundtrip = false;
  CLI::App* cx = sub("complexity", "parameter and MAC counts");
  cx->add_option("--profile", cx_profile);
  cx->add_option("--checkpoint", cx_ckpt);
  cx->add_flag("--layers", cx_layers, "per-layer breakdown");
  cx->add_flag("--roundtrip", cx_roundtrip, "check checkpoint save/load is byte-identical");

  // latency
  DataArgs lat_data;
  lat_data.synthetic = 16;
  std::string lat_profile = "toy", lat_ckpt;
  std::uint64_t lat_seed = 0;
  std::size_t lat_warmup = 10, lat_runs = 100;
  CLI::App* lat = sub("latency", "end-to-end single-image timing");
  lat_data.add(lat);
  lat->add_option("--profile", lat_profile);
  lat->add_option("--checkpoint", lat_ckpt);
  lat->add_option("--seed", lat_seed);
  lat->add_option("--warmup", lat_warmup);
  lat->add_option("--runs", lat_runs);

  // synth-gen
  std::string synth_out = "synthetic";
  std::size_t synth_count = 500, synth_session_tests = 198;
  std::uint64_t synth_seed = 7;
  SynthOptions sopt;
  bool synth_catalog = false;
  CLI::App* sg = sub("synth-gen", "write a synthetic labelled image set");
  sg->add_option("--out", synth_out);
  sg->add_option("--count", synth_count);
  sg->add_option("--seed", synth_seed);
  sg->add_option("--size", sopt.size);
  sg->add_option("--texture", sopt.texture_amplitude);
  sg->add_option("--max-noise", sopt.max_noise_std);
  sg->add_option("--max-blur", sopt.max_blur_sigma);
  sg->add_option("--max-contrast", sopt.max_contrast_compression);
  sg->add_option("--max-swaps", sopt.max_swaps);
  std::vector<std::string> synth_graded;
  const std::vector<std::string> corruption_names = {"noise", "blur", "desaturation", "contrast", "swap"};
  sg->add_option("--graded", synth_graded, "corruptions drawn at random (default all); others stay 0")
      ->check(CLI::IsMember(corruption_names));
  sg->add_flag("--catalog", synth_catalog, "also write a rating-service catalog");
  sg->add_option("--session-tests", synth_session_tests, "test images per catalog session");

  // mos
  std::string mos_ratings, mos_catalog, mos_out;
  bool mos_regression = false;
  ScreeningArgs mos_screen;
  CLI::App* mos = sub("mos", "screen ratings and compute MOS");
  mos->add_option("--ratings", mos_ratings, "ratings JSONL");
  mos->add_option("--catalog", mos_catalog, "session specs; enables golden/repeat session screening");
  mos->add_option("--out", mos_out, "write the MOS table (JSONL)");
  mos->add_flag("--regression", mos_regression, "fit overall on the five other dimensions");
  mos_screen.add(mos);

  // serve
  std::string serve_catalog, serve_host = "127.0.0.1";
  int serve_port = 8080;
  ServiceOptions sv;
  std::string serve_dir = "ratings-data";
  ScreeningArgs serve_screen;
  CLI::App* srv = sub("serve", "run the rating-session HTTP service");
  srv->add_option("--catalog", serve_catalog);
  srv->add_option("--data-dir", serve_dir, "event log and snapshot directory");
  srv->add_option("--host", serve_host);
  srv->add_option("--port", serve_port);
  srv->add_option("--seed", sv.seed);
  srv->add_option("--snapshot-every", sv.snapshot_every);
  srv->add_option("--protected-prefix", sv.queue.protected_prefix);
  srv->add_option("--min-repeat-gap", sv.queue.min_repeat_gap);
  serve_screen.add(srv);

  try {
    app.parse(argc, argv);
    for (auto& [s, path] : configs)
      if (s->parsed()) apply_config(*s, path);
    // Required options may come from the config file.
    if (srv->parsed() && serve_catalog.empty()) throw ConfigError("serve needs --catalog");
    if (mos->parsed() && mos_ratings.empty()) throw ConfigError("mos needs --ratings");

    if (split->parsed()) return cmd_split(split_data, split_seed, split_out);
    if (tr->parsed()) return cmd_train(train_data, tcfg, train_split, train_fold, train_out, train_log);
    if (ev->parsed()) return cmd_eval(eval_data, eval_ckpts, eval_split, eval_fold, eval_latency);
    if (cx->parsed()) return cmd_complexity(cx_profile, cx_ckpt, cx_layers, cx_roundtrip);
    if (lat->parsed()) return cmd_latency(lat_data, lat_profile, lat_ckpt, lat_seed, lat_warmup, lat_runs);
    if (sg->parsed() && !synth_graded.empty()) {
      for (std::size_t d = 0; d < corruption_names.size(); ++d)
        sopt.graded[d] = std::count(synth_graded.begin(), synth_graded.end(), corruption_names[d]) > 0;
    }
    if (sg->parsed()) return cmd_synth(synth_out, synth_count, synth_seed, sopt, synth_catalog, synth_session_tests);
    if (mos->parsed()) return cmd_mos(mos_ratings, mos_catalog, mos_screen.cfg, mos_out, mos_regression);
    if (srv->parsed()) {
      sv.data_dir = serve_dir;
      sv.screening = serve_screen.cfg;
      return cmd_serve(serve_catalog, sv, serve_host, serve_port);
    }
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
