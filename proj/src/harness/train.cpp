#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <random>

#include "faceqa/checkpoint.hpp"
#include "faceqa/harness.hpp"
#include "faceqa/ops.hpp"
#include "faceqa/stats.hpp"
#include "json.hpp"

namespace faceqa {

using nlohmann::json;

namespace {

Tensor label_tensor(const DimensionScores& mos) { return Tensor({kNumDimensions}, {mos.begin(), mos.end()}); }

void require_six_tasks(const ModelProfile& p) {
  if (p.num_tasks != kNumDimensions) {
    throw ConfigError("training on MOS labels needs a six-task profile, got " + std::to_string(p.num_tasks));
  }
}

std::optional<double> overall_srcc(const QualityAssessor& model, const std::vector<Sample>& samples) {
  std::vector<double> pred, label;
  for (const auto& s : samples) {
    pred.push_back(model.predict(s.views)[kOverall]);
    label.push_back(s.mos[kOverall]);
  }
  try {
    return srcc(pred, label);
  } catch (const UndefinedCorrelationError&) {
    return std::nullopt;
  }
}

}  // namespace

std::vector<Sample> load_samples(const std::vector<ManifestRow>& rows, const std::filesystem::path& base_dir,
                                 const ViewOptions& views) {
  require_labels(rows);
  std::vector<Sample> out;
  out.reserve(rows.size());
  for (const auto& row : rows) out.push_back({row.id, build_views(load_image_record(row, base_dir), views), *row.mos});
  return out;
}

std::vector<Sample> samples_from_synthetic(const std::vector<SynthSample>& synth, const ViewOptions& views) {
  std::vector<Sample> out;
  out.reserve(synth.size());
  for (const auto& s : synth) out.push_back({s.record.id, build_views(s.record, views), s.labels});
  return out;
}

std::vector<Sample> select_samples(const std::vector<Sample>& all, const std::vector<std::string>& ids) {
  std::map<std::string, const Sample*> index;
  for (const auto& s : all) index.emplace(s.id, &s);
  std::vector<Sample> out;
  std::vector<std::string> missing;
  for (const auto& id : ids) {
    auto it = index.find(id);
    if (it == index.end()) {
      missing.push_back(id);
    } else {
      out.push_back(*it->second);
    }
  }
  if (!missing.empty()) {
    std::string list;
    for (const auto& m : missing) list += (list.empty() ? "" : ", ") + m;
    throw DataError("split refers to unknown image ids: " + list);
  }
  return out;
}

std::string train_config_to_json(const TrainConfig& c) {
  json j = {{"profile", c.profile},       {"lr", c.adam.lr},       {"beta1", c.adam.beta1},
            {"beta2", c.adam.beta2},      {"epsilon", c.adam.epsilon}, {"batch_size", c.batch_size},
            {"max_steps", c.max_steps},   {"seed", c.seed},        {"eval_every", c.eval_every}};
  return j.dump(2);
}

TrainConfig train_config_from_json(const std::string& text) {
  TrainConfig c;
  try {
    const json j = json::parse(text);
    c.profile = j.value("profile", c.profile);
    c.adam.lr = j.value("lr", c.adam.lr);
    c.adam.beta1 = j.value("beta1", c.adam.beta1);
    c.adam.beta2 = j.value("beta2", c.adam.beta2);
    c.adam.epsilon = j.value("epsilon", c.adam.epsilon);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.max_steps = j.value("max_steps", c.max_steps);
    c.seed = j.value("seed", c.seed);
    c.eval_every = j.value("eval_every", c.eval_every);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad training config: ") + e.what());
  }
  if (c.batch_size == 0) throw ConfigError("batch_size must be positive");
  if (!(c.adam.lr > 0.0)) throw ConfigError("lr must be positive");
  return c;
}

TrainResult train(const std::vector<Sample>& train_set, const std::vector<Sample>& val_set,
                  const TrainConfig& config, const TrainCallback& on_step) {
  QualityAssessor model(load_profile(config.profile), config.seed);
  return train(model, train_set, val_set, config, on_step);
}

TrainResult train(QualityAssessor& model, const std::vector<Sample>& train_set, const std::vector<Sample>& val_set,
                  const TrainConfig& config, const TrainCallback& on_step) {
  require_six_tasks(model.profile());
  if (train_set.empty()) throw DataError("training set is empty");
  if (config.batch_size == 0) throw ConfigError("batch_size must be positive");

  ParameterSet& params = model.parameters();
  AdamState state;
  TrainResult result;
  double best = -2.0;
  bool have_best = false;
  const std::size_t steps_per_epoch = (train_set.size() + config.batch_size - 1) / config.batch_size;
  const std::size_t eval_every = config.eval_every ? config.eval_every : steps_per_epoch;

  std::mt19937_64 rng(config.seed);
  std::vector<std::size_t> order(train_set.size());
  std::size_t cursor = order.size();
  for (std::size_t step = 1; step <= config.max_steps; ++step) {
    params.zero_grad();
    Tensor loss;
    std::size_t count = 0;
    while (count < config.batch_size) {
      if (cursor == order.size()) {
        if (count > 0) break;  // epochs end with a partial batch
        std::iota(order.begin(), order.end(), 0);
        for (std::size_t i = order.size() - 1; i > 0; --i) std::swap(order[i], order[rng() % (i + 1)]);
        cursor = 0;
      }
      const Sample& s = train_set[order[cursor++]];
      Tensor l = quality_loss(model.forward(s.views), label_tensor(s.mos));
      loss = loss.defined() ? ops::add(loss, l) : l;
      ++count;
    }
    loss = ops::scale(loss, 1.0 / static_cast<double>(count));
    loss.backward();
    adam_step(params, state, config.adam);

    TrainLogEntry entry{step, loss.item(), std::nullopt};
    if (!val_set.empty() && (step % eval_every == 0 || step == config.max_steps)) {
      entry.val_srcc = overall_srcc(model, val_set);
      if (entry.val_srcc && *entry.val_srcc > best) {
        best = *entry.val_srcc;
        have_best = true;
        result.best_step = step;
        result.best_val_srcc = best;
        result.best_checkpoint = encode_checkpoint(model.header(), params);
      }
    }
    result.log.push_back(entry);
    if (on_step) on_step(entry);
  }
  result.validated = have_best;
  if (!have_best) {
    result.best_step = config.max_steps;
    result.best_checkpoint = encode_checkpoint(model.header(), params);
  }
  return result;
}

double dataset_loss(const QualityAssessor& model, const std::vector<Sample>& samples) {
  if (samples.empty()) throw DataError("dataset_loss on an empty set");
  NoGradGuard guard;
  double total = 0.0;
  for (const auto& s : samples) total += quality_loss(model.forward(s.views), label_tensor(s.mos)).item();
  return total / static_cast<double>(samples.size());
}

std::vector<DimensionScores> predict_all(const QualityAssessor& model, const std::vector<Sample>& samples) {
  std::vector<DimensionScores> out;
  out.reserve(samples.size());
  for (const auto& s : samples) out.push_back(model.predict(s.views));
  return out;
}

Correlations correlate(const std::vector<DimensionScores>& predictions, const std::vector<DimensionScores>& labels) {
  if (predictions.size() != labels.size()) throw DimensionError("prediction and label counts differ");
  if (predictions.empty()) throw DataError("evaluation set is empty");
  Correlations c;
  c.n = predictions.size();
  for (std::size_t d = 0; d < kNumDimensions; ++d) {
    std::vector<double> p, l;
    for (std::size_t i = 0; i < predictions.size(); ++i) {
      p.push_back(predictions[i][d]);
      l.push_back(labels[i][d]);
    }
    try {
      c.srcc[d] = srcc(p, l);
      c.plcc[d] = plcc(p, l);
    } catch (const UndefinedCorrelationError&) {
      c.srcc[d].reset();
      c.plcc[d].reset();
    }
  }
  return c;
}

Correlations evaluate(const QualityAssessor& model, const std::vector<Sample>& samples) {
  std::vector<DimensionScores> labels;
  for (const auto& s : samples) labels.push_back(s.mos);
  return correlate(predict_all(model, samples), labels);
}

Correlations average_folds(const std::vector<Correlations>& folds) {
  Correlations out;
  for (std::size_t d = 0; d < kNumDimensions; ++d) {
    double s = 0.0, p = 0.0;
    std::size_t k = 0;
    for (const auto& f : folds) {
      out.n += d == 0 ? f.n : 0;
      if (!f.srcc[d]) continue;
      s += *f.srcc[d];
      p += *f.plcc[d];
      ++k;
    }
    if (k > 0) {
      out.srcc[d] = s / static_cast<double>(k);
      out.plcc[d] = p / static_cast<double>(k);
    }
  }
  return out;
}

}  // namespace faceqa
