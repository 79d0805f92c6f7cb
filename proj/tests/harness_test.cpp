#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <set>

#include "faceqa/checkpoint.hpp"
#include "faceqa/harness.hpp"
#include "faceqa/image_io.hpp"
#include "faceqa/stats.hpp"

using namespace faceqa;

namespace {

std::vector<std::string> ids(std::size_t n) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back("img" + std::to_string(i));
  return out;
}

std::vector<Sample> synth_samples(std::size_t n, std::uint64_t seed, std::size_t input = 16) {
  return samples_from_synthetic(make_synthetic_set(seed, n, SynthOptions{32}), synthetic_view_options(input));
}

}  // namespace

// ------------------------------------------------------------------ splits

TEST(SplitTest, HundredImagesGiveExactRatios) {
  const auto plan = split_folds(ids(100), 1);
  ASSERT_EQ(plan.folds.size(), 5u);
  for (const auto& f : plan.folds) {
    EXPECT_EQ(f.train.size(), 70u);
    EXPECT_EQ(f.val.size(), 10u);
    EXPECT_EQ(f.test.size(), 20u);
  }
}

TEST(SplitTest, RoundingRuleRecount) {
  // 103: test chunks 21,21,21,20,20; val floor(10.3) = 10; train the rest.
  const std::size_t test103[5] = {21, 21, 21, 20, 20};
  // 5004: test 1001 x4, 1000; val 500.
  const std::size_t test5004[5] = {1001, 1001, 1001, 1001, 1000};
  for (std::size_t n : {100u, 103u, 5004u}) {
    const auto plan = split_folds(ids(n), 7);
    for (std::size_t f = 0; f < 5; ++f) {
      const std::size_t t = n == 100 ? 20 : n == 103 ? test103[f] : test5004[f];
      const std::size_t v = n / 10;
      EXPECT_EQ(plan.folds[f].test.size(), t) << n << " fold " << f;
      EXPECT_EQ(plan.folds[f].val.size(), v);
      EXPECT_EQ(plan.folds[f].train.size(), n - t - v);
      EXPECT_EQ(fold_sizes(n, f), (SplitSizes{n - t - v, v, t}));
    }
  }
}

TEST(SplitTest, PartitionProperties) {
  for (std::size_t n : {10u, 11u, 100u, 103u, 5004u}) {
    const auto all = ids(n);
    const auto plan = split_folds(all, n);
    std::multiset<std::string> tests;
    for (const auto& f : plan.folds) {
      std::multiset<std::string> fold(f.train.begin(), f.train.end());
      fold.insert(f.val.begin(), f.val.end());
      fold.insert(f.test.begin(), f.test.end());
      EXPECT_EQ(fold, std::multiset<std::string>(all.begin(), all.end())) << n;  // disjoint and exhaustive
      tests.insert(f.test.begin(), f.test.end());
    }
    EXPECT_EQ(tests, std::multiset<std::string>(all.begin(), all.end())) << n;
  }
}

TEST(SplitTest, DeterministicAndSeeded) {
  EXPECT_EQ(split_folds(ids(50), 3), split_folds(ids(50), 3));
  EXPECT_NE(split_folds(ids(50), 3), split_folds(ids(50), 4));
  const auto plan = split_folds(ids(50), 3);
  EXPECT_EQ(split_from_json(split_to_json(plan)), plan);
}

TEST(SplitTest, Errors) {
  EXPECT_THROW(split_folds(ids(9), 0), SplitSizeError);
  auto dup = ids(12);
  dup[3] = dup[4];
  EXPECT_THROW(split_folds(dup, 0), DataError);
  EXPECT_THROW(fold_sizes(10, 5), ContractError);
}

// -------------------------------------------------------------------- Adam

TEST(AdamTest, ZeroGradientLeavesParametersUnchanged) {
  ParameterSet ps;
  Tensor p = ps.create("p", {3});
  p.mutable_data()[0] = 1.5;
  AdamState st;
  for (int i = 0; i < 5; ++i) {
    ps.zero_grad();
    adam_step(ps, st, {});
  }
  EXPECT_EQ(std::vector<double>(p.data().begin(), p.data().end()), (std::vector<double>{1.5, 0, 0}));
}

TEST(AdamTest, HandExecutedRecurrence) {
  ParameterSet ps;
  Tensor p = ps.create("p", {1});
  p.mutable_data()[0] = 0.5;
  AdamState st;
  const AdamConfig cfg{0.1, 0.9, 0.999, 1e-8};
  // Step 1, g = 1: m = 0.1, v = 0.001, m_hat = 1, v_hat = 1.
  p.impl()->grad_buffer()[0] = 1.0;
  adam_step(ps, st, cfg);
  EXPECT_DOUBLE_EQ(p.data()[0], 0.5 - 0.1 * 1.0 / (1.0 + 1e-8));
  // Step 2, g = -2: m = 0.09 - 0.2 = -0.11, v = 0.000999 + 0.004 = 0.004999,
  // m_hat = -0.11 / 0.19, v_hat = 0.004999 / 0.001999.
  p.zero_grad();
  p.impl()->grad_buffer()[0] = -2.0;
  const double before = p.data()[0];
  adam_step(ps, st, cfg);
  const double m_hat = -0.11 / 0.19, v_hat = 0.004999 / 0.001999;
  EXPECT_NEAR(p.data()[0], before - 0.1 * m_hat / (std::sqrt(v_hat) + 1e-8), 1e-15);
  EXPECT_EQ(st.step, 2u);
}

TEST(AdamTest, QuadraticLossDecreasesAfterWarmup) {
  ParameterSet ps;
  Tensor p = ps.create("p", {4});
  const double target[4] = {1.0, -2.0, 0.5, 3.0};
  for (std::size_t i = 0; i < 4; ++i) p.mutable_data()[i] = 5.0 * (i + 1);
  AdamState st;
  std::vector<double> losses;
  for (int step = 0; step < 100; ++step) {
    ps.zero_grad();
    double loss = 0.0;
    auto& g = p.impl()->grad_buffer();
    for (std::size_t i = 0; i < 4; ++i) {
      const double d = p.data()[i] - target[i];
      loss += d * d;
      g[i] = 2.0 * d;
    }
    losses.push_back(loss);
    adam_step(ps, st, AdamConfig{0.05});
  }
  for (std::size_t i = 6; i < losses.size(); ++i) EXPECT_LT(losses[i], losses[i - 1]) << i;
}

TEST(AdamTest, NonFiniteGradientNamesParameterAndChangesNothing) {
  ParameterSet ps;
  Tensor a = ps.create("layer.a", {2});
  Tensor b = ps.create("layer.b", {2});
  a.impl()->grad_buffer()[0] = 1.0;
  b.impl()->grad_buffer()[1] = std::nan("");
  AdamState st;
  try {
    adam_step(ps, st, {});
    FAIL() << "expected NumericalError";
  } catch (const NumericalError& e) {
    EXPECT_EQ(e.where(), "layer.b");
  }
  EXPECT_EQ(a.data()[0], 0.0);
  EXPECT_EQ(st.step, 0u);
}

// ---------------------------------------------------------------- training

TEST(TrainTest, ConstantLabelsAreFitByTheHeads) {
  auto samples = synth_samples(8, 3);
  for (auto& s : samples) s.mos.fill(2.5);
  TrainConfig cfg;
  cfg.max_steps = 400;
  cfg.adam.lr = 5e-3;
  const auto res = train(samples, {}, cfg);
  const auto model = QualityAssessor::from_checkpoint_bytes(res.best_checkpoint);
  EXPECT_LT(dataset_loss(model, samples), 1e-3);
  for (const auto& p : predict_all(model, samples))
    for (double v : p) EXPECT_NEAR(v, 2.5, 0.1);
}

TEST(TrainTest, EqualSeedsGiveBitIdenticalRuns) {
  const auto samples = synth_samples(10, 4);
  TrainConfig cfg;
  cfg.max_steps = 15;
  cfg.seed = 11;
  cfg.adam.lr = 1e-3;
  const auto a = train(samples, {}, cfg), b = train(samples, {}, cfg);
  ASSERT_EQ(a.log.size(), 15u);
  for (std::size_t i = 0; i < a.log.size(); ++i) EXPECT_EQ(a.log[i].loss, b.log[i].loss);
  EXPECT_EQ(a.best_checkpoint, b.best_checkpoint);
  cfg.seed = 12;
  EXPECT_NE(train(samples, {}, cfg).best_checkpoint, a.best_checkpoint);
}

TEST(TrainTest, ValidationSelectsTheBestCheckpoint) {
  const auto samples = synth_samples(12, 5);
  const std::vector<Sample> tr(samples.begin(), samples.begin() + 8), val(samples.begin() + 8, samples.end());
  TrainConfig cfg;
  cfg.max_steps = 20;
  cfg.eval_every = 5;
  cfg.adam.lr = 1e-3;
  const auto res = train(tr, val, cfg);
  ASSERT_TRUE(res.validated);
  double best = -2.0;
  std::size_t best_step = 0;
  for (const auto& e : res.log)
    if (e.val_srcc && *e.val_srcc > best) {
      best = *e.val_srcc;
      best_step = e.step;
    }
  EXPECT_EQ(res.best_step, best_step);
  EXPECT_EQ(res.best_val_srcc, best);
  const auto model = QualityAssessor::from_checkpoint_bytes(res.best_checkpoint);
  std::vector<double> p, l;
  for (const auto& s : val) {
    p.push_back(model.predict(s.views)[kOverall]);
    l.push_back(s.mos[kOverall]);
  }
  EXPECT_EQ(srcc(p, l), best);
}

TEST(TrainTest, MissingLabelsAreListed) {
  ManifestRow a{"img_missing_1", "a.png", std::nullopt, std::nullopt, {}, std::nullopt};
  ManifestRow b{"b", "b.png", std::nullopt, std::nullopt, {}, DimensionScores{3, 3, 3, 3, 3, 3}};
  ManifestRow c{"img_missing_2", "c.png", std::nullopt, std::nullopt, {}, std::nullopt};
  try {
    load_samples({a, b, c}, ".", {});
    FAIL() << "expected DataError";
  } catch (const DataError& e) {
    const std::string what = e.what();
    EXPECT_NE(what.find("img_missing_1"), std::string::npos);
    EXPECT_NE(what.find("img_missing_2"), std::string::npos);
  }
}

TEST(TrainTest, ConfigJsonRoundTrip) {
  TrainConfig c;
  c.profile = "desk";
  c.adam.lr = 5e-4;
  c.batch_size = 8;
  c.max_steps = 123;
  c.seed = 9;
  const auto back = train_config_from_json(train_config_to_json(c));
  EXPECT_EQ(back.profile, "desk");
  EXPECT_EQ(back.adam.lr, 5e-4);
  EXPECT_EQ(back.batch_size, 8u);
  EXPECT_EQ(back.max_steps, 123u);
  EXPECT_EQ(back.seed, 9u);
  EXPECT_THROW(train_config_from_json(R"({"batch_size":0})"), ConfigError);
}

// -------------------------------------------------------------- evaluation

TEST(EvaluateTest, PredictionsEqualToLabelsArePerfect) {
  std::vector<DimensionScores> labels;
  for (int i = 0; i < 10; ++i) labels.push_back({1.0 + i * 0.3, 5.0 - i * 0.2, 2.0 + (i % 3), 1.0 + i, 4.0 - 0.1 * i, 3.0 + 0.05 * i});
  const auto c = correlate(labels, labels);
  for (std::size_t d = 0; d < kNumDimensions; ++d) {
    ASSERT_TRUE(c.srcc[d] && c.plcc[d]);
    EXPECT_NEAR(*c.srcc[d], 1.0, 1e-12);
    EXPECT_NEAR(*c.plcc[d], 1.0, 1e-12);
  }
}

TEST(EvaluateTest, ConstantPredictionsAreFlaggedPerDimension) {
  std::vector<DimensionScores> labels, preds;
  for (int i = 0; i < 6; ++i) {
    labels.push_back({1.0 + i, 1.0 + i, 1.0 + i, 1.0 + i, 1.0 + i, 1.0 + i});
    preds.push_back({1.0 + i, 3.0, 1.0 + i, 1.0 + i, 1.0 + i, 1.0 + i});
  }
  const auto c = correlate(preds, labels);
  EXPECT_FALSE(c.srcc[1].has_value());
  EXPECT_FALSE(c.plcc[1].has_value());
  EXPECT_TRUE(c.srcc[0].has_value());
  const auto row = format_table_row("toy", c, ComplexityReport{});
  EXPECT_EQ(row.substr(0, 31), "toy & 1.0000 & 1.0000 & -- & --");
}

TEST(EvaluateTest, FoldAverageIsTheMeanOfDefinedValues) {
  Correlations a, b;
  a.srcc[0] = 0.8;
  a.plcc[0] = 0.6;
  b.srcc[0] = 0.9;
  b.plcc[0] = 0.7;
  a.srcc[1] = 0.5;
  a.plcc[1] = 0.5;
  a.n = 3;
  b.n = 4;
  const auto m = average_folds({a, b});
  EXPECT_DOUBLE_EQ(*m.srcc[0], 0.85);
  EXPECT_DOUBLE_EQ(*m.plcc[0], 0.65);
  EXPECT_DOUBLE_EQ(*m.srcc[1], 0.5);
  EXPECT_FALSE(m.srcc[2].has_value());
  EXPECT_EQ(m.n, 7u);
}

// -------------------------------------------------------------- complexity

TEST(ComplexityTest, LayerFixturesMatchHandAudits) {
  EXPECT_EQ(conv_macs(2, 3, 1, 2, 2), 24u);       // 3*2*1*4
  EXPECT_EQ(conv_macs(3, 4, 3, 8, 8), 6912u);     // 4*3*9*64
  EXPECT_EQ(conv_macs(1, 1, 3, 1, 1), 9u);
  EXPECT_EQ(conv_macs(2, 2, 5, 3, 3), 900u);      // 2*2*25*9
  EXPECT_EQ(conv_macs(0, 5, 3, 4, 4), 0u);        // no input channels
  EXPECT_EQ(affine_macs(8, 4, 1), 32u);
  EXPECT_EQ(affine_macs(8, 4, 16), 512u);
  EXPECT_EQ(attention_macs(3, 3, 4), 72u);        // 36 for QK^T, 36 for the mix
  EXPECT_EQ(attention_macs(6, 16, 8), 1536u);
  EXPECT_EQ(attention_macs(1, 1, 1), 2u);
}

TEST(ComplexityTest, EmptyReportIsZero) {
  const ComplexityReport r;
  EXPECT_EQ(r.params, 0u);
  EXPECT_EQ(r.macs, 0u);
  EXPECT_TRUE(r.layers.empty());
}

TEST(ComplexityTest, ToyProfileHandAudit) {
  ModelProfile p = builtin_profile("toy");
  p.backbone.channels = {4, 6};
  p.head_hidden = 8;
  // 16x16 input, stages 8x8 (4 ch) and 4x4 (6 ch); D_o 8, D_l 4, 6 tasks, W 8.
  // backbone: 3 views * (4*3*9*64 + 6*4*9*16) = 3 * (6912 + 3456)
  // scale proj on the 4x4 grid: 3 * (4*8*16 + 6*8*16); fuse: 3 * 16*8*16
  // lrp 8*4*3, view attention 2*3*3*4, hrp 4*8*3
  // two passes of (2*6*6*8 + 2*6*16*8); heads 6 * (8*8 + 8*8 + 8)
  const std::uint64_t macs = 3 * (6912 + 3456) + 3 * (512 + 768) + 3 * 2048 + 96 + 72 + 96 + 2 * (576 + 1536) +
                             6 * (64 + 64 + 8);
  const std::uint64_t params = (4 * 27 + 4) + (6 * 36 + 6) + (4 * 8 + 8) + (6 * 8 + 8) + (16 * 8 + 8) + 32 + 32 +
                               48 + 6 * (64 + 8 + 64 + 8 + 8 + 1);
  const auto r = count_params_macs(p);
  EXPECT_EQ(r.macs, macs);
  EXPECT_EQ(r.params, params);
  std::uint64_t sum = 0;
  for (const auto& l : r.layers) sum += l.macs;
  EXPECT_EQ(sum, r.macs);
}

TEST(ComplexityTest, ParamCountMatchesInstantiatedModels) {
  for (const auto& name : builtin_profile_names()) {
    const ModelProfile p = builtin_profile(name);
    QualityAssessor m(p, 0);
    EXPECT_EQ(count_params_macs(p).params, m.parameters().element_count()) << name;
  }
}

TEST(LatencyTest, BookkeepingAndMeanBound) {
  QualityAssessor m(builtin_profile("toy"), 0);
  std::vector<ImageRecord> images;
  for (const auto& s : make_synthetic_set(1, 3, SynthOptions{32})) images.push_back(s.record);
  const auto r = measure_latency(m, images, synthetic_view_options(16));
  EXPECT_EQ(r.warmup, 10u);
  EXPECT_EQ(r.timings_ms.size(), 100u);
  EXPECT_GE(r.mean_ms, r.min_ms);
  EXPECT_LE(r.mean_ms, r.max_ms);
  EXPECT_GT(r.min_ms, 0.0);
}

// -------------------------------------------------------------- synthetic

TEST(SynthTest, LabelsAreMonotoneInEveryMagnitude) {
  EXPECT_EQ(labels_from_corruption({}), (DimensionScores{5, 5, 5, 5, 5, 5}));
  const auto worst = labels_from_corruption({1, 1, 1, 1, 1});
  for (double v : worst) EXPECT_NEAR(v, 1.0, 1e-12);
  for (std::size_t d = 0; d < 5; ++d) {
    double prev_dim = 6.0, prev_overall = 6.0;
    for (double m = 0.0; m <= 1.0; m += 0.125) {
      double mags[5] = {0.3, 0.3, 0.3, 0.3, 0.3};
      mags[d] = m;
      const auto l = labels_from_corruption({mags[0], mags[1], mags[2], mags[3], mags[4]});
      EXPECT_LT(l[d], prev_dim);
      EXPECT_LT(l[kOverall], prev_overall);
      prev_dim = l[d];
      prev_overall = l[kOverall];
    }
  }
}

TEST(SynthTest, DeterministicValidRecords) {
  const auto a = make_synthetic_set(5, 4), b = make_synthetic_set(5, 4);
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(std::vector<double>(a[i].record.pixels.data().begin(), a[i].record.pixels.data().end()),
              std::vector<double>(b[i].record.pixels.data().begin(), b[i].record.pixels.data().end()));
    EXPECT_NO_THROW(validate_record(a[i].record));
    EXPECT_NO_THROW(build_views(a[i].record, synthetic_view_options(16)));
    EXPECT_EQ(a[i].labels, labels_from_corruption(a[i].corruption));
  }
}

TEST(SynthTest, UngradedCorruptionsStayAtZero) {
  SynthOptions only{32};
  only.graded = {true, true, false, false, false};
  const auto all = make_synthetic_set(5, 20, SynthOptions{32}), part = make_synthetic_set(5, 20, only);
  for (std::size_t i = 0; i < all.size(); ++i) {
    EXPECT_EQ(part[i].corruption.noise, all[i].corruption.noise);
    EXPECT_EQ(part[i].corruption.blur, all[i].corruption.blur);
    EXPECT_EQ(part[i].corruption.desaturation, 0.0);
    EXPECT_EQ(part[i].corruption.contrast, 0.0);
    EXPECT_EQ(part[i].corruption.swap, 0.0);
    EXPECT_EQ(part[i].labels[2], 5.0);
  }
}

TEST(SynthTest, NoiseAndBlurMoveHighFrequencyEnergy) {
  // Mean squared horizontal difference of the green channel.
  auto energy = [](const Corruption& c) {
    const auto s = render_synthetic(3, 0, c);
    const auto v = s.record.pixels.data();
    const std::size_t n = 64;
    double e = 0.0;
    for (std::size_t y = 0; y < n; ++y)
      for (std::size_t x = 1; x < n; ++x) {
        const double d = v[(n + y) * n + x] - v[(n + y) * n + x - 1];
        e += d * d;
      }
    return e;
  };
  EXPECT_LT(energy({}), energy({0.5, 0, 0, 0, 0}));
  EXPECT_LT(energy({0.5, 0, 0, 0, 0}), energy({1.0, 0, 0, 0, 0}));
  EXPECT_GT(energy({}), energy({0, 0.5, 0, 0, 0}));
  EXPECT_GT(energy({0, 0.5, 0, 0, 0}), energy({0, 1.0, 0, 0, 0}));
}

TEST(SynthTest, WrittenSetReloadsToTheSameViews) {
  const auto dir = std::filesystem::temp_directory_path() / "faceqa_synth_test";
  std::filesystem::remove_all(dir);
  const auto set = make_synthetic_set(2, 3, SynthOptions{32});
  write_synthetic_set(dir, set);
  const auto rows = read_manifest(dir / "manifest.jsonl");
  ASSERT_EQ(rows.size(), 3u);
  const auto loaded = load_samples(rows, dir, synthetic_view_options(16));
  const auto direct = samples_from_synthetic(set, synthetic_view_options(16));
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(loaded[i].id, direct[i].id);
    for (std::size_t d = 0; d < kNumDimensions; ++d) EXPECT_NEAR(loaded[i].mos[d], direct[i].mos[d], 1e-12);
    const auto a = loaded[i].views.eyes_mouth.data(), b = direct[i].views.eyes_mouth.data();
    ASSERT_EQ(a.size(), b.size());
    for (std::size_t k = 0; k < a.size(); ++k) EXPECT_EQ(a[k], b[k]);
  }
  std::filesystem::remove_all(dir);
}
