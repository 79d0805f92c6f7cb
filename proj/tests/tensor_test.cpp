#include <gtest/gtest.h>

#include <cmath>
#include <functional>
#include <limits>
#include <random>

#include "faceqa/checkpoint.hpp"
#include "faceqa/gradcheck.hpp"
#include "faceqa/ops.hpp"
#include "faceqa/parameters.hpp"
#include "oracles.hpp"

using namespace faceqa;

namespace {

std::vector<double> vec(const Tensor& t) { return {t.data().begin(), t.data().end()}; }

}  // namespace

TEST(TensorTest, ShapeMustMatchData) {
  EXPECT_THROW(Tensor(Shape{2, 3}, std::vector<double>(5)), DimensionError);
  EXPECT_THROW(Tensor(Shape{0, 3}), DimensionError);
  Tensor t(Shape{2, 3}, 1.5);
  EXPECT_EQ(t.numel(), 6u);
  EXPECT_FALSE(t.has_grad());
}

TEST(AttentionTest, SingleKeyBroadcastsValue) {
  std::mt19937_64 rng(1);
  Tensor q(Shape{4, 6}, oracle::random_vec(rng, 24));
  Tensor k(Shape{1, 6}, oracle::random_vec(rng, 6));
  Tensor v(Shape{1, 6}, oracle::random_vec(rng, 6));
  for (std::size_t heads : {1u, 2u, 3u}) {
    Tensor out = ops::scaled_dot_attention(q, k, v, heads);
    ASSERT_EQ(out.shape(), (Shape{4, 6}));
    for (std::size_t i = 0; i < 4; ++i)
      for (std::size_t j = 0; j < 6; ++j) EXPECT_DOUBLE_EQ(out.data()[i * 6 + j], v.data()[j]);
  }
}

TEST(AttentionTest, EqualLogitsGiveColumnMean) {
  std::mt19937_64 rng(2);
  Tensor q(Shape{2, 4}, 0.0);  // zero query -> every logit is 0
  Tensor k(Shape{5, 4}, oracle::random_vec(rng, 20));
  Tensor v(Shape{5, 4}, oracle::random_vec(rng, 20));
  Tensor out = ops::scaled_dot_attention(q, k, v, 2);
  for (std::size_t c = 0; c < 4; ++c) {
    double mean = 0.0;
    for (std::size_t j = 0; j < 5; ++j) mean += v.data()[j * 4 + c] / 5.0;
    EXPECT_NEAR(out.data()[c], mean, 1e-15);
    EXPECT_NEAR(out.data()[4 + c], mean, 1e-15);
  }
}

TEST(AttentionTest, SmallIntegerInstanceMatchesBruteForce) {
  std::mt19937_64 rng(3);
  auto qv = oracle::random_ints(rng, 4, -2, 2);
  auto kv = oracle::random_ints(rng, 6, -2, 2);
  auto vv = oracle::random_ints(rng, 6, -2, 2);
  Tensor out = ops::scaled_dot_attention(Tensor({2, 2}, qv), Tensor({3, 2}, kv), Tensor({3, 2}, vv), 1);
  EXPECT_LE(oracle::max_abs_diff(vec(out), oracle::attention(qv, kv, vv, 2, 3, 2, 1)), 1e-12);
}

TEST(AttentionTest, RandomInstancesMatchBruteForce) {
  std::mt19937_64 rng(4);
  std::uniform_int_distribution<std::size_t> dim(1, 6);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = dim(rng), m = dim(rng), d = dim(rng);
    std::vector<std::size_t> divisors;
    for (std::size_t h = 1; h <= d; ++h)
      if (d % h == 0) divisors.push_back(h);
    const std::size_t heads = divisors[trial % divisors.size()];
    auto qv = oracle::random_vec(rng, n * d, -2, 2);
    auto kv = oracle::random_vec(rng, m * d, -2, 2);
    auto vv = oracle::random_vec(rng, m * d, -2, 2);
    Tensor out = ops::scaled_dot_attention(Tensor({n, d}, qv), Tensor({m, d}, kv), Tensor({m, d}, vv), heads);
    ASSERT_LE(oracle::max_abs_diff(vec(out), oracle::attention(qv, kv, vv, n, m, d, heads)), 1e-12)
        << "n=" << n << " m=" << m << " d=" << d << " heads=" << heads;
  }
}

TEST(AttentionTest, RejectsBadShapesAndHeads) {
  Tensor q(Shape{2, 4}), k(Shape{3, 4}), v(Shape{3, 4});
  EXPECT_THROW(ops::scaled_dot_attention(q, k, v, 3), ConfigError);
  EXPECT_THROW(ops::scaled_dot_attention(q, k, v, 0), ConfigError);
  EXPECT_THROW(ops::scaled_dot_attention(q, Tensor(Shape{3, 5}), v, 1), DimensionError);
  EXPECT_THROW(ops::scaled_dot_attention(q, k, Tensor(Shape{2, 4}), 1), DimensionError);
}

TEST(SoftmaxTest, RowsSumToOneAndIgnoreShift) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    auto a = oracle::random_vec(rng, 12, -30, 30);
    Tensor s = ops::softmax_rows(Tensor({3, 4}, a));
    for (std::size_t i = 0; i < 3; ++i) {
      double total = 0.0;
      for (std::size_t j = 0; j < 4; ++j) total += s.data()[i * 4 + j];
      EXPECT_NEAR(total, 1.0, 1e-12);
    }
    auto shifted = a;
    for (auto& x : shifted) x += 123.25;
    Tensor s2 = ops::softmax_rows(Tensor({3, 4}, shifted));
    EXPECT_LE(oracle::max_abs_diff(vec(s), vec(s2)), 1e-12);
    EXPECT_LE(oracle::max_abs_diff(vec(s), oracle::softmax_rows(a, 3, 4)), 1e-12);
  }
  // Large logits must not overflow.
  Tensor big = ops::softmax_rows(Tensor({1, 2}, {1000.0, 1000.0}));
  EXPECT_DOUBLE_EQ(big.data()[0], 0.5);
}

TEST(GapTest, ConstantAndHandValues) {
  Tensor c(Shape{3, 2, 5}, 1.75);
  Tensor pooled = ops::global_average_pool(c);
  for (double v : pooled.data()) EXPECT_DOUBLE_EQ(v, 1.75);
  Tensor f({1, 2, 2}, {1, 2, 3, 4});
  EXPECT_DOUBLE_EQ(ops::global_average_pool(f).item(), 2.5);
}

TEST(GapTest, RandomMatchesLoopOracle) {
  std::mt19937_64 rng(6);
  auto x = oracle::random_vec(rng, 60);
  Tensor out = ops::global_average_pool(Tensor({3, 4, 5}, x));
  EXPECT_LE(oracle::max_abs_diff(vec(out), oracle::gap(x, 3, 4, 5)), 1e-12);
  EXPECT_THROW(ops::global_average_pool(Tensor(Shape{3, 4})), DimensionError);
}

TEST(Conv2dTest, IdentityPointwiseConv) {
  std::mt19937_64 rng(7);
  Tensor x({3, 4, 5}, oracle::random_vec(rng, 60));
  Tensor w(Shape{3, 3, 1, 1}, 0.0);
  for (std::size_t c = 0; c < 3; ++c) w.mutable_data()[c * 3 + c] = 1.0;
  EXPECT_EQ(vec(ops::conv2d(x, w, 1, 0)), vec(x));
}

TEST(Conv2dTest, ZeroInputGivesZeroOutput) {
  std::mt19937_64 rng(8);
  Tensor w({2, 3, 3, 3}, oracle::random_vec(rng, 54));
  Tensor out = ops::conv2d(Tensor(Shape{3, 5, 5}), w, 2, 1);
  for (double v : out.data()) EXPECT_EQ(v, 0.0);
}

TEST(Conv2dTest, SeededInstanceMatchesLoopOracle) {
  std::mt19937_64 rng(9);
  auto x = oracle::random_vec(rng, 2 * 4 * 4);
  auto w = oracle::random_vec(rng, 3 * 2 * 9);
  std::size_t oh = 0, ow = 0;
  auto expected = oracle::conv2d(x, 2, 4, 4, w, 3, 3, 1, 0, nullptr, oh, ow);
  Tensor out = ops::conv2d(Tensor({2, 4, 4}, x), Tensor({3, 2, 3, 3}, w), 1, 0);
  ASSERT_EQ(out.shape(), (Shape{3, 2, 2}));
  EXPECT_LE(oracle::max_abs_diff(vec(out), expected), 1e-10);
}

TEST(Conv2dTest, PropertySweepMatchesLoopOracle) {
  std::mt19937_64 rng(10);
  std::uniform_int_distribution<std::size_t> dim(1, 6);
  int checked = 0;
  for (int trial = 0; trial < 400; ++trial) {
    const std::size_t k = trial % 2 ? 3 : 1;
    const std::size_t stride = (trial / 2) % 2 ? 2 : 1;
    const std::size_t pad = (trial / 4) % 2;
    const std::size_t cin = dim(rng), cout = dim(rng), h = dim(rng), w = dim(rng);
    if (h + 2 * pad < k || w + 2 * pad < k) {
      EXPECT_THROW(ops::conv2d(Tensor(Shape{cin, h, w}), Tensor(Shape{cout, cin, k, k}), stride, pad),
                   DimensionError);
      continue;
    }
    auto x = oracle::random_vec(rng, cin * h * w);
    auto wt = oracle::random_vec(rng, cout * cin * k * k);
    auto b = oracle::random_vec(rng, cout);
    std::size_t oh = 0, ow = 0;
    auto expected = oracle::conv2d(x, cin, h, w, wt, cout, k, stride, pad, &b, oh, ow);
    Tensor out = ops::conv2d(Tensor({cin, h, w}, x), Tensor({cout, cin, k, k}, wt), Tensor({cout}, b),
                             stride, pad);
    ASSERT_EQ(out.shape(), (Shape{cout, oh, ow}));
    ASSERT_LE(oracle::max_abs_diff(vec(out), expected), 1e-10);
    ++checked;
  }
  EXPECT_GT(checked, 300);
}

TEST(BackwardTest, SumGivesOnes) {
  Tensor p({2, 3}, {1, -2, 3, 4, 5, 6});
  p.set_requires_grad(true);
  ops::sum(p).backward();
  for (double g : p.grad()) EXPECT_EQ(g, 1.0);
}

TEST(BackwardTest, ZeroTimesParamGivesZeros) {
  Tensor p({4}, {1, 2, 3, 4});
  p.set_requires_grad(true);
  ops::sum(ops::scale(p, 0.0)).backward();
  for (double g : p.grad()) EXPECT_EQ(g, 0.0);
}

TEST(BackwardTest, GradientsAccumulateAcrossUses) {
  Tensor p({3}, {1, 2, 3});
  p.set_requires_grad(true);
  ops::add(ops::sum(p), ops::sum(ops::mul(p, p))).backward();
  EXPECT_EQ(p.grad(), (std::vector<double>{3, 5, 7}));
  // A second backward without zeroing adds on top.
  ops::sum(p).backward();
  EXPECT_EQ(p.grad(), (std::vector<double>{4, 6, 8}));
  p.zero_grad();
  EXPECT_FALSE(p.has_grad());
}

TEST(BackwardTest, NonScalarIsContractError) {
  Tensor p({3}, {1, 2, 3});
  p.set_requires_grad(true);
  EXPECT_THROW(ops::scale(p, 2.0).backward(), ContractError);
}

TEST(BackwardTest, TwoLayerNetworkMatchesFiniteDifferences) {
  std::mt19937_64 rng(11);
  Tensor w1({4, 5}, oracle::random_vec(rng, 20));
  Tensor b1({5}, oracle::random_vec(rng, 5));
  Tensor w2({5, 2}, oracle::random_vec(rng, 10));
  Tensor x({6, 4}, oracle::random_vec(rng, 24));
  Tensor y({6, 2}, oracle::random_vec(rng, 12));
  for (Tensor* t : {&w1, &b1, &w2}) t->set_requires_grad(true);
  auto forward = [&] {
    return ops::mse_loss(ops::matmul(ops::gelu(ops::add_row_bias(ops::matmul(x, w1), b1)), w2), y);
  };
  forward().backward();

  // Central differences taken directly here, independent of check_gradients.
  const double eps = 1e-5;
  for (Tensor* t : {&w1, &b1, &w2}) {
    auto analytic = t->grad();
    auto values = t->mutable_data();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double orig = values[i];
      values[i] = orig + eps;
      const double up = forward().item();
      values[i] = orig - eps;
      const double down = forward().item();
      values[i] = orig;
      const double numeric = (up - down) / (2 * eps);
      const double rel = std::abs(analytic[i] - numeric) /
                         std::max({std::abs(analytic[i]), std::abs(numeric), 1e-8});
      EXPECT_LE(rel, 1e-4) << "element " << i;
    }
  }
}

TEST(GradCheckTest, LinearMapIsExact) {
  std::mt19937_64 rng(12);
  ParameterSet params;
  Tensor w = params.create("lin.weight", {3, 4});
  InitRng(1).fill_normal(w, 1.0);
  Tensor x({2, 3}, oracle::random_vec(rng, 6));
  auto report = check_gradients([&] { return ops::sum(ops::matmul(x, w)); }, params.items(), 1e-5);
  EXPECT_LE(report.max_relative_error, 1e-8);
  EXPECT_EQ(report.elements_checked, 12u);
}

TEST(GradCheckTest, SoftmaxCrossEntropyOfLogits) {
  std::mt19937_64 rng(13);
  ParameterSet params;
  Tensor logits = params.create("logits", {4, 5});
  std::copy_n(oracle::random_vec(rng, 20, -2, 2).begin(), 20, logits.mutable_data().begin());
  auto targets = oracle::softmax_rows(oracle::random_vec(rng, 20), 4, 5);
  Tensor target({4, 5}, targets);
  auto loss_fn = [&] {
    return ops::scale(ops::sum(ops::mul(target, ops::log(ops::softmax_rows(logits)))), -1.0);
  };
  auto report = check_gradients(loss_fn, params.items(), 1e-5);
  EXPECT_LE(report.max_relative_error, 1e-4);
}

// Every differentiable kernel, each contracted with a fixed random probe so
// that all output elements contribute to the scalar.
TEST(GradCheckTest, EveryKernel) {
  struct Case {
    const char* name;
    std::vector<Shape> inputs;
    std::function<Tensor(const std::vector<Tensor>&)> fn;
  };
  using V = std::vector<Tensor>;
  const std::vector<Case> cases = {
      {"add", {{2, 3}, {2, 3}}, [](const V& x) { return ops::add(x[0], x[1]); }},
      {"sub", {{2, 3}, {2, 3}}, [](const V& x) { return ops::sub(x[0], x[1]); }},
      {"mul", {{2, 3}, {2, 3}}, [](const V& x) { return ops::mul(x[0], x[1]); }},
      {"scale", {{4}}, [](const V& x) { return ops::scale(x[0], -1.7); }},
      {"add_scalar", {{4}}, [](const V& x) { return ops::add_scalar(x[0], 0.3); }},
      {"log", {{5}}, [](const V& x) { return ops::log(ops::add_scalar(ops::mul(x[0], x[0]), 0.5)); }},
      {"add_row_bias", {{3, 4}, {4}}, [](const V& x) { return ops::add_row_bias(x[0], x[1]); }},
      {"sum", {{2, 2}}, [](const V& x) { return ops::sum(x[0]); }},
      {"mean", {{2, 3}}, [](const V& x) { return ops::mean(x[0]); }},
      {"matmul", {{3, 4}, {4, 2}}, [](const V& x) { return ops::matmul(x[0], x[1]); }},
      {"transpose", {{3, 5}}, [](const V& x) { return ops::transpose(x[0]); }},
      {"reshape", {{2, 6}}, [](const V& x) { return ops::reshape(x[0], {3, 4}); }},
      {"slice_cols", {{3, 6}}, [](const V& x) { return ops::slice_cols(x[0], 2, 3); }},
      {"concat_cols", {{3, 2}, {3, 3}}, [](const V& x) { return ops::concat_cols({x[0], x[1]}); }},
      {"row", {{4, 3}}, [](const V& x) { return ops::row(x[0], 2); }},
      {"stack_rows", {{3}, {1, 3}}, [](const V& x) { return ops::stack_rows({x[0], x[1], x[0]}); }},
      {"concat_channels", {{2, 3, 3}, {1, 3, 3}}, [](const V& x) { return ops::concat_channels({x[0], x[1]}); }},
      {"softmax_rows", {{3, 5}}, [](const V& x) { return ops::softmax_rows(x[0]); }},
      {"gelu", {{7}}, [](const V& x) { return ops::gelu(ops::scale(x[0], 3.0)); }},
      {"conv2d_k3_s2_p1", {{2, 5, 6}, {3, 2, 3, 3}, {3}},
       [](const V& x) { return ops::conv2d(x[0], x[1], x[2], 2, 1); }},
      {"conv2d_k1", {{3, 4, 4}, {2, 3, 1, 1}}, [](const V& x) { return ops::conv2d(x[0], x[1], 1, 0); }},
      {"conv2d_k3_s1_p0", {{2, 5, 5}, {2, 2, 3, 3}}, [](const V& x) { return ops::conv2d(x[0], x[1], 1, 0); }},
      {"adaptive_avg_pool2d", {{2, 7, 5}}, [](const V& x) { return ops::adaptive_avg_pool2d(x[0], 3, 2); }},
      {"global_average_pool", {{3, 4, 5}}, [](const V& x) { return ops::global_average_pool(x[0]); }},
      {"channel_scale", {{3, 2, 4}, {3}}, [](const V& x) { return ops::channel_scale(x[0], x[1]); }},
      {"attention_h1", {{3, 4}, {5, 4}, {5, 4}},
       [](const V& x) { return ops::scaled_dot_attention(x[0], x[1], x[2], 1); }},
      {"attention_h2", {{3, 6}, {4, 6}, {4, 6}},
       [](const V& x) { return ops::scaled_dot_attention(x[0], x[1], x[2], 2); }},
      {"self_attention", {{4, 4}}, [](const V& x) { return ops::scaled_dot_attention(x[0], x[0], x[0], 2); }},
      {"mse_loss", {{6}}, [](const V& x) { return ops::mse_loss(x[0], Tensor({6}, {1, 2, 3, 4, 5, 3})); }},
  };
  std::mt19937_64 rng(40);
  for (const auto& c : cases) {
    ParameterSet params;
    std::vector<Tensor> inputs;
    for (std::size_t i = 0; i < c.inputs.size(); ++i) {
      Tensor t = params.create(std::string(c.name) + ".in" + std::to_string(i), c.inputs[i]);
      auto v = oracle::random_vec(rng, t.numel());
      std::copy(v.begin(), v.end(), t.mutable_data().begin());
      inputs.push_back(t);
    }
    Tensor probe;
    {
      NoGradGuard guard;
      Tensor out = c.fn(inputs);
      probe = Tensor(out.shape(), oracle::random_vec(rng, out.numel()));
    }
    auto report = check_gradients([&] { return ops::sum(ops::mul(c.fn(inputs), probe)); }, params.items());
    EXPECT_LE(report.max_relative_error, 1e-6) << c.name << " " << report.worst_parameter << "["
                                               << report.worst_index << "]";
  }
}

TEST(GradCheckTest, RejectsBadEpsilonAndReportsNonFiniteParameter) {
  ParameterSet params;
  Tensor p = params.create("bad.param", {2});
  EXPECT_THROW(check_gradients([&] { return ops::sum(p); }, params.items(), 0.0), ConfigError);
  EXPECT_THROW(check_gradients([&] { return ops::sum(p); }, params.items(), 1e-2), ConfigError);
  auto loss_fn = [&] {
    Tensor s = ops::sum(p);
    if (p.data()[0] > 0.0) return ops::scale(s, std::numeric_limits<double>::quiet_NaN());
    return s;
  };
  try {
    check_gradients(loss_fn, params.items(), 1e-5);
    FAIL() << "expected NumericalError";
  } catch (const NumericalError& e) {
    EXPECT_EQ(e.where(), "bad.param");
  }
}

TEST(ParameterSetTest, NamesAreUnique) {
  ParameterSet params;
  params.create("encoder.lrp.weight", {2, 2});
  EXPECT_THROW(params.create("encoder.lrp.weight", {2, 2}), ContractError);
  EXPECT_EQ(params.element_count(), 4u);
}

TEST(CheckpointTest, RoundTripIsByteIdentical) {
  ParameterSet params;
  Tensor a = params.create("encoder.fuse.weight", {2, 3, 1, 1});
  Tensor b = params.create("decoder.tokens", {6, 4});
  InitRng rng(42);
  rng.fill_normal(a, 0.02);
  rng.fill_normal(b, 1.0);
  b.mutable_data()[0] = -0.0;
  b.mutable_data()[1] = std::numeric_limits<double>::denorm_min();
  const std::string bytes = encode_checkpoint(R"({"name":"toy"})", params);
  auto decoded = decode_checkpoint(bytes);
  EXPECT_EQ(decoded.header, R"({"name":"toy"})");
  EXPECT_EQ(encode_checkpoint(decoded), bytes);

  ParameterSet other;
  other.create("encoder.fuse.weight", {2, 3, 1, 1});
  other.create("decoder.tokens", {6, 4});
  restore_parameters(decoded, other);
  EXPECT_EQ(encode_checkpoint(R"({"name":"toy"})", other), bytes);

  EXPECT_THROW(decode_checkpoint(bytes.substr(0, bytes.size() - 3)), DataError);
  EXPECT_THROW(decode_checkpoint("NOTACKPT"), DataError);
}

TEST(CheckpointTest, LittleEndianLayout) {
  ParameterSet params;
  Tensor a = params.create("x", {1});
  a.mutable_data()[0] = 1.0;  // 0x3FF0000000000000
  const std::string bytes = encode_checkpoint("", params);
  // magic(8) + hlen(4) + count(8) + nlen(4) + "x"(1) + rank(4) + dim(8) + value(8)
  ASSERT_EQ(bytes.size(), 45u);
  EXPECT_EQ(bytes.substr(0, 8), "FQACKPT1");
  EXPECT_EQ(static_cast<unsigned char>(bytes[44]), 0x3F);
  EXPECT_EQ(static_cast<unsigned char>(bytes[43]), 0xF0);
  EXPECT_EQ(static_cast<unsigned char>(bytes[37]), 0x00);
}
