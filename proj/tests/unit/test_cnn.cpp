#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "fatigue/cnn.hpp"
#include "fatigue/topomap.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace fatigue;

namespace {

Tensor ones(std::vector<std::size_t> shape) { return Tensor(std::move(shape), 1.0); }

std::vector<double> dropout_mask(std::size_t n, double rate, Rng& rng) {
  std::vector<double> m(n);
  for (double& v : m) v = rng.uniform() < rate ? 0.0 : 1.0 / (1.0 - rate);
  return m;
}

bool same_parameters(const CnnModel& a, const CnnModel& b) {
  const auto pa = a.parameters();
  const auto pb = b.parameters();
  for (std::size_t i = 0; i < pa.size(); ++i) {
    if (pa[i]->shape() != pb[i]->shape()) return false;
    for (std::size_t j = 0; j < pa[i]->size(); ++j) {
      if ((*pa[i])[j] != (*pb[i])[j]) return false;
    }
  }
  return true;
}

}  // namespace

// ---- convolution ----------------------------------------------------------------

TEST(Conv, AllOnesHandOracle) {
  const auto out = conv2d_same(ones({3, 3, 1}), ones({3, 3, 1, 1}), Tensor({1}, 0.0));
  const std::vector<double> expected = {4, 6, 4, 6, 9, 6, 4, 6, 4};
  ASSERT_EQ(out.shape(), (std::vector<std::size_t>{3, 3, 1}));
  for (std::size_t i = 0; i < 9; ++i) EXPECT_EQ(out[i], expected[i]);
}

TEST(Conv, ZeroFilterGivesBias) {
  Rng rng(1);
  const auto in = oracle::random_tensor({5, 6, 2}, rng);
  const auto out = conv2d_same(in, Tensor({3, 3, 2, 3}, 0.0), Tensor({3}, std::vector<double>{1.5, -2.0, 0.25}));
  for (std::size_t i = 0; i < out.size(); ++i) EXPECT_EQ(out[i], std::vector<double>({1.5, -2.0, 0.25})[i % 3]);
}

TEST(Conv, IdentityFilter) {
  Rng rng(2);
  const auto in = oracle::random_tensor({6, 5, 1}, rng);
  Tensor w({3, 3, 1, 1}, 0.0);
  w[4] = 1.0;
  const auto out = conv2d_same(in, w, Tensor({1}, 0.0));
  for (std::size_t i = 0; i < in.size(); ++i) EXPECT_EQ(out[i], in[i]);
}

TEST(Conv, MatchesNaiveOracle) {
  Rng rng(3);
  for (int trial = 0; trial < 5; ++trial) {
    const auto in = oracle::random_tensor({7, 9, 3}, rng);
    const auto w = oracle::random_tensor({3, 3, 3, 4}, rng);
    const auto b = oracle::random_tensor({4}, rng);
    const auto got = conv2d_same(in, w, b);
    const auto ref = oracle::conv_same(in, w, b);
    ASSERT_EQ(got.shape(), ref.shape());
    for (std::size_t i = 0; i < got.size(); ++i) EXPECT_NEAR(got[i], ref[i], 1e-12);
  }
}

TEST(Conv, FiveByFiveKernel) {
  Rng rng(4);
  const auto in = oracle::random_tensor({6, 6, 2}, rng);
  const auto w = oracle::random_tensor({5, 5, 2, 1}, rng);
  const auto b = oracle::random_tensor({1}, rng);
  const auto got = conv2d_same(in, w, b);
  const auto ref = oracle::conv_same(in, w, b);
  for (std::size_t i = 0; i < got.size(); ++i) EXPECT_NEAR(got[i], ref[i], 1e-12);
}

TEST(Conv, ShapeErrors) {
  EXPECT_FATIGUE_ERROR(conv2d_same(ones({3, 3, 2}), ones({3, 3, 1, 1}), Tensor({1})), ErrorCode::ShapeMismatch);
  EXPECT_FATIGUE_ERROR(conv2d_same(ones({3, 3, 1}), ones({2, 2, 1, 1}), Tensor({1})), ErrorCode::ShapeMismatch);
  EXPECT_FATIGUE_ERROR(conv2d_same(ones({3, 3, 1}), ones({3, 3, 1, 2}), Tensor({1})), ErrorCode::ShapeMismatch);
  EXPECT_FATIGUE_ERROR(Tensor({2, 2}, std::vector<double>(3)), ErrorCode::ShapeMismatch);
}

TEST(Conv, BackwardMatchesFiniteDifferences) {
  Rng rng(5);
  auto in = oracle::random_tensor({5, 4, 2}, rng);
  auto w = oracle::random_tensor({3, 3, 2, 3}, rng);
  auto b = oracle::random_tensor({3}, rng);
  const auto g = oracle::random_tensor({5, 4, 3}, rng);  // upstream gradient, loss = <g, conv>
  auto loss = [&] {
    const auto y = conv2d_same(in, w, b);
    double s = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) s += g[i] * y[i];
    return s;
  };
  Tensor dw(w.shape()), db(b.shape()), dx(in.shape());
  conv2d_same_backward(in, w, g, dw, db, &dx);
  auto check = [&](Tensor& t, const Tensor& grad) {
    for (std::size_t i = 0; i < t.size(); ++i) {
      const double orig = t[i];
      t[i] = orig + 1e-5;
      const double lp = loss();
      t[i] = orig - 1e-5;
      const double lm = loss();
      t[i] = orig;
      EXPECT_NEAR(grad[i], (lp - lm) / 2e-5, 1e-7);
    }
  };
  check(in, dx);
  check(w, dw);
  check(b, db);
}

// ---- activations, pooling, softmax --------------------------------------------------

TEST(Relu, Cases) {
  const auto y = relu(Tensor({3}, std::vector<double>{-1.0, 0.0, 2.0}));
  EXPECT_EQ(y[0], 0.0);
  EXPECT_EQ(y[1], 0.0);
  EXPECT_EQ(y[2], 2.0);
  const auto pos = relu(Tensor({2}, std::vector<double>{0.5, 3.0}));
  EXPECT_EQ(pos[0], 0.5);
  EXPECT_EQ(pos[1], 3.0);
  const auto neg = relu(Tensor({4}, -1.0));
  for (double v : neg.data()) EXPECT_EQ(v, 0.0);
}

TEST(MaxPool, Cases) {
  const auto small = maxpool2(Tensor({2, 2, 1}, std::vector<double>{1, 2, 3, 4}));
  ASSERT_EQ(small.output.shape(), (std::vector<std::size_t>{1, 1, 1}));
  EXPECT_EQ(small.output[0], 4.0);
  EXPECT_EQ(small.argmax[0], 3u);

  const auto flat = maxpool2(Tensor({34, 34, 2}, 1.25));
  EXPECT_EQ(flat.output.shape(), (std::vector<std::size_t>{17, 17, 2}));
  for (double v : flat.output.data()) EXPECT_EQ(v, 1.25);

  const auto odd = maxpool2(Tensor({17, 17, 3}, 0.0));
  EXPECT_EQ(odd.output.shape(), (std::vector<std::size_t>{8, 8, 3}));
  EXPECT_EQ(odd.argmax[0], 0u);  // tie resolves to the first element

  EXPECT_FATIGUE_ERROR(maxpool2(Tensor({1, 4, 1})), ErrorCode::TooSmall);
}

TEST(MaxPool, BackwardRoutesToArgmax) {
  const auto p = maxpool2(Tensor({2, 2, 1}, std::vector<double>{1, 5, 3, 4}));
  const auto d = maxpool2_backward(Tensor({1, 1, 1}, 2.0), p.argmax, {2, 2, 1});
  EXPECT_EQ(d[0], 0.0);
  EXPECT_EQ(d[1], 2.0);
  EXPECT_EQ(d[2], 0.0);
  EXPECT_EQ(d[3], 0.0);
}

TEST(Softmax, NormalizesAndIsStable) {
  Rng rng(6);
  for (int i = 0; i < 1000; ++i) {
    std::vector<double> z = {rng.normal(0, 30), rng.normal(0, 30), rng.normal(0, 30)};
    const auto p = softmax(z);
    EXPECT_NEAR(p[0] + p[1] + p[2], 1.0, 1e-9);
    for (double v : p) EXPECT_GE(v, 0.0);
  }
  const auto big = softmax(std::vector<double>{1000.0, 0.0, -1000.0});
  EXPECT_NEAR(big[0], 1.0, 1e-12);
}

TEST(Loss, Cases) {
  EXPECT_NEAR(loss_crossentropy(std::vector<double>{1.0, 0.0, 0.0}, 0), 0.0, 1e-9);
  EXPECT_NEAR(loss_crossentropy(std::vector<double>{1.0 / 3, 1.0 / 3, 1.0 / 3}, 1), std::log(3.0), 1e-12);
  EXPECT_NEAR(loss_crossentropy(std::vector<double>{0.7, 0.2, 0.1}, 2), std::log(10.0), 1e-12);
  EXPECT_NEAR(loss_crossentropy(std::vector<double>{1.0, 0.0, 0.0}, 2), -std::log(kProbabilityFloor), 1e-9);
  EXPECT_FATIGUE_ERROR(loss_crossentropy(std::vector<double>{1.0, 0.0, 0.0}, 3), ErrorCode::BadLabel);
}

// ---- model shape --------------------------------------------------------------------

TEST(Model, ShapeTraceForEveryCombination) {
  for (auto combo : kAllCombinations) {
    const std::size_t c = combination_channels(combo);
    const auto m = CnnModel::zeros(c);
    EXPECT_EQ(m.flatten_dim(), 1024u);
    const std::vector<std::vector<std::size_t>> expected = {
        {34, 34, c}, {34, 34, 4}, {17, 17, 4}, {17, 17, 8}, {8, 8, 8}, {8, 8, 16}, {1024}, {128}, {3}};
    EXPECT_EQ(m.shape_trace(), expected);
    const auto model = CnnModel::he_init(c, 3);
    Rng rng(c);
    const auto p = predict_proba(model, oracle::random_tensor({34, 34, c}, rng));
    ASSERT_EQ(p.size(), 3u);
    EXPECT_NEAR(p[0] + p[1] + p[2], 1.0, 1e-9);
  }
}

TEST(Model, ParameterShapes) {
  const auto m = CnnModel::zeros(6);
  EXPECT_EQ(m.conv1_w.shape(), (std::vector<std::size_t>{3, 3, 6, 4}));
  EXPECT_EQ(m.conv2_w.shape(), (std::vector<std::size_t>{3, 3, 4, 8}));
  EXPECT_EQ(m.conv3_w.shape(), (std::vector<std::size_t>{3, 3, 8, 16}));
  EXPECT_EQ(m.fc1_w.shape(), (std::vector<std::size_t>{1024, 128}));
  EXPECT_EQ(m.out_w.shape(), (std::vector<std::size_t>{128, 3}));
  EXPECT_EQ(m.parameter_count(), (216u + 4) + (288u + 8) + (1152u + 16) + (1024u * 128 + 128) + (384u + 3));
  EXPECT_FATIGUE_ERROR(CnnModel::zeros(2, 3, 3), ErrorCode::TooSmall);
}

TEST(Model, HeInitStatistics) {
  const auto m = CnnModel::he_init(4, 11);
  double sum = 0.0, sq = 0.0;
  for (double v : m.fc1_w.data()) sum += v, sq += v * v;
  const double n = double(m.fc1_w.size());
  EXPECT_NEAR(sum / n, 0.0, 0.002);
  EXPECT_NEAR(std::sqrt(sq / n), std::sqrt(2.0 / 1024.0), 0.002);
  for (double v : m.fc1_b.data()) EXPECT_EQ(v, 0.0);
  EXPECT_TRUE(same_parameters(m, CnnModel::he_init(4, 11)));
  EXPECT_FALSE(same_parameters(m, CnnModel::he_init(4, 12)));
}

// ---- forward ----------------------------------------------------------------------

TEST(Forward, ZeroModelIsUniform) {
  Rng rng(7);
  const auto p = predict_proba(CnnModel::zeros(6), oracle::random_tensor({34, 34, 6}, rng));
  for (double v : p) EXPECT_NEAR(v, 1.0 / 3.0, 1e-15);
}

TEST(Forward, InferenceIsDeterministic) {
  const auto m = CnnModel::he_init(2, 8);
  Rng rng(8);
  const auto x = oracle::random_tensor({34, 34, 2}, rng);
  const auto a = forward(m, x, false, 0.5, nullptr);
  const auto b = forward(m, x, false, 0.5, nullptr);
  EXPECT_EQ(a.probs, b.probs);
  for (double s : a.dropout_scale) EXPECT_EQ(s, 1.0);
}

TEST(Forward, ProbabilitiesSumToOneOverRandomDraws) {
  Rng rng(9);
  for (int draw = 0; draw < 1000; ++draw) {
    const auto m = CnnModel::he_init(2, 100 + draw, 8, 8, 8);
    const auto x = oracle::random_tensor({8, 8, 2}, rng, 5.0);
    const auto p = predict_proba(m, x);
    EXPECT_NEAR(p[0] + p[1] + p[2], 1.0, 1e-9);
    for (double v : p) EXPECT_GT(v, 0.0);
  }
}

TEST(Forward, TrainingDropoutUsesInvertedScaling) {
  const auto m = CnnModel::he_init(2, 10);
  Rng data(10);
  const auto x = oracle::random_tensor({34, 34, 2}, data);
  Rng rng(11);
  const auto c = forward(m, x, true, 0.25, &rng);
  std::size_t zeros = 0;
  for (std::size_t i = 0; i < c.dropout_scale.size(); ++i) {
    const double s = c.dropout_scale[i];
    EXPECT_TRUE(s == 0.0 || std::abs(s - 1.0 / 0.75) < 1e-15);
    zeros += s == 0.0;
    EXPECT_DOUBLE_EQ(c.fc_drop[i], c.fc_act[i] * s);
  }
  EXPECT_GT(zeros, 10u);
  EXPECT_LT(zeros, 60u);
  EXPECT_FATIGUE_ERROR(forward(m, x, true, 0.25, nullptr), ErrorCode::InvalidArgument);
}

TEST(Forward, ChannelMismatch) {
  const auto m = CnnModel::zeros(4);
  EXPECT_FATIGUE_ERROR(predict_proba(m, Tensor({34, 34, 5})), ErrorCode::ShapeMismatch);
}

// ---- backward ---------------------------------------------------------------------

TEST(Backward, GradientOracleOnReducedModel) {
  for (std::uint64_t rep = 0; rep < 10; ++rep) {
    const auto model = CnnModel::he_init(2, 500 + rep, 10, 10, 16);
    Rng rng(900 + rep);
    const auto x = oracle::random_tensor({10, 10, 2}, rng);
    const int label = int(rep % 3);
    const auto mask = dropout_mask(16, 0.5, rng);
    const auto cache = forward_with_mask(model, x, mask);
    const auto grads = backward(model, cache, label);
    const auto check = oracle::finite_difference_check(model, x, label, mask, grads);
    EXPECT_LT(check.max_rel_error, 1e-4) << "rep " << rep;
    EXPECT_EQ(check.checked + check.skipped, model.parameter_count());
    EXPECT_GT(check.checked, model.parameter_count() * 9 / 10);
  }
}

TEST(Backward, ZeroInputKillsConv1WeightGradient) {
  const auto model = CnnModel::he_init(3, 21);
  const auto cache = forward(model, Tensor({34, 34, 3}, 0.0), false, 0.0, nullptr);
  const auto g = backward(model, cache, 1);
  for (double v : g.conv1_w.data()) EXPECT_EQ(v, 0.0);
  double bias_norm = 0.0;
  for (double v : g.out_b.data()) bias_norm += std::abs(v);
  EXPECT_GT(bias_norm, 0.0);
}

TEST(Backward, DuplicatedExampleDoublesSummedGradient) {
  const auto model = CnnModel::he_init(2, 22, 10, 10, 16);
  Rng rng(22);
  const auto cache = forward(model, oracle::random_tensor({10, 10, 2}, rng), false, 0.0, nullptr);
  const auto single = backward(model, cache, 2);
  auto twice = CnnModel::zeros(2, 10, 10, 16);
  accumulate_gradients(model, cache, 2, twice);
  accumulate_gradients(model, cache, 2, twice);
  const auto ps = single.parameters();
  const auto pt = twice.parameters();
  for (std::size_t p = 0; p < ps.size(); ++p) {
    for (std::size_t i = 0; i < ps[p]->size(); ++i) {
      const double want = 2.0 * (*ps[p])[i];
      EXPECT_NEAR((*pt[p])[i], want, 1e-12 * std::max(1.0, std::abs(want)));
    }
  }
}

TEST(Backward, RequiresForwardPass) {
  const auto model = CnnModel::zeros(2);
  EXPECT_FATIGUE_ERROR(backward(model, ForwardCache{}, 0), ErrorCode::NoCachedForward);
}

// ---- training -----------------------------------------------------------------------

namespace {

struct ToySet {
  std::vector<Tensor> x;
  std::vector<int> y;
};

// Class c lights up channel c of a small 8x8x3 input.
ToySet toy_set(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  ToySet s;
  for (std::size_t i = 0; i < n; ++i) {
    const int c = int(i % 3);
    Tensor t = oracle::random_tensor({8, 8, 3}, rng, 0.3);
    for (std::size_t p = 0; p < 64; ++p) t[p * 3 + std::size_t(c)] += 1.0;
    s.x.push_back(std::move(t));
    s.y.push_back(c);
  }
  return s;
}

TrainConfig toy_config() {
  TrainConfig cfg;
  cfg.epochs = 15;
  cfg.batch_size = 8;
  cfg.fc_width = 16;
  cfg.seed = 4;
  return cfg;
}

}  // namespace

TEST(Train, LossDecreasesOnSeparableSet) {
  const auto toy = toy_set(48, 1);
  const auto r = train(toy.x, toy.y, toy_config());
  ASSERT_EQ(r.history.size(), 15u);
  EXPECT_LT(r.history.back().loss, r.history.front().loss);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < toy.x.size(); ++i) correct += predict_class(r.model, toy.x[i]) == toy.y[i];
  EXPECT_EQ(correct, toy.x.size());
}

TEST(Train, SameSeedIsBitIdentical) {
  const auto toy = toy_set(24, 2);
  auto cfg = toy_config();
  cfg.epochs = 4;
  const auto a = train(toy.x, toy.y, cfg);
  const auto b = train(toy.x, toy.y, cfg);
  ASSERT_EQ(a.history.size(), b.history.size());
  for (std::size_t i = 0; i < a.history.size(); ++i) {
    EXPECT_EQ(a.history[i].loss, b.history[i].loss);
    EXPECT_EQ(a.history[i].train_acc, b.history[i].train_acc);
  }
  EXPECT_TRUE(same_parameters(a.model, b.model));
  EXPECT_EQ(format_history_csv(a.history), format_history_csv(b.history));
  EXPECT_EQ(format_history_csv(a.history).substr(0, 21), "epoch,loss,train_acc\n");
}

TEST(Train, ZeroLearningRateLeavesParametersUnchanged) {
  const auto toy = toy_set(12, 3);
  auto cfg = toy_config();
  cfg.learning_rate = 0.0;
  cfg.epochs = 1;
  const auto one = train(toy.x, toy.y, cfg);
  cfg.epochs = 5;
  const auto five = train(toy.x, toy.y, cfg);
  EXPECT_TRUE(same_parameters(one.model, five.model));
  EXPECT_TRUE(same_parameters(five.model, CnnModel::he_init(3, derive_seed(cfg.seed, 0x1417), 8, 8, 16)));
}

TEST(Train, Validation) {
  const auto toy = toy_set(6, 4);
  const auto cfg = toy_config();
  EXPECT_FATIGUE_ERROR(train(std::span<const Tensor>{}, std::span<const int>{}, cfg), ErrorCode::EmptyTrainingSet);
  auto mixed = toy.x;
  mixed[2] = Tensor({8, 8, 2});
  EXPECT_FATIGUE_ERROR(train(mixed, toy.y, cfg), ErrorCode::MixedCombinations);
  auto labels = toy.y;
  labels[0] = 3;
  EXPECT_FATIGUE_ERROR(train(toy.x, labels, cfg), ErrorCode::BadLabel);
  EXPECT_FATIGUE_ERROR(train(toy.x, std::vector<int>{0, 1}, cfg), ErrorCode::LengthMismatch);
  auto bad = cfg;
  bad.batch_size = 0;
  EXPECT_FATIGUE_ERROR(train(toy.x, toy.y, bad), ErrorCode::InvalidArgument);

  const CubeBuilder builder(default_layout());
  std::vector<EegCube> cubes = {builder.raw_cube(FeatureSet{}, FeatureCombination::Time),
                                builder.raw_cube(FeatureSet{}, FeatureCombination::Frequency)};
  cubes[1].kinds.push_back(FeatureKind::Mean);  // same channel count, different combination
  cubes[1].tensor.resize(cubes[0].tensor.size());
  EXPECT_FATIGUE_ERROR(train(cubes, std::vector<int>{0, 1}, cfg), ErrorCode::MixedCombinations);
  EXPECT_FATIGUE_ERROR(train(std::span<const EegCube>{}, std::span<const int>{}, cfg), ErrorCode::EmptyTrainingSet);
}

// ---- checkpoints --------------------------------------------------------------------

TEST(Checkpoint, RoundTripAtSinglePrecision) {
  const auto m = CnnModel::he_init(6, 33);
  const auto bytes = encode_checkpoint(m);
  EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 4), "CNNC");
  EXPECT_EQ(bytes[4], 0x01);
  EXPECT_EQ(bytes[5] | (bytes[6] << 8), 6);
  EXPECT_EQ(bytes[7] | (bytes[8] << 8), 128);
  EXPECT_EQ(bytes.size(), 9u + 10u * 4u + 4u * m.parameter_count());
  const auto back = decode_checkpoint(bytes);
  const auto pa = m.parameters();
  const auto pb = back.parameters();
  for (std::size_t p = 0; p < pa.size(); ++p) {
    ASSERT_EQ(pa[p]->shape(), pb[p]->shape());
    for (std::size_t i = 0; i < pa[p]->size(); ++i) {
      EXPECT_EQ((*pb[p])[i], double(float((*pa[p])[i])));
    }
  }
  EXPECT_EQ(encode_checkpoint(back), bytes);
}

TEST(Checkpoint, CorruptInputRejected) {
  auto bytes = encode_checkpoint(CnnModel::zeros(2));
  auto trailing = bytes;
  trailing.push_back(0);
  EXPECT_FATIGUE_ERROR(decode_checkpoint(trailing), ErrorCode::BadCheckpoint);
  auto truncated = bytes;
  truncated.resize(bytes.size() - 3);
  EXPECT_FATIGUE_ERROR(decode_checkpoint(truncated), ErrorCode::BadCheckpoint);
  bytes[0] = 'X';
  EXPECT_FATIGUE_ERROR(decode_checkpoint(bytes), ErrorCode::BadCheckpoint);
}

TEST(Checkpoint, FileRoundTrip) {
  testutil::TempDir dir("ckpt");
  const auto m = CnnModel::he_init(2, 34);
  save_checkpoint(m, dir.path() / "m.cnnckpt");
  const auto back = load_checkpoint(dir.path() / "m.cnnckpt");
  EXPECT_EQ(encode_checkpoint(back), encode_checkpoint(m));
}
