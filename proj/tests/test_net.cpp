#include <gtest/gtest.h>

#include <cmath>

#include "advdet/net.hpp"
#include "advdet/train.hpp"
#include "gradcheck.hpp"
#include "test_util.hpp"

using namespace advdet;
using namespace advdet::testing;

TEST(Network, ArchitectureShapes) {
  const Shape mnist{28, 28, 1};
  const auto a = make_architecture('A', mnist, 10);
  EXPECT_EQ(a.num_classes(), 10u);
  // conv16: 9*1*16+16, conv32: 9*16*32+32, dense: 7*7*32*128+128, 128*10+10
  EXPECT_EQ(a.param_count(), 160u + 4640u + 200832u + 1290u);
  const auto b = make_architecture('B', Shape{32, 32, 3}, 10);
  EXPECT_EQ(b.layer_input_shape(9), (Shape{4, 4, 64}));
  const auto c = make_architecture('C', mnist, 10);
  EXPECT_EQ(c.param_count(), 784u * 256 + 256 + 256 * 128 + 128 + 1290);
  EXPECT_THROW(make_architecture('D', mnist, 10), error);
}

TEST(Network, InvalidChains) {
  const Shape s{4, 4, 1};
  EXPECT_THROW(NetworkModel(s, {flatten(), dense(2)}), error);
  EXPECT_THROW(NetworkModel(s, {flatten(), dense(2), softmax(), softmax()}), error);
  EXPECT_THROW(NetworkModel(Shape{1, 1, 1}, {maxpool(), flatten(), dense(2), softmax()}), error);
  NetworkModel m(s, {flatten(), dense(2), softmax()});
  try {
    m.set_weights(std::vector<double>(3));
    FAIL();
  } catch (const error& e) {
    EXPECT_EQ(e.code(), errc::consistency);
  }
}

TEST(Network, GlorotInitBounds) {
  auto m = make_architecture('A', Shape{16, 16, 1}, 2);
  SeededRng r(1);
  m.init_weights(r);
  const double lim0 = std::sqrt(6.0 / (9 + 9 * 16));
  for (std::size_t k = 0; k < 144; ++k) EXPECT_LE(std::abs(m.weights()[k]), lim0);
  for (std::size_t k = 144; k < 160; ++k) EXPECT_EQ(m.weights()[k], 0.0);
}

TEST(Forward, FreshModelProbabilities) {
  auto m = make_architecture('A', Shape{16, 16, 1}, 2);
  SeededRng r(2);
  m.init_weights(r);
  const auto p = forward(m, random_image(Shape{16, 16, 1}, r));
  ASSERT_EQ(p.size(), 2u);
  for (double v : p) {
    EXPECT_GT(v, 0.0);
    EXPECT_LT(v, 1.0);
  }
  EXPECT_NEAR(p[0] + p[1], 1.0, 1e-9);
}

TEST(Forward, ZeroWeightsUniform) {
  const auto m = make_architecture('B', Shape{16, 16, 3}, 10);
  SeededRng r(3);
  for (double v : forward(m, random_image(Shape{16, 16, 3}, r))) EXPECT_NEAR(v, 0.1, 1e-15);
}

TEST(Forward, HandSetDense2x2) {
  // W columns: class0 = (1,0,0,-1), class1 = (0,2,0,0); bias (0.5, -0.5)
  const auto m = linear_model(Shape{2, 2, 1}, 2, {1, 0, 0, 2, 0, 0, -1, 0}, {0.5, -0.5});
  const ImageTensor x(Shape{2, 2, 1}, {0.2, 0.4, 0.6, 0.8});
  // z0 = 0.2 - 0.8 + 0.5 = -0.1, z1 = 0.8 - 0.5 = 0.3
  const double e0 = std::exp(-0.1), e1 = std::exp(0.3);
  const auto p = forward(m, x);
  EXPECT_NEAR(p[0], e0 / (e0 + e1), 1e-15);
  EXPECT_NEAR(p[1], e1 / (e0 + e1), 1e-15);
}

TEST(Forward, ShapeMismatch) {
  const auto m = make_architecture('C', Shape{4, 4, 1}, 2);
  try {
    forward(m, ImageTensor::filled(Shape{4, 5, 1}, 0.0));
    FAIL();
  } catch (const error& e) {
    EXPECT_EQ(e.code(), errc::invalid_input);
  }
  EXPECT_THROW(loss_and_input_grad(m, ImageTensor::filled(Shape{4, 4, 1}, 0.0), 2), error);
}

TEST(Forward, HugeLogitsStable) {
  SeededRng r(4);
  std::vector<double> w(4 * 3);
  for (double& v : w) v = r.next_uniform(-1500, 1500);
  const auto m = linear_model(Shape{2, 2, 1}, 3, w, {1000, -1000, 0});
  for (int t = 0; t < 20; ++t) {
    const auto p = forward(m, random_image(Shape{2, 2, 1}, r));
    double s = 0;
    for (double v : p) {
      EXPECT_TRUE(std::isfinite(v));
      s += v;
    }
    EXPECT_NEAR(s, 1.0, 1e-9);
  }
}

TEST(Gradient, SaturatedLossIsZero) {
  const auto m = linear_model(Shape{1, 2, 1}, 2, {0, 0, 0, 0}, {2000, 0});
  const auto lg = loss_and_input_grad(m, ImageTensor(Shape{1, 2, 1}, {0.3, 0.9}), 0);
  EXPECT_EQ(lg.loss, 0.0);
  for (double v : lg.input_grad.values()) EXPECT_EQ(v, 0.0);
}

TEST(Gradient, LinearSoftmaxClosedForm) {
  SeededRng r(5);
  const Shape s{3, 3, 2};
  for (int t = 0; t < 10; ++t) {
    const auto m = random_linear_model(s, 4, r);
    const auto x = random_image(s, r);
    const std::size_t y = r.next_below(4);
    const auto p = softmax_of(linear_logits(m, x));
    const auto lg = loss_and_input_grad(m, x, y);
    EXPECT_NEAR(lg.loss, -std::log(p[y]), 1e-12);
    for (std::size_t i = 0; i < s.size(); ++i) {
      double g = 0;
      for (std::size_t k = 0; k < 4; ++k) g += (p[k] - (k == y ? 1.0 : 0.0)) * m.weights()[i * 4 + k];
      EXPECT_NEAR(lg.input_grad.values()[i], g, 1e-12);
    }
  }
}

TEST(Gradient, FiniteDifferencesPerLayerAndArchitecture) {
  SeededRng r(6);
  for (auto& c : gradient_cases()) {
    const auto m = randomized(c.model, r, 0.4);
    const auto x = random_map(m.input_shape(), r);
    const auto res = check_gradients(m, x, r.next_below(m.num_classes()), m.param_count() > 2000 ? 37 : 1);
    EXPECT_EQ(res.failed, 0u) << c.name << " worst ratio " << res.worst;
    EXPECT_GT(res.checked, 0u);
  }
}

TEST(Gradient, LogitJacobianMatchesLinearWeights) {
  SeededRng r(7);
  const Shape s{2, 3, 1};
  const auto m = random_linear_model(s, 3, r);
  const auto j = logit_jacobian(m, random_image(s, r));
  for (std::size_t k = 0; k < 3; ++k)
    for (std::size_t i = 0; i < s.size(); ++i) EXPECT_NEAR(j.grads[k][i], m.weights()[i * 3 + k], 1e-15);
}

TEST(Accuracy, TieBreakAndExtremes) {
  const Shape s{2, 2, 1};
  LabeledDataset d{"t", 10, {}, {}, {}};
  for (std::uint32_t i = 0; i < 50; ++i) d.push(ImageTensor::filled(s, 0.5), i % 10, i);
  const auto zero = make_architecture('C', s, 10);
  EXPECT_DOUBLE_EQ(accuracy(zero, d), 0.1);  // always predicts class 0

  const auto m = linear_model(Shape{1, 1, 1}, 2, {1, -1}, {0, 0});
  LabeledDataset e{"t", 2, {}, {}, {}};
  e.push(ImageTensor(Shape{1, 1, 1}, {0.9}), 0, 0);
  e.push(ImageTensor(Shape{1, 1, 1}, {0.4}), 0, 1);
  EXPECT_DOUBLE_EQ(accuracy(m, e), 1.0);
  e.labels = {1, 1};
  EXPECT_DOUBLE_EQ(accuracy(m, e), 0.0);
}

TEST(Train, XorConverges) {
  const Shape s{2, 2, 1};
  LabeledDataset d{"xor", 2, {}, {}, {}};
  // features (a, b) lifted into the first row; the second row is a constant
  for (std::uint32_t i = 0; i < 4; ++i) {
    const double a = i & 1, b = (i >> 1) & 1;
    d.push(ImageTensor(s, {a, b, 0.5, 0.5}), static_cast<std::uint32_t>((i & 1) ^ ((i >> 1) & 1)), i);
  }
  TrainConfig tc;
  tc.epochs = 2000;
  tc.batch_size = 4;
  tc.learning_rate = 0.1;
  tc.seed = 3;
  const auto res = train(NetworkModel(s, {flatten(), dense(8), relu(), dense(2), softmax()}), d, tc);
  EXPECT_LT(res.trace.back().loss, 0.1);
  EXPECT_DOUBLE_EQ(accuracy(res.model, d), 1.0);
}

TEST(Train, SynthShapesReachNinetyFive) {
  SeededRng r(1);
  const auto data = synth_shapes(500, 28, r);
  const auto split = split_dataset(data, 0.8, 2);
  ASSERT_EQ(split.train.size(), 400u);
  TrainConfig tc;
  tc.epochs = 5;
  const auto res = train(make_architecture('A', data.shape(), 2), split.train, tc);
  EXPECT_GE(accuracy(res.model, split.test), 0.95);
  ASSERT_EQ(res.trace.size(), 5u);
}

TEST(Train, BitReproducible) {
  SeededRng r(2);
  const auto data = synth_shapes(64, 16, r);
  TrainConfig tc;
  tc.epochs = 2;
  tc.seed = 77;
  const auto a = train(make_architecture('A', data.shape(), 2), data, tc);
  const auto b = train(make_architecture('A', data.shape(), 2), data, tc);
  EXPECT_TRUE(a.model == b.model);
  tc.seed = 78;
  const auto c = train(make_architecture('A', data.shape(), 2), data, tc);
  EXPECT_FALSE(a.model == c.model);
}

TEST(Train, Errors) {
  LabeledDataset empty{"e", 2, {}, {}, {}};
  try {
    train(make_architecture('C', Shape{4, 4, 1}, 2), empty, TrainConfig{});
    FAIL();
  } catch (const error& e) {
    EXPECT_EQ(e.code(), errc::invalid_input);
  }
  TrainConfig bad;
  bad.learning_rate = 0;
  EXPECT_THROW(bad.validate(), error);
  EXPECT_EQ(parse_optimizer("sgd"), Optimizer::sgd);
  EXPECT_THROW(parse_optimizer("adam"), error);
}
