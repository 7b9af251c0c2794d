#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "op_cases.hpp"
#include "vcead/adam.hpp"
#include "vcead/ops.hpp"
#include "vcead/tensor.hpp"

using namespace vcead;
namespace o = vcead::ops;

TEST(TensorTest, ShapeMustMatchData) {
  EXPECT_THROW(Tensor<float>({2, 3}, std::vector<float>(5)), ShapeError);
  Tensor<float> t({2, 3}, std::vector<float>(6, 1.f));
  EXPECT_EQ(t.numel(), 6u);
  EXPECT_FALSE(t.has_grad());
}

TEST(TensorTest, ReluOnSmallVector) {
  Tensor<float> x({3}, {-1.f, 0.f, 2.f});
  auto y = o::relu(x);
  EXPECT_EQ(std::vector<float>(y.data().begin(), y.data().end()),
            (std::vector<float>{0.f, 0.f, 2.f}));
}

TEST(TensorTest, DepthwiseSamePaddingKeepsShape) {
  auto x = Tensor<float>::zeros({1, 3, 5, 5});
  auto w = Tensor<float>::zeros({3, 1, 3, 3});
  auto y = o::depthwise_conv2d(x, w, Tensor<float>(), {1, 1});
  EXPECT_EQ(y.shape(), (Shape{1, 3, 5, 5}));
}

TEST(TensorTest, StridedConvShape) {
  auto x = Tensor<float>::zeros({1, 3, 8, 8});
  auto w = Tensor<float>::zeros({16, 3, 3, 3});
  auto y = o::conv2d(x, w, Tensor<float>(), {2, 1});
  EXPECT_EQ(y.shape(), (Shape{1, 16, 4, 4}));
}

TEST(TensorTest, ConvMatchesDirectSum) {
  std::mt19937_64 rng(3);
  auto x = testkit::random_tensor({1, 2, 5, 4}, rng);
  auto w = testkit::random_tensor({3, 2, 3, 3}, rng);
  auto y = o::conv2d(x, w, Tensor<double>(), {2, 1});
  ASSERT_EQ(y.shape(), (Shape{1, 3, 3, 2}));
  for (std::size_t co = 0; co < 3; ++co)
    for (std::size_t oy = 0; oy < 3; ++oy)
      for (std::size_t ox = 0; ox < 2; ++ox) {
        double ref = 0;
        for (std::size_t ci = 0; ci < 2; ++ci)
          for (int ky = 0; ky < 3; ++ky)
            for (int kx = 0; kx < 3; ++kx) {
              const int iy = static_cast<int>(oy) * 2 - 1 + ky;
              const int ix = static_cast<int>(ox) * 2 - 1 + kx;
              if (iy < 0 || iy >= 5 || ix < 0 || ix >= 4) continue;
              ref += w.data()[((co * 2 + ci) * 3 + ky) * 3 + kx] *
                     x.data()[(ci * 5 + iy) * 4 + ix];
            }
        EXPECT_NEAR(y.data()[(co * 3 + oy) * 2 + ox], ref, 1e-12);
      }
}

TEST(TensorTest, ShapeErrorsNameTheOp) {
  auto x = Tensor<float>::zeros({1, 4, 8, 8});
  auto w = Tensor<float>::zeros({16, 3, 3, 3});
  try {
    o::conv2d(x, w, Tensor<float>(), {1, 1});
    FAIL() << "expected ShapeError";
  } catch (const ShapeError& e) {
    EXPECT_NE(std::string(e.what()).find("conv2d"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("4"), std::string::npos);
  }
  EXPECT_THROW(o::conv2d(Tensor<float>::zeros({1, 3, 8, 8}), w, Tensor<float>(), {0, 1}),
               ShapeError);
  EXPECT_THROW(o::dense(Tensor<float>::zeros({2, 3}), Tensor<float>::zeros({2, 4}),
                        Tensor<float>()),
               ShapeError);
  EXPECT_THROW(o::add(Tensor<float>::zeros({2}), Tensor<float>::zeros({3})), ShapeError);
}

TEST(AutodiffTest, SumGradientIsOnes) {
  Tensor<double> x({3}, {0.5, -1.0, 2.0}, true);
  backward(o::sum(x));
  ASSERT_TRUE(x.has_grad());
  for (double g : x.grad()) EXPECT_EQ(g, 1.0);
}

TEST(AutodiffTest, MseGradientMatchesHandDerivative) {
  Tensor<double> x({2}, {1.0, 3.0}, true);
  Tensor<double> t({2}, {2.0, 5.0});
  auto loss = o::mse_loss(t, x);
  EXPECT_DOUBLE_EQ(loss.item(), 2.5);
  backward(loss);
  EXPECT_DOUBLE_EQ(x.grad()[0], -1.0);
  EXPECT_DOUBLE_EQ(x.grad()[1], -2.0);
}

TEST(AutodiffTest, BackwardRejectsNonScalarAndEmptyGraph) {
  Tensor<double> x({3}, {1, 2, 3}, true);
  auto y = o::relu(x);
  EXPECT_THROW(backward(y), ShapeError);
  Graph<double>::active().clear();
  Tensor<double> leaf = Tensor<double>::scalar(1.0, true);
  EXPECT_THROW(backward(leaf), std::logic_error);
}

TEST(AutodiffTest, GraphIsResetAfterBackward) {
  Tensor<double> x({2}, {1, 2}, true);
  backward(o::sum(o::relu(x)));
  EXPECT_TRUE(Graph<double>::active().empty());
}

TEST(AutodiffTest, NoGradGuardSkipsRecording) {
  Graph<double>::active().clear();
  Tensor<double> x({2}, {1, 2}, true);
  {
    NoGradGuard guard;
    auto y = o::sum(x);
    EXPECT_FALSE(y.requires_grad());
  }
  EXPECT_TRUE(Graph<double>::active().empty());
}

TEST(AutodiffTest, SharedInputAccumulatesBothPaths) {
  Tensor<double> x({2}, {1.5, -2.0}, true);
  backward(o::sum(o::mul(x, x)));
  EXPECT_DOUBLE_EQ(x.grad()[0], 3.0);
  EXPECT_DOUBLE_EQ(x.grad()[1], -4.0);
}

TEST(AutodiffTest, RecordedOrderIsTopological) {
  Graph<double>::active().clear();
  Tensor<double> x({2}, {1, 2}, true);
  auto a = o::relu(x);
  auto b = o::sigmoid(a);
  auto c = o::add(a, b);
  const auto& nodes = Graph<double>::active().nodes();
  for (std::size_t i = 0; i < nodes.size(); ++i)
    for (const auto& in : nodes[i].inputs)
      for (std::size_t j = i; j < nodes.size(); ++j)
        EXPECT_FALSE(nodes[j].output.same_storage(in));
  (void)c;
  Graph<double>::active().clear();
}

TEST(AutodiffTest, EveryOpMatchesFiniteDifferences) {
  for (const auto& [name, factory] : testkit::op_factories()) {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      std::mt19937_64 rng(1000 + seed);
      auto c = factory(rng);
      auto r = testkit::grad_check(c.fn, c.inputs, rng);
      EXPECT_TRUE(r.ok) << name << " seed " << seed << " rel err " << r.max_rel_error;
    }
  }
}

TEST(AutodiffTest, DeterministicForwardBackward) {
  auto run = [] {
    std::mt19937_64 rng(42);
    auto x = testkit::random_tensor({2, 3, 6, 6}, rng);
    auto w = testkit::random_tensor({4, 3, 3, 3}, rng).set_requires_grad(true);
    auto y = o::hardswish(o::conv2d(x, w, Tensor<double>(), {2, 1}));
    backward(o::mean(y));
    return std::vector<double>(w.grad().begin(), w.grad().end());
  };
  EXPECT_EQ(run(), run());
}

TEST(AdamTest, FirstStepMovesByLearningRate) {
  Tensor<double> p = Tensor<double>::scalar(0.0, true);
  Adam<double> opt({{"p", p}}, {0.1, 0.9, 0.999, 1e-8, 0.0});
  p.grad_mut()[0] = 1.0;
  opt.step();
  EXPECT_NEAR(p.item(), -0.1, 1e-6);
  EXPECT_EQ(opt.step_count(), 1u);
}

TEST(AdamTest, ZeroGradLeavesParameterUnchanged) {
  Tensor<double> p({2}, {0.3, -0.7}, true);
  Adam<double> opt({{"p", p}}, {});
  opt.zero_grad();
  opt.step();
  EXPECT_EQ(p.data()[0], 0.3);
  EXPECT_EQ(p.data()[1], -0.7);
}

TEST(AdamTest, ZeroLearningRateTwoSteps) {
  Tensor<float> p({3}, {1.f, 2.f, 3.f}, true);
  AdamSettings s;
  s.lr = 0.0;
  Adam<float> opt({{"p", p}}, s);
  for (int i = 0; i < 2; ++i) {
    p.grad_mut()[0] = 5.f;
    opt.step();
  }
  EXPECT_EQ(p.data()[0], 1.f);
  EXPECT_EQ(opt.step_count(), 2u);
}

TEST(AdamTest, MissingGradNamesParameter) {
  Tensor<float> p = Tensor<float>::scalar(1.f, true);
  Adam<float> opt({{"encoder.stem.weight", p}}, {});
  try {
    opt.step();
    FAIL();
  } catch (const std::invalid_argument& e) {
    EXPECT_NE(std::string(e.what()).find("encoder.stem.weight"), std::string::npos);
  }
}
