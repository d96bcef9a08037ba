#include <gtest/gtest.h>

#include <cmath>
#include <stdexcept>

#include "latent_shield/autodiff.hpp"
#include "latent_shield/grad_check.hpp"
#include "latent_shield/rng.hpp"

using namespace lshield;

TEST(Conv2d, AllOnesContraction) {
  Tape tape;
  Var x = tape.constant(Tensor({1, 1, 3, 3}, 1.0));
  Var k = tape.constant(Tensor({1, 1, 3, 3}, 1.0));
  Var y = conv2d(x, k, std::nullopt, {1, 0});
  ASSERT_EQ(y.shape(), (Shape{1, 1, 1, 1}));
  EXPECT_EQ(y.value().item(), 9.0);
}

TEST(Conv2d, IdentityKernelWithPadding) {
  Rng rng(3);
  Tensor img = rng.normal_tensor({1, 1, 5, 4});
  Tensor kernel({1, 1, 3, 3}, 0.0);
  kernel[4] = 1.0;
  Tape tape;
  Var y = conv2d(tape.constant(img), tape.constant(kernel), std::nullopt, {1, 1});
  EXPECT_EQ(y.value(), img);
}

TEST(Conv2d, StrideAndBias) {
  Tape tape;
  Tensor in({1, 1, 4, 4});
  for (std::size_t i = 0; i < in.size(); ++i) in[i] = static_cast<double>(i);
  Var y = conv2d(tape.constant(in), tape.constant(Tensor({2, 1, 2, 2}, 1.0)),
                 tape.constant(Tensor({2}, std::vector<double>{0.5, -1.0})), {2, 0});
  ASSERT_EQ(y.shape(), (Shape{1, 2, 2, 2}));
  // top-left 2x2 block: 0 + 1 + 4 + 5
  EXPECT_EQ(y.value()[0], 10.5);
  EXPECT_EQ(y.value()[4], 9.0);
}

TEST(Conv2d, ShapeMismatchNamesShapes) {
  Tape tape;
  Var x = tape.constant(Tensor({1, 2, 3, 3}));
  Var k = tape.constant(Tensor({1, 3, 3, 3}));
  try {
    conv2d(x, k, std::nullopt, {});
    FAIL() << "expected ShapeError";
  } catch (const ShapeError& e) {
    EXPECT_NE(std::string(e.what()).find("3"), std::string::npos);
  }
}

TEST(Elementwise, SquareAndLog) {
  Tape tape;
  Var a = tape.leaf(Tensor({2}, std::vector<double>{-2.0, 3.0}));
  EXPECT_EQ(square(a).value().values(), (std::vector<double>{4.0, 9.0}));

  Var one = tape.leaf(Tensor({1}, std::vector<double>{1.0}));
  Var l = log(one);
  EXPECT_EQ(l.value()[0], 0.0);
  tape.backward(sum(l));
  EXPECT_EQ(tape.grad(one)[0], 1.0);
}

TEST(Elementwise, LogOfNonPositiveNamesIndex) {
  Tape tape;
  Var a = tape.leaf(Tensor({3}, std::vector<double>{1.0, 2.0, -1.0}));
  try {
    log(a);
    FAIL() << "expected domain_error";
  } catch (const std::domain_error& e) {
    EXPECT_NE(std::string(e.what()).find("2"), std::string::npos) << e.what();
  }
}

TEST(Reduce, SumAndMean) {
  Tape tape;
  EXPECT_EQ(sum(tape.constant(Tensor({3}, std::vector<double>{1, 2, 3}))).value().item(), 6.0);
  EXPECT_EQ(mean(tape.constant(Tensor({2}, std::vector<double>{2, 4}))).value().item(), 3.0);
}

TEST(Backward, SumOfSquares) {
  Tape tape;
  Var x = tape.leaf(Tensor({2}, std::vector<double>{1.0, -2.0}));
  tape.backward(sum(square(x)));
  EXPECT_EQ(tape.grad(x).values(), (std::vector<double>{2.0, -4.0}));
}

TEST(Backward, ConstantOutputGivesZeroGradient) {
  Tape tape;
  Var x = tape.leaf(Tensor({3}, 1.5));
  Var c = tape.constant(Tensor({3}, 2.0));
  Var out = sum(mul_const(x, 0.0) + c);
  tape.backward(out);
  const Tensor g = tape.grad(x);
  for (double v : g.data()) EXPECT_EQ(v, 0.0);
}

TEST(Backward, RepeatedCallIsIdempotent) {
  Tape tape;
  Var x = tape.leaf(Tensor({2}, std::vector<double>{0.3, 0.7}));
  Var out = sum(mul(x, silu(x)));
  tape.backward(out);
  const Tensor first = tape.grad(x);
  tape.backward(out);
  EXPECT_EQ(tape.grad(x), first);
}

TEST(Backward, NonScalarOutputRejected) {
  Tape tape;
  Var x = tape.leaf(Tensor({2}, 1.0));
  EXPECT_THROW(tape.backward(square(x)), ShapeError);
}

TEST(Backward, UnreachableLeafHasZeroGradient) {
  Tape tape;
  Var x = tape.leaf(Tensor({2}, 1.0));
  Var y = tape.leaf(Tensor({2}, 1.0));
  tape.backward(sum(x));
  EXPECT_EQ(tape.grad(y), Tensor({2}, 0.0));
}

TEST(Backward, ConvSiluSumMatchesFiniteDifferences) {
  Rng rng(11);
  const Tensor kernel = rng.normal_tensor({2, 1, 3, 3});
  const Tensor bias = rng.normal_tensor({2});
  const Tensor x0 = rng.uniform_tensor({1, 1, 5, 5}, -1.0, 1.0);
  auto f = [&](Tape& tape, Var x) {
    return sum(silu(conv2d(x, tape.constant(kernel), tape.constant(bias), {1, 1})));
  };
  const GradCheckReport r = grad_check(f, x0, 1e-5, 1e-4);
  EXPECT_TRUE(r.pass) << r.rel_err;
  EXPECT_LT(r.max_rel_err, 1e-4);
}

TEST(Backward, KernelAndBiasGradients) {
  Rng rng(5);
  const Tensor x = rng.normal_tensor({2, 2, 6, 6});
  const Tensor b = rng.normal_tensor({3});
  auto wrt_kernel = [&](Tape& tape, Var k) {
    return sum(square(conv2d(tape.constant(x), k, tape.constant(b), {2, 1})));
  };
  EXPECT_TRUE(grad_check(wrt_kernel, rng.normal_tensor({3, 2, 3, 3}), 1e-5, 1e-6).pass);

  const Tensor k = rng.normal_tensor({3, 2, 3, 3});
  auto wrt_bias = [&](Tape& tape, Var bias) {
    return sum(square(conv2d(tape.constant(x), tape.constant(k), bias, {1, 0})));
  };
  EXPECT_TRUE(grad_check(wrt_bias, b, 1e-5, 1e-6).pass);
}

TEST(Backward, ElementwiseAndBinaryOps) {
  Rng rng(8);
  const Tensor other = rng.uniform_tensor({2, 3}, 0.5, 1.5);
  auto f = [&](Tape& tape, Var x) {
    Var o = tape.constant(other);
    Var a = exp(mul_const(x, 0.5)) * o;
    Var b = log(add_const(square(x), 1.0)) - o;
    return mean(a + b) + sum(reshape(x, {6}));
  };
  EXPECT_TRUE(grad_check(f, rng.normal_tensor({2, 3}), 1e-5, 1e-6).pass);
}

TEST(Backward, ConcatChannels) {
  Rng rng(9);
  const Tensor b = rng.normal_tensor({1, 2, 2, 2});
  const Tensor w = rng.normal_tensor({1, 5, 2, 2});
  auto f = [&](Tape& tape, Var a) { return sum(square(concat_channels(a, tape.constant(b))) * tape.constant(w)); };
  EXPECT_TRUE(grad_check(f, rng.normal_tensor({1, 3, 2, 2}), 1e-5, 1e-6).pass);
}

namespace {

// Square with its derivative sign-flipped, for the negative control.
Var broken_square(Var x) {
  Tape& tape = x.tape();
  Tensor out = x.value();
  for (double& v : out.data()) v = v * v;
  const std::size_t in = x.id();
  return tape.record(std::move(out), {x}, [in](Tape& t, std::size_t node) {
    const auto& g = t.grad_of(node);
    const auto& xv = t.value(in).data();
    auto& acc = t.grad_accumulator(in);
    for (std::size_t i = 0; i < g.size(); ++i) acc[i] -= 2.0 * xv[i] * g[i];
  });
}

}  // namespace

TEST(GradCheck, WrongBackwardFails) {
  Rng rng(2);
  auto f = [](Tape&, Var x) { return sum(broken_square(x)); };
  const GradCheckReport r = grad_check(f, rng.uniform_tensor({4}, 0.5, 1.0), 1e-5, 1e-4);
  EXPECT_FALSE(r.pass);
  EXPECT_GT(r.rel_err, 1.0);
}

TEST(GradCheck, NanIsReportedWithLocation) {
  auto f = [](Tape& tape, Var x) {
    Tensor w({3}, std::vector<double>{1.0, std::nan(""), 1.0});
    return sum(x * tape.constant(w));
  };
  Tensor x({3}, 1.0);
  const GradCheckReport r = grad_check(f, x, 1e-5, 1e-4);
  EXPECT_FALSE(r.pass);
  EXPECT_NE(r.failure.find("NaN gradient at flat index"), std::string::npos) << r.failure;
}

TEST(GradCheck, ZeroGradientsPass) {
  auto f = [](Tape& tape, Var x) { return sum(tape.constant(Tensor({1}, 3.0))) + sum(mul_const(x, 0.0)); };
  const GradCheckReport r = grad_check(f, Tensor({3}, 1.0), 1e-4, 1e-12);
  EXPECT_TRUE(r.pass);
  EXPECT_EQ(r.rel_err, 0.0);
}

TEST(GradCheck, StepOutOfRangeRejected) {
  auto f = [](Tape&, Var x) { return sum(x); };
  EXPECT_THROW(grad_check(f, Tensor({1}, 1.0), 0.0, 1e-4), std::invalid_argument);
  EXPECT_THROW(grad_check(f, Tensor({1}, 1.0), 0.1, 1e-4), std::invalid_argument);
}
