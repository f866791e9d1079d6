#include <gtest/gtest.h>

#include "vnt/errors.hpp"
#include "vnt/ops.hpp"

using namespace vnt;

TEST(Tape, BackwardRequiresScalarLoss) {
  Tape t;
  const Var x = t.leaf(Tensor({2}, {1, 2}));
  EXPECT_THROW(t.backward(mul(x, x)), ContractError);
}

TEST(Tape, ReusedInputsAccumulate) {
  Tape t;
  const Var x = t.leaf(Tensor({2}, {3, -1}));
  t.backward(sum(add(mul(x, x), x)));
  const Tensor g = t.grad(x);
  EXPECT_DOUBLE_EQ(g[0], 7.0);
  EXPECT_DOUBLE_EQ(g[1], -1.0);
}

TEST(Tape, ConstantsGetNoGradient) {
  Tape t;
  const Var c = t.constant(Tensor({1}, {2}));
  const Var x = t.leaf(Tensor({1}, {5}));
  t.backward(sum(mul(c, x)));
  EXPECT_FALSE(c.requires_grad());
  EXPECT_DOUBLE_EQ(t.grad(c)[0], 0.0);
  EXPECT_DOUBLE_EQ(t.grad(x)[0], 2.0);
}

TEST(Tape, NoRecordModeComputesValuesOnly) {
  Tape t(false);
  const Var x = t.leaf(Tensor({2}, {1, 2}));
  const Var y = sum(mul(x, x));
  EXPECT_FALSE(t.recording());
  EXPECT_FALSE(y.requires_grad());
  EXPECT_DOUBLE_EQ(y.value().item(), 5.0);
}

TEST(Tape, ValueReferencesSurviveLaterRecords) {
  Tape t(false);
  const Var x = t.leaf(Tensor({1}, {1}));
  const Tensor& v = x.value();
  for (int i = 0; i < 1000; ++i) t.constant(Tensor({1}, {double(i)}));
  EXPECT_DOUBLE_EQ(v[0], 1.0);
}
