#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "vnt/errors.hpp"
#include "vnt/rotation.hpp"

using namespace vnt;

namespace {

double orthonormality_error(const Rotation& r) {
  double err = 0.0;
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) {
      double s = 0.0;
      for (int k = 0; k < 3; ++k) s += r(i, k) * r(j, k);
      err = std::max(err, std::abs(s - (i == j ? 1.0 : 0.0)));
    }
  }
  return err;
}

double det(const Rotation& r) {
  return r(0, 0) * (r(1, 1) * r(2, 2) - r(1, 2) * r(2, 1)) - r(0, 1) * (r(1, 0) * r(2, 2) - r(1, 2) * r(2, 0)) +
         r(0, 2) * (r(1, 0) * r(2, 1) - r(1, 1) * r(2, 0));
}

}  // namespace

TEST(Rotation, ConstructorValidates) {
  EXPECT_NO_THROW(Rotation({1, 0, 0, 0, 1, 0, 0, 0, 1}));
  EXPECT_THROW(Rotation({1, 0, 0, 0, 1, 0, 0, 0, -1}), ContractError);
  EXPECT_THROW(Rotation({2, 0, 0, 0, 1, 0, 0, 0, 1}), ContractError);
  EXPECT_THROW(Rotation({1, 1e-9, 0, 0, 1, 0, 0, 0, 1}), ContractError);
}

TEST(Rotation, AboutZActsOnRowVectors) {
  const Rotation r = Rotation::about_z(std::numbers::pi / 2);
  // row vector (1,0,0) times R: (c, s, 0)
  const Tensor v = r.apply(Tensor({1, 3}, {1, 0, 0}));
  EXPECT_NEAR(v[0], 0.0, 1e-15);
  EXPECT_NEAR(v[1], 1.0, 1e-15);
  EXPECT_DOUBLE_EQ(v[2], 0.0);
  EXPECT_THROW(r.apply(Tensor::zeros({2, 2})), DimensionError);
}

TEST(Rotation, TransposeInverts) {
  Rng rng(3);
  const Rotation r = sample_rotation(RotationProtocol::SO3, rng);
  const Tensor v({2, 3}, {0.3, -1, 2, 5, 0, 1});
  EXPECT_LE(max_abs_diff(r.transposed().apply(r.apply(v)), v), 1e-14);
}

TEST(Rotation, SamplesAreProperRotations) {
  Rng rng(7);
  for (int i = 0; i < 200; ++i) {
    const Rotation r = sample_rotation(RotationProtocol::SO3, rng);
    EXPECT_LE(orthonormality_error(r), 1e-12);
    EXPECT_NEAR(det(r), 1.0, 1e-12);
  }
  const Rotation z = sample_rotation(RotationProtocol::Z, rng);
  EXPECT_DOUBLE_EQ(z(2, 2), 1.0);
  EXPECT_DOUBLE_EQ(z(0, 2), 0.0);
  Rng other(7);
  EXPECT_EQ(sample_rotation(RotationProtocol::None, other).matrix(), Rotation().matrix());
}

TEST(Rotation, HaarSamplesHaveZeroMeanMatrix) {
  Rng rng(11);
  std::array<double, 9> mean{};
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    const Rotation r = sample_rotation(RotationProtocol::SO3, rng);
    for (int k = 0; k < 9; ++k) mean[k] += r.matrix()[k] / n;
  }
  for (double m : mean) EXPECT_LE(std::abs(m), 0.05);
}

TEST(Rotation, ProtocolParsing) {
  EXPECT_EQ(parse_protocol("none"), RotationProtocol::None);
  EXPECT_EQ(parse_protocol("I"), RotationProtocol::None);
  EXPECT_EQ(parse_protocol("z"), RotationProtocol::Z);
  EXPECT_EQ(parse_protocol("SO3"), RotationProtocol::SO3);
  EXPECT_THROW(parse_protocol("x"), ConfigError);
  EXPECT_EQ(to_string(RotationProtocol::SO3), "so3");
}

TEST(Rotation, DerivedStreamsDiffer) {
  Rng a = derive_rng(1, 2, 3), b = derive_rng(1, 2, 4), c = derive_rng(1, 2, 3);
  const auto x = a();
  EXPECT_NE(x, b());
  EXPECT_EQ(x, c());
}
