#pragma once

#include <array>
#include <cstdint>
#include <random>
#include <string>
#include <string_view>

#include "vnt/tensor.hpp"

namespace vnt {

/// All randomness goes through explicitly seeded generators of this type.
using Rng = std::mt19937_64;

/// Independent stream for (seed, a, b), e.g. (seed, epoch, sample index).
Rng derive_rng(std::uint64_t seed, std::uint64_t a = 0, std::uint64_t b = 0);

/// Element of SO(3). Acts on row vectors from the right: v -> v·R.
class Rotation {
 public:
  Rotation();  // identity
  /// Row-major 3x3 matrix; throws ContractError unless orthonormal with
  /// determinant +1 (1e-12 in 64-bit mode, 1e-6 in 32-bit mode).
  explicit Rotation(const std::array<double, 9>& m);

  static Rotation about_z(double angle);
  /// Rotation of a unit quaternion (w, x, y, z); normalizes its input.
  static Rotation from_quaternion(double w, double x, double y, double z);

  const std::array<double, 9>& matrix() const noexcept { return m_; }
  double operator()(int row, int col) const noexcept { return m_[row * 3 + col]; }
  Tensor as_tensor() const;
  Rotation transposed() const;

  /// Right-multiplies every 3-vector along the last axis of `v`.
  Tensor apply(const Tensor& v) const;

 private:
  std::array<double, 9> m_;
};

enum class RotationProtocol { None, Z, SO3 };

RotationProtocol parse_protocol(std::string_view s);
std::string to_string(RotationProtocol p);

/// none -> identity; z -> uniform angle about the z axis; so3 -> Haar
/// uniform via a uniform unit quaternion.
Rotation sample_rotation(RotationProtocol protocol, Rng& rng);

}  // namespace vnt
