#include "vnt/rotation.hpp"

#include <cmath>
#include <numbers>

#include "vnt/errors.hpp"

namespace vnt {

Rng derive_rng(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(a),    static_cast<std::uint32_t>(a >> 32),
                    static_cast<std::uint32_t>(b),    static_cast<std::uint32_t>(b >> 32)};
  return Rng(seq);
}

Rotation::Rotation() : m_{1, 0, 0, 0, 1, 0, 0, 0, 1} {}

Rotation::Rotation(const std::array<double, 9>& m) : m_(m) {
  const double tol = precision() == Precision::Float64 ? 1e-12 : 1e-6;
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) {
      double s = 0.0;
      for (int k = 0; k < 3; ++k) s += m[k * 3 + i] * m[k * 3 + j];
      if (std::abs(s - (i == j ? 1.0 : 0.0)) > tol) throw ContractError("rotation matrix is not orthonormal");
    }
  }
  const double det = m[0] * (m[4] * m[8] - m[5] * m[7]) - m[1] * (m[3] * m[8] - m[5] * m[6]) +
                     m[2] * (m[3] * m[7] - m[4] * m[6]);
  if (std::abs(det - 1.0) > tol) throw ContractError("rotation matrix determinant is not +1");
}

Rotation Rotation::about_z(double angle) {
  const double c = std::cos(angle), s = std::sin(angle);
  return Rotation({c, s, 0, -s, c, 0, 0, 0, 1});
}

Rotation Rotation::from_quaternion(double w, double x, double y, double z) {
  const double n = std::sqrt(w * w + x * x + y * y + z * z);
  w /= n;
  x /= n;
  y /= n;
  z /= n;
  // Column-vector rotation matrix, stored transposed so that v·R applies it.
  const std::array<double, 9> col{1 - 2 * (y * y + z * z), 2 * (x * y - w * z),     2 * (x * z + w * y),
                                  2 * (x * y + w * z),     1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
                                  2 * (x * z - w * y),     2 * (y * z + w * x),     1 - 2 * (x * x + y * y)};
  std::array<double, 9> row{};
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) row[i * 3 + j] = col[j * 3 + i];
  }
  return Rotation(row);
}

Tensor Rotation::as_tensor() const { return Tensor({3, 3}, std::vector<double>(m_.begin(), m_.end())); }

Rotation Rotation::transposed() const {
  std::array<double, 9> t{};
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) t[i * 3 + j] = m_[j * 3 + i];
  }
  return Rotation(t);
}

Tensor Rotation::apply(const Tensor& v) const {
  if (v.shape().back() != 3) throw DimensionError("rotation: last axis must be 3, got " + shape_str(v.shape()));
  const auto x = v.data();
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); i += 3) {
    for (int j = 0; j < 3; ++j) {
      out[i + j] = x[i] * m_[j] + x[i + 1] * m_[3 + j] + x[i + 2] * m_[6 + j];
    }
  }
  return Tensor(v.shape(), std::move(out));
}

RotationProtocol parse_protocol(std::string_view s) {
  if (s == "none" || s == "I") return RotationProtocol::None;
  if (s == "z") return RotationProtocol::Z;
  if (s == "so3" || s == "SO3") return RotationProtocol::SO3;
  throw ConfigError("unknown rotation protocol '" + std::string(s) + "' (expected none|z|so3)");
}

std::string to_string(RotationProtocol p) {
  switch (p) {
    case RotationProtocol::None: return "none";
    case RotationProtocol::Z: return "z";
    case RotationProtocol::SO3: return "so3";
  }
  return "none";
}

Rotation sample_rotation(RotationProtocol protocol, Rng& rng) {
  switch (protocol) {
    case RotationProtocol::None:
      return Rotation();
    case RotationProtocol::Z: {
      std::uniform_real_distribution<double> angle(0.0, 2.0 * std::numbers::pi);
      return Rotation::about_z(angle(rng));
    }
    case RotationProtocol::SO3: {
      std::normal_distribution<double> gauss(0.0, 1.0);
      double w = 0, x = 0, y = 0, z = 0, n = 0;
      do {
        w = gauss(rng);
        x = gauss(rng);
        y = gauss(rng);
        z = gauss(rng);
        n = w * w + x * x + y * y + z * z;
      } while (n < 1e-12);
      return Rotation::from_quaternion(w, x, y, z);
    }
  }
  return Rotation();
}

}  // namespace vnt
