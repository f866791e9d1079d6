#pragma once

#include <cstddef>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace vnt {

using Shape = std::vector<std::size_t>;

/// Storage precision for every tensor created from now on. In Float32 mode
/// values are rounded through `float` on construction, so each op result
/// behaves as if it were stored in single precision.
enum class Precision { Float64, Float32 };

void set_precision(Precision p);
Precision precision();

/// When enabled, finiteness is re-checked on every op output and models
/// check their input contracts. Off by default.
void set_debug_checks(bool on);
bool debug_checks();

std::size_t shape_size(const Shape& shape);
std::string shape_str(const Shape& shape);

/// Immutable dense row-major array of doubles. Copies share storage.
class Tensor {
 public:
  Tensor();
  Tensor(Shape shape, std::vector<double> data);
  Tensor(Shape shape, std::initializer_list<double> data);
  /// Shares `data` without copying. Edits made through `data` afterwards
  /// are visible to every copy and bypass validation.
  Tensor(Shape shape, std::shared_ptr<std::vector<double>> data);

  static Tensor zeros(Shape shape);
  static Tensor full(Shape shape, double value);
  static Tensor scalar(double value);
  /// 3x3 (or n x n) identity.
  static Tensor eye(std::size_t n);

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t size() const noexcept { return data_ ? data_->size() : 0; }
  std::span<const double> data() const noexcept;
  double operator[](std::size_t i) const noexcept { return (*data_)[i]; }
  /// Row-major multi-index access; slow, meant for tests and small code.
  double at(std::initializer_list<std::size_t> index) const;
  double item() const;

  Tensor reshaped(Shape shape) const;
  std::vector<double> to_vector() const { return {data().begin(), data().end()}; }

 private:
  Shape shape_;
  std::shared_ptr<const std::vector<double>> data_;
};

double max_abs_diff(const Tensor& a, const Tensor& b);
double max_abs(const Tensor& a);
bool bitwise_equal(const Tensor& a, const Tensor& b);

}  // namespace vnt
