#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <initializer_list>
#include <span>
#include <vector>

#include "vnt/tensor.hpp"

namespace vnt {

class Tape;

/// Handle to a value recorded on a Tape. Cheap to copy; valid while the
/// tape lives.
class Var {
 public:
  Var() = default;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  std::size_t dim(std::size_t axis) const { return value().dim(axis); }
  bool requires_grad() const;
  Tape& tape() const { return *tape_; }
  std::size_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Reverse-mode gradient tape. Ops append nodes in execution order, so the
/// node list is always topologically sorted. Single-threaded.
class Tape {
 public:
  /// Backward rule: receives the gradient of the node output and pushes
  /// contributions into its inputs through grad_buffer().
  using Backward = std::function<void(std::span<const double> grad_out, Tape& tape)>;

  /// With record == false ops only compute values (no backward closures).
  explicit Tape(bool record = true) : record_(record) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  Var leaf(Tensor value, bool requires_grad = true);
  /// Appends an op result. `fn` is dropped when no input requires a gradient.
  Var record(Tensor value, std::initializer_list<Var> inputs, Backward fn);
  Var record(Tensor value, std::span<const Var> inputs, Backward fn);

  /// Accumulates d(loss)/d(node) for every node reachable from `loss`.
  void backward(Var loss);

  /// Gradient of a node after backward(); zeros if none flowed into it.
  Tensor grad(Var v) const;
  /// Mutable gradient accumulator of `v`, zero-initialized on first use.
  std::vector<double>& grad_buffer(Var v);

  bool recording() const { return record_; }
  std::size_t size() const { return nodes_.size(); }
  const Tensor& value(std::size_t id) const { return nodes_[id].value; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }

 private:
  struct Node {
    Tensor value;
    bool requires_grad = false;
    Backward backward;
    std::vector<double> grad;
  };

  std::deque<Node> nodes_;
  bool record_;
};

inline const Tensor& Var::value() const { return tape_->value(id_); }
inline bool Var::requires_grad() const { return tape_->requires_grad(id_); }

}  // namespace vnt
