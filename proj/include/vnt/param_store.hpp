#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <vector>

#include "vnt/tape.hpp"
#include "vnt/tensor.hpp"

namespace vnt {

/// Parameter name -> variable bound on a tape.
using Bindings = std::map<std::string, Var>;

/// Named, shaped parameter tensors with gradient accumulators. Iteration is
/// in name order, which keeps every derived computation deterministic.
class ParamStore {
 public:
  struct Entry {
    Shape shape;
    std::vector<double> value;
    std::vector<double> grad;
  };

  void add(const std::string& name, const Tensor& init);
  bool contains(const std::string& name) const { return entries_.count(name) != 0; }
  Tensor tensor(const std::string& name) const;
  const Entry& entry(const std::string& name) const;
  Entry& entry(const std::string& name);
  const std::map<std::string, Entry>& entries() const { return entries_; }
  std::map<std::string, Entry>& entries() { return entries_; }
  std::size_t scalar_count() const;
  std::size_t size() const { return entries_.size(); }

  void zero_grad();
  /// Leaves on `tape` holding a copy of every parameter.
  Bindings bind(Tape& tape, bool requires_grad = true) const;
  /// grad += weight * tape gradient, for every bound parameter.
  void accumulate_grads(const Tape& tape, const Bindings& bound, double weight = 1.0);
  /// grad += weight * other.grad (reduction of per-worker gradients).
  void accumulate_grads(const ParamStore& other, double weight = 1.0);

  friend bool operator==(const ParamStore& a, const ParamStore& b);

 private:
  std::map<std::string, Entry> entries_;
};

/// Bitwise equality of values (gradients ignored).
bool operator==(const ParamStore& a, const ParamStore& b);

}  // namespace vnt
