#include "vnt/param_store.hpp"

#include <algorithm>
#include <cstring>

#include "vnt/errors.hpp"

namespace vnt {

void ParamStore::add(const std::string& name, const Tensor& init) {
  if (contains(name)) throw ConfigError("duplicate parameter '" + name + "'");
  entries_.emplace(name, Entry{init.shape(), init.to_vector(), std::vector<double>(init.size(), 0.0)});
}

const ParamStore::Entry& ParamStore::entry(const std::string& name) const {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw ConfigError("unknown parameter '" + name + "'");
  return it->second;
}

ParamStore::Entry& ParamStore::entry(const std::string& name) {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw ConfigError("unknown parameter '" + name + "'");
  return it->second;
}

Tensor ParamStore::tensor(const std::string& name) const {
  const Entry& e = entry(name);
  return Tensor(e.shape, e.value);
}

std::size_t ParamStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& [name, e] : entries_) n += e.value.size();
  return n;
}

void ParamStore::zero_grad() {
  for (auto& [name, e] : entries_) std::fill(e.grad.begin(), e.grad.end(), 0.0);
}

Bindings ParamStore::bind(Tape& tape, bool requires_grad) const {
  Bindings out;
  for (const auto& [name, e] : entries_) out.emplace(name, tape.leaf(Tensor(e.shape, e.value), requires_grad));
  return out;
}

void ParamStore::accumulate_grads(const Tape& tape, const Bindings& bound, double weight) {
  for (const auto& [name, var] : bound) {
    auto it = entries_.find(name);
    if (it == entries_.end()) continue;
    const Tensor g = tape.grad(var);
    auto& dst = it->second.grad;
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += weight * g[i];
  }
}

void ParamStore::accumulate_grads(const ParamStore& other, double weight) {
  for (auto& [name, e] : entries_) {
    const Entry& o = other.entry(name);
    for (std::size_t i = 0; i < e.grad.size(); ++i) e.grad[i] += weight * o.grad[i];
  }
}

bool operator==(const ParamStore& a, const ParamStore& b) {
  if (a.entries_.size() != b.entries_.size()) return false;
  for (auto ia = a.entries_.begin(), ib = b.entries_.begin(); ia != a.entries_.end(); ++ia, ++ib) {
    if (ia->first != ib->first || ia->second.shape != ib->second.shape) return false;
    if (std::memcmp(ia->second.value.data(), ib->second.value.data(), ia->second.value.size() * sizeof(double)) != 0) {
      return false;
    }
  }
  return true;
}

}  // namespace vnt
