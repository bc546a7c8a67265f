#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "vlnwb/rng.hpp"

namespace vlnwb {

// Reference precision is 64-bit; checkpoints and feature files may carry
// 32-bit payloads (widened deterministically on load).
using Real = double;

inline int64_t shape_numel(std::span<const int> shape) {
  int64_t n = 1;
  for (int d : shape) {
    if (d <= 0) throw std::runtime_error("tensor: non-positive dimension");
    n *= d;
  }
  return n;
}

struct Tensor {
  std::vector<int> shape;
  std::vector<Real> data;
  std::vector<Real> grad;
  bool requires_grad = false;

  Tensor() = default;
  Tensor(std::vector<int> s, bool req = false) : shape(std::move(s)), requires_grad(req) {
    data.assign(static_cast<size_t>(shape_numel(shape)), 0.0);
    if (requires_grad) grad.assign(data.size(), 0.0);
  }

  int64_t numel() const { return static_cast<int64_t>(data.size()); }
  void zero_grad() { std::fill(grad.begin(), grad.end(), 0.0); }
};

struct AdamSlot {
  std::vector<Real> m, v;
};

// Named parameters with stable (registration) iteration order plus per-parameter
// Adam state and the global optimizer step count.
class ParamStore {
 public:
  Tensor& add(const std::string& name, std::vector<int> shape) {
    if (params_.count(name)) throw std::runtime_error("params: duplicate name '" + name + "'");
    order_.push_back(name);
    auto& t = params_[name];
    t = Tensor(std::move(shape), /*req=*/true);
    slots_[name] = {std::vector<Real>(t.data.size(), 0.0), std::vector<Real>(t.data.size(), 0.0)};
    return t;
  }

  // uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)); fan_in is the per-output input
  // count for rank >= 2 and the vector length for rank 1.
  Tensor& add_uniform(const std::string& name, std::vector<int> shape, Rng& rng) {
    auto& t = add(name, std::move(shape));
    const int64_t fan_in = t.shape.size() >= 2 ? t.numel() / t.shape[0] : t.numel();
    const Real bound = 1.0 / std::sqrt(static_cast<Real>(fan_in));
    for (auto& x : t.data) x = rng.uniform(-bound, bound);
    return t;
  }

  bool has(const std::string& name) const { return params_.count(name) > 0; }

  Tensor& at(const std::string& name) {
    const auto it = params_.find(name);
    if (it == params_.end()) throw std::runtime_error("params: unknown name '" + name + "'");
    return it->second;
  }
  const Tensor& at(const std::string& name) const {
    const auto it = params_.find(name);
    if (it == params_.end()) throw std::runtime_error("params: unknown name '" + name + "'");
    return it->second;
  }

  AdamSlot& adam_slot(const std::string& name) { return slots_.at(name); }
  const AdamSlot& adam_slot(const std::string& name) const { return slots_.at(name); }

  const std::vector<std::string>& names() const { return order_; }

  void zero_grads() {
    for (const auto& n : order_) params_[n].zero_grad();
  }

  // fresh Adam moments and step count (used at stage boundaries)
  void reset_optimizer() {
    for (const auto& n : order_) {
      auto& slot = slots_[n];
      std::fill(slot.m.begin(), slot.m.end(), 0.0);
      std::fill(slot.v.begin(), slot.v.end(), 0.0);
    }
    step = 0;
  }

  int64_t total_parameters() const {
    int64_t n = 0;
    for (const auto& name : order_) n += params_.at(name).numel();
    return n;
  }

  uint64_t step = 0;

 private:
  std::vector<std::string> order_;
  std::unordered_map<std::string, Tensor> params_;
  std::unordered_map<std::string, AdamSlot> slots_;
};

}  // namespace vlnwb
