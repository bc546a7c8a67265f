#pragma once

#include <string>
#include <utility>
#include <vector>

#include "vlnwb/tensor.hpp"

namespace vlnwb {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  // name-prefix learning-rate overrides, first match wins (e.g. the embedder
  // runs at its own rate while the rest of the model uses `lr`)
  std::vector<std::pair<std::string, double>> lr_overrides;
};

// Standard Adam with bias correction over every registered parameter in
// registration order; increments store.step. Gradients are left in place
// (call store.zero_grads() before the next forward pass).
void adam_step(ParamStore& store, const AdamConfig& cfg);

}  // namespace vlnwb
