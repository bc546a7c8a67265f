#include "vlnwb/adam.hpp"

#include <cmath>
#include <stdexcept>

namespace vlnwb {

void adam_step(ParamStore& store, const AdamConfig& cfg) {
  if (!(cfg.lr > 0.0)) throw std::runtime_error("adam: learning rate must be > 0");
  if (!(cfg.beta1 >= 0.0 && cfg.beta1 < 1.0 && cfg.beta2 >= 0.0 && cfg.beta2 < 1.0))
    throw std::runtime_error("adam: betas must be in [0,1)");

  ++store.step;
  const double t = static_cast<double>(store.step);
  const double bc1 = 1.0 - std::pow(cfg.beta1, t);
  const double bc2 = 1.0 - std::pow(cfg.beta2, t);

  for (const auto& name : store.names()) {
    double lr = cfg.lr;
    for (const auto& [prefix, rate] : cfg.lr_overrides)
      if (name.rfind(prefix, 0) == 0) {
        lr = rate;
        break;
      }
    Tensor& p = store.at(name);
    AdamSlot& slot = store.adam_slot(name);
    for (size_t i = 0; i < p.data.size(); ++i) {
      const double g = p.grad[i];
      slot.m[i] = cfg.beta1 * slot.m[i] + (1.0 - cfg.beta1) * g;
      slot.v[i] = cfg.beta2 * slot.v[i] + (1.0 - cfg.beta2) * g * g;
      const double mhat = slot.m[i] / bc1;
      const double vhat = slot.v[i] / bc2;
      p.data[i] -= lr * mhat / (std::sqrt(vhat) + cfg.eps);
    }
  }
}

}  // namespace vlnwb
