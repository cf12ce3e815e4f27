#pragma once

#include <cmath>
#include <vector>

#include "h4vdm/nn.hpp"

namespace h4vdm::nn {

// Epoch learning-rate schedule: linear warmup to `base` over `warmup`
// epochs, then multiplicative decay per epoch.
inline double lr_at(int epoch, double base = 8e-6, int warmup = 5, double decay = 0.97) {
  if (epoch < warmup) return base * double(epoch + 1) / double(warmup);
  return base * std::pow(decay, epoch - warmup);
}

// Adam with bias correction; first/second moments are kept in double
// regardless of the parameter element type.
template <typename T>
struct Adam {
  double lr = 8e-6;
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  long t = 0;

  struct Slot {
    Param<T>* p;
    std::vector<double> m, v;
  };
  std::vector<Slot> slots;

  explicit Adam(double lr_ = 8e-6) : lr(lr_) {}

  // Attach every parameter in the model's canonical visit order.
  void attach(const std::function<void(const ParamVisitor<T>&)>& visit) {
    visit([this](Param<T>& p) {
      slots.push_back({&p, std::vector<double>(p.size(), 0.0), std::vector<double>(p.size(), 0.0)});
    });
  }

  void step() {
    ++t;
    double bc1 = 1.0 - std::pow(beta1, double(t));
    double bc2 = 1.0 - std::pow(beta2, double(t));
    for (auto& s : slots) {
      for (size_t i = 0; i < s.p->size(); ++i) {
        double g = double(s.p->g.v[i]);
        s.m[i] = beta1 * s.m[i] + (1.0 - beta1) * g;
        s.v[i] = beta2 * s.v[i] + (1.0 - beta2) * g * g;
        double mhat = s.m[i] / bc1;
        double vhat = s.v[i] / bc2;
        s.p->w.v[i] = T(double(s.p->w.v[i]) - lr * mhat / (std::sqrt(vhat) + eps));
      }
    }
  }
};

}  // namespace h4vdm::nn
