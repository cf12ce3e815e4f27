#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "h4vdm/nn.hpp"
#include "h4vdm/rng.hpp"

namespace h4vdm::nn {

struct GradCheckResult {
  double max_rel_err = 0.0;
  std::string worst_param;
  long coords_checked = 0;
};

// Central-difference verification of analytic gradients.
//   loss          pure forward pass returning the scalar loss
//   compute_grads zeroes grads then runs forward+backward at the current
//                 weights, leaving analytic gradients in each Param's g
//   visit         model's canonical parameter visitor
//   per_param     random coordinates sampled per parameter tensor
//   h_scale       central-difference step factor; h = h_scale * max(1, |w|)
// Relative error uses a 1e-6 denominator floor.  Intended for
// double-precision models.  The default step suits shallow losses; deep
// compositions evaluate with more round-off and resolve better near 1e-4.
template <typename T>
GradCheckResult check_gradients(const std::function<double()>& loss,
                                const std::function<void()>& compute_grads,
                                const std::function<void(const ParamVisitor<T>&)>& visit,
                                int per_param, uint64_t seed, double h_scale = 1e-5) {
  compute_grads();
  struct Entry {
    Param<T>* p;
    std::vector<double> analytic;
  };
  std::vector<Entry> entries;
  visit([&](Param<T>& p) {
    Entry e{&p, {}};
    e.analytic.assign(p.g.v.begin(), p.g.v.end());
    entries.push_back(std::move(e));
  });

  GradCheckResult res;
  for (size_t pi = 0; pi < entries.size(); ++pi) {
    Param<T>& p = *entries[pi].p;
    if (p.size() == 0) continue;
    Rng rng(mix_seed(seed, pi));
    size_t n = std::min<size_t>(size_t(per_param), p.size());
    std::vector<size_t> coords(p.size());
    for (size_t i = 0; i < coords.size(); ++i) coords[i] = i;
    rng.shuffle(coords.begin(), coords.end());
    for (size_t ci = 0; ci < n; ++ci) {
      size_t idx = coords[ci];
      T w0 = p.w.v[idx];
      double h = h_scale * std::max(1.0, std::abs(double(w0)));
      p.w.v[idx] = T(double(w0) + h);
      double lp = loss();
      p.w.v[idx] = T(double(w0) - h);
      double lm = loss();
      p.w.v[idx] = w0;
      double numeric = (lp - lm) / (2.0 * h);
      double analytic = entries[pi].analytic[idx];
      double denom = std::max(std::max(std::abs(analytic), std::abs(numeric)), 1e-6);
      double rel = std::abs(analytic - numeric) / denom;
      ++res.coords_checked;
      if (rel > res.max_rel_err) {
        res.max_rel_err = rel;
        res.worst_param = p.name;
      }
    }
  }
  return res;
}

}  // namespace h4vdm::nn
