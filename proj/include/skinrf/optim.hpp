#pragma once

#include <span>
#include <vector>

#include "skinrf/params.hpp"

namespace skinrf {

struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  long step_count = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  static AdamState for_params(std::size_t size);
};

// One bias-corrected Adam update. Only trainable blocks move; frozen blocks and their
// moments are left untouched.
void adam_step(ParamStore& params, std::span<const double> grads, AdamState& state, double lr);

inline constexpr double kLearningRateStart = 5e-4;
inline constexpr double kLearningRateEnd = 5e-5;

// Geometric decay from `start` at iteration 0 to `end` at `total`.
double lr_at(long iteration, long total, double start = kLearningRateStart, double end = kLearningRateEnd);

}  // namespace skinrf
