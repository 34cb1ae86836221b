#include "skinrf/optim.hpp"

#include <cmath>
#include <string>

#include "skinrf/error.hpp"

namespace skinrf {

AdamState AdamState::for_params(std::size_t size) {
  AdamState s;
  s.m.assign(size, 0.0);
  s.v.assign(size, 0.0);
  return s;
}

void adam_step(ParamStore& params, std::span<const double> grads, AdamState& state, double lr) {
  const std::size_t n = params.size();
  if (grads.size() != n || state.m.size() != n || state.v.size() != n) {
    throw UsageError("adam_step: parameter, gradient and moment sizes differ (" + std::to_string(n) + ", " +
                     std::to_string(grads.size()) + ", " + std::to_string(state.m.size()) + ")");
  }
  ++state.step_count;
  const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step_count));
  const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step_count));
  std::span<double> theta = params.values();
  for (const ParamBlock& b : params.blocks()) {
    if (!b.trainable) continue;
    for (std::size_t i = b.offset; i < b.offset + b.size(); ++i) {
      const double g = grads[i];
      state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * g;
      state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * g * g;
      const double m_hat = state.m[i] / c1;
      const double v_hat = state.v[i] / c2;
      theta[i] -= lr * m_hat / (std::sqrt(v_hat) + state.epsilon);
    }
  }
}

double lr_at(long iteration, long total, double start, double end) {
  if (total <= 0) return start;
  if (iteration < 0 || iteration > total) throw UsageError("lr_at: iteration outside [0, total]");
  if (iteration == total) return end;
  const double f = static_cast<double>(iteration) / static_cast<double>(total);
  return start * std::pow(end / start, f);
}

}  // namespace skinrf
