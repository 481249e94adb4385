#pragma once

#include <cstddef>
#include <cstdint>

#include "nfb/mlp.h"

namespace nfb {

template <typename T>
struct BasicAdamWState {
  BasicGradientBuffer<T> m;
  BasicGradientBuffer<T> v;
  std::uint64_t step_count = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

using AdamWState = BasicAdamWState<float>;
using AdamWStateD = BasicAdamWState<double>;

template <typename T>
BasicAdamWState<T> InitAdamW(const BasicMlpParams<T>& params, double beta1 = 0.9,
                             double beta2 = 0.999, double eps = 1e-8);

// One AdamW step with bias correction. The decoupled decay lr * wd * theta
// uses the parameter value from before the step, so
//   theta' = theta * (1 - lr * wd) - lr * m_hat / (sqrt(v_hat) + eps).
template <typename T>
void AdamWStep(BasicMlpParams<T>& params, const BasicGradientBuffer<T>& grads,
               BasicAdamWState<T>& state, double lr, double weight_decay);

struct OneCycleSchedule {
  double max_lr = 1e-3;
  std::size_t total_steps = 1;
  double pct_start = 0.3;
  double div_factor = 25.0;
  double final_div_factor = 1e4;

  double initial_lr() const { return max_lr / div_factor; }
  double final_lr() const { return max_lr / final_div_factor; }
  // round(pct_start * total_steps), clamped to [1, total_steps - 2] so both
  // phases are non-empty whenever total_steps >= 3.
  std::size_t peak_step() const;
  // Throws kValidationError on out-of-domain fields.
  void Validate() const;
};

// Cosine warmup from initial_lr to max_lr over [0, peak], then cosine decay
// to final_lr over [peak, total_steps - 1]. Throws kOutOfRange past the end.
double OneCycleLr(const OneCycleSchedule& schedule, std::size_t step);

}  // namespace nfb
