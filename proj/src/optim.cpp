#include "nfb/optim.h"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "nfb/error.h"

namespace nfb {

template <typename T>
BasicAdamWState<T> InitAdamW(const BasicMlpParams<T>& params, double beta1, double beta2,
                             double eps) {
  BasicAdamWState<T> state;
  state.m = BasicGradientBuffer<T>::Zeros(params.layer_dims);
  state.v = BasicGradientBuffer<T>::Zeros(params.layer_dims);
  state.beta1 = beta1;
  state.beta2 = beta2;
  state.eps = eps;
  return state;
}

namespace {

template <typename T>
void UpdateSpan(std::span<T> theta, std::span<const T> grad, std::span<T> m, std::span<T> v,
                double b1, double b2, double bc1, double bc2, double eps, double lr,
                double wd) {
  for (std::size_t i = 0; i < theta.size(); ++i) {
    const double g = static_cast<double>(grad[i]);
    const double mi = b1 * static_cast<double>(m[i]) + (1.0 - b1) * g;
    const double vi = b2 * static_cast<double>(v[i]) + (1.0 - b2) * g * g;
    m[i] = static_cast<T>(mi);
    v[i] = static_cast<T>(vi);
    const double m_hat = mi / bc1;
    const double v_hat = vi / bc2;
    const double th = static_cast<double>(theta[i]);
    theta[i] = static_cast<T>(th * (1.0 - lr * wd) - lr * m_hat / (std::sqrt(v_hat) + eps));
  }
}

}  // namespace

template <typename T>
void AdamWStep(BasicMlpParams<T>& params, const BasicGradientBuffer<T>& grads,
               BasicAdamWState<T>& state, double lr, double weight_decay) {
  if (!params.SameShape(grads) || !params.SameShape(state.m) || !params.SameShape(state.v)) {
    Fail(ErrorKind::kDimensionMismatch, "optimizer buffers do not match the parameters");
  }
  if (lr < 0.0 || weight_decay < 0.0) {
    Fail(ErrorKind::kValidationError, "learning rate and weight decay must be non-negative");
  }
  state.step_count += 1;
  const double t = static_cast<double>(state.step_count);
  const double bc1 = 1.0 - std::pow(state.beta1, t);
  const double bc2 = 1.0 - std::pow(state.beta2, t);
  for (std::size_t k = 0; k < params.num_layers(); ++k) {
    UpdateSpan<T>(params.weights[k].values(), grads.weights[k].values(),
                  state.m.weights[k].values(), state.v.weights[k].values(), state.beta1,
                  state.beta2, bc1, bc2, state.eps, lr, weight_decay);
    UpdateSpan<T>(params.biases[k].values(), grads.biases[k].values(),
                  state.m.biases[k].values(), state.v.biases[k].values(), state.beta1,
                  state.beta2, bc1, bc2, state.eps, lr, weight_decay);
  }
}

std::size_t OneCycleSchedule::peak_step() const {
  if (total_steps < 3) return total_steps <= 1 ? 0 : 1;
  const auto raw = static_cast<std::size_t>(std::llround(pct_start * static_cast<double>(total_steps)));
  return std::clamp<std::size_t>(raw, 1, total_steps - 2);
}

void OneCycleSchedule::Validate() const {
  if (!(max_lr >= 0.0) || total_steps == 0 || !(pct_start > 0.0 && pct_start < 1.0) ||
      !(div_factor > 1.0) || !(final_div_factor > 1.0)) {
    Fail(ErrorKind::kValidationError,
         "one-cycle schedule needs max_lr >= 0, total_steps > 0, pct_start in (0,1), "
         "div_factor > 1 and final_div_factor > 1");
  }
}

namespace {

double CosineAnneal(double start, double end, double frac) {
  return end + (start - end) * 0.5 * (1.0 + std::cos(std::numbers::pi * frac));
}

}  // namespace

double OneCycleLr(const OneCycleSchedule& schedule, std::size_t step) {
  if (step >= schedule.total_steps) {
    Fail(ErrorKind::kOutOfRange, "step " + std::to_string(step) + " of a " +
                                     std::to_string(schedule.total_steps) + "-step schedule");
  }
  const std::size_t last = schedule.total_steps - 1;
  if (last == 0) return schedule.initial_lr();
  if (step == 0 && schedule.peak_step() > 0) return schedule.initial_lr();
  const std::size_t peak = schedule.peak_step();
  if (step <= peak) {
    if (peak == 0) return schedule.max_lr;
    if (step == peak) return schedule.max_lr;
    return CosineAnneal(schedule.initial_lr(), schedule.max_lr,
                        static_cast<double>(step) / static_cast<double>(peak));
  }
  if (step == last) return schedule.final_lr();
  return CosineAnneal(schedule.max_lr, schedule.final_lr(),
                      static_cast<double>(step - peak) / static_cast<double>(last - peak));
}

template BasicAdamWState<float> InitAdamW<float>(const BasicMlpParams<float>&, double, double,
                                                 double);
template BasicAdamWState<double> InitAdamW<double>(const BasicMlpParams<double>&, double,
                                                   double, double);
template void AdamWStep<float>(BasicMlpParams<float>&, const BasicGradientBuffer<float>&,
                               BasicAdamWState<float>&, double, double);
template void AdamWStep<double>(BasicMlpParams<double>&, const BasicGradientBuffer<double>&,
                                BasicAdamWState<double>&, double, double);

}  // namespace nfb
