#include "nfb/mlp.h"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "nfb/error.h"
#include "nfb/parallel.h"

namespace nfb {

double Gelu(double x) { return 0.5 * x * (1.0 + std::erf(x / std::numbers::sqrt2)); }

double GeluGrad(double x) {
  const double cdf = 0.5 * (1.0 + std::erf(x / std::numbers::sqrt2));
  const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
  return cdf + x * pdf;
}

template <typename T>
std::size_t BasicMlpParams<T>::num_parameters() const {
  std::size_t n = 0;
  for (std::size_t k = 0; k < weights.size(); ++k) n += weights[k].size() + biases[k].dim();
  return n;
}

template <typename T>
BasicMlpParams<T> BasicMlpParams<T>::Zeros(const std::vector<std::size_t>& dims) {
  if (dims.size() < 2) Fail(ErrorKind::kDimensionMismatch, "an MLP needs at least two layer dims");
  BasicMlpParams p;
  p.layer_dims = dims;
  for (std::size_t k = 0; k + 1 < dims.size(); ++k) {
    if (dims[k] == 0 || dims[k + 1] == 0) Fail(ErrorKind::kDimensionMismatch, "zero layer dim");
    p.weights.emplace_back(dims[k + 1], dims[k]);
    p.biases.emplace_back(dims[k + 1]);
  }
  return p;
}

template <typename T>
void BasicMlpParams<T>::Validate() const {
  if (layer_dims.size() < 2 || weights.size() + 1 != layer_dims.size() ||
      biases.size() != weights.size()) {
    Fail(ErrorKind::kDimensionMismatch, "layer count does not match layer_dims");
  }
  for (std::size_t k = 0; k < weights.size(); ++k) {
    if (weights[k].cols() != layer_dims[k] || weights[k].rows() != layer_dims[k + 1] ||
        biases[k].dim() != layer_dims[k + 1]) {
      Fail(ErrorKind::kDimensionMismatch, "layer " + std::to_string(k) + " does not chain");
    }
  }
}

template <typename T>
bool BasicMlpParams<T>::SameShape(const BasicMlpParams& other) const {
  if (layer_dims != other.layer_dims || weights.size() != other.weights.size() ||
      biases.size() != other.biases.size()) {
    return false;
  }
  for (std::size_t k = 0; k < weights.size(); ++k) {
    if (weights[k].rows() != other.weights[k].rows() ||
        weights[k].cols() != other.weights[k].cols() ||
        biases[k].dim() != other.biases[k].dim()) {
      return false;
    }
  }
  return true;
}

namespace {

// out[r][c] = sum_k x[r][k] * m[k][c] with k ascending, starting from zero.
// x is rows x inner (double), m is inner x cols row-major, out is rows x cols.
// A kR x kC tile of accumulators stays in registers across the k loop.
template <typename T>
void MatMul(const double* x, std::size_t rows, std::size_t inner, const T* m, std::size_t cols,
            double* out) {
  constexpr std::size_t kR = 4;
  constexpr std::size_t kC = 8;
  const std::size_t blocks = (rows + kR - 1) / kR;
  ParallelFor(blocks, 2, [&](std::size_t blk0, std::size_t blk1) {
    for (std::size_t r0 = blk0 * kR; r0 < std::min(rows, blk1 * kR); r0 += kR) {
      const std::size_t nr = std::min(kR, rows - r0);
      for (std::size_t c0 = 0; c0 < cols; c0 += kC) {
        const std::size_t nc = std::min(kC, cols - c0);
        if (nr == kR && nc == kC) {
          double acc[kR][kC] = {};
          for (std::size_t k = 0; k < inner; ++k) {
            const T* mk = m + k * cols + c0;
            double mv[kC];
            for (std::size_t c = 0; c < kC; ++c) mv[c] = static_cast<double>(mk[c]);
            for (std::size_t r = 0; r < kR; ++r) {
              const double xv = x[(r0 + r) * inner + k];
              for (std::size_t c = 0; c < kC; ++c) acc[r][c] += xv * mv[c];
            }
          }
          for (std::size_t r = 0; r < kR; ++r) {
            for (std::size_t c = 0; c < kC; ++c) out[(r0 + r) * cols + c0 + c] = acc[r][c];
          }
        } else {
          for (std::size_t r = r0; r < r0 + nr; ++r) {
            for (std::size_t c = c0; c < c0 + nc; ++c) {
              double acc = 0.0;
              for (std::size_t k = 0; k < inner; ++k) {
                acc += x[r * inner + k] * static_cast<double>(m[k * cols + c]);
              }
              out[r * cols + c] = acc;
            }
          }
        }
      }
    }
  });
}

template <typename T>
std::vector<double> ToDouble(std::span<const T> v) {
  return std::vector<double>(v.begin(), v.end());
}

// out = in * W^T + b. Each output element sums over the input index in
// ascending order, then adds the bias.
template <typename T>
BasicMatrix<T> Affine(const BasicMatrix<T>& in, const BasicMatrix<T>& weight,
                      const BasicVector<T>& bias) {
  const std::size_t batch = in.rows();
  const std::size_t n_in = weight.cols();
  const std::size_t n_out = weight.rows();

  std::vector<T> wt(n_in * n_out);
  for (std::size_t o = 0; o < n_out; ++o) {
    auto w = weight.row(o);
    for (std::size_t i = 0; i < n_in; ++i) wt[i * n_out + o] = w[i];
  }
  const auto x = ToDouble(in.values());
  std::vector<double> acc(batch * n_out);
  MatMul(x.data(), batch, n_in, wt.data(), n_out, acc.data());

  BasicMatrix<T> out(batch, n_out);
  for (std::size_t b = 0; b < batch; ++b) {
    auto dst = out.row(b);
    for (std::size_t o = 0; o < n_out; ++o) {
      dst[o] = static_cast<T>(acc[b * n_out + o] + static_cast<double>(bias[o]));
    }
  }
  return out;
}

template <typename T>
BasicMatrix<T> ApplyGelu(const BasicMatrix<T>& z) {
  BasicMatrix<T> out(z.rows(), z.cols());
  auto src = z.values();
  auto dst = out.values();
  for (std::size_t i = 0; i < src.size(); ++i) {
    dst[i] = static_cast<T>(Gelu(static_cast<double>(src[i])));
  }
  return out;
}

template <typename T>
void CheckInput(const BasicMlpParams<T>& params, const BasicMatrix<T>& input) {
  if (params.layer_dims.empty() || input.cols() != params.input_dim()) {
    Fail(ErrorKind::kDimensionMismatch,
         "input width " + std::to_string(input.cols()) + " does not match network input " +
             std::to_string(params.layer_dims.empty() ? 0 : params.input_dim()));
  }
}

}  // namespace

template <typename T>
BasicForwardResult<T> MlpForward(const BasicMlpParams<T>& params, const BasicMatrix<T>& input) {
  CheckInput(params, input);
  BasicForwardResult<T> result;
  auto& cache = result.cache;
  cache.batch_size = input.rows();
  cache.activations.reserve(params.num_layers() + 1);
  cache.pre_activations.reserve(params.num_layers());
  cache.activations.push_back(input);
  for (std::size_t k = 0; k < params.num_layers(); ++k) {
    cache.pre_activations.push_back(
        Affine(cache.activations.back(), params.weights[k], params.biases[k]));
    const bool hidden = k + 1 < params.num_layers();
    cache.activations.push_back(hidden ? ApplyGelu(cache.pre_activations.back())
                                       : cache.pre_activations.back());
  }
  result.output = cache.activations.back();
  return result;
}

template <typename T>
BasicMatrix<T> MlpInfer(const BasicMlpParams<T>& params, const BasicMatrix<T>& input) {
  CheckInput(params, input);
  BasicMatrix<T> x = input;
  for (std::size_t k = 0; k < params.num_layers(); ++k) {
    x = Affine(x, params.weights[k], params.biases[k]);
    if (k + 1 < params.num_layers()) x = ApplyGelu(x);
  }
  return x;
}

template <typename T>
BasicGradientBuffer<T> MlpBackward(const BasicMlpParams<T>& params,
                                   const BasicForwardCache<T>& cache,
                                   const BasicMatrix<T>& output_grad) {
  const std::size_t layers = params.num_layers();
  if (cache.activations.size() != layers + 1 || cache.pre_activations.size() != layers) {
    Fail(ErrorKind::kDimensionMismatch, "forward cache does not match the network depth");
  }
  const std::size_t batch = cache.batch_size;
  if (output_grad.rows() != batch || output_grad.cols() != params.output_dim()) {
    Fail(ErrorKind::kDimensionMismatch,
         "output gradient is " + std::to_string(output_grad.rows()) + "x" +
             std::to_string(output_grad.cols()) + ", expected " + std::to_string(batch) + "x" +
             std::to_string(params.output_dim()));
  }

  auto grads = BasicGradientBuffer<T>::Zeros(params.layer_dims);
  // Gradient w.r.t. the pre-activation of the current layer, kept in double.
  std::vector<double> delta(output_grad.values().begin(), output_grad.values().end());

  for (std::size_t k = layers; k-- > 0;) {
    const auto& a_prev = cache.activations[k];
    const auto& weight = params.weights[k];
    const std::size_t n_in = weight.cols();
    const std::size_t n_out = weight.rows();

    // dW[o][i] = sum_b delta[b][o] * a_prev[b][i]; db[o] = sum_b delta[b][o]
    std::vector<double> delta_t(n_out * batch);
    for (std::size_t b = 0; b < batch; ++b) {
      for (std::size_t o = 0; o < n_out; ++o) delta_t[o * batch + b] = delta[b * n_out + o];
    }
    std::vector<double> gw_acc(n_out * n_in);
    MatMul(delta_t.data(), n_out, batch, a_prev.values().data(), n_in, gw_acc.data());
    auto& gw = grads.weights[k];
    auto& gb = grads.biases[k];
    for (std::size_t o = 0; o < n_out; ++o) {
      auto dst = gw.row(o);
      for (std::size_t i = 0; i < n_in; ++i) dst[i] = static_cast<T>(gw_acc[o * n_in + i]);
      double bias_acc = 0.0;
      for (std::size_t b = 0; b < batch; ++b) bias_acc += delta_t[o * batch + b];
      gb[o] = static_cast<T>(bias_acc);
    }

    if (k == 0) break;

    // delta_prev[b][i] = (sum_o delta[b][o] * W[o][i]) * gelu'(z_prev[b][i])
    const auto& z_prev = cache.pre_activations[k - 1];
    std::vector<double> next(batch * n_in);
    MatMul(delta.data(), batch, n_out, weight.values().data(), n_in, next.data());
    for (std::size_t b = 0; b < batch; ++b) {
      auto z = z_prev.row(b);
      double* dst = next.data() + b * n_in;
      for (std::size_t i = 0; i < n_in; ++i) dst[i] *= GeluGrad(static_cast<double>(z[i]));
    }
    delta = std::move(next);
  }
  return grads;
}

#define NFB_INSTANTIATE(T)                                                                  \
  template struct BasicMlpParams<T>;                                                        \
  template BasicForwardResult<T> MlpForward<T>(const BasicMlpParams<T>&,                    \
                                               const BasicMatrix<T>&);                      \
  template BasicMatrix<T> MlpInfer<T>(const BasicMlpParams<T>&, const BasicMatrix<T>&);     \
  template BasicGradientBuffer<T> MlpBackward<T>(const BasicMlpParams<T>&,                  \
                                                 const BasicForwardCache<T>&,               \
                                                 const BasicMatrix<T>&);

NFB_INSTANTIATE(float)
NFB_INSTANTIATE(double)

#undef NFB_INSTANTIATE

}  // namespace nfb
