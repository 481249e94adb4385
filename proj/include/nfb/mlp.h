#pragma once

#include <cstddef>
#include <vector>

#include "nfb/tensor.h"

namespace nfb {

// GELU with the exact Gaussian CDF: x * Phi(x).
double Gelu(double x);
// Phi(x) + x * phi(x).
double GeluGrad(double x);

// Weights and biases of a fully connected network. weights[k] is
// layer_dims[k+1] x layer_dims[k]; GELU follows every layer but the last.
template <typename T>
struct BasicMlpParams {
  std::vector<std::size_t> layer_dims;
  std::vector<BasicMatrix<T>> weights;
  std::vector<BasicVector<T>> biases;

  std::size_t num_layers() const { return weights.size(); }
  std::size_t input_dim() const { return layer_dims.front(); }
  std::size_t output_dim() const { return layer_dims.back(); }
  std::size_t num_parameters() const;

  // Zero-filled parameters with the given layer dims.
  static BasicMlpParams Zeros(const std::vector<std::size_t>& dims);

  // Throws kDimensionMismatch if weights/biases do not chain through layer_dims.
  void Validate() const;
  bool SameShape(const BasicMlpParams& other) const;

  friend bool operator==(const BasicMlpParams&, const BasicMlpParams&) = default;
};

// Gradients share the parameter layout.
template <typename T>
using BasicGradientBuffer = BasicMlpParams<T>;

template <typename T>
struct BasicForwardCache {
  std::size_t batch_size = 0;
  // activations[0] is the input; activations[k] is the output of layer k.
  std::vector<BasicMatrix<T>> activations;
  // pre_activations[k] is the affine output of layer k (before GELU).
  std::vector<BasicMatrix<T>> pre_activations;
};

template <typename T>
struct BasicForwardResult {
  BasicMatrix<T> output;
  BasicForwardCache<T> cache;
};

template <typename T>
BasicForwardResult<T> MlpForward(const BasicMlpParams<T>& params, const BasicMatrix<T>& input);

// Output only, no cache kept.
template <typename T>
BasicMatrix<T> MlpInfer(const BasicMlpParams<T>& params, const BasicMatrix<T>& input);

// Reverse-mode gradients, summed over the batch rows.
template <typename T>
BasicGradientBuffer<T> MlpBackward(const BasicMlpParams<T>& params,
                                   const BasicForwardCache<T>& cache,
                                   const BasicMatrix<T>& output_grad);

using MlpParams = BasicMlpParams<float>;
using GradientBuffer = BasicGradientBuffer<float>;
using ForwardCache = BasicForwardCache<float>;
using MlpParamsD = BasicMlpParams<double>;
using GradientBufferD = BasicGradientBuffer<double>;

}  // namespace nfb
