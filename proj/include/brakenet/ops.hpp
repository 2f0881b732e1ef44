#pragma once

#include <cstddef>
#include <vector>

#include "brakenet/tensor.hpp"

namespace brakenet {

enum class Mode { training, inference };

// Per-channel batch normalization parameters and running statistics.
struct BatchNormState {
  explicit BatchNormState(std::size_t channels);

  Tensor gamma;  // learnable, init 1
  Tensor beta;   // learnable, init 0
  std::vector<double> running_mean;
  std::vector<double> running_var;
  double eps = 1e-5;
  double stat_momentum = 0.1;
  Mode mode = Mode::training;

  std::size_t channels() const { return running_mean.size(); }
};

// Convolutions accept an unbatched [C, L] / [C, H, W] input or a batched
// [N, C, L] / [N, C, H, W] one; the result keeps the same batching. Padding is
// zero padding on both sides.
Tensor conv1d(const Tensor& input, const Tensor& weight, const Tensor& bias,
              std::size_t stride = 1, std::size_t padding = 0);
Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias,
              std::size_t stride = 1, std::size_t padding = 0);

// Input [N, C, ...]. Training mode uses batch statistics (biased variance) and
// updates the running averages with the unbiased batch variance.
Tensor batchnorm(const Tensor& input, BatchNormState& state);

Tensor relu(const Tensor& input);

// Max pooling without padding. Ties route the gradient to the first maximum.
Tensor maxpool1d(const Tensor& input, std::size_t kernel, std::size_t stride);
Tensor maxpool2d(const Tensor& input, std::size_t kernel, std::size_t stride);

// input [N, F], weight [O, F], bias [O] -> [N, O]
Tensor linear(const Tensor& input, const Tensor& weight, const Tensor& bias);

// Mean absolute difference; scalar result. Subgradient at zero is zero.
Tensor l1_loss(const Tensor& pred, const Tensor& target);

Tensor add(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor sum(const Tensor& input);
Tensor reshape(const Tensor& input, Shape shape);
// [N, d1, d2, ...] -> [N, d1*d2*...]
Tensor flatten(const Tensor& input);

std::size_t conv_output_length(std::size_t length, std::size_t kernel, std::size_t stride,
                               std::size_t padding);
std::size_t pool_output_length(std::size_t length, std::size_t kernel, std::size_t stride);

}  // namespace brakenet
