#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "brakenet/ops.hpp"
#include "brakenet/tensor.hpp"

namespace brakenet {

enum class ModelKind { baseline, cnn1d, cnn2d };

std::string_view to_string(ModelKind kind);
ModelKind parse_model_kind(std::string_view text);

// Two same-padded convolutions inside one residual block.
struct BlockParams {
  std::size_t kernel1;
  std::size_t padding1;
  std::size_t kernel2;
  std::size_t padding2;
  std::size_t channels;  // in == out

  bool operator==(const BlockParams&) const = default;
};

// Block 1: k15/p7 then k7/p3 at 16 channels; block 2: k7/p3 then k3/p1 at 32.
inline constexpr std::array<BlockParams, 2> kDefaultBlocks{{
    {15, 7, 7, 3, 16},
    {7, 3, 3, 1, 32},
}};

struct ModelSpec {
  ModelKind kind = ModelKind::cnn1d;
  std::size_t in_channels = 3;
  std::vector<std::size_t> input_dims;  // {L} for baseline/cnn1d, {H, W} for cnn2d
  std::array<BlockParams, 2> blocks = kDefaultBlocks;
  std::size_t pool_kernel = 3;
  std::size_t pool_stride = 2;
  std::uint64_t init_seed = 0;

  // Per-sample input shape, e.g. {3, 6288} or {3, 100, 100}.
  Shape input_shape() const;
  bool operator==(const ModelSpec&) const = default;
};

// Intermediate spatial sizes of the CNN pipeline.
struct ShapeChain {
  Shape block1_pooled;  // {C1, L1} or {C1, H1, W1}
  Shape block2_pooled;
  std::size_t head_width = 0;
};

// Throws DimensionError when the input is too small to survive both pools.
ShapeChain shape_chain(const ModelSpec& spec);
void validate_spec(const ModelSpec& spec);

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

class Model {
 public:
  explicit Model(ModelSpec spec);

  const ModelSpec& spec() const { return spec_; }

  // Batched input [N, 3, L] or [N, 3, H, W] -> predictions [N, 1] in feet.
  Tensor forward(const Tensor& batch);

  void set_mode(Mode mode);
  Mode mode() const { return mode_; }

  // Learnable tensors in a fixed order (BN gamma/beta included).
  std::vector<NamedTensor> named_parameters() const;
  std::vector<Tensor> parameters() const;
  // BN running statistics as named [C] vectors, in block order.
  std::vector<BatchNormState*> bn_states();
  std::vector<const BatchNormState*> bn_states() const;

  std::size_t parameter_count() const;
  // Width of the linear head's input.
  std::size_t head_width() const { return head_weight_.dim(1); }

  // Deep copy of all parameters and running statistics.
  Model clone() const;
  // FNV-1a over parameter and running-stat bytes.
  std::uint64_t state_hash() const;

 private:
  struct Conv {
    Tensor weight;
    Tensor bias;
    std::size_t padding = 0;
  };
  struct ResBlock {
    Conv conv1;
    BatchNormState bn1{1};
    Conv conv2;
    BatchNormState bn2{1};
  };

  Tensor apply_conv(const Conv& conv, const Tensor& x, std::string_view stage) const;
  Tensor apply_pool(const Tensor& x, std::string_view stage) const;
  Tensor apply_block(ResBlock& block, const Tensor& x, std::string_view stage);

  ModelSpec spec_;
  Mode mode_ = Mode::training;
  std::array<Conv, 2> reshape_;
  std::array<ResBlock, 2> blocks_;
  Tensor head_weight_;
  Tensor head_bias_;
};

// Fan-in uniform init (bound 1/sqrt(fan_in)), zero biases, gamma 1, beta 0.
Model build_baseline(std::size_t length, std::uint64_t seed);
Model build_cnn1d(std::size_t length, std::uint64_t seed);
Model build_cnn2d(std::size_t height, std::size_t width, std::uint64_t seed);
Model build_model(const ModelSpec& spec);

Tensor forward(Model& model, const Tensor& batch);

}  // namespace brakenet
