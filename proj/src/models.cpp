#include "brakenet/models.hpp"

#include <cmath>
#include <cstring>
#include <random>

#include "brakenet/errors.hpp"

namespace brakenet {

namespace {

Tensor uniform_tensor(Shape shape, std::size_t fan_in, std::mt19937_64& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  std::uniform_real_distribution<double> dist(-bound, bound);
  std::vector<double> values(numel(shape));
  for (auto& v : values) v = dist(rng);
  return Tensor(std::move(shape), std::move(values), true);
}

std::string join(std::string_view a, std::string_view b) {
  return std::string(a) + "." + std::string(b);
}

}  // namespace

std::string_view to_string(ModelKind kind) {
  switch (kind) {
    case ModelKind::baseline:
      return "baseline";
    case ModelKind::cnn1d:
      return "cnn1d";
    case ModelKind::cnn2d:
      return "cnn2d";
  }
  return "unknown";
}

ModelKind parse_model_kind(std::string_view text) {
  if (text == "baseline") return ModelKind::baseline;
  if (text == "cnn1d") return ModelKind::cnn1d;
  if (text == "cnn2d") return ModelKind::cnn2d;
  throw ConfigError("unknown model kind '" + std::string(text) + "'");
}

Shape ModelSpec::input_shape() const {
  Shape s{in_channels};
  s.insert(s.end(), input_dims.begin(), input_dims.end());
  return s;
}

void validate_spec(const ModelSpec& spec) {
  const std::size_t want_dims = spec.kind == ModelKind::cnn2d ? 2 : 1;
  if (spec.input_dims.size() != want_dims) {
    throw ConfigError(std::string(to_string(spec.kind)) + " expects " +
                      std::to_string(want_dims) + " input dimension(s)");
  }
  if (spec.in_channels == 0) throw ConfigError("model needs at least one input channel");
  for (auto d : spec.input_dims) {
    if (d == 0) throw ConfigError("input dimensions must be positive");
  }
  if (spec.kind == ModelKind::baseline) return;
  for (std::size_t b = 0; b < spec.blocks.size(); ++b) {
    const auto& p = spec.blocks[b];
    if (p.channels == 0) throw ConfigError("block channels must be positive");
    for (auto [k, pad] : {std::pair{p.kernel1, p.padding1}, std::pair{p.kernel2, p.padding2}}) {
      if (k % 2 == 0 || pad * 2 + 1 != k) {
        throw ConfigError("block " + std::to_string(b + 1) + ": kernel " + std::to_string(k) +
                          " with padding " + std::to_string(pad) + " is not length preserving");
      }
    }
  }
  if (spec.pool_kernel == 0 || spec.pool_stride == 0) throw ConfigError("invalid pooling");
}

ShapeChain shape_chain(const ModelSpec& spec) {
  validate_spec(spec);
  ShapeChain chain;
  if (spec.kind == ModelKind::baseline) {
    chain.head_width = numel(spec.input_shape());
    return chain;
  }
  std::vector<std::size_t> dims = spec.input_dims;
  for (std::size_t b = 0; b < 2; ++b) {
    for (auto& d : dims) {
      if (d < spec.pool_kernel) {
        throw DimensionError("input " + to_string(spec.input_shape()) +
                             " is too short to survive pooling after block " +
                             std::to_string(b + 1));
      }
      d = pool_output_length(d, spec.pool_kernel, spec.pool_stride);
    }
    Shape s{spec.blocks[b].channels};
    s.insert(s.end(), dims.begin(), dims.end());
    (b == 0 ? chain.block1_pooled : chain.block2_pooled) = s;
  }
  chain.head_width = numel(chain.block2_pooled);
  return chain;
}

Model::Model(ModelSpec spec) : spec_(std::move(spec)) {
  const ShapeChain chain = shape_chain(spec_);
  std::mt19937_64 rng(spec_.init_seed);
  const bool two_d = spec_.kind == ModelKind::cnn2d;
  auto kernel_shape = [&](std::size_t out, std::size_t in, std::size_t k) {
    return two_d ? Shape{out, in, k, k} : Shape{out, in, k};
  };
  auto make_conv = [&](std::size_t out, std::size_t in, std::size_t k, std::size_t pad) {
    const std::size_t fan_in = in * (two_d ? k * k : k);
    Conv c;
    c.weight = uniform_tensor(kernel_shape(out, in, k), fan_in, rng);
    c.bias = Tensor::full({out}, 0.0, true);
    c.padding = pad;
    return c;
  };

  if (spec_.kind != ModelKind::baseline) {
    std::size_t in = spec_.in_channels;
    for (std::size_t b = 0; b < 2; ++b) {
      const auto& p = spec_.blocks[b];
      reshape_[b] = make_conv(p.channels, in, 1, 0);
      blocks_[b].conv1 = make_conv(p.channels, p.channels, p.kernel1, p.padding1);
      blocks_[b].bn1 = BatchNormState(p.channels);
      blocks_[b].conv2 = make_conv(p.channels, p.channels, p.kernel2, p.padding2);
      blocks_[b].bn2 = BatchNormState(p.channels);
      in = p.channels;
    }
  }
  head_weight_ = uniform_tensor({1, chain.head_width}, chain.head_width, rng);
  head_bias_ = Tensor::full({1}, 0.0, true);
}

Tensor Model::apply_conv(const Conv& conv, const Tensor& x, std::string_view stage) const {
  try {
    if (spec_.kind == ModelKind::cnn2d) return conv2d(x, conv.weight, conv.bias, 1, conv.padding);
    return conv1d(x, conv.weight, conv.bias, 1, conv.padding);
  } catch (const DimensionError& e) {
    throw DimensionError("stage " + std::string(stage) + ": " + e.what());
  }
}

Tensor Model::apply_pool(const Tensor& x, std::string_view stage) const {
  try {
    if (spec_.kind == ModelKind::cnn2d) return maxpool2d(x, spec_.pool_kernel, spec_.pool_stride);
    return maxpool1d(x, spec_.pool_kernel, spec_.pool_stride);
  } catch (const DimensionError& e) {
    throw DimensionError("stage " + std::string(stage) + ": " + e.what());
  }
}

Tensor Model::apply_block(ResBlock& block, const Tensor& x, std::string_view stage) {
  Tensor h = apply_conv(block.conv1, x, join(stage, "conv1"));
  h = relu(batchnorm(h, block.bn1));
  h = apply_conv(block.conv2, h, join(stage, "conv2"));
  h = batchnorm(h, block.bn2);
  return relu(add(h, x));
}

Tensor Model::forward(const Tensor& batch) {
  const Shape want = spec_.input_shape();
  if (batch.rank() != want.size() + 1 ||
      !std::equal(want.begin(), want.end(), batch.shape().begin() + 1)) {
    throw DimensionError("stage input: expected [N x " + to_string(want).substr(1) + ", got " +
                         to_string(batch.shape()));
  }
  Tensor x = batch;
  if (spec_.kind != ModelKind::baseline) {
    static constexpr std::array<std::string_view, 2> kBlock{"block1", "block2"};
    static constexpr std::array<std::string_view, 2> kReshape{"reshape1", "reshape2"};
    static constexpr std::array<std::string_view, 2> kPool{"pool1", "pool2"};
    for (std::size_t b = 0; b < 2; ++b) {
      x = apply_conv(reshape_[b], x, kReshape[b]);
      x = apply_block(blocks_[b], x, kBlock[b]);
      x = apply_pool(x, kPool[b]);
    }
  }
  x = flatten(x);
  try {
    return linear(x, head_weight_, head_bias_);
  } catch (const DimensionError& e) {
    throw DimensionError(std::string("stage head: ") + e.what());
  }
}

void Model::set_mode(Mode mode) {
  mode_ = mode;
  for (auto* bn : bn_states()) bn->mode = mode;
}

std::vector<NamedTensor> Model::named_parameters() const {
  std::vector<NamedTensor> out;
  if (spec_.kind != ModelKind::baseline) {
    for (std::size_t b = 0; b < 2; ++b) {
      const std::string r = "reshape" + std::to_string(b + 1);
      const std::string k = "block" + std::to_string(b + 1);
      const auto& blk = blocks_[b];
      out.push_back({r + ".weight", reshape_[b].weight});
      out.push_back({r + ".bias", reshape_[b].bias});
      out.push_back({k + ".conv1.weight", blk.conv1.weight});
      out.push_back({k + ".conv1.bias", blk.conv1.bias});
      out.push_back({k + ".bn1.gamma", blk.bn1.gamma});
      out.push_back({k + ".bn1.beta", blk.bn1.beta});
      out.push_back({k + ".conv2.weight", blk.conv2.weight});
      out.push_back({k + ".conv2.bias", blk.conv2.bias});
      out.push_back({k + ".bn2.gamma", blk.bn2.gamma});
      out.push_back({k + ".bn2.beta", blk.bn2.beta});
    }
  }
  out.push_back({"head.weight", head_weight_});
  out.push_back({"head.bias", head_bias_});
  return out;
}

std::vector<Tensor> Model::parameters() const {
  std::vector<Tensor> out;
  for (auto& p : named_parameters()) out.push_back(p.tensor);
  return out;
}

std::vector<BatchNormState*> Model::bn_states() {
  if (spec_.kind == ModelKind::baseline) return {};
  return {&blocks_[0].bn1, &blocks_[0].bn2, &blocks_[1].bn1, &blocks_[1].bn2};
}

std::vector<const BatchNormState*> Model::bn_states() const {
  if (spec_.kind == ModelKind::baseline) return {};
  return {&blocks_[0].bn1, &blocks_[0].bn2, &blocks_[1].bn1, &blocks_[1].bn2};
}

std::size_t Model::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : named_parameters()) n += p.tensor.size();
  return n;
}

Model Model::clone() const {
  Model copy = *this;
  auto deep = [](Tensor& t) {
    if (!t.defined()) return;
    Tensor fresh = t.detach();
    fresh.set_requires_grad(t.requires_grad());
    t = fresh;
  };
  for (auto& c : copy.reshape_) {
    deep(c.weight);
    deep(c.bias);
  }
  for (auto& b : copy.blocks_) {
    deep(b.conv1.weight);
    deep(b.conv1.bias);
    deep(b.conv2.weight);
    deep(b.conv2.bias);
    deep(b.bn1.gamma);
    deep(b.bn1.beta);
    deep(b.bn2.gamma);
    deep(b.bn2.beta);
  }
  deep(copy.head_weight_);
  deep(copy.head_bias_);
  return copy;
}

std::uint64_t Model::state_hash() const {
  std::uint64_t h = 1469598103934665603ull;
  auto mix = [&](std::span<const double> values) {
    for (double v : values) {
      unsigned char bytes[sizeof(double)];
      std::memcpy(bytes, &v, sizeof(double));
      for (unsigned char c : bytes) {
        h ^= c;
        h *= 1099511628211ull;
      }
    }
  };
  for (const auto& p : named_parameters()) mix(p.tensor.data());
  for (const auto* bn : bn_states()) {
    mix(bn->running_mean);
    mix(bn->running_var);
  }
  return h;
}

Model build_baseline(std::size_t length, std::uint64_t seed) {
  ModelSpec spec;
  spec.kind = ModelKind::baseline;
  spec.input_dims = {length};
  spec.init_seed = seed;
  return Model(spec);
}

Model build_cnn1d(std::size_t length, std::uint64_t seed) {
  ModelSpec spec;
  spec.kind = ModelKind::cnn1d;
  spec.input_dims = {length};
  spec.init_seed = seed;
  return Model(spec);
}

Model build_cnn2d(std::size_t height, std::size_t width, std::uint64_t seed) {
  ModelSpec spec;
  spec.kind = ModelKind::cnn2d;
  spec.input_dims = {height, width};
  spec.init_seed = seed;
  return Model(spec);
}

Model build_model(const ModelSpec& spec) { return Model(spec); }

Tensor forward(Model& model, const Tensor& batch) { return model.forward(batch); }

}  // namespace brakenet
