#pragma once

#include <vector>

#include "brakenet/tensor.hpp"

namespace brakenet {

// Heavy-ball momentum: v <- momentum * v + grad; p <- p - lr * v.
struct SgdState {
  SgdState(std::vector<Tensor> params, double lr, double momentum);

  std::vector<Tensor> params;
  std::vector<std::vector<double>> velocity;  // one zero-initialized buffer per param
  double lr;
  double momentum;
};

// Parameters without a populated grad are treated as having zero gradient.
void sgd_step(SgdState& state);

void zero_grad(std::vector<Tensor>& params);

}  // namespace brakenet
