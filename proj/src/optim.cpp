#include "brakenet/optim.hpp"

#include "brakenet/errors.hpp"

namespace brakenet {

SgdState::SgdState(std::vector<Tensor> ps, double learning_rate, double mom)
    : params(std::move(ps)), lr(learning_rate), momentum(mom) {
  if (!(lr > 0.0)) throw ConfigError("learning rate must be positive");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("momentum must be in [0, 1)");
  velocity.reserve(params.size());
  for (const auto& p : params) velocity.emplace_back(p.size(), 0.0);
}

void sgd_step(SgdState& state) {
  for (std::size_t k = 0; k < state.params.size(); ++k) {
    Tensor& p = state.params[k];
    auto& v = state.velocity[k];
    auto g = p.grad();
    const bool has_grad = p.has_grad();
    auto x = p.data();
    for (std::size_t i = 0; i < v.size(); ++i) {
      v[i] = state.momentum * v[i] + (has_grad ? g[i] : 0.0);
      x[i] -= state.lr * v[i];
    }
  }
}

void zero_grad(std::vector<Tensor>& params) {
  for (auto& p : params) p.zero_grad();
}

}  // namespace brakenet
