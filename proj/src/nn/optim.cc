// nn/optim.cc

#include "sinv/nn/optim.h"

#include <cmath>

#include "sinv/error.h"

namespace sinv::nn {

template <typename T>
void adam_step(std::span<std::span<T>> params,
               std::span<const std::span<const T>> grads, AdamState<T>& state,
               double lr, const AdamOptions& opt) {
  require(params.size() == grads.size(), "adam: params/grads count mismatch");
  if (state.m.empty()) {
    state.m.resize(params.size());
    state.v.resize(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) {
      state.m[i].assign(params[i].size(), T(0));
      state.v[i].assign(params[i].size(), T(0));
    }
  }
  require(state.m.size() == params.size(), "adam: state slot count mismatch");
  ++state.step;
  const double bc1 = 1.0 - std::pow(opt.beta1, double(state.step));
  const double bc2 = 1.0 - std::pow(opt.beta2, double(state.step));
  const T b1 = T(opt.beta1), b2 = T(opt.beta2);
  const T step_size = T(lr / bc1);
  const T inv_sqrt_bc2 = T(1.0 / std::sqrt(bc2));
  const T eps = T(opt.eps);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto p = params[i];
    auto g = grads[i];
    auto& m = state.m[i];
    auto& v = state.v[i];
    require(g.size() == p.size() && m.size() == p.size(),
            "adam: shape mismatch in slot " + std::to_string(i));
    for (std::size_t j = 0; j < p.size(); ++j) {
      m[j] = b1 * m[j] + (T(1) - b1) * g[j];
      v[j] = b2 * v[j] + (T(1) - b2) * g[j] * g[j];
      p[j] -= step_size * m[j] / (std::sqrt(v[j]) * inv_sqrt_bc2 + eps);
    }
  }
}

template <typename T>
Adam<T>::Adam(std::vector<Tensor<T>> params, AdamOptions opt)
    : params_(std::move(params)), opt_(opt) {}

template <typename T>
void Adam<T>::step(double lr) {
  std::vector<std::span<T>> p;
  std::vector<std::vector<T>> zeros;
  std::vector<std::span<const T>> g;
  zeros.reserve(params_.size());
  for (auto& t : params_) {
    p.push_back(t.values());
    if (t.has_grad()) {
      g.push_back(t.grad());
    } else {
      zeros.emplace_back(t.numel(), T(0));
      g.push_back(zeros.back());
    }
  }
  adam_step<T>(p, g, state_, lr, opt_);
}

template <typename T>
void Adam<T>::zero_grad() {
  for (auto& t : params_) t.zero_grad();
}

double lr_schedule(int epoch, double base_lr, double gamma, int step_epochs) {
  require(epoch >= 0, "lr_schedule: epoch must be >= 0");
  require(step_epochs >= 1, "lr_schedule: step_epochs must be >= 1");
  return base_lr * std::pow(gamma, double(epoch / step_epochs));
}

template void adam_step<float>(std::span<std::span<float>>,
                               std::span<const std::span<const float>>,
                               AdamState<float>&, double, const AdamOptions&);
template void adam_step<double>(std::span<std::span<double>>,
                                std::span<const std::span<const double>>,
                                AdamState<double>&, double, const AdamOptions&);
template class Adam<float>;
template class Adam<double>;

}  // namespace sinv::nn
