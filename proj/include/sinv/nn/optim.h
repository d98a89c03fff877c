// sinv/nn/optim.h

#ifndef SINV_NN_OPTIM_H_
#define SINV_NN_OPTIM_H_

#include <cstdint>
#include <span>
#include <vector>

#include "sinv/nn/tensor.h"

namespace sinv::nn {

struct AdamOptions {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// First and second moment estimates, one slot per parameter tensor.
template <typename T>
struct AdamState {
  std::vector<std::vector<T>> m;
  std::vector<std::vector<T>> v;
  std::int64_t step = 0;
};

// One bias-corrected Adam update of `params` given matching `grads`.
// Initializes `state` to zeros on first use.
template <typename T>
void adam_step(std::span<std::span<T>> params,
               std::span<const std::span<const T>> grads, AdamState<T>& state,
               double lr, const AdamOptions& opt = {});

// Applies adam_step to tensors, reading their accumulated gradients
// (parameters without a gradient are treated as having zero gradient).
template <typename T>
class Adam {
 public:
  explicit Adam(std::vector<Tensor<T>> params, AdamOptions opt = {});
  void step(double lr);
  void zero_grad();
  AdamState<T>& state() { return state_; }
  const AdamState<T>& state() const { return state_; }
  const std::vector<Tensor<T>>& params() const { return params_; }

 private:
  std::vector<Tensor<T>> params_;
  AdamOptions opt_;
  AdamState<T> state_;
};

// Exponential decay applied in steps: base_lr * gamma^floor(epoch / step_epochs).
double lr_schedule(int epoch, double base_lr = 1e-3, double gamma = 0.5,
                   int step_epochs = 5);

}  // namespace sinv::nn

#endif  // SINV_NN_OPTIM_H_
