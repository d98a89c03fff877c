// sinv/nn/ops.h
//
// Differentiable ops on (batch, channel, frame) tensors.

#ifndef SINV_NN_OPS_H_
#define SINV_NN_OPS_H_

#include <cstdint>
#include <vector>

#include "sinv/nn/tensor.h"

namespace sinv::nn {

enum class Mode { kTrain, kEval };

// x (B, C_in, T), w (C_out, C_in, K), bias (C_out) or undefined.
template <typename T>
Tensor<T> conv1d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& bias,
                 int dilation);

template <typename T>
struct BatchNormStats {
  std::vector<T> running_mean;
  std::vector<T> running_var;
  explicit BatchNormStats(std::size_t channels = 0)
      : running_mean(channels, T(0)), running_var(channels, T(1)) {}
};

struct BatchNormOptions {
  double eps = 1e-5;
  double momentum = 0.1;
  bool update_running = true;
};

// Normalizes each channel over (batch, frames). In train mode the batch
// statistics are used and the running statistics updated (unbiased variance);
// in eval mode the running statistics are used.
template <typename T>
Tensor<T> batchnorm1d(const Tensor<T>& x, const Tensor<T>& gamma,
                      const Tensor<T>& beta, BatchNormStats<T>& stats,
                      Mode mode, const BatchNormOptions& opt = {});

// max(x, 0); NaN inputs stay NaN so a corrupted forward pass reaches the loss.
template <typename T>
Tensor<T> relu(const Tensor<T>& x);

// Repeats each frame `factor` times along the last axis.
template <typename T>
Tensor<T> upsample_repeat(const Tensor<T>& x, int factor);

// Non-overlapping mean over windows of `window` frames.
template <typename T>
Tensor<T> avgpool1d(const Tensor<T>& x, int window);

// Mean squared error over frames with mask[b*T + t] != 0 and all channels.
// pred/target (B, C, T); mask has B*T entries.
template <typename T>
Tensor<T> mse_loss(const Tensor<T>& pred, const Tensor<T>& target,
                   const std::vector<std::uint8_t>& mask);

// Fingerprint of ReLU activation patterns, accumulated during a forward pass
// when installed. Used by gradient checking to skip samples whose finite
// difference straddles a kink.
struct ReluTrace {
  std::uint64_t hash = 1469598103934665603ull;
  void mix(std::uint64_t v) { hash = (hash ^ v) * 1099511628211ull; }
};
void set_relu_trace(ReluTrace* trace);

namespace debug {
// Scales the conv weight gradient by 1.5 when enabled; exists only so tests
// can confirm that gradient checking detects a broken backward pass.
void set_conv_weight_grad_fault(bool on);
}  // namespace debug

}  // namespace sinv::nn

#endif  // SINV_NN_OPS_H_
