// sinv/nn/kernels.h
//
// Dense 1-D convolution kernels on (batch, channel, frame) row-major data.
// Two implementations with identical contracts:
//   reference::  direct-sum loops, kept as the oracle for tests and benches;
//   parallel::   zero-padded, register-tiled loops split across OpenMP threads.
// Each output element of the parallel kernels is reduced in a fixed order that
// does not depend on the thread count, so results are reproducible across
// SINV_NUM_THREADS settings.

#ifndef SINV_NN_KERNELS_H_
#define SINV_NN_KERNELS_H_

#include <cstddef>
#include <span>

namespace sinv::nn::kernels {

struct ConvGeometry {
  int batch = 1;
  int in_channels = 1;
  int out_channels = 1;
  int frames = 1;
  int kernel = 1;
  int dilation = 1;

  // Offset of tap k relative to the output frame ("same" padding).
  int tap_offset(int k) const { return (k - kernel / 2) * dilation; }
  std::size_t input_size() const {
    return std::size_t(batch) * in_channels * frames;
  }
  std::size_t output_size() const {
    return std::size_t(batch) * out_channels * frames;
  }
  std::size_t weight_size() const {
    return std::size_t(out_channels) * in_channels * kernel;
  }
};

// y[b,o,t] = bias[o] + sum_{c,k} w[o,c,k] * x[b,c,t + tap_offset(k)],
// out-of-range x read as zero. Forward overwrites y; the backward kernels
// accumulate into their outputs. An empty bias span means no bias.
namespace reference {
template <typename T>
void conv1d_forward(const ConvGeometry& g, std::span<const T> x,
                    std::span<const T> w, std::span<const T> bias,
                    std::span<T> y);
template <typename T>
void conv1d_backward_input(const ConvGeometry& g, std::span<const T> dy,
                           std::span<const T> w, std::span<T> dx);
template <typename T>
void conv1d_backward_params(const ConvGeometry& g, std::span<const T> x,
                            std::span<const T> dy, std::span<T> dw,
                            std::span<T> dbias);
}  // namespace reference

namespace parallel {
template <typename T>
void conv1d_forward(const ConvGeometry& g, std::span<const T> x,
                    std::span<const T> w, std::span<const T> bias,
                    std::span<T> y);
template <typename T>
void conv1d_backward_input(const ConvGeometry& g, std::span<const T> dy,
                           std::span<const T> w, std::span<T> dx);
template <typename T>
void conv1d_backward_params(const ConvGeometry& g, std::span<const T> x,
                            std::span<const T> dy, std::span<T> dw,
                            std::span<T> dbias);
}  // namespace parallel

// Number of OpenMP threads used by the parallel kernels (1 without OpenMP).
int num_threads();
// Reads SINV_NUM_THREADS (if set) and applies it. Returns the thread count.
int configure_threads_from_env();
void set_num_threads(int n);

}  // namespace sinv::nn::kernels

#endif  // SINV_NN_KERNELS_H_
