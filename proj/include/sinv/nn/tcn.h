// sinv/nn/tcn.h
//
// The inversion network: three 1x1 pre-processing convolutions, three dilated
// k=3 convolutions (dilations 1, 4, 16), a 1x1 projection followed by 4x frame
// repetition, a 1x1 projection followed by 5-frame average pooling, and a
// linear 1x1 output head. Every hidden convolution is followed by BatchNorm
// and ReLU. With the default widths a (B, 128, 250) input at 8 ms frames maps
// to (B, n_targets, 200) at 10 ms frames.

#ifndef SINV_NN_TCN_H_
#define SINV_NN_TCN_H_

#include <cstdint>
#include <string>
#include <vector>

#include "sinv/nn/ops.h"
#include "sinv/nn/tensor.h"

namespace sinv::nn {

enum class LayerKind : std::uint8_t {
  kConv1d = 0,
  kBatchNorm1d = 1,
  kRelu = 2,
  kUpsample = 3,
  kAvgPool = 4,
};

const char* layer_kind_name(LayerKind k);

struct LayerSpec {
  LayerKind kind = LayerKind::kConv1d;
  std::string name;
  int in_channels = 0;
  int out_channels = 0;
  int kernel = 1;
  int dilation = 1;
  int factor = 1;  // upsample factor or pooling window
  bool operator==(const LayerSpec&) const = default;
};

struct TcnConfig {
  int in_channels = 128;
  int n_targets = 9;
  bool tv_only = false;
  int pre_channels[3] = {128, 256, 256};  // C1, C2, C3
  int dilated_channels = 256;             // d1..d3
  int dilations[3] = {1, 4, 16};
  int dilated_kernel = 3;
  int c4_channels = 256;
  int c5_channels = 128;
  int upsample = 4;
  int pool = 5;
  std::uint64_t seed = 1;

  // All hidden widths set to `width`; used for gradient checks.
  static TcnConfig reduced(int width, int n_targets, bool tv_only = false);
  bool operator==(const TcnConfig&) const = default;
};

// Throws unless n_targets is 6 or 9 (TV-only) or 9 or 12 (with source
// features), and all widths are positive.
void validate(const TcnConfig& cfg);

// The ordered layer table for a configuration.
std::vector<LayerSpec> tcn_layer_specs(const TcnConfig& cfg);

// Output frames for an input of `frames` frames.
int tcn_output_frames(const TcnConfig& cfg, int frames);

template <typename T>
struct Layer {
  LayerSpec spec;
  Tensor<T> weight;  // conv weight or BatchNorm gamma
  Tensor<T> bias;    // conv bias or BatchNorm beta
  BatchNormStats<T> stats;
};

template <typename T>
class TcnModel {
 public:
  // Kaiming-uniform conv weights drawn from cfg.seed, zero biases,
  // gamma = 1, beta = 0.
  explicit TcnModel(const TcnConfig& cfg);

  const TcnConfig& config() const { return cfg_; }
  int n_targets() const { return cfg_.n_targets; }

  // x: (B, in_channels, T) -> (B, n_targets, T * upsample / pool).
  Tensor<T> forward(const Tensor<T>& x, Mode mode);

  std::vector<Tensor<T>> parameters() const;
  std::size_t parameter_count() const;

  std::vector<Layer<T>>& layers() { return layers_; }
  const std::vector<Layer<T>>& layers() const { return layers_; }

  // Train-mode forwards normally update BatchNorm running statistics.
  void set_update_running(bool on) { bn_opt_.update_running = on; }

 private:
  TcnConfig cfg_;
  std::vector<Layer<T>> layers_;
  BatchNormOptions bn_opt_;
};

// Copies parameters and running statistics between precisions.
template <typename To, typename From>
TcnModel<To> convert_model(const TcnModel<From>& m);

// Deterministic 64-bit generator (splitmix64) with a portable uniform
// mapping; used wherever bit-exact reproducibility across builds matters.
class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}
  std::uint64_t next();
  double uniform();                 // [0, 1)
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  double normal();                  // Box-Muller
  std::uint64_t below(std::uint64_t n) { return next() % n; }

 private:
  std::uint64_t state_;
};

}  // namespace sinv::nn

#endif  // SINV_NN_TCN_H_
