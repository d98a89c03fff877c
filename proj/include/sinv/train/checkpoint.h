// sinv/train/checkpoint.h
//
// Binary checkpoint, little-endian:
//   "AITC" u32 version
//   model config (widths, dilations, seed) and u32 n_layers, then per layer
//     u8 kind, u16 name length + name, i32 in, out, kernel, dilation, factor
//   per layer: weight, bias, running mean, running var as u64 count + f32[]
//   training state: i32 epoch, i32 best_epoch, f64 best_val, u64 seed,
//     i64 adam step, u32 slots, per slot u64 count + m f32[] + v f32[]
//   u32 length + JSON metadata (target names, normalization, input kind)

#ifndef SINV_TRAIN_CHECKPOINT_H_
#define SINV_TRAIN_CHECKPOINT_H_

#include <cstdint>
#include <filesystem>

#include "json.hpp"
#include "sinv/nn/optim.h"
#include "sinv/nn/tcn.h"

namespace sinv::train {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct TrainingState {
  int epoch = 0;       // epochs completed
  int best_epoch = -1;
  double best_val = 0;
  std::uint64_t seed = 0;
};

struct Checkpoint {
  explicit Checkpoint(const nn::TcnConfig& cfg) : model(cfg) {}
  nn::TcnModel<float> model;
  nn::AdamState<float> adam;
  TrainingState state;
  nlohmann::json meta;
};

void save_checkpoint(const std::filesystem::path& path, const nn::TcnModel<float>& model,
                     const nn::AdamState<float>& adam, const TrainingState& state,
                     const nlohmann::json& meta);
// Throws Error(kData) on a missing, truncated or inconsistent file.
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace sinv::train

#endif  // SINV_TRAIN_CHECKPOINT_H_
