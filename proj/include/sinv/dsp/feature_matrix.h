// sinv/dsp/feature_matrix.h

#ifndef SINV_DSP_FEATURE_MATRIX_H_
#define SINV_DSP_FEATURE_MATRIX_H_

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace sinv::dsp {

enum class FeatureKind : std::uint8_t {
  kAudspec = 0,
  kMspec = 1,
  kMfcc = 2,
  kTargets = 3,
};

const char* feature_kind_name(FeatureKind k);
FeatureKind parse_feature_kind(const std::string& s);

// frames x channels, row-major by frame.
struct FeatureMatrix {
  std::size_t frames = 0;
  std::size_t channels = 0;
  double frame_rate = 100.0;  // frames per second
  FeatureKind kind = FeatureKind::kTargets;
  std::vector<float> data;

  FeatureMatrix() = default;
  FeatureMatrix(std::size_t f, std::size_t c, double rate, FeatureKind k)
      : frames(f), channels(c), frame_rate(rate), kind(k), data(f * c, 0.0f) {}

  float& at(std::size_t t, std::size_t c) { return data[t * channels + c]; }
  float at(std::size_t t, std::size_t c) const { return data[t * channels + c]; }
  std::vector<float> column(std::size_t c) const;
};

// Binary layout, little-endian:
//   "AIFM" u32 version=1 u32 frames u32 channels u32 frame_rate_millihz u8 kind
//   frames*channels float32, row-major by frame.
void write_feature_matrix(const std::filesystem::path& path,
                          const FeatureMatrix& fm);
FeatureMatrix read_feature_matrix(const std::filesystem::path& path);

// Sidecar "<stem>.json" listing channel names next to a feature file.
std::filesystem::path channel_manifest_path(const std::filesystem::path& bin);
void write_channel_manifest(const std::filesystem::path& bin,
                            const std::vector<std::string>& channels,
                            FeatureKind kind);
std::vector<std::string> read_channel_manifest(const std::filesystem::path& bin);

// Per-channel z-score using the population standard deviation over the first
// `valid_frames` frames (all frames if unset). The statistics are applied to
// every frame; channels that are constant over the valid frames become 0.
FeatureMatrix znorm_utterance(const FeatureMatrix& fm,
                              std::optional<std::size_t> valid_frames = {});

}  // namespace sinv::dsp

#endif  // SINV_DSP_FEATURE_MATRIX_H_
