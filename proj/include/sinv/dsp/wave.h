// sinv/dsp/wave.h
//
// Mono audio buffers, 16-bit PCM WAV I/O, band-limited downsampling and
// fixed-length segmentation.

#ifndef SINV_DSP_WAVE_H_
#define SINV_DSP_WAVE_H_

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace sinv::dsp {

inline constexpr int kModelSampleRate = 16000;
inline constexpr std::size_t kSegmentSamples = 32000;  // 2 s at 16 kHz

struct WaveBuffer {
  std::vector<float> samples;
  int sample_rate = kModelSampleRate;

  double duration() const { return double(samples.size()) / sample_rate; }
};

// Reads PCM WAV (16-bit integer or 32-bit float); multichannel files yield
// their first channel, scaled to [-1, 1).
WaveBuffer read_wav(const std::filesystem::path& path);
// Writes mono 16-bit PCM (scale 32768), clipping to [-1, 32767/32768].
void write_wav(const std::filesystem::path& path, const WaveBuffer& wave);

// Windowed-sinc (Blackman, 64 taps) low-pass at 0.45 * target_rate followed
// by fractional decimation. target_rate == sample_rate returns the input
// unchanged; upsampling is rejected.
WaveBuffer resample(const WaveBuffer& wave, int target_rate);

struct Segment {
  WaveBuffer wave;                // exactly kSegmentSamples samples
  std::size_t valid_samples = 0;  // non-padding prefix
  std::string source_utterance_id;
  double offset = 0;              // seconds into the utterance
};

// Splits a 16 kHz wave into consecutive 2 s segments, zero-padding the last.
std::vector<Segment> segment_and_pad(const WaveBuffer& wave,
                                     const std::string& utterance_id = "");

}  // namespace sinv::dsp

#endif  // SINV_DSP_WAVE_H_
