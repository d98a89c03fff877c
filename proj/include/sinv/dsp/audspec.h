// sinv/dsp/audspec.h
//
// Early-auditory "auditory spectrogram": a constant-Q cochlear filterbank,
// a hair-cell stage, lateral inhibition across channels and leaky temporal
// integration. Output is 128 nonnegative channels every 8 ms.

#ifndef SINV_DSP_AUDSPEC_H_
#define SINV_DSP_AUDSPEC_H_

#include <vector>

#include "sinv/dsp/feature_matrix.h"
#include "sinv/dsp/wave.h"

namespace sinv::dsp {

inline constexpr std::size_t kAudspecChannels = 128;
inline constexpr std::size_t kAudspecHop = 128;  // 8 ms at 16 kHz

struct AudspecOptions {
  int channels_per_octave = 24;
  double reference_hz = 440.0;      // CF of cochlear channel `reference_index`
  int reference_index = 31;
  double q_bandwidth = 0.1;         // pole bandwidth as a fraction of CF
  double haircell_cutoff_hz = 2000.0;
  double integration_ms = 8.0;
};

// Characteristic frequencies of the 129 cochlear channels, ascending.
std::vector<double> cochlear_cf(const AudspecOptions& opt = {});
// Frequency label of each of the 128 output channels. Output channel j is
// the rectified difference between cochlear channels j + 1 and j and is
// labeled with the CF of channel j + 1.
std::vector<double> audspec_cf(const AudspecOptions& opt = {});

// samples/128 frames x 128 channels, all entries >= 0.
FeatureMatrix auditory_spectrogram(const WaveBuffer& wave,
                                   const AudspecOptions& opt = {});
// 250 x 128 for a 2 s segment.
FeatureMatrix auditory_spectrogram(const Segment& seg,
                                   const AudspecOptions& opt = {});

}  // namespace sinv::dsp

#endif  // SINV_DSP_AUDSPEC_H_
