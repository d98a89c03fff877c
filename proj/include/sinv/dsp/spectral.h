// sinv/dsp/spectral.h
//
// Short-time log-mel spectra and MFCCs.

#ifndef SINV_DSP_SPECTRAL_H_
#define SINV_DSP_SPECTRAL_H_

#include <span>
#include <vector>

#include "sinv/dsp/feature_matrix.h"
#include "sinv/dsp/wave.h"

namespace sinv::dsp {

inline constexpr std::size_t kMelWindow = 320;   // 20 ms
inline constexpr std::size_t kMelFft = 512;
inline constexpr std::size_t kMelBands = 40;
inline constexpr std::size_t kMspecHop = 128;    // 8 ms, TCN input grid
inline constexpr std::size_t kMfccHop = 160;     // 10 ms
inline constexpr std::size_t kMfccCoeffs = 13;
inline constexpr double kLogFloorEnergy = 1e-10;

double hz_to_mel(double hz);
double mel_to_hz(double mel);

// HTK-style triangular filters with unit peak, equally spaced on the mel
// scale over [low_hz, high_hz]. Row b holds the weights of band b over the
// fft/2 + 1 power-spectrum bins.
struct MelFilterbank {
  std::size_t bands = 0;
  std::size_t bins = 0;
  std::vector<double> center_hz;
  std::vector<double> weights;  // bands x bins

  MelFilterbank(std::size_t n_bands, std::size_t fft_size, int sample_rate,
                double low_hz, double high_hz);
};

// Power spectrum of one Hamming-windowed frame, zero-padded to kMelFft.
// Returns kMelFft/2 + 1 bins.
std::vector<double> power_spectrum(std::span<const float> frame);

// Log-mel energies ln(max(E, 1e-10)). Frame i is the window starting at
// sample i * hop, zero-extended past the end; there are samples/hop frames.
FeatureMatrix log_mel_frames(const WaveBuffer& wave, std::size_t hop);

// 250 x 40 log-mel matrix for a 2 s segment.
FeatureMatrix melspectrogram(const Segment& seg);

// Orthonormal DCT-II: X_k = s_k * sum_n x_n cos(pi/N (n + 1/2) k), with
// s_0 = sqrt(1/N) and s_k = sqrt(2/N) otherwise.
std::vector<double> dct2_orthonormal(std::span<const double> x);

// First kMfccCoeffs DCT-II coefficients of each log-mel row.
FeatureMatrix mfcc_from_logmel(const FeatureMatrix& logmel);
// 200 x 13 MFCC matrix for a 2 s segment (10 ms hop).
FeatureMatrix mfcc(const Segment& seg);

}  // namespace sinv::dsp

#endif  // SINV_DSP_SPECTRAL_H_
