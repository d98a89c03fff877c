// sinv/source/app.h
//
// Aperiodicity / periodicity / pitch tracks from a multi-band normalized
// autocorrelation analysis, at 100 frames per second.

#ifndef SINV_SOURCE_APP_H_
#define SINV_SOURCE_APP_H_

#include <array>
#include <span>
#include <vector>

#include "sinv/dsp/feature_matrix.h"
#include "sinv/dsp/wave.h"

namespace sinv::source {

inline constexpr double kVoicingThreshold = 0.45;
inline constexpr double kMinPitchHz = 50.0;
inline constexpr double kMaxPitchHz = 400.0;

struct SourceTracks {
  std::vector<float> aperiodicity;
  std::vector<float> periodicity;
  std::vector<float> pitch;  // Hz, 0 when unvoiced
  double frame_rate = 100.0;

  std::size_t frames() const { return pitch.size(); }
};

struct AppOptions {
  int bands = 6;
  double low_hz = 80.0;
  double high_hz = 4000.0;
  double window_ms = 40.0;
  double hop_ms = 10.0;
  double min_pitch_hz = kMinPitchHz;
  double max_pitch_hz = kMaxPitchHz;
  double voicing_threshold = kVoicingThreshold;
  // A band counts as coherent when its autocorrelation at the chosen lag
  // reaches this value.
  double coherence = 0.8;
  // Bands centred above this use the envelope instead of the fine structure.
  double envelope_above_hz = 1500.0;
  // Bands below this fraction of the loudest band's energy do not vote on
  // the pitch lag.
  double band_floor = 1e-2;
  // Bands vote on the pitch lag with weight (E / E_max)^power.
  double band_weight_power = 0.75;
  // Octave / fifth correction against the median lag of this many frames on
  // each side; 0 disables it. The corrected peak must reach continuity_ratio
  // of the frame's own maximum.
  std::size_t continuity_frames = 5;
  double continuity_ratio = 0.4;
  // The shortest lag whose summed NCCF peak reaches this fraction of the
  // global maximum wins, which suppresses subharmonic picks.
  double peak_ratio = 0.9;
};

struct PitchEstimate {
  double pitch = 0;     // Hz
  double strength = 0;  // [0, 1]
};

struct PitchRange {
  double min_hz = kMinPitchHz;
  double max_hz = kMaxPitchHz;
};

// Normalized autocorrelation r(tau) = sum x[n] x[n+tau] /
// sqrt(sum x[n]^2 * sum x[n+tau]^2) over the overlapping part of the frame,
// for tau in [lag_lo, lag_hi]. Zero where either energy vanishes.
std::vector<double> nccf(std::span<const double> x, std::size_t lag_lo,
                         std::size_t lag_hi);
// Direct O(n * lags) evaluation of the same quantity, kept for testing.
std::vector<double> nccf_reference(std::span<const double> x, std::size_t lag_lo,
                                   std::size_t lag_hi);

// Lag of the first interior local maximum of r (indexed from lag_lo) that
// reaches 0.9 of the global maximum, refined by a parabola through its
// neighbours. Falls back to the global argmax when r has no interior
// maximum. Returns 0 when r is empty or nonpositive everywhere.
double pick_peak_lag(std::span<const double> r, std::size_t lag_lo, double ratio = 0.9);

// Mean-removed single-frame estimate. The frame must hold at least twice the
// longest lag in `range`.
PitchEstimate pitch_autocorr(std::span<const float> frame, int sample_rate,
                             PitchRange range = {});

// Center frequencies of the analysis bands, equally spaced on the ERB-rate
// scale between low_hz and high_hz.
std::vector<double> erb_space(double low_hz, double high_hz, int n);

// One frame per hop; frame i is centred on sample i * hop + hop / 2 and
// there are floor(duration / hop) frames. Near the ends the analysis window
// is shifted to lie inside the signal. Audio shorter than one window yields
// empty tracks.
SourceTracks app_analyze(const dsp::WaveBuffer& wave, const AppOptions& opt = {});

// Per-channel mean and std of [ap, per, log1p(pitch)].
struct SourceStats {
  std::array<double, 3> mean{0, 0, 0};
  std::array<double, 3> std{1, 1, 1};
};

inline constexpr const char* kSourceChannelNames[3] = {"ap", "per", "pitch"};

SourceStats compute_source_stats(std::span<const SourceTracks> tracks);
// 3-channel targets matrix [ap, per, pitch]; pitch goes through log1p before
// the z-score. Channels with zero std are only centered.
dsp::FeatureMatrix normalize_source_targets(const SourceTracks& tracks,
                                            const SourceStats& stats);
SourceTracks denormalize_source_targets(const dsp::FeatureMatrix& fm,
                                        const SourceStats& stats);

}  // namespace sinv::source

#endif  // SINV_SOURCE_APP_H_
