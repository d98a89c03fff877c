// sinv/data/synth.h
//
// Source-filter synthesizer producing paired audio, tract variables and
// source tracks. Smooth random TV trajectories drive two parallel
// resonators excited by a pulse train / noise mixture.
//
// Acoustic map (each value normalized to [0, 1] within its TV range):
//   F1 <- LA, F2 <- TTCD, B1 <- TBCD, B2 <- TTCL, G1 <- LP, G2 <- TBCL,
//   and for hprc9 the excitation tilt <- TMCD.
// Center frequencies rise with LA and TTCD, so narrowing a constriction
// lowers the resonance.

#ifndef SINV_DATA_SYNTH_H_
#define SINV_DATA_SYNTH_H_

#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"
#include "sinv/dsp/wave.h"
#include "sinv/source/app.h"
#include "sinv/tv/geometry.h"

namespace sinv::data {

inline constexpr int kGeneratorVersion = 1;

struct SynthConfig {
  int n_speakers = 12;
  int utterances_per_speaker = 40;
  double min_duration = 1.0;  // seconds
  double max_duration = 3.0;
  std::uint64_t seed = 7;
  tv::TvScheme scheme = tv::TvScheme::kXrmb6;

  double pitch_base_min = 90.0;  // Hz, drawn per speaker
  double pitch_base_max = 220.0;
  double pitch_modulation = 0.12;  // relative depth of the slow f0 contour
  double voiced_fraction = 0.7;    // probability that a source segment is voiced
  double palate_jitter = 0.1;      // relative palate length / height jitter
  double resonance_scale_min = 0.9;
  double resonance_scale_max = 1.1;
  std::vector<double> tempo_factors = {1.0, 1.5};
  double noise_bypass = 0.15;  // unfiltered excitation mixed into the output

  void validate() const;
  nlohmann::json to_json() const;
  static SynthConfig from_json(const nlohmann::json& j);
};

struct SpeakerParams {
  double pitch_base = 120;
  double resonance_scale = 1;
  tv::PalateTrace palate;
};

// Physical range of each TV for a speaker, in tv_names(scheme) order.
struct TvRange {
  double lo = 0, hi = 1;
};

SpeakerParams speaker_params(const SynthConfig& cfg, int speaker);
std::vector<TvRange> tv_ranges(const SynthConfig& cfg, const SpeakerParams& sp);
// Arched hard-palate trace, 14 vertices, alveolar ridge first.
tv::PalateTrace canonical_palate(double length_scale = 1.0, double height_scale = 1.0);

struct SynthUtterance {
  std::string id;
  int speaker = 0;
  double tempo = 1.0;
  dsp::WaveBuffer wave;       // 16 kHz, exactly 160 samples per TV frame
  tv::TrajectorySet tvs;      // 100 Hz
  source::SourceTracks truth; // generating voicing / pitch
};

std::string utterance_id(int speaker, int utt);
std::string speaker_id(int speaker);

// Deterministic in (cfg, speaker, utt).
SynthUtterance generate_utterance(const SynthConfig& cfg, int speaker, int utt);

}  // namespace sinv::data

#endif  // SINV_DATA_SYNTH_H_
