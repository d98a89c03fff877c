// data/synth.cc

#include "sinv/data/synth.h"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "sinv/error.h"
#include "sinv/nn/tcn.h"

namespace sinv::data {

namespace {

using nn::SplitMix64;

constexpr int kFrameSamples = 160;  // 10 ms at 16 kHz
constexpr double kFrameRate = 100.0;

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t tag, std::uint64_t a,
                          std::uint64_t b) {
  SplitMix64 r(seed ^ (tag * 0x9E3779B97F4A7C15ULL));
  r.next();
  SplitMix64 s(r.next() ^ (a * 0xBF58476D1CE4E5B9ULL) ^ (b * 0x94D049BB133111EBULL));
  return s.next();
}

// Sum of random-phase sinusoids in [center - 0.45 w, center + 0.45 w], so
// trajectories never touch the range ends and need no clipping.
std::vector<double> smooth_track(SplitMix64& rng, std::size_t frames, double tempo,
                                 double max_hz) {
  const int k = 2 + int(rng.below(4));  // 2..5 components
  std::vector<double> f(k), a(k), ph(k);
  double asum = 0;
  for (int i = 0; i < k; ++i) {
    f[i] = rng.uniform(0.3, max_hz / tempo);
    a[i] = rng.uniform(0.3, 1.0);
    ph[i] = rng.uniform(0.0, 2 * M_PI);
    asum += a[i];
  }
  const double scale = 0.45 * rng.uniform(0.7, 1.0) / asum;
  std::vector<double> x(frames);
  for (std::size_t t = 0; t < frames; ++t) {
    const double time = tempo * double(t) / kFrameRate;
    double s = 0;
    for (int i = 0; i < k; ++i) s += a[i] * std::sin(2 * M_PI * f[i] * time + ph[i]);
    x[t] = 0.5 + scale * s;  // normalized position in [0.05, 0.95]
  }
  return x;
}

// Linear interpolation of a 100 Hz track at sample i.
double at_sample(const std::vector<double>& x, std::size_t i) {
  const double pos = double(i) / kFrameSamples;
  const auto k = std::size_t(pos);
  if (k + 1 >= x.size()) return x.back();
  const double f = pos - double(k);
  return x[k] + f * (x[k + 1] - x[k]);
}

// Two-pole resonator with unit gain at the center frequency.
struct Resonator {
  double y1 = 0, y2 = 0;
  double step(double x, double f, double bw, double fs) {
    const double r = std::exp(-M_PI * bw / fs);
    const double th = 2 * M_PI * f / fs;
    const double b0 = (1 - r) * std::sqrt(1 - 2 * r * std::cos(2 * th) + r * r);
    const double y = b0 * x + 2 * r * std::cos(th) * y1 - r * r * y2;
    y2 = y1;
    y1 = y;
    return y;
  }
};

}  // namespace

void SynthConfig::validate() const {
  auto bad = [](const std::string& m) { fail(ErrorKind::kConfig, "synth config: " + m); };
  if (n_speakers < 4) bad("n_speakers must be at least 4 so disjoint splits exist");
  if (utterances_per_speaker < 1) bad("utterances_per_speaker must be positive");
  if (!(min_duration >= 0.1) || !(max_duration >= min_duration))
    bad("duration range must satisfy 0.1 <= min <= max");
  if (!(pitch_base_min >= 50) || !(pitch_base_max <= 400) || pitch_base_max < pitch_base_min)
    bad("pitch base range must lie within 50..400 Hz");
  if (!(pitch_modulation >= 0 && pitch_modulation < 0.5)) bad("pitch_modulation must be in [0, 0.5)");
  if (!(voiced_fraction >= 0 && voiced_fraction <= 1)) bad("voiced_fraction must be in [0, 1]");
  if (!(palate_jitter >= 0 && palate_jitter < 0.5)) bad("palate_jitter must be in [0, 0.5)");
  if (!(resonance_scale_min > 0) || resonance_scale_max < resonance_scale_min)
    bad("bad resonance scale range");
  if (tempo_factors.empty()) bad("tempo_factors must not be empty");
  for (double t : tempo_factors)
    if (!(t >= 0.5 && t <= 2.0)) bad("tempo factors must lie in [0.5, 2]");
  if (!(noise_bypass >= 0 && noise_bypass <= 1)) bad("noise_bypass must be in [0, 1]");
}

nlohmann::json SynthConfig::to_json() const {
  return {
      {"generator_version", kGeneratorVersion},
      {"n_speakers", n_speakers},
      {"utterances_per_speaker", utterances_per_speaker},
      {"min_duration", min_duration},
      {"max_duration", max_duration},
      {"seed", seed},
      {"scheme", tv::scheme_name(scheme)},
      {"pitch_base_min", pitch_base_min},
      {"pitch_base_max", pitch_base_max},
      {"pitch_modulation", pitch_modulation},
      {"voiced_fraction", voiced_fraction},
      {"palate_jitter", palate_jitter},
      {"resonance_scale_min", resonance_scale_min},
      {"resonance_scale_max", resonance_scale_max},
      {"tempo_factors", tempo_factors},
      {"noise_bypass", noise_bypass},
  };
}

SynthConfig SynthConfig::from_json(const nlohmann::json& j) {
  SynthConfig c;
  try {
    if (j.contains("generator_version") && j["generator_version"].get<int>() != kGeneratorVersion)
      fail(ErrorKind::kConfig, "synth config: unsupported generator_version");
    c.n_speakers = j.value("n_speakers", c.n_speakers);
    c.utterances_per_speaker = j.value("utterances_per_speaker", c.utterances_per_speaker);
    c.min_duration = j.value("min_duration", c.min_duration);
    c.max_duration = j.value("max_duration", c.max_duration);
    c.seed = j.value("seed", c.seed);
    if (j.contains("scheme")) c.scheme = tv::parse_scheme(j["scheme"].get<std::string>());
    c.pitch_base_min = j.value("pitch_base_min", c.pitch_base_min);
    c.pitch_base_max = j.value("pitch_base_max", c.pitch_base_max);
    c.pitch_modulation = j.value("pitch_modulation", c.pitch_modulation);
    c.voiced_fraction = j.value("voiced_fraction", c.voiced_fraction);
    c.palate_jitter = j.value("palate_jitter", c.palate_jitter);
    c.resonance_scale_min = j.value("resonance_scale_min", c.resonance_scale_min);
    c.resonance_scale_max = j.value("resonance_scale_max", c.resonance_scale_max);
    c.tempo_factors = j.value("tempo_factors", c.tempo_factors);
    c.noise_bypass = j.value("noise_bypass", c.noise_bypass);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::kConfig, std::string("synth config: ") + e.what());
  }
  c.validate();
  return c;
}

tv::PalateTrace canonical_palate(double length_scale, double height_scale) {
  tv::PalateTrace p;
  constexpr int kN = 14;
  for (int i = 0; i < kN; ++i) {
    const double u = double(i) / (kN - 1);
    p.points.push_back({10.0 - 50.0 * length_scale * u,
                        10.0 + 9.0 * height_scale * std::sin(M_PI * std::pow(u, 0.8))});
  }
  return p;
}

std::string speaker_id(int speaker) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "s%03d", speaker);
  return buf;
}

std::string utterance_id(int speaker, int utt) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "s%03d_u%03d", speaker, utt);
  return buf;
}

SpeakerParams speaker_params(const SynthConfig& cfg, int speaker) {
  require(speaker >= 0 && speaker < cfg.n_speakers, "speaker id out of range");
  SplitMix64 rng(derive_seed(cfg.seed, 1, std::uint64_t(speaker), 0));
  SpeakerParams sp;
  sp.pitch_base = rng.uniform(cfg.pitch_base_min, cfg.pitch_base_max);
  sp.resonance_scale = rng.uniform(cfg.resonance_scale_min, cfg.resonance_scale_max);
  const double ls = 1.0 + cfg.palate_jitter * rng.uniform(-1.0, 1.0);
  const double hs = 1.0 + cfg.palate_jitter * rng.uniform(-1.0, 1.0);
  sp.palate = canonical_palate(ls, hs);
  return sp;
}

std::vector<TvRange> tv_ranges(const SynthConfig& cfg, const SpeakerParams& sp) {
  const double len = sp.palate.length();
  std::vector<TvRange> r = {
      {0.0, 20.0},               // LA
      {4.0, 14.0},               // LP
      {0.55 * len, 0.9 * len},   // TBCL
      {0.0, 16.0},               // TBCD
      {0.05 * len, 0.4 * len},   // TTCL
      {0.0, 14.0},               // TTCD
  };
  if (cfg.scheme == tv::TvScheme::kHprc9) {
    r.push_back({-1.75, -1.35});            // JA
    r.push_back({0.3 * len, 0.65 * len});   // TMCL
    r.push_back({0.0, 15.0});               // TMCD
  }
  return r;
}

SynthUtterance generate_utterance(const SynthConfig& cfg, int speaker, int utt) {
  cfg.validate();
  require(utt >= 0 && utt < cfg.utterances_per_speaker, "utterance id out of range");
  const SpeakerParams sp = speaker_params(cfg, speaker);
  const auto ranges = tv_ranges(cfg, sp);
  SplitMix64 rng(derive_seed(cfg.seed, 2, std::uint64_t(speaker), std::uint64_t(utt)));

  SynthUtterance out;
  out.id = utterance_id(speaker, utt);
  out.speaker = speaker;
  out.tempo = cfg.tempo_factors[rng.below(cfg.tempo_factors.size())];
  const double dur = rng.uniform(cfg.min_duration, cfg.max_duration);
  const auto frames = std::size_t(std::max(2L, std::lround(dur * kFrameRate)));
  const double fs = dsp::kModelSampleRate;

  // Normalized TV positions. Trajectory components stay below 8 Hz after
  // the tempo factor is applied.
  const bool hprc = cfg.scheme == tv::TvScheme::kHprc9;
  const std::size_t n_tv = tv::tv_count(cfg.scheme);
  std::vector<std::vector<double>> pos(n_tv);
  for (std::size_t c = 0; c < 6; ++c) pos[c] = smooth_track(rng, frames, out.tempo, 8.0);
  if (hprc) {
    // Jaw angle follows lip aperture; tongue-mid location sits between tip
    // and body. Each keeps a small component of its own.
    const auto ja_own = smooth_track(rng, frames, out.tempo, 8.0);
    const auto tm_own = smooth_track(rng, frames, out.tempo, 8.0);
    pos[6].resize(frames);
    pos[7].resize(frames);
    for (std::size_t t = 0; t < frames; ++t) {
      pos[6][t] = 0.5 + 0.6 * (pos[0][t] - 0.5) + 0.4 * (ja_own[t] - 0.5);
      pos[7][t] = 0.5 + 0.6 * (0.5 * (pos[2][t] + pos[4][t]) - 0.5) + 0.4 * (tm_own[t] - 0.5);
    }
    pos[8] = smooth_track(rng, frames, out.tempo, 8.0);
  }
  out.tvs.names = tv::tv_names(cfg.scheme);
  out.tvs.frame_rate = kFrameRate;
  out.tvs.valid_frames = frames;
  out.tvs.tracks.resize(n_tv);
  for (std::size_t c = 0; c < n_tv; ++c) {
    out.tvs.tracks[c].resize(frames);
    for (std::size_t t = 0; t < frames; ++t) {
      const double p = std::clamp(pos[c][t], 0.0, 1.0);
      out.tvs.tracks[c][t] = ranges[c].lo + p * (ranges[c].hi - ranges[c].lo);
    }
  }

  // Voicing: alternating segments with 30 ms cross-fades.
  std::vector<double> voicing(frames);
  {
    std::vector<double> target(frames);
    std::size_t t = 0;
    while (t < frames) {
      const auto min_len = std::size_t(0.25 * kFrameRate) + 1;
      auto len = std::size_t(rng.uniform(0.25, 0.6) * kFrameRate) + 1;
      // A remainder too short to be a segment joins this one.
      if (frames - std::min(frames, t + len) < min_len) len = frames - t;
      const double v = rng.uniform() < cfg.voiced_fraction ? 1.0 : 0.0;
      for (std::size_t k = t; k < std::min(frames, t + len); ++k) target[k] = v;
      t += len;
    }
    constexpr int kRamp = 2;
    for (std::size_t k = 0; k < frames; ++k) {
      double s = 0;
      int n = 0;
      for (int d = -kRamp + 1; d < kRamp; ++d) {
        const long j = std::clamp(long(k) + d, 0L, long(frames) - 1);
        s += target[std::size_t(j)];
        ++n;
      }
      voicing[k] = s / n;
    }
  }
  std::vector<double> f0(frames);
  {
    const double fa = rng.uniform(0.3, 1.5), fb = rng.uniform(0.3, 1.5);
    const double pa = rng.uniform(0, 2 * M_PI), pb = rng.uniform(0, 2 * M_PI);
    for (std::size_t t = 0; t < frames; ++t) {
      const double time = double(t) / kFrameRate;
      const double s = 0.6 * std::sin(2 * M_PI * fa * time + pa) +
                       0.4 * std::sin(2 * M_PI * fb * time + pb);
      f0[t] = sp.pitch_base * (1.0 + cfg.pitch_modulation * s);
    }
  }
  out.truth.frame_rate = kFrameRate;
  out.truth.pitch.resize(frames);
  out.truth.periodicity.resize(frames);
  out.truth.aperiodicity.resize(frames);
  for (std::size_t t = 0; t < frames; ++t) {
    out.truth.periodicity[t] = float(voicing[t]);
    out.truth.aperiodicity[t] = float(1.0 - voicing[t]);
    out.truth.pitch[t] = voicing[t] >= 0.5 ? float(f0[t]) : 0.0f;
  }

  // Glottal pulses are band-limited impulses placed at the exact crossing
  // time of the f0 phase, so the pulse train is periodic at the true
  // period rather than at a rounded one.
  const std::size_t n = frames * kFrameSamples;
  std::vector<double> pulses(n, 0.0);
  {
    constexpr int kHalf = 8;
    constexpr double kCut = 0.9;  // of Nyquist
    double phase = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const double step = at_sample(f0, i) / fs;
      phase += step;
      if (phase < 1.0) continue;
      phase -= 1.0;
      const double t0 = double(i) - phase / step;
      const double amp = std::sqrt(1.0 / step);  // unit mean power
      const long c = std::lround(t0);
      for (long m = c - kHalf; m <= c + kHalf; ++m) {
        if (m < 0 || m >= long(n)) continue;
        const double d = double(m) - t0;
        if (std::abs(d) >= kHalf) continue;
        const double sinc = d == 0 ? 1.0 : std::sin(M_PI * kCut * d) / (M_PI * kCut * d);
        const double w = 0.5 + 0.5 * std::cos(M_PI * d / kHalf);
        pulses[std::size_t(m)] += amp * kCut * sinc * w;
      }
    }
  }

  std::vector<double> y(n);
  Resonator r1, r2;
  double tilt_state = 0;
  const double s = sp.resonance_scale;
  const auto& v = voicing;
  for (std::size_t i = 0; i < n; ++i) {
    const double vi = at_sample(v, i);
    const double pulse = pulses[i];
    double e = std::sqrt(vi) * pulse + std::sqrt(1.0 - vi) * rng.normal();
    if (hprc) {
      const double c = 0.7 * at_sample(pos[8], i);
      tilt_state = (1 - c) * e + c * tilt_state;
      e = tilt_state;
    }
    const double f1 = s * (250.0 + 650.0 * at_sample(pos[0], i));
    const double f2 = s * (900.0 + 1600.0 * at_sample(pos[5], i));
    const double b1 = 100.0 + 250.0 * at_sample(pos[3], i);
    const double b2 = 150.0 + 300.0 * at_sample(pos[4], i);
    const double g1 = std::pow(10.0, (-9.0 + 18.0 * at_sample(pos[1], i)) / 20.0);
    const double g2 = std::pow(10.0, (-9.0 + 18.0 * at_sample(pos[2], i)) / 20.0);
    y[i] = g1 * r1.step(e, f1, b1, fs) + g2 * r2.step(e, f2, b2, fs) + cfg.noise_bypass * e;
  }
  double ss = 0;
  for (double x : y) ss += x * x;
  const double gain = ss > 0 ? 0.1 / std::sqrt(ss / double(n)) : 0.0;
  out.wave.sample_rate = dsp::kModelSampleRate;
  out.wave.samples.resize(n);
  // Quantize to the 16-bit grid so the written WAV reproduces these samples.
  for (std::size_t i = 0; i < n; ++i) {
    const double q = std::clamp(std::round(y[i] * gain * 32768.0), -32768.0, 32767.0);
    out.wave.samples[i] = float(q / 32768.0);
  }
  return out;
}

}  // namespace sinv::data
