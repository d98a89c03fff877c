// dsp/spectral.cc

#include "sinv/dsp/spectral.h"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <mutex>

#include "sinv/error.h"

namespace sinv::dsp {

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

MelFilterbank::MelFilterbank(std::size_t n_bands, std::size_t fft_size,
                             int sample_rate, double low_hz, double high_hz)
    : bands(n_bands), bins(fft_size / 2 + 1) {
  require(n_bands > 0 && fft_size >= 2, "MelFilterbank: bad size");
  require(low_hz >= 0 && high_hz > low_hz && high_hz <= sample_rate / 2.0,
          "MelFilterbank: bad frequency range");
  const double mlo = hz_to_mel(low_hz), mhi = hz_to_mel(high_hz);
  std::vector<double> edge(n_bands + 2);
  for (std::size_t i = 0; i < edge.size(); ++i)
    edge[i] = mel_to_hz(mlo + (mhi - mlo) * double(i) / double(n_bands + 1));
  center_hz.assign(edge.begin() + 1, edge.end() - 1);
  weights.assign(bands * bins, 0.0);
  const double df = double(sample_rate) / double(fft_size);
  for (std::size_t b = 0; b < bands; ++b) {
    const double lo = edge[b], c = edge[b + 1], hi = edge[b + 2];
    for (std::size_t k = 0; k < bins; ++k) {
      const double f = double(k) * df;
      double w = 0;
      if (f > lo && f <= c) w = (f - lo) / (c - lo);
      else if (f > c && f < hi) w = (hi - f) / (hi - c);
      weights[b * bins + k] = w;
    }
  }
}

namespace {

const std::vector<double>& hamming_window() {
  static const std::vector<double> w = [] {
    std::vector<double> v(kMelWindow);
    for (std::size_t n = 0; n < kMelWindow; ++n)
      v[n] = 0.54 - 0.46 * std::cos(2.0 * M_PI * double(n) / double(kMelWindow - 1));
    return v;
  }();
  return w;
}

const MelFilterbank& mel_filterbank() {
  static const MelFilterbank fb(kMelBands, kMelFft, kModelSampleRate, 0.0, 8000.0);
  return fb;
}

// Planner calls are not thread-safe in FFTW; executing an existing plan on
// caller-owned buffers is.
fftw_plan r2c_plan() {
  static std::once_flag once;
  static fftw_plan plan;
  std::call_once(once, [] {
    std::vector<double> in(kMelFft);
    std::vector<std::complex<double>> out(kMelFft / 2 + 1);
    plan = fftw_plan_dft_r2c_1d(int(kMelFft), in.data(),
                                reinterpret_cast<fftw_complex*>(out.data()),
                                FFTW_ESTIMATE | FFTW_UNALIGNED);
  });
  return plan;
}

}  // namespace

std::vector<double> power_spectrum(std::span<const float> frame) {
  require(frame.size() <= kMelWindow, "power_spectrum: frame longer than window");
  const auto& win = hamming_window();
  std::vector<double> in(kMelFft, 0.0);
  for (std::size_t n = 0; n < frame.size(); ++n) in[n] = double(frame[n]) * win[n];
  std::vector<std::complex<double>> out(kMelFft / 2 + 1);
  fftw_execute_dft_r2c(r2c_plan(), in.data(),
                       reinterpret_cast<fftw_complex*>(out.data()));
  std::vector<double> p(out.size());
  for (std::size_t k = 0; k < out.size(); ++k) p[k] = std::norm(out[k]);
  return p;
}

FeatureMatrix log_mel_frames(const WaveBuffer& wave, std::size_t hop) {
  require(wave.sample_rate == kModelSampleRate, "log_mel_frames: expected 16 kHz audio");
  require(hop > 0, "log_mel_frames: hop must be positive");
  const auto& fb = mel_filterbank();
  const std::size_t n = wave.samples.size();
  const std::size_t frames = n / hop;
  FeatureMatrix fm(frames, kMelBands, double(kModelSampleRate) / double(hop),
                   FeatureKind::kMspec);
  for (std::size_t i = 0; i < frames; ++i) {
    const std::size_t start = i * hop;
    const std::size_t len = std::min(kMelWindow, n - start);
    const auto p = power_spectrum(std::span(wave.samples).subspan(start, len));
    for (std::size_t b = 0; b < kMelBands; ++b) {
      const double* w = fb.weights.data() + b * fb.bins;
      double e = 0;
      for (std::size_t k = 0; k < fb.bins; ++k) e += w[k] * p[k];
      fm.at(i, b) = float(std::log(std::max(e, kLogFloorEnergy)));
    }
  }
  return fm;
}

FeatureMatrix melspectrogram(const Segment& seg) {
  require(seg.wave.samples.size() == kSegmentSamples,
          "melspectrogram: segment must hold exactly 2 s");
  return log_mel_frames(seg.wave, kMspecHop);
}

std::vector<double> dct2_orthonormal(std::span<const double> x) {
  const std::size_t n = x.size();
  require(n > 0, "dct2_orthonormal: empty input");
  std::vector<double> out(n);
  for (std::size_t k = 0; k < n; ++k) {
    double s = 0;
    for (std::size_t i = 0; i < n; ++i)
      s += x[i] * std::cos(M_PI / double(n) * (double(i) + 0.5) * double(k));
    out[k] = s * std::sqrt((k == 0 ? 1.0 : 2.0) / double(n));
  }
  return out;
}

FeatureMatrix mfcc_from_logmel(const FeatureMatrix& logmel) {
  require(logmel.channels >= kMfccCoeffs, "mfcc_from_logmel: too few bands");
  FeatureMatrix out(logmel.frames, kMfccCoeffs, logmel.frame_rate, FeatureKind::kMfcc);
  std::vector<double> row(logmel.channels);
  for (std::size_t t = 0; t < logmel.frames; ++t) {
    for (std::size_t c = 0; c < logmel.channels; ++c) row[c] = logmel.at(t, c);
    const auto d = dct2_orthonormal(row);
    for (std::size_t c = 0; c < kMfccCoeffs; ++c) out.at(t, c) = float(d[c]);
  }
  return out;
}

FeatureMatrix mfcc(const Segment& seg) {
  require(seg.wave.samples.size() == kSegmentSamples,
          "mfcc: segment must hold exactly 2 s");
  return mfcc_from_logmel(log_mel_frames(seg.wave, kMfccHop));
}

}  // namespace sinv::dsp
