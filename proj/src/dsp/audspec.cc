// dsp/audspec.cc

#include "sinv/dsp/audspec.h"

#include <cmath>
#include <complex>

#include "sinv/error.h"

namespace sinv::dsp {

std::vector<double> cochlear_cf(const AudspecOptions& opt) {
  std::vector<double> cf(kAudspecChannels + 1);
  for (std::size_t k = 0; k < cf.size(); ++k)
    cf[k] = opt.reference_hz *
            std::pow(2.0, (double(k) - opt.reference_index) / opt.channels_per_octave);
  return cf;
}

std::vector<double> audspec_cf(const AudspecOptions& opt) {
  auto cf = cochlear_cf(opt);
  return {cf.begin() + 1, cf.end()};
}

FeatureMatrix auditory_spectrogram(const WaveBuffer& wave, const AudspecOptions& opt) {
  require(wave.sample_rate == kModelSampleRate,
          "auditory_spectrogram: expected 16 kHz audio");
  const auto cf = cochlear_cf(opt);
  require(cf.back() < 0.5 * wave.sample_rate,
          "auditory_spectrogram: top channel above Nyquist");
  const std::size_t n = wave.samples.size();
  const std::size_t n_coch = cf.size();
  const double fs = wave.sample_rate;
  const double a_hc = std::exp(-2.0 * M_PI * opt.haircell_cutoff_hz / fs);

  // Hair-cell outputs, one row per cochlear channel.
  std::vector<float> hair(n_coch * n);
#pragma omp parallel for schedule(dynamic)
  for (std::size_t k = 0; k < n_coch; ++k) {
    // Four cascaded complex one-pole resonators at CF, unit gain at CF.
    const double a = std::exp(-2.0 * M_PI * opt.q_bandwidth * cf[k] / fs);
    const std::complex<double> pole = a * std::polar(1.0, 2.0 * M_PI * cf[k] / fs);
    const double g = 1.0 - a;
    std::complex<double> s[4] = {};
    double prev = 0, lp = 0;
    float* row = hair.data() + k * n;
    for (std::size_t i = 0; i < n; ++i) {
      std::complex<double> u = double(wave.samples[i]);
      for (auto& st : s) {
        st = g * u + pole * st;
        u = st;
      }
      const double y = 2.0 * u.real();
      const double d = std::cbrt(y - prev);
      prev = y;
      lp = a_hc * lp + (1.0 - a_hc) * d;
      row[i] = float(lp);
    }
  }

  const std::size_t frames = n / kAudspecHop;
  FeatureMatrix out(frames, kAudspecChannels, fs / double(kAudspecHop),
                    FeatureKind::kAudspec);
  const double a_int = std::exp(-1.0 / (opt.integration_ms * 1e-3 * fs));
#pragma omp parallel for schedule(static)
  for (std::size_t j = 0; j < kAudspecChannels; ++j) {
    const float* lo = hair.data() + j * n;
    const float* hi = lo + n;
    double r = 0;
    for (std::size_t i = 0; i < frames * kAudspecHop; ++i) {
      const double v = std::max(0.0, double(hi[i]) - double(lo[i]));
      r = a_int * r + (1.0 - a_int) * v;
      if (i % kAudspecHop == kAudspecHop - 1) out.at(i / kAudspecHop, j) = float(r);
    }
  }
  return out;
}

FeatureMatrix auditory_spectrogram(const Segment& seg, const AudspecOptions& opt) {
  require(seg.wave.samples.size() == kSegmentSamples,
          "auditory_spectrogram: segment must hold exactly 2 s");
  return auditory_spectrogram(seg.wave, opt);
}

}  // namespace sinv::dsp
