// source/app.cc

#include "sinv/source/app.h"

#include <algorithm>
#include <cmath>
#include <complex>
#include <map>
#include <mutex>

#include <fftw3.h>

#include "sinv/error.h"

namespace sinv::source {

namespace {

double erb_rate(double hz) { return 21.4 * std::log10(1.0 + 0.00437 * hz); }
double erb_rate_inv(double e) { return (std::pow(10.0, e / 21.4) - 1.0) / 0.00437; }
double erb_width(double hz) { return 24.7 * (4.37e-3 * hz + 1.0); }

// Fourth-order gammatone approximated by four complex one-pole sections;
// `envelope`, when given, receives the Hilbert envelope of the output.
// unit gain at the center frequency.
std::vector<double> gammatone(const std::vector<float>& x, double cf, double fs,
                              std::vector<double>* envelope = nullptr) {
  const double b = 1.019 * erb_width(cf);
  const double a = std::exp(-2.0 * M_PI * b / fs);
  const std::complex<double> pole = a * std::polar(1.0, 2.0 * M_PI * cf / fs);
  const double g = 1.0 - a;
  std::complex<double> s[4] = {};
  std::vector<double> y(x.size());
  if (envelope) envelope->resize(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    std::complex<double> u = double(x[i]);
    for (auto& st : s) {
      st = g * u + pole * st;
      u = st;
    }
    y[i] = 2.0 * u.real();
    if (envelope) (*envelope)[i] = 2.0 * std::abs(u);
  }
  return y;
}

}  // namespace

std::vector<double> erb_space(double low_hz, double high_hz, int n) {
  require(n >= 1 && low_hz > 0 && high_hz > low_hz, "erb_space: bad range");
  std::vector<double> cf(static_cast<std::size_t>(n));
  const double lo = erb_rate(low_hz), hi = erb_rate(high_hz);
  for (int i = 0; i < n; ++i)
    cf[std::size_t(i)] = erb_rate_inv(n == 1 ? lo : lo + (hi - lo) * i / (n - 1));
  return cf;
}

namespace {

struct AutocorrPlans {
  std::size_t n = 0;
  fftw_plan fwd = nullptr, inv = nullptr;
};

// Plans for a zero-padded autocorrelation of length-n frames, created once
// per size. Execution on caller buffers is thread-safe; creation is not, so
// it is serialized here.
const AutocorrPlans& autocorr_plans(std::size_t n) {
  static std::mutex mu;
  static std::map<std::size_t, AutocorrPlans> cache;
  std::lock_guard<std::mutex> lock(mu);
  auto& p = cache[n];
  if (!p.fwd) {
    std::size_t m = 1;
    while (m < 2 * n) m <<= 1;
    p.n = m;
    std::vector<double> re(m);
    std::vector<std::complex<double>> sp(m / 2 + 1);
    auto* c = reinterpret_cast<fftw_complex*>(sp.data());
    p.fwd = fftw_plan_dft_r2c_1d(int(m), re.data(), c, FFTW_ESTIMATE | FFTW_UNALIGNED);
    p.inv = fftw_plan_dft_c2r_1d(int(m), c, re.data(), FFTW_ESTIMATE | FFTW_UNALIGNED);
  }
  return p;
}

}  // namespace

std::vector<double> nccf(std::span<const double> x, std::size_t lag_lo,
                         std::size_t lag_hi) {
  require(lag_lo <= lag_hi && lag_hi < x.size(), "nccf: lag range exceeds frame");
  const std::size_t n = x.size();
  std::vector<double> cum(n + 1, 0.0);
  for (std::size_t i = 0; i < n; ++i) cum[i + 1] = cum[i] + x[i] * x[i];

  // Lag products through the power spectrum of the zero-padded frame.
  const auto& plans = autocorr_plans(n);
  const std::size_t m = plans.n;
  std::vector<double> buf(m, 0.0);
  std::copy(x.begin(), x.end(), buf.begin());
  std::vector<std::complex<double>> sp(m / 2 + 1);
  auto* c = reinterpret_cast<fftw_complex*>(sp.data());
  fftw_execute_dft_r2c(plans.fwd, buf.data(), c);
  for (auto& v : sp) v = std::norm(v);
  fftw_execute_dft_c2r(plans.inv, c, buf.data());

  std::vector<double> r(lag_hi - lag_lo + 1, 0.0);
  for (std::size_t tau = lag_lo; tau <= lag_hi; ++tau) {
    const std::size_t k = n - tau;
    const double dot = buf[tau] / double(m);
    const double e0 = cum[k];
    const double e1 = cum[n] - cum[tau];
    const double den = std::sqrt(e0 * e1);
    // Rounding in the transform must not turn an empty overlap into noise.
    r[tau - lag_lo] = den > 1e-12 * cum[n] ? std::clamp(dot / den, -1.0, 1.0) : 0.0;
  }
  return r;
}

std::vector<double> nccf_reference(std::span<const double> x, std::size_t lag_lo,
                                   std::size_t lag_hi) {
  require(lag_lo <= lag_hi && lag_hi < x.size(), "nccf: lag range exceeds frame");
  const std::size_t n = x.size();
  std::vector<double> cum(n + 1, 0.0);
  for (std::size_t i = 0; i < n; ++i) cum[i + 1] = cum[i] + x[i] * x[i];
  std::vector<double> r(lag_hi - lag_lo + 1, 0.0);
  for (std::size_t tau = lag_lo; tau <= lag_hi; ++tau) {
    const std::size_t m = n - tau;
    double dot = 0;
    for (std::size_t i = 0; i < m; ++i) dot += x[i] * x[i + tau];
    const double e0 = cum[m];
    const double e1 = cum[n] - cum[tau];
    const double den = std::sqrt(e0 * e1);
    r[tau - lag_lo] = den > 0 ? std::clamp(dot / den, -1.0, 1.0) : 0.0;
  }
  return r;
}

namespace {

// Index of the first interior local maximum reaching `ratio` of the global
// maximum, else of the global maximum.
std::size_t peak_index(std::span<const double> r, double ratio) {
  const auto it = std::max_element(r.begin(), r.end());
  for (std::size_t i = 1; i + 1 < r.size(); ++i)
    if (r[i] >= r[i - 1] && r[i] >= r[i + 1] && r[i] >= ratio * *it) return i;
  return std::size_t(it - r.begin());
}

// Vertex offset of the parabola through r[k-1], r[k], r[k+1].
double parabolic_offset(std::span<const double> r, std::size_t k) {
  if (k == 0 || k + 1 >= r.size()) return 0;
  const double y0 = r[k - 1], y1 = r[k], y2 = r[k + 1];
  const double den = y0 - 2 * y1 + y2;
  if (!(den < 0) || y1 < y0 || y1 < y2) return 0;
  return std::clamp(0.5 * (y0 - y2) / den, -0.5, 0.5);
}

}  // namespace

double pick_peak_lag(std::span<const double> r, std::size_t lag_lo, double ratio) {
  if (r.empty() || !(*std::max_element(r.begin(), r.end()) > 0)) return 0;
  const std::size_t k = peak_index(r, ratio);
  return double(lag_lo + k) + parabolic_offset(r, k);
}

PitchEstimate pitch_autocorr(std::span<const float> frame, int sample_rate,
                             PitchRange range) {
  require(sample_rate > 0 && range.min_hz > 0 && range.max_hz > range.min_hz,
          "pitch_autocorr: bad pitch range");
  const auto lag_lo = std::max<std::size_t>(2, std::size_t(std::floor(sample_rate / range.max_hz)));
  const auto lag_hi = std::size_t(std::ceil(sample_rate / range.min_hz));
  require(frame.size() >= 2 * lag_hi,
          "pitch_autocorr: frame shorter than twice the longest lag");
  std::vector<double> x(frame.begin(), frame.end());
  double mean = 0;
  for (double v : x) mean += v;
  mean /= double(x.size());
  for (double& v : x) v -= mean;
  // One extra lag on each side so the parabola has neighbours at the edges.
  const auto r = nccf(x, lag_lo - 1, lag_hi + 1);
  const std::span<const double> in_range(r.data() + 1, lag_hi - lag_lo + 1);
  PitchEstimate est;
  est.strength = std::max(0.0, *std::max_element(in_range.begin(), in_range.end()));
  if (est.strength <= 0) return est;
  const std::size_t k = peak_index(in_range, 0.9);
  est.pitch = double(sample_rate) / (double(lag_lo + k) + parabolic_offset(r, k + 1));
  return est;
}

SourceTracks app_analyze(const dsp::WaveBuffer& wave, const AppOptions& opt) {
  require(wave.sample_rate > 0, "app_analyze: bad sample rate");
  require(opt.bands >= 1, "app_analyze: need at least one band");
  const double fs = wave.sample_rate;
  const auto win = std::size_t(std::lround(opt.window_ms * 1e-3 * fs));
  const auto hop = std::size_t(std::lround(opt.hop_ms * 1e-3 * fs));
  SourceTracks tr;
  tr.frame_rate = fs / double(hop);
  const std::size_t n = wave.samples.size();
  if (n < win) return tr;
  const std::size_t frames = n / hop;
  tr.aperiodicity.assign(frames, 0.0f);
  tr.periodicity.assign(frames, 0.0f);
  tr.pitch.assign(frames, 0.0f);

  const auto lag_lo = std::size_t(std::floor(fs / opt.max_pitch_hz));
  const auto lag_hi = std::size_t(std::ceil(fs / opt.min_pitch_hz));
  require(2 * lag_hi <= win, "app_analyze: window shorter than twice the longest lag");
  const auto cfs = erb_space(opt.low_hz, opt.high_hz, opt.bands);
  const std::size_t nb = cfs.size();
  // High bands hold unresolved harmonics whose fine structure is too fast
  // for an integer-lag grid; their periodicity is read from the envelope.
  std::vector<std::vector<double>> band(nb), env(nb);
  std::vector<char> use_env(nb);
#pragma omp parallel for schedule(static)
  for (std::size_t b = 0; b < nb; ++b) {
    use_env[b] = cfs[b] > opt.envelope_above_hz;
    band[b] = gammatone(wave.samples, cfs[b], fs, use_env[b] ? &env[b] : nullptr);
  }

  // Energy below this (per sample, summed over bands) is treated as silence.
  constexpr double kSilence = 1e-14;
  struct FrameNccf {
    bool silent = true;
    double total = 0;
    std::vector<double> energy;
    std::vector<std::vector<double>> r;  // per band
    std::vector<double> summed;          // weighted band mean
  };
  std::vector<FrameNccf> fn(frames);
  std::vector<double> lags(frames, 0.0);
#pragma omp parallel for schedule(dynamic, 8)
  for (std::size_t i = 0; i < frames; ++i) {
    FrameNccf& f = fn[i];
    const long center = long(i * hop + hop / 2);
    const long start = std::clamp(center - long(win / 2), 0L, long(n - win));
    f.r.resize(nb);
    f.energy.assign(nb, 0.0);
    std::vector<double> x(win);
    for (std::size_t b = 0; b < nb; ++b) {
      for (std::size_t j = 0; j < win; ++j) {
        const long s = start + long(j);
        x[j] = (s >= 0 && s < long(n)) ? band[b][std::size_t(s)] : 0.0;
        f.energy[b] += x[j] * x[j];
      }
      f.total += f.energy[b];
      if (use_env[b]) {
        double mean = 0;
        for (std::size_t j = 0; j < win; ++j) {
          const long s = start + long(j);
          x[j] = (s >= 0 && s < long(n)) ? env[b][std::size_t(s)] : 0.0;
          mean += x[j];
        }
        mean /= double(win);
        for (double& v : x) v -= mean;
      }
      f.r[b] = nccf(x, lag_lo, lag_hi);
    }
    f.silent = !(f.total > kSilence * double(win));
    if (f.silent) continue;

    // Bands vote with a power of their relative energy; bands far below the
    // loudest one are left out.
    const double e_max = *std::max_element(f.energy.begin(), f.energy.end());
    f.summed.assign(lag_hi - lag_lo + 1, 0.0);
    double wsum = 0;
    for (std::size_t b = 0; b < nb; ++b) {
      if (f.energy[b] < opt.band_floor * e_max) continue;
      const double w = std::pow(f.energy[b] / e_max, opt.band_weight_power);
      wsum += w;
      for (std::size_t k = 0; k < f.summed.size(); ++k) f.summed[k] += w * f.r[b][k];
    }
    for (double& v : f.summed) v /= wsum;
    const double lag = pick_peak_lag(f.summed, lag_lo, opt.peak_ratio);
    lags[i] = lag > 0 ? std::clamp(lag, fs / opt.max_pitch_hz, fs / opt.min_pitch_hz) : 0.0;
  }

  // Periodicity and aperiodicity of frame i at a given lag.
  auto evaluate = [&](std::size_t i, double lag, double* per, double* ap) {
    const FrameNccf& f = fn[i];
    const std::size_t k = std::min(f.summed.size() - 1,
                                   std::size_t(std::lround(lag)) - lag_lo);
    double p = 0, coherent = 0;
    for (std::size_t b = 0; b < nb; ++b) {
      if (f.r[b][k] >= opt.coherence) {
        p += f.energy[b] * f.r[b][k];
        coherent += f.energy[b];
      }
    }
    *per = std::clamp(p / f.total, 0.0, 1.0);
    *ap = std::clamp(1.0 - coherent / f.total, 0.0, 1.0);
  };
  std::vector<char> voiced0(frames, 0);
  for (std::size_t i = 0; i < frames; ++i) {
    if (lags[i] <= 0) continue;
    double per, ap;
    evaluate(i, lags[i], &per, &ap);
    voiced0[i] = float(per) >= float(opt.voicing_threshold);
  }

  // Continuity: a frame whose lag sits at an octave or fifth of the median
  // lag of its voiced neighbours moves to that lag when its own summed
  // NCCF has a strong enough peak there.
  std::vector<double> fixed = lags;
  if (opt.continuity_frames > 0) {
    const long span = long(opt.continuity_frames);
    std::vector<double> near;
    for (std::size_t i = 0; i < frames; ++i) {
      if (lags[i] <= 0) continue;
      near.clear();
      for (long d = -span; d <= span; ++d) {
        const long j = long(i) + d;
        if (d == 0 || j < 0 || j >= long(frames) || !voiced0[std::size_t(j)]) continue;
        near.push_back(lags[std::size_t(j)]);
      }
      if (near.size() < 2) continue;
      std::nth_element(near.begin(), near.begin() + long(near.size() / 2), near.end());
      const double ref = near[near.size() / 2];
      const double ratio = lags[i] / ref;
      bool jump = false;
      for (double q : {0.5, 2.0 / 3.0, 1.5, 2.0, 3.0})
        if (std::abs(ratio / q - 1.0) < 0.08) jump = true;
      if (!jump) continue;
      const auto& sm = fn[i].summed;
      const double gmax = *std::max_element(sm.begin(), sm.end());
      const long c = std::lround(ref) - long(lag_lo);
      const long w = std::max(1L, std::lround(0.04 * ref));
      long best = -1;
      for (long k = std::max(1L, c - w); k <= std::min(long(sm.size()) - 2, c + w); ++k)
        if (sm[k] >= sm[k - 1] && sm[k] >= sm[k + 1] && (best < 0 || sm[k] > sm[best])) best = k;
      if (best < 0 || sm[best] < opt.continuity_ratio * gmax) continue;
      fixed[i] = double(lag_lo) + double(best) +
                 parabolic_offset(std::span<const double>(sm), std::size_t(best));
    }
  }

  for (std::size_t i = 0; i < frames; ++i) {
    if (fn[i].silent) continue;
    if (fixed[i] <= 0) {
      tr.aperiodicity[i] = 1.0f;
      continue;
    }
    double per, ap;
    evaluate(i, fixed[i], &per, &ap);
    tr.periodicity[i] = float(per);
    tr.aperiodicity[i] = float(ap);
    if (tr.periodicity[i] >= float(opt.voicing_threshold)) tr.pitch[i] = float(fs / fixed[i]);
  }
  return tr;
}

SourceStats compute_source_stats(std::span<const SourceTracks> tracks) {
  SourceStats st;
  std::array<double, 3> s{0, 0, 0}, ss{0, 0, 0};
  double count = 0;
  for (const auto& t : tracks) {
    for (std::size_t i = 0; i < t.frames(); ++i) {
      const double v[3] = {t.aperiodicity[i], t.periodicity[i], std::log1p(double(t.pitch[i]))};
      for (int c = 0; c < 3; ++c) s[c] += v[c], ss[c] += v[c] * v[c];
    }
    count += double(t.frames());
  }
  require(count > 0, "compute_source_stats: no frames");
  for (int c = 0; c < 3; ++c) {
    st.mean[c] = s[c] / count;
    st.std[c] = std::sqrt(std::max(0.0, ss[c] / count - st.mean[c] * st.mean[c]));
  }
  return st;
}

dsp::FeatureMatrix normalize_source_targets(const SourceTracks& tracks,
                                            const SourceStats& stats) {
  dsp::FeatureMatrix fm(tracks.frames(), 3, tracks.frame_rate, dsp::FeatureKind::kTargets);
  for (std::size_t i = 0; i < tracks.frames(); ++i) {
    const double v[3] = {tracks.aperiodicity[i], tracks.periodicity[i],
                         std::log1p(double(tracks.pitch[i]))};
    for (int c = 0; c < 3; ++c) {
      const double d = v[c] - stats.mean[c];
      fm.at(i, c) = float(stats.std[c] > 0 ? d / stats.std[c] : d);
    }
  }
  return fm;
}

SourceTracks denormalize_source_targets(const dsp::FeatureMatrix& fm,
                                        const SourceStats& stats) {
  require(fm.channels == 3, "denormalize_source_targets: expected 3 channels");
  SourceTracks t;
  t.frame_rate = fm.frame_rate;
  t.aperiodicity.resize(fm.frames);
  t.periodicity.resize(fm.frames);
  t.pitch.resize(fm.frames);
  for (std::size_t i = 0; i < fm.frames; ++i) {
    double v[3];
    for (int c = 0; c < 3; ++c) {
      const double z = fm.at(i, c);
      v[c] = (stats.std[c] > 0 ? z * stats.std[c] : z) + stats.mean[c];
    }
    t.aperiodicity[i] = float(v[0]);
    t.periodicity[i] = float(v[1]);
    t.pitch[i] = float(std::expm1(v[2]));
  }
  return t;
}

}  // namespace sinv::source
