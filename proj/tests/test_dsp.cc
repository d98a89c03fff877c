// Tests for audio I/O, resampling, segmentation and the three front ends.

#include <cmath>
#include <complex>
#include <filesystem>
#include <numeric>
#include <vector>

#include "doctest.h"
#include "sinv/dsp/audspec.h"
#include "sinv/dsp/feature_matrix.h"
#include "sinv/dsp/spectral.h"
#include "sinv/dsp/wave.h"
#include "sinv/error.h"
#include "sinv/nn/tcn.h"

using namespace sinv;
using namespace sinv::dsp;

namespace {

WaveBuffer tone(double hz, double seconds, int rate, double amp = 0.5) {
  WaveBuffer w;
  w.sample_rate = rate;
  w.samples.resize(std::size_t(std::lround(seconds * rate)));
  for (std::size_t i = 0; i < w.samples.size(); ++i)
    w.samples[i] = float(amp * std::sin(2 * M_PI * hz * double(i) / rate));
  return w;
}

Segment as_segment(const WaveBuffer& w) {
  auto segs = segment_and_pad(w);
  REQUIRE(segs.size() == 1);
  return segs[0];
}

// Frequency of the largest DFT magnitude, by direct summation at every bin.
double dft_peak_hz(const std::vector<float>& x, int rate) {
  const std::size_t n = x.size();
  double best = -1;
  std::size_t arg = 0;
  for (std::size_t k = 1; k < n / 2; ++k) {
    std::complex<double> s = 0, ph = 1;
    const auto step = std::polar(1.0, -2 * M_PI * double(k) / double(n));
    for (std::size_t i = 0; i < n; ++i, ph *= step) s += double(x[i]) * ph;
    if (std::abs(s) > best) best = std::abs(s), arg = k;
  }
  return double(arg) * rate / double(n);
}

std::filesystem::path temp_path(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("sinv_test_dsp_" + name);
}

std::vector<float> column_mean_std(const FeatureMatrix& fm, std::size_t c,
                                   double* sd) {
  double s = 0;
  for (std::size_t t = 0; t < fm.frames; ++t) s += fm.at(t, c);
  const double m = s / double(fm.frames);
  double ss = 0;
  for (std::size_t t = 0; t < fm.frames; ++t) ss += (fm.at(t, c) - m) * (fm.at(t, c) - m);
  *sd = std::sqrt(ss / double(fm.frames));
  return {float(m)};
}

}  // namespace

TEST_CASE("wav round trip keeps 16-bit samples") {
  auto w = tone(300, 0.1, 16000);
  const auto p = temp_path("rt.wav");
  write_wav(p, w);
  auto r = read_wav(p);
  CHECK(r.sample_rate == 16000);
  REQUIRE(r.samples.size() == w.samples.size());
  for (std::size_t i = 0; i < w.samples.size(); ++i)
    CHECK(std::abs(r.samples[i] - w.samples[i]) < 1.0 / 16384);
  std::filesystem::remove(p);
  CHECK_THROWS_AS(read_wav(temp_path("missing.wav")), Error);
}

TEST_CASE("resample 44.1k tone to 16k keeps its frequency") {
  auto w = tone(440, 1.0, 44100);
  auto r = resample(w, 16000);
  CHECK(r.sample_rate == 16000);
  CHECK(r.samples.size() == 16000);
  CHECK(std::abs(dft_peak_hz(r.samples, 16000) - 440.0) <= 1.0);
  CHECK(std::abs(r.duration() - w.duration()) <= 1.0 / 16000);
}

TEST_CASE("resample identity and 2:1 length") {
  auto w = tone(100, 0.5, 16000);
  auto same = resample(w, 16000);
  CHECK(same.samples == w.samples);
  WaveBuffer big;
  big.sample_rate = 32000;
  big.samples.assign(64000, 0.25f);
  auto half = resample(big, 16000);
  CHECK(half.samples.size() == 32000);
  // Unity DC gain away from the edges.
  CHECK(std::abs(half.samples[16000] - 0.25f) < 1e-5);
}

TEST_CASE("resample removes content above the new Nyquist") {
  // 12 kHz at 32 kHz aliases to 4 kHz if not filtered.
  auto w = tone(12000, 0.5, 32000);
  auto r = resample(w, 16000);
  double e = 0;
  for (std::size_t i = 100; i + 100 < r.samples.size(); ++i) e += r.samples[i] * r.samples[i];
  CHECK(std::sqrt(e / double(r.samples.size() - 200)) < 1e-3);
}

TEST_CASE("resample rejects bad input") {
  WaveBuffer empty;
  CHECK_THROWS_AS(resample(empty, 16000), Error);
  auto w = tone(100, 0.1, 16000);
  CHECK_THROWS_AS(resample(w, 0), Error);
  CHECK_THROWS_AS(resample(w, -5), Error);
  CHECK_THROWS_AS(resample(w, 32000), Error);
}

TEST_CASE("segment_and_pad splits and pads") {
  WaveBuffer w;
  w.samples.resize(48000);
  for (std::size_t i = 0; i < w.samples.size(); ++i) w.samples[i] = float(i % 97) / 97.0f;
  auto segs = segment_and_pad(w, "u");
  REQUIRE(segs.size() == 2);
  CHECK(segs[0].valid_samples == 32000);
  CHECK(segs[1].valid_samples == 16000);
  CHECK(segs[1].offset == doctest::Approx(2.0));
  std::vector<float> joined;
  for (auto& s : segs) {
    CHECK(s.wave.samples.size() == kSegmentSamples);
    joined.insert(joined.end(), s.wave.samples.begin(),
                  s.wave.samples.begin() + long(s.valid_samples));
  }
  CHECK(joined == w.samples);
  for (std::size_t i = 16000; i < 32000; ++i) REQUIRE(segs[1].wave.samples[i] == 0.0f);

  w.samples.assign(32000, 0.1f);
  segs = segment_and_pad(w);
  REQUIRE(segs.size() == 1);
  CHECK(segs[0].valid_samples == 32000);

  w.samples.assign(100, 0.3f);
  segs = segment_and_pad(w);
  REQUIRE(segs.size() == 1);
  for (std::size_t i = 100; i < 32000; ++i) REQUIRE(segs[0].wave.samples[i] == 0.0f);

  w.samples.clear();
  CHECK(segment_and_pad(w).empty());
  w.sample_rate = 8000;
  CHECK_THROWS_AS(segment_and_pad(w), Error);
}

TEST_CASE("mel scale formula") {
  CHECK(hz_to_mel(1000.0) == doctest::Approx(999.99).epsilon(1e-5));
  CHECK(mel_to_hz(hz_to_mel(3210.0)) == doctest::Approx(3210.0));
}

TEST_CASE("mel spectrogram shapes and silence") {
  Segment s = as_segment(WaveBuffer{std::vector<float>(32000, 0.0f), 16000});
  auto m = melspectrogram(s);
  CHECK(m.frames == 250);
  CHECK(m.channels == 40);
  CHECK(m.frame_rate == doctest::Approx(125.0));
  const float floor = float(std::log(kLogFloorEnergy));
  for (float v : m.data) REQUIRE(v == floor);
  auto c = mfcc(s);
  CHECK(c.frames == 200);
  CHECK(c.channels == 13);
}

TEST_CASE("1 kHz tone peaks in the mel band centered nearest 1 kHz") {
  // Band centers from the formula: 42 equally spaced mel points over 0..8 kHz.
  const double top = 2595.0 * std::log10(1.0 + 8000.0 / 700.0);
  std::size_t expect = 0;
  double best = 1e9;
  for (std::size_t b = 0; b < 40; ++b) {
    const double mel = top * double(b + 1) / 41.0;
    const double hz = 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0);
    if (std::abs(hz - 1000.0) < best) best = std::abs(hz - 1000.0), expect = b;
  }
  auto m = melspectrogram(as_segment(tone(1000, 2.0, 16000)));
  std::vector<double> mean(40, 0.0);
  for (std::size_t t = 0; t < m.frames; ++t)
    for (std::size_t b = 0; b < 40; ++b) mean[b] += m.at(t, b);
  const auto arg = std::size_t(std::max_element(mean.begin(), mean.end()) - mean.begin());
  CHECK(arg == expect);
  for (float v : m.data) REQUIRE(v >= float(std::log(kLogFloorEnergy)));
}

TEST_CASE("DCT-II matches the direct formula") {
  const std::vector<double> x = {1, 2, 3, 4};
  auto d = dct2_orthonormal(x);
  for (std::size_t k = 0; k < 4; ++k) {
    double s = 0;
    for (std::size_t n = 0; n < 4; ++n) s += x[n] * std::cos(M_PI * (2.0 * n + 1) * k / 8.0);
    s *= k == 0 ? 0.5 : std::sqrt(0.5);
    CHECK(d[k] == doctest::Approx(s).epsilon(1e-12));
  }
  CHECK(d[0] == doctest::Approx(5.0));
  // Orthonormal: energy preserved.
  double e = 0;
  for (double v : d) e += v * v;
  CHECK(e == doctest::Approx(30.0));
}

TEST_CASE("flat log-mel frame puts everything in c0") {
  FeatureMatrix lm(3, 40, 100, FeatureKind::kMspec);
  std::fill(lm.data.begin(), lm.data.end(), 2.5f);
  auto c = mfcc_from_logmel(lm);
  for (std::size_t t = 0; t < 3; ++t) {
    CHECK(c.at(t, 0) == doctest::Approx(2.5 * std::sqrt(40.0)).epsilon(1e-5));
    for (std::size_t k = 1; k < 13; ++k) CHECK(std::abs(c.at(t, k)) < 1e-5);
  }
}

TEST_CASE("z-normalized mel and mfcc are amplitude invariant") {
  WaveBuffer w = tone(350, 2.0, 16000, 0.2);
  nn::SplitMix64 rng(3);
  for (std::size_t i = 0; i < w.samples.size(); ++i) {
    w.samples[i] += float(0.05 * rng.normal());
    w.samples[i] *= float(0.5 + 0.5 * std::sin(2 * M_PI * 3.0 * double(i) / 16000));
  }
  const auto base = as_segment(w);
  const auto zm = znorm_utterance(melspectrogram(base));
  const auto zc = znorm_utterance(mfcc(base));
  for (double alpha : {0.5, 2.0}) {
    WaveBuffer s = w;
    for (auto& v : s.samples) v = float(v * alpha);
    const auto zm2 = znorm_utterance(melspectrogram(as_segment(s)));
    const auto zc2 = znorm_utterance(mfcc(as_segment(s)));
    double dm = 0, dc = 0;
    for (std::size_t i = 0; i < zm.data.size(); ++i)
      dm = std::max(dm, double(std::abs(zm.data[i] - zm2.data[i])));
    for (std::size_t i = 0; i < zc.data.size(); ++i)
      dc = std::max(dc, double(std::abs(zc.data[i] - zc2.data[i])));
    CHECK(dm < 1e-4);
    CHECK(dc < 1e-4);
  }
}

TEST_CASE("auditory spectrogram silence, shape and sign") {
  auto zero = auditory_spectrogram(as_segment(WaveBuffer{std::vector<float>(32000, 0.0f), 16000}));
  CHECK(zero.frames == 250);
  CHECK(zero.channels == 128);
  for (float v : zero.data) REQUIRE(v == 0.0f);

  WaveBuffer noise{std::vector<float>(20000), 16000};
  nn::SplitMix64 rng(9);
  for (auto& v : noise.samples) v = float(0.3 * rng.normal());
  auto a = auditory_spectrogram(as_segment(noise));
  CHECK(a.frames == 250);
  for (float v : a.data) REQUIRE(v >= 0.0f);

  const auto cf = audspec_cf();
  REQUIRE(cf.size() == 128);
  CHECK(cf.back() < 8000.0);
  CHECK(std::log2(cf.back() / cf.front()) == doctest::Approx(127.0 / 24.0));
}

TEST_CASE("auditory spectrogram is tonotopic") {
  const auto cf = audspec_cf();
  for (double hz : {500.0, 1000.0, 2000.0}) {
    std::size_t expect = 0;
    for (std::size_t j = 1; j < cf.size(); ++j)
      if (std::abs(std::log(cf[j] / hz)) < std::abs(std::log(cf[expect] / hz))) expect = j;
    auto a = auditory_spectrogram(as_segment(tone(hz, 2.0, 16000, 0.3)));
    std::vector<double> mean(128, 0.0);
    for (std::size_t t = 25; t < a.frames; ++t)
      for (std::size_t j = 0; j < 128; ++j) mean[j] += a.at(t, j);
    const auto arg = std::size_t(std::max_element(mean.begin(), mean.end()) - mean.begin());
    CAPTURE(hz);
    CHECK(std::abs(long(arg) - long(expect)) <= 1);
    // A single contiguous dominant band: channels above half the peak are adjacent.
    const double peak = mean[arg];
    std::size_t lo = arg, hi = arg;
    while (lo > 0 && mean[lo - 1] >= 0.5 * peak) --lo;
    while (hi + 1 < 128 && mean[hi + 1] >= 0.5 * peak) ++hi;
    for (std::size_t j = 0; j < 128; ++j)
      if (j < lo || j > hi) CHECK(mean[j] < 0.5 * peak);
  }
}

TEST_CASE("feature matrix file round trip and sidecar") {
  FeatureMatrix fm(5, 3, 100.0, FeatureKind::kTargets);
  std::iota(fm.data.begin(), fm.data.end(), -2.0f);
  const auto p = temp_path("fm.bin");
  write_feature_matrix(p, fm);
  write_channel_manifest(p, {"a", "b", "c"}, fm.kind);
  CHECK(std::filesystem::file_size(p) == 4 + 4 * 4 + 1 + 15 * 4);
  auto r = read_feature_matrix(p);
  CHECK(r.frames == 5);
  CHECK(r.channels == 3);
  CHECK(r.frame_rate == 100.0);
  CHECK(r.kind == FeatureKind::kTargets);
  CHECK(r.data == fm.data);
  CHECK(read_channel_manifest(p) == std::vector<std::string>{"a", "b", "c"});
  std::filesystem::remove(channel_manifest_path(p));
  std::filesystem::resize_file(p, 30);
  CHECK_THROWS_AS(read_feature_matrix(p), Error);
  std::filesystem::remove(p);
}

TEST_CASE("znorm_utterance") {
  FeatureMatrix fm(3, 2, 100.0, FeatureKind::kMspec);
  fm.at(0, 0) = 2, fm.at(1, 0) = 4, fm.at(2, 0) = 6;
  fm.at(0, 1) = 5, fm.at(1, 1) = 5, fm.at(2, 1) = 5;
  auto z = znorm_utterance(fm);
  CHECK(z.at(0, 0) == doctest::Approx(-1.2247449));
  CHECK(z.at(1, 0) == doctest::Approx(0.0));
  CHECK(z.at(2, 0) == doctest::Approx(1.2247449));
  for (std::size_t t = 0; t < 3; ++t) CHECK(z.at(t, 1) == 0.0f);

  FeatureMatrix big(200, 4, 100.0, FeatureKind::kMspec);
  nn::SplitMix64 rng(5);
  for (auto& v : big.data) v = float(3.0 + 2.0 * rng.normal());
  auto zb = znorm_utterance(big);
  for (std::size_t c = 0; c < 4; ++c) {
    double sd;
    const auto m = column_mean_std(zb, c, &sd);
    CHECK(std::abs(m[0]) < 1e-6);
    CHECK(std::abs(sd - 1.0) < 1e-6);
  }
  auto again = znorm_utterance(zb);
  for (std::size_t i = 0; i < zb.data.size(); ++i)
    REQUIRE(std::abs(again.data[i] - zb.data[i]) < 1e-6);

  // Statistics from the valid prefix only.
  auto zp = znorm_utterance(big, 100);
  double sd;
  FeatureMatrix head(100, 4, 100.0, FeatureKind::kMspec);
  std::copy_n(zp.data.begin(), 400, head.data.begin());
  const auto m = column_mean_std(head, 0, &sd);
  CHECK(std::abs(m[0]) < 1e-6);
  CHECK(std::abs(sd - 1.0) < 1e-6);

  FeatureMatrix one(1, 2, 100.0, FeatureKind::kMspec);
  CHECK_THROWS_AS(znorm_utterance(one), Error);
}
