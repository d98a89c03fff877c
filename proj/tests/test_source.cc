// Tests for the aperiodicity / periodicity / pitch detector.

#include <algorithm>
#include <cmath>
#include <vector>

#include "doctest.h"
#include "sinv/error.h"
#include "sinv/nn/tcn.h"
#include "sinv/source/app.h"

using namespace sinv;
using namespace sinv::source;
using sinv::dsp::WaveBuffer;

namespace {

constexpr int kRate = 16000;

WaveBuffer sawtooth(double hz, double seconds, double amp = 0.3) {
  WaveBuffer w{std::vector<float>(std::size_t(seconds * kRate)), kRate};
  for (std::size_t i = 0; i < w.samples.size(); ++i) {
    const double ph = std::fmod(hz * double(i) / kRate, 1.0);
    w.samples[i] = float(amp * (2.0 * ph - 1.0));
  }
  return w;
}

WaveBuffer noise(double seconds, std::uint64_t seed, double amp = 0.3) {
  WaveBuffer w{std::vector<float>(std::size_t(seconds * kRate)), kRate};
  nn::SplitMix64 rng(seed);
  for (auto& v : w.samples) v = float(amp * rng.normal());
  return w;
}

double rms(const std::vector<float>& x) {
  double s = 0;
  for (float v : x) s += double(v) * v;
  return std::sqrt(s / double(x.size()));
}

double median(std::vector<float> v) {
  std::sort(v.begin(), v.end());
  return v.size() % 2 ? v[v.size() / 2] : 0.5 * (v[v.size() / 2 - 1] + v[v.size() / 2]);
}

void check_invariants(const SourceTracks& t) {
  REQUIRE(t.aperiodicity.size() == t.frames());
  REQUIRE(t.periodicity.size() == t.frames());
  for (std::size_t i = 0; i < t.frames(); ++i) {
    CHECK(t.periodicity[i] >= 0.0f);
    CHECK(t.aperiodicity[i] >= 0.0f);
    CHECK(t.periodicity[i] + t.aperiodicity[i] <= 1.0f + 1e-6f);
    const bool voiced = t.pitch[i] > 0;
    CHECK(voiced == (t.periodicity[i] >= float(kVoicingThreshold)));
    if (voiced) {
      CHECK(t.pitch[i] >= 50.0f);
      CHECK(t.pitch[i] <= 400.0f);
    }
  }
}

}  // namespace

TEST_CASE("nccf matches the direct reference") {
  nn::SplitMix64 rng(21);
  for (std::size_t n : {64, 333, 640}) {
    std::vector<double> x(n);
    for (auto& v : x) v = rng.normal();
    for (std::size_t j = 0; j < n / 4; ++j) x[j] = 0;  // leading silence
    const auto fast = source::nccf(x, 1, n / 2);
    const auto ref = source::nccf_reference(x, 1, n / 2);
    REQUIRE(fast.size() == ref.size());
    for (std::size_t k = 0; k < ref.size(); ++k) REQUIRE(std::abs(fast[k] - ref[k]) < 1e-9);
  }
  const std::vector<double> zero(100, 0.0);
  for (double v : source::nccf(zero, 2, 50)) CHECK(v == 0.0);
}

TEST_CASE("pitch_autocorr on a pulse train") {
  std::vector<float> x(800, 0.0f);
  for (std::size_t i = 0; i < x.size(); i += 160) x[i] = 1.0f;
  auto est = pitch_autocorr(x, kRate);
  CHECK(est.pitch == doctest::Approx(100.0).epsilon(0.005));
  CHECK(est.strength > 0.95);
}

TEST_CASE("pitch_autocorr on DC and short frames") {
  std::vector<float> dc(640, 0.7f);
  auto est = pitch_autocorr(dc, kRate);
  CHECK(est.strength == 0.0);
  CHECK(est.pitch == 0.0);
  std::vector<float> short_frame(300, 0.1f);
  CHECK_THROWS_AS(pitch_autocorr(short_frame, kRate), Error);
}

TEST_CASE("pitch_autocorr on a 440 Hz sine") {
  // 440 Hz lies above the default 400 Hz ceiling, so widen the search range.
  std::vector<float> x(640);
  for (std::size_t i = 0; i < x.size(); ++i)
    x[i] = float(std::sin(2 * M_PI * 440.0 * double(i) / kRate));
  auto est = pitch_autocorr(x, kRate, {50.0, 500.0});
  CHECK(std::abs(est.pitch - 440.0) <= 2.0);
  CHECK(est.strength > 0.9);
}

TEST_CASE("app_analyze frame count and silence") {
  WaveBuffer silence{std::vector<float>(16000, 0.0f), kRate};
  auto t = app_analyze(silence);
  CHECK(t.frames() == 100);
  CHECK(t.frame_rate == 100.0);
  for (std::size_t i = 0; i < t.frames(); ++i) {
    REQUIRE(t.periodicity[i] == 0.0f);
    REQUIRE(t.aperiodicity[i] == 0.0f);
    REQUIRE(t.pitch[i] == 0.0f);
  }
  CHECK(app_analyze(WaveBuffer{std::vector<float>(12345, 0.1f), kRate}).frames() == 77);
  CHECK(app_analyze(WaveBuffer{std::vector<float>(500, 0.1f), kRate}).frames() == 0);
}

TEST_CASE("app_analyze on a 220 Hz sawtooth") {
  auto t = app_analyze(sawtooth(220, 1.0));
  check_invariants(t);
  const double f0 = median(t.pitch), per = median(t.periodicity);
  MESSAGE("sawtooth median pitch " << f0 << " periodicity " << per
                                   << " aperiodicity " << median(t.aperiodicity));
  CHECK(std::abs(f0 - 220.0) <= 0.05 * 220.0);
  CHECK(per > 0.8);
}

TEST_CASE("app_analyze on white noise") {
  auto t = app_analyze(noise(1.0, 17));
  check_invariants(t);
  std::size_t unvoiced = 0;
  for (float p : t.pitch) unvoiced += p == 0.0f;
  MESSAGE("noise median periodicity " << median(t.periodicity) << " aperiodicity "
                                      << median(t.aperiodicity) << " unvoiced "
                                      << unvoiced << "/" << t.frames());
  CHECK(median(t.periodicity) < 0.3);
  CHECK(median(t.aperiodicity) > 0.5);
  CHECK(double(unvoiced) > 0.8 * double(t.frames()));
}

TEST_CASE("app_analyze is amplitude invariant") {
  auto base = sawtooth(180, 0.6);
  auto n = noise(0.6, 4, 0.05);
  for (std::size_t i = 0; i < base.samples.size(); ++i) base.samples[i] += n.samples[i];
  const auto ref = app_analyze(base);
  for (double alpha : {0.1, 10.0}) {
    auto s = base;
    for (auto& v : s.samples) v = float(v * alpha);
    const auto t = app_analyze(s);
    REQUIRE(t.frames() == ref.frames());
    for (std::size_t i = 0; i < t.frames(); ++i) {
      CHECK(std::abs(t.periodicity[i] - ref.periodicity[i]) < 1e-3);
      CHECK(std::abs(t.aperiodicity[i] - ref.aperiodicity[i]) < 1e-3);
      CHECK(std::abs(t.pitch[i] - ref.pitch[i]) < 1e-3);
    }
  }
}

TEST_CASE("periodicity degrades monotonically with SNR") {
  const auto clean = sawtooth(220, 1.0);
  const auto n = noise(1.0, 23, 1.0);
  const double ps = rms(clean.samples), pn = rms(n.samples);
  double last = 2.0;
  for (double snr : {20.0, 10.0, 0.0}) {
    auto mix = clean;
    const double g = ps / pn * std::pow(10.0, -snr / 20.0);
    for (std::size_t i = 0; i < mix.samples.size(); ++i)
      mix.samples[i] += float(g * n.samples[i]);
    const double per = median(app_analyze(mix).periodicity);
    MESSAGE("snr " << snr << " dB median periodicity " << per);
    CHECK(per <= last);
    last = per;
  }
}

TEST_CASE("source target normalization") {
  SourceTracks t;
  t.aperiodicity = {0.1f, 0.5f, 0.9f};
  t.periodicity = {0.8f, 0.4f, 0.05f};
  t.pitch = {120.0f, 0.0f, 0.0f};
  const SourceTracks tracks[1] = {t};
  const auto st = compute_source_stats(tracks);
  auto fm = normalize_source_targets(t, st);
  CHECK(fm.channels == 3);
  CHECK(fm.frames == 3);
  // Unvoiced zeros stay finite: log1p(0) = 0 before the z-score.
  CHECK(fm.at(1, 2) == doctest::Approx((0.0 - st.mean[2]) / st.std[2]));
  auto back = denormalize_source_targets(fm, st);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(back.aperiodicity[i] == doctest::Approx(t.aperiodicity[i]).epsilon(1e-6));
    CHECK(back.periodicity[i] == doctest::Approx(t.periodicity[i]).epsilon(1e-6));
    CHECK(std::abs(back.pitch[i] - t.pitch[i]) < 1e-3);
  }

  SourceTracks at_mean;
  at_mean.aperiodicity.assign(4, float(st.mean[0]));
  at_mean.periodicity.assign(4, float(st.mean[1]));
  at_mean.pitch.assign(4, float(std::expm1(st.mean[2])));
  for (float v : normalize_source_targets(at_mean, st).data) CHECK(std::abs(v) < 1e-5);

  SourceStats flat;
  flat.mean = {0.5, 0.5, 0.0};
  flat.std = {0.0, 1.0, 1.0};
  auto c = normalize_source_targets(t, flat);
  CHECK(c.at(0, 0) == doctest::Approx(0.1 - 0.5));
}

TEST_CASE("ERB spacing covers the band") {
  auto cf = erb_space(80, 4000, 6);
  REQUIRE(cf.size() == 6);
  CHECK(cf.front() == doctest::Approx(80.0));
  CHECK(cf.back() == doctest::Approx(4000.0));
  for (std::size_t i = 1; i < cf.size(); ++i) CHECK(cf[i] > cf[i - 1]);
}
