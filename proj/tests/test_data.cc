// Tests for the synthetic corpus, splits, target statistics and featurizer.

#include <algorithm>
#include <cmath>
#include <complex>
#include <filesystem>
#include <fstream>
#include <set>
#include <vector>

#include "doctest.h"
#include "sinv/data/corpus.h"
#include "sinv/data/synth.h"
#include "sinv/dsp/audspec.h"
#include "sinv/error.h"
#include "sinv/nn/tcn.h"
#include "sinv/source/app.h"

using namespace sinv;
using namespace sinv::data;
namespace fs = std::filesystem;

namespace {

double median(std::vector<float> v) {
  std::sort(v.begin(), v.end());
  return v[v.size() / 2];
}

SynthConfig small_config() {
  SynthConfig c;
  c.n_speakers = 4;
  c.utterances_per_speaker = 3;
  c.min_duration = 1.0;
  c.max_duration = 1.5;
  return c;
}

fs::path scratch(const char* name) {
  const auto p = fs::temp_directory_path() / name;
  fs::remove_all(p);
  return p;
}

}  // namespace

TEST_CASE("generate_utterance is deterministic") {
  const auto cfg = SynthConfig{};
  const auto a = generate_utterance(cfg, 3, 7);
  const auto b = generate_utterance(cfg, 3, 7);
  CHECK(a.wave.samples == b.wave.samples);
  CHECK(a.tvs.tracks == b.tvs.tracks);
  CHECK(a.truth.pitch == b.truth.pitch);
  const auto c = generate_utterance(cfg, 3, 8);
  CHECK(a.wave.samples != c.wave.samples);
  CHECK(a.id == "s003_u007");

  CHECK_THROWS_AS(generate_utterance(cfg, 12, 0), Error);
  CHECK_THROWS_AS(generate_utterance(cfg, 0, -1), Error);
  SynthConfig few = cfg;
  few.n_speakers = 3;
  CHECK_THROWS_AS(few.validate(), Error);
}

TEST_CASE("config json round trip") {
  SynthConfig c = small_config();
  c.scheme = tv::TvScheme::kHprc9;
  c.seed = 99;
  const auto r = SynthConfig::from_json(c.to_json());
  CHECK(r.to_json() == c.to_json());
  CHECK(r.scheme == tv::TvScheme::kHprc9);
  auto j = c.to_json();
  j["n_speakers"] = 2;
  CHECK_THROWS_AS(SynthConfig::from_json(j), Error);
}

TEST_CASE("audio and track shapes") {
  SynthConfig cfg;
  cfg.scheme = tv::TvScheme::kHprc9;
  const auto u = generate_utterance(cfg, 1, 2);
  const std::size_t frames = u.tvs.frames();
  CHECK(u.tvs.names.size() == 9);
  CHECK(u.wave.sample_rate == 16000);
  CHECK(u.wave.samples.size() == frames * 160);
  CHECK(u.truth.frames() == frames);
  CHECK(double(frames) / 100.0 >= cfg.min_duration - 0.01);
  CHECK(double(frames) / 100.0 <= cfg.max_duration + 0.01);
  for (float s : u.wave.samples) REQUIRE(s == float(std::round(s * 32768.0) / 32768.0));
  for (std::size_t t = 0; t < frames; ++t) {
    CHECK(u.truth.periodicity[t] + u.truth.aperiodicity[t] == doctest::Approx(1.0));
    CHECK((u.truth.pitch[t] > 0) == (u.truth.periodicity[t] >= 0.5f));
  }
}

TEST_CASE("constriction degrees are nonnegative and trajectories are band-limited") {
  for (auto scheme : {tv::TvScheme::kXrmb6, tv::TvScheme::kHprc9}) {
    SynthConfig cfg;
    cfg.scheme = scheme;
    for (int s = 0; s < 12; s += 3) {
      for (int k = 0; k < 4; ++k) {
        const auto u = generate_utterance(cfg, s, k);
        for (std::size_t c = 0; c < u.tvs.names.size(); ++c) {
          const auto& x = u.tvs.tracks[c];
          const auto& name = u.tvs.names[c];
          if (name.size() == 4 && name.substr(2) == "CD")
            for (double v : x) REQUIRE(v >= 0.0);
          // Hann-windowed periodogram of the mean-removed track.
          const std::size_t n = x.size();
          double mean = 0;
          for (double v : x) mean += v;
          mean /= double(n);
          double total = 0, high = 0;
          for (std::size_t f = 1; f <= n / 2; ++f) {
            std::complex<double> acc = 0;
            for (std::size_t t = 0; t < n; ++t) {
              const double w = 0.5 - 0.5 * std::cos(2 * M_PI * double(t) / double(n - 1));
              acc += w * (x[t] - mean) * std::polar(1.0, -2 * M_PI * double(f * t) / double(n));
            }
            const double p = std::norm(acc);
            total += p;
            if (double(f) * 100.0 / double(n) > 10.0) high += p;
          }
          INFO(u.id << " " << name);
          REQUIRE(total > 0);
          CHECK(10 * std::log10(high / total + 1e-300) < -40.0);
        }
      }
    }
  }
}

TEST_CASE("fully unvoiced audio reads as aperiodic") {
  SynthConfig cfg;
  cfg.voiced_fraction = 0;
  for (int s = 0; s < 12; ++s) {
    const auto u = generate_utterance(cfg, s, 0);
    const auto tr = source::app_analyze(u.wave);
    INFO(u.id);
    CHECK(median(tr.periodicity) < 0.3);
  }
}

TEST_CASE("fully voiced 120 Hz audio tracks its pitch") {
  SynthConfig cfg;
  cfg.voiced_fraction = 1;
  cfg.pitch_base_min = cfg.pitch_base_max = 120;
  cfg.pitch_modulation = 0;
  for (int s = 0; s < 12; s += 2) {
    const auto u = generate_utterance(cfg, s, 1);
    const auto tr = source::app_analyze(u.wave);
    INFO(u.id);
    CHECK(std::abs(median(tr.pitch) - 120.0) < 6.0);
  }
}

TEST_CASE("detected pitch follows the generating pitch") {
  // 480 utterances of the default corpus.
  const SynthConfig cfg;
  double worst = 1;
  for (int s = 0; s < cfg.n_speakers; ++s) {
    for (int k = 0; k < cfg.utterances_per_speaker; ++k) {
      const auto u = generate_utterance(cfg, s, k);
      const auto tr = source::app_analyze(u.wave);
      REQUIRE(tr.frames() == u.truth.frames());
      int voiced = 0, ok = 0;
      for (std::size_t t = 0; t < tr.frames(); ++t) {
        const double g = u.truth.pitch[t];
        if (g <= 0) continue;
        ++voiced;
        if (std::abs(tr.pitch[t] - g) / g < 0.1) ++ok;
      }
      if (voiced == 0) continue;
      const double frac = double(ok) / voiced;
      worst = std::min(worst, frac);
      INFO(u.id << " voiced " << voiced);
      CHECK(frac >= 0.9);
    }
  }
  MESSAGE("worst per-utterance consistency " << worst);
}

TEST_CASE("golden TV statistics for seed 7") {
  // Frozen from a Welford pass over a 4 x 3 corpus.
  const double want[6][2] = {{9.8576581827, 3.0968816055}, {8.9891700074, 1.7338836469},
                             {39.2199976021, 3.7286921187}, {7.8788712463, 2.5738318885},
                             {12.0834236560, 3.4917726314}, {7.1387107265, 2.3755727282}};
  const auto cfg = small_config();
  std::vector<double> n(6), mean(6), m2(6);
  for (int s = 0; s < 4; ++s)
    for (int k = 0; k < 3; ++k) {
      const auto u = generate_utterance(cfg, s, k);
      for (std::size_t c = 0; c < 6; ++c)
        for (double v : u.tvs.tracks[c]) {
          n[c] += 1;
          const double d = v - mean[c];
          mean[c] += d / n[c];
          m2[c] += d * (v - mean[c]);
        }
    }
  for (std::size_t c = 0; c < 6; ++c) {
    CHECK(mean[c] == doctest::Approx(want[c][0]).epsilon(1e-9));
    CHECK(std::sqrt(m2[c] / n[c]) == doctest::Approx(want[c][1]).epsilon(1e-9));
  }

  // The corpus path stores float32 tracks; its statistics agree to that precision.
  const auto root = scratch("sinv_test_golden");
  const auto corpus = generate_corpus(cfg, root);
  std::vector<std::string> ids;
  for (const auto& u : corpus.utterances) ids.push_back(u.id);
  const auto st = compute_target_stats(corpus, ids);
  REQUIRE(st.names.size() == 9);
  for (std::size_t c = 0; c < 6; ++c) {
    CHECK(st.names[c] == corpus.tv_names[c]);
    CHECK(st.mean[c] == doctest::Approx(want[c][0]).epsilon(1e-5));
    CHECK(st.std[c] == doctest::Approx(want[c][1]).epsilon(1e-5));
  }
  fs::remove_all(root);
}

TEST_CASE("speaker assignment") {
  std::vector<std::string> spk;
  for (int i = 0; i < 46; ++i) spk.push_back(speaker_id(i));
  const SplitRatios hprc{36.0 / 46, 5.0 / 46, 5.0 / 46};
  const auto a = assign_speakers(spk, hprc, 11);
  std::map<Split, int> count;
  for (const auto& [s, sp] : a) ++count[sp];
  CHECK(count[Split::kTrain] == 36);
  CHECK(count[Split::kDev] == 5);
  CHECK(count[Split::kTest] == 5);
  CHECK(a == assign_speakers(spk, hprc, 11));
  CHECK(a != assign_speakers(spk, hprc, 12));
  // Input order does not matter.
  auto rev = spk;
  std::reverse(rev.begin(), rev.end());
  CHECK(a == assign_speakers(rev, hprc, 11));

  const auto r = parse_ratios("0.8,0.1,0.1");
  CHECK(r.train == doctest::Approx(0.8));
  CHECK(r.test == doctest::Approx(0.1));
  CHECK_THROWS_AS(parse_ratios("0.8,0.1"), Error);
  CHECK_THROWS_AS(parse_ratios("0.8,0.3,0.3"), Error);
  CHECK_THROWS_AS(assign_speakers({"a", "b", "c"}, r, 1), Error);
}

TEST_CASE("corpus round trip, splits and normalization") {
  const auto root = scratch("sinv_test_corpus");
  const auto cfg = small_config();
  const auto corpus = generate_corpus(cfg, root);
  REQUIRE(corpus.utterances.size() == 12);
  const auto back = CorpusManifest::read(root);
  CHECK(back.utterances.size() == 12);
  CHECK(back.tv_names == corpus.tv_names);
  CHECK(back.generator == cfg.to_json());
  CHECK(back.palates.size() == 4);
  CHECK(fs::exists(root / back.find("s002_u001").audio));
  CHECK_THROWS_AS(back.find("nope"), Error);

  // Stored audio equals the in-memory synthesis.
  const auto u = generate_utterance(cfg, 2, 1);
  CHECK(dsp::read_wav(root / back.find(u.id).audio).samples == u.wave.samples);

  // Regeneration is bit-exact.
  const auto root2 = scratch("sinv_test_corpus2");
  generate_corpus(SynthConfig::from_json(back.generator), root2);
  for (const auto& info : back.utterances)
    for (const auto& rel : {info.audio, info.tvs, info.source, info.truth}) {
      std::ifstream a(root / rel, std::ios::binary), b(root2 / rel, std::ios::binary);
      const std::string sa((std::istreambuf_iterator<char>(a)), {});
      const std::string sb((std::istreambuf_iterator<char>(b)), {});
      REQUIRE(sa == sb);
    }
  fs::remove_all(root2);

  const auto split = make_splits(back, {0.5, 0.25, 0.25}, 5);
  std::set<std::string> seen;
  std::map<Split, std::set<std::string>> speakers;
  for (Split s : {Split::kTrain, Split::kDev, Split::kTest})
    for (const auto& id : split.utterances(back, s)) {
      CHECK(seen.insert(id).second);
      speakers[s].insert(back.find(id).speaker);
    }
  CHECK(seen.size() == 12);
  CHECK(speakers[Split::kTrain].size() == 2);
  for (const auto& s : speakers[Split::kTrain]) {
    CHECK(speakers[Split::kDev].count(s) == 0);
    CHECK(speakers[Split::kTest].count(s) == 0);
  }
  CHECK(split.utterances(back, Split::kDev).size() == split.utterances(back, Split::kTest).size());

  split.write(root / "split.json");
  const auto rs = SplitManifest::read(root / "split.json");
  CHECK(rs.speakers == split.speakers);
  CHECK(rs.stats.mean == split.stats.mean);
  CHECK(rs.seed == 5);

  // Normalization: train mean maps to zero and the inverse is exact.
  std::vector<std::string> names;
  const auto raw = load_raw_targets(back, back.find(split.utterances(back, Split::kTest)[0]), &names);
  REQUIRE(names.back() == "pitch");
  dsp::FeatureMatrix m(1, names.size(), 100, dsp::FeatureKind::kTargets);
  for (std::size_t c = 0; c < names.size(); ++c)
    m.at(0, c) = float(uses_log1p(names[c]) ? std::expm1(split.stats.mean[c]) : split.stats.mean[c]);
  const auto zm = normalize_targets(m, names, split.stats);
  for (std::size_t c = 0; c < names.size(); ++c) CHECK(std::abs(zm.at(0, c)) < 1e-5);
  const auto z = normalize_targets(raw, names, split.stats);
  const auto x = denormalize_targets(z, names, split.stats);
  for (std::size_t i = 0; i < raw.data.size(); ++i)
    REQUIRE(std::abs(x.data[i] - raw.data[i]) <= 1e-6 * std::max(1.0f, std::abs(raw.data[i])));
  auto bad = names;
  bad[0] = "XX";
  CHECK_THROWS_AS(normalize_targets(raw, bad, split.stats), Error);
  fs::remove_all(root);
}

TEST_CASE("featurize_wave and featurize_corpus") {
  dsp::WaveBuffer w;
  w.sample_rate = 16000;
  w.samples.resize(40000);  // 2.5 s
  nn::SplitMix64 rng(3);
  for (auto& s : w.samples) s = float(0.1 * rng.normal());
  std::size_t valid = 0;
  const auto a = featurize_wave(w, dsp::FeatureKind::kAudspec, &valid);
  CHECK(a.frames == 500);
  CHECK(a.channels == dsp::kAudspecChannels);
  CHECK(valid == 312);
  const auto m = featurize_wave(w, dsp::FeatureKind::kMfcc, &valid);
  CHECK(m.frames == 400);
  CHECK(m.channels == 13);
  CHECK(valid == 250);
  // z-normalized over valid frames
  for (std::size_t c = 0; c < a.channels; c += 17) {
    double s = 0, ss = 0;
    for (std::size_t t = 0; t < 312; ++t) {
      s += a.at(t, c);
      ss += a.at(t, c) * a.at(t, c);
    }
    CHECK(std::abs(s / 312) < 1e-4);
    CHECK(ss / 312 == doctest::Approx(1.0).epsilon(1e-3));
  }

  const auto root = scratch("sinv_test_feats");
  auto cfg = small_config();
  cfg.utterances_per_speaker = 1;
  const auto corpus = generate_corpus(cfg, root);
  const auto idx = featurize_corpus(corpus, dsp::FeatureKind::kMspec, root / "feats" / "mspec");
  const auto back = FeatureIndex::read(root / "feats" / "mspec");
  REQUIRE(back.entries.size() == 4);
  CHECK(back.channels == 40);
  CHECK(back.frames_per_segment == 250);
  CHECK(back.frame_rate == 125.0);
  CHECK(back.entries[0].segments == idx.entries[0].segments);
  const auto fm = dsp::read_feature_matrix(root / "feats" / "mspec" / (back.entries[0].id + ".bin"));
  CHECK(fm.frames == back.entries[0].segments * 250);
  CHECK(feature_channel_names(dsp::FeatureKind::kMspec).size() == 40);
  fs::remove_all(root);
}
