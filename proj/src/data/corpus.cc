// data/corpus.cc

#include "sinv/data/corpus.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <mutex>
#include <set>
#include <sstream>

#include "sinv/dsp/audspec.h"
#include "sinv/dsp/spectral.h"
#include "sinv/error.h"
#include "sinv/nn/tcn.h"
#include "sinv/source/app.h"

namespace sinv::data {

namespace {

using nlohmann::json;

json read_json(const fs::path& p) {
  std::ifstream is(p);
  if (!is) fail(ErrorKind::kData, "cannot open " + p.string());
  try {
    return json::parse(is);
  } catch (const json::exception& e) {
    fail(ErrorKind::kData, p.string() + ": " + e.what());
  }
}

void write_json(const fs::path& p, const json& j) {
  std::ofstream os(p);
  if (!os) fail(ErrorKind::kData, "cannot write " + p.string());
  os << j.dump(2) << '\n';
  if (!os) fail(ErrorKind::kData, "short write to " + p.string());
}

// Runs body(i) for i in [0, n) on the OpenMP team and rethrows the first
// failure (by index) on the calling thread.
template <typename F>
void parallel_for_each(std::size_t n, F&& body) {
  std::vector<std::exception_ptr> errors(n);
#pragma omp parallel for schedule(dynamic)
  for (std::size_t i = 0; i < n; ++i) {
    try {
      body(i);
    } catch (...) {
      errors[i] = std::current_exception();
    }
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

dsp::FeatureMatrix tracks_matrix(const source::SourceTracks& t) {
  dsp::FeatureMatrix fm(t.frames(), 3, t.frame_rate, dsp::FeatureKind::kTargets);
  for (std::size_t i = 0; i < t.frames(); ++i) {
    fm.at(i, 0) = t.aperiodicity[i];
    fm.at(i, 1) = t.periodicity[i];
    fm.at(i, 2) = t.pitch[i];
  }
  return fm;
}

const std::vector<std::string> kSourceNames = {"ap", "per", "pitch"};

}  // namespace

// ---------------------------------------------------------------------------
// Corpus manifest

void CorpusManifest::write() const {
  json utts = json::array();
  for (const auto& u : utterances)
    utts.push_back({{"id", u.id}, {"speaker", u.speaker}, {"duration", u.duration},
                    {"tempo", u.tempo}, {"audio", u.audio}, {"tvs", u.tvs},
                    {"source", u.source}, {"truth", u.truth}});
  json j = {{"format", "sinv-corpus"},
            {"version", 1},
            {"scheme", tv::scheme_name(scheme)},
            {"tv_names", tv_names},
            {"source_names", kSourceNames},
            {"generator", generator},
            {"palates", palates},
            {"utterances", utts}};
  write_json(root / "corpus.json", j);
}

CorpusManifest CorpusManifest::read(const fs::path& root) {
  const auto j = read_json(root / "corpus.json");
  CorpusManifest c;
  c.root = root;
  try {
    if (j.at("format") != "sinv-corpus" || j.at("version") != 1)
      fail(ErrorKind::kData, (root / "corpus.json").string() + ": unsupported manifest");
    c.scheme = tv::parse_scheme(j.at("scheme").get<std::string>());
    c.tv_names = j.at("tv_names").get<std::vector<std::string>>();
    c.generator = j.value("generator", json());
    c.palates = j.value("palates", std::map<std::string, std::string>{});
    for (const auto& u : j.at("utterances"))
      c.utterances.push_back({u.at("id"), u.at("speaker"), u.at("duration"), u.value("tempo", 1.0),
                              u.at("audio"), u.at("tvs"), u.at("source"), u.value("truth", "")});
  } catch (const json::exception& e) {
    fail(ErrorKind::kData, (root / "corpus.json").string() + ": " + e.what());
  }
  if (c.tv_names != tv::tv_names(c.scheme))
    fail(ErrorKind::kData, "corpus.json: tv_names do not match scheme");
  return c;
}

const UtteranceInfo& CorpusManifest::find(const std::string& id) const {
  for (const auto& u : utterances)
    if (u.id == id) return u;
  fail(ErrorKind::kData, "utterance " + id + " not in corpus " + root.string());
}

CorpusManifest generate_corpus(const SynthConfig& cfg, const fs::path& root) {
  cfg.validate();
  for (const char* d : {"audio", "targets", "palates"}) fs::create_directories(root / d);
  CorpusManifest c;
  c.root = root;
  c.scheme = cfg.scheme;
  c.tv_names = tv::tv_names(cfg.scheme);
  c.generator = cfg.to_json();
  for (int s = 0; s < cfg.n_speakers; ++s) {
    const auto sp = speaker_params(cfg, s);
    const std::string rel = "palates/" + speaker_id(s) + ".csv";
    tv::write_palate_csv(root / rel, sp.palate);
    c.palates[speaker_id(s)] = rel;
  }
  const std::size_t n = std::size_t(cfg.n_speakers) * std::size_t(cfg.utterances_per_speaker);
  c.utterances.resize(n);
  parallel_for_each(n, [&](std::size_t i) {
    const int s = int(i) / cfg.utterances_per_speaker;
    const int k = int(i) % cfg.utterances_per_speaker;
    const auto u = generate_utterance(cfg, s, k);
    UtteranceInfo info;
    info.id = u.id;
    info.speaker = speaker_id(s);
    info.duration = u.wave.duration();
    info.tempo = u.tempo;
    info.audio = "audio/" + u.id + ".wav";
    info.tvs = "targets/" + u.id + ".tv.bin";
    info.source = "targets/" + u.id + ".src.bin";
    info.truth = "targets/" + u.id + ".truth.bin";
    dsp::write_wav(root / info.audio, u.wave);
    dsp::write_feature_matrix(root / info.tvs, u.tvs.to_matrix());
    dsp::write_channel_manifest(root / info.tvs, u.tvs.names, dsp::FeatureKind::kTargets);
    const auto app = source::app_analyze(u.wave);
    dsp::write_feature_matrix(root / info.source, tracks_matrix(app));
    dsp::write_channel_manifest(root / info.source, kSourceNames, dsp::FeatureKind::kTargets);
    dsp::write_feature_matrix(root / info.truth, tracks_matrix(u.truth));
    dsp::write_channel_manifest(root / info.truth, kSourceNames, dsp::FeatureKind::kTargets);
    c.utterances[i] = std::move(info);
  });
  c.write();
  return c;
}

// ---------------------------------------------------------------------------
// Features

void FeatureIndex::write(const fs::path& dir) const {
  json items = json::array();
  for (const auto& e : entries)
    items.push_back({{"id", e.id}, {"segments", e.segments}, {"valid_frames", e.valid_frames}});
  write_json(dir / "features.json", {{"kind", dsp::feature_kind_name(kind)},
                                     {"channels", channels},
                                     {"frames_per_segment", frames_per_segment},
                                     {"frame_rate", frame_rate},
                                     {"utterances", items}});
}

FeatureIndex FeatureIndex::read(const fs::path& dir) {
  const auto j = read_json(dir / "features.json");
  FeatureIndex fi;
  try {
    fi.kind = dsp::parse_feature_kind(j.at("kind").get<std::string>());
    fi.channels = j.at("channels");
    fi.frames_per_segment = j.at("frames_per_segment");
    fi.frame_rate = j.at("frame_rate");
    for (const auto& e : j.at("utterances"))
      fi.entries.push_back({e.at("id"), e.at("segments"), e.at("valid_frames")});
  } catch (const json::exception& e) {
    fail(ErrorKind::kData, (dir / "features.json").string() + ": " + e.what());
  }
  return fi;
}

std::vector<std::string> feature_channel_names(dsp::FeatureKind kind) {
  std::vector<std::string> names;
  char buf[32];
  switch (kind) {
    case dsp::FeatureKind::kAudspec:
      for (double cf : dsp::audspec_cf()) {
        std::snprintf(buf, sizeof buf, "cf_%.1fHz", cf);
        names.push_back(buf);
      }
      break;
    case dsp::FeatureKind::kMspec:
      for (std::size_t b = 0; b < dsp::kMelBands; ++b) names.push_back("mel_" + std::to_string(b));
      break;
    case dsp::FeatureKind::kMfcc:
      for (std::size_t c = 0; c < dsp::kMfccCoeffs; ++c) names.push_back("c" + std::to_string(c));
      break;
    case dsp::FeatureKind::kTargets:
      fail(ErrorKind::kConfig, "targets is not a featurizer kind");
  }
  return names;
}

dsp::FeatureMatrix featurize_wave(const dsp::WaveBuffer& wave, dsp::FeatureKind kind,
                                  std::size_t* valid_frames) {
  if (wave.samples.empty()) fail(ErrorKind::kData, "featurize: empty audio");
  const auto w16 = wave.sample_rate == dsp::kModelSampleRate
                       ? wave
                       : dsp::resample(wave, dsp::kModelSampleRate);
  const auto segs = dsp::segment_and_pad(w16);
  std::size_t hop = 0;
  switch (kind) {
    case dsp::FeatureKind::kAudspec: hop = dsp::kAudspecHop; break;
    case dsp::FeatureKind::kMspec: hop = dsp::kMspecHop; break;
    case dsp::FeatureKind::kMfcc: hop = dsp::kMfccHop; break;
    case dsp::FeatureKind::kTargets: fail(ErrorKind::kConfig, "targets is not a featurizer kind");
  }
  dsp::FeatureMatrix all;
  for (const auto& s : segs) {
    dsp::FeatureMatrix f;
    if (kind == dsp::FeatureKind::kAudspec) f = dsp::auditory_spectrogram(s);
    else if (kind == dsp::FeatureKind::kMspec) f = dsp::melspectrogram(s);
    else f = dsp::mfcc(s);
    if (all.frames == 0) {
      all = std::move(f);
    } else {
      all.data.insert(all.data.end(), f.data.begin(), f.data.end());
      all.frames += f.frames;
    }
  }
  const std::size_t valid = std::clamp<std::size_t>(w16.samples.size() / hop, 2, all.frames);
  if (valid_frames) *valid_frames = valid;
  return dsp::znorm_utterance(all, valid);
}

FeatureIndex featurize_corpus(const CorpusManifest& corpus, dsp::FeatureKind kind,
                              const fs::path& out_dir) {
  fs::create_directories(out_dir);
  FeatureIndex fi;
  fi.kind = kind;
  const auto names = feature_channel_names(kind);
  fi.channels = names.size();
  fi.frames_per_segment = kind == dsp::FeatureKind::kMfcc ? 200 : 250;
  fi.frame_rate = kind == dsp::FeatureKind::kMfcc ? 100.0 : 125.0;
  fi.entries.resize(corpus.utterances.size());
  parallel_for_each(corpus.utterances.size(), [&](std::size_t i) {
    const auto& u = corpus.utterances[i];
    const auto wave = dsp::read_wav(corpus.root / u.audio);
    std::size_t valid = 0;
    const auto fm = featurize_wave(wave, kind, &valid);
    const auto path = out_dir / (u.id + ".bin");
    dsp::write_feature_matrix(path, fm);
    dsp::write_channel_manifest(path, names, kind);
    fi.entries[i] = {u.id, fm.frames / fi.frames_per_segment, valid};
  });
  fi.write(out_dir);
  return fi;
}

// ---------------------------------------------------------------------------
// Splits and statistics

const char* split_name(Split s) {
  switch (s) {
    case Split::kTrain: return "train";
    case Split::kDev: return "dev";
    case Split::kTest: return "test";
  }
  return "?";
}

Split parse_split(const std::string& s) {
  if (s == "train") return Split::kTrain;
  if (s == "dev") return Split::kDev;
  if (s == "test") return Split::kTest;
  fail(ErrorKind::kConfig, "unknown split '" + s + "'");
}

bool uses_log1p(const std::string& name) { return name == "pitch"; }

std::size_t TargetStats::index(const std::string& name) const {
  for (std::size_t i = 0; i < names.size(); ++i)
    if (names[i] == name) return i;
  fail(ErrorKind::kData, "no normalization statistics for variable '" + name + "'");
}

json TargetStats::to_json() const {
  return {{"names", names}, {"mean", mean}, {"std", std}};
}

TargetStats TargetStats::from_json(const json& j) {
  TargetStats s;
  try {
    s.names = j.at("names").get<std::vector<std::string>>();
    s.mean = j.at("mean").get<std::vector<double>>();
    s.std = j.at("std").get<std::vector<double>>();
  } catch (const json::exception& e) {
    fail(ErrorKind::kData, std::string("bad target statistics: ") + e.what());
  }
  if (s.mean.size() != s.names.size() || s.std.size() != s.names.size())
    fail(ErrorKind::kData, "bad target statistics: length mismatch");
  return s;
}

dsp::FeatureMatrix normalize_targets(const dsp::FeatureMatrix& raw,
                                     const std::vector<std::string>& names,
                                     const TargetStats& stats) {
  require(raw.channels == names.size(), "normalize_targets: channel/name mismatch");
  dsp::FeatureMatrix out = raw;
  for (std::size_t c = 0; c < names.size(); ++c) {
    const std::size_t k = stats.index(names[c]);
    const bool lg = uses_log1p(names[c]);
    for (std::size_t t = 0; t < raw.frames; ++t) {
      double v = raw.at(t, c);
      if (lg) v = std::log1p(v);
      v -= stats.mean[k];
      if (stats.std[k] > 0) v /= stats.std[k];
      out.at(t, c) = float(v);
    }
  }
  return out;
}

dsp::FeatureMatrix denormalize_targets(const dsp::FeatureMatrix& z,
                                       const std::vector<std::string>& names,
                                       const TargetStats& stats) {
  require(z.channels == names.size(), "denormalize_targets: channel/name mismatch");
  dsp::FeatureMatrix out = z;
  for (std::size_t c = 0; c < names.size(); ++c) {
    const std::size_t k = stats.index(names[c]);
    const bool lg = uses_log1p(names[c]);
    for (std::size_t t = 0; t < z.frames; ++t) {
      double v = z.at(t, c);
      if (stats.std[k] > 0) v *= stats.std[k];
      v += stats.mean[k];
      if (lg) v = std::expm1(v);
      out.at(t, c) = float(v);
    }
  }
  return out;
}

SplitRatios parse_ratios(const std::string& s) {
  std::vector<double> v;
  std::stringstream ss(s);
  std::string cell;
  try {
    while (std::getline(ss, cell, ',')) v.push_back(std::stod(cell));
  } catch (const std::exception&) {
    fail(ErrorKind::kConfig, "bad --ratios '" + s + "'");
  }
  if (v.size() != 3) fail(ErrorKind::kConfig, "--ratios needs three values train,dev,test");
  for (double x : v)
    if (!(x >= 0)) fail(ErrorKind::kConfig, "--ratios must be nonnegative");
  const double sum = v[0] + v[1] + v[2];
  if (std::abs(sum - 1.0) > 0.02) fail(ErrorKind::kConfig, "--ratios must sum to 1");
  return {v[0] / sum, v[1] / sum, v[2] / sum};
}

std::vector<std::string> SplitManifest::utterances(const CorpusManifest& c, Split s) const {
  std::vector<std::string> ids;
  for (const auto& u : c.utterances) {
    const auto it = speakers.find(u.speaker);
    if (it == speakers.end())
      fail(ErrorKind::kData, "speaker " + u.speaker + " missing from split manifest");
    if (it->second == s) ids.push_back(u.id);
  }
  return ids;
}

void SplitManifest::write(const fs::path& path) const {
  json spk = json::object();
  for (const auto& [k, v] : speakers) spk[k] = split_name(v);
  write_json(path, {{"format", "sinv-split"},
                    {"version", 1},
                    {"scheme", "speaker_independent"},
                    {"corpus", fs::absolute(corpus_root).lexically_normal().string()},
                    {"seed", seed},
                    {"ratios", {ratios.train, ratios.dev, ratios.test}},
                    {"speakers", spk},
                    {"stats", stats.to_json()}});
}

SplitManifest SplitManifest::read(const fs::path& path) {
  const auto j = read_json(path);
  SplitManifest m;
  try {
    if (j.at("format") != "sinv-split") fail(ErrorKind::kData, path.string() + ": not a split manifest");
    m.corpus_root = j.at("corpus").get<std::string>();
    if (m.corpus_root.is_relative()) m.corpus_root = path.parent_path() / m.corpus_root;
    m.seed = j.at("seed");
    const auto r = j.at("ratios").get<std::vector<double>>();
    if (r.size() != 3) fail(ErrorKind::kData, path.string() + ": bad ratios");
    m.ratios = {r[0], r[1], r[2]};
    for (const auto& [k, v] : j.at("speakers").items()) m.speakers[k] = parse_split(v.get<std::string>());
    m.stats = TargetStats::from_json(j.at("stats"));
  } catch (const json::exception& e) {
    fail(ErrorKind::kData, path.string() + ": " + e.what());
  }
  return m;
}

std::map<std::string, Split> assign_speakers(std::vector<std::string> speakers,
                                             const SplitRatios& r, std::uint64_t seed) {
  std::sort(speakers.begin(), speakers.end());
  speakers.erase(std::unique(speakers.begin(), speakers.end()), speakers.end());
  const long n = long(speakers.size());
  const long n_dev = std::max(1L, std::lround(double(n) * r.dev));
  const long n_test = std::max(1L, std::lround(double(n) * r.test));
  const long n_train = n - n_dev - n_test;
  if (n < 4 || n_train < 1)
    fail(ErrorKind::kData, "need at least 4 speakers to populate train/dev/test, have " +
                               std::to_string(n));
  nn::SplitMix64 rng(seed);
  for (long i = n - 1; i > 0; --i)
    std::swap(speakers[std::size_t(i)], speakers[rng.below(std::uint64_t(i + 1))]);
  std::map<std::string, Split> out;
  for (long i = 0; i < n; ++i)
    out[speakers[std::size_t(i)]] =
        i < n_train ? Split::kTrain : (i < n_train + n_dev ? Split::kDev : Split::kTest);
  return out;
}

dsp::FeatureMatrix load_raw_targets(const CorpusManifest& corpus, const UtteranceInfo& u,
                                    std::vector<std::string>* names) {
  const auto tvs = dsp::read_feature_matrix(corpus.root / u.tvs);
  const auto src = dsp::read_feature_matrix(corpus.root / u.source);
  if (tvs.channels != corpus.tv_names.size() || src.channels != 3)
    fail(ErrorKind::kData, u.id + ": target channel count mismatch");
  const std::size_t frames = std::min(tvs.frames, src.frames);
  dsp::FeatureMatrix out(frames, tvs.channels + 3, tvs.frame_rate, dsp::FeatureKind::kTargets);
  for (std::size_t t = 0; t < frames; ++t) {
    for (std::size_t c = 0; c < tvs.channels; ++c) out.at(t, c) = tvs.at(t, c);
    for (std::size_t c = 0; c < 3; ++c) out.at(t, tvs.channels + c) = src.at(t, c);
  }
  if (names) {
    *names = corpus.tv_names;
    names->insert(names->end(), kSourceNames.begin(), kSourceNames.end());
  }
  return out;
}

TargetStats compute_target_stats(const CorpusManifest& corpus,
                                 const std::vector<std::string>& utterance_ids) {
  if (utterance_ids.empty()) fail(ErrorKind::kData, "no utterances for target statistics");
  TargetStats st;
  std::vector<dsp::FeatureMatrix> mats;
  for (const auto& id : utterance_ids)
    mats.push_back(load_raw_targets(corpus, corpus.find(id), &st.names));
  const std::size_t k = st.names.size();
  std::vector<double> sum(k, 0.0);
  double count = 0;
  auto value = [&](const dsp::FeatureMatrix& m, std::size_t t, std::size_t c) {
    const double v = m.at(t, c);
    return uses_log1p(st.names[c]) ? std::log1p(v) : v;
  };
  for (const auto& m : mats) {
    for (std::size_t t = 0; t < m.frames; ++t)
      for (std::size_t c = 0; c < k; ++c) sum[c] += value(m, t, c);
    count += double(m.frames);
  }
  st.mean.resize(k);
  for (std::size_t c = 0; c < k; ++c) st.mean[c] = sum[c] / count;
  std::vector<double> ss(k, 0.0);
  for (const auto& m : mats)
    for (std::size_t t = 0; t < m.frames; ++t)
      for (std::size_t c = 0; c < k; ++c) {
        const double d = value(m, t, c) - st.mean[c];
        ss[c] += d * d;
      }
  st.std.resize(k);
  for (std::size_t c = 0; c < k; ++c) st.std[c] = std::sqrt(ss[c] / count);
  return st;
}

SplitManifest make_splits(const CorpusManifest& corpus, const SplitRatios& r,
                          std::uint64_t seed) {
  SplitManifest m;
  m.corpus_root = corpus.root;
  m.seed = seed;
  m.ratios = r;
  std::vector<std::string> spk;
  for (const auto& u : corpus.utterances) spk.push_back(u.speaker);
  m.speakers = assign_speakers(spk, r, seed);
  m.stats = compute_target_stats(corpus, m.utterances(corpus, Split::kTrain));
  return m;
}

}  // namespace sinv::data
