// sinv/data/corpus.h
//
// On-disk corpus layout, featurization, speaker-independent splits and
// target normalization statistics.
//
//   root/corpus.json              manifest (generator config, utterances)
//   root/audio/<utt>.wav          16 kHz 16-bit PCM
//   root/targets/<utt>.tv.bin     raw TVs at 100 Hz (+ .json channel names)
//   root/targets/<utt>.src.bin    ap / per / pitch from app_analyze
//   root/targets/<utt>.truth.bin  generating ap / per / pitch (synthetic only)
//   root/palates/<spk>.csv        per-speaker palate trace
//   root/feats/<kind>/<utt>.bin   z-normalized features, segments concatenated

#ifndef SINV_DATA_CORPUS_H_
#define SINV_DATA_CORPUS_H_

#include <array>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"
#include "sinv/data/synth.h"
#include "sinv/dsp/feature_matrix.h"
#include "sinv/tv/geometry.h"

namespace sinv::data {

namespace fs = std::filesystem;

struct UtteranceInfo {
  std::string id;
  std::string speaker;
  double duration = 0;  // seconds
  double tempo = 1;
  std::string audio;    // paths relative to the corpus root
  std::string tvs;
  std::string source;
  std::string truth;    // may be empty
};

struct CorpusManifest {
  fs::path root;
  tv::TvScheme scheme = tv::TvScheme::kXrmb6;
  std::vector<std::string> tv_names;
  nlohmann::json generator;  // SynthConfig::to_json() or null
  std::vector<UtteranceInfo> utterances;
  std::map<std::string, std::string> palates;  // speaker -> relative path

  void write() const;
  static CorpusManifest read(const fs::path& root);
  const UtteranceInfo& find(const std::string& id) const;
};

// Synthesizes the full corpus under `root`; parallel over utterances and
// identical for any thread count.
CorpusManifest generate_corpus(const SynthConfig& cfg, const fs::path& root);

// Per-kind feature index written next to the feature files.
struct FeatureIndexEntry {
  std::string id;
  std::size_t segments = 0;
  std::size_t valid_frames = 0;  // frames covering real audio
};
struct FeatureIndex {
  dsp::FeatureKind kind = dsp::FeatureKind::kAudspec;
  std::size_t channels = 0;
  std::size_t frames_per_segment = 0;
  double frame_rate = 0;
  std::vector<FeatureIndexEntry> entries;

  void write(const fs::path& dir) const;
  static FeatureIndex read(const fs::path& dir);
};

// Features of one waveform: resample to 16 kHz, segment, featurize each
// segment, concatenate and z-normalize over the frames that cover audio.
dsp::FeatureMatrix featurize_wave(const dsp::WaveBuffer& wave, dsp::FeatureKind kind,
                                  std::size_t* valid_frames = nullptr);
std::vector<std::string> feature_channel_names(dsp::FeatureKind kind);
FeatureIndex featurize_corpus(const CorpusManifest& corpus, dsp::FeatureKind kind,
                              const fs::path& out_dir);

enum class Split { kTrain, kDev, kTest };
const char* split_name(Split s);
Split parse_split(const std::string& s);

// Target normalization: z-score per variable, after log1p for "pitch".
struct TargetStats {
  std::vector<std::string> names;
  std::vector<double> mean, std;

  std::size_t index(const std::string& name) const;
  nlohmann::json to_json() const;
  static TargetStats from_json(const nlohmann::json& j);
};

bool uses_log1p(const std::string& name);

// Rows of `raw` are frames, columns follow `names`.
dsp::FeatureMatrix normalize_targets(const dsp::FeatureMatrix& raw,
                                     const std::vector<std::string>& names,
                                     const TargetStats& stats);
dsp::FeatureMatrix denormalize_targets(const dsp::FeatureMatrix& z,
                                       const std::vector<std::string>& names,
                                       const TargetStats& stats);

struct SplitRatios {
  double train = 0.8, dev = 0.1, test = 0.1;
};
SplitRatios parse_ratios(const std::string& s);

struct SplitManifest {
  fs::path corpus_root;
  std::uint64_t seed = 0;
  SplitRatios ratios;
  std::map<std::string, Split> speakers;
  TargetStats stats;  // TVs then ap, per, pitch; train split only

  std::vector<std::string> utterances(const CorpusManifest& c, Split s) const;
  void write(const fs::path& path) const;
  static SplitManifest read(const fs::path& path);
};

// Speaker-level partition with n_dev = max(1, round(n * dev)), likewise for
// test, and the remainder in train.
std::map<std::string, Split> assign_speakers(std::vector<std::string> speakers,
                                             const SplitRatios& r, std::uint64_t seed);
SplitManifest make_splits(const CorpusManifest& corpus, const SplitRatios& r,
                          std::uint64_t seed);
TargetStats compute_target_stats(const CorpusManifest& corpus,
                                 const std::vector<std::string>& utterance_ids);

// Raw targets of one utterance: TV columns then ap, per, pitch.
dsp::FeatureMatrix load_raw_targets(const CorpusManifest& corpus, const UtteranceInfo& u,
                                    std::vector<std::string>* names = nullptr);

}  // namespace sinv::data

#endif  // SINV_DATA_CORPUS_H_
