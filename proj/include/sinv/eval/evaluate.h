// sinv/eval/evaluate.h
//
// Whole-utterance prediction, pooled-frame PPMC scoring and Table-style
// reports (text and CSV).

#ifndef SINV_EVAL_EVALUATE_H_
#define SINV_EVAL_EVALUATE_H_

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "sinv/data/corpus.h"
#include "sinv/dsp/feature_matrix.h"
#include "sinv/train/checkpoint.h"

namespace sinv::eval {

namespace fs = std::filesystem;

// What a checkpoint expects and predicts, read from its metadata.
struct ModelInfo {
  dsp::FeatureKind input_kind = dsp::FeatureKind::kAudspec;
  std::vector<std::string> target_names;
  std::size_t tv_count = 0;
  data::TargetStats stats;
  std::size_t feature_channels = 0;
  std::size_t in_frames = 0;
  std::size_t out_frames = 0;
  std::string scheme;
};
// Throws Error(kData) when the metadata is incomplete.
ModelInfo model_info(const train::Checkpoint& ck);

// Runs every segment of `feats` (segments concatenated, as written by
// featurize) through the model in eval mode, stitches the outputs and keeps
// the first `n_frames` frames, denormalized to physical units.
dsp::FeatureMatrix predict_utterance(train::Checkpoint& ck, const ModelInfo& info,
                                     const dsp::FeatureMatrix& feats, std::size_t n_frames);

struct UtteranceTracks {
  std::string id;
  dsp::FeatureMatrix pred;   // frames x targets, physical units
  dsp::FeatureMatrix truth;  // same shape
};

// Predictions and ground truth for all utterances of one split.
std::vector<UtteranceTracks> predict_split(train::Checkpoint& ck, const data::CorpusManifest& corpus,
                                           const data::SplitManifest& split,
                                           const fs::path& feat_dir, data::Split which);

struct EvalOptions {
  std::string label = "model";
  std::string split = "test";
  bool per_utterance = false;      // mean of per-utterance PPMC instead of pooled frames
  std::uint64_t control_seed = 1;  // frame permutation for the shuffled control
};

struct EvalReport {
  std::string label;
  std::vector<std::string> names;
  std::size_t tv_count = 0;
  std::vector<double> ppmc;
  std::vector<std::uint8_t> degenerate;  // constant sequence, score defined as 0
  double avg_tvs = 0;
  double avg_all = 0;
  double control_avg_tvs = 0;  // predictions frame-shuffled within the pool
  std::optional<double> delta;  // 100 * (avg_tvs - reference avg_tvs)
  std::string split;
  std::string aggregation;
  std::size_t utterances = 0;
  std::size_t frames = 0;
  nlohmann::json runtime;  // deterministic run facts (epochs, parameters, threads)

  bool has_source() const { return names.size() > tv_count; }
};

// Scores tracks against their ground truth. Throws Error(kData) when empty.
EvalReport score_tracks(const std::vector<UtteranceTracks>& tracks, const std::vector<std::string>& names,
                        std::size_t tv_count, const EvalOptions& opt);

EvalReport evaluate(train::Checkpoint& ck, const data::CorpusManifest& corpus,
                    const data::SplitManifest& split, const fs::path& feat_dir,
                    const EvalOptions& opt);

// Sets report.delta against the reference's AVG TVs.
void compare_with(EvalReport& report, const EvalReport& reference);

// Table-style text: one row per report, "-" for variables a row lacks,
// the delta in parentheses after AVG TVs, then a footer.
std::string format_text(const std::vector<EvalReport>& rows);
// One header line and one line per report.
std::string format_csv(const std::vector<EvalReport>& rows);
// Reads reports written by format_csv.
std::vector<EvalReport> parse_csv(const std::string& text);
std::vector<EvalReport> read_csv(const fs::path& path);

// Published TCN-SF-Audspec AVG TVs on the licensed corpora; shown in the
// footer for reference and not comparable with synthetic data.
inline constexpr double kPublishedXrmbAvgTvs = 0.8770;
inline constexpr double kPublishedHprcAvgTvs = 0.7573;

}  // namespace sinv::eval

#endif  // SINV_EVAL_EVALUATE_H_
