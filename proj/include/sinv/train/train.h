// sinv/train/train.h
//
// Segment datasets and the training loop with validation-based early
// stopping.

#ifndef SINV_TRAIN_TRAIN_H_
#define SINV_TRAIN_TRAIN_H_

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "json.hpp"
#include "sinv/data/corpus.h"
#include "sinv/dsp/feature_matrix.h"
#include "sinv/nn/tcn.h"
#include "sinv/train/checkpoint.h"

namespace sinv::train {

namespace fs = std::filesystem;

struct TrainConfig {
  dsp::FeatureKind input_kind = dsp::FeatureKind::kAudspec;
  bool tv_only = false;
  double lr = 1e-3;
  int batch = 64;
  int max_epochs = 100;
  int patience = 10;
  int lr_step_epochs = 5;
  double gamma = 0.5;
  std::uint64_t seed = 1;
  int width = 0;  // hidden width override; 0 keeps the default widths

  nn::TcnConfig model_config(int in_channels, int n_targets) const;
  void validate() const;
  nlohmann::json to_json() const;
  static TrainConfig from_json(const nlohmann::json& j);
};

// Model input segments with their aligned, normalized targets.
struct SegmentSet {
  std::size_t in_channels = 0;
  std::size_t in_frames = 0;   // feature frames per segment
  std::size_t out_frames = 0;  // target frames per segment
  std::vector<std::string> target_names;

  struct Segment {
    std::string utterance;
    std::size_t index = 0;        // position within the utterance
    std::vector<float> x;         // (in_channels, in_frames)
    std::vector<float> y;         // (targets, out_frames)
    std::vector<std::uint8_t> mask;  // out_frames; 0 on padding
  };
  std::vector<Segment> segments;

  std::size_t targets() const { return target_names.size(); }
};

// Target names of a run: the corpus TVs, then ap, per, pitch unless tv_only.
std::vector<std::string> run_target_names(const data::CorpusManifest& corpus, bool tv_only);

// Frames of an utterance that carry targets: those covered by both the
// target track and real audio. Throws Error(kData) when the target length
// does not fit the feature segments.
std::size_t scored_frames(const std::string& id, std::size_t target_frames,
                          const data::FeatureIndexEntry& entry, std::size_t in_frames,
                          std::size_t out_frames);

// Loads features from `feat_dir` (written by featurize_corpus) and targets
// normalized with the split statistics. Throws Error(kData) when features
// and targets disagree.
SegmentSet load_segments(const data::CorpusManifest& corpus, const data::SplitManifest& split,
                         const std::vector<std::string>& utterances, const fs::path& feat_dir,
                         bool tv_only);

// Stops once `patience` epochs pass without a new best validation loss.
class EarlyStopping {
 public:
  explicit EarlyStopping(int patience) : patience_(patience) {}
  // Returns true when this epoch set a new best.
  bool update(int epoch, double val_loss);
  bool should_stop(int epoch) const { return best_epoch_ >= 0 && epoch - best_epoch_ >= patience_; }
  int best_epoch() const { return best_epoch_; }
  double best() const { return best_; }
  void restore(int best_epoch, double best) {
    best_epoch_ = best_epoch;
    best_ = best;
  }

 private:
  int patience_;
  int best_epoch_ = -1;
  double best_ = 0;
};

struct EpochRecord {
  int epoch = 0;  // 1-based
  double lr = 0;
  double train_mse = 0;
  double val_mse = 0;
  bool best = false;
};

struct TrainOutcome {
  std::vector<EpochRecord> log;
  TrainingState state;
  bool early_stopped = false;
};

struct TrainHooks {
  // Called after each epoch; returning false ends training.
  std::function<bool(const EpochRecord&)> on_epoch;
  // Continue from this checkpoint's weights, optimizer and schedule.
  const Checkpoint* resume = nullptr;
};

// Trains a model on `train`, keeps the best validation epoch at `ckpt_path`
// and the latest epoch at `ckpt_path` + ".last". Throws Error(kNumeric) on a
// non-finite loss. Deterministic for a fixed seed and thread count.
TrainOutcome train_model(const TrainConfig& cfg, const SegmentSet& train, const SegmentSet& val,
                         const fs::path& ckpt_path, const nlohmann::json& meta,
                         const TrainHooks& hooks = {});

// Masked MSE of a model over a segment set in eval mode.
double evaluate_mse(nn::TcnModel<float>& model, const SegmentSet& set, int batch);

// Metadata stored with checkpoints of a run.
nlohmann::json run_metadata(const TrainConfig& cfg, const data::CorpusManifest& corpus,
                            const data::SplitManifest& split, const SegmentSet& train);

}  // namespace sinv::train

#endif  // SINV_TRAIN_TRAIN_H_
