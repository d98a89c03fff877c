// sinv/eval/infer.h
//
// Trajectory estimation for a single recording, with CSV and SVG output.

#ifndef SINV_EVAL_INFER_H_
#define SINV_EVAL_INFER_H_

#include <filesystem>
#include <string>
#include <vector>

#include "sinv/dsp/feature_matrix.h"
#include "sinv/dsp/wave.h"
#include "sinv/train/checkpoint.h"

namespace sinv::eval {

struct Trajectories {
  std::vector<std::string> names;
  dsp::FeatureMatrix tracks;  // frames x names at 100 Hz, physical units
};

// Resample, segment, featurize, predict and stitch; padding frames past the
// end of the audio are dropped, so a recording of d seconds gives
// floor(100 d) frames.
Trajectories infer_wave(train::Checkpoint& ck, const dsp::WaveBuffer& wave);
// Throws Error(kData) when the file cannot be read.
Trajectories infer_file(train::Checkpoint& ck, const std::filesystem::path& wav);

// "time" then one column per track.
void write_tracks_csv(const std::filesystem::path& path, const Trajectories& t);

// Ground truth read from feature files with channel manifests (for example a
// corpus tv.bin and src.bin); columns are matched to tracks by name.
Trajectories read_truth(const std::vector<std::filesystem::path>& files);

// One panel per variable in `vars` (all tracks when empty): the prediction as
// a dashed polyline and, when `truth` has that variable, the ground truth as
// a solid one.
std::string tracks_svg(const Trajectories& pred, const Trajectories* truth,
                       const std::vector<std::string>& vars = {});

}  // namespace sinv::eval

#endif  // SINV_EVAL_INFER_H_
