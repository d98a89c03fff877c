// eval/infer.cc

#include "sinv/eval/infer.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "sinv/data/corpus.h"
#include "sinv/error.h"
#include "sinv/eval/evaluate.h"

namespace sinv::eval {

namespace {

std::string num(double v, int digits = 6) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*g", digits, v);
  return buf;
}

}  // namespace

Trajectories infer_wave(train::Checkpoint& ck, const dsp::WaveBuffer& wave) {
  const auto info = model_info(ck);
  const auto feats = data::featurize_wave(wave, info.input_kind);
  const std::size_t segs = feats.frames / info.in_frames;
  const auto n = std::min<std::size_t>(std::size_t(std::floor(wave.duration() * 100.0 + 1e-9)),
                                       segs * info.out_frames);
  return {info.target_names, predict_utterance(ck, info, feats, n)};
}

Trajectories infer_file(train::Checkpoint& ck, const std::filesystem::path& wav) {
  dsp::WaveBuffer w;
  try {
    w = dsp::read_wav(wav);
  } catch (const Error& e) {
    fail(ErrorKind::kData, std::string("cannot read audio: ") + e.what());
  }
  return infer_wave(ck, w);
}

void write_tracks_csv(const std::filesystem::path& path, const Trajectories& t) {
  std::ofstream os(path);
  if (!os) fail(ErrorKind::kData, "cannot write " + path.string());
  os << "time";
  for (const auto& n : t.names) os << "," << n;
  os << "\n";
  for (std::size_t f = 0; f < t.tracks.frames; ++f) {
    os << num(double(f) / t.tracks.frame_rate);
    for (std::size_t c = 0; c < t.tracks.channels; ++c) os << "," << num(t.tracks.at(f, c), 7);
    os << "\n";
  }
  if (!os) fail(ErrorKind::kData, "short write to " + path.string());
}

Trajectories read_truth(const std::vector<std::filesystem::path>& files) {
  Trajectories t;
  std::vector<dsp::FeatureMatrix> mats;
  std::size_t frames = SIZE_MAX;
  for (const auto& f : files) {
    mats.push_back(dsp::read_feature_matrix(f));
    auto names = dsp::read_channel_manifest(f);
    if (names.size() != mats.back().channels)
      fail(ErrorKind::kData, f.string() + ": channel manifest does not match the file");
    t.names.insert(t.names.end(), names.begin(), names.end());
    frames = std::min(frames, mats.back().frames);
  }
  if (mats.empty()) return t;
  t.tracks = dsp::FeatureMatrix(frames, t.names.size(), mats[0].frame_rate, dsp::FeatureKind::kTargets);
  std::size_t col = 0;
  for (const auto& m : mats) {
    for (std::size_t c = 0; c < m.channels; ++c, ++col)
      for (std::size_t f = 0; f < frames; ++f) t.tracks.at(f, col) = m.at(f, c);
  }
  return t;
}

std::string tracks_svg(const Trajectories& pred, const Trajectories* truth,
                       const std::vector<std::string>& vars) {
  const auto shown = vars.empty() ? pred.names : vars;
  constexpr double kWidth = 900, kPanel = 110, kGap = 16, kLeft = 70, kRight = 16, kTop = 12;
  const double height = kTop + double(shown.size()) * (kPanel + kGap);
  const double plot_w = kWidth - kLeft - kRight;
  const std::size_t frames = std::max<std::size_t>(pred.tracks.frames, 2);

  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\"" << height
     << "\" viewBox=\"0 0 " << kWidth << " " << height << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  for (std::size_t p = 0; p < shown.size(); ++p) {
    const auto& name = shown[p];
    auto pi = std::find(pred.names.begin(), pred.names.end(), name);
    if (pi == pred.names.end()) fail(ErrorKind::kConfig, "no predicted track named " + name);
    const std::size_t pc = std::size_t(pi - pred.names.begin());
    long tc = -1;
    if (truth) {
      auto ti = std::find(truth->names.begin(), truth->names.end(), name);
      if (ti != truth->names.end()) tc = long(ti - truth->names.begin());
    }
    const std::size_t tn = tc >= 0 ? std::min(truth->tracks.frames, pred.tracks.frames) : 0;

    double lo = INFINITY, hi = -INFINITY;
    for (std::size_t f = 0; f < pred.tracks.frames; ++f) {
      lo = std::min(lo, double(pred.tracks.at(f, pc)));
      hi = std::max(hi, double(pred.tracks.at(f, pc)));
    }
    for (std::size_t f = 0; f < tn; ++f) {
      lo = std::min(lo, double(truth->tracks.at(f, std::size_t(tc))));
      hi = std::max(hi, double(truth->tracks.at(f, std::size_t(tc))));
    }
    if (!(hi > lo)) {
      lo -= 0.5;
      hi += 0.5;
    }
    const double y0 = kTop + double(p) * (kPanel + kGap);
    auto px = [&](std::size_t f) { return kLeft + plot_w * double(f) / double(frames - 1); };
    auto py = [&](double v) { return y0 + kPanel * (1.0 - (v - lo) / (hi - lo)); };

    os << "<g class=\"panel\" id=\"" << name << "\">\n";
    os << "<rect x=\"" << kLeft << "\" y=\"" << y0 << "\" width=\"" << plot_w << "\" height=\"" << kPanel
       << "\" fill=\"none\" stroke=\"#999\"/>\n";
    os << "<text x=\"6\" y=\"" << y0 + kPanel / 2 << "\">" << name << "</text>\n";
    os << "<text x=\"" << kLeft - 4 << "\" y=\"" << y0 + 10 << "\" text-anchor=\"end\" font-size=\"9\">"
       << num(hi, 4) << "</text>\n";
    os << "<text x=\"" << kLeft - 4 << "\" y=\"" << y0 + kPanel << "\" text-anchor=\"end\" font-size=\"9\">"
       << num(lo, 4) << "</text>\n";
    if (tn > 0) {
      os << "<polyline class=\"truth\" fill=\"none\" stroke=\"#1f4e99\" stroke-width=\"1.4\" points=\"";
      for (std::size_t f = 0; f < tn; ++f)
        os << (f ? " " : "") << num(px(f), 6) << "," << num(py(truth->tracks.at(f, std::size_t(tc))), 6);
      os << "\"/>\n";
    }
    os << "<polyline class=\"prediction\" fill=\"none\" stroke=\"#c0392b\" stroke-width=\"1.4\" "
          "stroke-dasharray=\"6 4\" points=\"";
    for (std::size_t f = 0; f < pred.tracks.frames; ++f)
      os << (f ? " " : "") << num(px(f), 6) << "," << num(py(pred.tracks.at(f, pc)), 6);
    os << "\"/>\n</g>\n";
  }
  os << "</svg>\n";
  return os.str();
}

}  // namespace sinv::eval
