// eval/evaluate.cc

#include "sinv/eval/evaluate.h"

#include <omp.h>

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

#include "sinv/error.h"
#include "sinv/eval/ppmc.h"
#include "sinv/nn/tcn.h"
#include "sinv/train/train.h"

namespace sinv::eval {

namespace {

std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::string delta_str(double d) { return "(" + fixed(d, 1) + "%)"; }

std::string display_name(const std::string& n) {
  if (n == "ap") return "Ap.";
  if (n == "per") return "Per.";
  if (n == "pitch") return "Pitch";
  return n;
}

double mean_of(const std::vector<double>& v, std::size_t lo, std::size_t hi) {
  double s = 0;
  for (std::size_t i = lo; i < hi; ++i) s += v[i];
  return hi > lo ? s / double(hi - lo) : 0;
}

// Column union over rows, in first-seen order.
std::vector<std::string> union_names(const std::vector<EvalReport>& rows) {
  std::vector<std::string> out;
  for (const auto& r : rows)
    for (const auto& n : r.names)
      if (std::find(out.begin(), out.end(), n) == out.end()) out.push_back(n);
  return out;
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

double parse_number(const std::string& s, const std::string& what) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    fail(ErrorKind::kData, "report: bad " + what + " value '" + s + "'");
  }
}

}  // namespace

ModelInfo model_info(const train::Checkpoint& ck) {
  ModelInfo m;
  const auto& j = ck.meta;
  try {
    m.input_kind = dsp::parse_feature_kind(j.at("input_kind").get<std::string>());
    m.target_names = j.at("target_names").get<std::vector<std::string>>();
    m.tv_count = j.at("tv_count").get<std::size_t>();
    m.stats = data::TargetStats::from_json(j.at("stats"));
    m.feature_channels = j.at("feature_channels").get<std::size_t>();
    m.in_frames = j.at("in_frames").get<std::size_t>();
    m.out_frames = j.at("out_frames").get<std::size_t>();
    m.scheme = j.at("scheme").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::kData, std::string("checkpoint metadata incomplete: ") + e.what());
  } catch (const Error& e) {
    fail(ErrorKind::kData, std::string("checkpoint metadata: ") + e.what());
  }
  const auto& cfg = ck.model.config();
  if (m.target_names.size() != std::size_t(cfg.n_targets) ||
      m.feature_channels != std::size_t(cfg.in_channels) || m.tv_count > m.target_names.size() ||
      nn::tcn_output_frames(cfg, int(m.in_frames)) != int(m.out_frames))
    fail(ErrorKind::kData, "checkpoint metadata does not match its model");
  return m;
}

dsp::FeatureMatrix predict_utterance(train::Checkpoint& ck, const ModelInfo& info,
                                     const dsp::FeatureMatrix& feats, std::size_t n_frames) {
  if (feats.channels != info.feature_channels)
    fail(ErrorKind::kData, "features have " + std::to_string(feats.channels) +
                               " channels, model expects " + std::to_string(info.feature_channels));
  if (feats.frames == 0 || feats.frames % info.in_frames != 0)
    fail(ErrorKind::kData, "feature frames are not a whole number of segments");
  const std::size_t segs = feats.frames / info.in_frames, c_in = info.feature_channels,
                    t_in = info.in_frames, t_out = info.out_frames, k = info.target_names.size();
  if (n_frames > segs * t_out) fail(ErrorKind::kData, "more target frames than feature segments cover");

  std::vector<float> x(segs * c_in * t_in);
  for (std::size_t s = 0; s < segs; ++s)
    for (std::size_t c = 0; c < c_in; ++c)
      for (std::size_t t = 0; t < t_in; ++t)
        x[(s * c_in + c) * t_in + t] = feats.at(s * t_in + t, c);
  const auto y = ck.model.forward(nn::Tensor<float>::from({segs, c_in, t_in}, std::move(x)),
                                  nn::Mode::kEval);
  const auto v = y.values();
  dsp::FeatureMatrix z(n_frames, k, 100.0, dsp::FeatureKind::kTargets);
  for (std::size_t g = 0; g < n_frames; ++g) {
    const std::size_t s = g / t_out, t = g % t_out;
    for (std::size_t c = 0; c < k; ++c) z.at(g, c) = v[(s * k + c) * t_out + t];
  }
  return data::denormalize_targets(z, info.target_names, info.stats);
}

std::vector<UtteranceTracks> predict_split(train::Checkpoint& ck, const data::CorpusManifest& corpus,
                                           const data::SplitManifest& split,
                                           const fs::path& feat_dir, data::Split which) {
  const auto info = model_info(ck);
  const auto index = data::FeatureIndex::read(feat_dir);
  if (index.kind != info.input_kind)
    fail(ErrorKind::kData, std::string("features in ") + feat_dir.string() + " are " +
                               dsp::feature_kind_name(index.kind) + ", model expects " +
                               dsp::feature_kind_name(info.input_kind));
  if (index.frames_per_segment != info.in_frames)
    fail(ErrorKind::kData, "feature segment length does not match the model");
  const auto ids = split.utterances(corpus, which);
  if (ids.empty()) fail(ErrorKind::kData, std::string(data::split_name(which)) + " split is empty");

  std::vector<UtteranceTracks> out(ids.size());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const auto& id = ids[i];
    auto it = std::find_if(index.entries.begin(), index.entries.end(),
                           [&](const data::FeatureIndexEntry& e) { return e.id == id; });
    if (it == index.entries.end()) fail(ErrorKind::kData, "no features for utterance " + id);
    const auto feats = dsp::read_feature_matrix(feat_dir / (id + ".bin"));
    std::vector<std::string> raw_names;
    const auto raw = data::load_raw_targets(corpus, corpus.find(id), &raw_names);
    const std::size_t n =
        train::scored_frames(id, raw.frames, *it, info.in_frames, info.out_frames);

    UtteranceTracks u;
    u.id = id;
    u.pred = predict_utterance(ck, info, feats, n);
    u.truth = dsp::FeatureMatrix(n, info.target_names.size(), raw.frame_rate, dsp::FeatureKind::kTargets);
    for (std::size_t c = 0; c < info.target_names.size(); ++c) {
      auto col = std::find(raw_names.begin(), raw_names.end(), info.target_names[c]);
      if (col == raw_names.end()) fail(ErrorKind::kData, id + ": missing target " + info.target_names[c]);
      const std::size_t rc = std::size_t(col - raw_names.begin());
      for (std::size_t t = 0; t < n; ++t) u.truth.at(t, c) = raw.at(t, rc);
    }
    out[i] = std::move(u);
  }
  return out;
}

EvalReport score_tracks(const std::vector<UtteranceTracks>& tracks, const std::vector<std::string>& names,
                        std::size_t tv_count, const EvalOptions& opt) {
  require(tv_count <= names.size(), "score_tracks: tv_count exceeds the variable count");
  if (tracks.empty()) fail(ErrorKind::kData, "nothing to evaluate: split is empty");
  const std::size_t k = names.size();
  std::size_t frames = 0;
  for (const auto& u : tracks) {
    if (u.pred.channels != k || u.truth.channels != k || u.pred.frames != u.truth.frames)
      fail(ErrorKind::kData, u.id + ": prediction and ground truth shapes differ");
    frames += u.truth.frames;
  }
  if (frames < 2) fail(ErrorKind::kData, "nothing to evaluate: fewer than 2 frames");

  EvalReport r;
  r.label = opt.label;
  r.names = names;
  r.tv_count = tv_count;
  r.split = opt.split;
  r.aggregation = opt.per_utterance ? "per-utterance mean" : "pooled frames";
  r.utterances = tracks.size();
  r.frames = frames;
  r.ppmc.assign(k, 0.0);
  r.degenerate.assign(k, 0);
  std::vector<double> control(k, 0.0);

  // One frame permutation per pool, shared by all variables.
  auto permutation = [&](std::size_t n, std::uint64_t salt) {
    std::vector<std::size_t> p(n);
    std::iota(p.begin(), p.end(), 0);
    nn::SplitMix64 rng(opt.control_seed ^ (0xD1B54A32D192ED03ull * (salt + 1)));
    for (std::size_t i = n; i > 1; --i) std::swap(p[i - 1], p[rng.below(i)]);
    return p;
  };

  auto score_pool = [&](const std::vector<const UtteranceTracks*>& pool, std::uint64_t salt,
                        std::vector<double>& val, std::vector<double>& ctl, std::vector<std::uint8_t>& deg) {
    std::size_t n = 0;
    for (auto* u : pool) n += u->truth.frames;
    const auto perm = permutation(n, salt);
    std::vector<double> x(n), y(n), xs(n);
    for (std::size_t c = 0; c < k; ++c) {
      std::size_t at = 0;
      for (auto* u : pool)
        for (std::size_t t = 0; t < u->truth.frames; ++t, ++at) {
          x[at] = u->pred.at(t, c);
          y[at] = u->truth.at(t, c);
        }
      for (std::size_t i = 0; i < n; ++i) xs[i] = x[perm[i]];
      const auto p = ppmc(x, y);
      val[c] = p.value;
      deg[c] = p.degenerate;
      ctl[c] = ppmc(xs, y).value;
    }
  };

  if (!opt.per_utterance) {
    std::vector<const UtteranceTracks*> pool;
    for (const auto& u : tracks) pool.push_back(&u);
    score_pool(pool, 0, r.ppmc, control, r.degenerate);
  } else {
    std::size_t used = 0;
    std::vector<double> v(k), ctl(k);
    std::vector<std::uint8_t> deg(k);
    for (std::size_t i = 0; i < tracks.size(); ++i) {
      if (tracks[i].truth.frames < 2) continue;
      score_pool({&tracks[i]}, i, v, ctl, deg);
      for (std::size_t c = 0; c < k; ++c) {
        r.ppmc[c] += v[c];
        control[c] += ctl[c];
        r.degenerate[c] |= deg[c];
      }
      ++used;
    }
    if (used == 0) fail(ErrorKind::kData, "nothing to evaluate: no utterance has 2 frames");
    for (std::size_t c = 0; c < k; ++c) {
      r.ppmc[c] /= double(used);
      control[c] /= double(used);
    }
  }
  r.avg_tvs = mean_of(r.ppmc, 0, tv_count);
  r.avg_all = mean_of(r.ppmc, 0, k);
  r.control_avg_tvs = mean_of(control, 0, tv_count);
  return r;
}

EvalReport evaluate(train::Checkpoint& ck, const data::CorpusManifest& corpus,
                    const data::SplitManifest& split, const fs::path& feat_dir,
                    const EvalOptions& opt) {
  const auto info = model_info(ck);
  const auto tracks = predict_split(ck, corpus, split, feat_dir, data::parse_split(opt.split));
  auto r = score_tracks(tracks, info.target_names, info.tv_count, opt);
  r.runtime = {{"checkpoint_epoch", ck.state.epoch},
               {"parameters", ck.model.parameter_count()},
               {"threads", omp_get_max_threads()},
               {"input_kind", dsp::feature_kind_name(info.input_kind)}};
  return r;
}

void compare_with(EvalReport& report, const EvalReport& reference) {
  report.delta = 100.0 * (report.avg_tvs - reference.avg_tvs);
}

std::string format_text(const std::vector<EvalReport>& rows) {
  const auto cols = union_names(rows);
  std::size_t label_w = 5;
  for (const auto& r : rows) label_w = std::max(label_w, r.label.size());
  std::ostringstream os;
  auto pad = [](std::string s, std::size_t w) {
    if (s.size() < w) s.append(w - s.size(), ' ');
    return s;
  };
  os << pad("Model", label_w + 2);
  for (const auto& c : cols) os << pad(display_name(c), 8);
  os << pad("AVG. TVs", 17) << "AVG. all\n";
  for (const auto& r : rows) {
    os << pad(r.label, label_w + 2);
    for (const auto& c : cols) {
      auto at = std::find(r.names.begin(), r.names.end(), c);
      os << pad(at == r.names.end() ? "-" : fixed(r.ppmc[std::size_t(at - r.names.begin())], 4), 8);
    }
    std::string avg = fixed(r.avg_tvs, 4);
    if (r.delta) avg += " " + delta_str(*r.delta);
    os << pad(avg, 17) << (r.has_source() ? fixed(r.avg_all, 4) : "-") << "\n";
  }
  os << "\n";
  for (const auto& r : rows) {
    os << r.label << ": " << r.split << " split, " << r.aggregation << ", " << r.utterances
       << " utterances, " << r.frames << " frames; shuffled-prediction control AVG. TVs "
       << fixed(r.control_avg_tvs, 4);
    std::vector<std::string> deg;
    for (std::size_t c = 0; c < r.names.size(); ++c)
      if (r.degenerate[c]) deg.push_back(r.names[c]);
    if (!deg.empty()) {
      os << "; constant sequences scored 0:";
      for (const auto& d : deg) os << " " << d;
    }
    if (!r.runtime.is_null() && !r.runtime.empty()) os << "; run " << r.runtime.dump();
    os << "\n";
  }
  os << "Delta: absolute AVG. TVs difference to the first compared row, in PPMC points.\n";
  os << "Published TCN-SF-Audspec AVG. TVs on licensed corpora (reference only): XRMB "
     << fixed(kPublishedXrmbAvgTvs, 4) << ", HPRC " << fixed(kPublishedHprcAvgTvs, 4) << "\n";
  return os.str();
}

std::string format_csv(const std::vector<EvalReport>& rows) {
  const auto cols = union_names(rows);
  std::ostringstream os;
  os << "label,split,aggregation,utterances,frames,tv_count";
  for (const auto& c : cols) os << "," << c;
  os << ",avg_tvs,avg_all,delta,control_avg_tvs\n";
  for (const auto& r : rows) {
    os << r.label << "," << r.split << "," << r.aggregation << "," << r.utterances << "," << r.frames
       << "," << r.tv_count;
    for (const auto& c : cols) {
      auto at = std::find(r.names.begin(), r.names.end(), c);
      os << ",";
      if (at != r.names.end()) os << fixed(r.ppmc[std::size_t(at - r.names.begin())], 8);
    }
    os << "," << fixed(r.avg_tvs, 8) << "," << fixed(r.avg_all, 8) << ","
       << (r.delta ? fixed(*r.delta, 4) : "") << "," << fixed(r.control_avg_tvs, 8) << "\n";
  }
  return os.str();
}

std::vector<EvalReport> parse_csv(const std::string& text) {
  std::istringstream is(text);
  std::string line;
  if (!std::getline(is, line)) fail(ErrorKind::kData, "report: empty file");
  const auto head = split_csv_line(line);
  const std::size_t fixed_lead = 6, fixed_tail = 4;
  if (head.size() < fixed_lead + fixed_tail || head[0] != "label" || head[5] != "tv_count" ||
      head[head.size() - 4] != "avg_tvs")
    fail(ErrorKind::kData, "report: not a report table");
  const std::vector<std::string> cols(head.begin() + fixed_lead, head.end() - fixed_tail);
  std::vector<EvalReport> out;
  while (std::getline(is, line)) {
    if (line.empty() || line == "\r") continue;
    const auto f = split_csv_line(line);
    if (f.size() != head.size()) fail(ErrorKind::kData, "report: ragged row");
    EvalReport r;
    r.label = f[0];
    r.split = f[1];
    r.aggregation = f[2];
    r.utterances = std::size_t(parse_number(f[3], "utterances"));
    r.frames = std::size_t(parse_number(f[4], "frames"));
    r.tv_count = std::size_t(parse_number(f[5], "tv_count"));
    for (std::size_t c = 0; c < cols.size(); ++c) {
      if (f[fixed_lead + c].empty()) continue;
      r.names.push_back(cols[c]);
      r.ppmc.push_back(parse_number(f[fixed_lead + c], cols[c]));
    }
    r.degenerate.assign(r.names.size(), 0);
    const std::size_t t = head.size() - fixed_tail;
    r.avg_tvs = parse_number(f[t], "avg_tvs");
    r.avg_all = parse_number(f[t + 1], "avg_all");
    if (!f[t + 2].empty()) r.delta = parse_number(f[t + 2], "delta");
    r.control_avg_tvs = parse_number(f[t + 3], "control_avg_tvs");
    if (r.tv_count > r.names.size()) fail(ErrorKind::kData, "report: tv_count exceeds variables");
    out.push_back(std::move(r));
  }
  if (out.empty()) fail(ErrorKind::kData, "report: no rows");
  return out;
}

std::vector<EvalReport> read_csv(const fs::path& path) {
  std::ifstream is(path);
  if (!is) fail(ErrorKind::kData, "cannot read report " + path.string());
  std::stringstream ss;
  ss << is.rdbuf();
  return parse_csv(ss.str());
}

}  // namespace sinv::eval
