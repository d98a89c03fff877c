// train/train.cc

#include "sinv/train/train.h"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "sinv/error.h"
#include "sinv/nn/ops.h"
#include "sinv/nn/optim.h"

namespace sinv::train {

namespace {

int get_int(const nlohmann::json& j, const char* key, int def) {
  if (!j.contains(key)) return def;
  if (!j[key].is_number_integer()) fail(ErrorKind::kConfig, std::string("'") + key + "' must be an integer");
  return j[key].get<int>();
}

double get_double(const nlohmann::json& j, const char* key, double def) {
  if (!j.contains(key)) return def;
  if (!j[key].is_number()) fail(ErrorKind::kConfig, std::string("'") + key + "' must be a number");
  return j[key].get<double>();
}

// Copies `idx` segments into (B, C, T) tensors and the B*T mask.
struct Batch {
  nn::Tensor<float> x, y;
  std::vector<std::uint8_t> mask;
  std::size_t valid = 0;
};

Batch make_batch(const SegmentSet& set, std::span<const std::size_t> idx, bool with_targets) {
  const std::size_t b = idx.size(), cx = set.in_channels * set.in_frames,
                    cy = set.targets() * set.out_frames;
  std::vector<float> x(b * cx), y(with_targets ? b * cy : 0);
  Batch out;
  out.mask.resize(b * set.out_frames);
  for (std::size_t i = 0; i < b; ++i) {
    const auto& s = set.segments[idx[i]];
    std::copy(s.x.begin(), s.x.end(), x.begin() + std::ptrdiff_t(i * cx));
    if (with_targets) std::copy(s.y.begin(), s.y.end(), y.begin() + std::ptrdiff_t(i * cy));
    std::copy(s.mask.begin(), s.mask.end(), out.mask.begin() + std::ptrdiff_t(i * set.out_frames));
  }
  out.valid = std::size_t(std::count(out.mask.begin(), out.mask.end(), 1));
  out.x = nn::Tensor<float>::from({b, set.in_channels, set.in_frames}, std::move(x));
  if (with_targets) out.y = nn::Tensor<float>::from({b, set.targets(), set.out_frames}, std::move(y));
  return out;
}

// Batches of `batch` segments; a trailing single segment joins the previous
// batch because BatchNorm needs more than one sample.
std::vector<std::pair<std::size_t, std::size_t>> batch_ranges(std::size_t n, std::size_t batch) {
  std::vector<std::pair<std::size_t, std::size_t>> r;
  for (std::size_t i = 0; i < n; i += batch) r.emplace_back(i, std::min(n, i + batch));
  if (r.size() > 1 && r.back().second - r.back().first == 1) {
    r.pop_back();
    r.back().second = n;
  }
  return r;
}

std::uint64_t epoch_seed(std::uint64_t seed, int epoch) {
  return seed ^ (0x9E3779B97F4A7C15ull * std::uint64_t(epoch + 1));
}

void check_compatible(const SegmentSet& a, const SegmentSet& b) {
  if (a.in_channels != b.in_channels || a.in_frames != b.in_frames || a.out_frames != b.out_frames ||
      a.target_names != b.target_names)
    fail(ErrorKind::kData, "training and validation segments have different layouts");
}

}  // namespace

nn::TcnConfig TrainConfig::model_config(int in_channels, int n_targets) const {
  nn::TcnConfig c = width > 0 ? nn::TcnConfig::reduced(width, n_targets, tv_only) : nn::TcnConfig{};
  c.in_channels = in_channels;
  c.n_targets = n_targets;
  c.tv_only = tv_only;
  c.seed = seed;
  return c;
}

void TrainConfig::validate() const {
  if (input_kind != dsp::FeatureKind::kAudspec && input_kind != dsp::FeatureKind::kMspec)
    fail(ErrorKind::kConfig, "input_kind must be audspec or mspec");
  if (!(lr > 0) || !std::isfinite(lr)) fail(ErrorKind::kConfig, "lr must be positive");
  if (batch < 2) fail(ErrorKind::kConfig, "batch must be at least 2");
  if (max_epochs < 1) fail(ErrorKind::kConfig, "max_epochs must be at least 1");
  if (patience < 1) fail(ErrorKind::kConfig, "patience must be at least 1");
  if (lr_step_epochs < 1) fail(ErrorKind::kConfig, "lr_step_epochs must be at least 1");
  if (!(gamma > 0 && gamma <= 1)) fail(ErrorKind::kConfig, "gamma must be in (0, 1]");
  if (width < 0) fail(ErrorKind::kConfig, "width must be >= 0");
}

nlohmann::json TrainConfig::to_json() const {
  return {{"input_kind", dsp::feature_kind_name(input_kind)},
          {"tv_only", tv_only},
          {"lr", lr},
          {"batch", batch},
          {"max_epochs", max_epochs},
          {"patience", patience},
          {"lr_step_epochs", lr_step_epochs},
          {"gamma", gamma},
          {"seed", seed},
          {"width", width}};
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
  if (!j.is_object()) fail(ErrorKind::kConfig, "training config must be a JSON object");
  static const char* known[] = {"input_kind", "tv_only", "lr", "batch", "max_epochs",
                                "patience", "lr_step_epochs", "gamma", "seed", "width"};
  for (const auto& [k, v] : j.items())
    if (std::find_if(std::begin(known), std::end(known), [&](const char* s) { return k == s; }) ==
        std::end(known))
      fail(ErrorKind::kConfig, "unknown training config key '" + k + "'");
  TrainConfig c;
  if (j.contains("input_kind")) {
    if (!j["input_kind"].is_string()) fail(ErrorKind::kConfig, "'input_kind' must be a string");
    try {
      c.input_kind = dsp::parse_feature_kind(j["input_kind"].get<std::string>());
    } catch (const Error& e) {
      fail(ErrorKind::kConfig, e.what());
    }
  }
  if (j.contains("tv_only")) {
    if (!j["tv_only"].is_boolean()) fail(ErrorKind::kConfig, "'tv_only' must be a boolean");
    c.tv_only = j["tv_only"].get<bool>();
  }
  c.lr = get_double(j, "lr", c.lr);
  c.batch = get_int(j, "batch", c.batch);
  c.max_epochs = get_int(j, "max_epochs", c.max_epochs);
  c.patience = get_int(j, "patience", c.patience);
  c.lr_step_epochs = get_int(j, "lr_step_epochs", c.lr_step_epochs);
  c.gamma = get_double(j, "gamma", c.gamma);
  if (j.contains("seed")) {
    if (!j["seed"].is_number_unsigned()) fail(ErrorKind::kConfig, "'seed' must be a non-negative integer");
    c.seed = j["seed"].get<std::uint64_t>();
  }
  c.width = get_int(j, "width", c.width);
  c.validate();
  return c;
}

std::vector<std::string> run_target_names(const data::CorpusManifest& corpus, bool tv_only) {
  auto names = corpus.tv_names;
  if (!tv_only) names.insert(names.end(), {"ap", "per", "pitch"});
  return names;
}

std::size_t scored_frames(const std::string& id, std::size_t target_frames,
                          const data::FeatureIndexEntry& entry, std::size_t in_frames,
                          std::size_t out_frames) {
  // Target frames must end in the last segment (one frame of rounding slack).
  const std::size_t cover = entry.segments * out_frames;
  if (target_frames > cover + 1 || target_frames + out_frames <= cover)
    fail(ErrorKind::kData, id + ": " + std::to_string(target_frames) + " target frames but " +
                               std::to_string(entry.segments) + " feature segments");
  const std::size_t valid_audio = entry.valid_frames * out_frames / in_frames;
  return std::min({target_frames, valid_audio + 1, cover});
}

SegmentSet load_segments(const data::CorpusManifest& corpus, const data::SplitManifest& split,
                         const std::vector<std::string>& utterances, const fs::path& feat_dir,
                         bool tv_only) {
  const auto index = data::FeatureIndex::read(feat_dir);
  SegmentSet set;
  set.in_channels = index.channels;
  set.in_frames = index.frames_per_segment;
  set.out_frames = std::size_t(std::lround(double(index.frames_per_segment) / index.frame_rate * 100.0));
  set.target_names = run_target_names(corpus, tv_only);
  const std::size_t k = set.targets();

  for (const auto& id : utterances) {
    auto it = std::find_if(index.entries.begin(), index.entries.end(),
                           [&](const data::FeatureIndexEntry& e) { return e.id == id; });
    if (it == index.entries.end()) fail(ErrorKind::kData, "no features for utterance " + id);
    const auto fm = dsp::read_feature_matrix(feat_dir / (id + ".bin"));
    if (fm.channels != set.in_channels || fm.frames != it->segments * set.in_frames)
      fail(ErrorKind::kData, id + ": feature file does not match the feature index");

    std::vector<std::string> raw_names;
    const auto raw = data::load_raw_targets(corpus, corpus.find(id), &raw_names);
    const auto z = data::normalize_targets(raw, raw_names, split.stats);
    std::vector<std::size_t> cols;
    for (const auto& n : set.target_names) {
      auto c = std::find(raw_names.begin(), raw_names.end(), n);
      if (c == raw_names.end()) fail(ErrorKind::kData, id + ": missing target " + n);
      cols.push_back(std::size_t(c - raw_names.begin()));
    }
    const std::size_t n_valid = scored_frames(id, raw.frames, *it, set.in_frames, set.out_frames);

    for (std::size_t s = 0; s < it->segments; ++s) {
      SegmentSet::Segment seg;
      seg.utterance = id;
      seg.index = s;
      seg.x.resize(set.in_channels * set.in_frames);
      for (std::size_t c = 0; c < set.in_channels; ++c)
        for (std::size_t t = 0; t < set.in_frames; ++t)
          seg.x[c * set.in_frames + t] = fm.at(s * set.in_frames + t, c);
      seg.y.assign(k * set.out_frames, 0.0f);
      seg.mask.assign(set.out_frames, 0);
      for (std::size_t t = 0; t < set.out_frames; ++t) {
        const std::size_t g = s * set.out_frames + t;
        if (g >= n_valid) break;
        seg.mask[t] = 1;
        for (std::size_t c = 0; c < k; ++c) seg.y[c * set.out_frames + t] = z.at(g, cols[c]);
      }
      set.segments.push_back(std::move(seg));
    }
  }
  return set;
}

bool EarlyStopping::update(int epoch, double val_loss) {
  if (best_epoch_ < 0 || val_loss < best_) {
    best_ = val_loss;
    best_epoch_ = epoch;
    return true;
  }
  return false;
}

double evaluate_mse(nn::TcnModel<float>& model, const SegmentSet& set, int batch) {
  if (set.segments.empty()) fail(ErrorKind::kData, "evaluate_mse: no segments");
  std::vector<std::size_t> order(set.segments.size());
  std::iota(order.begin(), order.end(), 0);
  double sum = 0, count = 0;
  for (auto [lo, hi] : batch_ranges(order.size(), std::size_t(batch))) {
    const auto b = make_batch(set, std::span(order).subspan(lo, hi - lo), true);
    const auto pred = model.forward(b.x, nn::Mode::kEval);
    const auto p = pred.values();
    const auto y = b.y.values();
    const std::size_t k = set.targets(), t_n = set.out_frames;
    for (std::size_t i = 0; i < hi - lo; ++i)
      for (std::size_t c = 0; c < k; ++c)
        for (std::size_t t = 0; t < t_n; ++t) {
          if (!b.mask[i * t_n + t]) continue;
          const std::size_t at = (i * k + c) * t_n + t;
          const double d = double(p[at]) - double(y[at]);
          sum += d * d;
        }
    count += double(b.valid * k);
  }
  if (count == 0) fail(ErrorKind::kData, "evaluate_mse: no valid frames");
  return sum / count;
}

nlohmann::json run_metadata(const TrainConfig& cfg, const data::CorpusManifest& corpus,
                            const data::SplitManifest& split, const SegmentSet& train) {
  data::TargetStats st;
  st.names = train.target_names;
  for (const auto& n : st.names) {
    const auto k = split.stats.index(n);
    st.mean.push_back(split.stats.mean[k]);
    st.std.push_back(split.stats.std[k]);
  }
  return {{"input_kind", dsp::feature_kind_name(cfg.input_kind)},
          {"target_names", train.target_names},
          {"tv_count", corpus.tv_names.size()},
          {"scheme", tv::scheme_name(corpus.scheme)},
          {"stats", st.to_json()},
          {"train_config", cfg.to_json()},
          {"feature_channels", train.in_channels},
          {"in_frames", train.in_frames},
          {"out_frames", train.out_frames}};
}

TrainOutcome train_model(const TrainConfig& cfg, const SegmentSet& train, const SegmentSet& val,
                         const fs::path& ckpt_path, const nlohmann::json& meta,
                         const TrainHooks& hooks) {
  cfg.validate();
  if (train.segments.empty()) fail(ErrorKind::kData, "training split is empty");
  if (val.segments.empty()) fail(ErrorKind::kData, "validation split is empty");
  check_compatible(train, val);

  const auto mcfg = cfg.model_config(int(train.in_channels), int(train.targets()));
  try {
    nn::validate(mcfg);
  } catch (const Error& e) {
    fail(ErrorKind::kConfig, e.what());
  }
  if (nn::tcn_output_frames(mcfg, int(train.in_frames)) != int(train.out_frames))
    fail(ErrorKind::kData, "feature segments of " + std::to_string(train.in_frames) +
                               " frames do not map to " + std::to_string(train.out_frames) +
                               " target frames");

  nn::TcnModel<float> model(mcfg);
  TrainOutcome out;
  out.state.seed = cfg.seed;
  EarlyStopping stop(cfg.patience);
  if (hooks.resume) {
    if (!(hooks.resume->model.config() == mcfg))
      fail(ErrorKind::kData, "resume checkpoint has a different model configuration");
    model = nn::convert_model<float>(hooks.resume->model);
    out.state = hooks.resume->state;
    if (out.state.best_epoch >= 0) stop.restore(out.state.best_epoch, out.state.best_val);
  }
  nn::Adam<float> adam(model.parameters());
  if (hooks.resume) adam.state() = hooks.resume->adam;

  const std::size_t n = train.segments.size();
  std::vector<std::size_t> order(n);
  const auto ranges = batch_ranges(n, std::size_t(cfg.batch));
  fs::path last_path = ckpt_path;
  last_path += ".last";

  for (int e = out.state.epoch; e < cfg.max_epochs; ++e) {
    if (stop.should_stop(e)) {
      out.early_stopped = true;
      break;
    }
    const double lr = nn::lr_schedule(e, cfg.lr, cfg.gamma, cfg.lr_step_epochs);
    std::iota(order.begin(), order.end(), 0);
    nn::SplitMix64 rng(epoch_seed(cfg.seed, e));
    for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);

    double loss_sum = 0, frames = 0;
    for (std::size_t bi = 0; bi < ranges.size(); ++bi) {
      const auto [lo, hi] = ranges[bi];
      const auto b = make_batch(train, std::span(order).subspan(lo, hi - lo), true);
      if (b.valid == 0) continue;
      adam.zero_grad();
      auto loss = nn::mse_loss(model.forward(b.x, nn::Mode::kTrain), b.y, b.mask);
      const double l = loss.item();
      if (!std::isfinite(l))
        fail(ErrorKind::kNumeric, "non-finite training loss at epoch " + std::to_string(e + 1) +
                                      ", batch " + std::to_string(bi + 1) + " (lr " +
                                      std::to_string(lr) + ")");
      nn::backward(loss);
      adam.step(lr);
      for (const auto& p : adam.params())
        for (float v : p.values())
          if (!std::isfinite(v))
            fail(ErrorKind::kNumeric, "non-finite parameters after epoch " + std::to_string(e + 1) +
                                          ", batch " + std::to_string(bi + 1));
      loss_sum += l * double(b.valid);
      frames += double(b.valid);
    }

    EpochRecord rec;
    rec.epoch = e + 1;
    rec.lr = lr;
    rec.train_mse = frames > 0 ? loss_sum / frames : 0;
    rec.val_mse = evaluate_mse(model, val, cfg.batch);
    if (!std::isfinite(rec.val_mse))
      fail(ErrorKind::kNumeric, "non-finite validation loss at epoch " + std::to_string(e + 1));
    rec.best = stop.update(rec.epoch, rec.val_mse);

    out.state.epoch = rec.epoch;
    out.state.best_epoch = stop.best_epoch();
    out.state.best_val = stop.best();
    if (rec.best) save_checkpoint(ckpt_path, model, adam.state(), out.state, meta);
    save_checkpoint(last_path, model, adam.state(), out.state, meta);
    out.log.push_back(rec);
    if (hooks.on_epoch && !hooks.on_epoch(rec)) break;
  }
  if (!out.early_stopped && stop.should_stop(out.state.epoch) && out.state.epoch < cfg.max_epochs)
    out.early_stopped = true;
  return out;
}

}  // namespace sinv::train
