// sinv: command-line front end for corpus generation, featurization,
// splitting, training, evaluation, inference and gradient checking.
//
// Thread count comes from SINV_NUM_THREADS (default: OpenMP's choice).
// Exit codes: 0 ok, 2 configuration error, 3 data error, 4 numeric failure.

#include <omp.h>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "sinv/data/corpus.h"
#include "sinv/data/synth.h"
#include "sinv/error.h"
#include "sinv/eval/evaluate.h"
#include "sinv/eval/infer.h"
#include "sinv/nn/gradcheck.h"
#include "sinv/train/checkpoint.h"
#include "sinv/train/train.h"

namespace fs = std::filesystem;
using namespace sinv;

namespace {

nlohmann::json read_json(const fs::path& p) {
  std::ifstream is(p);
  if (!is) fail(ErrorKind::kConfig, "cannot read " + p.string());
  try {
    return nlohmann::json::parse(is);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::kConfig, p.string() + ": " + e.what());
  }
}

void write_text(const fs::path& p, const std::string& s) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream os(p, std::ios::binary);
  os << s;
  if (!os) fail(ErrorKind::kData, "cannot write " + p.string());
}

void set_threads() {
  if (const char* s = std::getenv("SINV_NUM_THREADS")) {
    char* end = nullptr;
    const long n = std::strtol(s, &end, 10);
    if (end == s || *end != '\0' || n < 1)
      fail(ErrorKind::kConfig, std::string("SINV_NUM_THREADS must be a positive integer, got '") + s + "'");
    omp_set_num_threads(int(n));
  }
}

fs::path default_feats(const fs::path& corpus_root, dsp::FeatureKind kind) {
  return corpus_root / "feats" / dsp::feature_kind_name(kind);
}

struct Opts {
  // synth-data
  std::string synth_config, synth_out;
  // featurize
  std::string feat_kind = "audspec", feat_in, feat_out;
  // split
  std::uint64_t split_seed = 1;
  std::string split_ratios = "0.8,0.1,0.1", split_corpus, split_out;
  // train
  std::string train_config, train_manifest, train_feats, train_out, train_log, train_resume;
  // eval
  std::string eval_ckpt, eval_manifest, eval_feats, eval_split = "test", eval_compare, eval_out,
      eval_label;
  bool eval_per_utt = false;
  // infer
  std::string inf_ckpt, inf_wav, inf_svg, inf_csv, inf_vars;
  std::vector<std::string> inf_truth;
  // gradcheck
  int gc_width = 8, gc_frames = 25, gc_batch = 2, gc_samples = 200, gc_targets = 9;
  std::uint64_t gc_seed = 1234;
};

int cmd_synth(const Opts& o) {
  data::SynthConfig cfg;
  if (!o.synth_config.empty()) cfg = data::SynthConfig::from_json(read_json(o.synth_config));
  cfg.validate();
  const auto c = data::generate_corpus(cfg, o.synth_out);
  std::printf("wrote %zu utterances (%d speakers, scheme %s) to %s\n", c.utterances.size(),
              cfg.n_speakers, tv::scheme_name(c.scheme), o.synth_out.c_str());
  return 0;
}

int cmd_featurize(const Opts& o) {
  const auto kind = dsp::parse_feature_kind(o.feat_kind);
  if (kind == dsp::FeatureKind::kTargets) fail(ErrorKind::kConfig, "--kind must be audspec, mspec or mfcc");
  const auto corpus = data::CorpusManifest::read(o.feat_in);
  const fs::path out = o.feat_out.empty() ? default_feats(corpus.root, kind) : fs::path(o.feat_out);
  const auto fi = data::featurize_corpus(corpus, kind, out);
  std::printf("featurized %zu utterances as %s (%zu channels, %zu frames per segment) into %s\n",
              fi.entries.size(), dsp::feature_kind_name(kind), fi.channels, fi.frames_per_segment,
              out.c_str());
  return 0;
}

int cmd_split(const Opts& o) {
  const auto corpus = data::CorpusManifest::read(o.split_corpus);
  data::SplitRatios r;
  try {
    r = data::parse_ratios(o.split_ratios);
  } catch (const Error& e) {
    fail(ErrorKind::kConfig, e.what());
  }
  const auto sm = data::make_splits(corpus, r, o.split_seed);
  const fs::path out = o.split_out.empty() ? corpus.root / "split.json" : fs::path(o.split_out);
  sm.write(out);
  std::size_t counts[3] = {0, 0, 0};
  for (const auto& [spk, s] : sm.speakers) ++counts[int(s)];
  std::printf("speakers train/dev/test: %zu/%zu/%zu; manifest %s\n", counts[0], counts[1], counts[2],
              out.c_str());
  return 0;
}

int cmd_train(const Opts& o) {
  const auto cfg = train::TrainConfig::from_json(read_json(o.train_config));
  const auto split = data::SplitManifest::read(o.train_manifest);
  const auto corpus = data::CorpusManifest::read(split.corpus_root);
  const fs::path feats = o.train_feats.empty() ? default_feats(corpus.root, cfg.input_kind) : fs::path(o.train_feats);
  const auto index = data::FeatureIndex::read(feats);
  if (index.kind != cfg.input_kind)
    fail(ErrorKind::kData, std::string("features in ") + feats.string() + " are " +
                               dsp::feature_kind_name(index.kind) + ", config asks for " +
                               dsp::feature_kind_name(cfg.input_kind));

  const auto tr = train::load_segments(corpus, split, split.utterances(corpus, data::Split::kTrain), feats,
                                       cfg.tv_only);
  const auto dv = train::load_segments(corpus, split, split.utterances(corpus, data::Split::kDev), feats,
                                       cfg.tv_only);
  const auto meta = train::run_metadata(cfg, corpus, split, tr);
  std::printf("train %zu segments, dev %zu segments, %zu targets, %d threads\n", tr.segments.size(),
              dv.segments.size(), tr.targets(), omp_get_max_threads());

  std::optional<train::Checkpoint> resume;
  train::TrainHooks hooks;
  if (!o.train_resume.empty()) {
    resume.emplace(train::load_checkpoint(o.train_resume));
    hooks.resume = &*resume;
    std::printf("resuming after epoch %d\n", resume->state.epoch);
  }
  const fs::path out = o.train_out;
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  const fs::path log_path = o.train_log.empty() ? fs::path(out.string() + ".log.csv") : fs::path(o.train_log);
  std::ofstream log(log_path, resume ? std::ios::app : std::ios::trunc);
  if (!log) fail(ErrorKind::kData, "cannot write " + log_path.string());
  if (!resume) log << "epoch,lr,train_mse,val_mse,best\n";

  auto t0 = std::chrono::steady_clock::now();
  hooks.on_epoch = [&](const train::EpochRecord& r) {
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("epoch %3d  lr %.2e  train %.5f  val %.5f%s  (%.1f s)\n", r.epoch, r.lr, r.train_mse,
                r.val_mse, r.best ? "  *" : "", secs);
    std::fflush(stdout);
    char line[160];
    std::snprintf(line, sizeof line, "%d,%.6g,%.8f,%.8f,%d\n", r.epoch, r.lr, r.train_mse, r.val_mse,
                  r.best ? 1 : 0);
    log << line << std::flush;
    return true;
  };
  const auto res = train::train_model(cfg, tr, dv, out, meta, hooks);
  std::printf("%s after epoch %d; best epoch %d (val %.5f); checkpoint %s\n",
              res.early_stopped ? "early stop" : "finished", res.state.epoch, res.state.best_epoch,
              res.state.best_val, out.c_str());
  return 0;
}

int cmd_eval(const Opts& o) {
  auto ck = train::load_checkpoint(o.eval_ckpt);
  const auto info = eval::model_info(ck);
  const auto split = data::SplitManifest::read(o.eval_manifest);
  const auto corpus = data::CorpusManifest::read(split.corpus_root);
  const fs::path feats = o.eval_feats.empty() ? default_feats(corpus.root, info.input_kind) : fs::path(o.eval_feats);
  eval::EvalOptions opt;
  opt.split = o.eval_split;
  data::parse_split(opt.split);
  opt.per_utterance = o.eval_per_utt;
  opt.label = o.eval_label.empty() ? fs::path(o.eval_ckpt).stem().string() : o.eval_label;

  std::vector<eval::EvalReport> rows;
  if (!o.eval_compare.empty()) rows = eval::read_csv(o.eval_compare);
  auto rep = eval::evaluate(ck, corpus, split, feats, opt);
  if (!rows.empty()) eval::compare_with(rep, rows.front());
  rows.push_back(rep);

  const auto text = eval::format_text(rows);
  std::fputs(text.c_str(), stdout);
  if (!o.eval_out.empty()) {
    write_text(o.eval_out + ".txt", text);
    write_text(o.eval_out + ".csv", eval::format_csv(rows));
  }
  return 0;
}

int cmd_infer(const Opts& o) {
  auto ck = train::load_checkpoint(o.inf_ckpt);
  const auto pred = eval::infer_file(ck, o.inf_wav);
  std::printf("%zu frames x %zu tracks\n", pred.tracks.frames, pred.names.size());
  if (!o.inf_csv.empty()) eval::write_tracks_csv(o.inf_csv, pred);
  if (!o.inf_svg.empty()) {
    std::vector<fs::path> files(o.inf_truth.begin(), o.inf_truth.end());
    const auto truth = eval::read_truth(files);
    std::vector<std::string> vars;
    std::stringstream ss(o.inf_vars);
    for (std::string v; std::getline(ss, v, ',');)
      if (!v.empty()) vars.push_back(v);
    write_text(o.inf_svg, eval::tracks_svg(pred, files.empty() ? nullptr : &truth, vars));
  }
  if (o.inf_csv.empty() && o.inf_svg.empty()) {
    std::printf("time");
    for (const auto& n : pred.names) std::printf(",%s", n.c_str());
    std::printf("\n");
    for (std::size_t f = 0; f < pred.tracks.frames; ++f) {
      std::printf("%.2f", double(f) / pred.tracks.frame_rate);
      for (std::size_t c = 0; c < pred.tracks.channels; ++c) std::printf(",%.6g", pred.tracks.at(f, c));
      std::printf("\n");
    }
  }
  return 0;
}

int cmd_gradcheck(const Opts& o) {
  auto cfg = nn::TcnConfig::reduced(o.gc_width, o.gc_targets, o.gc_targets == 6);
  nn::validate(cfg);
  nn::TcnModel<double> m(cfg);
  const int t_out = nn::tcn_output_frames(cfg, o.gc_frames);
  if (t_out < 1) fail(ErrorKind::kConfig, "--frames too small for the pooling window");
  nn::SplitMix64 rng(o.gc_seed);
  auto rand = [&](nn::Shape s) {
    std::vector<double> v(nn::shape_numel(s));
    for (auto& e : v) e = rng.normal();
    return nn::Tensor<double>::from(s, std::move(v));
  };
  const auto x = rand({std::size_t(o.gc_batch), std::size_t(o.gc_width), std::size_t(o.gc_frames)});
  const auto y = rand({std::size_t(o.gc_batch), std::size_t(o.gc_targets), std::size_t(t_out)});
  nn::GradCheckOptions opt;
  opt.samples = o.gc_samples;
  opt.seed = o.gc_seed;
  const auto t0 = std::chrono::steady_clock::now();
  const auto r = nn::grad_check(m, x, y, opt);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  const bool ok = r.max_rel_error < 1e-4;
  std::printf("gradcheck: %d parameters, %d resampled at ReLU kinks, max relative error %.3e at %s, %.2f s: %s\n",
              r.checked, r.skipped_kinks, r.max_rel_error, r.worst.c_str(), secs, ok ? "PASS" : "FAIL");
  return ok ? 0 : exit_code(ErrorKind::kNumeric);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acoustic-to-articulatory speech inversion toolkit"};
  app.require_subcommand(1);
  Opts o;

  auto* synth = app.add_subcommand("synth-data", "Generate a synthetic corpus");
  synth->add_option("--config", o.synth_config, "SynthConfig JSON (defaults when omitted)");
  synth->add_option("--out", o.synth_out, "Corpus directory")->required();

  auto* feat = app.add_subcommand("featurize", "Compute input features for a corpus");
  feat->add_option("--kind", o.feat_kind, "audspec, mspec or mfcc");
  feat->add_option("--in", o.feat_in, "Corpus directory")->required();
  feat->add_option("--out", o.feat_out, "Feature directory (default CORPUS/feats/KIND)");

  auto* split = app.add_subcommand("split", "Speaker-independent train/dev/test split");
  split->add_option("--seed", o.split_seed, "Shuffle seed");
  split->add_option("--ratios", o.split_ratios, "train,dev,test fractions");
  split->add_option("--corpus", o.split_corpus, "Corpus directory")->required();
  split->add_option("--out", o.split_out, "Split manifest (default CORPUS/split.json)");

  auto* tr = app.add_subcommand("train", "Train a model");
  tr->add_option("--config", o.train_config, "TrainConfig JSON")->required();
  tr->add_option("--manifest", o.train_manifest, "Split manifest")->required();
  tr->add_option("--feats", o.train_feats, "Feature directory (default CORPUS/feats/KIND)");
  tr->add_option("--out", o.train_out, "Checkpoint path")->required();
  tr->add_option("--log", o.train_log, "Per-epoch CSV log (default CKPT.log.csv)");
  tr->add_option("--resume", o.train_resume, "Continue from a checkpoint (e.g. CKPT.last)");

  auto* ev = app.add_subcommand("eval", "Score a checkpoint on a split");
  ev->add_option("--ckpt", o.eval_ckpt, "Checkpoint")->required();
  ev->add_option("--manifest", o.eval_manifest, "Split manifest")->required();
  ev->add_option("--feats", o.eval_feats, "Feature directory (default CORPUS/feats/KIND)");
  ev->add_option("--split", o.eval_split, "train, dev or test");
  ev->add_option("--compare", o.eval_compare, "Report CSV to compare against (delta vs its first row)");
  ev->add_option("--out", o.eval_out, "Write OUT.txt and OUT.csv");
  ev->add_option("--label", o.eval_label, "Row label (default checkpoint stem)");
  ev->add_flag("--per-utterance", o.eval_per_utt, "Average per-utterance PPMC instead of pooling frames");

  auto* inf = app.add_subcommand("infer", "Estimate trajectories for one recording");
  inf->add_option("--ckpt", o.inf_ckpt, "Checkpoint")->required();
  inf->add_option("--wav", o.inf_wav, "Input WAV")->required();
  inf->add_option("--svg", o.inf_svg, "Plot output");
  inf->add_option("--csv", o.inf_csv, "Track CSV output");
  inf->add_option("--truth", o.inf_truth, "Ground-truth feature files for the plot");
  inf->add_option("--vars", o.inf_vars, "Comma-separated variables to plot (default all)");

  auto* gc = app.add_subcommand("gradcheck", "Finite-difference check of a reduced model (f64)");
  gc->add_option("--width", o.gc_width, "Channel width");
  gc->add_option("--frames", o.gc_frames, "Input frames");
  gc->add_option("--batch", o.gc_batch, "Batch size");
  gc->add_option("--samples", o.gc_samples, "Parameter elements compared");
  gc->add_option("--targets", o.gc_targets, "Output targets (6, 9 or 12)");
  gc->add_option("--seed", o.gc_seed, "Sampling seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : exit_code(ErrorKind::kConfig);
  }

  try {
    set_threads();
    if (*synth) return cmd_synth(o);
    if (*feat) return cmd_featurize(o);
    if (*split) return cmd_split(o);
    if (*tr) return cmd_train(o);
    if (*ev) return cmd_eval(o);
    if (*inf) return cmd_infer(o);
    if (*gc) return cmd_gradcheck(o);
  } catch (const Error& e) {
    std::fprintf(stderr, "sinv: error: %s\n", e.what());
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    std::fprintf(stderr, "sinv: error: %s\n", e.what());
    return 1;
  }
  return 0;
}
