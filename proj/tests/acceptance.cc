// Acceptance suite: one PASS/FAIL line per criterion.
//
//   acceptance SINV_CLI WORKDIR [N ...]
//
// Criteria 1-6 run in-process; 7-9 drive the command-line tool end to end
// in single-threaded mode. With N arguments only those criteria run.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <regex>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "sinv/data/corpus.h"
#include "sinv/data/synth.h"
#include "sinv/dsp/audspec.h"
#include "sinv/dsp/spectral.h"
#include "sinv/dsp/wave.h"
#include "sinv/error.h"
#include "sinv/eval/evaluate.h"
#include "sinv/eval/ppmc.h"
#include "sinv/nn/gradcheck.h"
#include "sinv/nn/ops.h"
#include "sinv/nn/tcn.h"
#include "sinv/source/app.h"
#include "sinv/train/checkpoint.h"
#include "sinv/tv/geometry.h"

namespace fs = std::filesystem;
using namespace sinv;

namespace {

// End-to-end thresholds, frozen after the calibration run.
constexpr double kMinAvgTvPpmc = 0.5;
constexpr double kMinControlMargin = 0.3;
constexpr double kEndToEndBudgetSeconds = 7200;

struct Result {
  bool pass = true;
  std::string detail;
  void expect(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail += (detail.empty() ? "" : "; ") + std::string("failed: ") + what;
    }
  }
  void note(const std::string& s) { detail += (detail.empty() ? "" : "; ") + s; }
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(is), {});
}

nn::Tensor<double> random_tensor(nn::Shape s, std::uint64_t seed) {
  nn::SplitMix64 rng(seed);
  std::vector<double> v(nn::shape_numel(s));
  for (auto& x : v) x = rng.normal();
  return nn::Tensor<double>::from(std::move(s), std::move(v));
}

double median(std::vector<float> v) {
  std::sort(v.begin(), v.end());
  return v.size() % 2 ? v[v.size() / 2] : 0.5 * (v[v.size() / 2 - 1] + v[v.size() / 2]);
}

// ---------------------------------------------------------------------------
// 1-6: component contracts

Result gradient_correctness() {
  Result r;
  const auto t0 = std::chrono::steady_clock::now();
  nn::TcnModel<double> m(nn::TcnConfig::reduced(8, 9));
  const auto x = random_tensor({2, 8, 25}, 31);
  const auto y = random_tensor({2, 9, 20}, 32);
  nn::GradCheckOptions opt;
  opt.samples = 200;
  const auto g = nn::grad_check(m, x, y, opt);
  const double secs = seconds_since(t0);
  r.expect(g.checked >= 200, "at least 200 sampled parameters");
  r.expect(g.max_rel_error < 1e-4, "max relative error < 1e-4");
  r.expect(secs < 60, "runtime < 60 s");
  r.note("max rel error " + fmt("%.2e", g.max_rel_error) + " over " + std::to_string(g.checked) +
         " parameters in " + fmt("%.2f", secs) + " s");
  return r;
}

Result shape_contract() {
  Result r;
  for (auto [n, tv_only] : {std::pair{6, true}, {9, false}, {12, false}}) {
    nn::TcnConfig cfg;
    cfg.n_targets = n;
    cfg.tv_only = tv_only;
    nn::TcnModel<float> m(cfg);
    std::vector<float> v(2 * 128 * 250, 0.25f);
    const auto y = m.forward(nn::Tensor<float>::from({2, 128, 250}, v), nn::Mode::kEval);
    r.expect(y.shape() == nn::Shape{2, std::size_t(n), 200}, "(2,128,250) -> (2," + std::to_string(n) + ",200)");
  }
  // Counting oracle: convs (cin, cout, k) with bias; BatchNorm after all but the head.
  const int convs[9][3] = {{128, 128, 1}, {128, 256, 1}, {256, 256, 1}, {256, 256, 3}, {256, 256, 3},
                           {256, 256, 3}, {256, 256, 1}, {256, 128, 1}, {128, 9, 1}};
  std::size_t expect = 0;
  for (int i = 0; i < 9; ++i) {
    expect += std::size_t(convs[i][0]) * convs[i][1] * convs[i][2] + convs[i][1];
    if (i < 8) expect += 2 * std::size_t(convs[i][1]);
  }
  const std::size_t got = nn::TcnModel<float>(nn::TcnConfig{}).parameter_count();
  r.expect(expect == 809353 && got == expect, "parameter count 809353");

  // Receptive field of the dilated stack by perturbation.
  const int n = 250, t0 = 120, ch = 2, dil[3] = {1, 4, 16};
  std::vector<nn::Tensor<double>> ws;
  for (int i = 0; i < 3; ++i) {
    nn::SplitMix64 rng(50 + i);
    std::vector<double> w(ch * ch * 3);
    for (auto& v : w) v = 0.1 + rng.uniform();
    ws.push_back(nn::Tensor<double>::from({ch, ch, 3}, w));
  }
  auto run = [&](const nn::Tensor<double>& x) {
    nn::Tensor<double> h = x;
    for (int i = 0; i < 3; ++i) h = nn::conv1d(h, ws[i], nn::Tensor<double>(), dil[i]);
    return h;
  };
  const auto x = random_tensor({1, ch, n}, 6);
  const auto base = run(x);
  auto xp = x.detach();
  xp.values()[t0] += 1.0;
  const auto pert = run(xp);
  int lo = n, hi = -1;
  for (int i = 0; i < ch * n; ++i)
    if (pert.values()[i] != base.values()[i]) {
      lo = std::min(lo, i % n);
      hi = std::max(hi, i % n);
    }
  r.expect(hi - lo + 1 == 43 && lo == t0 - 21, "43-frame receptive field");
  r.note("shapes ok for 6/9/12 targets, " + std::to_string(got) + " parameters, receptive field " +
         std::to_string(hi - lo + 1) + " frames");
  return r;
}

Result ppmc_oracle() {
  Result r;
  nn::SplitMix64 rng(4242);
  double worst = 0, worst_sym = 0, worst_aff = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 2 + rng.below(499);
    std::vector<double> x(n), y(n);
    const double rho = rng.uniform(-1, 1), scale = std::pow(10.0, rng.uniform(-2, 2));
    for (std::size_t i = 0; i < n; ++i) {
      x[i] = scale * rng.normal();
      y[i] = rho * x[i] / scale + rng.normal();
    }
    long double mx = 0, my = 0;
    for (std::size_t i = 0; i < n; ++i) mx += x[i], my += y[i];
    mx /= n, my /= n;
    long double sxy = 0, sxx = 0, syy = 0;
    for (std::size_t i = 0; i < n; ++i) {
      sxy += (x[i] - mx) * (y[i] - my);
      sxx += (x[i] - mx) * (x[i] - mx);
      syy += (y[i] - my) * (y[i] - my);
    }
    const double direct = double(sxy / std::sqrt(sxx * syy));
    const double p = eval::ppmc(x, y).value;
    worst = std::max(worst, std::abs(p - direct));
    worst_sym = std::max(worst_sym, std::abs(eval::ppmc(y, x).value - p));
    const double a = rng.uniform(0.1, 10), b = rng.uniform(-5, 5);
    std::vector<double> xa(n);
    for (std::size_t i = 0; i < n; ++i) xa[i] = a * x[i] + b;
    worst_aff = std::max(worst_aff, std::abs(eval::ppmc(xa, y).value - p));
  }
  r.expect(worst < 1e-12, "direct formula within 1e-12");
  r.expect(worst_sym < 1e-12, "symmetry within 1e-12");
  r.expect(worst_aff < 1e-12, "affine invariance within 1e-12");
  const std::vector<double> a = {1, 2, 3}, b = {1, 2, 4};
  r.expect(std::abs(eval::ppmc(a, b).value - 0.98198) < 5e-6, "[1,2,3] vs [1,2,4] = 0.98198");
  r.note("1000 pairs, max |diff| " + fmt("%.1e", worst) + ", symmetry " + fmt("%.1e", worst_sym) +
         ", affine " + fmt("%.1e", worst_aff));
  return r;
}

Result dsp_contracts() {
  Result r;
  auto seg_of = [](const dsp::WaveBuffer& w) { return dsp::segment_and_pad(w).at(0); };
  auto tone = [](double hz, double amp) {
    dsp::WaveBuffer w{std::vector<float>(32000), 16000};
    for (std::size_t i = 0; i < w.samples.size(); ++i)
      w.samples[i] = float(amp * std::sin(2 * M_PI * hz * double(i) / 16000.0));
    return w;
  };
  const auto silence = seg_of(dsp::WaveBuffer{std::vector<float>(32000, 0.0f), 16000});
  const auto a = dsp::auditory_spectrogram(silence);
  const auto m = dsp::melspectrogram(silence);
  const auto c = dsp::mfcc(silence);
  r.expect(a.frames == 250 && a.channels == 128, "audspec 250x128");
  r.expect(m.frames == 250 && m.channels == 40, "mspec 250x40");
  r.expect(c.frames == 200 && c.channels == 13, "mfcc 200x13");
  r.expect(std::all_of(a.data.begin(), a.data.end(), [](float v) { return v == 0.0f; }), "silence audspec is 0");

  const auto t = seg_of(tone(1000, 0.3));
  const auto ta = dsp::auditory_spectrogram(t);
  const auto cf = dsp::audspec_cf();
  std::size_t want_a = 0;
  for (std::size_t j = 1; j < cf.size(); ++j)
    if (std::abs(std::log(cf[j] / 1000.0)) < std::abs(std::log(cf[want_a] / 1000.0))) want_a = j;
  std::vector<double> mean_a(128, 0.0), mean_m(40, 0.0);
  for (std::size_t f = 25; f < ta.frames; ++f)
    for (std::size_t j = 0; j < 128; ++j) mean_a[j] += ta.at(f, j);
  const auto arg_a = std::size_t(std::max_element(mean_a.begin(), mean_a.end()) - mean_a.begin());
  r.expect(std::abs(long(arg_a) - long(want_a)) <= 1, "1 kHz audspec peak at the nearest CF channel");

  const double top = 2595.0 * std::log10(1.0 + 8000.0 / 700.0);
  std::size_t want_m = 0;
  double best = 1e9;
  for (std::size_t b = 0; b < 40; ++b) {
    const double hz = 700.0 * (std::pow(10.0, top * double(b + 1) / 41.0 / 2595.0) - 1.0);
    if (std::abs(hz - 1000.0) < best) best = std::abs(hz - 1000.0), want_m = b;
  }
  const auto tm = dsp::melspectrogram(t);
  for (std::size_t f = 0; f < tm.frames; ++f)
    for (std::size_t b = 0; b < 40; ++b) mean_m[b] += tm.at(f, b);
  const auto arg_m = std::size_t(std::max_element(mean_m.begin(), mean_m.end()) - mean_m.begin());
  r.expect(arg_m == want_m, "1 kHz mel peak at the nearest band");

  nn::SplitMix64 rng(8);
  dsp::FeatureMatrix fm(300, 7, 100.0, dsp::FeatureKind::kMspec);
  for (auto& v : fm.data) v = float(5.0 + 3.0 * rng.normal());
  const auto z1 = dsp::znorm_utterance(fm);
  const auto z2 = dsp::znorm_utterance(z1);
  double worst = 0;
  for (std::size_t i = 0; i < z1.data.size(); ++i) worst = std::max(worst, double(std::abs(z1.data[i] - z2.data[i])));
  r.expect(worst < 1e-6, "z-norm idempotent within 1e-6");
  r.note("audspec peak ch " + std::to_string(arg_a) + " (CF " + fmt("%.0f", cf[arg_a]) + " Hz), mel band " +
         std::to_string(arg_m) + ", z-norm drift " + fmt("%.1e", worst));
  return r;
}

Result source_sanity() {
  Result r;
  constexpr int fs_hz = 16000;
  const auto silence = source::app_analyze(dsp::WaveBuffer{std::vector<float>(16000, 0.0f), fs_hz});
  bool zero = true;
  for (std::size_t i = 0; i < silence.frames(); ++i)
    zero = zero && silence.periodicity[i] == 0 && silence.aperiodicity[i] == 0 && silence.pitch[i] == 0;
  r.expect(zero && silence.frames() == 100, "silence gives all-zero tracks");

  dsp::WaveBuffer saw{std::vector<float>(fs_hz), fs_hz};
  for (std::size_t i = 0; i < saw.samples.size(); ++i)
    saw.samples[i] = float(0.3 * (2.0 * std::fmod(220.0 * double(i) / fs_hz, 1.0) - 1.0));
  const auto st = source::app_analyze(saw);
  const double f0 = median(st.pitch), per = median(st.periodicity);
  r.expect(std::abs(f0 - 220) <= 11 && per > 0.8, "sawtooth pitch 220 +-5% and periodicity > 0.8");

  dsp::WaveBuffer noise{std::vector<float>(fs_hz), fs_hz};
  nn::SplitMix64 rng(17);
  for (auto& v : noise.samples) v = float(0.3 * rng.normal());
  const auto nt = source::app_analyze(noise);
  std::size_t unvoiced = 0;
  for (float p : nt.pitch) unvoiced += p == 0.0f;
  r.expect(median(nt.periodicity) < 0.3 && median(nt.aperiodicity) > 0.5 &&
               double(unvoiced) > 0.8 * double(nt.frames()),
           "noise periodicity < 0.3, aperiodicity > 0.5, > 80% unvoiced");

  data::SynthConfig sc;
  sc.voiced_fraction = 1;
  sc.pitch_base_min = sc.pitch_base_max = 120;
  sc.pitch_modulation = 0;
  double worst_f0 = 0;
  for (int s = 0; s < 12; s += 3) {
    const auto u = data::generate_utterance(sc, s, 0);
    const auto vt = source::app_analyze(u.wave);
    worst_f0 = std::max(worst_f0, std::abs(median(vt.pitch) - 120.0));
  }
  r.expect(worst_f0 <= 6.0, "synthetic voiced 120 Hz pitch within 5%");

  auto mixed = saw;
  for (std::size_t i = 0; i < mixed.samples.size(); ++i) mixed.samples[i] += 0.05f * noise.samples[i];
  const auto ref = source::app_analyze(mixed);
  double drift = 0;
  for (double alpha : {0.1, 10.0}) {
    auto s = mixed;
    for (auto& v : s.samples) v = float(v * alpha);
    const auto t = source::app_analyze(s);
    for (std::size_t i = 0; i < t.frames(); ++i) {
      drift = std::max({drift, double(std::abs(t.periodicity[i] - ref.periodicity[i])),
                        double(std::abs(t.aperiodicity[i] - ref.aperiodicity[i])),
                        double(std::abs(t.pitch[i] - ref.pitch[i]))});
    }
  }
  r.expect(drift < 1e-3, "amplitude invariance within 1e-3");
  r.note("sawtooth " + fmt("%.1f", f0) + " Hz per " + fmt("%.2f", per) + ", noise per " +
         fmt("%.2f", median(nt.periodicity)) + ", 120 Hz worst error " + fmt("%.2f", worst_f0) +
         " Hz, gain drift " + fmt("%.1e", drift));
  return r;
}

Result tv_geometry() {
  Result r;
  auto arch = [](double dx, double dy) {
    tv::PalateTrace p;
    for (int i = 0; i < 12; ++i)
      p.points.push_back({10.0 - 50.0 * i / 11.0 + dx, 12.0 + 8.0 * std::sin(M_PI * i / 11.0) + dy});
    return p;
  };
  auto frame = [](double t, double dx, double dy) {
    tv::PelletFrame f;
    f.time = t;
    auto put = [&](const char* n, double x, double y) { f.points[n] = {x + dx, y + dy}; };
    put("UL", 14, 8 + t);
    put("LL", 13, -4 - t);
    put("TT", 4, 6 + 3 * t);
    put("TB", -20, 9 - t);
    put("LI", 9, -9);
    put("UI", 9, 2);
    put("TR", -30, 2);
    return f;
  };
  double worst = 0;
  nn::SplitMix64 rng(12);
  for (int k = 0; k < 10; ++k) {
    const double dx = rng.uniform(-20, 20), dy = rng.uniform(-20, 20);
    std::vector<tv::PelletFrame> a, b;
    for (int i = 0; i < 30; ++i) {
      a.push_back(frame(0.01 * i, 0, 0));
      b.push_back(frame(0.01 * i, dx, dy));
    }
    const auto ta = tv::compute_tvs(a, arch(0, 0), tv::TvScheme::kHprc9);
    const auto tb = tv::compute_tvs(b, arch(dx, dy), tv::TvScheme::kHprc9);
    for (std::size_t c = 0; c < ta.tracks.size(); ++c)
      for (std::size_t t = 0; t < ta.frames(); ++t) worst = std::max(worst, std::abs(ta.tracks[c][t] - tb.tracks[c][t]));
  }
  r.expect(worst < 1e-9, "translation invariance within 1e-9");

  auto f = frame(0, 0, 0);
  f.points["UL"] = {0, 12};
  f.points["LL"] = {0, 4};
  const auto hand = tv::compute_tvs({f}, arch(0, 0), tv::TvScheme::kHprc9);
  r.expect(std::abs(hand.track("LA")[0] - 8.0) < 1e-12, "LA hand case = 8");
  const std::vector<tv::Point2> seg = {{0, 0}, {2, 0}};
  const auto h1 = tv::point_to_polyline({1, 1}, seg);
  const auto h2 = tv::point_to_polyline({3, 1}, seg);
  r.expect(std::abs(h1.distance - 1.0) < 1e-12 && std::abs(h1.arc_position - 1.0) < 1e-12, "point over a segment");
  r.expect(std::abs(h2.distance - std::sqrt(2.0)) < 1e-12 && std::abs(h2.arc_position - 2.0) < 1e-12, "point past the end");

  const auto pal = arch(0, 0);
  bool lipschitz = true;
  for (int trial = 0; trial < 1000; ++trial) {
    const tv::Point2 p{rng.uniform(-45, 15), rng.uniform(-5, 30)};
    const tv::Point2 q{p.x + rng.uniform(-2, 2), p.y + rng.uniform(-2, 2)};
    const double d = std::abs(tv::point_to_polyline(q, pal.points).distance -
                              tv::point_to_polyline(p, pal.points).distance);
    lipschitz = lipschitz && d <= std::hypot(q.x - p.x, q.y - p.y) + 1e-12;
  }
  r.expect(lipschitz, "1-Lipschitz over 1000 perturbations");
  r.note("translation drift " + fmt("%.1e", worst) + ", hand cases exact, Lipschitz holds");
  return r;
}

// ---------------------------------------------------------------------------
// 7-9: command-line pipeline

class Pipeline {
 public:
  Pipeline(std::string cli, fs::path work) : cli_(std::move(cli)), work_(std::move(work)) {
    fs::create_directories(work_);
  }

  // Runs `sinv ARGS` single-threaded, logging to WORKDIR/LOG.
  bool run(const std::string& args, const std::string& log) {
    const auto log_path = work_ / log;
    const std::string cmd = "SINV_NUM_THREADS=1 '" + cli_ + "' " + args + " > '" + log_path.string() + "' 2>&1";
    const int rc = std::system(cmd.c_str());
    if (rc != 0) {
      std::fprintf(stderr, "command failed (%d): %s\n%s\n", rc, cmd.c_str(), slurp(log_path).c_str());
      return false;
    }
    return true;
  }
  const fs::path& work() const { return work_; }

 private:
  std::string cli_;
  fs::path work_;
};

void write_file(const fs::path& p, const std::string& s) {
  std::ofstream os(p, std::ios::binary);
  os << s;
}

// The 12-speaker corpus, its split and audspec features, shared by 7 and 8.
// Criterion 7 always rebuilds it so the runtime budget covers every stage.
bool prepare_corpus(Pipeline& p, double* seconds, bool rebuild) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto c = p.work() / "corpus";
  if (!rebuild && fs::exists(c / "split.json") && fs::exists(c / "feats" / "audspec" / "index.json")) {
    *seconds = 0;
    return true;
  }
  fs::remove_all(c);
  write_file(p.work() / "synth.json", R"({"n_speakers": 12, "utterances_per_speaker": 40, "seed": 7})");
  const bool ok = p.run("synth-data --config '" + (p.work() / "synth.json").string() + "' --out '" + c.string() + "'",
                        "synth.log") &&
                  p.run("featurize --kind audspec --in '" + c.string() + "'", "featurize.log") &&
                  p.run("split --corpus '" + c.string() + "' --seed 1 --ratios 0.6667,0.1667,0.1667", "split.log");
  *seconds = seconds_since(t0);
  return ok;
}

std::string train_config(bool tv_only, int max_epochs) {
  return std::string(R"({"input_kind": "audspec", "tv_only": )") + (tv_only ? "true" : "false") +
         R"(, "lr": 0.001, "batch": 16, "max_epochs": )" + std::to_string(max_epochs) +
         R"(, "patience": 10, "lr_step_epochs": 5, "gamma": 0.5, "seed": 1})";
}

bool train_and_eval(Pipeline& p, const std::string& name, bool tv_only, const std::string& label,
                    const std::string& compare = "") {
  const auto cfg = p.work() / (name + ".json");
  write_file(cfg, train_config(tv_only, 60));
  const auto manifest = (p.work() / "corpus" / "split.json").string();
  const auto ckpt = (p.work() / "ckpt" / (name + ".ckpt")).string();
  if (!fs::exists(ckpt) &&
      !p.run("train --config '" + cfg.string() + "' --manifest '" + manifest + "' --out '" + ckpt + "'",
             "train_" + name + ".log"))
    return false;
  std::string args = "eval --ckpt '" + ckpt + "' --manifest '" + manifest + "' --label " + label + " --out '" +
                     (p.work() / "reports" / name).string() + "'";
  if (!compare.empty()) args += " --compare '" + compare + "'";
  return p.run(args, "eval_" + name + ".log");
}

Result end_to_end(Pipeline& p) {
  Result r;
  double prep = 0;
  if (!prepare_corpus(p, &prep, true)) {
    r.expect(false, "corpus preparation");
    return r;
  }
  const auto t0 = std::chrono::steady_clock::now();
  fs::remove_all(p.work() / "ckpt" / "sf.ckpt");
  if (!train_and_eval(p, "sf", false, "TCN-SF-Audspec")) {
    r.expect(false, "training and evaluation");
    return r;
  }
  const double total = prep + seconds_since(t0);
  const auto rows = eval::read_csv(p.work() / "reports" / "sf.csv");
  const auto& rep = rows.back();
  const auto ck = train::load_checkpoint(p.work() / "ckpt" / "sf.ckpt");
  const auto log = slurp(p.work() / "ckpt" / "sf.ckpt.log.csv");
  const auto epochs = std::count(log.begin(), log.end(), '\n') - 1;
  r.expect(epochs <= 60, "at most 60 epochs");
  r.expect(rep.avg_tvs >= kMinAvgTvPpmc, "avg TV PPMC >= " + fmt("%.2f", kMinAvgTvPpmc));
  r.expect(rep.avg_tvs - rep.control_avg_tvs >= kMinControlMargin,
           "margin over the shuffled control >= " + fmt("%.2f", kMinControlMargin));
  r.expect(total <= kEndToEndBudgetSeconds, "runtime within 2 h");
  r.note("avg TV PPMC " + fmt("%.4f", rep.avg_tvs) + ", control " + fmt("%.4f", rep.control_avg_tvs) + ", " +
         std::to_string(rep.frames) + " test frames, " + std::to_string(epochs) + " epochs (best " +
         std::to_string(ck.state.epoch) + "), " + fmt("%.0f", total) + " s");
  return r;
}

Result ablation(Pipeline& p) {
  Result r;
  double prep = 0;
  if (!prepare_corpus(p, &prep, false)) {
    r.expect(false, "corpus preparation");
    return r;
  }
  const auto reports = p.work() / "reports";
  fs::remove_all(p.work() / "ckpt" / "tv.ckpt");
  const bool ok = train_and_eval(p, "tv", true, "TCN-Audspec") &&
                  train_and_eval(p, "sf", false, "TCN-SF-Audspec", (reports / "tv.csv").string());
  if (!ok) {
    r.expect(false, "both runs complete");
    return r;
  }
  const auto text = slurp(reports / "sf.txt");
  const auto csv = slurp(reports / "sf.csv");
  for (const char* col : {"LA", "LP", "TBCL", "TBCD", "TTCL", "TTCD", "Ap.", "Per.", "Pitch", "AVG. TVs", "AVG. all"})
    r.expect(text.find(col) != std::string::npos, std::string("column ") + col);
  std::smatch m;
  const bool has_delta = std::regex_search(text, m, std::regex(R"(TCN-SF-Audspec[^\n]*\d\.\d{4} \((-?\d+\.\d)%\))"));
  r.expect(has_delta, "delta column in (x.x%) form");
  const auto rows = eval::read_csv(reports / "sf.csv");
  r.expect(rows.size() == 2 && !rows[0].has_source() && rows[1].has_source(), "TV-only and SF rows");
  double avg = 0;
  for (std::size_t c = 0; c < rows.back().tv_count; ++c) avg += rows.back().ppmc[c];
  avg /= double(rows.back().tv_count);
  r.expect(std::abs(avg - rows.back().avg_tvs) < 1e-6, "AVG. TVs recomputes from the listed values");

  // Regenerate the reports from the stored checkpoints and compare bytes.
  const auto manifest = (p.work() / "corpus" / "split.json").string();
  const bool again =
      p.run("eval --ckpt '" + (p.work() / "ckpt" / "tv.ckpt").string() + "' --manifest '" + manifest +
                "' --label TCN-Audspec --out '" + (reports / "tv_again").string() + "'",
            "eval_tv_again.log") &&
      p.run("eval --ckpt '" + (p.work() / "ckpt" / "sf.ckpt").string() + "' --manifest '" + manifest +
                "' --label TCN-SF-Audspec --compare '" + (reports / "tv_again.csv").string() + "' --out '" +
                (reports / "sf_again").string() + "'",
            "eval_sf_again.log");
  r.expect(again && slurp(reports / "sf_again.txt") == text && slurp(reports / "sf_again.csv") == csv,
           "report regenerates bit-identically");
  if (has_delta) r.note("SF vs TV-only delta (" + m[1].str() + "%)");
  r.note("AVG. TVs TV-only " + fmt("%.4f", rows[0].avg_tvs) + ", SF " + fmt("%.4f", rows[1].avg_tvs));
  return r;
}

Result determinism(Pipeline& p) {
  Result r;
  std::vector<std::string> reports, ckpts, lasts;
  for (int run = 0; run < 2; ++run) {
    const auto dir = p.work() / ("det" + std::to_string(run));
    fs::remove_all(dir);
    fs::create_directories(dir);
    write_file(dir / "synth.json",
               R"({"n_speakers": 4, "utterances_per_speaker": 4, "min_duration": 1.0, "max_duration": 2.4, "seed": 7})");
    write_file(dir / "train.json",
               R"({"input_kind": "audspec", "batch": 4, "max_epochs": 5, "patience": 10, "seed": 3})");
    const auto c = (dir / "corpus").string();
    const bool ok =
        p.run("synth-data --config '" + (dir / "synth.json").string() + "' --out '" + c + "'", "det_synth.log") &&
        p.run("featurize --kind audspec --in '" + c + "'", "det_feat.log") &&
        p.run("split --corpus '" + c + "' --seed 2 --ratios 0.5,0.25,0.25", "det_split.log") &&
        p.run("train --config '" + (dir / "train.json").string() + "' --manifest '" + c + "/split.json' --out '" +
                  (dir / "m.ckpt").string() + "'",
              "det_train.log") &&
        p.run("eval --ckpt '" + (dir / "m.ckpt").string() + "' --manifest '" + c + "/split.json' --out '" +
                  (dir / "report").string() + "'",
              "det_eval.log");
    if (!ok) {
      r.expect(false, "pipeline run " + std::to_string(run + 1));
      return r;
    }
    reports.push_back(slurp(dir / "report.txt") + slurp(dir / "report.csv"));
    ckpts.push_back(slurp(dir / "m.ckpt"));
    lasts.push_back(slurp(dir / "m.ckpt.last"));
  }
  const auto log = slurp(p.work() / "det1" / "m.ckpt.log.csv");
  r.expect(std::count(log.begin(), log.end(), '\n') == 6, "5 epochs trained");
  r.expect(!reports[0].empty() && reports[0] == reports[1], "byte-identical reports");
  r.expect(!ckpts[0].empty() && ckpts[0] == ckpts[1] && lasts[0] == lasts[1], "byte-identical checkpoints");
  r.note("reports " + std::to_string(reports[0].size()) + " bytes, checkpoint " + std::to_string(ckpts[0].size()) +
         " bytes, identical across runs");
  return r;
}

}  // namespace

int main(int argc, char** argv) {
  if (argc < 3) {
    std::fprintf(stderr, "usage: %s SINV_CLI WORKDIR [criterion ...]\n", argv[0]);
    return 2;
  }
  Pipeline pipe(argv[1], argv[2]);
  std::set<int> only;
  for (int i = 3; i < argc; ++i) only.insert(std::atoi(argv[i]));

  const std::vector<std::pair<std::string, std::function<Result()>>> criteria = {
      {"gradient correctness", gradient_correctness},
      {"shape and architecture contract", shape_contract},
      {"PPMC oracle equivalence", ppmc_oracle},
      {"DSP contracts", dsp_contracts},
      {"source-feature sanity", source_sanity},
      {"TV geometry", tv_geometry},
      {"end-to-end synthetic inversion", [&] { return end_to_end(pipe); }},
      {"ablation harness fidelity", [&] { return ablation(pipe); }},
      {"determinism", [&] { return determinism(pipe); }},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = int(i) + 1;
    if (!only.empty() && !only.count(id)) continue;
    Result r;
    try {
      r = criteria[i].second();
    } catch (const std::exception& e) {
      r.expect(false, std::string("exception: ") + e.what());
    }
    failed += !r.pass;
    std::printf("%s criterion %d (%s): %s\n", r.pass ? "PASS" : "FAIL", id, criteria[i].first.c_str(),
                r.detail.c_str());
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
