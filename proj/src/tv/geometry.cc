// tv/geometry.cc

#include "sinv/tv/geometry.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>

#include "sinv/error.h"

namespace sinv::tv {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

double dist(Point2 a, Point2 b) { return std::hypot(a.x - b.x, a.y - b.y); }
Point2 mid(Point2 a, Point2 b) { return {0.5 * (a.x + b.x), 0.5 * (a.y + b.y)}; }
bool finite(Point2 p) { return std::isfinite(p.x) && std::isfinite(p.y); }

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) {
    const auto b = cell.find_first_not_of(" \t\r");
    const auto e = cell.find_last_not_of(" \t\r");
    out.push_back(b == std::string::npos ? "" : cell.substr(b, e - b + 1));
  }
  return out;
}

double parse_number(const std::string& s, const std::string& where) {
  if (s == "nan" || s == "NaN" || s == "NA" || s.empty()) return kNaN;
  try {
    std::size_t used = 0;
    double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    fail(ErrorKind::kData, where + ": bad number '" + s + "'");
  }
}

}  // namespace

void PalateTrace::validate() const {
  if (points.size() < 8)
    fail(ErrorKind::kData, "palate trace needs at least 8 points, got " +
                               std::to_string(points.size()));
  for (const auto& p : points)
    if (!finite(p)) fail(ErrorKind::kData, "palate trace has a non-finite point");
  const bool inc = points[1].x > points[0].x;
  for (std::size_t i = 1; i < points.size(); ++i) {
    const double d = points[i].x - points[i - 1].x;
    if (inc ? !(d > 0) : !(d < 0))
      fail(ErrorKind::kData, "palate trace x must be strictly monotone");
  }
}

std::vector<double> PalateTrace::arc_lengths() const {
  std::vector<double> s(points.size(), 0.0);
  for (std::size_t i = 1; i < points.size(); ++i)
    s[i] = s[i - 1] + dist(points[i - 1], points[i]);
  return s;
}

double PalateTrace::length() const { return arc_lengths().back(); }

TvScheme parse_scheme(const std::string& s) {
  if (s == "xrmb6") return TvScheme::kXrmb6;
  if (s == "hprc9") return TvScheme::kHprc9;
  fail(ErrorKind::kConfig, "unknown TV scheme '" + s + "' (expected xrmb6 or hprc9)");
}

const char* scheme_name(TvScheme s) { return s == TvScheme::kXrmb6 ? "xrmb6" : "hprc9"; }

std::vector<std::string> tv_names(TvScheme s) {
  std::vector<std::string> n = {"LA", "LP", "TBCL", "TBCD", "TTCL", "TTCD"};
  if (s == TvScheme::kHprc9) n.insert(n.end(), {"JA", "TMCL", "TMCD"});
  return n;
}

std::size_t tv_count(TvScheme s) { return s == TvScheme::kXrmb6 ? 6 : 9; }

std::vector<std::string> required_pellets(TvScheme s) {
  if (s == TvScheme::kXrmb6) return {"UL", "LL", "T1", "T3"};
  return {"UL", "LL", "TT", "TB", "LI", "UI"};
}

PolylineHit point_to_polyline(Point2 p, const std::vector<Point2>& poly) {
  require(!poly.empty(), "point_to_polyline: empty polyline");
  PolylineHit best{dist(p, poly[0]), 0.0};
  double arc = 0;
  for (std::size_t i = 1; i < poly.size(); ++i) {
    const Point2 a = poly[i - 1], b = poly[i];
    const double dx = b.x - a.x, dy = b.y - a.y;
    const double len2 = dx * dx + dy * dy;
    const double len = std::sqrt(len2);
    double u = len2 > 0 ? ((p.x - a.x) * dx + (p.y - a.y) * dy) / len2 : 0.0;
    u = std::clamp(u, 0.0, 1.0);
    const double d = std::hypot(p.x - (a.x + u * dx), p.y - (a.y + u * dy));
    // Strict improvement only, so equal distances keep the earlier hit.
    if (d < best.distance) best = {d, arc + u * len};
    arc += len;
  }
  return best;
}

const std::vector<double>& TrajectorySet::track(const std::string& name) const {
  for (std::size_t i = 0; i < names.size(); ++i)
    if (names[i] == name) return tracks[i];
  fail(ErrorKind::kInvalidArgument, "no trajectory named " + name);
}

dsp::FeatureMatrix TrajectorySet::to_matrix() const {
  dsp::FeatureMatrix fm(frames(), names.size(), frame_rate, dsp::FeatureKind::kTargets);
  for (std::size_t c = 0; c < names.size(); ++c)
    for (std::size_t t = 0; t < frames(); ++t) fm.at(t, c) = float(tracks[c][t]);
  return fm;
}

TrajectorySet compute_tvs(const std::vector<PelletFrame>& frames,
                          const PalateTrace& palate, TvScheme scheme) {
  if (frames.empty()) fail(ErrorKind::kData, "compute_tvs: no frames");
  palate.validate();
  TrajectorySet out;
  out.names = tv_names(scheme);
  out.tracks.assign(out.names.size(), std::vector<double>(frames.size(), kNaN));
  out.valid_frames = frames.size();
  if (frames.size() > 1) {
    std::vector<double> dt;
    for (std::size_t i = 1; i < frames.size(); ++i)
      dt.push_back(frames[i].time - frames[i - 1].time);
    std::nth_element(dt.begin(), dt.begin() + long(dt.size() / 2), dt.end());
    const double step = dt[dt.size() / 2];
    if (!(step > 0)) fail(ErrorKind::kData, "compute_tvs: timestamps must increase");
    out.frame_rate = 1.0 / step;
  }

  const bool xrmb = scheme == TvScheme::kXrmb6;
  const std::string tip = xrmb ? "T1" : "TT";
  const std::string body = xrmb ? "T3" : "TB";
  const double origin_x = palate.points.front().x;
  const auto need = required_pellets(scheme);
  for (std::size_t t = 0; t < frames.size(); ++t) {
    const auto& pts = frames[t].points;
    for (const auto& n : need)
      if (!pts.count(n))
        fail(ErrorKind::kData, "compute_tvs: frame at t=" + std::to_string(frames[t].time) +
                                   " lacks pellet " + n + " required by " +
                                   scheme_name(scheme));
    const Point2 ul = pts.at("UL"), ll = pts.at("LL");
    const Point2 tt = pts.at(tip), tb = pts.at(body);
    out.tracks[0][t] = dist(ul, ll);
    out.tracks[1][t] = ul.x - origin_x;
    if (finite(tb)) {
      const auto h = point_to_polyline(tb, palate.points);
      out.tracks[2][t] = h.arc_position;
      out.tracks[3][t] = h.distance;
    }
    if (finite(tt)) {
      const auto h = point_to_polyline(tt, palate.points);
      out.tracks[4][t] = h.arc_position;
      out.tracks[5][t] = h.distance;
    }
    if (!xrmb) {
      const Point2 li = pts.at("LI"), ui = pts.at("UI");
      out.tracks[6][t] = std::atan2(li.y - ui.y, li.x - ui.x);
      const Point2 tm = mid(tt, tb);
      if (finite(tm)) {
        const auto h = point_to_polyline(tm, palate.points);
        out.tracks[7][t] = h.arc_position;
        out.tracks[8][t] = h.distance;
      }
    }
  }
  return out;
}

TrajectorySet resample_trajectories(const TrajectorySet& t, double target_rate) {
  require(t.frame_rate > 0 && target_rate > 0, "resample_trajectories: bad rate");
  const std::size_t n = t.frames();
  if (n < 2) fail(ErrorKind::kData, "resample_trajectories: need at least 2 frames");
  TrajectorySet out;
  out.names = t.names;
  out.frame_rate = target_rate;
  if (t.frame_rate == target_rate) {
    out.tracks = t.tracks;
    out.valid_frames = t.valid_frames;
    return out;
  }
  const double ratio = t.frame_rate / target_rate;  // source frames per output frame
  const auto m = std::size_t(std::floor(double(n - 1) / ratio + 1e-9)) + 1;
  out.tracks.assign(t.tracks.size(), std::vector<double>(m));
  for (std::size_t c = 0; c < t.tracks.size(); ++c) {
    const auto& src = t.tracks[c];
    for (std::size_t j = 0; j < m; ++j) {
      const double pos = double(j) * ratio;
      const auto i = std::min(std::size_t(pos), n - 1);
      const double f = pos - double(i);
      out.tracks[c][j] = i + 1 < n ? src[i] + f * (src[i + 1] - src[i]) : src[n - 1];
    }
  }
  out.valid_frames = std::min(
      m, std::size_t(std::llround(double(t.valid_frames) / ratio)));
  return out;
}

bool repair_gaps(TrajectorySet& t, double max_gap_s) {
  const auto max_run = std::size_t(std::floor(max_gap_s * t.frame_rate + 1e-9));
  for (auto& tr : t.tracks) {
    const std::size_t n = tr.size();
    std::size_t i = 0;
    bool any_valid = false;
    while (i < n) {
      if (std::isfinite(tr[i])) {
        any_valid = true;
        ++i;
        continue;
      }
      std::size_t j = i;
      while (j < n && !std::isfinite(tr[j])) ++j;
      if (j - i > max_run) return false;
      if (i == 0 && j == n) return false;
      for (std::size_t k = i; k < j; ++k) {
        if (i == 0) tr[k] = tr[j];
        else if (j == n) tr[k] = tr[i - 1];
        else tr[k] = tr[i - 1] + (tr[j] - tr[i - 1]) * double(k - i + 1) / double(j - i + 1);
      }
      i = j;
    }
    if (!any_valid && n > 0) return false;
  }
  return true;
}

std::vector<PelletFrame> read_pellet_csv(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) fail(ErrorKind::kData, "cannot open pellet file " + path.string());
  std::string line;
  if (!std::getline(is, line) || split_csv(line) != std::vector<std::string>{"time", "name", "x", "y"})
    fail(ErrorKind::kData, path.string() + ": expected header time,name,x,y");
  std::vector<PelletFrame> frames;
  std::size_t lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto cells = split_csv(line);
    const std::string where = path.string() + ":" + std::to_string(lineno);
    if (cells.size() != 4) fail(ErrorKind::kData, where + ": expected 4 fields");
    const double time = parse_number(cells[0], where);
    if (!std::isfinite(time)) fail(ErrorKind::kData, where + ": bad timestamp");
    if (frames.empty() || frames.back().time != time) {
      if (!frames.empty() && time < frames.back().time)
        fail(ErrorKind::kData, where + ": timestamps must be non-decreasing");
      frames.push_back({time, {}});
    }
    const Point2 p{parse_number(cells[2], where), parse_number(cells[3], where)};
    if ((std::isfinite(p.x) && std::abs(p.x) >= 200) || (std::isfinite(p.y) && std::abs(p.y) >= 200))
      fail(ErrorKind::kData, where + ": coordinate outside +-200 mm");
    frames.back().points[cells[1]] = p;
  }
  if (frames.empty()) fail(ErrorKind::kData, path.string() + ": no pellet rows");
  return frames;
}

void write_pellet_csv(const std::filesystem::path& path,
                      const std::vector<PelletFrame>& frames) {
  std::ofstream os(path);
  if (!os) fail(ErrorKind::kData, "cannot write " + path.string());
  os << "time,name,x,y\n" << std::setprecision(10);
  for (const auto& f : frames)
    for (const auto& [name, p] : f.points) os << f.time << ',' << name << ',' << p.x << ',' << p.y << '\n';
}

PalateTrace read_palate_csv(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) fail(ErrorKind::kData, "cannot open palate file " + path.string());
  std::string line;
  if (!std::getline(is, line) || split_csv(line) != std::vector<std::string>{"x", "y"})
    fail(ErrorKind::kData, path.string() + ": expected header x,y");
  PalateTrace pal;
  std::size_t lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto cells = split_csv(line);
    const std::string where = path.string() + ":" + std::to_string(lineno);
    if (cells.size() != 2) fail(ErrorKind::kData, where + ": expected 2 fields");
    pal.points.push_back({parse_number(cells[0], where), parse_number(cells[1], where)});
  }
  pal.validate();
  return pal;
}

void write_palate_csv(const std::filesystem::path& path, const PalateTrace& palate) {
  std::ofstream os(path);
  if (!os) fail(ErrorKind::kData, "cannot write " + path.string());
  os << "x,y\n" << std::setprecision(10);
  for (const auto& p : palate.points) os << p.x << ',' << p.y << '\n';
}

}  // namespace sinv::tv
