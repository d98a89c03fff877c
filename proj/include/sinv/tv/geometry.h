// sinv/tv/geometry.h
//
// Tract variables from midsagittal pellet coordinates and a palate trace.
// Coordinates are in mm with x anterior-positive and y superior-positive.

#ifndef SINV_TV_GEOMETRY_H_
#define SINV_TV_GEOMETRY_H_

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "sinv/dsp/feature_matrix.h"

namespace sinv::tv {

struct Point2 {
  double x = 0, y = 0;
};

// Named sensor positions at one instant. A NaN coordinate marks the sensor
// as mistracked in that frame; the derived TVs become NaN and are repaired
// (or the utterance rejected) by repair_gaps.
struct PelletFrame {
  double time = 0;
  std::map<std::string, Point2> points;
};

// Ordered alveolar ridge -> velum. Needs at least 8 vertices with x strictly
// monotone.
struct PalateTrace {
  std::vector<Point2> points;

  void validate() const;
  // Cumulative arc length at each vertex; front() is 0.
  std::vector<double> arc_lengths() const;
  double length() const;
};

enum class TvScheme { kXrmb6, kHprc9 };

TvScheme parse_scheme(const std::string& s);
const char* scheme_name(TvScheme s);
// LA LP TBCL TBCD TTCL TTCD, then JA TMCL TMCD for hprc9.
std::vector<std::string> tv_names(TvScheme s);
std::size_t tv_count(TvScheme s);
// Sensors each scheme reads.
std::vector<std::string> required_pellets(TvScheme s);

struct PolylineHit {
  double distance = 0;
  double arc_position = 0;
};

// Nearest point of the polyline; the projection is clamped to each segment
// and ties resolve toward the smaller arc position.
PolylineHit point_to_polyline(Point2 p, const std::vector<Point2>& poly);

struct TrajectorySet {
  std::vector<std::string> names;
  std::vector<std::vector<double>> tracks;  // tracks[i] belongs to names[i]
  double frame_rate = 100.0;
  std::size_t valid_frames = 0;

  std::size_t frames() const { return tracks.empty() ? 0 : tracks[0].size(); }
  const std::vector<double>& track(const std::string& name) const;
  dsp::FeatureMatrix to_matrix() const;
};

// frame_rate is taken from the frame timestamps (1 / median spacing); a
// single frame gets 100 Hz.
TrajectorySet compute_tvs(const std::vector<PelletFrame>& frames,
                          const PalateTrace& palate, TvScheme scheme);

// Linear interpolation onto a uniform grid at target_rate covering the same
// span; the last source value is held past the final source sample.
TrajectorySet resample_trajectories(const TrajectorySet& t, double target_rate = 100.0);

// Fills NaN runs by linear interpolation (runs touching an end are held
// from the nearest valid value). Returns false, leaving `t` unspecified, if
// any run is longer than max_gap_s or a track has no valid value at all.
bool repair_gaps(TrajectorySet& t, double max_gap_s = 0.05);

// CSV with header time,name,x,y; rows sharing a timestamp form one frame.
std::vector<PelletFrame> read_pellet_csv(const std::filesystem::path& path);
void write_pellet_csv(const std::filesystem::path& path,
                      const std::vector<PelletFrame>& frames);
// CSV with header x,y.
PalateTrace read_palate_csv(const std::filesystem::path& path);
void write_palate_csv(const std::filesystem::path& path, const PalateTrace& palate);

}  // namespace sinv::tv

#endif  // SINV_TV_GEOMETRY_H_
