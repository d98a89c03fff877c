// dsp/feature_matrix.cc

#include "sinv/dsp/feature_matrix.h"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include "json.hpp"
#include "sinv/error.h"

namespace sinv::dsp {

static_assert(std::endian::native == std::endian::little,
              "feature files are written in host byte order");

const char* feature_kind_name(FeatureKind k) {
  switch (k) {
    case FeatureKind::kAudspec: return "audspec";
    case FeatureKind::kMspec: return "mspec";
    case FeatureKind::kMfcc: return "mfcc";
    case FeatureKind::kTargets: return "targets";
  }
  return "?";
}

FeatureKind parse_feature_kind(const std::string& s) {
  if (s == "audspec") return FeatureKind::kAudspec;
  if (s == "mspec") return FeatureKind::kMspec;
  if (s == "mfcc") return FeatureKind::kMfcc;
  if (s == "targets") return FeatureKind::kTargets;
  fail(ErrorKind::kConfig, "unknown feature kind '" + s + "'");
}

std::vector<float> FeatureMatrix::column(std::size_t c) const {
  std::vector<float> out(frames);
  for (std::size_t t = 0; t < frames; ++t) out[t] = at(t, c);
  return out;
}

namespace {
constexpr char kMagic[4] = {'A', 'I', 'F', 'M'};
constexpr std::uint32_t kVersion = 1;

template <typename V>
void put(std::ostream& os, V v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof v);
}
template <typename V>
V get(std::istream& is) {
  V v{};
  is.read(reinterpret_cast<char*>(&v), sizeof v);
  return v;
}
}  // namespace

void write_feature_matrix(const std::filesystem::path& path,
                          const FeatureMatrix& fm) {
  require(fm.data.size() == fm.frames * fm.channels,
          "feature matrix: data size mismatch");
  std::ofstream os(path, std::ios::binary);
  if (!os) fail(ErrorKind::kData, "cannot write " + path.string());
  os.write(kMagic, 4);
  put<std::uint32_t>(os, kVersion);
  put<std::uint32_t>(os, std::uint32_t(fm.frames));
  put<std::uint32_t>(os, std::uint32_t(fm.channels));
  put<std::uint32_t>(os, std::uint32_t(std::lround(fm.frame_rate * 1000.0)));
  put<std::uint8_t>(os, static_cast<std::uint8_t>(fm.kind));
  os.write(reinterpret_cast<const char*>(fm.data.data()),
           std::streamsize(fm.data.size() * sizeof(float)));
  if (!os) fail(ErrorKind::kData, "short write to " + path.string());
}

FeatureMatrix read_feature_matrix(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) fail(ErrorKind::kData, "cannot open feature file " + path.string());
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kMagic, 4) != 0)
    fail(ErrorKind::kData, path.string() + ": not an AIFM feature file");
  const auto version = get<std::uint32_t>(is);
  if (version != kVersion)
    fail(ErrorKind::kData, path.string() + ": unsupported version " +
                               std::to_string(version));
  FeatureMatrix fm;
  fm.frames = get<std::uint32_t>(is);
  fm.channels = get<std::uint32_t>(is);
  fm.frame_rate = get<std::uint32_t>(is) / 1000.0;
  const auto kind = get<std::uint8_t>(is);
  if (kind > 3) fail(ErrorKind::kData, path.string() + ": bad kind byte");
  fm.kind = static_cast<FeatureKind>(kind);
  fm.data.resize(fm.frames * fm.channels);
  is.read(reinterpret_cast<char*>(fm.data.data()),
          std::streamsize(fm.data.size() * sizeof(float)));
  if (!is) fail(ErrorKind::kData, path.string() + ": truncated payload");
  return fm;
}

std::filesystem::path channel_manifest_path(const std::filesystem::path& bin) {
  auto p = bin;
  p.replace_extension(".json");
  return p;
}

void write_channel_manifest(const std::filesystem::path& bin,
                            const std::vector<std::string>& channels,
                            FeatureKind kind) {
  nlohmann::json j;
  j["kind"] = feature_kind_name(kind);
  j["channels"] = channels;
  std::ofstream os(channel_manifest_path(bin));
  if (!os) fail(ErrorKind::kData, "cannot write channel manifest for " + bin.string());
  os << j.dump(2) << '\n';
}

std::vector<std::string> read_channel_manifest(const std::filesystem::path& bin) {
  std::ifstream is(channel_manifest_path(bin));
  if (!is) fail(ErrorKind::kData, "missing channel manifest for " + bin.string());
  try {
    auto j = nlohmann::json::parse(is);
    return j.at("channels").get<std::vector<std::string>>();
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::kData, "bad channel manifest for " + bin.string() + ": " + e.what());
  }
}

FeatureMatrix znorm_utterance(const FeatureMatrix& fm,
                              std::optional<std::size_t> valid_frames) {
  const std::size_t n = std::min(valid_frames.value_or(fm.frames), fm.frames);
  require(n >= 2, "znorm_utterance: need at least 2 frames");
  FeatureMatrix out = fm;
  for (std::size_t c = 0; c < fm.channels; ++c) {
    double s = 0;
    for (std::size_t t = 0; t < n; ++t) s += fm.at(t, c);
    const double mean = s / double(n);
    double ss = 0;
    for (std::size_t t = 0; t < n; ++t) {
      double d = fm.at(t, c) - mean;
      ss += d * d;
    }
    const double sd = std::sqrt(ss / double(n));
    // Constant relative to the channel's own scale.
    const bool constant = !(sd > 1e-12 * std::max(1.0, std::abs(mean)));
    for (std::size_t t = 0; t < fm.frames; ++t)
      out.at(t, c) = constant ? 0.0f : float((fm.at(t, c) - mean) / sd);
  }
  return out;
}

}  // namespace sinv::dsp
