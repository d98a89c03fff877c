// dsp/wave.cc

#include "sinv/dsp/wave.h"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

#include "sinv/error.h"

namespace sinv::dsp {

namespace {

std::uint32_t le32(const unsigned char* p) {
  return std::uint32_t(p[0]) | std::uint32_t(p[1]) << 8 |
         std::uint32_t(p[2]) << 16 | std::uint32_t(p[3]) << 24;
}
std::uint16_t le16(const unsigned char* p) {
  return std::uint16_t(p[0] | p[1] << 8);
}

void put32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16),
                        static_cast<unsigned char>(v >> 24)};
  os.write(reinterpret_cast<const char*>(b), 4);
}
void put16(std::ostream& os, std::uint16_t v) {
  unsigned char b[2] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8)};
  os.write(reinterpret_cast<const char*>(b), 2);
}

}  // namespace

WaveBuffer read_wav(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) fail(ErrorKind::kData, "cannot open audio file " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(is)),
                                   std::istreambuf_iterator<char>());
  auto bad = [&](const std::string& why) {
    fail(ErrorKind::kData, "bad WAV file " + path.string() + ": " + why);
  };
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0)
    bad("missing RIFF/WAVE header");

  int format = 0, channels = 0, rate = 0, bits = 0;
  const unsigned char* data = nullptr;
  std::size_t data_len = 0;
  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const unsigned char* ck = bytes.data() + pos;
    std::size_t len = le32(ck + 4);
    std::size_t body = pos + 8;
    if (body + len > bytes.size()) len = bytes.size() - body;
    if (std::memcmp(ck, "fmt ", 4) == 0 && len >= 16) {
      format = le16(ck + 8);
      channels = le16(ck + 10);
      rate = int(le32(ck + 12));
      bits = le16(ck + 22);
      if (format == 0xFFFE && len >= 26) format = le16(ck + 32);  // extensible
    } else if (std::memcmp(ck, "data", 4) == 0) {
      data = ck + 8;
      data_len = len;
    }
    pos = body + len + (len & 1);
  }
  if (!data) bad("no data chunk");
  if (channels < 1 || rate <= 0) bad("invalid fmt chunk");
  WaveBuffer w;
  w.sample_rate = rate;
  if (format == 1 && bits == 16) {
    const std::size_t frame = 2 * std::size_t(channels);
    const std::size_t n = data_len / frame;
    w.samples.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      auto v = static_cast<std::int16_t>(le16(data + i * frame));
      w.samples[i] = float(v) / 32768.0f;
    }
  } else if (format == 3 && bits == 32) {
    const std::size_t frame = 4 * std::size_t(channels);
    const std::size_t n = data_len / frame;
    w.samples.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      std::uint32_t u = le32(data + i * frame);
      float f;
      std::memcpy(&f, &u, 4);
      w.samples[i] = f;
    }
  } else {
    bad("unsupported encoding (format " + std::to_string(format) + ", " +
        std::to_string(bits) + " bits)");
  }
  return w;
}

void write_wav(const std::filesystem::path& path, const WaveBuffer& wave) {
  std::ofstream os(path, std::ios::binary);
  if (!os) fail(ErrorKind::kData, "cannot write " + path.string());
  const std::uint32_t data_len = std::uint32_t(wave.samples.size() * 2);
  os.write("RIFF", 4);
  put32(os, 36 + data_len);
  os.write("WAVEfmt ", 8);
  put32(os, 16);
  put16(os, 1);
  put16(os, 1);
  put32(os, std::uint32_t(wave.sample_rate));
  put32(os, std::uint32_t(wave.sample_rate) * 2);
  put16(os, 2);
  put16(os, 16);
  os.write("data", 4);
  put32(os, data_len);
  for (float s : wave.samples) {
    // Same scale as read_wav, so k / 32768 survives a round trip exactly.
    long v = std::clamp(std::lround(double(s) * 32768.0), -32768L, 32767L);
    put16(os, static_cast<std::uint16_t>(static_cast<std::int16_t>(v)));
  }
}

WaveBuffer resample(const WaveBuffer& wave, int target_rate) {
  require(!wave.samples.empty(), "resample: empty input");
  require(wave.sample_rate > 0 && target_rate > 0,
          "resample: sample rates must be positive");
  require(target_rate <= wave.sample_rate,
          "resample: only downsampling is supported");
  if (target_rate == wave.sample_rate) return wave;

  constexpr int kHalf = 32;  // 64 taps
  const double src = wave.sample_rate;
  const double ratio = src / target_rate;
  const double fc = 0.45 * target_rate / src;  // cycles per input sample
  const std::size_t n_in = wave.samples.size();
  const std::size_t n_out = std::size_t(
      (std::uint64_t(n_in) * std::uint64_t(target_rate) +
       std::uint64_t(wave.sample_rate) / 2) /
      std::uint64_t(wave.sample_rate));
  WaveBuffer out;
  out.sample_rate = target_rate;
  out.samples.resize(n_out);
  for (std::size_t n = 0; n < n_out; ++n) {
    const double t = double(n) * ratio;
    const long base = long(std::floor(t));
    double acc = 0, wsum = 0;
    for (long k = base - kHalf + 1; k <= base + kHalf; ++k) {
      const double d = t - double(k);
      const double x = 2.0 * fc * d;
      const double sinc = std::abs(x) < 1e-12 ? 1.0 : std::sin(M_PI * x) / (M_PI * x);
      const double a = M_PI * d / kHalf;
      const double win = 0.42 + 0.5 * std::cos(a) + 0.08 * std::cos(2 * a);
      const double h = sinc * win;
      wsum += h;
      if (k >= 0 && std::size_t(k) < n_in) acc += h * wave.samples[std::size_t(k)];
    }
    out.samples[n] = float(acc / wsum);
  }
  return out;
}

std::vector<Segment> segment_and_pad(const WaveBuffer& wave,
                                     const std::string& utterance_id) {
  require(wave.sample_rate == kModelSampleRate,
          "segment_and_pad: expected 16 kHz audio, got " +
              std::to_string(wave.sample_rate));
  std::vector<Segment> out;
  const std::size_t n = wave.samples.size();
  for (std::size_t start = 0; start < n; start += kSegmentSamples) {
    Segment s;
    s.valid_samples = std::min(kSegmentSamples, n - start);
    s.wave.sample_rate = kModelSampleRate;
    s.wave.samples.assign(kSegmentSamples, 0.0f);
    std::copy_n(wave.samples.begin() + long(start), s.valid_samples,
                s.wave.samples.begin());
    s.source_utterance_id = utterance_id;
    s.offset = double(start) / kModelSampleRate;
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace sinv::dsp
