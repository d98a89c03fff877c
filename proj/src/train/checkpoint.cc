// train/checkpoint.cc

#include "sinv/train/checkpoint.h"

#include <bit>
#include <cstring>
#include <fstream>

#include "sinv/error.h"

namespace sinv::train {

static_assert(std::endian::native == std::endian::little,
              "checkpoints are written in host byte order");

namespace {

constexpr char kMagic[4] = {'A', 'I', 'T', 'C'};

class Writer {
 public:
  explicit Writer(const std::filesystem::path& p) : os_(p, std::ios::binary), path_(p) {
    if (!os_) fail(ErrorKind::kData, "cannot write " + p.string());
  }
  template <typename V>
  void put(V v) {
    os_.write(reinterpret_cast<const char*>(&v), sizeof v);
  }
  void floats(std::span<const float> v) {
    put<std::uint64_t>(v.size());
    os_.write(reinterpret_cast<const char*>(v.data()), std::streamsize(v.size() * sizeof(float)));
  }
  void raw(const char* p, std::size_t n) { os_.write(p, std::streamsize(n)); }
  void str(const std::string& s, bool wide = false) {
    if (wide)
      put<std::uint32_t>(std::uint32_t(s.size()));
    else
      put<std::uint16_t>(std::uint16_t(s.size()));
    os_.write(s.data(), std::streamsize(s.size()));
  }
  void finish() {
    os_.flush();
    if (!os_) fail(ErrorKind::kData, "short write to " + path_.string());
  }

 private:
  std::ofstream os_;
  std::filesystem::path path_;
};

class Reader {
 public:
  explicit Reader(const std::filesystem::path& p) : is_(p, std::ios::binary), path_(p) {
    if (!is_) fail(ErrorKind::kData, "cannot open checkpoint " + p.string());
  }
  template <typename V>
  V get() {
    V v{};
    is_.read(reinterpret_cast<char*>(&v), sizeof v);
    check();
    return v;
  }
  void bytes(char* dst, std::size_t n) {
    is_.read(dst, std::streamsize(n));
    check();
  }
  // Reads a float blob whose length must equal dst.size().
  void floats_into(std::span<float> dst, const char* what) {
    const auto n = get<std::uint64_t>();
    if (n != dst.size())
      fail(ErrorKind::kData, path_.string() + ": " + what + " has " + std::to_string(n) +
                                 " values, model expects " + std::to_string(dst.size()));
    bytes(reinterpret_cast<char*>(dst.data()), n * sizeof(float));
  }
  std::vector<float> floats() {
    const auto n = get<std::uint64_t>();
    if (n > (std::uint64_t(1) << 32)) fail(ErrorKind::kData, path_.string() + ": corrupt blob size");
    std::vector<float> v(n);
    bytes(reinterpret_cast<char*>(v.data()), n * sizeof(float));
    return v;
  }
  std::string str(bool wide = false) {
    const std::size_t n = wide ? get<std::uint32_t>() : get<std::uint16_t>();
    std::string s(n, '\0');
    bytes(s.data(), n);
    return s;
  }

 private:
  void check() {
    if (!is_) fail(ErrorKind::kData, path_.string() + ": truncated checkpoint");
  }
  std::ifstream is_;
  std::filesystem::path path_;
};

void write_config(Writer& w, const nn::TcnConfig& c) {
  w.put<std::int32_t>(c.in_channels);
  w.put<std::int32_t>(c.n_targets);
  w.put<std::uint8_t>(c.tv_only ? 1 : 0);
  for (int v : c.pre_channels) w.put<std::int32_t>(v);
  w.put<std::int32_t>(c.dilated_channels);
  for (int v : c.dilations) w.put<std::int32_t>(v);
  w.put<std::int32_t>(c.dilated_kernel);
  w.put<std::int32_t>(c.c4_channels);
  w.put<std::int32_t>(c.c5_channels);
  w.put<std::int32_t>(c.upsample);
  w.put<std::int32_t>(c.pool);
  w.put<std::uint64_t>(c.seed);
}

nn::TcnConfig read_config(Reader& r) {
  nn::TcnConfig c;
  c.in_channels = r.get<std::int32_t>();
  c.n_targets = r.get<std::int32_t>();
  c.tv_only = r.get<std::uint8_t>() != 0;
  for (int& v : c.pre_channels) v = r.get<std::int32_t>();
  c.dilated_channels = r.get<std::int32_t>();
  for (int& v : c.dilations) v = r.get<std::int32_t>();
  c.dilated_kernel = r.get<std::int32_t>();
  c.c4_channels = r.get<std::int32_t>();
  c.c5_channels = r.get<std::int32_t>();
  c.upsample = r.get<std::int32_t>();
  c.pool = r.get<std::int32_t>();
  c.seed = r.get<std::uint64_t>();
  return c;
}

std::span<const float> values_or_empty(const nn::Tensor<float>& t) {
  return t.defined() ? t.values() : std::span<const float>();
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const nn::TcnModel<float>& model,
                     const nn::AdamState<float>& adam, const TrainingState& state,
                     const nlohmann::json& meta) {
  Writer w(path);
  w.raw(kMagic, 4);
  w.put<std::uint32_t>(kCheckpointVersion);
  write_config(w, model.config());
  const auto& layers = model.layers();
  w.put<std::uint32_t>(std::uint32_t(layers.size()));
  for (const auto& l : layers) {
    w.put<std::uint8_t>(static_cast<std::uint8_t>(l.spec.kind));
    w.str(l.spec.name);
    w.put<std::int32_t>(l.spec.in_channels);
    w.put<std::int32_t>(l.spec.out_channels);
    w.put<std::int32_t>(l.spec.kernel);
    w.put<std::int32_t>(l.spec.dilation);
    w.put<std::int32_t>(l.spec.factor);
  }
  for (const auto& l : layers) {
    w.floats(values_or_empty(l.weight));
    w.floats(values_or_empty(l.bias));
    w.floats(l.stats.running_mean);
    w.floats(l.stats.running_var);
  }
  w.put<std::int32_t>(state.epoch);
  w.put<std::int32_t>(state.best_epoch);
  w.put<double>(state.best_val);
  w.put<std::uint64_t>(state.seed);
  w.put<std::int64_t>(adam.step);
  require(adam.m.size() == adam.v.size(), "save_checkpoint: inconsistent Adam state");
  w.put<std::uint32_t>(std::uint32_t(adam.m.size()));
  for (std::size_t i = 0; i < adam.m.size(); ++i) {
    w.floats(adam.m[i]);
    w.floats(adam.v[i]);
  }
  w.str(meta.dump(), true);
  w.finish();
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  Reader r(path);
  char magic[4];
  r.bytes(magic, 4);
  if (std::memcmp(magic, kMagic, 4) != 0)
    fail(ErrorKind::kData, path.string() + " is not a checkpoint");
  if (auto v = r.get<std::uint32_t>(); v != kCheckpointVersion)
    fail(ErrorKind::kData, path.string() + ": unsupported checkpoint version " + std::to_string(v));
  const auto cfg = read_config(r);
  try {
    nn::validate(cfg);
  } catch (const Error& e) {
    fail(ErrorKind::kData, path.string() + ": " + e.what());
  }
  Checkpoint ck(cfg);
  auto& layers = ck.model.layers();
  const auto n_layers = r.get<std::uint32_t>();
  if (n_layers != layers.size()) fail(ErrorKind::kData, path.string() + ": layer count mismatch");
  for (auto& l : layers) {
    nn::LayerSpec s;
    s.kind = static_cast<nn::LayerKind>(r.get<std::uint8_t>());
    s.name = r.str();
    s.in_channels = r.get<std::int32_t>();
    s.out_channels = r.get<std::int32_t>();
    s.kernel = r.get<std::int32_t>();
    s.dilation = r.get<std::int32_t>();
    s.factor = r.get<std::int32_t>();
    if (!(s == l.spec)) fail(ErrorKind::kData, path.string() + ": layer table differs at " + s.name);
  }
  auto into = [&](nn::Tensor<float>& t, const char* what) {
    if (t.defined())
      r.floats_into(t.values(), what);
    else
      r.floats_into({}, what);
  };
  for (auto& l : layers) {
    into(l.weight, "weight");
    into(l.bias, "bias");
    r.floats_into(l.stats.running_mean, "running mean");
    r.floats_into(l.stats.running_var, "running variance");
  }
  ck.state.epoch = r.get<std::int32_t>();
  ck.state.best_epoch = r.get<std::int32_t>();
  ck.state.best_val = r.get<double>();
  ck.state.seed = r.get<std::uint64_t>();
  ck.adam.step = r.get<std::int64_t>();
  const auto slots = r.get<std::uint32_t>();
  const auto params = ck.model.parameters();
  if (slots != 0 && slots != params.size())
    fail(ErrorKind::kData, path.string() + ": optimizer state does not match the model");
  for (std::uint32_t i = 0; i < slots; ++i) {
    ck.adam.m.push_back(r.floats());
    ck.adam.v.push_back(r.floats());
    if (ck.adam.m.back().size() != params[i].numel() || ck.adam.v.back().size() != params[i].numel())
      fail(ErrorKind::kData, path.string() + ": optimizer slot size mismatch");
  }
  const auto text = r.str(true);
  try {
    ck.meta = nlohmann::json::parse(text);
  } catch (const std::exception& e) {
    fail(ErrorKind::kData, path.string() + ": bad metadata: " + e.what());
  }
  return ck;
}

}  // namespace sinv::train
