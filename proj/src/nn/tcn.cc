// nn/tcn.cc

#include "sinv/nn/tcn.h"

#include <cmath>

#include "sinv/error.h"

namespace sinv::nn {

std::uint64_t SplitMix64::next() {
  std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

double SplitMix64::uniform() { return double(next() >> 11) * 0x1.0p-53; }

double SplitMix64::normal() {
  double u1 = uniform();
  double u2 = uniform();
  if (u1 < 1e-300) u1 = 1e-300;
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

const char* layer_kind_name(LayerKind k) {
  switch (k) {
    case LayerKind::kConv1d: return "conv1d";
    case LayerKind::kBatchNorm1d: return "batchnorm1d";
    case LayerKind::kRelu: return "relu";
    case LayerKind::kUpsample: return "upsample";
    case LayerKind::kAvgPool: return "avgpool";
  }
  return "?";
}

TcnConfig TcnConfig::reduced(int width, int n_targets, bool tv_only) {
  TcnConfig c;
  c.in_channels = width;
  c.n_targets = n_targets;
  c.tv_only = tv_only;
  c.pre_channels[0] = c.pre_channels[1] = c.pre_channels[2] = width;
  c.dilated_channels = c.c4_channels = c.c5_channels = width;
  return c;
}

void validate(const TcnConfig& cfg) {
  const bool ok_targets = cfg.tv_only ? (cfg.n_targets == 6 || cfg.n_targets == 9)
                                      : (cfg.n_targets == 9 || cfg.n_targets == 12);
  if (!ok_targets)
    fail(ErrorKind::kConfig,
         "invalid n_targets " + std::to_string(cfg.n_targets) +
             (cfg.tv_only ? " for a TV-only model (6 or 9)"
                          : " for a TV+source model (9 or 12)"));
  bool ok = cfg.in_channels > 0 && cfg.dilated_channels > 0 &&
            cfg.c4_channels > 0 && cfg.c5_channels > 0 && cfg.upsample >= 1 &&
            cfg.pool >= 1 && cfg.dilated_kernel >= 1;
  for (int i = 0; i < 3; ++i)
    ok = ok && cfg.pre_channels[i] > 0 && cfg.dilations[i] >= 1;
  if (!ok) fail(ErrorKind::kConfig, "invalid TCN widths");
}

std::vector<LayerSpec> tcn_layer_specs(const TcnConfig& cfg) {
  validate(cfg);
  std::vector<LayerSpec> out;
  auto block = [&](const std::string& name, int in, int outc, int k, int d) {
    out.push_back({LayerKind::kConv1d, name, in, outc, k, d, 1});
    out.push_back({LayerKind::kBatchNorm1d, name + ".bn", outc, outc, 1, 1, 1});
    out.push_back({LayerKind::kRelu, name + ".relu", outc, outc, 1, 1, 1});
  };
  block("C1", cfg.in_channels, cfg.pre_channels[0], 1, 1);
  block("C2", cfg.pre_channels[0], cfg.pre_channels[1], 1, 1);
  block("C3", cfg.pre_channels[1], cfg.pre_channels[2], 1, 1);
  int ch = cfg.pre_channels[2];
  for (int i = 0; i < 3; ++i) {
    block("d" + std::to_string(i + 1), ch, cfg.dilated_channels,
          cfg.dilated_kernel, cfg.dilations[i]);
    ch = cfg.dilated_channels;
  }
  block("C4", ch, cfg.c4_channels, 1, 1);
  out.push_back({LayerKind::kUpsample, "up", cfg.c4_channels, cfg.c4_channels,
                 1, 1, cfg.upsample});
  block("C5", cfg.c4_channels, cfg.c5_channels, 1, 1);
  out.push_back({LayerKind::kAvgPool, "pool", cfg.c5_channels, cfg.c5_channels,
                 1, 1, cfg.pool});
  out.push_back({LayerKind::kConv1d, "C6", cfg.c5_channels, cfg.n_targets, 1, 1,
                 1});
  return out;
}

int tcn_output_frames(const TcnConfig& cfg, int frames) {
  return frames * cfg.upsample / cfg.pool;
}

template <typename T>
TcnModel<T>::TcnModel(const TcnConfig& cfg) : cfg_(cfg) {
  SplitMix64 rng(cfg.seed);
  for (const auto& spec : tcn_layer_specs(cfg)) {
    Layer<T> layer;
    layer.spec = spec;
    if (spec.kind == LayerKind::kConv1d) {
      const std::size_t fan_in = std::size_t(spec.in_channels) * spec.kernel;
      const double bound = std::sqrt(6.0 / double(fan_in));
      std::vector<T> w(std::size_t(spec.out_channels) * fan_in);
      for (auto& v : w) v = T(rng.uniform(-bound, bound));
      layer.weight = Tensor<T>::from(
          {std::size_t(spec.out_channels), std::size_t(spec.in_channels),
           std::size_t(spec.kernel)},
          std::move(w), true);
      layer.bias = Tensor<T>::zeros({std::size_t(spec.out_channels)}, true);
    } else if (spec.kind == LayerKind::kBatchNorm1d) {
      const std::size_t c = spec.out_channels;
      layer.weight = Tensor<T>::full({c}, T(1), true);
      layer.bias = Tensor<T>::zeros({c}, true);
      layer.stats = BatchNormStats<T>(c);
    }
    layers_.push_back(std::move(layer));
  }
}

template <typename T>
Tensor<T> TcnModel<T>::forward(const Tensor<T>& x, Mode mode) {
  require(x.shape().size() == 3 && x.dim(1) == std::size_t(cfg_.in_channels),
          "tcn forward: expected (B, " + std::to_string(cfg_.in_channels) +
              ", T), got " + shape_str(x.shape()));
  Tensor<T> h = x;
  for (auto& layer : layers_) {
    switch (layer.spec.kind) {
      case LayerKind::kConv1d:
        h = conv1d(h, layer.weight, layer.bias, layer.spec.dilation);
        break;
      case LayerKind::kBatchNorm1d:
        h = batchnorm1d(h, layer.weight, layer.bias, layer.stats, mode, bn_opt_);
        break;
      case LayerKind::kRelu:
        h = relu(h);
        break;
      case LayerKind::kUpsample:
        h = upsample_repeat(h, layer.spec.factor);
        break;
      case LayerKind::kAvgPool:
        h = avgpool1d(h, layer.spec.factor);
        break;
    }
  }
  return h;
}

template <typename T>
std::vector<Tensor<T>> TcnModel<T>::parameters() const {
  std::vector<Tensor<T>> out;
  for (const auto& l : layers_) {
    if (l.weight.defined()) out.push_back(l.weight);
    if (l.bias.defined()) out.push_back(l.bias);
  }
  return out;
}

template <typename T>
std::size_t TcnModel<T>::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : parameters()) n += p.numel();
  return n;
}

template <typename To, typename From>
TcnModel<To> convert_model(const TcnModel<From>& m) {
  TcnModel<To> out(m.config());
  auto& dst = out.layers();
  const auto& src = m.layers();
  for (std::size_t i = 0; i < src.size(); ++i) {
    auto copy = [](const Tensor<From>& s, Tensor<To>& d) {
      if (!s.defined()) return;
      auto sv = s.values();
      auto dv = d.values();
      for (std::size_t j = 0; j < sv.size(); ++j) dv[j] = To(sv[j]);
    };
    copy(src[i].weight, dst[i].weight);
    copy(src[i].bias, dst[i].bias);
    const auto& ss = src[i].stats;
    auto& ds = dst[i].stats;
    for (std::size_t j = 0; j < ss.running_mean.size(); ++j) {
      ds.running_mean[j] = To(ss.running_mean[j]);
      ds.running_var[j] = To(ss.running_var[j]);
    }
  }
  return out;
}

template class TcnModel<float>;
template class TcnModel<double>;
template TcnModel<double> convert_model<double, float>(const TcnModel<float>&);
template TcnModel<float> convert_model<float, double>(const TcnModel<double>&);
template TcnModel<float> convert_model<float, float>(const TcnModel<float>&);
template TcnModel<double> convert_model<double, double>(const TcnModel<double>&);

}  // namespace sinv::nn
