// nn/ops.cc

#include "sinv/nn/ops.h"

#include <atomic>
#include <cmath>

#include "sinv/error.h"
#include "sinv/nn/kernels.h"

namespace sinv::nn {

namespace {

thread_local ReluTrace* t_relu_trace = nullptr;
std::atomic<bool> g_conv_fault{false};

void require_3d(const Shape& s, const char* op) {
  require(s.size() == 3, std::string(op) + ": expected (B, C, T), got " +
                             shape_str(s));
}

}  // namespace

void set_relu_trace(ReluTrace* trace) { t_relu_trace = trace; }

namespace debug {
void set_conv_weight_grad_fault(bool on) { g_conv_fault = on; }
}  // namespace debug

template <typename T>
Tensor<T> conv1d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& bias,
                 int dilation) {
  require_3d(x.shape(), "conv1d");
  require(w.shape().size() == 3, "conv1d: weight must be (C_out, C_in, K)");
  require(w.dim(1) == x.dim(1),
          "conv1d: channel mismatch, input " + shape_str(x.shape()) +
              " weight " + shape_str(w.shape()));
  require(dilation >= 1, "conv1d: dilation must be >= 1");
  kernels::ConvGeometry g;
  g.batch = int(x.dim(0));
  g.in_channels = int(x.dim(1));
  g.frames = int(x.dim(2));
  g.out_channels = int(w.dim(0));
  g.kernel = int(w.dim(2));
  g.dilation = dilation;
  const bool has_bias = bias.defined();
  if (has_bias)
    require(bias.numel() == std::size_t(g.out_channels),
            "conv1d: bias size mismatch");

  std::vector<T> y(g.output_size());
  kernels::parallel::conv1d_forward<T>(
      g, x.values(), w.values(),
      has_bias ? bias.values() : std::span<const T>{}, y);
  std::vector<Tensor<T>> parents{x, w};
  if (has_bias) parents.push_back(bias);
  auto out = Tensor<T>::make_result({x.dim(0), w.dim(0), x.dim(2)},
                                    std::move(y), parents, "conv1d");
  if (out.requires_grad()) {
    auto* self = out.node();
    auto xn = x.node(), wn = w.node();
    auto bn = has_bias ? bias.node() : nullptr;
    self->backward = [self, xn, wn, bn, g]() {
      std::span<const T> dy = self->grad;
      if (xn->requires_grad)
        kernels::parallel::conv1d_backward_input<T>(g, dy, wn->value,
                                                    xn->grad_buffer());
      if (wn->requires_grad || (bn && bn->requires_grad)) {
        std::vector<T> dw(g.weight_size(), T(0));
        std::vector<T> db(bn ? g.out_channels : 0, T(0));
        kernels::parallel::conv1d_backward_params<T>(g, xn->value, dy, dw, db);
        if (g_conv_fault)
          for (auto& v : dw) v *= T(1.5);
        if (wn->requires_grad) {
          auto& gw = wn->grad_buffer();
          for (std::size_t i = 0; i < dw.size(); ++i) gw[i] += dw[i];
        }
        if (bn && bn->requires_grad) {
          auto& gb = bn->grad_buffer();
          for (std::size_t i = 0; i < db.size(); ++i) gb[i] += db[i];
        }
      }
    };
  }
  return out;
}

template <typename T>
Tensor<T> batchnorm1d(const Tensor<T>& x, const Tensor<T>& gamma,
                      const Tensor<T>& beta, BatchNormStats<T>& stats,
                      Mode mode, const BatchNormOptions& opt) {
  require_3d(x.shape(), "batchnorm1d");
  const std::size_t B = x.dim(0), C = x.dim(1), N = x.dim(2);
  require(gamma.numel() == C && beta.numel() == C,
          "batchnorm1d: affine parameter size mismatch");
  require(stats.running_mean.size() == C && stats.running_var.size() == C,
          "batchnorm1d: running statistics size mismatch");
  if (mode == Mode::kTrain)
    require(B >= 2, "batchnorm1d: train mode needs a batch of at least 2");

  const std::size_t count = B * N;
  std::vector<T> xhat(x.numel()), y(x.numel()), inv_std(C);
  auto xv = x.values();
  auto gv = gamma.values();
  auto bv = beta.values();
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
  for (long cl = 0; cl < long(C); ++cl) {
    const std::size_t c = std::size_t(cl);
    double mean, var;
    if (mode == Mode::kTrain) {
      double s = 0;
      for (std::size_t b = 0; b < B; ++b) {
        const T* r = xv.data() + (b * C + c) * N;
        for (std::size_t t = 0; t < N; ++t) s += r[t];
      }
      mean = s / double(count);
      double ss = 0;
      for (std::size_t b = 0; b < B; ++b) {
        const T* r = xv.data() + (b * C + c) * N;
        for (std::size_t t = 0; t < N; ++t) {
          double d = r[t] - mean;
          ss += d * d;
        }
      }
      var = ss / double(count);
      if (opt.update_running) {
        double unbiased = count > 1 ? ss / double(count - 1) : var;
        stats.running_mean[c] = T((1 - opt.momentum) * stats.running_mean[c] +
                                  opt.momentum * mean);
        stats.running_var[c] = T((1 - opt.momentum) * stats.running_var[c] +
                                 opt.momentum * unbiased);
      }
    } else {
      mean = stats.running_mean[c];
      var = stats.running_var[c];
    }
    const T is = T(1.0 / std::sqrt(var + opt.eps));
    const T m = T(mean);
    inv_std[c] = is;
    for (std::size_t b = 0; b < B; ++b) {
      const std::size_t off = (b * C + c) * N;
      for (std::size_t t = 0; t < N; ++t) {
        T h = (xv[off + t] - m) * is;
        xhat[off + t] = h;
        y[off + t] = gv[c] * h + bv[c];
      }
    }
  }
  auto out = Tensor<T>::make_result(x.shape(), std::move(y), {x, gamma, beta},
                                    "batchnorm1d");
  if (out.requires_grad()) {
    auto* self = out.node();
    auto xn = x.node(), gn = gamma.node(), bn = beta.node();
    const bool train = mode == Mode::kTrain;
    self->backward = [self, xn, gn, bn, train, B, C, N,
                      xhat = std::move(xhat), inv_std = std::move(inv_std)]() {
      const auto& dy = self->grad;
      T* dx = xn->requires_grad ? xn->grad_buffer().data() : nullptr;
      T* dg = gn->requires_grad ? gn->grad_buffer().data() : nullptr;
      T* db = bn->requires_grad ? bn->grad_buffer().data() : nullptr;
      const double n = double(B * N);
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
      for (long cl = 0; cl < long(C); ++cl) {
        const std::size_t c = std::size_t(cl);
        double sum_dy = 0, sum_dy_xhat = 0;
        for (std::size_t b = 0; b < B; ++b) {
          const std::size_t off = (b * C + c) * N;
          for (std::size_t t = 0; t < N; ++t) {
            sum_dy += dy[off + t];
            sum_dy_xhat += double(dy[off + t]) * xhat[off + t];
          }
        }
        if (dg) dg[c] += T(sum_dy_xhat);
        if (db) db[c] += T(sum_dy);
        if (!dx) continue;
        const T gam = gn->value[c];
        const T is = inv_std[c];
        if (train) {
          const T mdy = T(sum_dy / n), mdyx = T(sum_dy_xhat / n);
          for (std::size_t b = 0; b < B; ++b) {
            const std::size_t off = (b * C + c) * N;
            for (std::size_t t = 0; t < N; ++t)
              dx[off + t] +=
                  gam * is * (dy[off + t] - mdy - xhat[off + t] * mdyx);
          }
        } else {
          for (std::size_t b = 0; b < B; ++b) {
            const std::size_t off = (b * C + c) * N;
            for (std::size_t t = 0; t < N; ++t)
              dx[off + t] += gam * is * dy[off + t];
          }
        }
      }
    };
  }
  return out;
}

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
  auto xv = x.values();
  std::vector<T> y(xv.size());
  for (std::size_t i = 0; i < xv.size(); ++i) y[i] = xv[i] < T(0) ? T(0) : xv[i];
  if (t_relu_trace) {
    std::uint64_t word = 0;
    for (std::size_t i = 0; i < xv.size(); ++i) {
      word = (word << 1) | (xv[i] > T(0) ? 1u : 0u);
      if (i % 64 == 63) {
        t_relu_trace->mix(word);
        word = 0;
      }
    }
    t_relu_trace->mix(word);
  }
  auto out = Tensor<T>::make_result(x.shape(), std::move(y), {x}, "relu");
  if (out.requires_grad()) {
    auto* self = out.node();
    auto xn = x.node();
    self->backward = [self, xn]() {
      auto& dx = xn->grad_buffer();
      for (std::size_t i = 0; i < dx.size(); ++i)
        if (xn->value[i] > T(0)) dx[i] += self->grad[i];
    };
  }
  return out;
}

template <typename T>
Tensor<T> upsample_repeat(const Tensor<T>& x, int factor) {
  require_3d(x.shape(), "upsample_repeat");
  require(factor >= 1, "upsample_repeat: factor must be >= 1");
  const std::size_t rows = x.dim(0) * x.dim(1), n = x.dim(2), f = factor;
  auto xv = x.values();
  std::vector<T> y(rows * n * f);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t t = 0; t < n; ++t)
      for (std::size_t j = 0; j < f; ++j) y[(r * n + t) * f + j] = xv[r * n + t];
  auto out = Tensor<T>::make_result({x.dim(0), x.dim(1), n * f}, std::move(y),
                                    {x}, "upsample_repeat");
  if (out.requires_grad()) {
    auto* self = out.node();
    auto xn = x.node();
    self->backward = [self, xn, rows, n, f]() {
      auto& dx = xn->grad_buffer();
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t t = 0; t < n; ++t) {
          T s = 0;
          for (std::size_t j = 0; j < f; ++j) s += self->grad[(r * n + t) * f + j];
          dx[r * n + t] += s;
        }
    };
  }
  return out;
}

template <typename T>
Tensor<T> avgpool1d(const Tensor<T>& x, int window) {
  require_3d(x.shape(), "avgpool1d");
  require(window >= 1, "avgpool1d: window must be >= 1");
  const std::size_t rows = x.dim(0) * x.dim(1), n = x.dim(2), w = window;
  require(n % w == 0, "avgpool1d: " + std::to_string(n) +
                          " frames not divisible by window " +
                          std::to_string(w));
  const std::size_t m = n / w;
  auto xv = x.values();
  std::vector<T> y(rows * m);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t t = 0; t < m; ++t) {
      T s = 0;
      for (std::size_t j = 0; j < w; ++j) s += xv[r * n + t * w + j];
      y[r * m + t] = s / T(w);
    }
  auto out = Tensor<T>::make_result({x.dim(0), x.dim(1), m}, std::move(y), {x},
                                    "avgpool1d");
  if (out.requires_grad()) {
    auto* self = out.node();
    auto xn = x.node();
    self->backward = [self, xn, rows, n, m, w]() {
      auto& dx = xn->grad_buffer();
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t t = 0; t < m; ++t) {
          T g = self->grad[r * m + t] / T(w);
          for (std::size_t j = 0; j < w; ++j) dx[r * n + t * w + j] += g;
        }
    };
  }
  return out;
}

template <typename T>
Tensor<T> mse_loss(const Tensor<T>& pred, const Tensor<T>& target,
                   const std::vector<std::uint8_t>& mask) {
  require_3d(pred.shape(), "mse_loss");
  require(pred.shape() == target.shape(),
          "mse_loss: shape mismatch " + shape_str(pred.shape()) + " vs " +
              shape_str(target.shape()));
  const std::size_t B = pred.dim(0), C = pred.dim(1), N = pred.dim(2);
  require(mask.size() == B * N, "mse_loss: mask needs B*T entries");
  std::size_t valid = 0;
  for (auto m : mask) valid += m != 0;
  require(valid > 0, "mse_loss: empty mask");
  const double denom = double(valid) * double(C);
  auto pv = pred.values();
  auto tv = target.values();
  double s = 0;
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t t = 0; t < N; ++t) {
        if (!mask[b * N + t]) continue;
        const std::size_t i = (b * C + c) * N + t;
        double d = double(pv[i]) - double(tv[i]);
        s += d * d;
      }
  auto out = Tensor<T>::make_result({1}, {T(s / denom)}, {pred, target},
                                    "mse_loss");
  if (out.requires_grad()) {
    auto* self = out.node();
    auto pn = pred.node(), tn = target.node();
    self->backward = [self, pn, tn, mask, B, C, N, denom]() {
      const T up = self->grad[0];
      T* dp = pn->requires_grad ? pn->grad_buffer().data() : nullptr;
      T* dt = tn->requires_grad ? tn->grad_buffer().data() : nullptr;
      for (std::size_t b = 0; b < B; ++b)
        for (std::size_t c = 0; c < C; ++c)
          for (std::size_t t = 0; t < N; ++t) {
            if (!mask[b * N + t]) continue;
            const std::size_t i = (b * C + c) * N + t;
            T g = up * T(2.0 * (double(pn->value[i]) - double(tn->value[i])) /
                         denom);
            if (dp) dp[i] += g;
            if (dt) dt[i] -= g;
          }
    };
  }
  return out;
}

#define SINV_INSTANTIATE(T)                                                  \
  template Tensor<T> conv1d(const Tensor<T>&, const Tensor<T>&,              \
                            const Tensor<T>&, int);                         \
  template Tensor<T> batchnorm1d(const Tensor<T>&, const Tensor<T>&,         \
                                 const Tensor<T>&, BatchNormStats<T>&, Mode, \
                                 const BatchNormOptions&);                  \
  template Tensor<T> relu(const Tensor<T>&);                                 \
  template Tensor<T> upsample_repeat(const Tensor<T>&, int);                 \
  template Tensor<T> avgpool1d(const Tensor<T>&, int);                       \
  template Tensor<T> mse_loss(const Tensor<T>&, const Tensor<T>&,            \
                              const std::vector<std::uint8_t>&);

SINV_INSTANTIATE(float)
SINV_INSTANTIATE(double)
#undef SINV_INSTANTIATE

}  // namespace sinv::nn
