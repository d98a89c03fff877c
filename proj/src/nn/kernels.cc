// nn/kernels.cc

#include "sinv/nn/kernels.h"

#include <algorithm>
#include <cstdlib>
#include <string>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "sinv/error.h"

namespace sinv::nn::kernels {

namespace {

void check_sizes(const ConvGeometry& g, std::size_t x, std::size_t w,
                 std::size_t bias, std::size_t y) {
  require(g.batch > 0 && g.in_channels > 0 && g.out_channels > 0 &&
              g.frames > 0 && g.kernel > 0 && g.dilation > 0,
          "conv1d: non-positive geometry");
  require(x == g.input_size(), "conv1d: input size mismatch");
  require(w == g.weight_size(), "conv1d: weight size mismatch");
  require(bias == 0 || bias == std::size_t(g.out_channels),
          "conv1d: bias size mismatch");
  require(y == g.output_size(), "conv1d: output size mismatch");
}

}  // namespace

// ---------------------------------------------------------------------------
// Reference kernels.

namespace reference {

template <typename T>
void conv1d_forward(const ConvGeometry& g, std::span<const T> x,
                    std::span<const T> w, std::span<const T> bias,
                    std::span<T> y) {
  check_sizes(g, x.size(), w.size(), bias.size(), y.size());
  const int n = g.frames;
  for (int b = 0; b < g.batch; ++b) {
    for (int o = 0; o < g.out_channels; ++o) {
      for (int t = 0; t < n; ++t) {
        T sum = bias.empty() ? T(0) : bias[o];
        for (int c = 0; c < g.in_channels; ++c) {
          for (int k = 0; k < g.kernel; ++k) {
            int s = t + g.tap_offset(k);
            if (s < 0 || s >= n) continue;
            sum += w[(std::size_t(o) * g.in_channels + c) * g.kernel + k] *
                   x[(std::size_t(b) * g.in_channels + c) * n + s];
          }
        }
        y[(std::size_t(b) * g.out_channels + o) * n + t] = sum;
      }
    }
  }
}

template <typename T>
void conv1d_backward_input(const ConvGeometry& g, std::span<const T> dy,
                           std::span<const T> w, std::span<T> dx) {
  check_sizes(g, dx.size(), w.size(), 0, dy.size());
  const int n = g.frames;
  for (int b = 0; b < g.batch; ++b) {
    for (int o = 0; o < g.out_channels; ++o) {
      for (int t = 0; t < n; ++t) {
        T up = dy[(std::size_t(b) * g.out_channels + o) * n + t];
        for (int c = 0; c < g.in_channels; ++c) {
          for (int k = 0; k < g.kernel; ++k) {
            int s = t + g.tap_offset(k);
            if (s < 0 || s >= n) continue;
            dx[(std::size_t(b) * g.in_channels + c) * n + s] +=
                up * w[(std::size_t(o) * g.in_channels + c) * g.kernel + k];
          }
        }
      }
    }
  }
}

template <typename T>
void conv1d_backward_params(const ConvGeometry& g, std::span<const T> x,
                            std::span<const T> dy, std::span<T> dw,
                            std::span<T> dbias) {
  check_sizes(g, x.size(), dw.size(), dbias.size(), dy.size());
  const int n = g.frames;
  for (int b = 0; b < g.batch; ++b) {
    for (int o = 0; o < g.out_channels; ++o) {
      for (int t = 0; t < n; ++t) {
        T up = dy[(std::size_t(b) * g.out_channels + o) * n + t];
        if (!dbias.empty()) dbias[o] += up;
        for (int c = 0; c < g.in_channels; ++c) {
          for (int k = 0; k < g.kernel; ++k) {
            int s = t + g.tap_offset(k);
            if (s < 0 || s >= n) continue;
            dw[(std::size_t(o) * g.in_channels + c) * g.kernel + k] +=
                up * x[(std::size_t(b) * g.in_channels + c) * n + s];
          }
        }
      }
    }
  }
}

}  // namespace reference

// ---------------------------------------------------------------------------
// Tiled kernels.

namespace parallel {

namespace {

// Frames per register tile: two 512-bit vectors.
template <typename T>
constexpr int kTile = 128 / sizeof(T);
constexpr int kOutBlock = 4;

int round_up(int v, int m) { return (v + m - 1) / m * m; }

// Copies x (batch, channels, frames) into a zero-padded buffer with
// `left` zeros before each row and row width `width`.
template <typename T>
std::vector<T> pad_rows(std::span<const T> x, int rows, int frames, int left,
                        int width) {
  std::vector<T> out(std::size_t(rows) * width, T(0));
  for (int r = 0; r < rows; ++r) {
    std::copy_n(x.data() + std::size_t(r) * frames, frames,
                out.data() + std::size_t(r) * width + left);
  }
  return out;
}

// acc[i][j] = sum_{c,k} w[o0+i, c, k] * xpad[c, t0 + j + k*dil]
template <typename T, int OB>
inline void forward_tile(const T* xpad, int width, const T* w, int cin,
                         int kernel, int dil, int o0, int t0,
                         T (&acc)[OB][kTile<T>]) {
  constexpr int TT = kTile<T>;
  for (int c = 0; c < cin; ++c) {
    const T* row = xpad + std::size_t(c) * width + t0;
    for (int k = 0; k < kernel; ++k) {
      const T* xs = row + k * dil;
      T wv[OB];
      for (int i = 0; i < OB; ++i)
        wv[i] = w[(std::size_t(o0 + i) * cin + c) * kernel + k];
#pragma GCC unroll 8
      for (int j = 0; j < TT; ++j) {
        T xv = xs[j];
        for (int i = 0; i < OB; ++i) acc[i][j] += wv[i] * xv;
      }
    }
  }
}

// Shared forward driver: x already padded (batch*cin rows of `width`).
template <typename T>
void forward_padded(const ConvGeometry& g, const std::vector<T>& xpad,
                    int width, const T* w, const T* bias, T* y) {
  constexpr int TT = kTile<T>;
  const int n = g.frames;
  const int tiles = round_up(n, TT) / TT;
  const int oblocks = (g.out_channels + kOutBlock - 1) / kOutBlock;
  const long work = long(g.batch) * oblocks * tiles;
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
  for (long item = 0; item < work; ++item) {
    const int b = int(item / (long(oblocks) * tiles));
    const int rem = int(item % (long(oblocks) * tiles));
    const int ob = rem / tiles;
    const int t0 = (rem % tiles) * TT;
    const int o0 = ob * kOutBlock;
    const T* xb = xpad.data() + std::size_t(b) * g.in_channels * width;
    const int valid = std::min(TT, n - t0);
    if (o0 + kOutBlock <= g.out_channels) {
      T acc[kOutBlock][TT];
      for (int i = 0; i < kOutBlock; ++i)
        for (int j = 0; j < TT; ++j) acc[i][j] = bias ? bias[o0 + i] : T(0);
      forward_tile<T, kOutBlock>(xb, width, w, g.in_channels, g.kernel,
                                 g.dilation, o0, t0, acc);
      for (int i = 0; i < kOutBlock; ++i)
        std::copy_n(acc[i], valid,
                    y + (std::size_t(b) * g.out_channels + o0 + i) * n + t0);
    } else {
      for (int o = o0; o < g.out_channels; ++o) {
        T acc[1][TT];
        for (int j = 0; j < TT; ++j) acc[0][j] = bias ? bias[o] : T(0);
        forward_tile<T, 1>(xb, width, w, g.in_channels, g.kernel, g.dilation,
                           o, t0, acc);
        std::copy_n(acc[0], valid,
                    y + (std::size_t(b) * g.out_channels + o) * n + t0);
      }
    }
  }
}

}  // namespace

template <typename T>
void conv1d_forward(const ConvGeometry& g, std::span<const T> x,
                    std::span<const T> w, std::span<const T> bias,
                    std::span<T> y) {
  check_sizes(g, x.size(), w.size(), bias.size(), y.size());
  const int left = (g.kernel / 2) * g.dilation;
  const int width = round_up(g.frames, kTile<T>) + (g.kernel - 1) * g.dilation;
  auto xpad = pad_rows(x, g.batch * g.in_channels, g.frames, left, width);
  forward_padded(g, xpad, width, w.data(), bias.empty() ? nullptr : bias.data(),
                 y.data());
}

template <typename T>
void conv1d_backward_input(const ConvGeometry& g, std::span<const T> dy,
                           std::span<const T> w, std::span<T> dx) {
  check_sizes(g, dx.size(), w.size(), 0, dy.size());
  // dx is a convolution of dy with the transposed, tap-reversed kernel.
  ConvGeometry t = g;
  std::swap(t.in_channels, t.out_channels);
  std::vector<T> wt(w.size());
  for (int o = 0; o < g.out_channels; ++o)
    for (int c = 0; c < g.in_channels; ++c)
      for (int k = 0; k < g.kernel; ++k)
        wt[(std::size_t(c) * g.out_channels + o) * g.kernel +
           (g.kernel - 1 - k)] =
            w[(std::size_t(o) * g.in_channels + c) * g.kernel + k];
  // Reversing taps maps offset (k - K/2)d to -(k - K/2)d only for odd K;
  // for even K the left pad shifts by one dilation step.
  const int left = (g.kernel - 1 - g.kernel / 2) * g.dilation;
  const int width = round_up(g.frames, kTile<T>) + (g.kernel - 1) * g.dilation;
  auto dypad = pad_rows(dy, g.batch * g.out_channels, g.frames, left, width);
  std::vector<T> out(dx.size());
  forward_padded(t, dypad, width, wt.data(), static_cast<const T*>(nullptr),
                 out.data());
  for (std::size_t i = 0; i < out.size(); ++i) dx[i] += out[i];
}

template <typename T>
void conv1d_backward_params(const ConvGeometry& g, std::span<const T> x,
                            std::span<const T> dy, std::span<T> dw,
                            std::span<T> dbias) {
  check_sizes(g, x.size(), dw.size(), dbias.size(), dy.size());
  constexpr int L = 64 / sizeof(T);  // lanes of one vector
  constexpr int CB = 4;
  const int n = g.frames;
  const int span_len = round_up(n, L);
  const int left = (g.kernel / 2) * g.dilation;
  const int width = span_len + (g.kernel - 1) * g.dilation;
  auto xpad = pad_rows(x, g.batch * g.in_channels, n, left, width);
  auto dypad = pad_rows(dy, g.batch * g.out_channels, n, 0, span_len);

  const int oblocks = (g.out_channels + kOutBlock - 1) / kOutBlock;
  const int cblocks = (g.in_channels + CB - 1) / CB;
  const long work = long(oblocks) * cblocks * g.kernel;
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
  for (long item = 0; item < work; ++item) {
    const int k = int(item % g.kernel);
    const int cb = int((item / g.kernel) % cblocks);
    const int ob = int(item / (long(g.kernel) * cblocks));
    const int o0 = ob * kOutBlock, c0 = cb * CB;
    const int on = std::min(kOutBlock, g.out_channels - o0);
    const int cn = std::min(CB, g.in_channels - c0);
    T acc[kOutBlock][CB][L] = {};
    for (int b = 0; b < g.batch; ++b) {
      const T* dyr[kOutBlock];
      const T* xr[CB];
      for (int i = 0; i < kOutBlock; ++i)
        dyr[i] = dypad.data() +
                 (std::size_t(b) * g.out_channels + o0 + std::min(i, on - 1)) *
                     span_len;
      for (int j = 0; j < CB; ++j)
        xr[j] = xpad.data() +
                (std::size_t(b) * g.in_channels + c0 + std::min(j, cn - 1)) *
                    width +
                k * g.dilation;
      for (int t = 0; t < span_len; t += L) {
        for (int i = 0; i < kOutBlock; ++i)
          for (int j = 0; j < CB; ++j)
#pragma GCC unroll 16
            for (int l = 0; l < L; ++l)
              acc[i][j][l] += dyr[i][t + l] * xr[j][t + l];
      }
    }
    for (int i = 0; i < on; ++i) {
      for (int j = 0; j < cn; ++j) {
        T s = 0;
        for (int l = 0; l < L; ++l) s += acc[i][j][l];
        dw[(std::size_t(o0 + i) * g.in_channels + c0 + j) * g.kernel + k] += s;
      }
    }
  }
  if (!dbias.empty()) {
    for (int o = 0; o < g.out_channels; ++o) {
      T s = 0;
      for (int b = 0; b < g.batch; ++b) {
        const T* r = dy.data() + (std::size_t(b) * g.out_channels + o) * n;
        for (int t = 0; t < n; ++t) s += r[t];
      }
      dbias[o] += s;
    }
  }
}

}  // namespace parallel

#define SINV_INSTANTIATE(T)                                                   \
  template void reference::conv1d_forward<T>(                                 \
      const ConvGeometry&, std::span<const T>, std::span<const T>,            \
      std::span<const T>, std::span<T>);                                      \
  template void reference::conv1d_backward_input<T>(                          \
      const ConvGeometry&, std::span<const T>, std::span<const T>,            \
      std::span<T>);                                                          \
  template void reference::conv1d_backward_params<T>(                         \
      const ConvGeometry&, std::span<const T>, std::span<const T>,            \
      std::span<T>, std::span<T>);                                            \
  template void parallel::conv1d_forward<T>(                                  \
      const ConvGeometry&, std::span<const T>, std::span<const T>,            \
      std::span<const T>, std::span<T>);                                      \
  template void parallel::conv1d_backward_input<T>(                           \
      const ConvGeometry&, std::span<const T>, std::span<const T>,            \
      std::span<T>);                                                          \
  template void parallel::conv1d_backward_params<T>(                          \
      const ConvGeometry&, std::span<const T>, std::span<const T>,            \
      std::span<T>, std::span<T>);

SINV_INSTANTIATE(float)
SINV_INSTANTIATE(double)
#undef SINV_INSTANTIATE

int num_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

void set_num_threads(int n) {
  require(n >= 1, "thread count must be >= 1");
#ifdef _OPENMP
  omp_set_num_threads(n);
#endif
}

int configure_threads_from_env() {
  if (const char* v = std::getenv("SINV_NUM_THREADS")) {
    int n = 0;
    try {
      n = std::stoi(v);
    } catch (const std::exception&) {
      fail(ErrorKind::kConfig, std::string("bad SINV_NUM_THREADS: ") + v);
    }
    if (n < 1) fail(ErrorKind::kConfig, "SINV_NUM_THREADS must be >= 1");
    set_num_threads(n);
  }
  return num_threads();
}

}  // namespace sinv::nn::kernels
