// eval/ppmc.cc

#include "sinv/eval/ppmc.h"

#include <algorithm>
#include <cmath>

#include "sinv/error.h"

namespace sinv::eval {

namespace {

// Neumaier summation.
struct Sum {
  double s = 0, c = 0;
  void add(double v) {
    const double t = s + v;
    c += std::abs(s) >= std::abs(v) ? (s - t) + v : (v - t) + s;
    s = t;
  }
  double value() const { return s + c; }
};

}  // namespace

PpmcResult ppmc(std::span<const double> x, std::span<const double> y) {
  require(x.size() == y.size(), "ppmc: sequences differ in length");
  require(x.size() >= 2, "ppmc: need at least two frames");
  PpmcResult r;
  // Exact constancy test; a rounded mean would leave tiny residuals.
  auto constant = [](std::span<const double> v) {
    for (double e : v)
      if (e != v[0]) return false;
    return true;
  };
  if (constant(x) || constant(y)) {
    r.degenerate = true;
    return r;
  }
  const double n = double(x.size());
  Sum sx, sy;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sx.add(x[i]);
    sy.add(y[i]);
  }
  const double mx = sx.value() / n, my = sy.value() / n;
  Sum sxy, sxx, syy;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - mx, dy = y[i] - my;
    sxy.add(dx * dy);
    sxx.add(dx * dx);
    syy.add(dy * dy);
  }
  const double den = std::sqrt(sxx.value()) * std::sqrt(syy.value());
  if (!(den > 0)) {
    r.degenerate = true;
    return r;
  }
  r.value = std::clamp(sxy.value() / den, -1.0, 1.0);
  return r;
}

}  // namespace sinv::eval
