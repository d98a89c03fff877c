// nn/gradcheck.cc

#include "sinv/nn/gradcheck.h"

#include <algorithm>
#include <cmath>

#include "sinv/error.h"
#include "sinv/nn/ops.h"

namespace sinv::nn {

namespace {

struct Evaluated {
  double loss;
  std::uint64_t relu_hash;
};

Evaluated evaluate(const std::function<Tensor<double>()>& loss_fn) {
  ReluTrace trace;
  set_relu_trace(&trace);
  Tensor<double> loss;
  try {
    loss = loss_fn();
  } catch (...) {
    set_relu_trace(nullptr);
    throw;
  }
  set_relu_trace(nullptr);
  return {loss.item(), trace.hash};
}

}  // namespace

GradCheckResult grad_check(const std::function<Tensor<double>()>& loss_fn,
                           const std::vector<Tensor<double>>& params,
                           const GradCheckOptions& opt) {
  require(!params.empty(), "grad_check: no parameters");
  std::vector<Tensor<double>> ps = params;
  for (auto& p : ps) p.zero_grad();
  ReluTrace base_trace;
  set_relu_trace(&base_trace);
  Tensor<double> loss = loss_fn();
  set_relu_trace(nullptr);
  backward(loss);
  const std::uint64_t base_hash = base_trace.hash;

  std::vector<std::vector<double>> analytic;
  std::size_t total = 0;
  for (auto& p : ps) {
    analytic.emplace_back(p.grad().begin(), p.grad().end());
    total += p.numel();
  }

  GradCheckResult res;
  SplitMix64 rng(opt.seed);
  const int max_draws = opt.samples * 20;
  for (int draw = 0; draw < max_draws && res.checked < opt.samples; ++draw) {
    std::size_t flat = rng.below(total);
    std::size_t ti = 0;
    while (flat >= ps[ti].numel()) flat -= ps[ti++].numel();
    auto vals = ps[ti].values();
    const double orig = vals[flat];
    vals[flat] = orig + opt.step;
    Evaluated plus = evaluate(loss_fn);
    vals[flat] = orig - opt.step;
    Evaluated minus = evaluate(loss_fn);
    vals[flat] = orig;
    if (opt.skip_kinks &&
        (plus.relu_hash != base_hash || minus.relu_hash != base_hash)) {
      ++res.skipped_kinks;
      continue;
    }
    const double numeric = (plus.loss - minus.loss) / (2 * opt.step);
    const double a = analytic[ti][flat];
    const double denom =
        std::max({std::abs(a), std::abs(numeric), opt.denom_floor});
    const double rel = std::abs(a - numeric) / denom;
    if (rel > res.max_rel_error || res.checked == 0) {
      res.max_rel_error = std::max(res.max_rel_error, rel);
      res.worst = "param" + std::to_string(ti) + "[" + std::to_string(flat) + "]";
    }
    ++res.checked;
  }
  return res;
}

GradCheckResult grad_check(TcnModel<double>& model, const Tensor<double>& input,
                           const Tensor<double>& target,
                           const GradCheckOptions& opt) {
  const std::size_t B = target.dim(0), N = target.dim(2);
  const std::vector<std::uint8_t> mask(B * N, 1);
  model.set_update_running(false);
  auto loss_fn = [&]() {
    auto pred = model.forward(input, Mode::kTrain);
    return mse_loss(pred, target, mask);
  };
  GradCheckResult r;
  try {
    r = grad_check(loss_fn, model.parameters(), opt);
  } catch (...) {
    model.set_update_running(true);
    throw;
  }
  model.set_update_running(true);
  return r;
}

}  // namespace sinv::nn
