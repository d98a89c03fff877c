// sinv/nn/gradcheck.h

#ifndef SINV_NN_GRADCHECK_H_
#define SINV_NN_GRADCHECK_H_

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "sinv/nn/tcn.h"
#include "sinv/nn/tensor.h"

namespace sinv::nn {

struct GradCheckOptions {
  int samples = 200;         // parameter elements compared
  double step = 1e-5;        // central-difference step
  double denom_floor = 1e-6; // relative error = |a-n| / max(|a|, |n|, floor)
  std::uint64_t seed = 1234;
  // Resample elements whose +-step perturbation flips any ReLU.
  bool skip_kinks = true;
};

struct GradCheckResult {
  double max_rel_error = 0;
  int checked = 0;
  int skipped_kinks = 0;
  std::string worst;  // "tensor[index]" of the worst element
};

// Compares d(loss)/d(param) from backward() against central differences on
// randomly sampled elements of `params`. loss_fn must rebuild the graph from
// the current parameter values on every call.
GradCheckResult grad_check(const std::function<Tensor<double>()>& loss_fn,
                           const std::vector<Tensor<double>>& params,
                           const GradCheckOptions& opt = {});

// Train-mode masked-MSE check of a whole model (running statistics frozen).
GradCheckResult grad_check(TcnModel<double>& model, const Tensor<double>& input,
                           const Tensor<double>& target,
                           const GradCheckOptions& opt = {});

}  // namespace sinv::nn

#endif  // SINV_NN_GRADCHECK_H_
