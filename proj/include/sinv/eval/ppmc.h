// sinv/eval/ppmc.h
//
// Pearson product-moment correlation over frames.

#ifndef SINV_EVAL_PPMC_H_
#define SINV_EVAL_PPMC_H_

#include <span>

namespace sinv::eval {

struct PpmcResult {
  double value = 0;
  // Set when either sequence is constant; value is then 0.
  bool degenerate = false;
};

// sum (x - mx)(y - my) / sqrt(sum (x - mx)^2 * sum (y - my)^2). Requires
// equal lengths of at least 2. Computed in two passes with compensated sums.
PpmcResult ppmc(std::span<const double> x, std::span<const double> y);

}  // namespace sinv::eval

#endif  // SINV_EVAL_PPMC_H_
