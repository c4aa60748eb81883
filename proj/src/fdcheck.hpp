#pragma once

#include <functional>
#include <string>

#include "params.hpp"

namespace trend {

struct FdResult {
  double max_rel_err = 0.0;
  std::string worst_param;  // "name[i]"
  double analytic = 0.0;
  double numeric = 0.0;
  bool finite = true;
  std::string message;
};

// Rebuilds the loss from the current store contents; must be deterministic.
using LossBuilder = std::function<diff::Value(ParamCtx&)>;

// Central finite differences against tape gradients: max over all parameter
// elements of |analytic - fd| / (|fd| + eps) at the given step.
//
// Piecewise-smooth losses (relu, abs, the alpha clamp) need care: a central
// difference is only a derivative estimate where the function is smooth
// across the step. Elements whose coarse-step error exceeds the tolerance
// are re-checked at step/64, and a kink sitting exactly on the evaluation
// point is accepted when the analytic value lies between the two one-sided
// slopes. A genuinely wrong gradient fails all three tiers.
FdResult finite_difference_check(ParamStore& store, const LossBuilder& build, double step,
                                 const std::string& fault_op = "", double tol = 1e-4);

}  // namespace trend
