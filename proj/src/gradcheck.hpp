#pragma once

#include <string>
#include <vector>

#include "config.hpp"

namespace trend {

struct GradcheckItem {
  std::string name;
  double max_rel_err = 0;
  std::string worst_param;
  bool pass = false;
  bool finite = true;
};

struct GradcheckReport {
  std::vector<GradcheckItem> items;
  double tolerance = 1e-4;
  bool all_pass = false;
  double seconds = 0;
};

// Finite-difference sweep over micro instances of every differentiable
// composite: encodings, interpolation, the field, the render equations,
// the loss and one recurrent step. cfg.fault_op corrupts the backward
// rule of the named op so harness failures are detectable.
GradcheckReport run_gradcheck(const RunConfig& cfg);

std::string format_gradcheck(const GradcheckReport& report);

}  // namespace trend
