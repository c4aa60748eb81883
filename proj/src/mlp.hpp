#pragma once

#include <string>
#include <vector>

#include "params.hpp"

namespace trend {

enum class Act { none, relu, softplus };

// widths = [in, h1, ..., out]; acts has one entry per weight layer
struct MlpSpec {
  std::vector<int> widths;
  std::vector<Act> acts;

  static MlpSpec make(std::vector<int> widths, Act hidden, Act last);
};

// Affine+activation stack on the tape. Parameters are created on first use
// as prefix.w<i>/prefix.b<i>; the final layer's bias can be seeded away
// from zero via final_bias_fill.
diff::Value mlp_forward(ParamCtx& ctx, const MlpSpec& spec, const std::string& prefix,
                        diff::Value x, double final_bias_fill = 0.0);

}  // namespace trend
