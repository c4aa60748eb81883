#include "mlp.hpp"

namespace trend {

MlpSpec MlpSpec::make(std::vector<int> widths, Act hidden, Act last) {
  MlpSpec s;
  s.widths = std::move(widths);
  if (s.widths.size() < 2) fail_config("mlp: need at least input and output widths");
  for (int w : s.widths)
    if (w <= 0) fail_config("mlp: widths must be positive");
  s.acts.assign(s.widths.size() - 1, hidden);
  s.acts.back() = last;
  return s;
}

diff::Value mlp_forward(ParamCtx& ctx, const MlpSpec& spec, const std::string& prefix,
                        diff::Value x, double final_bias_fill) {
  if (spec.acts.size() + 1 != spec.widths.size()) fail_config("mlp: spec widths/acts mismatch");
  const diff::Shape& sx = x.shape();
  if (sx.size() != 2 || sx[1] != spec.widths.front())
    fail_config("mlp '" + prefix + "': input width " +
                std::to_string(sx.size() == 2 ? sx[1] : -1) + " != spec " +
                std::to_string(spec.widths.front()));
  diff::Value h = x;
  for (size_t l = 0; l + 1 < spec.widths.size(); ++l) {
    int in = spec.widths[l], out = spec.widths[l + 1];
    bool last = l + 2 == spec.widths.size();
    diff::Value w = ctx.param(prefix + ".w" + std::to_string(l), {in, out},
                              Init::uniform_fan_in, in);
    diff::Value b = ctx.param(prefix + ".b" + std::to_string(l), {out}, Init::zeros, 0,
                              last ? final_bias_fill : 0.0);
    h = diff::affine(h, w, b);
    switch (spec.acts[l]) {
      case Act::none:
        break;
      case Act::relu:
        h = diff::max_const(h, 0.0);
        break;
      case Act::softplus:
        h = diff::softplus(h);
        break;
    }
  }
  return h;
}

}  // namespace trend
