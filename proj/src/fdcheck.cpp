#include "fdcheck.hpp"

#include <algorithm>
#include <cmath>

namespace trend {

namespace {
constexpr double kDenomEps = 1e-8;

double eval_loss(ParamStore& store, const LossBuilder& build) {
  diff::Tape tape;
  ParamCtx ctx(tape, store);
  diff::Value root = build(ctx);
  return root.scalar();
}
}  // namespace

FdResult finite_difference_check(ParamStore& store, const LossBuilder& build, double step,
                                 const std::string& fault_op, double tol) {
  FdResult res;

  double f0 = 0;
  std::map<std::string, std::vector<double>> analytic;
  {
    diff::Tape tape;
    if (!fault_op.empty()) tape.set_fault_op(fault_op);
    ParamCtx ctx(tape, store);
    diff::Value root = build(ctx);
    f0 = root.scalar();
    if (!std::isfinite(f0)) {
      res.finite = false;
      res.message = "non-finite loss at base point";
      return res;
    }
    tape.backward(root);
    analytic = ctx.grads();
  }

  for (auto& kv : analytic) {
    const std::string& name = kv.first;
    Param& p = store.at(name);
    if (!p.requires_grad) continue;
    for (size_t i = 0; i < p.value.size(); ++i) {
      double keep = p.value[i];
      auto probe = [&](double h, double& fp, double& fm) {
        p.value[i] = keep + h;
        fp = eval_loss(store, build);
        p.value[i] = keep - h;
        fm = eval_loss(store, build);
        p.value[i] = keep;
        return std::isfinite(fp) && std::isfinite(fm);
      };

      double fp = 0, fm = 0;
      if (!probe(step, fp, fm)) {
        res.finite = false;
        res.message = "non-finite loss while perturbing '" + name + "'";
        res.worst_param = name;
        return res;
      }
      double an = kv.second[i];
      double fd = (fp - fm) / (2.0 * step);
      double err = std::fabs(an - fd) / (std::fabs(fd) + kDenomEps);

      if (err > tol) {
        // possible kink inside [keep-step, keep+step]; re-estimate closer in
        double fine = step / 64.0;
        double fpf = 0, fmf = 0;
        if (!probe(fine, fpf, fmf)) {
          res.finite = false;
          res.message = "non-finite loss while perturbing '" + name + "'";
          res.worst_param = name;
          return res;
        }
        double fd_fine = (fpf - fmf) / (2.0 * fine);
        double err_fine = std::fabs(an - fd_fine) / (std::fabs(fd_fine) + kDenomEps);
        if (err_fine < err) {
          fd = fd_fine;
          err = err_fine;
        }
        if (err > tol) {
          // kink exactly at the point: any subgradient between the one-sided
          // slopes is correct
          double g_plus = (fpf - f0) / fine;
          double g_minus = (f0 - fmf) / fine;
          double lo = std::min(g_plus, g_minus), hi = std::max(g_plus, g_minus);
          double slack = tol * (std::fabs(g_plus) + std::fabs(g_minus) + kDenomEps);
          if (an >= lo - slack && an <= hi + slack) err = 0.0;
        }
      }

      if (err > res.max_rel_err) {
        res.max_rel_err = err;
        res.worst_param = name + "[" + std::to_string(i) + "]";
        res.analytic = an;
        res.numeric = fd;
      }
    }
  }
  return res;
}

}  // namespace trend
