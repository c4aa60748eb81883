#include "params.hpp"

#include <cmath>

namespace trend {

Param& ParamStore::ensure(const std::string& name, diff::Shape shape, Init init, int fan_in,
                          double bias_fill) {
  auto it = params_.find(name);
  if (it != params_.end()) {
    if (!diff::same_shape(it->second.shape, shape))
      fail_config("parameter shape change for '" + name + "'");
    return it->second;
  }
  Param p;
  p.shape = std::move(shape);
  int64_t n = diff::numel(p.shape);
  p.value.assign(size_t(n), bias_fill);
  p.m.assign(size_t(n), 0.0);
  p.v.assign(size_t(n), 0.0);
  if (init == Init::uniform_fan_in) {
    if (fan_in <= 0) fail_config("uniform init needs positive fan_in for '" + name + "'");
    double bound = 1.0 / std::sqrt(double(fan_in));
    Rng rng(mix_seed(seed_, fnv1a64(name)));
    for (double& x : p.value) x = rng.uniform(-bound, bound);
  }
  return params_.emplace(name, std::move(p)).first->second;
}

Param& ParamStore::at(const std::string& name) {
  auto it = params_.find(name);
  if (it == params_.end()) fail_config("unknown parameter '" + name + "'");
  return it->second;
}

const Param& ParamStore::at(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end()) fail_config("unknown parameter '" + name + "'");
  return it->second;
}

std::vector<std::string> ParamStore::names() const {
  std::vector<std::string> out;
  out.reserve(params_.size());
  for (const auto& kv : params_) out.push_back(kv.first);
  return out;
}

int64_t ParamStore::total_elems() const {
  int64_t n = 0;
  for (const auto& kv : params_) n += diff::numel(kv.second.shape);
  return n;
}

diff::Value ParamCtx::param(const std::string& name, diff::Shape shape, Init init, int fan_in,
                            double bias_fill) {
  auto it = bound.find(name);
  if (it != bound.end()) return diff::Value{&tape, it->second};
  Param& p = store.ensure(name, std::move(shape), init, fan_in, bias_fill);
  diff::Value v = diff::leaf(tape, p.shape, p.value, p.requires_grad);
  bound.emplace(name, v.id);
  return v;
}

std::map<std::string, std::vector<double>> ParamCtx::grads() const {
  std::map<std::string, std::vector<double>> out;
  for (const auto& kv : bound) {
    const diff::Node& n = tape.node(kv.second);
    if (n.grad.empty())
      out.emplace(kv.first, std::vector<double>(size_t(diff::numel(n.shape)), 0.0));
    else
      out.emplace(kv.first, n.grad);
  }
  return out;
}

}  // namespace trend
