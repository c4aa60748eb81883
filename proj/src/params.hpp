#pragma once

#include <map>
#include <string>
#include <vector>

#include "tape.hpp"

namespace trend {

// Named trainable array plus Adam moments. Shape is fixed at creation.
struct Param {
  diff::Shape shape;
  std::vector<double> value;
  std::vector<double> m, v;  // optimizer state
  bool requires_grad = true;
};

enum class Init { uniform_fan_in, zeros };

// Ordered name -> Param map. Initialization is a pure function of
// (store seed, parameter name), so creation order never matters.
class ParamStore {
 public:
  explicit ParamStore(uint64_t seed = 0) : seed_(seed) {}

  Param& ensure(const std::string& name, diff::Shape shape, Init init, int fan_in = 0,
                double bias_fill = 0.0);
  // Direct insertion/overwrite, used when restoring from a checkpoint.
  void insert(const std::string& name, Param p) { params_[name] = std::move(p); }
  void clear() { params_.clear(); }
  bool has(const std::string& name) const { return params_.count(name) != 0; }
  Param& at(const std::string& name);
  const Param& at(const std::string& name) const;

  std::map<std::string, Param>& all() { return params_; }
  const std::map<std::string, Param>& all() const { return params_; }
  std::vector<std::string> names() const;

  uint64_t seed() const { return seed_; }
  int64_t total_elems() const;

 private:
  std::map<std::string, Param> params_;
  uint64_t seed_;
};

// Per-tape binding of parameters to leaf nodes. Re-requesting a name returns
// the existing node, which is what shares weights across recurrent steps.
struct ParamCtx {
  diff::Tape& tape;
  ParamStore& store;
  std::map<std::string, int> bound;

  ParamCtx(diff::Tape& t, ParamStore& s) : tape(t), store(s) {}

  diff::Value param(const std::string& name, diff::Shape shape, Init init, int fan_in = 0,
                    double bias_fill = 0.0);

  // gradients of all bound parameters after tape.backward()
  std::map<std::string, std::vector<double>> grads() const;
};

}  // namespace trend
