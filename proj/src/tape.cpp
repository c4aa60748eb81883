#include "tape.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace trend::diff {

int64_t numel(const Shape& s) {
  int64_t n = 1;
  for (int d : s) n *= d;
  return n;
}

bool same_shape(const Shape& a, const Shape& b) { return a == b; }

std::string shape_str(const Shape& s) {
  std::string out = "[";
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

const Shape& Value::shape() const { return tape->shape(id); }
const std::vector<double>& Value::val() const { return tape->val(id); }

double Value::scalar() const {
  if (numel(shape()) != 1) fail_config("Value::scalar on non-scalar node " + shape_str(shape()));
  return val()[0];
}

void Tape::quantize(std::vector<double>& v) const {
  if (!round_f32_) return;
  for (double& x : v) x = double(float(x));
}

Value Tape::push(Node n) {
  if (int64_t(n.val.size()) != numel(n.shape))
    fail_config("tape node data/shape mismatch for op " + std::string(n.op));
  quantize(n.val);
  nodes_.push_back(std::move(n));
  return Value{this, int(nodes_.size() - 1)};
}

std::vector<double>& Tape::grad_buf(int id) {
  Node& n = nodes_[size_t(id)];
  if (n.grad.empty()) n.grad.assign(size_t(numel(n.shape)), 0.0);
  return n.grad;
}

void Tape::accum(int id, const std::vector<double>& g) {
  Node& n = nodes_[size_t(id)];
  if (!n.requires_grad) return;
  std::vector<double>& buf = grad_buf(id);
  for (size_t i = 0; i < buf.size(); ++i) buf[i] += g[i];
  quantize(buf);
}

void Tape::backward(Value root) {
  if (root.tape != this) fail_config("backward: root belongs to another tape");
  if (numel(shape(root.id)) != 1) fail_config("backward: root must be scalar");
  grad_buf(root.id)[0] = 1.0;
  for (int i = root.id; i >= 0; --i) {
    Node& n = nodes_[size_t(i)];
    if (n.grad.empty() || !n.back) continue;
    if (!fault_op_.empty() && fault_op_ == n.op)
      for (double& g : n.grad) g *= 1.01;
    n.back(*this, i);
  }
}

void backward(Tape& t, Value root) { t.backward(root); }

// ---------------------------------------------------------------------------

namespace {

Tape& tp(Value v) {
  if (!v.valid()) fail_config("use of invalid tape value");
  return *v.tape;
}

bool req(Value v) { return tp(v).needs_grad(v.id); }

void check_same_tape(Value a, Value b) {
  if (a.tape != b.tape) fail_config("tape op across different tapes");
}

Value unary_map(Value a, const char* op, double (*f)(double), double (*df)(double)) {
  Tape& t = tp(a);
  Node n;
  n.op = op;
  n.shape = a.shape();
  n.val.resize(a.val().size());
  for (size_t i = 0; i < n.val.size(); ++i) n.val[i] = f(a.val()[i]);
  n.parents = {a.id};
  n.requires_grad = req(a);
  int aid = a.id;
  n.back = [aid, df](Tape& t2, int self) {
    const Node& s = t2.node(self);
    const std::vector<double>& av = t2.val(aid);
    std::vector<double> g(s.grad.size());
    for (size_t i = 0; i < g.size(); ++i) g[i] = s.grad[i] * df(av[i]);
    t2.accum(aid, g);
  };
  return t.push(std::move(n));
}

double stable_sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  double e = std::exp(x);
  return e / (1.0 + e);
}

double stable_softplus(double x) {
  // log(1 + e^x), saturating to x for large x
  if (x > 30) return x;
  if (x < -30) return std::exp(x);
  return std::log1p(std::exp(x));
}

}  // namespace

Value leaf(Tape& t, Shape shape, std::vector<double> data, bool requires_grad) {
  Node n;
  n.op = "leaf";
  n.shape = std::move(shape);
  n.val = std::move(data);
  n.requires_grad = requires_grad;
  return t.push(std::move(n));
}

Value constant(Tape& t, Shape shape, std::vector<double> data) {
  return leaf(t, std::move(shape), std::move(data), false);
}

Value scalar_const(Tape& t, double v) { return constant(t, {1}, {v}); }

Value add(Value a, Value b) {
  check_same_tape(a, b);
  if (!same_shape(a.shape(), b.shape()))
    fail_config("add: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  Tape& t = tp(a);
  Node n;
  n.op = "add";
  n.shape = a.shape();
  n.val.resize(a.val().size());
  for (size_t i = 0; i < n.val.size(); ++i) n.val[i] = a.val()[i] + b.val()[i];
  n.parents = {a.id, b.id};
  n.requires_grad = req(a) || req(b);
  int aid = a.id, bid = b.id;
  n.back = [aid, bid](Tape& t2, int self) {
    const Node& s = t2.node(self);
    t2.accum(aid, s.grad);
    t2.accum(bid, s.grad);
  };
  return t.push(std::move(n));
}

Value sub(Value a, Value b) {
  check_same_tape(a, b);
  if (!same_shape(a.shape(), b.shape())) fail_config("sub: shape mismatch");
  Tape& t = tp(a);
  Node n;
  n.op = "sub";
  n.shape = a.shape();
  n.val.resize(a.val().size());
  for (size_t i = 0; i < n.val.size(); ++i) n.val[i] = a.val()[i] - b.val()[i];
  n.parents = {a.id, b.id};
  n.requires_grad = req(a) || req(b);
  int aid = a.id, bid = b.id;
  n.back = [aid, bid](Tape& t2, int self) {
    const Node& s = t2.node(self);
    t2.accum(aid, s.grad);
    if (t2.needs_grad(bid)) {
      std::vector<double> g(s.grad.size());
      for (size_t i = 0; i < g.size(); ++i) g[i] = -s.grad[i];
      t2.accum(bid, g);
    }
  };
  return t.push(std::move(n));
}

Value mul(Value a, Value b) {
  check_same_tape(a, b);
  if (!same_shape(a.shape(), b.shape())) fail_config("mul: shape mismatch");
  Tape& t = tp(a);
  Node n;
  n.op = "mul";
  n.shape = a.shape();
  n.val.resize(a.val().size());
  for (size_t i = 0; i < n.val.size(); ++i) n.val[i] = a.val()[i] * b.val()[i];
  n.parents = {a.id, b.id};
  n.requires_grad = req(a) || req(b);
  int aid = a.id, bid = b.id;
  n.back = [aid, bid](Tape& t2, int self) {
    const Node& s = t2.node(self);
    if (t2.needs_grad(aid)) {
      const std::vector<double>& bv = t2.val(bid);
      std::vector<double> g(s.grad.size());
      for (size_t i = 0; i < g.size(); ++i) g[i] = s.grad[i] * bv[i];
      t2.accum(aid, g);
    }
    if (t2.needs_grad(bid)) {
      const std::vector<double>& av = t2.val(aid);
      std::vector<double> g(s.grad.size());
      for (size_t i = 0; i < g.size(); ++i) g[i] = s.grad[i] * av[i];
      t2.accum(bid, g);
    }
  };
  return t.push(std::move(n));
}

Value vdiv(Value a, Value b) {
  check_same_tape(a, b);
  if (!same_shape(a.shape(), b.shape())) fail_config("vdiv: shape mismatch");
  Tape& t = tp(a);
  Node n;
  n.op = "div";
  n.shape = a.shape();
  n.val.resize(a.val().size());
  for (size_t i = 0; i < n.val.size(); ++i) n.val[i] = a.val()[i] / b.val()[i];
  n.parents = {a.id, b.id};
  n.requires_grad = req(a) || req(b);
  int aid = a.id, bid = b.id;
  n.back = [aid, bid](Tape& t2, int self) {
    const Node& s = t2.node(self);
    const std::vector<double>& av = t2.val(aid);
    const std::vector<double>& bv = t2.val(bid);
    if (t2.needs_grad(aid)) {
      std::vector<double> g(s.grad.size());
      for (size_t i = 0; i < g.size(); ++i) g[i] = s.grad[i] / bv[i];
      t2.accum(aid, g);
    }
    if (t2.needs_grad(bid)) {
      std::vector<double> g(s.grad.size());
      for (size_t i = 0; i < g.size(); ++i) g[i] = -s.grad[i] * av[i] / (bv[i] * bv[i]);
      t2.accum(bid, g);
    }
  };
  return t.push(std::move(n));
}

Value neg(Value a) { return scale(a, -1.0); }

Value scale(Value a, double c) {
  Tape& t = tp(a);
  Node n;
  n.op = "scale";
  n.shape = a.shape();
  n.val.resize(a.val().size());
  for (size_t i = 0; i < n.val.size(); ++i) n.val[i] = a.val()[i] * c;
  n.parents = {a.id};
  n.requires_grad = req(a);
  int aid = a.id;
  n.back = [aid, c](Tape& t2, int self) {
    const Node& s = t2.node(self);
    std::vector<double> g(s.grad.size());
    for (size_t i = 0; i < g.size(); ++i) g[i] = s.grad[i] * c;
    t2.accum(aid, g);
  };
  return t.push(std::move(n));
}

Value add_const(Value a, double c) {
  Tape& t = tp(a);
  Node n;
  n.op = "add_const";
  n.shape = a.shape();
  n.val.resize(a.val().size());
  for (size_t i = 0; i < n.val.size(); ++i) n.val[i] = a.val()[i] + c;
  n.parents = {a.id};
  n.requires_grad = req(a);
  int aid = a.id;
  n.back = [aid](Tape& t2, int self) { t2.accum(aid, t2.node(self).grad); };
  return t.push(std::move(n));
}

Value max_const(Value a, double c) {
  Tape& t = tp(a);
  Node n;
  n.op = "max_const";
  n.shape = a.shape();
  n.val.resize(a.val().size());
  for (size_t i = 0; i < n.val.size(); ++i) n.val[i] = std::max(a.val()[i], c);
  n.parents = {a.id};
  n.requires_grad = req(a);
  int aid = a.id;
  n.back = [aid, c](Tape& t2, int self) {
    const Node& s = t2.node(self);
    const std::vector<double>& av = t2.val(aid);
    std::vector<double> g(s.grad.size());
    for (size_t i = 0; i < g.size(); ++i) g[i] = av[i] > c ? s.grad[i] : 0.0;
    t2.accum(aid, g);
  };
  return t.push(std::move(n));
}

Value vabs(Value a) {
  return unary_map(
      a, "abs", [](double x) { return std::fabs(x); },
      [](double x) { return x > 0 ? 1.0 : (x < 0 ? -1.0 : 0.0); });
}

Value vexp(Value a) {
  return unary_map(
      a, "exp", [](double x) { return std::exp(x); }, [](double x) { return std::exp(x); });
}

Value sigmoid(Value a) {
  return unary_map(
      a, "sigmoid", [](double x) { return stable_sigmoid(x); },
      [](double x) {
        double s = stable_sigmoid(x);
        return s * (1.0 - s);
      });
}

Value softplus(Value a) {
  return unary_map(
      a, "softplus", [](double x) { return stable_softplus(x); },
      [](double x) { return stable_sigmoid(x); });
}

Value mul_scalar(Value a, Value s) {
  check_same_tape(a, s);
  if (numel(s.shape()) != 1) fail_config("mul_scalar: scalar operand must have one element");
  Tape& t = tp(a);
  Node n;
  n.op = "mul_scalar";
  n.shape = a.shape();
  n.val.resize(a.val().size());
  double sv = s.val()[0];
  for (size_t i = 0; i < n.val.size(); ++i) n.val[i] = a.val()[i] * sv;
  n.parents = {a.id, s.id};
  n.requires_grad = req(a) || req(s);
  int aid = a.id, sid = s.id;
  n.back = [aid, sid](Tape& t2, int self) {
    const Node& nd = t2.node(self);
    double sval = t2.val(sid)[0];
    if (t2.needs_grad(aid)) {
      std::vector<double> g(nd.grad.size());
      for (size_t i = 0; i < g.size(); ++i) g[i] = nd.grad[i] * sval;
      t2.accum(aid, g);
    }
    if (t2.needs_grad(sid)) {
      const std::vector<double>& av = t2.val(aid);
      double acc = 0;
      for (size_t i = 0; i < nd.grad.size(); ++i) acc += nd.grad[i] * av[i];
      t2.accum(sid, {acc});
    }
  };
  return t.push(std::move(n));
}

Value concat_last(Value a, Value b) {
  check_same_tape(a, b);
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  if (sa.size() != sb.size() || sa.empty()) fail_config("concat_last: rank mismatch");
  for (size_t i = 0; i + 1 < sa.size(); ++i)
    if (sa[i] != sb[i]) fail_config("concat_last: leading dims differ");
  int ca = sa.back(), cb = sb.back();
  Shape out = sa;
  out.back() = ca + cb;
  int64_t rows = numel(sa) / ca;
  Tape& t = tp(a);
  Node n;
  n.op = "concat";
  n.shape = out;
  n.val.resize(size_t(rows * (ca + cb)));
  for (int64_t r = 0; r < rows; ++r) {
    std::copy_n(a.val().begin() + r * ca, ca, n.val.begin() + r * (ca + cb));
    std::copy_n(b.val().begin() + r * cb, cb, n.val.begin() + r * (ca + cb) + ca);
  }
  n.parents = {a.id, b.id};
  n.requires_grad = req(a) || req(b);
  int aid = a.id, bid = b.id;
  n.back = [aid, bid, rows, ca, cb](Tape& t2, int self) {
    const Node& s = t2.node(self);
    if (t2.needs_grad(aid)) {
      std::vector<double> g(size_t(rows * ca));
      for (int64_t r = 0; r < rows; ++r)
        std::copy_n(s.grad.begin() + r * (ca + cb), ca, g.begin() + r * ca);
      t2.accum(aid, g);
    }
    if (t2.needs_grad(bid)) {
      std::vector<double> g(size_t(rows * cb));
      for (int64_t r = 0; r < rows; ++r)
        std::copy_n(s.grad.begin() + r * (ca + cb) + ca, cb, g.begin() + r * cb);
      t2.accum(bid, g);
    }
  };
  return t.push(std::move(n));
}

Value slice_last(Value a, int from, int to) {
  const Shape& sa = a.shape();
  if (sa.empty()) fail_config("slice_last: scalar input");
  int c = sa.back();
  if (from < 0 || to > c || from >= to) fail_config("slice_last: bad range");
  Shape out = sa;
  out.back() = to - from;
  int64_t rows = numel(sa) / c;
  int w = to - from;
  Tape& t = tp(a);
  Node n;
  n.op = "slice";
  n.shape = out;
  n.val.resize(size_t(rows * w));
  for (int64_t r = 0; r < rows; ++r)
    std::copy_n(a.val().begin() + r * c + from, w, n.val.begin() + r * w);
  n.parents = {a.id};
  n.requires_grad = req(a);
  int aid = a.id;
  n.back = [aid, rows, c, from, w](Tape& t2, int self) {
    const Node& s = t2.node(self);
    if (!t2.needs_grad(aid)) return;
    std::vector<double>& g = t2.grad_buf(aid);
    for (int64_t r = 0; r < rows; ++r)
      for (int i = 0; i < w; ++i) g[size_t(r * c + from + i)] += s.grad[size_t(r * w + i)];
    t2.quantize(g);
  };
  return t.push(std::move(n));
}

Value tile_rows(Value row, int b) {
  const Shape& s = row.shape();
  if (s.size() != 1) fail_config("tile_rows: expected rank-1 input");
  int c = s[0];
  Tape& t = tp(row);
  Node n;
  n.op = "tile_rows";
  n.shape = {b, c};
  n.val.resize(size_t(b) * c);
  for (int r = 0; r < b; ++r) std::copy_n(row.val().begin(), c, n.val.begin() + size_t(r) * c);
  n.parents = {row.id};
  n.requires_grad = req(row);
  int rid = row.id;
  n.back = [rid, b, c](Tape& t2, int self) {
    if (!t2.needs_grad(rid)) return;
    const Node& s2 = t2.node(self);
    std::vector<double> g(size_t(c), 0.0);
    for (int r = 0; r < b; ++r)
      for (int i = 0; i < c; ++i) g[size_t(i)] += s2.grad[size_t(r) * c + i];
    t2.accum(rid, g);
  };
  return t.push(std::move(n));
}

Value reshape(Value a, Shape s) {
  if (numel(s) != numel(a.shape())) fail_config("reshape: element count mismatch");
  Tape& t = tp(a);
  Node n;
  n.op = "reshape";
  n.shape = std::move(s);
  n.val = a.val();
  n.parents = {a.id};
  n.requires_grad = req(a);
  int aid = a.id;
  n.back = [aid](Tape& t2, int self) { t2.accum(aid, t2.node(self).grad); };
  return t.push(std::move(n));
}

Value sum(Value a) {
  Tape& t = tp(a);
  Node n;
  n.op = "sum";
  n.shape = {1};
  double acc = 0;
  for (double x : a.val()) acc += x;
  n.val = {acc};
  n.parents = {a.id};
  n.requires_grad = req(a);
  int aid = a.id;
  n.back = [aid](Tape& t2, int self) {
    double g = t2.node(self).grad[0];
    if (!t2.needs_grad(aid)) return;
    std::vector<double> gg(t2.val(aid).size(), g);
    t2.accum(aid, gg);
  };
  return t.push(std::move(n));
}

Value mean(Value a) { return scale(sum(a), 1.0 / double(a.val().size())); }

Value rowsum(Value a) {
  const Shape& s = a.shape();
  if (s.size() != 2) fail_config("rowsum: expected rank-2 input");
  int m = s[0], k = s[1];
  Tape& t = tp(a);
  Node n;
  n.op = "rowsum";
  n.shape = {m};
  n.val.assign(size_t(m), 0.0);
  for (int r = 0; r < m; ++r) {
    double acc = 0;
    for (int i = 0; i < k; ++i) acc += a.val()[size_t(r) * k + i];
    n.val[size_t(r)] = acc;
  }
  n.parents = {a.id};
  n.requires_grad = req(a);
  int aid = a.id;
  n.back = [aid, m, k](Tape& t2, int self) {
    const Node& s2 = t2.node(self);
    if (!t2.needs_grad(aid)) return;
    std::vector<double> g(size_t(m) * k);
    for (int r = 0; r < m; ++r)
      for (int i = 0; i < k; ++i) g[size_t(r) * k + i] = s2.grad[size_t(r)];
    t2.accum(aid, g);
  };
  return t.push(std::move(n));
}

Value affine(Value x, Value w, Value b) {
  check_same_tape(x, w);
  check_same_tape(x, b);
  const Shape& sx = x.shape();
  const Shape& sw = w.shape();
  const Shape& sb = b.shape();
  if (sx.size() != 2 || sw.size() != 2 || sb.size() != 1 || sx[1] != sw[0] || sw[1] != sb[0])
    fail_config("affine: shape mismatch " + shape_str(sx) + " x " + shape_str(sw));
  int B = sx[0], I = sx[1], O = sw[1];
  Tape& t = tp(x);
  Node n;
  n.op = "affine";
  n.shape = {B, O};
  n.val.resize(size_t(B) * O);
  {
    const double* xv = x.val().data();
    const double* wv = w.val().data();
    const double* bv = b.val().data();
    double* yv = n.val.data();
    for (int r = 0; r < B; ++r) {
      double* yr = yv + size_t(r) * O;
      std::copy_n(bv, O, yr);
      const double* xr = xv + size_t(r) * I;
      for (int i = 0; i < I; ++i) {
        double xi = xr[i];
        const double* wr = wv + size_t(i) * O;
        for (int o = 0; o < O; ++o) yr[o] += xi * wr[o];
      }
    }
  }
  n.parents = {x.id, w.id, b.id};
  n.requires_grad = req(x) || req(w) || req(b);
  int xid = x.id, wid = w.id, bid = b.id;
  n.back = [xid, wid, bid, B, I, O](Tape& t2, int self) {
    const Node& s = t2.node(self);
    const double* gy = s.grad.data();
    const double* xv = t2.val(xid).data();
    const double* wv = t2.val(wid).data();
    if (t2.needs_grad(xid)) {
      std::vector<double>& gx = t2.grad_buf(xid);
      for (int r = 0; r < B; ++r) {
        const double* gyr = gy + size_t(r) * O;
        double* gxr = gx.data() + size_t(r) * I;
        for (int i = 0; i < I; ++i) {
          const double* wr = wv + size_t(i) * O;
          double acc = 0;
          for (int o = 0; o < O; ++o) acc += gyr[o] * wr[o];
          gxr[i] += acc;
        }
      }
      t2.quantize(gx);
    }
    if (t2.needs_grad(wid)) {
      std::vector<double>& gw = t2.grad_buf(wid);
      for (int r = 0; r < B; ++r) {
        const double* gyr = gy + size_t(r) * O;
        const double* xr = xv + size_t(r) * I;
        for (int i = 0; i < I; ++i) {
          double xi = xr[i];
          if (xi == 0.0) continue;
          double* gwr = gw.data() + size_t(i) * O;
          for (int o = 0; o < O; ++o) gwr[o] += xi * gyr[o];
        }
      }
      t2.quantize(gw);
    }
    if (t2.needs_grad(bid)) {
      std::vector<double>& gb = t2.grad_buf(bid);
      for (int r = 0; r < B; ++r) {
        const double* gyr = gy + size_t(r) * O;
        for (int o = 0; o < O; ++o) gb[size_t(o)] += gyr[o];
      }
      t2.quantize(gb);
    }
  };
  return t.push(std::move(n));
}

Value conv3d(Value x, Value k, Value b) {
  check_same_tape(x, k);
  check_same_tape(x, b);
  const Shape& sx = x.shape();
  const Shape& sk = k.shape();
  const Shape& sb = b.shape();
  if (sx.size() != 4 || sk.size() != 5 || sk[0] != 3 || sk[1] != 3 || sk[2] != 3)
    fail_config("conv3d: expected x[D,H,W,Ci], k[3,3,3,Ci,Co]");
  int D = sx[0], H = sx[1], W = sx[2], Ci = sx[3];
  int Co = sk[4];
  if (sk[3] != Ci || sb.size() != 1 || sb[0] != Co) fail_config("conv3d: channel mismatch");
  Tape& t = tp(x);
  Node n;
  n.op = "conv3d";
  n.shape = {D, H, W, Co};
  n.val.resize(size_t(D) * H * W * Co);
  {
    const double* xv = x.val().data();
    const double* kv = k.val().data();
    const double* bv = b.val().data();
    double* yv = n.val.data();
    for (int z = 0; z < D; ++z)
      for (int y = 0; y < H; ++y)
        for (int xx = 0; xx < W; ++xx) {
          double* yr = yv + ((size_t(z) * H + y) * W + xx) * Co;
          std::copy_n(bv, Co, yr);
          for (int dz = -1; dz <= 1; ++dz) {
            int zz = z + dz;
            if (zz < 0 || zz >= D) continue;
            for (int dy = -1; dy <= 1; ++dy) {
              int yy = y + dy;
              if (yy < 0 || yy >= H) continue;
              for (int dx = -1; dx <= 1; ++dx) {
                int xw = xx + dx;
                if (xw < 0 || xw >= W) continue;
                const double* xr = xv + ((size_t(zz) * H + yy) * W + xw) * Ci;
                const double* kr =
                    kv + ((size_t(dz + 1) * 3 + (dy + 1)) * 3 + (dx + 1)) * Ci * Co;
                for (int ci = 0; ci < Ci; ++ci) {
                  double xi = xr[ci];
                  if (xi == 0.0) continue;
                  const double* kc = kr + size_t(ci) * Co;
                  for (int co = 0; co < Co; ++co) yr[co] += xi * kc[co];
                }
              }
            }
          }
        }
  }
  n.parents = {x.id, k.id, b.id};
  n.requires_grad = req(x) || req(k) || req(b);
  int xid = x.id, kid = k.id, bid = b.id;
  n.back = [xid, kid, bid, D, H, W, Ci, Co](Tape& t2, int self) {
    const Node& s = t2.node(self);
    const double* gy = s.grad.data();
    const double* xv = t2.val(xid).data();
    const double* kv = t2.val(kid).data();
    bool need_x = t2.needs_grad(xid), need_k = t2.needs_grad(kid), need_b = t2.needs_grad(bid);
    std::vector<double>* gx = need_x ? &t2.grad_buf(xid) : nullptr;
    std::vector<double>* gk = need_k ? &t2.grad_buf(kid) : nullptr;
    if (need_b) {
      std::vector<double>& gb = t2.grad_buf(bid);
      for (size_t v = 0; v < size_t(D) * H * W; ++v) {
        const double* gyr = gy + v * Co;
        for (int co = 0; co < Co; ++co) gb[size_t(co)] += gyr[co];
      }
      t2.quantize(gb);
    }
    if (!need_x && !need_k) return;
    for (int z = 0; z < D; ++z)
      for (int y = 0; y < H; ++y)
        for (int xx = 0; xx < W; ++xx) {
          const double* gyr = gy + ((size_t(z) * H + y) * W + xx) * Co;
          for (int dz = -1; dz <= 1; ++dz) {
            int zz = z + dz;
            if (zz < 0 || zz >= D) continue;
            for (int dy = -1; dy <= 1; ++dy) {
              int yy = y + dy;
              if (yy < 0 || yy >= H) continue;
              for (int dx = -1; dx <= 1; ++dx) {
                int xw = xx + dx;
                if (xw < 0 || xw >= W) continue;
                size_t in_off = ((size_t(zz) * H + yy) * W + xw) * Ci;
                size_t k_off = ((size_t(dz + 1) * 3 + (dy + 1)) * 3 + (dx + 1)) * size_t(Ci) * Co;
                if (need_x) {
                  double* gxr = gx->data() + in_off;
                  for (int ci = 0; ci < Ci; ++ci) {
                    const double* kc = kv + k_off + size_t(ci) * Co;
                    double acc = 0;
                    for (int co = 0; co < Co; ++co) acc += gyr[co] * kc[co];
                    gxr[ci] += acc;
                  }
                }
                if (need_k) {
                  const double* xr = xv + in_off;
                  double* gkr = gk->data() + k_off;
                  for (int ci = 0; ci < Ci; ++ci) {
                    double xi = xr[ci];
                    if (xi == 0.0) continue;
                    double* gkc = gkr + size_t(ci) * Co;
                    for (int co = 0; co < Co; ++co) gkc[co] += xi * gyr[co];
                  }
                }
              }
            }
          }
        }
    if (need_x) t2.quantize(*gx);
    if (need_k) t2.quantize(*gk);
  };
  return t.push(std::move(n));
}

Value broadcast_grid(Value vec, int d, int h, int w) {
  const Shape& s = vec.shape();
  if (s.size() != 1) fail_config("broadcast_grid: expected rank-1 vector");
  int c = s[0];
  Tape& t = tp(vec);
  Node n;
  n.op = "broadcast_grid";
  n.shape = {d, h, w, c};
  n.val.resize(size_t(d) * h * w * c);
  for (size_t v = 0; v < size_t(d) * h * w; ++v)
    std::copy_n(vec.val().begin(), c, n.val.begin() + v * c);
  n.parents = {vec.id};
  n.requires_grad = req(vec);
  int vid = vec.id;
  int64_t vox = int64_t(d) * h * w;
  n.back = [vid, vox, c](Tape& t2, int self) {
    const Node& s2 = t2.node(self);
    if (!t2.needs_grad(vid)) return;
    std::vector<double> g(size_t(c), 0.0);
    for (int64_t v = 0; v < vox; ++v)
      for (int i = 0; i < c; ++i) g[size_t(i)] += s2.grad[size_t(v) * c + i];
    t2.accum(vid, g);
  };
  return t.push(std::move(n));
}

void trilinear_weights(double fz, double fy, double fx, double w[8]) {
  double gz[2] = {1.0 - fz, fz};
  double gy[2] = {1.0 - fy, fy};
  double gx[2] = {1.0 - fx, fx};
  for (int a = 0; a < 2; ++a)
    for (int b = 0; b < 2; ++b)
      for (int c = 0; c < 2; ++c) w[a * 4 + b * 2 + c] = gz[a] * gy[b] * gx[c];
}

namespace {

struct TriCell {
  int iz, iy, ix;
  double fz, fy, fx;
  bool clamped_z, clamped_y, clamped_x;
};

TriCell locate(double cz, double cy, double cx, int D, int H, int W, bool clamp) {
  auto one = [clamp](double c, int dim, int& i, double& f, bool& was_clamped) {
    was_clamped = false;
    if (c < 0.0 || c > double(dim - 1)) {
      if (!clamp) fail_config("trilinear: query outside grid bounds");
      was_clamped = true;
      c = std::clamp(c, 0.0, double(dim - 1));
    }
    i = std::min(int(std::floor(c)), dim - 2);
    if (i < 0) i = 0;
    f = c - double(i);
  };
  TriCell t{};
  one(cz, D, t.iz, t.fz, t.clamped_z);
  one(cy, H, t.iy, t.fy, t.clamped_y);
  one(cx, W, t.ix, t.fx, t.clamped_x);
  return t;
}

}  // namespace

Value trilinear(Value grid, Value pts, bool clamp) {
  check_same_tape(grid, pts);
  const Shape& sg = grid.shape();
  const Shape& sp = pts.shape();
  if (sg.size() != 4 || sp.size() != 2 || sp[1] != 3)
    fail_config("trilinear: expected grid[D,H,W,C], pts[B,3]");
  int D = sg[0], H = sg[1], W = sg[2], C = sg[3];
  if (D < 2 || H < 2 || W < 2) fail_config("trilinear: grid dims must be >= 2");
  int B = sp[0];
  Tape& t = tp(grid);
  Node n;
  n.op = "trilinear";
  n.shape = {B, C};
  n.val.assign(size_t(B) * C, 0.0);
  {
    const double* gv = grid.val().data();
    const double* pv = pts.val().data();
    double* ov = n.val.data();
    for (int bi = 0; bi < B; ++bi) {
      TriCell tc = locate(pv[bi * 3 + 0], pv[bi * 3 + 1], pv[bi * 3 + 2], D, H, W, clamp);
      double w[8];
      trilinear_weights(tc.fz, tc.fy, tc.fx, w);
      double* out = ov + size_t(bi) * C;
      for (int a = 0; a < 2; ++a)
        for (int b2 = 0; b2 < 2; ++b2)
          for (int c2 = 0; c2 < 2; ++c2) {
            double ww = w[a * 4 + b2 * 2 + c2];
            const double* src =
                gv + ((size_t(tc.iz + a) * H + (tc.iy + b2)) * W + (tc.ix + c2)) * C;
            for (int ch = 0; ch < C; ++ch) out[ch] += ww * src[ch];
          }
    }
  }
  n.parents = {grid.id, pts.id};
  n.requires_grad = req(grid) || req(pts);
  int gid = grid.id, pid = pts.id;
  n.back = [gid, pid, D, H, W, C, B, clamp](Tape& t2, int self) {
    const Node& s = t2.node(self);
    const double* gv = t2.val(gid).data();
    const double* pv = t2.val(pid).data();
    bool need_g = t2.needs_grad(gid), need_p = t2.needs_grad(pid);
    if (!need_g && !need_p) return;
    std::vector<double>* gg = need_g ? &t2.grad_buf(gid) : nullptr;
    std::vector<double>* gp = need_p ? &t2.grad_buf(pid) : nullptr;
    for (int bi = 0; bi < B; ++bi) {
      TriCell tc = locate(pv[bi * 3 + 0], pv[bi * 3 + 1], pv[bi * 3 + 2], D, H, W, clamp);
      double w[8];
      trilinear_weights(tc.fz, tc.fy, tc.fx, w);
      const double* gout = s.grad.data() + size_t(bi) * C;
      double dz = 0, dy = 0, dx = 0;
      double wz[2] = {1.0 - tc.fz, tc.fz}, wy[2] = {1.0 - tc.fy, tc.fy},
             wx[2] = {1.0 - tc.fx, tc.fx};
      for (int a = 0; a < 2; ++a)
        for (int b2 = 0; b2 < 2; ++b2)
          for (int c2 = 0; c2 < 2; ++c2) {
            size_t off = ((size_t(tc.iz + a) * H + (tc.iy + b2)) * W + (tc.ix + c2)) * C;
            double dot = 0;
            if (need_p || need_g) {
              const double* src = gv + off;
              for (int ch = 0; ch < C; ++ch) dot += gout[ch] * src[ch];
            }
            if (need_g) {
              double ww = w[a * 4 + b2 * 2 + c2];
              double* dst = gg->data() + off;
              for (int ch = 0; ch < C; ++ch) dst[ch] += ww * gout[ch];
            }
            if (need_p) {
              double sa = a == 0 ? -1.0 : 1.0;
              double sb = b2 == 0 ? -1.0 : 1.0;
              double sc = c2 == 0 ? -1.0 : 1.0;
              dz += sa * wy[b2] * wx[c2] * dot;
              dy += wz[a] * sb * wx[c2] * dot;
              dx += wz[a] * wy[b2] * sc * dot;
            }
          }
      if (need_p) {
        // clamped coordinates have zero local derivative
        (*gp)[size_t(bi) * 3 + 0] += tc.clamped_z ? 0.0 : dz;
        (*gp)[size_t(bi) * 3 + 1] += tc.clamped_y ? 0.0 : dy;
        (*gp)[size_t(bi) * 3 + 2] += tc.clamped_x ? 0.0 : dx;
      }
    }
    if (need_g) t2.quantize(*gg);
    if (need_p) t2.quantize(*gp);
  };
  return t.push(std::move(n));
}

void sincos_encode_raw(const double* x, int n_in, int d_sin, double base, double* out) {
  if (d_sin <= 0 || d_sin % 2 != 0) fail_config("sinusoidal encoding requires even positive width");
  int w = d_sin / n_in;
  if (w * n_in != d_sin || w % 2 != 0)
    fail_config("sinusoidal encoding width must split evenly over inputs");
  int pairs = w / 2;
  for (int j = 0; j < n_in; ++j) {
    for (int i = 0; i < pairs; ++i) {
      double om = std::pow(base, -2.0 * double(i) / double(w));
      out[j * w + 2 * i] = std::sin(x[j] * om);
      out[j * w + 2 * i + 1] = std::cos(x[j] * om);
    }
  }
}

Value sincos_encode(Value x, int d_sin, double base) {
  const Shape& s = x.shape();
  if (s.size() != 1 || (s[0] != 1 && s[0] != 2))
    fail_config("sincos_encode: input must be a scalar or a pair");
  int n_in = s[0];
  Tape& t = tp(x);
  Node n;
  n.op = "sincos";
  n.shape = {d_sin};
  n.val.resize(size_t(d_sin));
  sincos_encode_raw(x.val().data(), n_in, d_sin, base, n.val.data());
  n.parents = {x.id};
  n.requires_grad = req(x);
  int xid = x.id;
  n.back = [xid, n_in, d_sin, base](Tape& t2, int self) {
    if (!t2.needs_grad(xid)) return;
    const Node& s2 = t2.node(self);
    const std::vector<double>& xv = t2.val(xid);
    int w = d_sin / n_in;
    int pairs = w / 2;
    std::vector<double> g(size_t(n_in), 0.0);
    for (int j = 0; j < n_in; ++j)
      for (int i = 0; i < pairs; ++i) {
        double om = std::pow(base, -2.0 * double(i) / double(w));
        double a = xv[size_t(j)] * om;
        g[size_t(j)] += s2.grad[size_t(j * w + 2 * i)] * om * std::cos(a);
        g[size_t(j)] -= s2.grad[size_t(j * w + 2 * i + 1)] * om * std::sin(a);
      }
    t2.accum(xid, g);
  };
  return t.push(std::move(n));
}

Value transmittance_from_alpha(Value alpha) {
  const Shape& s = alpha.shape();
  if (s.size() != 2) fail_config("transmittance: expected alpha[M,K]");
  int M = s[0], K = s[1];
  Tape& t = tp(alpha);
  Node n;
  n.op = "transmittance";
  n.shape = {M, K};
  n.val.resize(size_t(M) * K);
  {
    const double* av = alpha.val().data();
    double* tv = n.val.data();
    for (int m = 0; m < M; ++m) {
      double p = 1.0;
      for (int i = 0; i < K; ++i) {
        tv[size_t(m) * K + i] = p;
        p *= (1.0 - av[size_t(m) * K + i]);
      }
    }
  }
  n.parents = {alpha.id};
  n.requires_grad = req(alpha);
  int aid = alpha.id;
  n.back = [aid, M, K](Tape& t2, int self) {
    if (!t2.needs_grad(aid)) return;
    const Node& s2 = t2.node(self);
    const std::vector<double>& av = t2.val(aid);
    const std::vector<double>& tv = s2.val;
    std::vector<double>& g = t2.grad_buf(aid);
    // dT_n/da_i = -prod_{j<n, j!=i} (1-a_j) for n > i; O(K^2) per row but
    // robust when some (1-a_j) are exactly zero.
    for (int m = 0; m < M; ++m) {
      const double* gr = s2.grad.data() + size_t(m) * K;
      const double* ar = av.data() + size_t(m) * K;
      const double* tr = tv.data() + size_t(m) * K;
      double* go = g.data() + size_t(m) * K;
      for (int i = 0; i < K; ++i) {
        double q = tr[i];  // prod_{j<i}(1-a_j) == prod_{j<i+1, j!=i}
        double acc = 0;
        for (int nn = i + 1; nn < K; ++nn) {
          acc += gr[nn] * q;
          q *= (1.0 - ar[nn]);
        }
        go[i] -= acc;
      }
    }
    t2.quantize(g);
  };
  return t.push(std::move(n));
}

}  // namespace trend::diff
