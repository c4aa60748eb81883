#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "common.hpp"

namespace trend::diff {

using Shape = std::vector<int>;

int64_t numel(const Shape& s);
bool same_shape(const Shape& a, const Shape& b);
std::string shape_str(const Shape& s);

class Tape;

// Lightweight handle to a tape node.
struct Value {
  Tape* tape = nullptr;
  int id = -1;

  bool valid() const { return tape != nullptr && id >= 0; }
  const Shape& shape() const;
  const std::vector<double>& val() const;
  double scalar() const;
};

// One recorded value: forward data plus the rule that pushes its gradient
// into its parents.
struct Node {
  Shape shape;
  std::vector<double> val;
  std::vector<double> grad;  // allocated lazily during backward
  std::vector<int> parents;
  std::function<void(Tape&, int)> back;  // arg: id of this node
  const char* op = "";
  bool requires_grad = false;
};

// Append-only reverse-mode tape over dense double arrays. Single writer;
// parallel forward evaluation requires one tape per thread.
class Tape {
 public:
  Tape() = default;
  explicit Tape(bool round_f32) : round_f32_(round_f32) {}

  Value push(Node n);

  Node& node(int id) { return nodes_[size_t(id)]; }
  const Node& node(int id) const { return nodes_[size_t(id)]; }
  int size() const { return int(nodes_.size()); }

  const Shape& shape(int id) const { return nodes_[size_t(id)].shape; }
  const std::vector<double>& val(int id) const { return nodes_[size_t(id)].val; }
  bool needs_grad(int id) const { return nodes_[size_t(id)].requires_grad; }

  // Gradient buffer, zero-initialized on first touch.
  std::vector<double>& grad_buf(int id);

  // Accumulate g into the gradient of `id`; no-op if that node does not
  // require gradients.
  void accum(int id, const std::vector<double>& g);

  // Reverse sweep from a scalar root. Seeds d root/d root = 1.
  void backward(Value root);

  // Debug hook: corrupt gradient propagation through nodes tagged `op`.
  void set_fault_op(std::string op) { fault_op_ = std::move(op); }

  bool round_f32() const { return round_f32_; }
  double q(double x) const { return round_f32_ ? double(float(x)) : x; }
  void quantize(std::vector<double>& v) const;

 private:
  std::vector<Node> nodes_;
  std::string fault_op_;
  bool round_f32_ = false;
};

// ---- leaves ----
Value leaf(Tape& t, Shape shape, std::vector<double> data, bool requires_grad = false);
Value constant(Tape& t, Shape shape, std::vector<double> data);
Value scalar_const(Tape& t, double v);

// ---- elementwise ----
Value add(Value a, Value b);
Value sub(Value a, Value b);
Value mul(Value a, Value b);
Value vdiv(Value a, Value b);
Value neg(Value a);
Value scale(Value a, double c);
Value add_const(Value a, double c);
Value max_const(Value a, double c);  // relu(x) == max_const(x, 0)
Value vabs(Value a);
Value vexp(Value a);
Value sigmoid(Value a);
Value softplus(Value a);

// y = a * s where s is a scalar node
Value mul_scalar(Value a, Value s);

// ---- structure ----
Value concat_last(Value a, Value b);
Value slice_last(Value a, int from, int to);
Value reshape(Value a, Shape s);
// row:[C] -> [B,C]
Value tile_rows(Value row, int b);

// ---- reductions ----
Value sum(Value a);                 // -> [1]
Value mean(Value a);                // -> [1]
Value rowsum(Value a);              // [M,N] -> [M]

// ---- linear algebra / nets ----
// x:[B,I] W:[I,O] b:[O] -> [B,O]
Value affine(Value x, Value w, Value b);
// x:[D,H,W,Ci] k:[3,3,3,Ci,Co] b:[Co] -> [D,H,W,Co], zero padded
Value conv3d(Value x, Value k, Value b);
// vec:[C] -> [D,H,W,C]
Value broadcast_grid(Value vec, int d, int h, int w);

// grid:[D,H,W,C], pts:[B,3] continuous grid coords (integer = cell index).
// clamp=true clamps coordinates to the border; clamp=false raises an
// out-of-field error for queries outside [0, dim-1].
Value trilinear(Value grid, Value pts, bool clamp = true);

// scalar (shape [1]) or pair (shape [2]) -> [d_sin]; pairs split d_sin evenly
Value sincos_encode(Value x, int d_sin, double base);

// T_n = prod_{i<n} (1 - alpha_i) along each row; alpha:[M,K] -> T:[M,K]
Value transmittance_from_alpha(Value alpha);

void backward(Tape& t, Value root);

// ---- plain-array helpers shared with non-tape callers ----
void sincos_encode_raw(const double* x, int n_in, int d_sin, double base, double* out);
// 8 corner weights for fractional offsets (fz, fy, fx); sums to 1
void trilinear_weights(double fz, double fy, double fx, double w[8]);

}  // namespace trend::diff
