// Minimal reverse-mode automatic differentiation over dense matrices.
// A Tape owns value/gradient storage; Vars are lightweight node handles.
// The op set covers exactly what the planner network needs: affine maps,
// attention building blocks, pooling, normalization, and the special
// functions used by the Dirichlet-entropy loss term.
#pragma once

#include <functional>
#include <vector>

namespace rf::ad {

struct Matrix {
  int rows{0};
  int cols{0};
  std::vector<double> data;  // row-major

  Matrix() = default;
  Matrix(int r, int c) : rows(r), cols(c), data(static_cast<std::size_t>(r) * c, 0.0) {}

  double& at(int r, int c) { return data[static_cast<std::size_t>(r) * cols + c]; }
  double at(int r, int c) const { return data[static_cast<std::size_t>(r) * cols + c]; }
  std::size_t size() const { return data.size(); }

  static Matrix zeros(int r, int c) { return Matrix(r, c); }
  static Matrix full(int r, int c, double v) {
    Matrix m(r, c);
    std::fill(m.data.begin(), m.data.end(), v);
    return m;
  }
  static Matrix row(const std::vector<double>& v) {
    Matrix m(1, static_cast<int>(v.size()));
    m.data = v;
    return m;
  }
  static Matrix column(const std::vector<double>& v) {
    Matrix m(static_cast<int>(v.size()), 1);
    m.data = v;
    return m;
  }
};

class Tape;

struct Var {
  Tape* tape{nullptr};
  int id{-1};

  const Matrix& val() const;
  int rows() const { return val().rows; }
  int cols() const { return val().cols; }
};

class Tape {
 public:
  Var leaf(Matrix value);
  Var constant(Matrix value) { return leaf(std::move(value)); }

  Var push(Matrix value, std::function<void(Tape&, int)> backward);

  const Matrix& value(int id) const { return nodes_[static_cast<std::size_t>(id)].value; }
  Matrix& grad(int id);

  /// Reverse sweep from a 1x1 loss node.
  void backward(const Var& loss);

  void clear() { nodes_.clear(); }
  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Matrix value;
    Matrix grad;  // allocated lazily with the value's shape
    std::function<void(Tape&, int)> backward;
  };
  std::vector<Node> nodes_;
};

// -- op set ------------------------------------------------------------

Var matmul(Var a, Var b);     // [m,k]x[k,n]
Var matmul_nt(Var a, Var b);  // a * b^T, [m,k]x[n,k]
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);        // elementwise
Var add_rowvec(Var x, Var r); // r is [1,C], broadcast over rows
Var mul_rowvec(Var x, Var r);
Var sub_rowvec(Var x, Var r);
Var mul_colvec(Var x, Var c); // c is [R,1], broadcast over columns
Var scale(Var a, double s);
Var affine(Var a, double k, double b);  // k*a + b elementwise
Var relu(Var a);
Var tanh_op(Var a);
Var exp_op(Var a);
Var log_op(Var a);
Var sqrt_op(Var a);
Var square(Var a);
Var sigmoid(Var a);
Var recip(Var a);
Var softplus(Var a);
Var lgamma_op(Var a);   // derivative: digamma
Var digamma_op(Var a);  // derivative: trigamma
Var row_sum(Var a);     // [R,C] -> [R,1]
Var col_sum(Var a);     // [R,C] -> [1,C]
Var sum_all(Var a);     // -> [1,1]
Var mean_rows(Var a);   // [R,C] -> [1,C]
Var col_max(Var a);     // [R,C] -> [1,C], grad to first argmax
Var softmax_rows(Var a);
Var layer_norm_rows(Var a, double eps = 1e-5);
Var concat_rows(Var a, Var b);
Var concat_cols(Var a, Var b);
Var slice_rows(Var a, int r0, int r1);  // half-open [r0, r1)
Var slice_cols(Var a, int c0, int c1);
Var gather_rows(Var a, std::vector<int> idx);  // backward scatter-adds
Var clamp_min(Var a, double floor);            // subgradient 1 above the floor

// Reference special functions (shared with the op implementations).
double digamma(double x);
double trigamma(double x);

}  // namespace rf::ad
