#include "rf/ad.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace rf::ad {

const Matrix& Var::val() const { return tape->value(id); }

Var Tape::leaf(Matrix value) {
  Node node;
  node.value = std::move(value);
  nodes_.push_back(std::move(node));
  return Var{this, static_cast<int>(nodes_.size()) - 1};
}

Var Tape::push(Matrix value, std::function<void(Tape&, int)> backward) {
  Node node;
  node.value = std::move(value);
  node.backward = std::move(backward);
  nodes_.push_back(std::move(node));
  return Var{this, static_cast<int>(nodes_.size()) - 1};
}

Matrix& Tape::grad(int id) {
  Node& node = nodes_[static_cast<std::size_t>(id)];
  if (node.grad.data.empty()) node.grad = Matrix::zeros(node.value.rows, node.value.cols);
  return node.grad;
}

void Tape::backward(const Var& loss) {
  const Matrix& v = value(loss.id);
  if (v.rows != 1 || v.cols != 1) {
    throw std::logic_error("backward expects a 1x1 loss node");
  }
  grad(loss.id).data[0] = 1.0;
  for (int id = loss.id; id >= 0; --id) {
    Node& node = nodes_[static_cast<std::size_t>(id)];
    if (node.backward && !node.grad.data.empty()) node.backward(*this, id);
  }
}

namespace {

void check_same_shape(const Matrix& a, const Matrix& b, const char* op) {
  if (a.rows != b.rows || a.cols != b.cols) {
    throw std::logic_error(std::string(op) + ": shape mismatch");
  }
}

}  // namespace

Var matmul(Var a, Var b) {
  const Matrix& A = a.val();
  const Matrix& B = b.val();
  if (A.cols != B.rows) throw std::logic_error("matmul: inner dimension mismatch");
  Matrix C(A.rows, B.cols);
  for (int i = 0; i < A.rows; ++i) {
    for (int k = 0; k < A.cols; ++k) {
      const double aik = A.at(i, k);
      if (aik == 0.0) continue;
      const double* brow = &B.data[static_cast<std::size_t>(k) * B.cols];
      double* crow = &C.data[static_cast<std::size_t>(i) * C.cols];
      for (int j = 0; j < B.cols; ++j) crow[j] += aik * brow[j];
    }
  }
  return a.tape->push(std::move(C), [ia = a.id, ib = b.id](Tape& t, int id) {
    const Matrix& dC = t.grad(id);
    const Matrix& A = t.value(ia);
    const Matrix& B = t.value(ib);
    Matrix& dA = t.grad(ia);
    Matrix& dB = t.grad(ib);
    // dA += dC * B^T
    for (int i = 0; i < A.rows; ++i) {
      for (int k = 0; k < A.cols; ++k) {
        double acc = 0.0;
        const double* dcrow = &dC.data[static_cast<std::size_t>(i) * dC.cols];
        const double* brow = &B.data[static_cast<std::size_t>(k) * B.cols];
        for (int j = 0; j < B.cols; ++j) acc += dcrow[j] * brow[j];
        dA.at(i, k) += acc;
      }
    }
    // dB += A^T * dC
    for (int k = 0; k < B.rows; ++k) {
      for (int i = 0; i < A.rows; ++i) {
        const double aik = A.at(i, k);
        if (aik == 0.0) continue;
        const double* dcrow = &dC.data[static_cast<std::size_t>(i) * dC.cols];
        double* dbrow = &dB.data[static_cast<std::size_t>(k) * dB.cols];
        for (int j = 0; j < B.cols; ++j) dbrow[j] += aik * dcrow[j];
      }
    }
  });
}

Var matmul_nt(Var a, Var b) {
  const Matrix& A = a.val();
  const Matrix& B = b.val();
  if (A.cols != B.cols) throw std::logic_error("matmul_nt: inner dimension mismatch");
  Matrix C(A.rows, B.rows);
  for (int i = 0; i < A.rows; ++i) {
    for (int j = 0; j < B.rows; ++j) {
      double acc = 0.0;
      const double* arow = &A.data[static_cast<std::size_t>(i) * A.cols];
      const double* brow = &B.data[static_cast<std::size_t>(j) * B.cols];
      for (int k = 0; k < A.cols; ++k) acc += arow[k] * brow[k];
      C.at(i, j) = acc;
    }
  }
  return a.tape->push(std::move(C), [ia = a.id, ib = b.id](Tape& t, int id) {
    const Matrix& dC = t.grad(id);
    const Matrix& A = t.value(ia);
    const Matrix& B = t.value(ib);
    Matrix& dA = t.grad(ia);
    Matrix& dB = t.grad(ib);
    // dA += dC * B ; dB += dC^T * A
    for (int i = 0; i < A.rows; ++i) {
      for (int j = 0; j < B.rows; ++j) {
        const double g = dC.at(i, j);
        if (g == 0.0) continue;
        const double* brow = &B.data[static_cast<std::size_t>(j) * B.cols];
        const double* arow = &A.data[static_cast<std::size_t>(i) * A.cols];
        double* darow = &dA.data[static_cast<std::size_t>(i) * dA.cols];
        double* dbrow = &dB.data[static_cast<std::size_t>(j) * dB.cols];
        for (int k = 0; k < A.cols; ++k) {
          darow[k] += g * brow[k];
          dbrow[k] += g * arow[k];
        }
      }
    }
  });
}

Var add(Var a, Var b) {
  const Matrix& A = a.val();
  const Matrix& B = b.val();
  check_same_shape(A, B, "add");
  Matrix C = A;
  for (std::size_t i = 0; i < C.size(); ++i) C.data[i] += B.data[i];
  return a.tape->push(std::move(C), [ia = a.id, ib = b.id](Tape& t, int id) {
    const Matrix& dC = t.grad(id);
    Matrix& dA = t.grad(ia);
    Matrix& dB = t.grad(ib);
    for (std::size_t i = 0; i < dC.size(); ++i) {
      dA.data[i] += dC.data[i];
      dB.data[i] += dC.data[i];
    }
  });
}

Var sub(Var a, Var b) {
  const Matrix& A = a.val();
  const Matrix& B = b.val();
  check_same_shape(A, B, "sub");
  Matrix C = A;
  for (std::size_t i = 0; i < C.size(); ++i) C.data[i] -= B.data[i];
  return a.tape->push(std::move(C), [ia = a.id, ib = b.id](Tape& t, int id) {
    const Matrix& dC = t.grad(id);
    Matrix& dA = t.grad(ia);
    Matrix& dB = t.grad(ib);
    for (std::size_t i = 0; i < dC.size(); ++i) {
      dA.data[i] += dC.data[i];
      dB.data[i] -= dC.data[i];
    }
  });
}

Var mul(Var a, Var b) {
  const Matrix& A = a.val();
  const Matrix& B = b.val();
  check_same_shape(A, B, "mul");
  Matrix C = A;
  for (std::size_t i = 0; i < C.size(); ++i) C.data[i] *= B.data[i];
  return a.tape->push(std::move(C), [ia = a.id, ib = b.id](Tape& t, int id) {
    const Matrix& dC = t.grad(id);
    const Matrix& A = t.value(ia);
    const Matrix& B = t.value(ib);
    Matrix& dA = t.grad(ia);
    Matrix& dB = t.grad(ib);
    for (std::size_t i = 0; i < dC.size(); ++i) {
      dA.data[i] += dC.data[i] * B.data[i];
      dB.data[i] += dC.data[i] * A.data[i];
    }
  });
}

Var add_rowvec(Var x, Var r) {
  const Matrix& X = x.val();
  const Matrix& R = r.val();
  if (R.rows != 1 || R.cols != X.cols) throw std::logic_error("add_rowvec: shape mismatch");
  Matrix C = X;
  for (int i = 0; i < X.rows; ++i) {
    for (int j = 0; j < X.cols; ++j) C.at(i, j) += R.at(0, j);
  }
  return x.tape->push(std::move(C), [ix = x.id, ir = r.id](Tape& t, int id) {
    const Matrix& dC = t.grad(id);
    Matrix& dX = t.grad(ix);
    Matrix& dR = t.grad(ir);
    for (int i = 0; i < dC.rows; ++i) {
      for (int j = 0; j < dC.cols; ++j) {
        dX.at(i, j) += dC.at(i, j);
        dR.at(0, j) += dC.at(i, j);
      }
    }
  });
}

Var sub_rowvec(Var x, Var r) {
  const Matrix& X = x.val();
  const Matrix& R = r.val();
  if (R.rows != 1 || R.cols != X.cols) throw std::logic_error("sub_rowvec: shape mismatch");
  Matrix C = X;
  for (int i = 0; i < X.rows; ++i) {
    for (int j = 0; j < X.cols; ++j) C.at(i, j) -= R.at(0, j);
  }
  return x.tape->push(std::move(C), [ix = x.id, ir = r.id](Tape& t, int id) {
    const Matrix& dC = t.grad(id);
    Matrix& dX = t.grad(ix);
    Matrix& dR = t.grad(ir);
    for (int i = 0; i < dC.rows; ++i) {
      for (int j = 0; j < dC.cols; ++j) {
        dX.at(i, j) += dC.at(i, j);
        dR.at(0, j) -= dC.at(i, j);
      }
    }
  });
}

Var mul_rowvec(Var x, Var r) {
  const Matrix& X = x.val();
  const Matrix& R = r.val();
  if (R.rows != 1 || R.cols != X.cols) throw std::logic_error("mul_rowvec: shape mismatch");
  Matrix C = X;
  for (int i = 0; i < X.rows; ++i) {
    for (int j = 0; j < X.cols; ++j) C.at(i, j) *= R.at(0, j);
  }
  return x.tape->push(std::move(C), [ix = x.id, ir = r.id](Tape& t, int id) {
    const Matrix& dC = t.grad(id);
    const Matrix& X = t.value(ix);
    const Matrix& R = t.value(ir);
    Matrix& dX = t.grad(ix);
    Matrix& dR = t.grad(ir);
    for (int i = 0; i < dC.rows; ++i) {
      for (int j = 0; j < dC.cols; ++j) {
        dX.at(i, j) += dC.at(i, j) * R.at(0, j);
        dR.at(0, j) += dC.at(i, j) * X.at(i, j);
      }
    }
  });
}

Var mul_colvec(Var x, Var c) {
  const Matrix& X = x.val();
  const Matrix& Cv = c.val();
  if (Cv.cols != 1 || Cv.rows != X.rows) throw std::logic_error("mul_colvec: shape mismatch");
  Matrix C = X;
  for (int i = 0; i < X.rows; ++i) {
    for (int j = 0; j < X.cols; ++j) C.at(i, j) *= Cv.at(i, 0);
  }
  return x.tape->push(std::move(C), [ix = x.id, ic = c.id](Tape& t, int id) {
    const Matrix& dC = t.grad(id);
    const Matrix& X = t.value(ix);
    const Matrix& Cv = t.value(ic);
    Matrix& dX = t.grad(ix);
    Matrix& dCv = t.grad(ic);
    for (int i = 0; i < dC.rows; ++i) {
      for (int j = 0; j < dC.cols; ++j) {
        dX.at(i, j) += dC.at(i, j) * Cv.at(i, 0);
        dCv.at(i, 0) += dC.at(i, j) * X.at(i, j);
      }
    }
  });
}

namespace {

/// Shared plumbing for unary elementwise ops. `dfn` receives the input
/// and output values and returns the local derivative.
Var unary(Var a, double (*fn)(double), double (*dfn)(double, double)) {
  const Matrix& A = a.val();
  Matrix C = A;
  for (double& v : C.data) v = fn(v);
  return a.tape->push(std::move(C), [ia = a.id, dfn](Tape& t, int id) {
    const Matrix& dC = t.grad(id);
    const Matrix& A = t.value(ia);
    const Matrix& Y = t.value(id);
    Matrix& dA = t.grad(ia);
    for (std::size_t i = 0; i < dC.size(); ++i) {
      dA.data[i] += dC.data[i] * dfn(A.data[i], Y.data[i]);
    }
  });
}

}  // namespace

Var scale(Var a, double s) { return affine(a, s, 0.0); }

Var affine(Var a, double k, double b) {
  const Matrix& A = a.val();
  Matrix C = A;
  for (double& v : C.data) v = k * v + b;
  return a.tape->push(std::move(C), [ia = a.id, k](Tape& t, int id) {
    const Matrix& dC = t.grad(id);
    Matrix& dA = t.grad(ia);
    for (std::size_t i = 0; i < dC.size(); ++i) dA.data[i] += k * dC.data[i];
  });
}

Var relu(Var a) {
  return unary(
      a, [](double x) { return x > 0.0 ? x : 0.0; },
      [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Var tanh_op(Var a) {
  return unary(
      a, [](double x) { return std::tanh(x); },
      [](double, double y) { return 1.0 - y * y; });
}

Var exp_op(Var a) {
  return unary(
      a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Var log_op(Var a) {
  return unary(
      a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Var sqrt_op(Var a) {
  return unary(
      a, [](double x) { return std::sqrt(x); },
      [](double, double y) { return 0.5 / y; });
}

Var square(Var a) {
  return unary(
      a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

Var sigmoid(Var a) {
  return unary(
      a,
      [](double x) {
        return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
      },
      [](double, double y) { return y * (1.0 - y); });
}

Var recip(Var a) {
  return unary(
      a, [](double x) { return 1.0 / x; },
      [](double, double y) { return -y * y; });
}

Var softplus(Var a) {
  return unary(
      a,
      [](double x) { return x > 30.0 ? x : std::log1p(std::exp(x)); },
      [](double x, double) {
        return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
      });
}

Var lgamma_op(Var a) {
  return unary(
      a, [](double x) { return std::lgamma(x); },
      [](double x, double) { return digamma(x); });
}

Var digamma_op(Var a) {
  return unary(
      a, [](double x) { return digamma(x); },
      [](double x, double) { return trigamma(x); });
}

Var row_sum(Var a) {
  const Matrix& A = a.val();
  Matrix C(A.rows, 1);
  for (int i = 0; i < A.rows; ++i) {
    double acc = 0.0;
    for (int j = 0; j < A.cols; ++j) acc += A.at(i, j);
    C.at(i, 0) = acc;
  }
  return a.tape->push(std::move(C), [ia = a.id](Tape& t, int id) {
    const Matrix& dC = t.grad(id);
    Matrix& dA = t.grad(ia);
    for (int i = 0; i < dA.rows; ++i) {
      for (int j = 0; j < dA.cols; ++j) dA.at(i, j) += dC.at(i, 0);
    }
  });
}

Var col_sum(Var a) {
  const Matrix& A = a.val();
  Matrix C(1, A.cols);
  for (int i = 0; i < A.rows; ++i) {
    for (int j = 0; j < A.cols; ++j) C.at(0, j) += A.at(i, j);
  }
  return a.tape->push(std::move(C), [ia = a.id](Tape& t, int id) {
    const Matrix& dC = t.grad(id);
    Matrix& dA = t.grad(ia);
    for (int i = 0; i < dA.rows; ++i) {
      for (int j = 0; j < dA.cols; ++j) dA.at(i, j) += dC.at(0, j);
    }
  });
}

Var sum_all(Var a) {
  const Matrix& A = a.val();
  Matrix C(1, 1);
  for (double v : A.data) C.data[0] += v;
  return a.tape->push(std::move(C), [ia = a.id](Tape& t, int id) {
    const double g = t.grad(id).data[0];
    Matrix& dA = t.grad(ia);
    for (double& v : dA.data) v += g;
  });
}

Var mean_rows(Var a) {
  const Matrix& A = a.val();
  Matrix C(1, A.cols);
  for (int i = 0; i < A.rows; ++i) {
    for (int j = 0; j < A.cols; ++j) C.at(0, j) += A.at(i, j);
  }
  for (double& v : C.data) v /= A.rows;
  return a.tape->push(std::move(C), [ia = a.id](Tape& t, int id) {
    const Matrix& dC = t.grad(id);
    Matrix& dA = t.grad(ia);
    const double inv = 1.0 / dA.rows;
    for (int i = 0; i < dA.rows; ++i) {
      for (int j = 0; j < dA.cols; ++j) dA.at(i, j) += dC.at(0, j) * inv;
    }
  });
}

Var col_max(Var a) {
  const Matrix& A = a.val();
  Matrix C(1, A.cols);
  std::vector<int> argmax(static_cast<std::size_t>(A.cols), 0);
  for (int j = 0; j < A.cols; ++j) {
    double best = A.at(0, j);
    int best_i = 0;
    for (int i = 1; i < A.rows; ++i) {
      if (A.at(i, j) > best) {
        best = A.at(i, j);
        best_i = i;
      }
    }
    C.at(0, j) = best;
    argmax[static_cast<std::size_t>(j)] = best_i;
  }
  return a.tape->push(std::move(C),
                      [ia = a.id, argmax = std::move(argmax)](Tape& t, int id) {
                        const Matrix& dC = t.grad(id);
                        Matrix& dA = t.grad(ia);
                        for (int j = 0; j < dC.cols; ++j) {
                          dA.at(argmax[static_cast<std::size_t>(j)], j) += dC.at(0, j);
                        }
                      });
}

Var softmax_rows(Var a) {
  const Matrix& A = a.val();
  Matrix C = A;
  for (int i = 0; i < A.rows; ++i) {
    double max_v = -std::numeric_limits<double>::infinity();
    for (int j = 0; j < A.cols; ++j) max_v = std::max(max_v, A.at(i, j));
    double z = 0.0;
    for (int j = 0; j < A.cols; ++j) {
      C.at(i, j) = std::exp(A.at(i, j) - max_v);
      z += C.at(i, j);
    }
    for (int j = 0; j < A.cols; ++j) C.at(i, j) /= z;
  }
  return a.tape->push(std::move(C), [ia = a.id](Tape& t, int id) {
    const Matrix& dC = t.grad(id);
    const Matrix& Y = t.value(id);
    Matrix& dA = t.grad(ia);
    for (int i = 0; i < Y.rows; ++i) {
      double dot = 0.0;
      for (int j = 0; j < Y.cols; ++j) dot += dC.at(i, j) * Y.at(i, j);
      for (int j = 0; j < Y.cols; ++j) {
        dA.at(i, j) += Y.at(i, j) * (dC.at(i, j) - dot);
      }
    }
  });
}

Var layer_norm_rows(Var a, double eps) {
  const Matrix& A = a.val();
  Matrix C(A.rows, A.cols);
  Matrix inv_sigma(A.rows, 1);
  for (int i = 0; i < A.rows; ++i) {
    double mean = 0.0;
    for (int j = 0; j < A.cols; ++j) mean += A.at(i, j);
    mean /= A.cols;
    double var = 0.0;
    for (int j = 0; j < A.cols; ++j) {
      const double d = A.at(i, j) - mean;
      var += d * d;
    }
    var /= A.cols;
    const double inv = 1.0 / std::sqrt(var + eps);
    inv_sigma.at(i, 0) = inv;
    for (int j = 0; j < A.cols; ++j) C.at(i, j) = (A.at(i, j) - mean) * inv;
  }
  return a.tape->push(std::move(C),
                      [ia = a.id, inv_sigma = std::move(inv_sigma)](Tape& t, int id) {
                        const Matrix& dC = t.grad(id);
                        const Matrix& Y = t.value(id);
                        Matrix& dA = t.grad(ia);
                        const int n = Y.cols;
                        for (int i = 0; i < Y.rows; ++i) {
                          double mean_dy = 0.0, mean_dyy = 0.0;
                          for (int j = 0; j < n; ++j) {
                            mean_dy += dC.at(i, j);
                            mean_dyy += dC.at(i, j) * Y.at(i, j);
                          }
                          mean_dy /= n;
                          mean_dyy /= n;
                          const double inv = inv_sigma.at(i, 0);
                          for (int j = 0; j < n; ++j) {
                            dA.at(i, j) +=
                                inv * (dC.at(i, j) - mean_dy - Y.at(i, j) * mean_dyy);
                          }
                        }
                      });
}

Var concat_rows(Var a, Var b) {
  const Matrix& A = a.val();
  const Matrix& B = b.val();
  if (A.cols != B.cols) throw std::logic_error("concat_rows: column mismatch");
  Matrix C(A.rows + B.rows, A.cols);
  std::copy(A.data.begin(), A.data.end(), C.data.begin());
  std::copy(B.data.begin(), B.data.end(), C.data.begin() + static_cast<long>(A.size()));
  return a.tape->push(std::move(C), [ia = a.id, ib = b.id](Tape& t, int id) {
    const Matrix& dC = t.grad(id);
    Matrix& dA = t.grad(ia);
    Matrix& dB = t.grad(ib);
    for (std::size_t i = 0; i < dA.size(); ++i) dA.data[i] += dC.data[i];
    for (std::size_t i = 0; i < dB.size(); ++i) dB.data[i] += dC.data[dA.size() + i];
  });
}

Var concat_cols(Var a, Var b) {
  const Matrix& A = a.val();
  const Matrix& B = b.val();
  if (A.rows != B.rows) throw std::logic_error("concat_cols: row mismatch");
  Matrix C(A.rows, A.cols + B.cols);
  for (int i = 0; i < A.rows; ++i) {
    for (int j = 0; j < A.cols; ++j) C.at(i, j) = A.at(i, j);
    for (int j = 0; j < B.cols; ++j) C.at(i, A.cols + j) = B.at(i, j);
  }
  return a.tape->push(std::move(C), [ia = a.id, ib = b.id](Tape& t, int id) {
    const Matrix& dC = t.grad(id);
    Matrix& dA = t.grad(ia);
    Matrix& dB = t.grad(ib);
    for (int i = 0; i < dA.rows; ++i) {
      for (int j = 0; j < dA.cols; ++j) dA.at(i, j) += dC.at(i, j);
      for (int j = 0; j < dB.cols; ++j) dB.at(i, j) += dC.at(i, dA.cols + j);
    }
  });
}

Var slice_rows(Var a, int r0, int r1) {
  const Matrix& A = a.val();
  if (r0 < 0 || r1 > A.rows || r0 >= r1) throw std::logic_error("slice_rows: bad range");
  Matrix C(r1 - r0, A.cols);
  std::copy(A.data.begin() + static_cast<long>(r0) * A.cols,
            A.data.begin() + static_cast<long>(r1) * A.cols, C.data.begin());
  return a.tape->push(std::move(C), [ia = a.id, r0](Tape& t, int id) {
    const Matrix& dC = t.grad(id);
    Matrix& dA = t.grad(ia);
    for (int i = 0; i < dC.rows; ++i) {
      for (int j = 0; j < dC.cols; ++j) dA.at(r0 + i, j) += dC.at(i, j);
    }
  });
}

Var slice_cols(Var a, int c0, int c1) {
  const Matrix& A = a.val();
  if (c0 < 0 || c1 > A.cols || c0 >= c1) throw std::logic_error("slice_cols: bad range");
  Matrix C(A.rows, c1 - c0);
  for (int i = 0; i < A.rows; ++i) {
    for (int j = c0; j < c1; ++j) C.at(i, j - c0) = A.at(i, j);
  }
  return a.tape->push(std::move(C), [ia = a.id, c0](Tape& t, int id) {
    const Matrix& dC = t.grad(id);
    Matrix& dA = t.grad(ia);
    for (int i = 0; i < dC.rows; ++i) {
      for (int j = 0; j < dC.cols; ++j) dA.at(i, c0 + j) += dC.at(i, j);
    }
  });
}

Var gather_rows(Var a, std::vector<int> idx) {
  const Matrix& A = a.val();
  Matrix C(static_cast<int>(idx.size()), A.cols);
  for (std::size_t i = 0; i < idx.size(); ++i) {
    const int r = idx[i];
    if (r < 0 || r >= A.rows) throw std::logic_error("gather_rows: index out of range");
    std::copy(A.data.begin() + static_cast<long>(r) * A.cols,
              A.data.begin() + static_cast<long>(r + 1) * A.cols,
              C.data.begin() + static_cast<long>(i) * A.cols);
  }
  return a.tape->push(std::move(C), [ia = a.id, idx = std::move(idx)](Tape& t, int id) {
    const Matrix& dC = t.grad(id);
    Matrix& dA = t.grad(ia);
    for (std::size_t i = 0; i < idx.size(); ++i) {
      for (int j = 0; j < dC.cols; ++j) {
        dA.at(idx[i], j) += dC.at(static_cast<int>(i), j);
      }
    }
  });
}

Var clamp_min(Var a, double floor) {
  const Matrix& A = a.val();
  Matrix C = A;
  for (double& v : C.data) v = std::max(v, floor);
  return a.tape->push(std::move(C), [ia = a.id, floor](Tape& t, int id) {
    const Matrix& dC = t.grad(id);
    const Matrix& A = t.value(ia);
    Matrix& dA = t.grad(ia);
    for (std::size_t i = 0; i < dC.size(); ++i) {
      if (A.data[i] > floor) dA.data[i] += dC.data[i];
    }
  });
}

double digamma(double x) {
  double result = 0.0;
  while (x < 6.0) {
    result -= 1.0 / x;
    x += 1.0;
  }
  const double inv = 1.0 / x;
  const double inv2 = inv * inv;
  result += std::log(x) - 0.5 * inv;
  // Asymptotic series with Bernoulli-number coefficients.
  result -= inv2 * (1.0 / 12.0 - inv2 * (1.0 / 120.0 - inv2 * (1.0 / 252.0 -
                    inv2 * (1.0 / 240.0 - inv2 * (1.0 / 132.0)))));
  return result;
}

double trigamma(double x) {
  double result = 0.0;
  while (x < 6.0) {
    result += 1.0 / (x * x);
    x += 1.0;
  }
  const double inv = 1.0 / x;
  const double inv2 = inv * inv;
  result += inv * (1.0 + 0.5 * inv +
                   inv2 * (1.0 / 6.0 - inv2 * (1.0 / 30.0 - inv2 * (1.0 / 42.0 -
                           inv2 * (1.0 / 30.0)))));
  return result;
}

}  // namespace rf::ad
