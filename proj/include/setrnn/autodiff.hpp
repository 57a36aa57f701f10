#ifndef SETRNN_AUTODIFF_HPP
#define SETRNN_AUTODIFF_HPP

#include <Eigen/Dense>

#include <cassert>
#include <cmath>
#include <concepts>
#include <cstdint>
#include <initializer_list>
#include <limits>
#include <span>
#include <vector>

#include "setrnn/parameters.hpp"

namespace setrnn::ad {

// A minimal reverse-mode tape over dense matrices. Parameters are never copied
// onto the tape: operations reference parameter blocks by index and backward()
// scatters their gradients into a ModelParameters of the same layout.
//
// Nodes are appended in evaluation order, so reverse creation order is a valid
// topological order for backpropagation.

struct Var {
  int id = -1;
  [[nodiscard]] bool valid() const { return id >= 0; }
};

template <std::floating_point Real>
struct Seed {
  Var var;
  Eigen::Index row = 0;
  Real weight = 0;  // d(objective)/d(value[row])
};

template <std::floating_point Real>
class Tape {
 public:
  using Matrix = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic>;
  using Params = ModelParameters<Real>;

  explicit Tape(const Params& params) : params_(&params) {}

  [[nodiscard]] const Matrix& value(Var v) const { return nodes_[idx(v)].value; }
  [[nodiscard]] std::size_t size() const { return nodes_.size(); }

  Var constant(Matrix m) { return push(Op::kConstant, std::move(m)); }

  /// Row `index` of a parameter block, as a column vector.
  Var param_row(int block, Eigen::Index index) {
    const Matrix& p = param(block);
    Var v = push(Op::kParamRow, p.row(index).transpose());
    node(v).pa = block;
    node(v).index = index;
    return v;
  }

  /// W x for a parameter matrix W and column vector x.
  Var linear(int w, Var x) {
    Var v = push(Op::kLinear, param(w) * value(x));
    node(v).pa = w;
    node(v).a = x.id;
    return v;
  }

  /// x + b for a parameter column b.
  Var add_bias(Var x, int b) {
    Var v = push(Op::kAddBias, value(x) + param(b));
    node(v).pa = b;
    node(v).a = x.id;
    return v;
  }

  /// X W^T for a node X [n x in] and parameter W [out x in].
  Var matmul_transposed(Var x, int w) {
    Var v = push(Op::kMatmulT, value(x) * param(w).transpose());
    node(v).pa = w;
    node(v).a = x.id;
    return v;
  }

  /// X v for a node X [n x k] and parameter column v [k x 1].
  Var param_matvec(Var x, int w) {
    Var v = push(Op::kParamMatvec, value(x) * param(w));
    node(v).pa = w;
    node(v).a = x.id;
    return v;
  }

  Var add(Var x, Var y) {
    Var v = push(Op::kAdd, value(x) + value(y));
    node(v).a = x.id;
    node(v).b = y.id;
    return v;
  }

  /// X + 1 y^T: adds column vector y to every row of X.
  Var add_rowwise(Var x, Var y) {
    Matrix out = value(x);
    out.rowwise() += value(y).col(0).transpose();
    Var v = push(Op::kAddRowwise, std::move(out));
    node(v).a = x.id;
    node(v).b = y.id;
    return v;
  }

  Var mul(Var x, Var y) {
    Var v = push(Op::kMul, value(x).cwiseProduct(value(y)));
    node(v).a = x.id;
    node(v).b = y.id;
    return v;
  }

  /// Elementwise product with a constant mask (dropout).
  Var mul_constant(Var x, Matrix mask) {
    Var v = push(Op::kMulConst, value(x).cwiseProduct(mask));
    node(v).a = x.id;
    node(v).aux = std::move(mask);
    return v;
  }

  Var sigmoid(Var x) {
    Matrix out = value(x).unaryExpr([](Real t) { return Real(1) / (Real(1) + std::exp(-t)); });
    Var v = push(Op::kSigmoid, std::move(out));
    node(v).a = x.id;
    return v;
  }

  Var tanh(Var x) {
    Matrix out = value(x).unaryExpr([](Real t) { return std::tanh(t); });
    Var v = push(Op::kTanh, std::move(out));
    node(v).a = x.id;
    return v;
  }

  Var one_minus(Var x) {
    Matrix out = (Real(1) - value(x).array()).matrix();
    Var v = push(Op::kOneMinus, std::move(out));
    node(v).a = x.id;
    return v;
  }

  /// Vertical concatenation of column vectors.
  Var concat(std::initializer_list<Var> parts) {
    Eigen::Index rows = 0;
    for (Var p : parts) rows += value(p).rows();
    Matrix out(rows, 1);
    Eigen::Index off = 0;
    std::vector<int> ids;
    for (Var p : parts) {
      out.middleRows(off, value(p).rows()) = value(p);
      off += value(p).rows();
      ids.push_back(p.id);
    }
    Var v = push(Op::kConcat, std::move(out));
    node(v).list = std::move(ids);
    return v;
  }

  /// Stacks column vectors [k x 1] as the rows of an [n x k] matrix.
  Var stack_rows(std::span<const Var> rows) {
    assert(!rows.empty());
    Matrix out(static_cast<Eigen::Index>(rows.size()), value(rows[0]).rows());
    std::vector<int> ids;
    for (std::size_t i = 0; i < rows.size(); ++i) {
      out.row(static_cast<Eigen::Index>(i)) = value(rows[i]).col(0).transpose();
      ids.push_back(rows[i].id);
    }
    Var v = push(Op::kStackRows, std::move(out));
    node(v).list = std::move(ids);
    return v;
  }

  /// X^T a for node X [n x k] and node a [n x 1].
  Var transposed_matvec(Var x, Var a) {
    Var v = push(Op::kTMatvec, value(x).transpose() * value(a));
    node(v).a = x.id;
    node(v).b = a.id;
    return v;
  }

  Var softmax(Var x) {
    const Matrix& in = value(x);
    const Real m = in.maxCoeff();
    Matrix out = (in.array() - m).exp().matrix();
    out /= out.sum();
    Var v = push(Op::kSoftmax, std::move(out));
    node(v).a = x.id;
    return v;
  }

  /// Log-softmax of a column vector over the entries with mask[i] == 0;
  /// masked entries become -inf and receive no gradient.
  Var log_softmax(Var x, std::span<const std::uint8_t> mask) {
    const Matrix& in = value(x);
    const Eigen::Index n = in.rows();
    Real m = -std::numeric_limits<Real>::infinity();
    for (Eigen::Index i = 0; i < n; ++i) {
      if (!masked(mask, i)) m = std::max(m, in(i, 0));
    }
    Real sum = 0;
    for (Eigen::Index i = 0; i < n; ++i) {
      if (!masked(mask, i)) sum += std::exp(in(i, 0) - m);
    }
    const Real lse = m + std::log(sum);
    Matrix out(n, 1);
    for (Eigen::Index i = 0; i < n; ++i) {
      out(i, 0) = masked(mask, i) ? -std::numeric_limits<Real>::infinity() : in(i, 0) - lse;
    }
    Var v = push(Op::kLogSoftmax, std::move(out));
    node(v).a = x.id;
    return v;
  }

  /// Backpropagates the given seeds, accumulating parameter gradients into
  /// `grads` (which must share the parameter layout).
  void backward(std::span<const Seed<Real>> seeds, Params& grads) {
    std::vector<Matrix> g(nodes_.size());
    auto touch = [&](int id) -> Matrix& {
      Matrix& m = g[static_cast<std::size_t>(id)];
      if (m.size() == 0) m = Matrix::Zero(nodes_[static_cast<std::size_t>(id)].value.rows(),
                                          nodes_[static_cast<std::size_t>(id)].value.cols());
      return m;
    };
    int last = -1;
    for (const auto& s : seeds) {
      touch(s.var.id)(s.row, 0) += s.weight;
      last = std::max(last, s.var.id);
    }
    for (int id = last; id >= 0; --id) {
      Matrix& gy = g[static_cast<std::size_t>(id)];
      if (gy.size() == 0) continue;
      const Node& n = nodes_[static_cast<std::size_t>(id)];
      switch (n.op) {
        case Op::kConstant:
          break;
        case Op::kParamRow:
          grads[n.pa].row(n.index) += gy.col(0).transpose();
          break;
        case Op::kLinear:
          grads[n.pa].noalias() += gy * nodes_[ui(n.a)].value.transpose();
          touch(n.a).noalias() += param(n.pa).transpose() * gy;
          break;
        case Op::kAddBias:
          grads[n.pa] += gy;
          touch(n.a) += gy;
          break;
        case Op::kMatmulT:
          // Y = X W^T: dW = dY^T X, dX = dY W
          grads[n.pa].noalias() += gy.transpose() * nodes_[ui(n.a)].value;
          touch(n.a).noalias() += gy * param(n.pa);
          break;
        case Op::kParamMatvec:
          grads[n.pa].noalias() += nodes_[ui(n.a)].value.transpose() * gy;
          touch(n.a).noalias() += gy * param(n.pa).transpose();
          break;
        case Op::kAdd:
          touch(n.a) += gy;
          touch(n.b) += gy;
          break;
        case Op::kAddRowwise:
          touch(n.a) += gy;
          touch(n.b) += gy.colwise().sum().transpose();
          break;
        case Op::kMul:
          touch(n.a) += gy.cwiseProduct(nodes_[ui(n.b)].value);
          touch(n.b) += gy.cwiseProduct(nodes_[ui(n.a)].value);
          break;
        case Op::kMulConst:
          touch(n.a) += gy.cwiseProduct(n.aux);
          break;
        case Op::kSigmoid:
          touch(n.a) += gy.cwiseProduct((n.value.array() * (Real(1) - n.value.array())).matrix());
          break;
        case Op::kTanh:
          touch(n.a) += gy.cwiseProduct((Real(1) - n.value.array().square()).matrix());
          break;
        case Op::kOneMinus:
          touch(n.a) -= gy;
          break;
        case Op::kConcat: {
          Eigen::Index off = 0;
          for (int part : n.list) {
            const Eigen::Index rows = nodes_[ui(part)].value.rows();
            touch(part) += gy.middleRows(off, rows);
            off += rows;
          }
          break;
        }
        case Op::kStackRows:
          for (std::size_t i = 0; i < n.list.size(); ++i) {
            touch(n.list[i]) += gy.row(static_cast<Eigen::Index>(i)).transpose();
          }
          break;
        case Op::kTMatvec:
          // y = X^T a: dX = a dy^T, da = X dy
          touch(n.a).noalias() += nodes_[ui(n.b)].value * gy.transpose();
          touch(n.b).noalias() += nodes_[ui(n.a)].value * gy;
          break;
        case Op::kSoftmax: {
          const Real dot = gy.cwiseProduct(n.value).sum();
          touch(n.a) += (n.value.array() * (gy.array() - dot)).matrix();
          break;
        }
        case Op::kLogSoftmax: {
          Matrix& gx = touch(n.a);
          Real total = 0;
          for (Eigen::Index i = 0; i < n.value.rows(); ++i) {
            if (std::isfinite(n.value(i, 0))) total += gy(i, 0);
          }
          for (Eigen::Index i = 0; i < n.value.rows(); ++i) {
            if (std::isfinite(n.value(i, 0))) gx(i, 0) += gy(i, 0) - std::exp(n.value(i, 0)) * total;
          }
          break;
        }
      }
    }
  }

 private:
  enum class Op : std::uint8_t {
    kConstant,
    kParamRow,
    kLinear,
    kAddBias,
    kMatmulT,
    kParamMatvec,
    kAdd,
    kAddRowwise,
    kMul,
    kMulConst,
    kSigmoid,
    kTanh,
    kOneMinus,
    kConcat,
    kStackRows,
    kTMatvec,
    kSoftmax,
    kLogSoftmax,
  };

  struct Node {
    Op op = Op::kConstant;
    int a = -1;
    int b = -1;
    int pa = -1;
    Eigen::Index index = 0;
    Matrix value;
    Matrix aux;
    std::vector<int> list;
  };

  static bool masked(std::span<const std::uint8_t> mask, Eigen::Index i) {
    return !mask.empty() && mask[static_cast<std::size_t>(i)] != 0;
  }
  static std::size_t ui(int id) { return static_cast<std::size_t>(id); }
  std::size_t idx(Var v) const {
    assert(v.id >= 0 && static_cast<std::size_t>(v.id) < nodes_.size());
    return static_cast<std::size_t>(v.id);
  }
  Node& node(Var v) { return nodes_[idx(v)]; }
  const Matrix& param(int block) const { return (*params_)[block]; }

  Var push(Op op, Matrix value) {
    Node n;
    n.op = op;
    n.value = std::move(value);
    nodes_.push_back(std::move(n));
    return Var{static_cast<int>(nodes_.size()) - 1};
  }

  const Params* params_;
  std::vector<Node> nodes_;
};

}  // namespace setrnn::ad

#endif  // SETRNN_AUTODIFF_HPP
