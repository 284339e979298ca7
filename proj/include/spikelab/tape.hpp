#pragma once

#include "spikelab/jet.hpp"
#include "spikelab/linalg.hpp"

#include <functional>
#include <memory>
#include <unordered_map>
#include <utility>
#include <vector>

namespace spikelab::autodiff {

using linalg::Matrix;

/// Batched jet tensor layout: rows = units, cols = batch * ncoef, stored as
/// coefficient-major column blocks [c0 | c1 | ...], each `batch` wide.
/// Plain tensors are the ncoef = 1 special case.
struct JetShape {
  int units = 0;
  int batch = 0;
  const JetBasis* basis = &JetBasis::value_only();

  int ncoef() const { return basis->size(); }
  Eigen::Index cols() const {
    return static_cast<Eigen::Index>(batch) * ncoef();
  }
  bool plain() const { return basis->size() == 1; }
};

/// Reverse-accumulation tape over jet-tensor valued nodes. Records the
/// primitive operations of one loss evaluation in topological order and
/// replays them backward to accumulate parameter gradients.
class Tape {
 public:
  struct Var {
    int id = -1;
    bool valid() const { return id >= 0; }
  };

  Var constant(Matrix value, JetShape shape);
  Var constant_plain(Matrix value);
  /// Trainable leaf; the adjoint is accumulated into *grad during backward.
  /// Registering the same value pointer twice returns the cached node.
  Var parameter(const Matrix* value, Matrix* grad);
  Var parameter(const Matrix* value, Matrix* grad, JetShape shape);

  Var affine(Var w, Var b, Var x);
  Var tanh(Var x);

  /// Derivative row of one output unit: (1 x batch), scaled to an actual
  /// derivative (coefficient times x_order! t_order!).
  Var extract(Var x, int unit, int x_order, int t_order);
  /// Value part of every unit: (units x batch) plain tensor.
  Var coefficient0(Var x);

  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var hadamard(Var a, Var b);
  Var scale(Var a, double s);
  Var add_scalar(Var a, double s);
  Var sub_const(Var a, Matrix c);
  Var vconcat(Var a, Var b);

  /// Monomial rows prod_k u_k^{e[r][k]} from a plain (n x batch) tensor.
  Var monomials(Var u, const std::vector<std::vector<int>>& exponents);
  Var matvec(Var a, Var z);
  Var expm_apply(Var a, double dt, Var z);

  /// Sum of squared entries divided by the batch width.
  Var mean_square(Var a);
  Var l1(Var a);
  Var weighted_sum(const std::vector<std::pair<double, Var>>& terms);

  double scalar(Var v) const;
  const Matrix& value(Var v) const;
  const JetShape& shape(Var v) const;
  std::size_t node_count() const { return nodes_.size(); }

  void backward(Var root);

 private:
  struct Node {
    Matrix value;
    JetShape shape;
    Matrix adjoint;
    bool needs_grad = false;
    Matrix* grad_sink = nullptr;
    std::function<void(Tape&, Node&)> pull;
  };

  Node& node(Var v);
  const Node& node(Var v) const;
  Matrix& adjoint_of(int id);
  Var push(Node n);
  Var binary_elementwise(Var a, Var b, int mode);

  std::vector<Node> nodes_;
  std::unordered_map<const Matrix*, int> param_cache_;
};

}  // namespace spikelab::autodiff
