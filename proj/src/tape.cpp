#include "spikelab/tape.hpp"

#include <cmath>
#include <stdexcept>

namespace spikelab::autodiff {

namespace {

constexpr int kMaxCoef = 16;

void tanh_derivs(double u0, int order, double* d) {
  const double t = std::tanh(u0);
  d[0] = t;
  if (order >= 1) d[1] = 1.0 - t * t;
  if (order >= 2) d[2] = -2.0 * t * d[1];
  if (order >= 3) d[3] = -2.0 * (d[1] * d[1] + t * d[2]);
  if (order >= 4) d[4] = -2.0 * (3.0 * d[1] * d[2] + t * d[3]);
}

// y = tanh(x) on one scalar jet, Horner form over the constant-free part.
void jet_tanh_scalar(const JetBasis& basis, const double* in, double* out) {
  const int n = basis.size();
  const int order = basis.max_total_order();
  double d[5];
  tanh_derivs(in[0], order, d);
  double factorial = 1.0;
  for (int k = 2; k <= order; ++k) {
    factorial *= k;
    d[k] /= factorial;
  }
  double uhat[kMaxCoef];
  for (int p = 0; p < n; ++p) uhat[p] = in[p];
  uhat[0] = 0.0;
  double acc[kMaxCoef] = {0};
  double tmp[kMaxCoef];
  acc[0] = d[order];
  for (int k = order - 1; k >= 0; --k) {
    basis.multiply(acc, uhat, tmp);
    tmp[0] += d[k];
    for (int p = 0; p < n; ++p) acc[p] = tmp[p];
  }
  for (int p = 0; p < n; ++p) out[p] = acc[p];
}

// xbar += adjoint of tanh given output jet y and upstream ybar:
// dy = (1 - y^2) * dx in the jet algebra.
void jet_tanh_backward_scalar(const JetBasis& basis, const double* y,
                              const double* ybar, double* xbar) {
  const int n = basis.size();
  double yy[kMaxCoef];
  basis.multiply(y, y, yy);
  double d[kMaxCoef];
  for (int p = 0; p < n; ++p) d[p] = -yy[p];
  d[0] += 1.0;
  basis.multiply_adjoint(ybar, d, xbar);
}

}  // namespace

Tape::Node& Tape::node(Var v) {
  if (!v.valid() || v.id >= static_cast<int>(nodes_.size())) {
    throw std::logic_error("Tape: invalid variable handle");
  }
  return nodes_[static_cast<size_t>(v.id)];
}

const Tape::Node& Tape::node(Var v) const {
  if (!v.valid() || v.id >= static_cast<int>(nodes_.size())) {
    throw std::logic_error("Tape: invalid variable handle");
  }
  return nodes_[static_cast<size_t>(v.id)];
}

Matrix& Tape::adjoint_of(int id) {
  Node& n = nodes_[static_cast<size_t>(id)];
  if (n.adjoint.size() == 0) {
    n.adjoint = Matrix::Zero(n.value.rows(), n.value.cols());
  }
  return n.adjoint;
}

Tape::Var Tape::push(Node n) {
  nodes_.push_back(std::move(n));
  return Var{static_cast<int>(nodes_.size()) - 1};
}

Tape::Var Tape::constant(Matrix value, JetShape shape) {
  if (value.rows() != shape.units || value.cols() != shape.cols()) {
    throw std::invalid_argument("Tape::constant: shape mismatch");
  }
  Node n;
  n.value = std::move(value);
  n.shape = shape;
  return push(std::move(n));
}

Tape::Var Tape::constant_plain(Matrix value) {
  JetShape s{static_cast<int>(value.rows()), static_cast<int>(value.cols()),
             &JetBasis::value_only()};
  return constant(std::move(value), s);
}

Tape::Var Tape::parameter(const Matrix* value, Matrix* grad) {
  return parameter(value, grad,
                   JetShape{static_cast<int>(value->rows()),
                            static_cast<int>(value->cols()),
                            &JetBasis::value_only()});
}

Tape::Var Tape::parameter(const Matrix* value, Matrix* grad, JetShape shape) {
  auto it = param_cache_.find(value);
  if (it != param_cache_.end()) return Var{it->second};
  if (grad->rows() != value->rows() || grad->cols() != value->cols()) {
    throw std::invalid_argument("Tape::parameter: grad sink shape mismatch");
  }
  if (value->rows() != shape.units || value->cols() != shape.cols()) {
    throw std::invalid_argument("Tape::parameter: shape mismatch");
  }
  Node n;
  n.value = *value;
  n.shape = shape;
  n.needs_grad = true;
  n.grad_sink = grad;
  n.pull = [](Tape&, Node& self) { *self.grad_sink += self.adjoint; };
  Var v = push(std::move(n));
  param_cache_.emplace(value, v.id);
  return v;
}

Tape::Var Tape::affine(Var w, Var b, Var x) {
  const Node& wn = node(w);
  const Node& bn = node(b);
  const Node& xn = node(x);
  const int out_units = static_cast<int>(wn.value.rows());
  const int batch = xn.shape.batch;
  if (wn.value.cols() != xn.value.rows() || bn.value.rows() != out_units ||
      bn.value.cols() != 1) {
    throw std::invalid_argument("Tape::affine: shape mismatch");
  }
  Node n;
  n.value.noalias() = wn.value * xn.value;
  n.value.block(0, 0, out_units, batch).colwise() += bn.value.col(0);
  n.shape = JetShape{out_units, batch, xn.shape.basis};
  n.needs_grad = wn.needs_grad || bn.needs_grad || xn.needs_grad;
  const int wid = w.id, bid = b.id, xid = x.id;
  n.pull = [wid, bid, xid, batch, out_units](Tape& t, Node& self) {
    const Matrix& adj = self.adjoint;
    Node& wn2 = t.nodes_[static_cast<size_t>(wid)];
    Node& bn2 = t.nodes_[static_cast<size_t>(bid)];
    Node& xn2 = t.nodes_[static_cast<size_t>(xid)];
    if (wn2.needs_grad) {
      t.adjoint_of(wid).noalias() += adj * xn2.value.transpose();
    }
    if (bn2.needs_grad) {
      t.adjoint_of(bid).col(0) +=
          adj.block(0, 0, out_units, batch).rowwise().sum();
    }
    if (xn2.needs_grad) {
      t.adjoint_of(xid).noalias() += wn2.value.transpose() * adj;
    }
  };
  return push(std::move(n));
}

Tape::Var Tape::tanh(Var x) {
  const Node& xn = node(x);
  const JetBasis& basis = *xn.shape.basis;
  const int units = xn.shape.units;
  const int batch = xn.shape.batch;
  const int nc = basis.size();
  Node n;
  n.value.resize(units, xn.value.cols());
  n.shape = xn.shape;
  n.needs_grad = xn.needs_grad;
  {
    double in[kMaxCoef], out[kMaxCoef];
    for (int j = 0; j < batch; ++j) {
      const double* src[kMaxCoef];
      double* dst[kMaxCoef];
      for (int c = 0; c < nc; ++c) {
        src[c] = xn.value.col(static_cast<Eigen::Index>(c) * batch + j).data();
        dst[c] = n.value.col(static_cast<Eigen::Index>(c) * batch + j).data();
      }
      for (int i = 0; i < units; ++i) {
        for (int c = 0; c < nc; ++c) in[c] = src[c][i];
        jet_tanh_scalar(basis, in, out);
        for (int c = 0; c < nc; ++c) dst[c][i] = out[c];
      }
    }
  }
  const int xid = x.id;
  n.pull = [xid, units, batch, nc, &basis](Tape& t, Node& self) {
    Node& xn2 = t.nodes_[static_cast<size_t>(xid)];
    if (!xn2.needs_grad) return;
    Matrix& xbar = t.adjoint_of(xid);
    double y[kMaxCoef], ybar[kMaxCoef], acc[kMaxCoef];
    for (int j = 0; j < batch; ++j) {
      const double* ysrc[kMaxCoef];
      const double* bsrc[kMaxCoef];
      double* xdst[kMaxCoef];
      for (int c = 0; c < nc; ++c) {
        const Eigen::Index col = static_cast<Eigen::Index>(c) * batch + j;
        ysrc[c] = self.value.col(col).data();
        bsrc[c] = self.adjoint.col(col).data();
        xdst[c] = xbar.col(col).data();
      }
      for (int i = 0; i < units; ++i) {
        for (int c = 0; c < nc; ++c) {
          y[c] = ysrc[c][i];
          ybar[c] = bsrc[c][i];
          acc[c] = 0.0;
        }
        jet_tanh_backward_scalar(basis, y, ybar, acc);
        for (int c = 0; c < nc; ++c) xdst[c][i] += acc[c];
      }
    }
  };
  return push(std::move(n));
}

Tape::Var Tape::extract(Var x, int unit, int x_order, int t_order) {
  const Node& xn = node(x);
  const int pos = xn.shape.basis->position(x_order, t_order);
  if (pos < 0) {
    throw std::invalid_argument(
        "Tape::extract: derivative not retained by this basis");
  }
  if (unit < 0 || unit >= xn.shape.units) {
    throw std::invalid_argument("Tape::extract: unit out of range");
  }
  const int batch = xn.shape.batch;
  const double factor = xn.shape.basis->derivative_scale(pos);
  Node n;
  n.value = factor *
            xn.value.block(unit, static_cast<Eigen::Index>(pos) * batch, 1,
                           batch);
  n.shape = JetShape{1, batch, &JetBasis::value_only()};
  n.needs_grad = xn.needs_grad;
  const int xid = x.id;
  n.pull = [xid, unit, pos, batch, factor](Tape& t, Node& self) {
    Node& xn2 = t.nodes_[static_cast<size_t>(xid)];
    if (!xn2.needs_grad) return;
    t.adjoint_of(xid).block(unit, static_cast<Eigen::Index>(pos) * batch, 1,
                            batch) += factor * self.adjoint;
  };
  return push(std::move(n));
}

Tape::Var Tape::coefficient0(Var x) {
  const Node& xn = node(x);
  const int units = xn.shape.units;
  const int batch = xn.shape.batch;
  Node n;
  n.value = xn.value.block(0, 0, units, batch);
  n.shape = JetShape{units, batch, &JetBasis::value_only()};
  n.needs_grad = xn.needs_grad;
  const int xid = x.id;
  n.pull = [xid, units, batch](Tape& t, Node& self) {
    Node& xn2 = t.nodes_[static_cast<size_t>(xid)];
    if (!xn2.needs_grad) return;
    t.adjoint_of(xid).block(0, 0, units, batch) += self.adjoint;
  };
  return push(std::move(n));
}

Tape::Var Tape::binary_elementwise(Var a, Var b, int mode) {
  const Node& an = node(a);
  const Node& bn = node(b);
  if (an.value.rows() != bn.value.rows() ||
      an.value.cols() != bn.value.cols()) {
    throw std::invalid_argument("Tape: elementwise shape mismatch");
  }
  Node n;
  n.shape = an.shape;
  n.needs_grad = an.needs_grad || bn.needs_grad;
  const int aid = a.id, bid = b.id;
  switch (mode) {
    case 0:
      n.value = an.value + bn.value;
      n.pull = [aid, bid](Tape& t, Node& self) {
        if (t.nodes_[static_cast<size_t>(aid)].needs_grad)
          t.adjoint_of(aid) += self.adjoint;
        if (t.nodes_[static_cast<size_t>(bid)].needs_grad)
          t.adjoint_of(bid) += self.adjoint;
      };
      break;
    case 1:
      n.value = an.value - bn.value;
      n.pull = [aid, bid](Tape& t, Node& self) {
        if (t.nodes_[static_cast<size_t>(aid)].needs_grad)
          t.adjoint_of(aid) += self.adjoint;
        if (t.nodes_[static_cast<size_t>(bid)].needs_grad)
          t.adjoint_of(bid) -= self.adjoint;
      };
      break;
    default:
      if (!an.shape.plain() || !bn.shape.plain()) {
        throw std::invalid_argument("Tape::hadamard: plain tensors only");
      }
      n.value = an.value.cwiseProduct(bn.value);
      n.pull = [aid, bid](Tape& t, Node& self) {
        Node& a2 = t.nodes_[static_cast<size_t>(aid)];
        Node& b2 = t.nodes_[static_cast<size_t>(bid)];
        if (a2.needs_grad)
          t.adjoint_of(aid) += self.adjoint.cwiseProduct(b2.value);
        if (b2.needs_grad)
          t.adjoint_of(bid) += self.adjoint.cwiseProduct(a2.value);
      };
      break;
  }
  return push(std::move(n));
}

Tape::Var Tape::add(Var a, Var b) { return binary_elementwise(a, b, 0); }
Tape::Var Tape::sub(Var a, Var b) { return binary_elementwise(a, b, 1); }
Tape::Var Tape::hadamard(Var a, Var b) { return binary_elementwise(a, b, 2); }

Tape::Var Tape::scale(Var a, double s) {
  const Node& an = node(a);
  Node n;
  n.value = s * an.value;
  n.shape = an.shape;
  n.needs_grad = an.needs_grad;
  const int aid = a.id;
  n.pull = [aid, s](Tape& t, Node& self) {
    if (t.nodes_[static_cast<size_t>(aid)].needs_grad)
      t.adjoint_of(aid) += s * self.adjoint;
  };
  return push(std::move(n));
}

Tape::Var Tape::add_scalar(Var a, double s) {
  const Node& an = node(a);
  if (!an.shape.plain()) {
    throw std::invalid_argument("Tape::add_scalar: plain tensors only");
  }
  Node n;
  n.value = an.value.array() + s;
  n.shape = an.shape;
  n.needs_grad = an.needs_grad;
  const int aid = a.id;
  n.pull = [aid](Tape& t, Node& self) {
    if (t.nodes_[static_cast<size_t>(aid)].needs_grad)
      t.adjoint_of(aid) += self.adjoint;
  };
  return push(std::move(n));
}

Tape::Var Tape::sub_const(Var a, Matrix c) {
  const Node& an = node(a);
  if (an.value.rows() != c.rows() || an.value.cols() != c.cols()) {
    throw std::invalid_argument("Tape::sub_const: shape mismatch");
  }
  Node n;
  n.value = an.value - c;
  n.shape = an.shape;
  n.needs_grad = an.needs_grad;
  const int aid = a.id;
  n.pull = [aid](Tape& t, Node& self) {
    if (t.nodes_[static_cast<size_t>(aid)].needs_grad)
      t.adjoint_of(aid) += self.adjoint;
  };
  return push(std::move(n));
}

Tape::Var Tape::vconcat(Var a, Var b) {
  const Node& an = node(a);
  const Node& bn = node(b);
  if (!an.shape.plain() || !bn.shape.plain() ||
      an.shape.batch != bn.shape.batch) {
    throw std::invalid_argument("Tape::vconcat: incompatible tensors");
  }
  const int ra = an.shape.units;
  const int rb = bn.shape.units;
  Node n;
  n.value.resize(ra + rb, an.shape.batch);
  n.value.topRows(ra) = an.value;
  n.value.bottomRows(rb) = bn.value;
  n.shape = JetShape{ra + rb, an.shape.batch, &JetBasis::value_only()};
  n.needs_grad = an.needs_grad || bn.needs_grad;
  const int aid = a.id, bid = b.id;
  n.pull = [aid, bid, ra, rb](Tape& t, Node& self) {
    if (t.nodes_[static_cast<size_t>(aid)].needs_grad)
      t.adjoint_of(aid) += self.adjoint.topRows(ra);
    if (t.nodes_[static_cast<size_t>(bid)].needs_grad)
      t.adjoint_of(bid) += self.adjoint.bottomRows(rb);
  };
  return push(std::move(n));
}

Tape::Var Tape::monomials(Var u,
                          const std::vector<std::vector<int>>& exponents) {
  const Node& un = node(u);
  if (!un.shape.plain()) {
    throw std::invalid_argument("Tape::monomials: plain tensor expected");
  }
  const int nvars = un.shape.units;
  const int batch = un.shape.batch;
  const int nrows = static_cast<int>(exponents.size());
  Node n;
  n.value.resize(nrows, batch);
  for (int r = 0; r < nrows; ++r) {
    if (static_cast<int>(exponents[static_cast<size_t>(r)].size()) != nvars) {
      throw std::invalid_argument("Tape::monomials: exponent arity mismatch");
    }
    for (int j = 0; j < batch; ++j) {
      double prod = 1.0;
      for (int k = 0; k < nvars; ++k) {
        const int e = exponents[static_cast<size_t>(r)][static_cast<size_t>(k)];
        for (int rep = 0; rep < e; ++rep) prod *= un.value(k, j);
      }
      n.value(r, j) = prod;
    }
  }
  n.shape = JetShape{nrows, batch, &JetBasis::value_only()};
  n.needs_grad = un.needs_grad;
  const int uid = u.id;
  auto exps = exponents;
  n.pull = [uid, nvars, batch, nrows, exps](Tape& t, Node& self) {
    Node& un2 = t.nodes_[static_cast<size_t>(uid)];
    if (!un2.needs_grad) return;
    Matrix& ubar = t.adjoint_of(uid);
    for (int r = 0; r < nrows; ++r) {
      for (int k = 0; k < nvars; ++k) {
        const int e = exps[static_cast<size_t>(r)][static_cast<size_t>(k)];
        if (e == 0) continue;
        for (int j = 0; j < batch; ++j) {
          double partial = static_cast<double>(e);
          for (int l = 0; l < nvars; ++l) {
            int el = exps[static_cast<size_t>(r)][static_cast<size_t>(l)];
            if (l == k) el -= 1;
            for (int rep = 0; rep < el; ++rep) partial *= un2.value(l, j);
          }
          ubar(k, j) += self.adjoint(r, j) * partial;
        }
      }
    }
  };
  return push(std::move(n));
}

Tape::Var Tape::matvec(Var a, Var z) {
  const Node& an = node(a);
  const Node& zn = node(z);
  if (an.value.cols() != zn.value.rows()) {
    throw std::invalid_argument("Tape::matvec: inner dimension mismatch");
  }
  Node n;
  n.value.noalias() = an.value * zn.value;
  n.shape = JetShape{static_cast<int>(an.value.rows()), zn.shape.batch,
                     &JetBasis::value_only()};
  n.needs_grad = an.needs_grad || zn.needs_grad;
  const int aid = a.id, zid = z.id;
  n.pull = [aid, zid](Tape& t, Node& self) {
    Node& a2 = t.nodes_[static_cast<size_t>(aid)];
    Node& z2 = t.nodes_[static_cast<size_t>(zid)];
    if (a2.needs_grad)
      t.adjoint_of(aid).noalias() += self.adjoint * z2.value.transpose();
    if (z2.needs_grad)
      t.adjoint_of(zid).noalias() += a2.value.transpose() * self.adjoint;
  };
  return push(std::move(n));
}

Tape::Var Tape::expm_apply(Var a, double dt, Var z) {
  const Node& an = node(a);
  const Node& zn = node(z);
  if (an.value.rows() != an.value.cols() ||
      an.value.cols() != zn.value.rows()) {
    throw std::invalid_argument("Tape::expm_apply: shape mismatch");
  }
  auto ws = std::make_shared<linalg::ExpmWorkspace>();
  const Matrix propagator = linalg::expm_forward(an.value, dt, *ws);
  Node n;
  n.value.noalias() = propagator * zn.value;
  n.shape = JetShape{static_cast<int>(an.value.rows()), zn.shape.batch,
                     &JetBasis::value_only()};
  n.needs_grad = an.needs_grad || zn.needs_grad;
  const int aid = a.id, zid = z.id;
  n.pull = [aid, zid, ws](Tape& t, Node& self) {
    Node& a2 = t.nodes_[static_cast<size_t>(aid)];
    Node& z2 = t.nodes_[static_cast<size_t>(zid)];
    if (z2.needs_grad) {
      t.adjoint_of(zid).noalias() += ws->result().transpose() * self.adjoint;
    }
    if (a2.needs_grad) {
      const Matrix ebar = self.adjoint * z2.value.transpose();
      t.adjoint_of(aid) += linalg::expm_adjoint(*ws, ebar);
    }
  };
  return push(std::move(n));
}

Tape::Var Tape::mean_square(Var a) {
  const Node& an = node(a);
  if (!an.shape.plain()) {
    throw std::invalid_argument("Tape::mean_square: plain tensors only");
  }
  const double denom = static_cast<double>(an.shape.batch);
  Node n;
  n.value = Matrix::Constant(1, 1, an.value.squaredNorm() / denom);
  n.shape = JetShape{1, 1, &JetBasis::value_only()};
  n.needs_grad = an.needs_grad;
  const int aid = a.id;
  n.pull = [aid, denom](Tape& t, Node& self) {
    Node& a2 = t.nodes_[static_cast<size_t>(aid)];
    if (!a2.needs_grad) return;
    t.adjoint_of(aid) += (2.0 / denom) * self.adjoint(0, 0) * a2.value;
  };
  return push(std::move(n));
}

Tape::Var Tape::l1(Var a) {
  const Node& an = node(a);
  Node n;
  n.value = Matrix::Constant(1, 1, an.value.cwiseAbs().sum());
  n.shape = JetShape{1, 1, &JetBasis::value_only()};
  n.needs_grad = an.needs_grad;
  const int aid = a.id;
  n.pull = [aid](Tape& t, Node& self) {
    Node& a2 = t.nodes_[static_cast<size_t>(aid)];
    if (!a2.needs_grad) return;
    // Subgradient: sign(x), 0 at exactly zero.
    t.adjoint_of(aid) +=
        self.adjoint(0, 0) *
        a2.value.unaryExpr([](double v) {
          return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0);
        });
  };
  return push(std::move(n));
}

Tape::Var Tape::weighted_sum(
    const std::vector<std::pair<double, Var>>& terms) {
  double total = 0.0;
  bool needs = false;
  for (const auto& [w, v] : terms) {
    const Node& tn = node(v);
    if (tn.value.rows() != 1 || tn.value.cols() != 1) {
      throw std::invalid_argument("Tape::weighted_sum: scalar terms only");
    }
    total += w * tn.value(0, 0);
    needs = needs || tn.needs_grad;
  }
  Node n;
  n.value = Matrix::Constant(1, 1, total);
  n.shape = JetShape{1, 1, &JetBasis::value_only()};
  n.needs_grad = needs;
  auto inputs = terms;
  n.pull = [inputs](Tape& t, Node& self) {
    for (const auto& [w, v] : inputs) {
      if (t.nodes_[static_cast<size_t>(v.id)].needs_grad) {
        t.adjoint_of(v.id) += w * self.adjoint;
      }
    }
  };
  return push(std::move(n));
}

double Tape::scalar(Var v) const {
  const Node& n = node(v);
  if (n.value.rows() != 1 || n.value.cols() != 1) {
    throw std::invalid_argument("Tape::scalar: not a scalar node");
  }
  return n.value(0, 0);
}

const Matrix& Tape::value(Var v) const { return node(v).value; }

const JetShape& Tape::shape(Var v) const { return node(v).shape; }

void Tape::backward(Var root) {
  Node& rn = node(root);
  if (rn.value.rows() != 1 || rn.value.cols() != 1) {
    throw std::invalid_argument("Tape::backward: root must be scalar");
  }
  adjoint_of(root.id)(0, 0) = 1.0;
  for (int id = root.id; id >= 0; --id) {
    Node& n = nodes_[static_cast<size_t>(id)];
    if (!n.needs_grad || n.adjoint.size() == 0 || !n.pull) continue;
    n.pull(*this, n);
  }
}

}  // namespace spikelab::autodiff
