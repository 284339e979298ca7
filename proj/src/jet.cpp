#include "spikelab/jet.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace spikelab::autodiff {

JetBasis::JetBasis(std::vector<Index> indices) : indices_(std::move(indices)) {
  for (const Index& ix : indices_) {
    x_cap_ = std::max(x_cap_, ix.x);
    t_cap_ = std::max(t_cap_, ix.t);
    max_total_order_ = std::max(max_total_order_, ix.x + ix.t);
  }
  position_.assign(static_cast<size_t>((x_cap_ + 1) * (t_cap_ + 1)), -1);
  for (size_t p = 0; p < indices_.size(); ++p) {
    position_[static_cast<size_t>(indices_[p].x * (t_cap_ + 1) +
                                  indices_[p].t)] = static_cast<int>(p);
  }
  deriv_scale_.reserve(indices_.size());
  for (const Index& ix : indices_) {
    double s = 1.0;
    for (int k = 2; k <= ix.x; ++k) s *= k;
    for (int k = 2; k <= ix.t; ++k) s *= k;
    deriv_scale_.push_back(s);
  }
  // Ordered pairs whose index sum is retained.
  const int n = size();
  for (int p = 0; p < n; ++p) {
    for (int q = 0; q < n; ++q) {
      const int dst = position(indices_[static_cast<size_t>(p)].x +
                                   indices_[static_cast<size_t>(q)].x,
                               indices_[static_cast<size_t>(p)].t +
                                   indices_[static_cast<size_t>(q)].t);
      if (dst >= 0) table_.push_back({p, q, dst});
    }
  }
}

int JetBasis::position(int x_order, int t_order) const {
  if (x_order < 0 || t_order < 0 || x_order > x_cap_ || t_order > t_cap_) {
    return -1;
  }
  return position_[static_cast<size_t>(x_order * (t_cap_ + 1) + t_order)];
}

void JetBasis::multiply(const double* a, const double* b, double* dst) const {
  for (int p = 0; p < size(); ++p) dst[p] = 0.0;
  for (const ProductEntry& e : table_) {
    dst[e.dst] += a[e.lhs] * b[e.rhs];
  }
}

void JetBasis::multiply_adjoint(const double* dst_bar, const double* rhs,
                                double* lhs_bar) const {
  for (const ProductEntry& e : table_) {
    lhs_bar[e.lhs] += dst_bar[e.dst] * rhs[e.rhs];
  }
}

void JetBasis::compose(const double* u, std::span<const double> derivs,
                       double* dst) const {
  const int n = size();
  const int order = max_total_order_;
  if (static_cast<int>(derivs.size()) < order + 1) {
    throw std::invalid_argument("JetBasis::compose: not enough derivatives");
  }
  // Horner over the constant-free part: y = d0 + uhat*(d1 + uhat*(d2 + ...))
  // with dk = f^(k)(u0)/k!.
  double factorial = 1.0;
  std::vector<double> dk(static_cast<size_t>(order + 1));
  for (int k = 0; k <= order; ++k) {
    if (k > 1) factorial *= k;
    dk[static_cast<size_t>(k)] = derivs[static_cast<size_t>(k)] / factorial;
  }
  std::vector<double> uhat(static_cast<size_t>(n));
  for (int p = 0; p < n; ++p) uhat[static_cast<size_t>(p)] = u[p];
  uhat[0] = 0.0;

  std::vector<double> acc(static_cast<size_t>(n), 0.0);
  std::vector<double> tmp(static_cast<size_t>(n), 0.0);
  acc[0] = dk[static_cast<size_t>(order)];
  for (int k = order - 1; k >= 0; --k) {
    multiply(acc.data(), uhat.data(), tmp.data());
    tmp[0] += dk[static_cast<size_t>(k)];
    std::swap(acc, tmp);
  }
  for (int p = 0; p < n; ++p) dst[p] = acc[static_cast<size_t>(p)];
}

namespace {

std::vector<JetBasis::Index> full_indices(int order) {
  std::vector<JetBasis::Index> out;
  for (int total = 0; total <= order; ++total) {
    for (int x = total; x >= 0; --x) out.push_back({x, total - x});
  }
  return out;
}

std::vector<JetBasis::Index> residual_indices(int x_order) {
  std::vector<JetBasis::Index> out;
  out.push_back({0, 0});
  out.push_back({0, 1});
  for (int k = 1; k <= x_order; ++k) out.push_back({k, 0});
  return out;
}

}  // namespace

const JetBasis& JetBasis::full_order4() {
  static const JetBasis basis(full_indices(4));
  return basis;
}

const JetBasis& JetBasis::pde_residual(int x_order) {
  if (x_order < 1 || x_order > 4) {
    throw std::invalid_argument("pde_residual basis: order must be in 1..4");
  }
  static const JetBasis b1(residual_indices(1));
  static const JetBasis b2(residual_indices(2));
  static const JetBasis b3(residual_indices(3));
  static const JetBasis b4(residual_indices(4));
  switch (x_order) {
    case 1: return b1;
    case 2: return b2;
    case 3: return b3;
    default: return b4;
  }
}

const JetBasis& JetBasis::ode_residual() {
  static const JetBasis basis(std::vector<Index>{{0, 0}, {0, 1}});
  return basis;
}

const JetBasis& JetBasis::value_only() {
  static const JetBasis basis(std::vector<Index>{{0, 0}});
  return basis;
}

Jet::Jet(const JetBasis& basis, double value)
    : basis_(&basis), c_(Eigen::VectorXd::Zero(basis.size())) {
  c_[0] = value;
}

Jet Jet::variable(const JetBasis& basis, double value, int which) {
  Jet j(basis, value);
  const int pos = which == 0 ? basis.position(1, 0) : basis.position(0, 1);
  // A basis that does not carry this input treats the variable as constant.
  if (pos >= 0) j.c_[pos] = 1.0;
  return j;
}

double Jet::coefficient(int x_order, int t_order) const {
  const int pos = basis_->position(x_order, t_order);
  return pos < 0 ? 0.0 : c_[pos];
}

double Jet::derivative(int x_order, int t_order) const {
  const int pos = basis_->position(x_order, t_order);
  if (pos < 0) {
    throw std::invalid_argument("Jet::derivative: coefficient not retained");
  }
  return c_[pos] * basis_->derivative_scale(pos);
}

Jet& Jet::operator+=(const Jet& o) {
  c_ += o.c_;
  return *this;
}
Jet& Jet::operator-=(const Jet& o) {
  c_ -= o.c_;
  return *this;
}
Jet& Jet::operator+=(double s) {
  c_[0] += s;
  return *this;
}
Jet& Jet::operator-=(double s) {
  c_[0] -= s;
  return *this;
}
Jet& Jet::operator*=(double s) {
  c_ *= s;
  return *this;
}

Jet operator-(double s, const Jet& a) {
  Jet out = -a;
  out += s;
  return out;
}

Jet operator-(const Jet& a) {
  Jet out = a;
  out.c_ = -out.c_;
  return out;
}

Jet operator*(const Jet& a, const Jet& b) {
  Jet out(*a.basis_);
  a.basis_->multiply(a.c_.data(), b.c_.data(), out.c_.data());
  return out;
}

Jet compose(const Jet& u, std::span<const double> derivatives) {
  Jet out(u.basis());
  u.basis().compose(u.coefficients().data(), derivatives,
                    out.coefficients().data());
  return out;
}

namespace {

std::vector<double> tanh_derivatives(double u0, int order) {
  std::vector<double> d(static_cast<size_t>(order + 1));
  const double t = std::tanh(u0);
  d[0] = t;
  if (order >= 1) d[1] = 1.0 - t * t;
  if (order >= 2) d[2] = -2.0 * t * d[1];
  if (order >= 3) d[3] = -2.0 * (d[1] * d[1] + t * d[2]);
  if (order >= 4) d[4] = -2.0 * (3.0 * d[1] * d[2] + t * d[3]);
  return d;
}

}  // namespace

Jet sin(const Jet& u) {
  const int order = u.basis().max_total_order();
  std::vector<double> d(static_cast<size_t>(order + 1));
  const double s = std::sin(u.value());
  const double c = std::cos(u.value());
  const double cycle[4] = {s, c, -s, -c};
  for (int k = 0; k <= order; ++k) d[static_cast<size_t>(k)] = cycle[k % 4];
  return compose(u, d);
}

Jet cos(const Jet& u) {
  const int order = u.basis().max_total_order();
  std::vector<double> d(static_cast<size_t>(order + 1));
  const double s = std::sin(u.value());
  const double c = std::cos(u.value());
  const double cycle[4] = {c, -s, -c, s};
  for (int k = 0; k <= order; ++k) d[static_cast<size_t>(k)] = cycle[k % 4];
  return compose(u, d);
}

Jet exp(const Jet& u) {
  const int order = u.basis().max_total_order();
  std::vector<double> d(static_cast<size_t>(order + 1), std::exp(u.value()));
  return compose(u, d);
}

Jet tanh(const Jet& u) {
  return compose(u, tanh_derivatives(u.value(), u.basis().max_total_order()));
}

Jet inverse(const Jet& u) {
  if (u.value() == 0.0) {
    throw std::domain_error("jet inverse: value part is zero");
  }
  const int order = u.basis().max_total_order();
  std::vector<double> d(static_cast<size_t>(order + 1));
  // d^k/du^k (1/u) = (-1)^k k! / u^{k+1}
  double factorial = 1.0;
  double sign = 1.0;
  double upow = u.value();
  for (int k = 0; k <= order; ++k) {
    if (k > 1) factorial *= k;
    d[static_cast<size_t>(k)] = sign * factorial / upow;
    sign = -sign;
    upow *= u.value();
  }
  return compose(u, d);
}

Jet sech(const Jet& u) {
  Jet c = exp(u) + exp(-u);
  return 2.0 * inverse(c);
}

Jet pow_int(const Jet& u, int k) {
  if (k < 0) throw std::invalid_argument("pow_int: negative exponent");
  Jet out(u.basis(), 1.0);
  for (int i = 0; i < k; ++i) out = out * u;
  return out;
}

}  // namespace spikelab::autodiff
