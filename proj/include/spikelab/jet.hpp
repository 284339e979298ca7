#pragma once

#include <Eigen/Dense>

#include <span>
#include <vector>

namespace spikelab::autodiff {

/// Set of retained Taylor coefficients for up to two tagged inputs (x, t).
/// A basis is "lower closed": if (i,j) is kept, so is every (i',j') with
/// i' <= i, j' <= j, which makes truncated products and compositions exact
/// for the retained coefficients.
class JetBasis {
 public:
  struct Index {
    int x = 0;
    int t = 0;
  };
  struct ProductEntry {
    int lhs = 0;
    int rhs = 0;
    int dst = 0;
  };

  /// Every mixed partial with total order <= 4 (15 coefficients).
  static const JetBasis& full_order4();
  /// Value, d/dx..d^k/dx^k and d/dt: what a PDE residual of spatial
  /// order k needs.
  static const JetBasis& pde_residual(int x_order);
  /// Value and d/dt (first-order ODE residuals).
  static const JetBasis& ode_residual();
  /// Value only (plain evaluation expressed as a 1-coefficient jet).
  static const JetBasis& value_only();

  int size() const { return static_cast<int>(indices_.size()); }
  int max_total_order() const { return max_total_order_; }
  /// Position of coefficient (x_order, t_order), or -1 when not retained.
  int position(int x_order, int t_order) const;
  const std::vector<Index>& indices() const { return indices_; }
  const std::vector<ProductEntry>& product_table() const { return table_; }
  /// x_order! * t_order! — converts a Taylor coefficient to a derivative.
  double derivative_scale(int pos) const { return deriv_scale_[pos]; }

  // Raw-buffer kernels shared by the scalar Jet type and the batched tape.
  void multiply(const double* a, const double* b, double* dst) const;
  /// Adjoint of multiply with respect to its first argument:
  /// lhs_bar[p] += sum over entries of dst_bar[dst] * rhs[q].
  void multiply_adjoint(const double* dst_bar, const double* rhs,
                        double* lhs_bar) const;
  /// y = f(u) for a univariate f with derivatives derivs[k] = f^(k)(u0),
  /// k = 0..max_total_order().
  void compose(const double* u, std::span<const double> derivs,
               double* dst) const;

 private:
  explicit JetBasis(std::vector<Index> indices);

  std::vector<Index> indices_;
  std::vector<ProductEntry> table_;
  std::vector<double> deriv_scale_;
  std::vector<int> position_;  // dense (x, t) grid lookup
  int x_cap_ = 0;
  int t_cap_ = 0;
  int max_total_order_ = 0;
};

/// Truncated Taylor value: function value plus input derivatives against
/// the tagged variables of its basis.
class Jet {
 public:
  explicit Jet(const JetBasis& basis, double value = 0.0);
  /// Seeds d/dx (which = 0) or d/dt (which = 1) with 1.
  static Jet variable(const JetBasis& basis, double value, int which);

  const JetBasis& basis() const { return *basis_; }
  double value() const { return c_[0]; }
  double coefficient(int x_order, int t_order) const;
  double derivative(int x_order, int t_order) const;
  const Eigen::VectorXd& coefficients() const { return c_; }
  Eigen::VectorXd& coefficients() { return c_; }

  Jet& operator+=(const Jet& o);
  Jet& operator-=(const Jet& o);
  Jet& operator+=(double s);
  Jet& operator-=(double s);
  Jet& operator*=(double s);

  friend Jet operator+(Jet a, const Jet& b) { return a += b; }
  friend Jet operator-(Jet a, const Jet& b) { return a -= b; }
  friend Jet operator+(Jet a, double s) { return a += s; }
  friend Jet operator+(double s, Jet a) { return a += s; }
  friend Jet operator-(Jet a, double s) { return a -= s; }
  friend Jet operator-(double s, const Jet& a);
  friend Jet operator*(Jet a, double s) { return a *= s; }
  friend Jet operator*(double s, Jet a) { return a *= s; }
  friend Jet operator*(const Jet& a, const Jet& b);
  friend Jet operator-(const Jet& a);

 private:
  const JetBasis* basis_;
  Eigen::VectorXd c_;
};

/// f applied to a jet, given f^(k)(u0) for k = 0..basis order.
Jet compose(const Jet& u, std::span<const double> derivatives);

Jet sin(const Jet& u);
Jet cos(const Jet& u);
Jet exp(const Jet& u);
Jet tanh(const Jet& u);
Jet inverse(const Jet& u);  // 1/u, u0 != 0
Jet sech(const Jet& u);
Jet pow_int(const Jet& u, int k);  // k >= 0

}  // namespace spikelab::autodiff
