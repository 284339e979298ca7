#pragma once

#include <Eigen/Dense>

#include <complex>
#include <vector>

namespace spikelab::linalg {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

struct EigenSpectrum {
  std::vector<std::complex<double>> eigenvalues;
  double spectral_abscissa = 0.0;
};

/// e^{A dt} via degree-13 diagonal Pade with scaling and squaring.
/// The squaring count is chosen from the 1-norm of A*dt.
Matrix expm(const Matrix& a, double dt = 1.0);

/// Forward pass of expm that keeps every intermediate the adjoint needs.
/// The backward pass replays the same Pade/squaring graph in reverse, so
/// gradients are exactly consistent with the forward values.
class ExpmWorkspace {
 public:
  const Matrix& result() const { return result_; }

 private:
  friend Matrix expm_forward(const Matrix&, double, ExpmWorkspace&);
  friend Matrix expm_adjoint(const ExpmWorkspace&, const Matrix&);

  double scale_ = 1.0;  // dt / 2^s
  int squarings_ = 0;
  Matrix bs_, b2_, b4_, b6_;
  Matrix w1_, w_, u_, z1_, v_;
  Matrix q_;                       // Pade denominator V - U
  Eigen::PartialPivLU<Matrix> lu_; // factorization of q_
  Matrix r0_;                      // Pade quotient before squaring
  std::vector<Matrix> powers_;     // R, R^2, R^4, ... before each squaring
  Matrix result_;
};

Matrix expm_forward(const Matrix& a, double dt, ExpmWorkspace& ws);

/// Adjoint of A -> <upstream, expm(A, dt)>; returns d/dA of that inner
/// product evaluated at the matrix the workspace was built from.
Matrix expm_adjoint(const ExpmWorkspace& ws, const Matrix& upstream);

/// One-shot convenience wrapper around expm_forward + expm_adjoint.
Matrix expm_with_grad(const Matrix& a, double dt, const Matrix& upstream);

/// Complex spectrum of a real square matrix plus its spectral abscissa
/// (max real part). Throws on iteration failure with partial diagnostics.
EigenSpectrum eigenvalues(const Matrix& a);

struct LeastSquaresFit {
  Vector coefficients;
  double r_squared = 0.0;
  Eigen::Index rank = 0;
  bool rank_deficient = false;
};

/// Minimizes ||theta c - y||_2 by column-pivoted orthogonal factorization;
/// rank-deficient systems are flagged and get the minimum-norm solution.
LeastSquaresFit least_squares(const Matrix& theta, const Vector& y);

/// Largest singular value.
double spectral_norm(const Matrix& a);

}  // namespace spikelab::linalg
