#include "spikelab/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace spikelab::linalg {

namespace {

// Degree-13 diagonal Pade coefficients (Higham 2005).
constexpr double kPade13[] = {
    64764752532480000.0, 32382376266240000.0, 7771770303897600.0,
    1187353796428800.0,  129060195264000.0,   10559470521600.0,
    670442572800.0,      33522128640.0,       1323241920.0,
    40840800.0,          960960.0,            16380.0,
    182.0,               1.0};

// 1-norm threshold below which degree-13 Pade needs no scaling.
constexpr double kTheta13 = 5.371920351148152;

void require_square_finite(const Matrix& a, const char* who) {
  if (a.rows() != a.cols()) {
    std::ostringstream msg;
    msg << who << ": matrix must be square, got " << a.rows() << "x"
        << a.cols();
    throw std::invalid_argument(msg.str());
  }
  if (!a.allFinite()) {
    throw std::domain_error(std::string(who) + ": non-finite matrix entry");
  }
}

}  // namespace

Matrix expm_forward(const Matrix& a, double dt, ExpmWorkspace& ws) {
  require_square_finite(a, "expm");
  if (!std::isfinite(dt)) {
    throw std::domain_error("expm: non-finite time step");
  }
  const Eigen::Index n = a.rows();
  const Matrix b = a * dt;
  const double norm1 = b.cwiseAbs().colwise().sum().maxCoeff();

  int s = 0;
  if (norm1 > kTheta13) {
    s = static_cast<int>(std::ceil(std::log2(norm1 / kTheta13)));
  }
  ws.squarings_ = s;
  ws.scale_ = dt / std::ldexp(1.0, s);

  ws.bs_ = a * ws.scale_;
  ws.b2_.noalias() = ws.bs_ * ws.bs_;
  ws.b4_.noalias() = ws.b2_ * ws.b2_;
  ws.b6_.noalias() = ws.b2_ * ws.b4_;

  const Matrix id = Matrix::Identity(n, n);
  ws.w1_ = kPade13[13] * ws.b6_ + kPade13[11] * ws.b4_ + kPade13[9] * ws.b2_;
  Matrix w2 =
      kPade13[7] * ws.b6_ + kPade13[5] * ws.b4_ + kPade13[3] * ws.b2_ +
      kPade13[1] * id;
  ws.w_.noalias() = ws.b6_ * ws.w1_;
  ws.w_ += w2;
  ws.u_.noalias() = ws.bs_ * ws.w_;

  ws.z1_ = kPade13[12] * ws.b6_ + kPade13[10] * ws.b4_ + kPade13[8] * ws.b2_;
  ws.v_.noalias() = ws.b6_ * ws.z1_;
  ws.v_ += kPade13[6] * ws.b6_ + kPade13[4] * ws.b4_ + kPade13[2] * ws.b2_ +
           kPade13[0] * id;

  ws.q_ = ws.v_ - ws.u_;
  ws.lu_.compute(ws.q_);
  Matrix r = ws.lu_.solve(ws.v_ + ws.u_);
  ws.r0_ = r;

  ws.powers_.clear();
  ws.powers_.reserve(static_cast<size_t>(s));
  for (int k = 0; k < s; ++k) {
    ws.powers_.push_back(r);
    r = (r * r).eval();
  }
  ws.result_ = r;
  return r;
}

Matrix expm(const Matrix& a, double dt) {
  ExpmWorkspace ws;
  return expm_forward(a, dt, ws);
}

Matrix expm_adjoint(const ExpmWorkspace& ws, const Matrix& upstream) {
  if (upstream.rows() != ws.result_.rows() ||
      upstream.cols() != ws.result_.cols()) {
    throw std::invalid_argument("expm_adjoint: upstream shape mismatch");
  }

  // Undo the squarings: R_{k+1} = R_k^2.
  Matrix rbar = upstream;
  for (int k = ws.squarings_ - 1; k >= 0; --k) {
    const Matrix& rk = ws.powers_[static_cast<size_t>(k)];
    rbar = (rbar * rk.transpose() + rk.transpose() * rbar).eval();
  }

  // R = Q^{-1} P with Q = V - U, P = V + U.
  Eigen::PartialPivLU<Matrix> lut(ws.q_.transpose());
  const Matrix pbar = lut.solve(rbar);
  const Matrix qbar = -pbar * ws.r0_.transpose();
  const Matrix vbar = pbar + qbar;
  const Matrix ubar = pbar - qbar;

  // U = Bs * W.
  Matrix bsbar = ubar * ws.w_.transpose();
  Matrix wbar = ws.bs_.transpose() * ubar;

  // W = B6 * W1 + W2.
  Matrix b6bar = wbar * ws.w1_.transpose();
  Matrix w1bar = ws.b6_.transpose() * wbar;
  Matrix b4bar = Matrix::Zero(wbar.rows(), wbar.cols());
  Matrix b2bar = Matrix::Zero(wbar.rows(), wbar.cols());

  // W1 and W2 polynomial terms.
  b6bar += kPade13[13] * w1bar + kPade13[7] * wbar;
  b4bar += kPade13[11] * w1bar + kPade13[5] * wbar;
  b2bar += kPade13[9] * w1bar + kPade13[3] * wbar;

  // V = B6 * Z1 + even polynomial tail.
  b6bar += vbar * ws.z1_.transpose();
  Matrix z1bar = ws.b6_.transpose() * vbar;
  b6bar += kPade13[12] * z1bar + kPade13[6] * vbar;
  b4bar += kPade13[10] * z1bar + kPade13[4] * vbar;
  b2bar += kPade13[8] * z1bar + kPade13[2] * vbar;

  // B6 = B2 * B4, B4 = B2 * B2, B2 = Bs * Bs.
  b2bar += b6bar * ws.b4_.transpose();
  b4bar += ws.b2_.transpose() * b6bar;
  b2bar += b4bar * ws.b2_.transpose() + ws.b2_.transpose() * b4bar;
  bsbar += b2bar * ws.bs_.transpose() + ws.bs_.transpose() * b2bar;

  return bsbar * ws.scale_;
}

Matrix expm_with_grad(const Matrix& a, double dt, const Matrix& upstream) {
  ExpmWorkspace ws;
  expm_forward(a, dt, ws);
  return expm_adjoint(ws, upstream);
}

EigenSpectrum eigenvalues(const Matrix& a) {
  require_square_finite(a, "eigenvalues");
  Eigen::EigenSolver<Matrix> solver(a, /*computeEigenvectors=*/false);
  if (solver.info() != Eigen::Success) {
    std::ostringstream msg;
    msg << "eigenvalues: QR iteration did not converge for a " << a.rows()
        << "x" << a.cols() << " matrix (1-norm "
        << a.cwiseAbs().colwise().sum().maxCoeff() << ")";
    throw std::runtime_error(msg.str());
  }
  EigenSpectrum spectrum;
  const auto& vals = solver.eigenvalues();
  spectrum.eigenvalues.reserve(static_cast<size_t>(vals.size()));
  double abscissa = -std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < vals.size(); ++i) {
    spectrum.eigenvalues.push_back(vals(i));
    abscissa = std::max(abscissa, vals(i).real());
  }
  spectrum.spectral_abscissa = vals.size() > 0 ? abscissa : 0.0;
  return spectrum;
}

LeastSquaresFit least_squares(const Matrix& theta, const Vector& y) {
  if (theta.rows() < theta.cols()) {
    throw std::invalid_argument(
        "least_squares: system must have at least as many rows as columns");
  }
  if (theta.rows() != y.size()) {
    throw std::invalid_argument("least_squares: row count mismatch with rhs");
  }

  Eigen::CompleteOrthogonalDecomposition<Matrix> cod(theta);
  cod.setThreshold(1e-10);
  LeastSquaresFit fit;
  fit.coefficients = cod.solve(y);
  fit.rank = cod.rank();
  fit.rank_deficient = fit.rank < theta.cols();

  const Vector residual = theta * fit.coefficients - y;
  const double ss_res = residual.squaredNorm();
  const double mean = y.mean();
  const double ss_tot = (y.array() - mean).matrix().squaredNorm();
  if (ss_tot > 0.0) {
    fit.r_squared = 1.0 - ss_res / ss_tot;
  } else {
    fit.r_squared = ss_res <= 1e-28 ? 1.0 : 0.0;
  }
  return fit;
}

double spectral_norm(const Matrix& a) {
  if (a.size() == 0) return 0.0;
  Eigen::JacobiSVD<Matrix> svd(a);
  return svd.singularValues()(0);
}

}  // namespace spikelab::linalg
