#include "spikelab/tape.hpp"

#include "oracles.hpp"
#include "spikelab/model.hpp"
#include "spikelab/rng.hpp"

#include <doctest.h>

#include <cmath>

using namespace spikelab;
using autodiff::JetBasis;
using autodiff::JetShape;
using autodiff::Tape;
using linalg::Matrix;
using linalg::Vector;

namespace {

model::MlpParams small_net(int input_dim, uint64_t seed) {
  model::MlpArchitecture arch;
  arch.input_dim = input_dim;
  arch.hidden_layers = 2;
  arch.hidden_width = 16;
  arch.output_dim = 1;
  model::EmbeddingSpec spec;
  spec.state_dim = 1;
  spec.observable_dim = 8;
  spec.latent_hidden_width = 8;
  return model::init_params(arch, spec, seed).solution;
}

// Mean squared heat-style residual u_t - 0.5 u_xx over a small batch.
double residual_loss(const model::MlpParams& net, const Matrix& points,
                     model::MlpGrads* grads) {
  Tape tape;
  const JetBasis& basis = JetBasis::pde_residual(2);
  Tape::Var input = tape.constant(
      model::coordinate_jets(points, basis),
      JetShape{2, static_cast<int>(points.cols()), &basis});
  model::MlpGrads scratch = model::MlpGrads::zeros_like(net);
  model::MlpGrads& g = grads ? *grads : scratch;
  model::TapeMlp vars = model::register_mlp(tape, net, g);
  Tape::Var out = model::mlp_forward(tape, vars, net.arch, input);
  Tape::Var ut = tape.extract(out, 0, 0, 1);
  Tape::Var uxx = tape.extract(out, 0, 2, 0);
  Tape::Var r = tape.sub(ut, tape.scale(uxx, 0.5));
  Tape::Var loss = tape.mean_square(r);
  if (grads) tape.backward(loss);
  return tape.scalar(loss);
}

}  // namespace

TEST_CASE("gradient of half squared norm is the parameter itself") {
  Matrix theta(3, 2);
  theta << 1.0, -2.0, 0.5, 4.0, -3.0, 0.25;
  Matrix grad = Matrix::Zero(3, 2);
  Tape tape;
  Tape::Var p = tape.parameter(&theta, &grad);
  Tape::Var ms = tape.mean_square(p);  // sum of squares / 2 columns
  Tape::Var loss = tape.weighted_sum({{1.0, ms}});
  CHECK(tape.scalar(loss) == doctest::Approx(theta.squaredNorm() / 2.0));
  tape.backward(loss);
  CHECK((grad - theta).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("l1 gradient is the sign pattern with zero at zero") {
  Matrix a(2, 2);
  a << 0.5, -0.25, 0.0, 2.0;
  Matrix grad = Matrix::Zero(2, 2);
  Tape tape;
  Tape::Var p = tape.parameter(&a, &grad);
  Tape::Var loss = tape.l1(p);
  CHECK(tape.scalar(loss) == doctest::Approx(2.75));
  tape.backward(loss);
  Matrix want(2, 2);
  want << 1.0, -1.0, 0.0, 1.0;
  CHECK((grad - want).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("gradient of a constant is zero") {
  Matrix theta(2, 2);
  theta << 1.0, 2.0, 3.0, 4.0;
  Matrix grad = Matrix::Zero(2, 2);
  Tape tape;
  Tape::Var p = tape.parameter(&theta, &grad);
  Tape::Var c = tape.constant_plain(Matrix::Constant(2, 2, 5.0));
  Tape::Var loss = tape.mean_square(c);
  (void)p;
  tape.backward(loss);
  CHECK(grad.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("expm propagation loss gradient matches finite differences") {
  Rng rng(41);
  const int m = 4, pairs = 3;
  Matrix a(m, m);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < m; ++j) a(i, j) = rng.uniform(-0.8, 0.8);
  Matrix z0(m, pairs), z1(m, pairs);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < pairs; ++j) {
      z0(i, j) = rng.uniform(-1.0, 1.0);
      z1(i, j) = rng.uniform(-1.0, 1.0);
    }
  const double dt = 0.3;

  auto loss_value = [&](const Matrix& amat) {
    return (linalg::expm(amat, dt) * z0 - z1).squaredNorm() / pairs;
  };

  Matrix grad = Matrix::Zero(m, m);
  Tape tape;
  Tape::Var av = tape.parameter(&a, &grad);
  Tape::Var z0v = tape.constant_plain(z0);
  Tape::Var prop = tape.expm_apply(av, dt, z0v);
  Tape::Var diff = tape.sub_const(prop, z1);
  Tape::Var loss = tape.mean_square(diff);
  CHECK(tape.scalar(loss) == doctest::Approx(loss_value(a)));
  tape.backward(loss);

  const double h = 1e-6;
  double worst = 0.0;
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < m; ++j) {
      Matrix ap = a, am = a;
      ap(i, j) += h;
      am(i, j) -= h;
      const double fd = (loss_value(ap) - loss_value(am)) / (2.0 * h);
      worst = std::max(
          worst, std::abs(fd - grad(i, j)) / std::max(1.0, std::abs(fd)));
    }
  }
  CHECK(worst < 1e-5);
}

TEST_CASE("jet forward pass agrees with plain evaluation") {
  const model::MlpParams net = small_net(2, 11);
  Matrix pts(2, 5);
  Rng rng(4);
  for (int j = 0; j < 5; ++j) {
    pts(0, j) = rng.uniform(0.0, 1.0);
    pts(1, j) = rng.uniform(0.0, 1.0);
  }
  const Matrix plain = model::evaluate_solution_batch(net, pts);
  const JetBasis& basis = JetBasis::pde_residual(2);
  const Matrix jets = model::forward_jets(
      net, model::coordinate_jets(pts, basis), 5, basis);
  for (int j = 0; j < 5; ++j) {
    CHECK(jets(0, j) == doctest::Approx(plain(0, j)).epsilon(1e-14));
  }
}

TEST_CASE("residual loss parameter gradients match finite differences") {
  model::MlpParams net = small_net(2, 29);
  Rng rng(12);
  Matrix pts(2, 8);
  for (int j = 0; j < 8; ++j) {
    pts(0, j) = rng.uniform(0.1, 0.9);
    pts(1, j) = rng.uniform(0.1, 0.9);
  }
  model::MlpGrads grads = model::MlpGrads::zeros_like(net);
  residual_loss(net, pts, &grads);

  const double h = 1e-5;
  double worst = 0.0;
  for (int probe = 0; probe < 20; ++probe) {
    const size_t layer = rng.below(net.weights.size());
    const bool use_weight = rng.below(2) == 0;
    Matrix& target = use_weight ? net.weights[layer] : net.biases[layer];
    const Matrix& gmat = use_weight ? grads.weights[layer] : grads.biases[layer];
    const int i = static_cast<int>(rng.below(static_cast<uint64_t>(target.rows())));
    const int j = static_cast<int>(rng.below(static_cast<uint64_t>(target.cols())));
    const double saved = target(i, j);
    target(i, j) = saved + h;
    const double up = residual_loss(net, pts, nullptr);
    target(i, j) = saved - h;
    const double down = residual_loss(net, pts, nullptr);
    target(i, j) = saved;
    const double fd = (up - down) / (2.0 * h);
    worst = std::max(worst, std::abs(fd - gmat(i, j)) /
                                std::max(1e-6, std::abs(fd)));
  }
  CHECK(worst < 1e-4);
}

TEST_CASE("monomial rows and their gradients") {
  Matrix u(2, 3);
  u << 0.5, -1.0, 2.0, 0.25, 3.0, -0.5;
  Matrix grad = Matrix::Zero(2, 3);
  Tape tape;
  Tape::Var uv = tape.parameter(&u, &grad);
  const auto exps = model::monomial_exponents(2, 2);
  Tape::Var mono = tape.monomials(uv, exps);
  const Matrix& vals = tape.value(mono);
  REQUIRE(vals.rows() == 6);
  CHECK(vals(0, 0) == doctest::Approx(1.0));
  CHECK(vals(1, 0) == doctest::Approx(0.5));    // u1
  CHECK(vals(2, 0) == doctest::Approx(0.25));   // u2
  CHECK(vals(3, 0) == doctest::Approx(0.25));   // u1^2
  CHECK(vals(4, 0) == doctest::Approx(0.125));  // u1 u2
  CHECK(vals(5, 0) == doctest::Approx(0.0625)); // u2^2

  Tape::Var loss = tape.mean_square(mono);
  tape.backward(loss);
  auto loss_value = [&](const Matrix& um) {
    double acc = 0.0;
    for (int j = 0; j < um.cols(); ++j) {
      Vector col(2);
      col << um(0, j), um(1, j);
      acc += model::polynomial_library(col, 2).squaredNorm();
    }
    return acc / um.cols();
  };
  const double h = 1e-6;
  for (int i = 0; i < 2; ++i) {
    for (int j = 0; j < 3; ++j) {
      Matrix up = u, dn = u;
      up(i, j) += h;
      dn(i, j) -= h;
      const double fd = (loss_value(up) - loss_value(dn)) / (2.0 * h);
      CHECK(grad(i, j) == doctest::Approx(fd).epsilon(1e-6));
    }
  }
}

TEST_CASE("tanh backward on jet tensors matches finite differences") {
  Rng rng(3);
  const JetBasis& basis = JetBasis::pde_residual(2);
  const int units = 3, batch = 2;
  Matrix x(units, batch * basis.size());
  for (Eigen::Index i = 0; i < x.rows(); ++i)
    for (Eigen::Index j = 0; j < x.cols(); ++j) x(i, j) = rng.uniform(-1, 1);

  // Loss touching every output coefficient: sum over units and retained
  // derivative orders of the mean squared extracted rows.
  auto build = [&](Tape& tape, Tape::Var v) {
    std::vector<std::pair<double, Tape::Var>> terms;
    Tape::Var y = tape.tanh(v);
    for (int unit = 0; unit < units; ++unit) {
      for (const auto& ix : basis.indices()) {
        terms.push_back(
            {1.0, tape.mean_square(tape.extract(y, unit, ix.x, ix.t))});
      }
    }
    return tape.weighted_sum(terms);
  };
  auto loss_of = [&](const Matrix& xin) {
    Tape tape;
    Tape::Var v = tape.constant(xin, JetShape{units, batch, &basis});
    return tape.scalar(build(tape, v));
  };

  Matrix grad = Matrix::Zero(x.rows(), x.cols());
  {
    Tape tape;
    Tape::Var v = tape.parameter(&x, &grad, JetShape{units, batch, &basis});
    tape.backward(build(tape, v));
  }
  const double h = 1e-6;
  double worst = 0.0;
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
      Matrix up = x, dn = x;
      up(i, j) += h;
      dn(i, j) -= h;
      const double fd = (loss_of(up) - loss_of(dn)) / (2.0 * h);
      worst = std::max(worst, std::abs(fd - grad(i, j)));
    }
  }
  CHECK(worst < 1e-7);
}
