#include "spikelab/systems.hpp"

#include "spikelab/model.hpp"
#include "spikelab/rng.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <set>

using namespace spikelab;
using autodiff::Jet;
using autodiff::JetBasis;
using linalg::Matrix;
using linalg::Vector;
using systems::FieldSampler;
using systems::SystemSpec;

namespace {

constexpr double kPi = std::numbers::pi;

model::MlpParams tiny_net(int input_dim, int output_dim, uint64_t seed) {
  model::MlpArchitecture arch;
  arch.input_dim = input_dim;
  arch.hidden_layers = 2;
  arch.hidden_width = 8;
  arch.output_dim = output_dim;
  model::EmbeddingSpec spec;
  spec.state_dim = output_dim;
  spec.observable_dim = 32;
  spec.latent_hidden_width = 8;
  return model::init_params(arch, spec, seed).solution;
}

FieldSampler heat_exact_sampler(double alpha) {
  return systems::sampler_from_jet_fn(
      [alpha](double x, double t, const JetBasis& b) {
        const Jet jx = Jet::variable(b, x, 0);
        const Jet jt = Jet::variable(b, t, 1);
        return std::vector<Jet>{autodiff::sin(jx * kPi) *
                                autodiff::exp(jt * (-alpha * kPi * kPi))};
      },
      1);
}

FieldSampler advection_exact_sampler(double c) {
  return systems::sampler_from_jet_fn(
      [c](double x, double t, const JetBasis& b) {
        const Jet jx = Jet::variable(b, x, 0);
        const Jet jt = Jet::variable(b, t, 1);
        return std::vector<Jet>{autodiff::sin((jx - jt * c) * (2.0 * kPi))};
      },
      1);
}

}  // namespace

TEST_CASE("registry covers exactly the benchmark suite") {
  const std::set<std::string> want = {
      "heat",          "advection",     "burgers",
      "allen-cahn",    "kdv",           "reaction-diffusion",
      "cahn-hilliard", "kuramoto-sivashinsky", "schrodinger",
      "lorenz",        "seir"};
  std::set<std::string> got(systems::system_names().begin(),
                            systems::system_names().end());
  CHECK(got == want);
  CHECK_THROWS_AS(systems::find_system("navier-stokes"),
                  std::invalid_argument);
}

TEST_CASE("benchmark parameters match their stated values") {
  const auto& lorenz = systems::find_system("lorenz");
  CHECK(lorenz.coefficients.at("sigma") == 10.0);
  CHECK(lorenz.coefficients.at("rho") == 28.0);
  CHECK(lorenz.coefficients.at("beta") == doctest::Approx(8.0 / 3.0));
  CHECK(lorenz.initial_condition(0.0) == Vector::Ones(3));

  const auto& seir = systems::find_system("seir");
  CHECK(seir.coefficients.at("beta") == 0.4);
  CHECK(seir.coefficients.at("sigma") == 0.2);
  CHECK(seir.coefficients.at("gamma") == 0.1);
  Vector x0(4);
  x0 << 0.99, 0.01, 0.0, 0.0;
  CHECK(seir.initial_condition(0.0) == x0);

  const auto& ks = systems::find_system("kuramoto-sivashinsky");
  CHECK(ks.x_max == doctest::Approx(2.0 * kPi));
  CHECK(ks.max_derivative_order == 4);

  const auto& heat = systems::find_system("heat");
  CHECK(heat.coefficients.at("alpha") == 0.01);
  CHECK(heat.initial_condition(0.5)(0) == doctest::Approx(1.0));
  CHECK(heat.t_train == 1.0);
}

TEST_CASE("initial conditions match their closed forms") {
  const auto& advection = systems::find_system("advection");
  CHECK(advection.initial_condition(0.25)(0) == doctest::Approx(1.0));
  const auto& burgers = systems::find_system("burgers");
  CHECK(burgers.initial_condition(0.5)(0) == doctest::Approx(-1.0));
  const auto& ac = systems::find_system("allen-cahn");
  CHECK(ac.initial_condition(0.5)(0) ==
        doctest::Approx(0.25 * std::cos(kPi * 0.5)));
  const auto& kdv = systems::find_system("kdv");
  CHECK(kdv.initial_condition(0.5)(0) == doctest::Approx(2.0));
  const auto& schrodinger = systems::find_system("schrodinger");
  const Vector s0 = schrodinger.initial_condition(0.5);
  CHECK(s0(0) == doctest::Approx(std::cos(1.0)));
  CHECK(s0(1) == doctest::Approx(std::sin(1.0)));

  // Cahn-Hilliard random start is reproducible with std close to 0.1.
  const auto& ch = systems::find_system("cahn-hilliard");
  double mean = 0.0, sq = 0.0;
  const int n = 2048;
  for (int i = 0; i < n; ++i) {
    const double v = ch.initial_condition((i + 0.5) / n)(0);
    mean += v;
    sq += v * v;
  }
  mean /= n;
  const double std_dev = std::sqrt(sq / n - mean * mean);
  CHECK(std_dev == doctest::Approx(0.1).epsilon(0.05));
  CHECK(ch.initial_condition(0.25)(0) == ch.initial_condition(0.25)(0));
}

TEST_CASE("heat residual vanishes on the separated-variables solution") {
  const auto& heat = systems::find_system("heat");
  const FieldSampler exact = heat_exact_sampler(0.01);
  Rng rng(2);
  Matrix pts(2, 50);
  for (int j = 0; j < 50; ++j) {
    pts(0, j) = rng.uniform(0.0, 1.0);
    pts(1, j) = rng.uniform(0.0, 1.0);
  }
  const Matrix r = systems::residual_values(heat, exact, pts);
  CHECK(r.cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("advection residual vanishes on constants and traveling waves") {
  const auto& advection = systems::find_system("advection");
  const FieldSampler constant = systems::sampler_from_jet_fn(
      [](double, double, const JetBasis& b) {
        return std::vector<Jet>{Jet(b, 0.7)};
      },
      1);
  Matrix pts(2, 9);
  for (int j = 0; j < 9; ++j) {
    pts(0, j) = 0.1 * (j + 1);
    pts(1, j) = 0.1 * j;
  }
  CHECK(systems::residual_values(advection, constant, pts)
            .cwiseAbs()
            .maxCoeff() == 0.0);
  CHECK(systems::residual_values(advection, advection_exact_sampler(1.0), pts)
            .cwiseAbs()
            .maxCoeff() < 1e-10);
}

TEST_CASE("lorenz residual vanishes at the origin fixed point") {
  const auto& lorenz = systems::find_system("lorenz");
  auto zero_net = tiny_net(1, 3, 3);
  for (auto& w : zero_net.weights) w.setZero();
  for (auto& b : zero_net.biases) b.setZero();
  Vector point(1);
  point << 0.4;
  const Vector r = systems::residual(lorenz, zero_net, point);
  CHECK(r.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("kdv and cahn-hilliard residuals accept high-order jets") {
  // Smoke check: third/fourth spatial orders flow through the jet bases.
  for (const char* name : {"kdv", "cahn-hilliard", "kuramoto-sivashinsky"}) {
    const auto& spec = systems::find_system(name);
    auto net = tiny_net(2, 1, 11);
    Vector point(2);
    point << 0.3, 0.2;
    const Vector r = systems::residual(spec, net, point);
    CHECK(r.size() == 1);
    CHECK(std::isfinite(r(0)));
  }
}

TEST_CASE("latin hypercube stratifies every marginal") {
  Rng rng(5);
  const Matrix pts =
      systems::latin_hypercube(rng, 2, 4, {{0.0, 1.0}, {0.0, 1.0}});
  for (int d = 0; d < 2; ++d) {
    std::vector<bool> bin(4, false);
    for (int i = 0; i < 4; ++i) {
      const int b = std::min(3, static_cast<int>(pts(d, i) * 4.0));
      CHECK_FALSE(bin[static_cast<size_t>(b)]);
      bin[static_cast<size_t>(b)] = true;
    }
    for (bool filled : bin) CHECK(filled);
  }
}

TEST_CASE("collocation sampling counts and determinism") {
  const auto& heat = systems::find_system("heat");
  const auto a = systems::sample_collocation(heat, 17);
  CHECK(a.interior.cols() == 10000);
  CHECK(a.boundary.cols() == 100);  // per side; both ends share times
  CHECK(a.initial.cols() == 100);
  CHECK(a.interior.row(0).minCoeff() >= 0.0);
  CHECK(a.interior.row(0).maxCoeff() <= 1.0);
  CHECK(a.interior.row(1).minCoeff() >= 0.0);
  CHECK(a.interior.row(1).maxCoeff() <= 1.0);

  const auto b = systems::sample_collocation(heat, 17);
  CHECK(a.interior == b.interior);
  CHECK(a.boundary == b.boundary);
  CHECK(a.initial == b.initial);

  const auto& lorenz = systems::find_system("lorenz");
  const auto c = systems::sample_collocation(lorenz, 17);
  CHECK(c.interior.cols() == 5000);
  CHECK(c.initial.cols() == 1);
  CHECK(c.boundary.size() == 0);
}

TEST_CASE("heat initial loss vanishes on the exact surrogate") {
  const auto& heat = systems::find_system("heat");
  const auto pts = systems::sample_collocation(heat, 3);
  const auto loss = systems::ic_bc_loss(heat, heat_exact_sampler(0.01), pts);
  CHECK(loss.ic < 1e-12);
  // The exact solution also satisfies the Dirichlet walls.
  CHECK(loss.bc < 1e-12);
}

TEST_CASE("constant network has zero periodic boundary loss") {
  const auto& advection = systems::find_system("advection");
  auto net = tiny_net(2, 1, 5);
  for (auto& w : net.weights) w.setZero();
  net.biases.back()(0, 0) = 0.37;
  const auto pts = systems::sample_collocation(advection, 4);
  const auto loss = systems::ic_bc_loss(advection, net, pts);
  CHECK(loss.bc == 0.0);
}

TEST_CASE("zero network advection IC loss equals the sampled quadrature") {
  const auto& advection = systems::find_system("advection");
  auto net = tiny_net(2, 1, 6);
  for (auto& w : net.weights) w.setZero();
  for (auto& b : net.biases) b.setZero();
  const auto pts = systems::sample_collocation(advection, 11);
  const auto loss = systems::ic_bc_loss(advection, net, pts);
  double want = 0.0;
  for (int j = 0; j < pts.initial.cols(); ++j) {
    const double s = std::sin(2.0 * kPi * pts.initial(0, j));
    want += s * s;
  }
  want /= static_cast<double>(pts.initial.cols());
  CHECK(loss.ic == doctest::Approx(want).epsilon(1e-12));
  CHECK(loss.ic == doctest::Approx(0.5).epsilon(0.2));
}

TEST_CASE("seir residual matches a hand-computed value") {
  const auto& seir = systems::find_system("seir");
  // Constant-field surrogate: all derivatives zero, so the residual is
  // minus the vector field at the state.
  Vector state(4);
  state << 0.6, 0.2, 0.15, 0.05;
  const FieldSampler constant = systems::sampler_from_jet_fn(
      [&state](double, double, const JetBasis& b) {
        std::vector<Jet> jets;
        for (int i = 0; i < 4; ++i) jets.emplace_back(b, state(i));
        return jets;
      },
      4);
  Matrix pts(1, 1);
  pts << 0.5;
  const Matrix r = systems::residual_values(seir, constant, pts);
  const double infection = 0.4 * 0.6 * 0.15;
  CHECK(r(0, 0) == doctest::Approx(infection));
  CHECK(r(1, 0) == doctest::Approx(-infection + 0.2 * 0.2));
  CHECK(r(2, 0) == doctest::Approx(-0.2 * 0.2 + 0.1 * 0.15));
  CHECK(r(3, 0) == doctest::Approx(-0.1 * 0.15));
}

TEST_CASE("system description dumps the key facts") {
  const auto& ch = systems::find_system("cahn-hilliard");
  const std::string text = ch.describe();
  CHECK(text.find("cahn-hilliard") != std::string::npos);
  CHECK(text.find("periodic (u and u_x)") != std::string::npos);
  CHECK(text.find("ood_time: [1, 3]") != std::string::npos);
  CHECK(text.find("ood_time: [3, 5]") != std::string::npos);
}
