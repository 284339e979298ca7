#include "spikelab/systems.hpp"

#include <cmath>
#include <numbers>
#include <sstream>
#include <stdexcept>

namespace spikelab::systems {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kTwoPi = 2.0 * std::numbers::pi;

// Fixed-seed truncated Fourier series standing in for the "small random
// perturbation" Cahn-Hilliard start; 8 modes, rescaled to std 0.1.
struct ChInitialCondition {
  double a[8], b[8];
  double scale;

  ChInitialCondition() {
    Rng rng(9176);
    double power = 0.0;
    for (int m = 0; m < 8; ++m) {
      a[m] = rng.normal();
      b[m] = rng.normal();
      power += a[m] * a[m] + b[m] * b[m];
    }
    scale = 0.1 / std::sqrt(power / 2.0);
  }

  double operator()(double x) const {
    double acc = 0.0;
    for (int m = 0; m < 8; ++m) {
      acc += a[m] * std::cos(kTwoPi * (m + 1) * x) +
             b[m] * std::sin(kTwoPi * (m + 1) * x);
    }
    return scale * acc;
  }
};

const ChInitialCondition& ch_ic() {
  static const ChInitialCondition ic;
  return ic;
}

Vector scalar_ic(double v) {
  Vector out(1);
  out << v;
  return out;
}

using Builder = std::function<std::vector<Tape::Var>(Tape&, const FieldSet&,
                                                     const SystemSpec&)>;

Tape::Var cube(Tape& t, Tape::Var u) {
  return t.hadamard(t.hadamard(u, u), u);
}

std::vector<SystemSpec> build_registry() {
  std::vector<SystemSpec> registry;
  const std::vector<Window> pde_time = {{1.0, 3.0}, {3.0, 5.0}};
  const std::vector<Window> pde_space = {{1.0, 3.0}, {3.0, 5.0}};

  {
    SystemSpec s;
    s.name = "heat";
    s.equation = "u_t = alpha u_xx";
    s.coefficients = {{"alpha", 0.01}};
    s.bc = BoundaryKind::dirichlet_zero;
    s.max_derivative_order = 2;
    s.ood_time = pde_time;
    s.ood_space = pde_space;
    s.initial_condition = [](double x) { return scalar_ic(std::sin(kPi * x)); };
    s.residual_builder = [](Tape& t, const FieldSet& f, const SystemSpec& sp) {
      return std::vector<Tape::Var>{
          t.sub(f.ut[0], t.scale(f.uxx[0], sp.coefficients.at("alpha")))};
    };
    registry.push_back(std::move(s));
  }
  {
    SystemSpec s;
    s.name = "advection";
    s.equation = "u_t + c u_x = 0";
    s.coefficients = {{"c", 1.0}};
    s.bc = BoundaryKind::periodic;
    s.max_derivative_order = 1;
    s.ood_time = pde_time;
    s.ood_space = pde_space;
    s.conserved = {ConservedQuantity::mass, ConservedQuantity::energy};
    s.initial_condition = [](double x) {
      return scalar_ic(std::sin(kTwoPi * x));
    };
    s.residual_builder = [](Tape& t, const FieldSet& f, const SystemSpec& sp) {
      return std::vector<Tape::Var>{
          t.add(f.ut[0], t.scale(f.ux[0], sp.coefficients.at("c")))};
    };
    registry.push_back(std::move(s));
  }
  {
    SystemSpec s;
    s.name = "burgers";
    s.equation = "u_t + u u_x = nu u_xx";
    s.coefficients = {{"nu", 0.01}};
    s.bc = BoundaryKind::dirichlet_zero;
    s.max_derivative_order = 2;
    s.ood_time = pde_time;
    s.ood_space = pde_space;
    s.initial_condition = [](double x) {
      return scalar_ic(-std::sin(kPi * x));
    };
    s.residual_builder = [](Tape& t, const FieldSet& f, const SystemSpec& sp) {
      Tape::Var conv = t.hadamard(f.u[0], f.ux[0]);
      Tape::Var diff = t.scale(f.uxx[0], sp.coefficients.at("nu"));
      return std::vector<Tape::Var>{t.sub(t.add(f.ut[0], conv), diff)};
    };
    registry.push_back(std::move(s));
  }
  {
    SystemSpec s;
    s.name = "allen-cahn";
    s.equation = "u_t = epsilon u_xx + u - u^3";
    s.coefficients = {{"epsilon", 0.01}};
    s.bc = BoundaryKind::neumann_zero;
    s.max_derivative_order = 2;
    s.ood_time = pde_time;
    s.ood_space = pde_space;
    s.initial_condition = [](double x) {
      return scalar_ic(x * x * std::cos(kPi * x));
    };
    s.residual_builder = [](Tape& t, const FieldSet& f, const SystemSpec& sp) {
      Tape::Var rhs = t.add(t.scale(f.uxx[0], sp.coefficients.at("epsilon")),
                            t.sub(f.u[0], cube(t, f.u[0])));
      return std::vector<Tape::Var>{t.sub(f.ut[0], rhs)};
    };
    registry.push_back(std::move(s));
  }
  {
    SystemSpec s;
    s.name = "kdv";
    s.equation = "u_t + u u_x + u_xxx = 0";
    s.bc = BoundaryKind::periodic;
    s.max_derivative_order = 3;
    s.ood_time = pde_time;
    s.ood_space = pde_space;
    s.conserved = {ConservedQuantity::mass, ConservedQuantity::energy};
    s.initial_condition = [](double x) {
      const double c = std::cosh(x - 0.5);
      return scalar_ic(2.0 / (c * c));
    };
    s.residual_builder = [](Tape& t, const FieldSet& f, const SystemSpec&) {
      return std::vector<Tape::Var>{
          t.add(t.add(f.ut[0], t.hadamard(f.u[0], f.ux[0])), f.uxxx[0])};
    };
    registry.push_back(std::move(s));
  }
  {
    SystemSpec s;
    s.name = "reaction-diffusion";
    s.equation = "u_t = d u_xx + u (1 - u)";
    s.coefficients = {{"d", 0.01}};
    s.bc = BoundaryKind::neumann_zero;
    s.max_derivative_order = 2;
    s.ood_time = pde_time;
    s.ood_space = pde_space;
    s.initial_condition = [](double x) {
      return scalar_ic(std::exp(-50.0 * (x - 0.5) * (x - 0.5)));
    };
    s.residual_builder = [](Tape& t, const FieldSet& f, const SystemSpec& sp) {
      Tape::Var reaction =
          t.hadamard(f.u[0], t.add_scalar(t.scale(f.u[0], -1.0), 1.0));
      Tape::Var rhs =
          t.add(t.scale(f.uxx[0], sp.coefficients.at("d")), reaction);
      return std::vector<Tape::Var>{t.sub(f.ut[0], rhs)};
    };
    registry.push_back(std::move(s));
  }
  {
    SystemSpec s;
    s.name = "cahn-hilliard";
    s.equation = "u_t = -epsilon^2 u_xxxx + (u^3 - u)_xx";
    s.coefficients = {{"epsilon", 0.01}};
    s.bc = BoundaryKind::periodic_with_derivative;
    s.max_derivative_order = 4;
    s.ood_time = pde_time;
    s.ood_space = pde_space;
    s.initial_condition = [](double x) { return scalar_ic(ch_ic()(x)); };
    s.residual_builder = [](Tape& t, const FieldSet& f, const SystemSpec& sp) {
      const double eps = sp.coefficients.at("epsilon");
      // (u^3 - u)_xx expanded: (3u^2 - 1) u_xx + 6 u u_x^2.
      Tape::Var u2 = t.hadamard(f.u[0], f.u[0]);
      Tape::Var curvature =
          t.hadamard(t.add_scalar(t.scale(u2, 3.0), -1.0), f.uxx[0]);
      Tape::Var gradient_sq =
          t.scale(t.hadamard(f.u[0], t.hadamard(f.ux[0], f.ux[0])), 6.0);
      Tape::Var rhs = t.sub(t.add(curvature, gradient_sq),
                            t.scale(f.uxxxx[0], eps * eps));
      return std::vector<Tape::Var>{t.sub(f.ut[0], rhs)};
    };
    registry.push_back(std::move(s));
  }
  {
    SystemSpec s;
    s.name = "kuramoto-sivashinsky";
    s.equation = "u_t + u u_x + u_xx + u_xxxx = 0";
    s.bc = BoundaryKind::periodic;
    s.max_derivative_order = 4;
    s.x_min = 0.0;
    s.x_max = kTwoPi;
    s.ood_time = pde_time;
    s.ood_space = pde_space;
    s.initial_condition = [](double x) {
      return scalar_ic(std::cos(x) * (1.0 + std::sin(x)));
    };
    s.residual_builder = [](Tape& t, const FieldSet& f, const SystemSpec&) {
      Tape::Var acc = t.add(f.ut[0], t.hadamard(f.u[0], f.ux[0]));
      acc = t.add(acc, f.uxx[0]);
      return std::vector<Tape::Var>{t.add(acc, f.uxxxx[0])};
    };
    registry.push_back(std::move(s));
  }
  {
    SystemSpec s;
    s.name = "schrodinger";
    s.equation = "i u_t + u_xx + |u|^2 u = 0";
    s.state_dim = 2;
    s.bc = BoundaryKind::periodic;
    s.max_derivative_order = 2;
    s.ood_time = pde_time;
    s.ood_space = pde_space;
    s.conserved = {ConservedQuantity::mass};
    s.initial_condition = [](double x) {
      const double amp = 1.0 / std::cosh(x - 0.5);
      Vector v(2);
      v << amp * std::cos(2.0 * x), amp * std::sin(2.0 * x);
      return v;
    };
    s.residual_builder = [](Tape& t, const FieldSet& f, const SystemSpec&) {
      // u = u_re + i u_im; real and imaginary parts of i u_t + u_xx + |u|^2 u.
      Tape::Var mag =
          t.add(t.hadamard(f.u[0], f.u[0]), t.hadamard(f.u[1], f.u[1]));
      Tape::Var real_part = t.add(t.sub(f.uxx[0], f.ut[1]),
                                  t.hadamard(mag, f.u[0]));
      Tape::Var imag_part =
          t.add(t.add(f.ut[0], f.uxx[1]), t.hadamard(mag, f.u[1]));
      return std::vector<Tape::Var>{real_part, imag_part};
    };
    registry.push_back(std::move(s));
  }
  {
    SystemSpec s;
    s.name = "lorenz";
    s.equation = "x' = sigma (y - x); y' = x (rho - z) - y; z' = x y - beta z";
    s.state_dim = 3;
    s.is_ode = true;
    s.bc = BoundaryKind::none;
    s.max_derivative_order = 1;
    s.coefficients = {{"sigma", 10.0}, {"rho", 28.0}, {"beta", 8.0 / 3.0}};
    s.ood_time = {{1.0, 3.0}, {3.0, 5.0}};
    s.ode_horizon = 15.0;
    s.initial_condition = [](double) {
      Vector v(3);
      v << 1.0, 1.0, 1.0;
      return v;
    };
    s.residual_builder = [](Tape& t, const FieldSet& f, const SystemSpec& sp) {
      const double sigma = sp.coefficients.at("sigma");
      const double rho = sp.coefficients.at("rho");
      const double beta = sp.coefficients.at("beta");
      Tape::Var r0 =
          t.sub(f.ut[0], t.scale(t.sub(f.u[1], f.u[0]), sigma));
      Tape::Var r1 = t.add(
          t.sub(f.ut[1],
                t.sub(t.scale(f.u[0], rho), t.hadamard(f.u[0], f.u[2]))),
          f.u[1]);
      Tape::Var r2 = t.add(t.sub(f.ut[2], t.hadamard(f.u[0], f.u[1])),
                           t.scale(f.u[2], beta));
      return std::vector<Tape::Var>{r0, r1, r2};
    };
    registry.push_back(std::move(s));
  }
  {
    SystemSpec s;
    s.name = "seir";
    s.equation =
        "S' = -beta S I / N; E' = beta S I / N - sigma E; "
        "I' = sigma E - gamma I; R' = gamma I";
    s.state_dim = 4;
    s.is_ode = true;
    s.bc = BoundaryKind::none;
    s.max_derivative_order = 1;
    s.coefficients = {
        {"beta", 0.4}, {"sigma", 0.2}, {"gamma", 0.1}, {"n", 1.0}};
    s.ood_time = {{1.0, 3.0}, {3.0, 5.0}};
    s.ode_horizon = 5.0;
    s.conserved = {ConservedQuantity::population};
    s.initial_condition = [](double) {
      Vector v(4);
      v << 0.99, 0.01, 0.0, 0.0;
      return v;
    };
    s.residual_builder = [](Tape& t, const FieldSet& f, const SystemSpec& sp) {
      const double beta = sp.coefficients.at("beta");
      const double sigma = sp.coefficients.at("sigma");
      const double gamma = sp.coefficients.at("gamma");
      const double n = sp.coefficients.at("n");
      Tape::Var infection = t.scale(t.hadamard(f.u[0], f.u[2]), beta / n);
      Tape::Var r0 = t.add(f.ut[0], infection);
      Tape::Var r1 = t.add(t.sub(f.ut[1], infection),
                           t.scale(f.u[1], sigma));
      Tape::Var r2 = t.add(t.sub(f.ut[2], t.scale(f.u[1], sigma)),
                           t.scale(f.u[2], gamma));
      Tape::Var r3 = t.sub(f.ut[3], t.scale(f.u[2], gamma));
      return std::vector<Tape::Var>{r0, r1, r2, r3};
    };
    registry.push_back(std::move(s));
  }
  return registry;
}

const std::vector<SystemSpec>& registry() {
  static const std::vector<SystemSpec> reg = build_registry();
  return reg;
}

}  // namespace

std::string to_string(ConservedQuantity q) {
  switch (q) {
    case ConservedQuantity::mass: return "mass";
    case ConservedQuantity::energy: return "energy";
    case ConservedQuantity::population: return "population";
  }
  return "unknown";
}

const JetBasis& SystemSpec::residual_basis() const {
  return is_ode ? JetBasis::ode_residual()
                : JetBasis::pde_residual(max_derivative_order);
}

bool SystemSpec::has_analytic_reference() const {
  return name == "heat" || name == "advection" || name == "kdv" ||
         name == "burgers";
}

std::string SystemSpec::describe() const {
  std::ostringstream os;
  os << "system: " << name << "\n";
  os << "equation: " << equation << "\n";
  os << "state_dim: " << state_dim << "\n";
  os << "kind: " << (is_ode ? "ode" : "pde") << "\n";
  if (!is_ode) {
    os << "space: [" << x_min << ", " << x_max << "]\n";
  }
  os << "train_time: [0, " << t_train << "]\n";
  switch (bc) {
    case BoundaryKind::none: os << "bc: none\n"; break;
    case BoundaryKind::dirichlet_zero: os << "bc: dirichlet-zero\n"; break;
    case BoundaryKind::neumann_zero: os << "bc: neumann-zero\n"; break;
    case BoundaryKind::periodic: os << "bc: periodic\n"; break;
    case BoundaryKind::periodic_with_derivative:
      os << "bc: periodic (u and u_x)\n";
      break;
  }
  for (const auto& [k, v] : coefficients) {
    os << "coefficient " << k << ": " << v << "\n";
  }
  for (const auto& w : ood_time) {
    os << "ood_time: [" << w.lo << ", " << w.hi << "]\n";
  }
  for (const auto& w : ood_space) {
    os << "ood_space: [" << w.lo << ", " << w.hi << "]\n";
  }
  for (const auto q : conserved) {
    os << "conserved: " << to_string(q) << "\n";
  }
  return os.str();
}

const SystemSpec& find_system(std::string_view name) {
  for (const SystemSpec& s : registry()) {
    if (s.name == name) return s;
  }
  throw std::invalid_argument("unknown system: " + std::string(name));
}

const std::vector<std::string>& system_names() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> out;
    for (const SystemSpec& s : registry()) out.push_back(s.name);
    return out;
  }();
  return names;
}

Matrix latin_hypercube(Rng& rng, int dims, int n,
                       const std::vector<Window>& bounds) {
  if (static_cast<int>(bounds.size()) != dims) {
    throw std::invalid_argument("latin_hypercube: bounds arity mismatch");
  }
  Matrix out(dims, n);
  std::vector<int> perm(static_cast<size_t>(n));
  for (int d = 0; d < dims; ++d) {
    for (int i = 0; i < n; ++i) perm[static_cast<size_t>(i)] = i;
    for (int i = n - 1; i > 0; --i) {
      const int j = static_cast<int>(rng.below(static_cast<uint64_t>(i + 1)));
      std::swap(perm[static_cast<size_t>(i)], perm[static_cast<size_t>(j)]);
    }
    const double lo = bounds[static_cast<size_t>(d)].lo;
    const double hi = bounds[static_cast<size_t>(d)].hi;
    for (int i = 0; i < n; ++i) {
      const double cell = perm[static_cast<size_t>(i)] + rng.uniform();
      out(d, i) = lo + (hi - lo) * cell / n;
    }
  }
  return out;
}

CollocationSet sample_collocation(const SystemSpec& spec, uint64_t seed,
                                  int n_interior, int n_boundary,
                                  int n_initial) {
  Rng rng(seed);
  CollocationSet set;
  set.seed = seed;
  if (spec.is_ode) {
    if (n_interior < 0) n_interior = 5000;
    set.interior =
        latin_hypercube(rng, 1, n_interior, {{0.0, spec.t_train}});
    set.initial = Matrix::Zero(1, 1);
  } else {
    if (n_interior < 0) n_interior = 10000;
    if (n_boundary < 0) n_boundary = 100;  // per boundary side
    if (n_initial < 0) n_initial = 100;
    set.interior = latin_hypercube(
        rng, 2, n_interior,
        {{spec.x_min, spec.x_max}, {0.0, spec.t_train}});
    set.boundary = latin_hypercube(rng, 1, n_boundary, {{0.0, spec.t_train}});
    set.initial =
        latin_hypercube(rng, 1, n_initial, {{spec.x_min, spec.x_max}});
  }
  return set;
}

FieldSampler sampler_from_network(const model::MlpParams& net) {
  FieldSampler s;
  s.state_dim = net.arch.output_dim;
  s.values = [&net](const Matrix& pts) {
    return model::evaluate_solution_batch(net, pts);
  };
  s.jets = [&net](const Matrix& pts, const JetBasis& basis) {
    return model::forward_jets(net, model::coordinate_jets(pts, basis),
                               static_cast<int>(pts.cols()), basis);
  };
  return s;
}

FieldSampler sampler_from_jet_fn(JetFieldFn fn, int state_dim) {
  FieldSampler s;
  s.state_dim = state_dim;
  s.jets = [fn, state_dim](const Matrix& pts, const JetBasis& basis) {
    const int batch = static_cast<int>(pts.cols());
    Matrix out =
        Matrix::Zero(state_dim, static_cast<Eigen::Index>(batch) * basis.size());
    for (int j = 0; j < batch; ++j) {
      const double x = pts(0, j);
      const double t = pts.rows() > 1 ? pts(1, j) : 0.0;
      const auto jets = fn(x, t, basis);
      for (int sdim = 0; sdim < state_dim; ++sdim) {
        for (int c = 0; c < basis.size(); ++c) {
          out(sdim, static_cast<Eigen::Index>(c) * batch + j) =
              jets[static_cast<size_t>(sdim)].coefficients()(c);
        }
      }
    }
    return out;
  };
  s.values = [fn, state_dim](const Matrix& pts) {
    const int batch = static_cast<int>(pts.cols());
    Matrix out(state_dim, batch);
    const JetBasis& basis = JetBasis::value_only();
    for (int j = 0; j < batch; ++j) {
      const double x = pts(0, j);
      const double t = pts.rows() > 1 ? pts(1, j) : 0.0;
      const auto jets = fn(x, t, basis);
      for (int sdim = 0; sdim < state_dim; ++sdim) {
        out(sdim, j) = jets[static_cast<size_t>(sdim)].value();
      }
    }
    return out;
  };
  return s;
}

std::vector<Tape::Var> residual_on_tape(Tape& tape, const SystemSpec& spec,
                                        Tape::Var output_jets) {
  FieldSet f;
  for (int s = 0; s < spec.state_dim; ++s) {
    f.u.push_back(tape.extract(output_jets, s, 0, 0));
    f.ut.push_back(tape.extract(output_jets, s, 0, 1));
    if (!spec.is_ode) {
      if (spec.max_derivative_order >= 1) {
        f.ux.push_back(tape.extract(output_jets, s, 1, 0));
      }
      if (spec.max_derivative_order >= 2) {
        f.uxx.push_back(tape.extract(output_jets, s, 2, 0));
      }
      if (spec.max_derivative_order >= 3) {
        f.uxxx.push_back(tape.extract(output_jets, s, 3, 0));
      }
      if (spec.max_derivative_order >= 4) {
        f.uxxxx.push_back(tape.extract(output_jets, s, 4, 0));
      }
    }
  }
  return spec.residual_builder(tape, f, spec);
}

Matrix residual_values(const SystemSpec& spec, const FieldSampler& sampler,
                       const Matrix& points) {
  const JetBasis& basis = spec.residual_basis();
  const int batch = static_cast<int>(points.cols());
  Tape tape;
  Tape::Var out = tape.constant(
      sampler.jets(points, basis),
      autodiff::JetShape{spec.state_dim, batch, &basis});
  const auto rows = residual_on_tape(tape, spec, out);
  Matrix result(static_cast<Eigen::Index>(rows.size()), batch);
  for (size_t r = 0; r < rows.size(); ++r) {
    result.row(static_cast<Eigen::Index>(r)) = tape.value(rows[r]).row(0);
  }
  return result;
}

Vector residual(const SystemSpec& spec, const model::MlpParams& net,
                const Vector& point) {
  Matrix pts(point.size(), 1);
  pts.col(0) = point;
  return residual_values(spec, sampler_from_network(net), pts).col(0);
}

Matrix ic_coordinates(const SystemSpec& spec, const Matrix& initial_points) {
  if (spec.is_ode) return Matrix::Zero(1, 1);
  Matrix coords(2, initial_points.cols());
  coords.row(0) = initial_points.row(0);
  coords.row(1).setZero();
  return coords;
}

Matrix ic_targets(const SystemSpec& spec, const Matrix& initial_points) {
  const int n = spec.is_ode ? 1 : static_cast<int>(initial_points.cols());
  Matrix target(spec.state_dim, n);
  for (int j = 0; j < n; ++j) {
    const double x = spec.is_ode ? 0.0 : initial_points(0, j);
    target.col(j) = spec.initial_condition(x);
  }
  return target;
}

Matrix boundary_coordinates(const SystemSpec& spec, const Matrix& times,
                            bool right_end) {
  Matrix coords(2, times.cols());
  coords.row(0).setConstant(right_end ? spec.x_max : spec.x_min);
  coords.row(1) = times.row(0);
  return coords;
}

Tape::Var ic_loss_terms(Tape& tape, const SystemSpec&, Tape::Var values,
                        const Matrix& target) {
  return tape.mean_square(tape.sub_const(values, target));
}

namespace {

// (state_dim x batch) derivative rows of one boundary jet tensor.
Tape::Var state_rows(Tape& tape, const SystemSpec& spec, Tape::Var jets,
                     int x_order) {
  Tape::Var acc = tape.extract(jets, 0, x_order, 0);
  for (int s = 1; s < spec.state_dim; ++s) {
    acc = tape.vconcat(acc, tape.extract(jets, s, x_order, 0));
  }
  return acc;
}

}  // namespace

Tape::Var bc_loss_terms(Tape& tape, const SystemSpec& spec,
                        Tape::Var left_jets, Tape::Var right_jets) {
  switch (spec.bc) {
    case BoundaryKind::none:
      return tape.constant_plain(Matrix::Zero(1, 1));
    case BoundaryKind::dirichlet_zero: {
      Tape::Var lu = state_rows(tape, spec, left_jets, 0);
      Tape::Var ru = state_rows(tape, spec, right_jets, 0);
      return tape.weighted_sum(
          {{0.5, tape.mean_square(lu)}, {0.5, tape.mean_square(ru)}});
    }
    case BoundaryKind::neumann_zero: {
      Tape::Var lx = state_rows(tape, spec, left_jets, 1);
      Tape::Var rx = state_rows(tape, spec, right_jets, 1);
      return tape.weighted_sum(
          {{0.5, tape.mean_square(lx)}, {0.5, tape.mean_square(rx)}});
    }
    case BoundaryKind::periodic: {
      Tape::Var diff = tape.sub(state_rows(tape, spec, left_jets, 0),
                                state_rows(tape, spec, right_jets, 0));
      return tape.mean_square(diff);
    }
    case BoundaryKind::periodic_with_derivative: {
      Tape::Var du = tape.sub(state_rows(tape, spec, left_jets, 0),
                              state_rows(tape, spec, right_jets, 0));
      Tape::Var dx = tape.sub(state_rows(tape, spec, left_jets, 1),
                              state_rows(tape, spec, right_jets, 1));
      return tape.weighted_sum(
          {{1.0, tape.mean_square(du)}, {1.0, tape.mean_square(dx)}});
    }
  }
  return tape.constant_plain(Matrix::Zero(1, 1));
}

IcBcLoss ic_bc_loss(const SystemSpec& spec, const FieldSampler& sampler,
                    const CollocationSet& points) {
  IcBcLoss loss;
  {
    Tape tape;
    const Matrix coords = ic_coordinates(spec, points.initial);
    Tape::Var values = tape.constant_plain(sampler.values(coords));
    loss.ic = tape.scalar(
        ic_loss_terms(tape, spec, values, ic_targets(spec, points.initial)));
  }
  if (!spec.is_ode && spec.bc != BoundaryKind::none) {
    Tape tape;
    const JetBasis& basis = JetBasis::pde_residual(1);
    const int nb = static_cast<int>(points.boundary.cols());
    const autodiff::JetShape shape{spec.state_dim, nb, &basis};
    Tape::Var left = tape.constant(
        sampler.jets(boundary_coordinates(spec, points.boundary, false),
                     basis),
        shape);
    Tape::Var right = tape.constant(
        sampler.jets(boundary_coordinates(spec, points.boundary, true),
                     basis),
        shape);
    loss.bc = tape.scalar(bc_loss_terms(tape, spec, left, right));
  }
  return loss;
}

IcBcLoss ic_bc_loss(const SystemSpec& spec, const model::MlpParams& net,
                    const CollocationSet& points) {
  return ic_bc_loss(spec, sampler_from_network(net), points);
}

}  // namespace spikelab::systems
