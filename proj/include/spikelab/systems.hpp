#pragma once

#include "spikelab/model.hpp"
#include "spikelab/rng.hpp"
#include "spikelab/tape.hpp"

#include <functional>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace spikelab::systems {

using autodiff::Jet;
using autodiff::JetBasis;
using autodiff::Tape;
using linalg::Matrix;
using linalg::Vector;

enum class BoundaryKind {
  none,
  dirichlet_zero,
  neumann_zero,
  periodic,
  periodic_with_derivative,
};

enum class ConservedQuantity { mass, energy, population };
std::string to_string(ConservedQuantity q);

struct Window {
  double lo = 0.0;
  double hi = 0.0;
};

/// Derivative fields of the candidate solution at a batch of points; each
/// entry is a plain (1 x batch) tape tensor, one per state channel.
struct FieldSet {
  std::vector<Tape::Var> u;
  std::vector<Tape::Var> ut;
  std::vector<Tape::Var> ux;
  std::vector<Tape::Var> uxx;
  std::vector<Tape::Var> uxxx;
  std::vector<Tape::Var> uxxxx;
};

struct SystemSpec {
  std::string name;
  std::string equation;
  int state_dim = 1;
  bool is_ode = false;
  double x_min = 0.0;
  double x_max = 1.0;
  double t_train = 1.0;
  std::vector<Window> ood_time;
  std::vector<Window> ood_space;
  BoundaryKind bc = BoundaryKind::dirichlet_zero;
  int max_derivative_order = 2;
  std::map<std::string, double> coefficients;
  std::vector<ConservedQuantity> conserved;
  double ode_horizon = 0.0;

  /// State at (x, t=0); ODE systems ignore the argument.
  std::function<Vector(double)> initial_condition;
  std::function<std::vector<Tape::Var>(Tape&, const FieldSet&,
                                       const SystemSpec&)>
      residual_builder;

  const JetBasis& residual_basis() const;
  int input_dim() const { return is_ode ? 1 : 2; }
  bool has_analytic_reference() const;
  /// Structured text block for run manifests.
  std::string describe() const;
};

/// Throws std::invalid_argument for unknown names.
const SystemSpec& find_system(std::string_view name);
const std::vector<std::string>& system_names();

struct CollocationSet {
  Matrix interior;  // (input_dim x n_interior)
  Matrix boundary;  // boundary times (1 x n per side); empty for ODEs
  Matrix initial;   // spatial points at t = 0; single t = 0 column for ODEs
  uint64_t seed = 0;
};

/// Latin hypercube sample: every 1D marginal is stratified into n equal
/// bins with exactly one point per bin. (dims x n).
Matrix latin_hypercube(Rng& rng, int dims, int n,
                       const std::vector<Window>& bounds);

/// Counts default to 10000/100-per-side/100 for PDEs and 5000/-/1 for ODEs.
CollocationSet sample_collocation(const SystemSpec& spec, uint64_t seed,
                                  int n_interior = -1, int n_boundary = -1,
                                  int n_initial = -1);

/// Candidate solution abstraction: plain values and jet tensors at a batch
/// of points, used for both trained networks and analytic surrogates.
struct FieldSampler {
  int state_dim = 1;
  std::function<Matrix(const Matrix&)> values;
  std::function<Matrix(const Matrix&, const JetBasis&)> jets;
};

FieldSampler sampler_from_network(const model::MlpParams& net);
/// fn(x, t, basis) returns one jet per state channel.
using JetFieldFn =
    std::function<std::vector<Jet>(double, double, const JetBasis&)>;
FieldSampler sampler_from_jet_fn(JetFieldFn fn, int state_dim);

/// Residual rows from an output jet tensor already on a tape.
std::vector<Tape::Var> residual_on_tape(Tape& tape, const SystemSpec& spec,
                                        Tape::Var output_jets);

/// N[u] at a batch of points: (state_dim x batch).
Matrix residual_values(const SystemSpec& spec, const FieldSampler& sampler,
                       const Matrix& points);
/// Single collocation point.
Vector residual(const SystemSpec& spec, const model::MlpParams& net,
                const Vector& point);

struct IcBcLoss {
  double ic = 0.0;
  double bc = 0.0;
};

/// Loss terms shared by training tapes and plain evaluation.
Tape::Var ic_loss_terms(Tape& tape, const SystemSpec& spec, Tape::Var values,
                        const Matrix& target);
Tape::Var bc_loss_terms(Tape& tape, const SystemSpec& spec,
                        Tape::Var left_jets, Tape::Var right_jets);

Matrix ic_targets(const SystemSpec& spec, const Matrix& initial_points);
Matrix ic_coordinates(const SystemSpec& spec, const Matrix& initial_points);
Matrix boundary_coordinates(const SystemSpec& spec, const Matrix& times,
                            bool right_end);

IcBcLoss ic_bc_loss(const SystemSpec& spec, const FieldSampler& sampler,
                    const CollocationSet& points);
IcBcLoss ic_bc_loss(const SystemSpec& spec, const model::MlpParams& net,
                    const CollocationSet& points);

}  // namespace spikelab::systems
