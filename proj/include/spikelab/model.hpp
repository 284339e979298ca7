#pragma once

#include "spikelab/jet.hpp"
#include "spikelab/linalg.hpp"
#include "spikelab/tape.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

namespace spikelab::model {

using autodiff::JetBasis;
using autodiff::Tape;
using linalg::Matrix;
using linalg::Vector;

struct MlpArchitecture {
  int input_dim = 2;
  int hidden_layers = 4;
  int hidden_width = 128;
  int output_dim = 1;
  bool activate_output = false;  // observable nets end in tanh

  int weight_count() const { return hidden_layers + 1; }
};

struct MlpParams {
  MlpArchitecture arch;
  std::vector<Matrix> weights;
  std::vector<Matrix> biases;  // column vectors

  int parameter_count() const;
};

struct MlpGrads {
  std::vector<Matrix> weights;
  std::vector<Matrix> biases;

  static MlpGrads zeros_like(const MlpParams& p);
  void set_zero();
};

struct EmbeddingSpec {
  int state_dim = 1;
  int poly_degree = 2;
  int observable_dim = 64;
  bool learnable_projection = false;
  int latent_hidden_layers = 2;
  int latent_hidden_width = 64;

  int library_size() const;  // C(state_dim + poly_degree, poly_degree)
  int latent_width() const { return observable_dim - library_size(); }
  MlpArchitecture latent_arch() const;
};

/// The continuous-time generator acting on observables, dz/dt = A z.
/// The leading library_size rows/columns form the library block.
struct GeneratorMatrix {
  Matrix a;
  int library_size = 0;
};

struct ModelParams {
  MlpParams solution;
  MlpParams latent;
  Matrix w_lib;  // library projection, identity unless learnable
  GeneratorMatrix generator;
  EmbeddingSpec embedding;
};

struct ModelGrads {
  MlpGrads solution;
  MlpGrads latent;
  Matrix w_lib;
  Matrix a;

  static ModelGrads zeros_like(const ModelParams& p);
  void set_zero();
};

/// Xavier-uniform weights, zero biases, zero generator; deterministic per
/// seed.
ModelParams init_params(const MlpArchitecture& solution_arch,
                        const EmbeddingSpec& spec, uint64_t seed);

/// Exponent rows of all monomials up to `degree` in graded lexicographic
/// order: [1, u1, ..., un, u1^2, u1 u2, ...].
std::vector<std::vector<int>> monomial_exponents(int nvars, int degree);

Vector polynomial_library(const Vector& u, int degree);

Vector embed(const ModelParams& params, const Vector& u);
Matrix embed_batch(const ModelParams& params, const Matrix& u);

Vector evaluate_solution(const MlpParams& net, const Vector& coords);
/// coords: (input_dim x batch) -> (output_dim x batch).
Matrix evaluate_solution_batch(const MlpParams& net, const Matrix& coords);

/// Jet-propagated forward pass: input (input_dim x batch*ncoef), output
/// (output_dim x batch*ncoef) in the same basis.
Matrix forward_jets(const MlpParams& net, const Matrix& input_jets, int batch,
                    const JetBasis& basis);

/// Input jet tensor for PDE coordinates (x tagged, t tagged) or ODE time.
Matrix coordinate_jets(const Matrix& coords, const JetBasis& basis);

/// u and every requested mixed input partial, keyed by (x_order, t_order);
/// one-input networks use the t slot. Total order above 4 is rejected.
std::map<std::pair<int, int>, double> eval_with_input_derivs(
    const MlpParams& net, const Vector& coords,
    const std::vector<std::pair<int, int>>& orders);

// -- Tape builders ----------------------------------------------------------

struct TapeMlp {
  std::vector<Tape::Var> weights;
  std::vector<Tape::Var> biases;
};

TapeMlp register_mlp(Tape& tape, const MlpParams& p, MlpGrads& g);
Tape::Var mlp_forward(Tape& tape, const TapeMlp& vars,
                      const MlpArchitecture& arch, Tape::Var input);

struct TapeModel {
  TapeMlp solution;
  TapeMlp latent;
  Tape::Var generator;
  Tape::Var w_lib;  // invalid unless the projection is learnable
};

TapeModel register_model(Tape& tape, const ModelParams& p, ModelGrads& g);
/// z = [W_lib psi_d(u); g_mlp(u)] from a plain (state_dim x batch) tensor.
Tape::Var embed_on_tape(Tape& tape, const TapeModel& vars,
                        const ModelParams& params, Tape::Var u);

// -- Checkpoints -------------------------------------------------------------

/// Versioned binary checkpoint (named arrays + embedding spec); round-trips
/// bit-exactly.
void save_checkpoint(const std::filesystem::path& path, const ModelParams& p);
ModelParams load_checkpoint(const std::filesystem::path& path);

}  // namespace spikelab::model
