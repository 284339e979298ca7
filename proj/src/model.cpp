#include "spikelab/model.hpp"

#include "spikelab/rng.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace spikelab::model {

int MlpParams::parameter_count() const {
  int count = 0;
  for (const Matrix& w : weights) count += static_cast<int>(w.size());
  for (const Matrix& b : biases) count += static_cast<int>(b.size());
  return count;
}

MlpGrads MlpGrads::zeros_like(const MlpParams& p) {
  MlpGrads g;
  for (const Matrix& w : p.weights) {
    g.weights.push_back(Matrix::Zero(w.rows(), w.cols()));
  }
  for (const Matrix& b : p.biases) {
    g.biases.push_back(Matrix::Zero(b.rows(), b.cols()));
  }
  return g;
}

void MlpGrads::set_zero() {
  for (Matrix& w : weights) w.setZero();
  for (Matrix& b : biases) b.setZero();
}

int EmbeddingSpec::library_size() const {
  // C(n + d, d)
  long long num = 1;
  for (int k = 1; k <= poly_degree; ++k) {
    num = num * (state_dim + k) / k;
  }
  return static_cast<int>(num);
}

MlpArchitecture EmbeddingSpec::latent_arch() const {
  MlpArchitecture arch;
  arch.input_dim = state_dim;
  arch.hidden_layers = latent_hidden_layers;
  arch.hidden_width = latent_hidden_width;
  arch.output_dim = latent_width();
  arch.activate_output = true;
  return arch;
}

ModelGrads ModelGrads::zeros_like(const ModelParams& p) {
  ModelGrads g;
  g.solution = MlpGrads::zeros_like(p.solution);
  g.latent = MlpGrads::zeros_like(p.latent);
  g.w_lib = Matrix::Zero(p.w_lib.rows(), p.w_lib.cols());
  g.a = Matrix::Zero(p.generator.a.rows(), p.generator.a.cols());
  return g;
}

void ModelGrads::set_zero() {
  solution.set_zero();
  latent.set_zero();
  w_lib.setZero();
  a.setZero();
}

namespace {

MlpParams init_mlp(const MlpArchitecture& arch, Rng& rng) {
  MlpParams p;
  p.arch = arch;
  std::vector<int> dims;
  dims.push_back(arch.input_dim);
  for (int l = 0; l < arch.hidden_layers; ++l) dims.push_back(arch.hidden_width);
  dims.push_back(arch.output_dim);
  for (size_t l = 0; l + 1 < dims.size(); ++l) {
    const int fan_in = dims[l];
    const int fan_out = dims[l + 1];
    const double bound = std::sqrt(6.0 / (fan_in + fan_out));
    Matrix w(fan_out, fan_in);
    for (Eigen::Index i = 0; i < w.rows(); ++i) {
      for (Eigen::Index j = 0; j < w.cols(); ++j) {
        w(i, j) = rng.uniform(-bound, bound);
      }
    }
    p.weights.push_back(std::move(w));
    p.biases.push_back(Matrix::Zero(fan_out, 1));
  }
  return p;
}

}  // namespace

ModelParams init_params(const MlpArchitecture& solution_arch,
                        const EmbeddingSpec& spec, uint64_t seed) {
  if (spec.latent_width() < 0) {
    throw std::invalid_argument(
        "init_params: observable dim smaller than the library");
  }
  Rng rng(seed);
  ModelParams p;
  p.embedding = spec;
  p.solution = init_mlp(solution_arch, rng);
  p.latent = init_mlp(spec.latent_arch(), rng);
  p.w_lib = Matrix::Identity(spec.library_size(), spec.library_size());
  p.generator.a = Matrix::Zero(spec.observable_dim, spec.observable_dim);
  p.generator.library_size = spec.library_size();
  return p;
}

std::vector<std::vector<int>> monomial_exponents(int nvars, int degree) {
  std::vector<std::vector<int>> rows;
  std::vector<int> current(static_cast<size_t>(nvars), 0);
  // Within each total degree, exponents are enumerated lexicographically
  // descending on (e1, e2, ...), which yields [1, u1, ..., un, u1^2, ...].
  auto recurse = [&](auto&& self, int var, int remaining) -> void {
    if (var == nvars - 1) {
      current[static_cast<size_t>(var)] = remaining;
      rows.push_back(current);
      return;
    }
    for (int e = remaining; e >= 0; --e) {
      current[static_cast<size_t>(var)] = e;
      self(self, var + 1, remaining - e);
    }
  };
  for (int total = 0; total <= degree; ++total) {
    if (nvars == 0) {
      rows.push_back({});
      break;
    }
    recurse(recurse, 0, total);
  }
  return rows;
}

Vector polynomial_library(const Vector& u, int degree) {
  if (degree < 0) throw std::invalid_argument("polynomial_library: degree < 0");
  const auto rows = monomial_exponents(static_cast<int>(u.size()), degree);
  Vector out(static_cast<Eigen::Index>(rows.size()));
  for (size_t r = 0; r < rows.size(); ++r) {
    double prod = 1.0;
    for (size_t k = 0; k < rows[r].size(); ++k) {
      for (int rep = 0; rep < rows[r][k]; ++rep) prod *= u(static_cast<Eigen::Index>(k));
    }
    out(static_cast<Eigen::Index>(r)) = prod;
  }
  return out;
}

namespace {

Matrix mlp_plain_forward(const MlpParams& net, const Matrix& x) {
  Matrix h = x;
  const int nlayers = static_cast<int>(net.weights.size());
  for (int l = 0; l < nlayers; ++l) {
    Matrix z = net.weights[static_cast<size_t>(l)] * h;
    z.colwise() += net.biases[static_cast<size_t>(l)].col(0);
    if (l + 1 < nlayers || net.arch.activate_output) {
      h = z.array().tanh().matrix();
    } else {
      h = std::move(z);
    }
  }
  return h;
}

}  // namespace

Matrix embed_batch(const ModelParams& params, const Matrix& u) {
  const auto exps =
      monomial_exponents(params.embedding.state_dim, params.embedding.poly_degree);
  Matrix lib(static_cast<Eigen::Index>(exps.size()), u.cols());
  for (size_t r = 0; r < exps.size(); ++r) {
    for (Eigen::Index j = 0; j < u.cols(); ++j) {
      double prod = 1.0;
      for (size_t k = 0; k < exps[r].size(); ++k) {
        for (int rep = 0; rep < exps[r][k]; ++rep) {
          prod *= u(static_cast<Eigen::Index>(k), j);
        }
      }
      lib(static_cast<Eigen::Index>(r), j) = prod;
    }
  }
  if (!params.w_lib.isIdentity(0.0)) {
    lib = params.w_lib * lib;
  }
  if (params.embedding.latent_width() == 0) return lib;
  const Matrix latent = mlp_plain_forward(params.latent, u);
  Matrix z(lib.rows() + latent.rows(), u.cols());
  z.topRows(lib.rows()) = lib;
  z.bottomRows(latent.rows()) = latent;
  return z;
}

Vector embed(const ModelParams& params, const Vector& u) {
  return embed_batch(params, u);
}

Matrix evaluate_solution_batch(const MlpParams& net, const Matrix& coords) {
  if (coords.rows() != net.arch.input_dim) {
    throw std::invalid_argument("evaluate_solution: coordinate dim mismatch");
  }
  return mlp_plain_forward(net, coords);
}

Vector evaluate_solution(const MlpParams& net, const Vector& coords) {
  return evaluate_solution_batch(net, coords);
}

Matrix coordinate_jets(const Matrix& coords, const JetBasis& basis) {
  const int dims = static_cast<int>(coords.rows());
  const int batch = static_cast<int>(coords.cols());
  Matrix jets = Matrix::Zero(dims, static_cast<Eigen::Index>(batch) * basis.size());
  jets.block(0, 0, dims, batch) = coords;
  if (dims == 2) {
    const int px = basis.position(1, 0);
    const int pt = basis.position(0, 1);
    if (px >= 0) jets.block(0, static_cast<Eigen::Index>(px) * batch, 1, batch).setOnes();
    if (pt >= 0) jets.block(1, static_cast<Eigen::Index>(pt) * batch, 1, batch).setOnes();
  } else if (dims == 1) {
    const int pt = basis.position(0, 1);
    if (pt >= 0) jets.block(0, static_cast<Eigen::Index>(pt) * batch, 1, batch).setOnes();
  } else {
    throw std::invalid_argument("coordinate_jets: one or two inputs expected");
  }
  return jets;
}

Matrix forward_jets(const MlpParams& net, const Matrix& input_jets, int batch,
                    const JetBasis& basis) {
  Tape tape;
  autodiff::JetShape shape{net.arch.input_dim, batch, &basis};
  Tape::Var h = tape.constant(input_jets, shape);
  const int nlayers = static_cast<int>(net.weights.size());
  for (int l = 0; l < nlayers; ++l) {
    Tape::Var w = tape.constant_plain(net.weights[static_cast<size_t>(l)]);
    Tape::Var b = tape.constant_plain(net.biases[static_cast<size_t>(l)]);
    h = tape.affine(w, b, h);
    if (l + 1 < nlayers || net.arch.activate_output) h = tape.tanh(h);
  }
  return tape.value(h);
}

std::map<std::pair<int, int>, double> eval_with_input_derivs(
    const MlpParams& net, const Vector& coords,
    const std::vector<std::pair<int, int>>& orders) {
  for (const auto& [ox, ot] : orders) {
    if (ox < 0 || ot < 0 || ox + ot > 4) {
      throw std::invalid_argument(
          "eval_with_input_derivs: total derivative order above 4");
    }
  }
  const JetBasis& basis = JetBasis::full_order4();
  Matrix pts(coords.size(), 1);
  pts.col(0) = coords;
  const Matrix jets =
      forward_jets(net, coordinate_jets(pts, basis), 1, basis);
  if (net.arch.output_dim != 1) {
    throw std::invalid_argument(
        "eval_with_input_derivs: scalar-output network expected");
  }
  std::map<std::pair<int, int>, double> out;
  for (const auto& [ox, ot] : orders) {
    const int pos = basis.position(ox, ot);
    out[{ox, ot}] = jets(0, pos) * basis.derivative_scale(pos);
  }
  return out;
}

TapeMlp register_mlp(Tape& tape, const MlpParams& p, MlpGrads& g) {
  TapeMlp vars;
  for (size_t l = 0; l < p.weights.size(); ++l) {
    vars.weights.push_back(tape.parameter(&p.weights[l], &g.weights[l]));
    vars.biases.push_back(tape.parameter(&p.biases[l], &g.biases[l]));
  }
  return vars;
}

Tape::Var mlp_forward(Tape& tape, const TapeMlp& vars,
                      const MlpArchitecture& arch, Tape::Var input) {
  Tape::Var h = input;
  const int nlayers = static_cast<int>(vars.weights.size());
  for (int l = 0; l < nlayers; ++l) {
    h = tape.affine(vars.weights[static_cast<size_t>(l)],
                    vars.biases[static_cast<size_t>(l)], h);
    if (l + 1 < nlayers || arch.activate_output) h = tape.tanh(h);
  }
  return h;
}

TapeModel register_model(Tape& tape, const ModelParams& p, ModelGrads& g) {
  TapeModel vars;
  vars.solution = register_mlp(tape, p.solution, g.solution);
  vars.latent = register_mlp(tape, p.latent, g.latent);
  vars.generator = tape.parameter(&p.generator.a, &g.a);
  if (p.embedding.learnable_projection) {
    vars.w_lib = tape.parameter(&p.w_lib, &g.w_lib);
  }
  return vars;
}

Tape::Var embed_on_tape(Tape& tape, const TapeModel& vars,
                        const ModelParams& params, Tape::Var u) {
  const auto exps = monomial_exponents(params.embedding.state_dim,
                                       params.embedding.poly_degree);
  Tape::Var lib = tape.monomials(u, exps);
  if (params.embedding.learnable_projection) {
    lib = tape.matvec(vars.w_lib, lib);
  } else if (!params.w_lib.isIdentity(0.0)) {
    lib = tape.matvec(tape.constant_plain(params.w_lib), lib);
  }
  if (params.embedding.latent_width() == 0) return lib;
  Tape::Var latent =
      mlp_forward(tape, vars.latent, params.latent.arch, u);
  return tape.vconcat(lib, latent);
}

// -- Checkpoints -------------------------------------------------------------

namespace {

constexpr char kMagic[8] = {'S', 'P', 'K', 'L', 'C', 'K', 'P', 'T'};
constexpr uint32_t kVersion = 1;

void write_u32(std::ostream& os, uint32_t v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(v));
}
void write_i32(std::ostream& os, int32_t v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(v));
}
void write_u64(std::ostream& os, uint64_t v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(v));
}
uint32_t read_u32(std::istream& is) {
  uint32_t v = 0;
  is.read(reinterpret_cast<char*>(&v), sizeof(v));
  return v;
}
int32_t read_i32(std::istream& is) {
  int32_t v = 0;
  is.read(reinterpret_cast<char*>(&v), sizeof(v));
  return v;
}
uint64_t read_u64(std::istream& is) {
  uint64_t v = 0;
  is.read(reinterpret_cast<char*>(&v), sizeof(v));
  return v;
}

void write_array(std::ostream& os, const std::string& name, const Matrix& m) {
  write_u32(os, static_cast<uint32_t>(name.size()));
  os.write(name.data(), static_cast<std::streamsize>(name.size()));
  write_u64(os, static_cast<uint64_t>(m.rows()));
  write_u64(os, static_cast<uint64_t>(m.cols()));
  // Row-major payload.
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      const double v = m(i, j);
      os.write(reinterpret_cast<const char*>(&v), sizeof(v));
    }
  }
}

std::pair<std::string, Matrix> read_array(std::istream& is) {
  const uint32_t len = read_u32(is);
  std::string name(len, '\0');
  is.read(name.data(), len);
  const uint64_t rows = read_u64(is);
  const uint64_t cols = read_u64(is);
  Matrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      double v = 0;
      is.read(reinterpret_cast<char*>(&v), sizeof(v));
      m(i, j) = v;
    }
  }
  return {name, std::move(m)};
}

void write_arch(std::ostream& os, const MlpArchitecture& a) {
  write_i32(os, a.input_dim);
  write_i32(os, a.hidden_layers);
  write_i32(os, a.hidden_width);
  write_i32(os, a.output_dim);
  write_i32(os, a.activate_output ? 1 : 0);
}

MlpArchitecture read_arch(std::istream& is) {
  MlpArchitecture a;
  a.input_dim = read_i32(is);
  a.hidden_layers = read_i32(is);
  a.hidden_width = read_i32(is);
  a.output_dim = read_i32(is);
  a.activate_output = read_i32(is) != 0;
  return a;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const ModelParams& p) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) {
    throw std::runtime_error("save_checkpoint: cannot open " + path.string());
  }
  os.write(kMagic, sizeof(kMagic));
  write_u32(os, kVersion);
  write_i32(os, p.embedding.state_dim);
  write_i32(os, p.embedding.poly_degree);
  write_i32(os, p.embedding.observable_dim);
  write_i32(os, p.embedding.learnable_projection ? 1 : 0);
  write_i32(os, p.embedding.latent_hidden_layers);
  write_i32(os, p.embedding.latent_hidden_width);
  write_arch(os, p.solution.arch);
  write_arch(os, p.latent.arch);
  write_i32(os, p.generator.library_size);

  uint32_t count = static_cast<uint32_t>(p.solution.weights.size() * 2 +
                                         p.latent.weights.size() * 2 + 2);
  write_u32(os, count);
  for (size_t l = 0; l < p.solution.weights.size(); ++l) {
    write_array(os, "solution_w" + std::to_string(l), p.solution.weights[l]);
    write_array(os, "solution_b" + std::to_string(l), p.solution.biases[l]);
  }
  for (size_t l = 0; l < p.latent.weights.size(); ++l) {
    write_array(os, "latent_w" + std::to_string(l), p.latent.weights[l]);
    write_array(os, "latent_b" + std::to_string(l), p.latent.biases[l]);
  }
  write_array(os, "w_lib", p.w_lib);
  write_array(os, "generator_a", p.generator.a);
  if (!os) {
    throw std::runtime_error("save_checkpoint: write failed for " +
                             path.string());
  }
}

ModelParams load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) {
    throw std::runtime_error("load_checkpoint: cannot open " + path.string());
  }
  char magic[8] = {};
  is.read(magic, sizeof(magic));
  if (std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw std::runtime_error("load_checkpoint: bad magic in " + path.string());
  }
  const uint32_t version = read_u32(is);
  if (version != kVersion) {
    throw std::runtime_error("load_checkpoint: unsupported version " +
                             std::to_string(version));
  }
  ModelParams p;
  p.embedding.state_dim = read_i32(is);
  p.embedding.poly_degree = read_i32(is);
  p.embedding.observable_dim = read_i32(is);
  p.embedding.learnable_projection = read_i32(is) != 0;
  p.embedding.latent_hidden_layers = read_i32(is);
  p.embedding.latent_hidden_width = read_i32(is);
  p.solution.arch = read_arch(is);
  p.latent.arch = read_arch(is);
  p.generator.library_size = read_i32(is);

  const uint32_t count = read_u32(is);
  std::map<std::string, Matrix> arrays;
  for (uint32_t i = 0; i < count; ++i) {
    auto [name, m] = read_array(is);
    arrays.emplace(std::move(name), std::move(m));
  }
  if (!is) {
    throw std::runtime_error("load_checkpoint: truncated file " +
                             path.string());
  }
  auto take = [&](const std::string& name) {
    auto it = arrays.find(name);
    if (it == arrays.end()) {
      throw std::runtime_error("load_checkpoint: missing array " + name);
    }
    return it->second;
  };
  for (int l = 0; l < p.solution.arch.weight_count(); ++l) {
    p.solution.weights.push_back(take("solution_w" + std::to_string(l)));
    p.solution.biases.push_back(take("solution_b" + std::to_string(l)));
  }
  for (int l = 0; l < p.latent.arch.weight_count(); ++l) {
    p.latent.weights.push_back(take("latent_w" + std::to_string(l)));
    p.latent.biases.push_back(take("latent_b" + std::to_string(l)));
  }
  p.w_lib = take("w_lib");
  p.generator.a = take("generator_a");
  return p;
}

}  // namespace spikelab::model
