#include "mmtomo/fockspace.hpp"

#include <cmath>
#include <numeric>

namespace mmtomo {

namespace {

CMatrix kron(const CMatrix& a, const CMatrix& b) {
  CMatrix out(a.rows() * b.rows(), a.cols() * b.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < a.cols(); ++j)
      out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
  return out;
}

// Maps every index of `from` to its position in `to` (or -1 if it does not fit).
std::vector<std::int64_t> embedding_map(const IndexBox& from, const IndexBox& to) {
  std::vector<std::int64_t> map(static_cast<std::size_t>(from.size()), -1);
  for (std::int64_t i = 0; i < from.size(); ++i) {
    const MultiIndex idx = from.unflatten(i);
    if (to.contains(idx)) map[static_cast<std::size_t>(i)] = to.flatten(idx);
  }
  return map;
}

}  // namespace

HilbertConfig HilbertConfig::uniform(int num_modes, int cutoff, int num_spins, int guard_levels) {
  HilbertConfig c;
  c.cutoffs.assign(static_cast<std::size_t>(std::max(num_modes, 0)), cutoff);
  c.num_spins = num_spins;
  c.guard_levels = guard_levels;
  c.validate();
  return c;
}

std::int64_t HilbertConfig::mode_dimension() const {
  std::int64_t dim = 1;
  for (int c : cutoffs) dim *= (c + 1);
  return dim;
}

IndexBox HilbertConfig::mode_box() const {
  std::vector<int> extents;
  extents.reserve(cutoffs.size());
  for (int c : cutoffs) extents.push_back(c + 1);
  return IndexBox(std::move(extents));
}

HilbertConfig HilbertConfig::motional() const { return with_spins(0); }

HilbertConfig HilbertConfig::with_spins(int spins) const {
  HilbertConfig c = *this;
  c.num_spins = spins;
  return c;
}

HilbertConfig HilbertConfig::with_cutoffs(std::vector<int> new_cutoffs) const {
  HilbertConfig c = *this;
  c.cutoffs = std::move(new_cutoffs);
  c.validate();
  return c;
}

void HilbertConfig::validate() const {
  if (cutoffs.empty()) throw ConfigError("HilbertConfig: at least one mode is required");
  for (int c : cutoffs)
    if (c < 1) throw ConfigError("HilbertConfig: every cutoff must be >= 1");
  if (num_spins < 0 || num_spins > 16) throw ConfigError("HilbertConfig: num_spins out of range");
  if (guard_levels < 0) throw ConfigError("HilbertConfig: guard_levels must be >= 0");
  double dim = std::ldexp(1.0, num_spins);
  for (int c : cutoffs) dim *= (c + 1);
  if (dim > static_cast<double>(kMaxStateDimension))
    throw ConfigError("HilbertConfig: total dimension exceeds the configured cap");
}

// --- PureState -------------------------------------------------------------

PureState PureState::vacuum(const HilbertConfig& config) {
  return basis(config, 0, MultiIndex(config.cutoffs.size(), 0));
}

PureState PureState::basis(const HilbertConfig& config, std::uint64_t spin_bits,
                           const MultiIndex& fock) {
  config.validate();
  PureState s{config, CVector::Zero(config.dimension())};
  s.amplitudes(s.index(spin_bits, fock)) = 1.0;
  return s;
}

std::int64_t PureState::index(std::uint64_t spin_bits, const MultiIndex& fock) const {
  if (spin_bits >= static_cast<std::uint64_t>(config.spin_dimension()))
    throw ConfigError("PureState: spin index out of range");
  return static_cast<std::int64_t>(spin_bits) * config.mode_dimension() +
         config.mode_box().flatten(fock);
}

void PureState::normalize() {
  const Real n = norm();
  if (n == 0.0) throw NumericalError("PureState: cannot normalize the zero vector");
  amplitudes /= n;
}

void PureState::check_normalized(double tol) const {
  if (std::abs(norm() - 1.0) > tol)
    throw ConfigError("PureState: state is not normalized (norm " + std::to_string(norm()) + ")");
}

// --- DensityMatrix ---------------------------------------------------------

DensityMatrix DensityMatrix::from_pure(const PureState& motional) {
  if (motional.config.num_spins != 0)
    throw ConfigError("DensityMatrix::from_pure: trace out spins first");
  return {motional.config, motional.amplitudes * motional.amplitudes.adjoint()};
}

DensityMatrix DensityMatrix::from_matrix(const HilbertConfig& config, CMatrix matrix) {
  const HilbertConfig motional = config.motional();
  motional.validate();
  if (matrix.rows() != motional.dimension() || matrix.cols() != motional.dimension())
    throw DimensionMismatch("DensityMatrix: matrix is " + std::to_string(matrix.rows()) + "x" +
                            std::to_string(matrix.cols()) + ", config needs " +
                            std::to_string(motional.dimension()));
  return {motional, std::move(matrix)};
}

Real DensityMatrix::hermiticity_defect() const {
  return (matrix - matrix.adjoint()).cwiseAbs().maxCoeff();
}

void DensityMatrix::check_physical(double tol) const {
  if (hermiticity_defect() > tol) throw ConfigError("DensityMatrix: not Hermitian");
  if (std::abs(trace() - 1.0) > tol) throw ConfigError("DensityMatrix: trace is not one");
}

// --- operators -------------------------------------------------------------

CMatrix lowering_matrix(int levels) {
  CMatrix a = CMatrix::Zero(levels, levels);
  for (int n = 1; n < levels; ++n) a(n - 1, n) = std::sqrt(static_cast<Real>(n));
  return a;
}

CMatrix displacement_matrix(Complex alpha, int levels, int guard_levels) {
  const int padded = levels + guard_levels;
  const CMatrix a = lowering_matrix(padded);
  // D = exp(G) with G = alpha a^dag - alpha^* a anti-Hermitian; H = iG.
  const CMatrix generator = Complex(0, 1) * (alpha * a.adjoint() - std::conj(alpha) * a);
  return unitary_from_generator(generator).topLeftCorner(levels, levels);
}

CMatrix build_operator(const ModeOperator& op, const HilbertConfig& config,
                       std::int64_t max_dimension) {
  config.validate();
  if (op.mode < 0 || op.mode >= config.num_modes())
    throw ConfigError("build_operator: mode index " + std::to_string(op.mode) + " out of range");
  if (config.dimension() > max_dimension)
    throw ConfigError("build_operator: dimension " + std::to_string(config.dimension()) +
                      " exceeds the dense operator cap " + std::to_string(max_dimension));

  const int levels = config.levels(op.mode);
  CMatrix local;
  switch (op.kind) {
    case ModeOperator::Kind::Lower:
      local = lowering_matrix(levels);
      break;
    case ModeOperator::Kind::Raise:
      local = lowering_matrix(levels).adjoint();
      break;
    case ModeOperator::Kind::Number:
      local = CMatrix::Zero(levels, levels);
      for (int n = 0; n < levels; ++n) local(n, n) = static_cast<Real>(n);
      break;
    case ModeOperator::Kind::Displacement:
      local = displacement_matrix(op.alpha, levels, config.guard_levels);
      break;
  }

  CMatrix full = CMatrix::Identity(config.spin_dimension(), config.spin_dimension());
  for (int j = 0; j < config.num_modes(); ++j) {
    if (j == op.mode)
      full = kron(full, local);
    else
      full = kron(full, CMatrix::Identity(config.levels(j), config.levels(j)));
  }
  return full;
}

DisplacedPopulations displaced_populations_with_leak(const DensityMatrix& rho,
                                                     const std::vector<Complex>& alphas,
                                                     double leak_tolerance) {
  const HilbertConfig& cfg = rho.config;
  if (static_cast<int>(alphas.size()) != cfg.num_modes())
    throw DimensionMismatch("displaced_populations: need one alpha per mode");
  if (rho.matrix.rows() != cfg.mode_dimension())
    throw DimensionMismatch("displaced_populations: matrix does not match config");

  CMatrix d = CMatrix::Identity(1, 1);
  for (int j = 0; j < cfg.num_modes(); ++j)
    d = kron(d, displacement_matrix(alphas[j], cfg.levels(j), cfg.guard_levels));

  const CMatrix rho_d = rho.matrix * d;
  RVector q(cfg.mode_dimension());
  for (Eigen::Index k = 0; k < q.size(); ++k)
    q(k) = d.col(k).dot(rho_d.col(k)).real();  // dot conjugates its left argument

  const double leaked = rho.trace() - q.sum();
  if (leaked > leak_tolerance)
    throw TruncationLeak("displaced_populations", leaked, leak_tolerance);
  return {std::move(q), leaked};
}

RVector displaced_populations(const DensityMatrix& rho, const std::vector<Complex>& alphas,
                              double leak_tolerance) {
  return displaced_populations_with_leak(rho, alphas, leak_tolerance).values;
}

Real fidelity(const DensityMatrix& rho, const PureState& target) {
  if (target.config.num_spins != 0)
    throw DimensionMismatch("fidelity: target must be a motional state");
  if (target.config.cutoffs != rho.config.cutoffs)
    throw DimensionMismatch("fidelity: state and target live on different Fock spaces");
  const Complex f = target.amplitudes.dot(rho.matrix * target.amplitudes);
  if (rho.hermiticity_defect() < 1e-9 && std::abs(f.imag()) > 1e-9)
    throw NumericalError("fidelity: imaginary part on a Hermitian matrix");
  return f.real();
}

Real trace_distance(const DensityMatrix& a, const DensityMatrix& b) {
  if (a.config.cutoffs != b.config.cutoffs)
    throw DimensionMismatch("trace_distance: states live on different Fock spaces");
  return trace_distance(a.matrix, b.matrix);
}

DensityMatrix trace_out_spins(const PureState& state) {
  const HilbertConfig motional = state.config.motional();
  const std::int64_t m = state.config.mode_dimension();
  CMatrix rho = CMatrix::Zero(m, m);
  for (std::int64_t s = 0; s < state.config.spin_dimension(); ++s) {
    const auto block = state.amplitudes.segment(s * m, m);
    rho.noalias() += block * block.adjoint();
  }
  return {motional, std::move(rho)};
}

PureState motional_part(const PureState& state, double tol) {
  const std::int64_t m = state.config.mode_dimension();
  const CVector block = state.amplitudes.head(m);
  const Real down_population = block.squaredNorm();
  if (down_population < state.amplitudes.squaredNorm() - tol)
    throw ConfigError("motional_part: spins are not all down (down-sector population " +
                      std::to_string(down_population) + ")");
  PureState out{state.config.motional(), block};
  out.normalize();
  return out;
}

PureState with_spins_down(const PureState& motional, int num_spins) {
  if (motional.config.num_spins != 0)
    throw ConfigError("with_spins_down: input already carries spins");
  const HilbertConfig cfg = motional.config.with_spins(num_spins);
  cfg.validate();
  PureState out{cfg, CVector::Zero(cfg.dimension())};
  out.amplitudes.head(cfg.mode_dimension()) = motional.amplitudes;
  return out;
}

PureState resize(const PureState& state, const std::vector<int>& cutoffs, double tol) {
  const HilbertConfig cfg = state.config.with_cutoffs(cutoffs);
  const auto map = embedding_map(state.config.mode_box(), cfg.mode_box());
  const std::int64_t m_old = state.config.mode_dimension();
  const std::int64_t m_new = cfg.mode_dimension();
  PureState out{cfg, CVector::Zero(cfg.dimension())};
  Real dropped = 0.0;
  for (std::int64_t s = 0; s < cfg.spin_dimension(); ++s) {
    for (std::int64_t i = 0; i < m_old; ++i) {
      const Complex amp = state.amplitudes(s * m_old + i);
      const std::int64_t target = map[static_cast<std::size_t>(i)];
      if (target < 0)
        dropped += std::norm(amp);
      else
        out.amplitudes(s * m_new + target) = amp;
    }
  }
  if (dropped > tol) throw TruncationLeak("resize", dropped, tol);
  return out;
}

DensityMatrix resize(const DensityMatrix& rho, const std::vector<int>& cutoffs, double tol) {
  const HilbertConfig cfg = rho.config.with_cutoffs(cutoffs);
  const auto map = embedding_map(rho.config.mode_box(), cfg.mode_box());
  CMatrix out = CMatrix::Zero(cfg.mode_dimension(), cfg.mode_dimension());
  Real dropped = 0.0;
  for (std::size_t i = 0; i < map.size(); ++i) {
    if (map[i] < 0) {
      dropped += std::abs(rho.matrix(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i)));
      continue;
    }
    for (std::size_t j = 0; j < map.size(); ++j)
      if (map[j] >= 0)
        out(map[i], map[j]) =
            rho.matrix(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
  }
  if (dropped > tol) throw TruncationLeak("resize", dropped, tol);
  return {cfg, std::move(out)};
}

PureState coherent_state(Complex alpha, int cutoff) {
  PureState s{HilbertConfig::uniform(1, cutoff), CVector::Zero(cutoff + 1)};
  Complex term = std::exp(-0.5 * std::norm(alpha));
  for (int n = 0; n <= cutoff; ++n) {
    s.amplitudes(n) = term;
    term *= alpha / std::sqrt(static_cast<Real>(n + 1));
  }
  s.normalize();
  return s;
}

PureState tensor(const PureState& a, const PureState& b) {
  if (a.config.num_spins != 0 || b.config.num_spins != 0)
    throw ConfigError("tensor: only motional states can be combined");
  HilbertConfig cfg = a.config;
  cfg.cutoffs.insert(cfg.cutoffs.end(), b.config.cutoffs.begin(), b.config.cutoffs.end());
  cfg.validate();
  PureState out{cfg, CVector(cfg.dimension())};
  const Eigen::Index nb = b.amplitudes.size();
  for (Eigen::Index i = 0; i < a.amplitudes.size(); ++i)
    out.amplitudes.segment(i * nb, nb) = a.amplitudes(i) * b.amplitudes;
  return out;
}

}  // namespace mmtomo
