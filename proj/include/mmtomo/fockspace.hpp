#ifndef MMTOMO_FOCKSPACE_HPP
#define MMTOMO_FOCKSPACE_HPP

// Truncated multi-mode Fock space: states, density matrices, ladder and
// displacement operators.
//
// Basis ordering: spins are the slowest index (spin 0 is the most significant
// bit, 0 = down, 1 = up), followed by the modes with mode 0 slowest. A basis
// vector |s; n_0 ... n_{d-1}> therefore sits at
//   s * prod_j (cutoff_j + 1) + sum_j n_j * prod_{i>j} (cutoff_i + 1).

#include <optional>
#include <vector>

#include <Eigen/Eigenvalues>

#include "mmtomo/common.hpp"

namespace mmtomo {

inline constexpr int kDefaultGuardLevels = 16;
inline constexpr double kDefaultLeakTolerance = 1e-6;
inline constexpr std::int64_t kMaxStateDimension = std::int64_t{1} << 22;
inline constexpr std::int64_t kMaxOperatorDimension = 4096;

struct HilbertConfig {
  std::vector<int> cutoffs;  ///< highest Fock level kept, per mode
  int num_spins = 0;
  /// Extra levels appended above the cutoff when a propagator is
  /// exponentiated. They never hold state amplitude.
  int guard_levels = kDefaultGuardLevels;

  static HilbertConfig uniform(int num_modes, int cutoff, int num_spins = 0,
                               int guard_levels = kDefaultGuardLevels);

  int num_modes() const { return static_cast<int>(cutoffs.size()); }
  int levels(int mode) const { return cutoffs.at(mode) + 1; }
  int padded_levels(int mode) const { return levels(mode) + guard_levels; }
  std::int64_t spin_dimension() const { return std::int64_t{1} << num_spins; }
  std::int64_t mode_dimension() const;
  std::int64_t dimension() const { return spin_dimension() * mode_dimension(); }
  IndexBox mode_box() const;

  /// Same config with the spins removed.
  HilbertConfig motional() const;
  HilbertConfig with_spins(int spins) const;
  HilbertConfig with_cutoffs(std::vector<int> new_cutoffs) const;

  /// Throws ConfigError on an invalid or oversized config.
  void validate() const;

  bool same_space(const HilbertConfig& other) const {
    return cutoffs == other.cutoffs && num_spins == other.num_spins;
  }
};

struct PureState {
  HilbertConfig config;
  CVector amplitudes;

  static PureState vacuum(const HilbertConfig& config);
  /// Basis state; spin_bits uses spin 0 as the most significant bit.
  static PureState basis(const HilbertConfig& config, std::uint64_t spin_bits,
                         const MultiIndex& fock);

  std::int64_t index(std::uint64_t spin_bits, const MultiIndex& fock) const;
  Complex amplitude(std::uint64_t spin_bits, const MultiIndex& fock) const {
    return amplitudes(index(spin_bits, fock));
  }
  Real norm() const { return amplitudes.norm(); }
  void normalize();
  /// Throws ConfigError when |norm - 1| > tol.
  void check_normalized(double tol = 1e-9) const;
};

/// Density matrix over the motional product basis (spins traced out).
struct DensityMatrix {
  HilbertConfig config;  ///< num_spins is always 0
  CMatrix matrix;

  static DensityMatrix from_pure(const PureState& motional);
  /// Builds from a raw matrix; throws DimensionMismatch if sizes differ.
  static DensityMatrix from_matrix(const HilbertConfig& config, CMatrix matrix);

  Real trace() const { return matrix.trace().real(); }
  Real hermiticity_defect() const;
  /// Fock-basis populations (the diagonal).
  RVector populations() const { return matrix.diagonal().real(); }
  /// Throws ConfigError unless Hermitian and trace one within tol.
  void check_physical(double tol = 1e-9) const;
};

struct ModeOperator {
  enum class Kind { Lower, Raise, Number, Displacement };
  Kind kind = Kind::Lower;
  int mode = 0;
  Complex alpha{0.0, 0.0};

  static ModeOperator lower(int mode) { return {Kind::Lower, mode, {}}; }
  static ModeOperator raise(int mode) { return {Kind::Raise, mode, {}}; }
  static ModeOperator number(int mode) { return {Kind::Number, mode, {}}; }
  static ModeOperator displacement(int mode, Complex alpha) {
    return {Kind::Displacement, mode, alpha};
  }
};

/// Annihilation operator on `levels` Fock levels.
CMatrix lowering_matrix(int levels);

/// exp(-i H) for a Hermitian generator, via its eigendecomposition.
template <typename Derived>
CMatrixT<typename Derived::RealScalar> unitary_from_generator(
    const Eigen::MatrixBase<Derived>& hermitian) {
  using RealT = typename Derived::RealScalar;
  using CMat = CMatrixT<RealT>;
  Eigen::SelfAdjointEigenSolver<CMat> eig(hermitian.derived());
  const auto phases =
      eig.eigenvalues()
          .unaryExpr([](RealT v) { return std::polar(RealT(1), -v); })
          .eval();
  return eig.eigenvectors() * phases.asDiagonal() * eig.eigenvectors().adjoint();
}

/// D(alpha) = exp(alpha a^dag - alpha^* a) exponentiated on levels + guard
/// levels and restricted to the leading `levels` block.
CMatrix displacement_matrix(Complex alpha, int levels, int guard_levels);

/// Dense matrix of `op` on the full product space of `config` (identity on
/// spins and the other modes).
CMatrix build_operator(const ModeOperator& op, const HilbertConfig& config,
                       std::int64_t max_dimension = kMaxOperatorDimension);

struct DisplacedPopulations {
  RVector values;   ///< Q over config.mode_box(), flattened
  double leaked;    ///< trace minus the sum of values
};

/// Q_k = <k| D^dag rho D |k>, D = prod_j D_j(alphas[j]).
DisplacedPopulations displaced_populations_with_leak(
    const DensityMatrix& rho, const std::vector<Complex>& alphas,
    double leak_tolerance = kDefaultLeakTolerance);
RVector displaced_populations(const DensityMatrix& rho,
                              const std::vector<Complex>& alphas,
                              double leak_tolerance = kDefaultLeakTolerance);

/// <psi| rho |psi>; the target must be motional (no spins).
Real fidelity(const DensityMatrix& rho, const PureState& target);

/// Half the sum of |eigenvalues| of (a - b) for Hermitian a, b.
template <typename DerivedA, typename DerivedB>
typename DerivedA::RealScalar trace_distance(const Eigen::MatrixBase<DerivedA>& a,
                                             const Eigen::MatrixBase<DerivedB>& b) {
  using RealT = typename DerivedA::RealScalar;
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw DimensionMismatch("trace_distance: matrix sizes differ");
  const CMatrixT<RealT> diff = a - b;
  Eigen::SelfAdjointEigenSolver<CMatrixT<RealT>> eig(diff, Eigen::EigenvaluesOnly);
  return eig.eigenvalues().cwiseAbs().sum() / RealT(2);
}

Real trace_distance(const DensityMatrix& a, const DensityMatrix& b);

/// Partial trace over all spins.
DensityMatrix trace_out_spins(const PureState& state);

/// Motional factor of a state whose spins are all down; throws ConfigError
/// if the all-down sector holds less than 1 - tol of the population.
PureState motional_part(const PureState& state, double tol = 1e-9);

/// Tensors a motional state with num_spins spins, all down.
PureState with_spins_down(const PureState& motional, int num_spins);

/// Re-expresses a state on new cutoffs. Enlarging pads with zeros;
/// shrinking throws TruncationLeak if more than tol population is dropped.
PureState resize(const PureState& state, const std::vector<int>& cutoffs,
                 double tol = 1e-12);
DensityMatrix resize(const DensityMatrix& rho, const std::vector<int>& cutoffs,
                     double tol = 1e-12);

/// Coherent state |alpha> on one mode with the given cutoff (normalized
/// after truncation).
PureState coherent_state(Complex alpha, int cutoff);

/// Tensor product of motional states (mode order preserved).
PureState tensor(const PureState& a, const PureState& b);

}  // namespace mmtomo

#endif  // MMTOMO_FOCKSPACE_HPP
