#ifndef MMTOMO_RECONSTRUCTION_HPP
#define MMTOMO_RECONSTRUCTION_HPP

// Multi-mode density-matrix reconstruction from displaced Fock populations.
//
// Each mode j is displaced along a circle of radius |alpha_j|:
//   alpha_{j,p} = |alpha_j| exp(i (pi p / N + phi_j)),  p = -N .. N-1,  N = n_max + 1,
// and the displaced populations Q_k(alpha) = <k| D(alpha)^dag rho D(alpha) |k>
// are measured for every setting tuple. The d-dimensional DFT
//   Q^(l)_k = (2N)^-d sum_p Q_k(alpha_p) exp(-i pi sum_j l_j p_j / N)
// satisfies
//   Q^(l)_k = sum_n prod_j gamma^(l_j)_{k_j n_j} rho'_{n, n+l},
// where rho' is rho rotated by the per-mode grid offsets phi_j, i.e.
//   rho_{m n} = exp(i sum_j phi_j (m_j - n_j)) rho'_{m n}.
// For each l the small real system Gamma x = Q^(l) is solved by
// pseudo-inverse and the elements are reassembled.
//
// The whole chain from the stacked Q data to rho_raw is linear, so the
// covariance of the real and imaginary parts is propagated exactly.

#include <map>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Eigenvalues>

#include "mmtomo/fock_distribution.hpp"
#include "mmtomo/fockspace.hpp"

namespace mmtomo {

struct DisplacementGrid {
  std::vector<double> magnitudes;      ///< |alpha_j| > 0, one per mode
  int n_max = 1;
  std::vector<double> phase_offsets;   ///< radians per mode; empty means zero

  int num_modes() const { return static_cast<int>(magnitudes.size()); }
  int N() const { return n_max + 1; }
  /// Box over settings; axis value q corresponds to p = q - N.
  IndexBox setting_box() const;
  /// All p-tuples (each p_j in [-N, N-1]) in flattened setting order.
  std::vector<MultiIndex> settings() const;
  double phase_offset(int mode) const;
  /// alpha_{j, p_j} for every mode.
  std::vector<Complex> alphas(const MultiIndex& p) const;
  /// Throws ConfigError for empty or non-positive magnitudes and bad n_max.
  void validate() const;
};

/// Displaced Fock populations for every grid setting.
struct QDataset {
  DisplacementGrid grid;
  int k_max = 3;
  std::map<MultiIndex, FockDistribution> points;  ///< keyed by p-tuple

  /// Throws ConfigError listing missing settings, or on inconsistent shapes.
  void validate() const;
};

/// Exact Q for every grid setting, computed with the Fock-space displacement
/// operators. Population displaced above k_max is dropped.
QDataset exact_qdataset(const DensityMatrix& rho, const DisplacementGrid& grid, int k_max);

/// gamma^(l)_{k n}(|alpha|), evaluated term by term in the log domain.
double gamma_coefficient(int k, int n, int l, double magnitude);

/// One DFT component Q^(l)_k over the k box.
struct DftComponent {
  MultiIndex l;
  CVector values;      ///< flattened over (k_max+1)^d
  RMatrix covariance;  ///< over [Re values; Im values]; empty when unknown
};

DftComponent dft_transform(const QDataset& q, const MultiIndex& l);

/// Raw (unprojected, untraced) estimate plus element uncertainties.
struct RawReconstruction {
  CMatrix rho;            ///< rho_{m n} over the n_max product basis
  RMatrix sigma_real;     ///< standard deviation of Re rho_{m n}
  RMatrix sigma_imag;
  double worst_condition = 0.0;  ///< largest condition number of any Gamma
};

/// Pseudo-inverse of the Gamma system for one l-tuple. Rows follow the k box,
/// columns list the n-tuples with 0 <= n_j, n_j + l_j <= n_max.
struct GammaSystem {
  MultiIndex l;
  std::vector<MultiIndex> unknowns;
  RMatrix gamma;
  RMatrix pseudo_inverse;
  double condition = 0.0;
};

/// Throws RankDeficient when Gamma loses rank (relative singular-value cutoff
/// 1e-10).
GammaSystem gamma_system(const DisplacementGrid& grid, const MultiIndex& l, int k_max);

/// Solves every component for its rho elements. `components` must hold every
/// l-tuple with |l_j| <= n_max. Phase offsets of the grid are undone here.
RawReconstruction invert_gamma(const std::vector<DftComponent>& components,
                               const DisplacementGrid& grid, int k_max);

/// (m + m^dag) / 2.
template <typename Derived>
CMatrixT<typename Derived::RealScalar> hermitize(const Eigen::MatrixBase<Derived>& m) {
  if (m.rows() != m.cols()) throw DimensionMismatch("hermitize: matrix is not square");
  using CMat = CMatrixT<typename Derived::RealScalar>;
  const CMat a = m;
  return (a + a.adjoint()) / typename Derived::RealScalar(2);
}

/// Eigenvalue clipping followed by trace renormalization. Before the
/// renormalization this is the Frobenius-nearest PSD matrix. If no
/// eigenvalue is positive the maximally mixed state is returned.
template <typename Derived>
CMatrixT<typename Derived::RealScalar> project_psd(const Eigen::MatrixBase<Derived>& m) {
  using RealT = typename Derived::RealScalar;
  using CMat = CMatrixT<RealT>;
  const CMat h = hermitize(m);
  Eigen::SelfAdjointEigenSolver<CMat> eig(h);
  auto lambda = eig.eigenvalues().cwiseMax(RealT(0)).eval();
  const RealT total = lambda.sum();
  if (!(total > RealT(0))) return CMat::Identity(h.rows(), h.cols()) / RealT(h.rows());
  lambda /= total;
  CMat out = eig.eigenvectors() * lambda.template cast<std::complex<RealT>>().asDiagonal() *
             eig.eigenvectors().adjoint();
  return hermitize(out);
}

DensityMatrix project_psd(const DensityMatrix& rho);

struct ReconstructedState {
  CMatrix rho_raw;          ///< Hermitized, trace not renormalized
  DensityMatrix rho_psd;
  /// Covariance over [Re rho_raw (row-major); Im rho_raw (row-major)].
  RMatrix covariance;
  RMatrix sigma_real;
  RMatrix sigma_imag;
  std::optional<double> fidelity_raw;   ///< <psi| rho_raw |psi>
  std::optional<double> fidelity_psd;
  double trace_distance_raw_psd = 0.0;
  double min_eigenvalue = 0.0;  ///< of rho_raw
  double trace = 0.0;           ///< of rho_raw
  double gamma_condition = 0.0;
  std::vector<std::string> warnings;
};

/// Full chain: DFT over all l, Gamma inversion, hermitize, PSD projection,
/// and diagnostics against an optional motional target on the n_max space.
ReconstructedState reconstruct(const QDataset& q,
                               const std::optional<PureState>& target = std::nullopt);

/// Every l-tuple with |l_j| <= n_max, in lexicographic order.
std::vector<MultiIndex> all_l_tuples(int num_modes, int n_max);

}  // namespace mmtomo

#endif  // MMTOMO_RECONSTRUCTION_HPP
