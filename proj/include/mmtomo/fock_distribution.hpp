#ifndef MMTOMO_FOCK_DISTRIBUTION_HPP
#define MMTOMO_FOCK_DISTRIBUTION_HPP

#include <string>
#include <vector>

#include "mmtomo/fockspace.hpp"

namespace mmtomo {

struct FitDiagnostics {
  double condition_number = 0.0;  ///< of the unweighted design matrix
  double chi2 = 0.0;              ///< weighted residual sum of squares
  int dof = 0;
  double residual_rms = 0.0;      ///< unweighted
  bool poor_fit = false;          ///< residual inconsistent with the noise model
  std::vector<std::string> warnings;

  double reduced_chi2() const { return dof > 0 ? chi2 / dof : 0.0; }
};

/// Joint Fock populations P_{k_1..k_d} with their covariance.
struct FockDistribution {
  IndexBox box;         ///< k_j in [0, extent_j)
  RVector values;       ///< flattened over box
  RMatrix covariance;   ///< over the flattened index; empty when unknown
  std::vector<MultiIndex> support;  ///< fitted indices; empty means the full box
  std::string label;
  FitDiagnostics diagnostics;

  static FockDistribution zeros(int num_modes, int k_max);
  /// Diagonal of rho (the exact Fock populations).
  static FockDistribution from_density(const DensityMatrix& rho);
  /// Thermal product distribution, one n-bar per mode.
  static FockDistribution thermal(const std::vector<double>& nbar, int k_max);
  /// Coherent-state (Poisson) product distribution.
  static FockDistribution poisson(const std::vector<double>& magnitudes, int k_max);

  int num_modes() const { return box.rank(); }
  double operator()(const MultiIndex& k) const { return values(box.flatten(k)); }
  double sigma(const MultiIndex& k) const;
  double total() const { return values.sum(); }
  /// Standard deviation of the total, from the covariance.
  double total_sigma() const;
  bool has_covariance() const { return covariance.size() != 0; }
};

/// Thermal occupation p_n = nbar^n / (1 + nbar)^(n+1).
double thermal_probability(double nbar, int n);
/// Poisson occupation e^{-|a|^2} |a|^{2n} / n!.
double poisson_probability(double magnitude, int n);

}  // namespace mmtomo

#endif  // MMTOMO_FOCK_DISTRIBUTION_HPP
