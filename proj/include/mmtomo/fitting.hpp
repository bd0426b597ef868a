#ifndef MMTOMO_FITTING_HPP
#define MMTOMO_FITTING_HPP

// Fock-distribution extraction from joint-spin time scans by linear least
// squares on the product-of-Rabi-factors basis, plus the two one-parameter
// calibration fits (thermal n-bar, coherent |alpha|).

#include <cstdint>
#include <optional>
#include <vector>

#include "mmtomo/fock_distribution.hpp"
#include "mmtomo/measurement.hpp"

namespace mmtomo {

struct FitOptions {
  /// Use only the all-down column (the classic single-curve fit).
  bool all_down_only = false;
  /// Active-set non-negativity; covariance then comes from a bootstrap.
  bool nonnegative = false;
  /// Constrain the populations to sum to one.
  bool simplex = false;
  int bootstrap_resamples = 200;
  std::uint64_t seed = 0;
  /// Warn (overfitting risk) above this design-matrix condition number.
  double condition_warning = 1e6;
  /// Singular values below this fraction of the largest mean rank deficiency.
  double rank_tolerance = 1e-10;
  /// Known motional coherence time (seconds). The design columns then carry
  /// the same exponential envelope as apply_decoherence, which keeps the
  /// model linear provided the populations sum to one.
  std::optional<double> coherence_time;
  /// Reduced chi^2 above which a noisy fit is flagged as poor.
  double poor_fit_chi2 = 3.0;
  /// RMS residual above which a fit to exact data is flagged as poor.
  double poor_fit_rms = 1e-6;
};

/// Fits P over the full box k_j in [0, k_max].
FockDistribution fit_fock_distribution(const TimeScanData& scan, int k_max,
                                       const FitOptions& options = {});

/// Fits only the listed Fock indices; every other entry is fixed to zero.
/// The returned tensor spans k_j in [0, max index in the subset].
FockDistribution fit_fock_distribution_restricted(const TimeScanData& scan,
                                                  const std::vector<MultiIndex>& subset,
                                                  const FitOptions& options = {});

/// All indices within `radius` phonons (L1 distance) of any centre.
std::vector<MultiIndex> neighborhood_subset(const std::vector<MultiIndex>& centres,
                                            int radius = 1);

/// Condition number of the (unweighted) design matrix for k_max.
double design_condition_number(const TimeScanData& scan, int k_max, bool all_down_only = false);


struct ScalarFit {
  double value = 0.0;
  double sigma = 0.0;
  double chi2 = 0.0;
  int dof = 0;
};

/// One-parameter fit of the single-ion sideband curve to a thermal
/// distribution.
ScalarFit fit_thermal_nbar(const TimeScanData& scan, double max_nbar = 5.0);

/// One-parameter fit of the single-ion sideband curve to a coherent state;
/// returns |alpha| (the phase is not observable).
ScalarFit fit_coherent_alpha(const TimeScanData& scan, double max_alpha = 3.0);

}  // namespace mmtomo

#endif  // MMTOMO_FITTING_HPP
