#ifndef MMTOMO_MEASUREMENT_HPP
#define MMTOMO_MEASUREMENT_HPP

// Joint spin-configuration time scans under the d-mode blue sideband drive
// (ion j drives mode j with rate Omega_j for a common duration t).
//
// Configuration s is a d-bit word with ion 0 as the most significant bit
// (0 = down, 1 = up), so columns are ordered dd..d, ..., uu..u. For a Fock
// distribution P the expected population of s is
//   sum_k P_k prod_j f_{s_j}(k_j, t),
//   f_down = cos^2(sqrt(k+1) Omega_j t),  f_up = sin^2(sqrt(k+1) Omega_j t).

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "mmtomo/dynamics.hpp"
#include "mmtomo/fock_distribution.hpp"

namespace mmtomo {

using SpinConfig = std::uint32_t;

/// "dd", "du", ... for a d-ion configuration.
std::string config_label(SpinConfig s, int num_ions);
SpinConfig parse_config_label(const std::string& label);

struct TimeScanData {
  std::vector<double> times;        ///< seconds
  RMatrix populations;              ///< rows = times, cols = 2^d configs
  std::optional<std::int64_t> shots;  ///< empty = exact expectation values
  RabiCalibration calibration;
  std::string label;
  std::uint64_t seed = 0;

  int num_modes() const;
  int num_configs() const { return static_cast<int>(populations.cols()); }
  /// Throws ConfigError on inconsistent shapes or populations off the simplex.
  void validate() const;
};

/// Basis function f_{s}(k, t) for one ion.
double sideband_factor(bool up, int k, double rabi, double t);

TimeScanData analytic_scan(const FockDistribution& p, const RabiCalibration& calib,
                           const std::vector<double>& times);

struct SampleOptions {
  std::optional<std::int64_t> shots = 100;  ///< empty: exact probabilities
  std::uint64_t seed = 0;
  double misassignment = 0.0;  ///< symmetric per-ion readout flip probability
  std::optional<double> coherence_time;  ///< seconds; empty = no envelope
  double leak_tolerance = kDefaultLeakTolerance;
  std::string label;
};

/// Full unitary simulation of the d-mode sideband drive on each eigenvector
/// of rho (spins prepared down), exact joint-spin probabilities, then an
/// optional multinomial draw per time point. Deterministic for a fixed seed
/// regardless of thread count.
TimeScanData sample_scan(const DensityMatrix& rho, const RabiCalibration& calib,
                         const std::vector<double>& times, const SampleOptions& options);
TimeScanData sample_scan(const PureState& state, const RabiCalibration& calib,
                         const std::vector<double>& times, const SampleOptions& options);

/// Phenomenological motional dephasing: each population relaxes toward the
/// dephased value 2^-d as p -> 2^-d + (p - 2^-d) exp(-t / tau). The
/// functional form is a modeling choice.
TimeScanData apply_decoherence(const TimeScanData& scan, double tau);

/// Uniform grid of `points` times over [0, span_periods * 2 pi / Omega_min].
std::vector<double> default_time_grid(const std::vector<double>& rates, int points = 60,
                                      double span_periods = 1.0);

/// Multinomial draw of `shots` outcomes from `probabilities` using a
/// generator seeded by (seed, counter). Returns frequencies.
RVector sample_frequencies(const RVector& probabilities, std::int64_t shots, std::uint64_t seed,
                           std::uint64_t counter);

}  // namespace mmtomo

#endif  // MMTOMO_MEASUREMENT_HPP
