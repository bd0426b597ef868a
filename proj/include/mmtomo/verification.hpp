#ifndef MMTOMO_VERIFICATION_HPP
#define MMTOMO_VERIFICATION_HPP

// Protocol-level checks simulated end to end with the pulse dynamics:
// the two-mode parity/phase scan that exposes a single-phonon coherence,
// and the spin-phase calibration of the spin-dependent push.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "mmtomo/dynamics.hpp"

namespace mmtomo {

struct PhaseScanOptions {
  std::vector<double> phi1;  ///< empty: 8 points over [0, 2 pi)
  std::vector<double> phi2;  ///< empty: 8 points over [0, 2 pi)
  std::optional<std::int64_t> shots = 400;
  std::uint64_t seed = 0;
  double sideband_rabi = 2.0 * kPi * 10e3;
  double off_manifold_warning = 1e-3;
  double off_manifold_limit = 0.2;
};

struct PhaseScanResult {
  int mode_i = 0;
  int mode_j = 1;
  std::vector<double> phi1;
  std::vector<double> phi2;
  RMatrix p_down;  ///< rows follow phi1, columns phi2
  std::optional<std::int64_t> shots;
  std::uint64_t seed = 0;

  // P_down = offset + amplitude cos(phi1 + phi2 + phase)
  double offset = 0.0;
  double amplitude = 0.0;  ///< >= 0
  double phase = 0.0;
  double offset_sigma = 0.0;
  double amplitude_sigma = 0.0;
  double phase_sigma = 0.0;
  double residual_rms = 0.0;
  double chi2 = 0.0;
  int dof = 0;
  double off_manifold_population = 0.0;
  std::vector<std::string> warnings;
};

/// Carrier pi, then BSB on mode i (pi, phase -phi1), then BSB on mode j
/// (pi/2, phase phi2), read out on a single ion coupled to every mode. For a
/// state on the single-phonon manifold
///   P_down = (P_i + P_j)/2 + |rho_ij| cos(phi1 + phi2 + arg rho_ij),
/// where P_i is the population of the state with one phonon in mode i.
/// Throws ConfigError when more than off_manifold_limit of the population
/// sits outside that manifold.
PhaseScanResult parity_phase_scan(const DensityMatrix& rho, int mode_i, int mode_j,
                                  const PhaseScanOptions& options = {});
PhaseScanResult parity_phase_scan(const PureState& state, int mode_i, int mode_j,
                                  const PhaseScanOptions& options = {});

/// |<1_i| rho |1_j>| read directly from the state (the scan's estimand).
double single_phonon_coherence(const DensityMatrix& rho, int mode_i, int mode_j);

struct SpinPhaseOptions {
  std::vector<double> phi_b;  ///< empty: 36 points over [0, 2 pi)
  double push = 1.0;          ///< |alpha| of the spin-dependent push
  int cutoff = 14;
  std::optional<std::int64_t> shots = 400;
  std::uint64_t seed = 0;
  bool two_tone = true;  ///< integrate the red + blue drive directly
};

struct SpinPhaseCalibration {
  double offset_true = 0.0;
  std::vector<double> phi_b;
  RVector p_up;
  std::optional<std::int64_t> shots;
  std::uint64_t seed = 0;
  double phi_b_min = 0.0;  ///< in [0, 2 pi)
  double phi_s = 0.0;      ///< phi_b_min / 2 with phi_r = 0
  double phi_b_sigma = 0.0;
  double amplitude = 0.0;  ///< first-harmonic amplitude of P_up
  double amplitude_sigma = 0.0;
};

/// Simulates R_C(pi/2, 0), a spin-dependent push with phi_r = 0 and scanned
/// phi_b, and R_C(-pi/2, 0) on one ion and one mode with the given hardware
/// phase offset. P_up vanishes when the effective spin phase is zero, which
/// happens at phi_b = 2 * offset. Throws NumericalError when the harmonic is
/// not resolved (amplitude below 3 sigma).
SpinPhaseCalibration calibrate_spin_phase(double offset_true, const SpinPhaseOptions& options = {});

/// Uniform grid of n points over [0, 2 pi).
std::vector<double> uniform_phase_grid(int n);

}  // namespace mmtomo

#endif  // MMTOMO_VERIFICATION_HPP
