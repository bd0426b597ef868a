#ifndef MMTOMO_DYNAMICS_HPP
#define MMTOMO_DYNAMICS_HPP

// Interaction-picture pulse dynamics on spin (x) multi-mode Fock space.
//
// Conventions, fixed for the whole toolkit (sigma_+ = |up><down|):
//   blue sideband  H = i Omega (sigma_+ a^dag e^{i phi} - sigma_- a e^{-i phi})
//   red sideband   H = i Omega (sigma_+ a e^{i phi} - sigma_- a^dag e^{-i phi})
// A sideband pulse of Rabi angle theta runs for Omega t = theta / 2, so
//   BSB(theta, phi) |down, n> = cos(sqrt(n+1) theta/2) |down, n>
//                              + e^{i phi} sin(sqrt(n+1) theta/2) |up, n+1>.
//   RSB(theta, phi) |up, n>   = cos(sqrt(n+1) theta/2) |up, n>
//                              - e^{-i phi} sin(sqrt(n+1) theta/2) |down, n+1>.
// Carrier rotations use the |+i> phase reference:
//   R_C(theta, phi) = exp(i theta/2 (sigma_+ e^{i phi} + sigma_- e^{-i phi})),
// so R_C(pi/2, 0)|down> = (|down> + i|up>)/sqrt(2) = |+i>.
// The final carrier pi pulse of a sequence uses phi = 0; it contributes only
// a global phase i.
//
// A spin-dependent push with spin phase phi_s applies
//   U = exp(S (x) (alpha a^dag - alpha^* a)),  S = i(e^{i phi_s} sigma_+ - e^{-i phi_s} sigma_-),
// i.e. D(alpha) on the S = +1 eigenstate and D(-alpha) on S = -1. For
// phi_s = 0 the +1 eigenstate is |+i>. The equivalent two-tone drive has
// Omega t = |alpha|, phi_m = arg(alpha) + pi/2, phi_b = phi_s + phi_m and
// phi_r = phi_s - phi_m. RabiCalibration::spin_phase_offset is subtracted
// from phi_s to mimic a hardware phase offset between one- and two-tone
// outputs.

#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "mmtomo/fockspace.hpp"

namespace mmtomo {

struct RabiCalibration {
  RMatrix sideband;  ///< rad/s, rows = spins, cols = modes; 0 = no coupling
  RVector carrier;   ///< rad/s per spin
  double spin_phase_offset = 0.0;

  /// Every spin couples to every mode with the same rate.
  static RabiCalibration uniform(int num_spins, int num_modes, double sideband_rabi,
                                 double carrier_rabi = 0.0);
  /// d ions, ion j drives mode j with rate rates[j] (the d-mode BSB layout).
  static RabiCalibration diagonal(const std::vector<double>& rates);

  double sideband_rabi(int spin, int mode) const;
  /// Omega_j for the d-mode BSB readout (ion j on mode j).
  std::vector<double> readout_rates(int num_modes) const;
};

struct Carrier {
  double angle = 0.0;
  double phase = 0.0;
  int spin = 0;
};

struct BlueSideband {
  int mode = 0;
  double angle = 0.0;
  double phase = 0.0;
  int spin = 0;
};

struct RedSideband {
  int mode = 0;
  double angle = 0.0;
  double phase = 0.0;
  int spin = 0;
};

struct SpinDepDisplace {
  int mode = 0;
  Complex alpha{0.0, 0.0};
  double spin_phase = 0.0;
  int spin = 0;
};

using PulseOp = std::variant<Carrier, BlueSideband, RedSideband, SpinDepDisplace>;

std::string describe(const PulseOp& op);

struct EvolveOptions {
  double leak_tolerance = kDefaultLeakTolerance;
  /// Realize SpinDepDisplace by exponentiating the simultaneous red + blue
  /// sideband Hamiltonian instead of the conditioned displacement.
  bool two_tone_integration = false;
};

/// Propagator of a single (spin, mode) pair on padded Fock levels,
/// exp(-i theta G) for a fixed Hermitian G. Caches the eigendecomposition so
/// that many pulse areas can be evaluated cheaply.
class PairPropagator {
 public:
  static PairPropagator blue_sideband(int padded_levels, double phase);
  static PairPropagator red_sideband(int padded_levels, double phase);

  /// Unitary on (spin, n) ordered spin-major for the given Rabi angle.
  CMatrix at(double angle) const;
  int padded_levels() const { return padded_levels_; }

 private:
  PairPropagator(int padded_levels, const CMatrix& generator);
  int padded_levels_ = 0;
  CMatrix vectors_;
  RVector values_;
};

/// Applies a unitary acting on (spin, mode) given on padded levels; checks
/// the population pushed above the cutoff, then truncates and renormalizes.
/// Returns the leaked population.
double apply_pair_unitary(PureState& state, int spin, int mode, const CMatrix& unitary,
                          double leak_tolerance, const char* where);

PureState evolve(const PureState& state, const PulseOp& op, const RabiCalibration& calib,
                 const EvolveOptions& options = {});

struct PulseSequence {
  HilbertConfig config;            ///< used when `initial` is empty
  std::optional<PureState> initial;  ///< default: spins down, modes in vacuum
  std::vector<PulseOp> ops;
};

PureState run_sequence(const PulseSequence& seq, const RabiCalibration& calib,
                       const EvolveOptions& options = {});

// Named target states. Each produces spin down times the motional state
//   bell_00_11(phi):        (|00> + e^{i phi}|11>)/sqrt(2)
//   bell_01_10(phi):        (|01> + e^{i phi}|10>)/sqrt(2)
//   coherent_product(a, b): |a>|b>
//   w_state(p1, p2, p3):    (e^{i p1}|100> + e^{i p2}|010> + e^{i p3}|001>)/sqrt(3)
// up to a global phase.
struct Bell00_11 {
  double phi = 0.0;
};
struct Bell01_10 {
  double phi = 0.0;
};
struct CoherentProduct {
  std::vector<Complex> alphas;
};
struct WState {
  double phi1 = 0.0, phi2 = 0.0, phi3 = 0.0;
};
using NamedState = std::variant<Bell00_11, Bell01_10, CoherentProduct, WState>;

std::string state_name(const NamedState& state);

/// Rabi angle of the first W-state pulse: transfers exactly 1/3 of the
/// population, 2 asin(1/sqrt(3)).
double w_state_first_angle();

/// Pulse sequence that prepares the named state with a single ion (spin 0).
/// cutoff <= 0 picks a default that keeps truncation leaks below 1e-12.
PulseSequence named_sequence(const NamedState& state, int cutoff = 0);

PureState prepare_named_state(const NamedState& state, const RabiCalibration& calib,
                              int cutoff = 0, const EvolveOptions& options = {});

/// The ideal motional state the named sequence should produce.
PureState analytic_named_state(const NamedState& state, int cutoff = 0);

}  // namespace mmtomo

#endif  // MMTOMO_DYNAMICS_HPP
