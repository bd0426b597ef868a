#ifndef MMTOMO_CLI_HPP
#define MMTOMO_CLI_HPP

// Pipeline orchestration behind the `mmtomo` executable: the configuration
// schema, the end-to-end simulation helpers shared with the tests, and the
// five subcommands.

#include <iosfwd>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "mmtomo/io.hpp"

namespace mmtomo {

// ---------------------------------------------------------------------------
// Simulation pipeline

/// D(alphas) rho D(alphas)^dag on modes truncated at `cutoff`. Throws
/// TruncationLeak when more than `leak_tolerance` leaves the truncated space;
/// the result is renormalized otherwise.
DensityMatrix displace(const DensityMatrix& rho, const std::vector<Complex>& alphas, int cutoff,
                       double leak_tolerance = kDefaultLeakTolerance);
PureState displace(const PureState& state, const std::vector<Complex>& alphas, int cutoff,
                   double leak_tolerance = kDefaultLeakTolerance);

struct GridScan {
  MultiIndex p;
  TimeScanData scan;
};

/// One sideband scan per grid setting. Setting p is measured on
/// D(-alpha_p) rho D(-alpha_p)^dag, so the fitted populations are
/// Q_k(alpha_p). Setting number f (flattened order) uses the seed
/// derive_seed(options.seed, f).
std::vector<GridScan> simulate_grid_scans(const DensityMatrix& rho, const DisplacementGrid& grid,
                                          const RabiCalibration& readout, const std::vector<double>& times,
                                          const SampleOptions& options, int cutoff);

/// Fits every grid scan over the k_max box and assembles the Q dataset.
QDataset fit_grid_scans(const std::vector<GridScan>& scans, const DisplacementGrid& grid, int k_max,
                        const FitOptions& options = {});

// ---------------------------------------------------------------------------
// Configuration

struct StateSettings {
  std::optional<NamedState> named;
  std::optional<PulseSequence> sequence;
  int cutoff = 0;        ///< for named states; 0 picks the library default
  bool dephase = false;  ///< drop every coherence of the prepared state
};

struct ScanSettings {
  std::vector<double> times;  ///< seconds; empty means a uniform grid
  int points = 60;
  double span_periods = 1.0;
  std::optional<std::int64_t> shots = 100;
  std::uint64_t seed = 0;
  std::optional<double> coherence_time;
  double misassignment = 0.0;
};

struct FitSettings {
  int k_max = 1;
  bool all_down_only = false;
  bool nonnegative = false;
  bool simplex = false;
  /// Explicit Fock indices to fit; empty means the full k_max box.
  std::vector<MultiIndex> subset;
  /// Alternatively, every index within `radius` of these centres.
  std::vector<MultiIndex> neighborhood;
  int radius = 1;
  /// Scan files relative to the config file; empty means <out>/scan.json.
  std::vector<std::string> scan_files;
};

struct ReconstructionSettings {
  DisplacementGrid grid;
  int k_max = 3;
  /// "simulate": grid scans from `simulate`, fitted by `fit`.
  /// "exact": Q computed directly from the prepared state.
  std::string source = "simulate";
  /// Q manifest relative to the config file; empty means <out>/q_manifest.json.
  std::string manifest;
  /// Fock cutoff used to hold the displaced state during simulation.
  int simulation_cutoff = 12;
};

struct VerifySettings {
  std::vector<std::pair<int, int>> pairs;  ///< empty: every pair of modes
  int phi_points = 8;
  std::optional<std::int64_t> shots = 400;
};

struct ThermalSettings {
  double nbar = 0.03;
  int points = 800;
  double span_periods = 2.5;
  std::optional<std::int64_t> shots = 400;
};

struct CalibrateSettings {
  double offset_deg = 55.0;  ///< injected hardware spin-phase offset
  double push = 1.0;
  int points = 36;
  int cutoff = 14;
  std::optional<std::int64_t> shots = 400;
  bool two_tone = true;
  std::optional<ThermalSettings> thermal;
};

struct PipelineConfig {
  std::string experiment = "experiment";
  /// Rates for state preparation on a single ion coupled to every mode.
  double sideband_rabi = 2.0 * kPi * 10e3;
  double carrier_rabi = 2.0 * kPi * 100e3;
  double spin_phase_offset = 0.0;
  /// Readout rates Omega_j (rad/s), ion j on mode j.
  std::vector<double> readout_rates;
  StateSettings state;
  ScanSettings scan;
  std::optional<FitSettings> fit;
  std::optional<ReconstructionSettings> reconstruction;
  std::optional<VerifySettings> verify;
  std::optional<CalibrateSettings> calibrate;
  /// Directory holding the config file; relative paths resolve against it.
  std::string base_dir = ".";

  int num_modes() const;
  /// Throws ConfigError on schema violations (missing state, mismatched
  /// mode counts, k_max < n_max, missing referenced files, ...).
  void validate() const;
};

void to_json(Json& j, const PipelineConfig& v);
void from_json(const Json& j, PipelineConfig& v);

/// Reads and validates a config file.
PipelineConfig load_config(const std::string& path);

/// Motional state described by the config (prepared by pulse dynamics).
DensityMatrix prepare_state(const PipelineConfig& config);

// ---------------------------------------------------------------------------
// Commands

enum class OutputFormat { Json, Csv, Both };

OutputFormat parse_output_format(const std::string& name);

struct RunOptions {
  std::string config_path;
  std::optional<std::uint64_t> seed;  ///< overrides every seed in the config
  std::string out_dir = "out";
  OutputFormat format = OutputFormat::Both;
};

/// Exit codes of the executable.
inline constexpr int kExitOk = 0;
inline constexpr int kExitConfigError = 2;
inline constexpr int kExitNumericalError = 3;

/// Runs one subcommand (simulate, fit, reconstruct, verify, calibrate).
/// Progress goes to `log`, errors to `err`; returns the exit code.
int run_command(const std::string& command, const RunOptions& options, std::ostream& log, std::ostream& err);

}  // namespace mmtomo

#endif  // MMTOMO_CLI_HPP
