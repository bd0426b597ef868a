#include "mmtomo/verification.hpp"

#include <cmath>

#include "mmtomo/measurement.hpp"

namespace mmtomo {

std::vector<double> uniform_phase_grid(int n) {
  if (n < 3) throw ConfigError("phase grid needs at least 3 points");
  std::vector<double> g(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) g[static_cast<std::size_t>(i)] = 2.0 * kPi * i / n;
  return g;
}

namespace {

struct HarmonicFit {
  RVector coef;  // offset, cos, sin
  RMatrix cov;
  double chi2 = 0.0;
  double rms = 0.0;
  int dof = 0;
};

// Weighted fit of y = a + c cos(x) + s sin(x). Shot-noise weights come from
// the fitted curve (two passes); without shots the residual scale sets the
// covariance.
HarmonicFit fit_harmonic(const std::vector<double>& x, const RVector& y,
                         std::optional<std::int64_t> shots) {
  const Eigen::Index n = y.size();
  RMatrix X(n, 3);
  for (Eigen::Index r = 0; r < n; ++r) {
    X(r, 0) = 1.0;
    X(r, 1) = std::cos(x[static_cast<std::size_t>(r)]);
    X(r, 2) = std::sin(x[static_cast<std::size_t>(r)]);
  }
  RVector w = RVector::Ones(n);
  auto solve = [&]() {
    const RVector sw = w.cwiseSqrt();
    return RVector((sw.asDiagonal() * X).colPivHouseholderQr().solve(sw.asDiagonal() * y));
  };
  RVector coef = solve();
  if (shots) {
    const double N = static_cast<double>(*shots);
    const double lo = 0.5 / N;
    const RVector pred = X * coef;
    for (Eigen::Index r = 0; r < n; ++r) {
      const double p = std::clamp(pred(r), lo, 1.0 - lo);
      w(r) = N / (p * (1.0 - p));
    }
    coef = solve();
  }
  HarmonicFit fit;
  fit.coef = coef;
  const RVector res = y - X * coef;
  fit.chi2 = res.dot(w.asDiagonal() * res);
  fit.rms = std::sqrt(res.squaredNorm() / static_cast<double>(n));
  fit.dof = static_cast<int>(n) - 3;
  const RMatrix info = X.transpose() * w.asDiagonal() * X;
  fit.cov = info.inverse();
  if (!shots) fit.cov *= fit.dof > 0 ? res.squaredNorm() / fit.dof : 0.0;
  return fit;
}

double amplitude_sigma(double c, double s, const RMatrix& cov) {
  const double b = std::hypot(c, s);
  if (b == 0.0) return std::sqrt(0.5 * (cov(1, 1) + cov(2, 2)));
  const double var = (c * c * cov(1, 1) + s * s * cov(2, 2) + 2.0 * c * s * cov(1, 2)) / (b * b);
  return std::sqrt(std::max(0.0, var));
}

double angle_sigma(double c, double s, const RMatrix& cov) {
  const double b2 = c * c + s * s;
  if (b2 == 0.0) return kPi;
  const double var = (s * s * cov(1, 1) + c * c * cov(2, 2) - 2.0 * c * s * cov(1, 2)) / (b2 * b2);
  return std::sqrt(std::max(0.0, var));
}

double wrap_two_pi(double x) {
  x = std::fmod(x, 2.0 * kPi);
  return x < 0.0 ? x + 2.0 * kPi : x;
}

MultiIndex unit_index(int d, int mode) {
  MultiIndex k(static_cast<std::size_t>(d), 0);
  k[static_cast<std::size_t>(mode)] = 1;
  return k;
}

}  // namespace

double single_phonon_coherence(const DensityMatrix& rho, int mode_i, int mode_j) {
  const int d = rho.config.num_modes();
  if (mode_i < 0 || mode_j < 0 || mode_i >= d || mode_j >= d)
    throw ConfigError("single_phonon_coherence: mode index out of range");
  for (int m = 0; m < d; ++m)
    if (rho.config.cutoffs[static_cast<std::size_t>(m)] < 1)
      throw ConfigError("single_phonon_coherence: every mode needs cutoff >= 1");
  const IndexBox box = rho.config.mode_box();
  return std::abs(rho.matrix(box.flatten(unit_index(d, mode_i)), box.flatten(unit_index(d, mode_j))));
}

PhaseScanResult parity_phase_scan(const DensityMatrix& rho, int mode_i, int mode_j,
                                  const PhaseScanOptions& options) {
  const int d = rho.config.num_modes();
  if (d < 2) throw ConfigError("parity_phase_scan: needs at least two modes");
  if (mode_i == mode_j || mode_i < 0 || mode_j < 0 || mode_i >= d || mode_j >= d)
    throw ConfigError("parity_phase_scan: need two distinct valid modes");
  if (options.shots && *options.shots < 1) throw ConfigError("parity_phase_scan: shots must be >= 1");
  rho.check_physical(1e-8);

  PhaseScanResult out;
  out.mode_i = mode_i;
  out.mode_j = mode_j;
  out.phi1 = options.phi1.empty() ? uniform_phase_grid(8) : options.phi1;
  out.phi2 = options.phi2.empty() ? uniform_phase_grid(8) : options.phi2;
  out.shots = options.shots;
  out.seed = options.seed;

  // Population outside the single-phonon manifold.
  const IndexBox box = rho.config.mode_box();
  double on_manifold = 0.0;
  for (int m = 0; m < d; ++m)
    if (rho.config.cutoffs[static_cast<std::size_t>(m)] >= 1)
      on_manifold += rho.matrix(box.flatten(unit_index(d, m)), box.flatten(unit_index(d, m))).real();
  out.off_manifold_population = std::max(0.0, rho.trace() - on_manifold);
  if (out.off_manifold_population > options.off_manifold_limit)
    throw ConfigError("parity_phase_scan: " + std::to_string(out.off_manifold_population) +
                      " of the population lies outside the single-phonon manifold");
  if (out.off_manifold_population > options.off_manifold_warning)
    out.warnings.push_back("population " + std::to_string(out.off_manifold_population) +
                           " outside the single-phonon manifold biases the offset and amplitude");

  std::vector<int> cutoffs = rho.config.cutoffs;
  for (int& c : cutoffs) c = std::max(c, 1) + 1;
  const DensityMatrix embedded = resize(rho, cutoffs);
  Eigen::SelfAdjointEigenSolver<CMatrix> eig(embedded.matrix);
  std::vector<std::pair<double, PureState>> components;
  for (Eigen::Index c = 0; c < eig.eigenvalues().size(); ++c) {
    const double weight = eig.eigenvalues()(c);
    if (weight <= 1e-14) continue;
    components.emplace_back(weight, with_spins_down(PureState{embedded.config, eig.eigenvectors().col(c)}, 1));
  }

  const RabiCalibration calib =
      RabiCalibration::uniform(1, d, options.sideband_rabi, options.sideband_rabi);
  const std::int64_t n1 = static_cast<std::int64_t>(out.phi1.size());
  const std::int64_t n2 = static_cast<std::int64_t>(out.phi2.size());
  out.p_down = RMatrix::Zero(n1, n2);
  const std::int64_t block = embedded.config.mode_dimension();
  parallel_for(n1 * n2, [&](std::int64_t idx) {
    const std::int64_t a = idx / n2;
    const std::int64_t b = idx % n2;
    const std::vector<PulseOp> ops = {
        Carrier{kPi, 0.0, 0},
        BlueSideband{mode_i, kPi, -out.phi1[static_cast<std::size_t>(a)], 0},
        BlueSideband{mode_j, kPi / 2.0, out.phi2[static_cast<std::size_t>(b)], 0},
    };
    double p = 0.0;
    for (const auto& [weight, start] : components) {
      PureState s = start;
      for (const PulseOp& op : ops) s = evolve(s, op, calib);
      p += weight * s.amplitudes.head(block).squaredNorm();
    }
    p = std::clamp(p, 0.0, 1.0);
    if (options.shots) {
      RVector probs(2);
      probs << p, 1.0 - p;
      p = sample_frequencies(probs, *options.shots, options.seed, static_cast<std::uint64_t>(idx))(0);
    }
    out.p_down(a, b) = p;
  });

  std::vector<double> sums;
  RVector y(n1 * n2);
  for (std::int64_t a = 0; a < n1; ++a)
    for (std::int64_t b = 0; b < n2; ++b) {
      sums.push_back(out.phi1[static_cast<std::size_t>(a)] + out.phi2[static_cast<std::size_t>(b)]);
      y(a * n2 + b) = out.p_down(a, b);
    }
  const HarmonicFit fit = fit_harmonic(sums, y, options.shots);
  const double c = fit.coef(1);
  const double s = fit.coef(2);
  out.offset = fit.coef(0);
  out.amplitude = std::hypot(c, s);
  out.phase = std::atan2(-s, c);
  out.offset_sigma = std::sqrt(std::max(0.0, fit.cov(0, 0)));
  out.amplitude_sigma = amplitude_sigma(c, s, fit.cov);
  out.phase_sigma = angle_sigma(c, s, fit.cov);
  out.residual_rms = fit.rms;
  out.chi2 = fit.chi2;
  out.dof = fit.dof;
  return out;
}

PhaseScanResult parity_phase_scan(const PureState& state, int mode_i, int mode_j,
                                  const PhaseScanOptions& options) {
  if (state.config.num_spins != 0)
    throw ConfigError("parity_phase_scan: expects a motional state");
  return parity_phase_scan(DensityMatrix::from_pure(state), mode_i, mode_j, options);
}

SpinPhaseCalibration calibrate_spin_phase(double offset_true, const SpinPhaseOptions& options) {
  if (!(options.push > 0.0)) throw ConfigError("calibrate_spin_phase: push must be > 0");
  if (options.cutoff < 1) throw ConfigError("calibrate_spin_phase: cutoff must be >= 1");
  if (options.shots && *options.shots < 1) throw ConfigError("calibrate_spin_phase: shots must be >= 1");

  SpinPhaseCalibration out;
  out.offset_true = offset_true;
  out.phi_b = options.phi_b.empty() ? uniform_phase_grid(36) : options.phi_b;
  out.shots = options.shots;
  out.seed = options.seed;

  RabiCalibration calib = RabiCalibration::uniform(1, 1, 2.0 * kPi * 10e3, 2.0 * kPi * 100e3);
  calib.spin_phase_offset = offset_true;
  EvolveOptions evolve_opts;
  evolve_opts.two_tone_integration = options.two_tone;
  const HilbertConfig cfg = HilbertConfig::uniform(1, options.cutoff, 1);

  const std::int64_t n = static_cast<std::int64_t>(out.phi_b.size());
  out.p_up = RVector::Zero(n);
  const std::int64_t block = cfg.mode_dimension();
  parallel_for(n, [&](std::int64_t i) {
    const double phi_b = out.phi_b[static_cast<std::size_t>(i)];
    // With phi_r = 0: phi_s = phi_b / 2 and the motional phase phi_m = phi_b / 2.
    const double phi_s = 0.5 * phi_b;
    const Complex alpha = std::polar(options.push, 0.5 * phi_b - 0.5 * kPi);
    PureState s = PureState::vacuum(cfg);
    s = evolve(s, Carrier{kPi / 2.0, 0.0, 0}, calib, evolve_opts);
    s = evolve(s, SpinDepDisplace{0, alpha, phi_s, 0}, calib, evolve_opts);
    s = evolve(s, Carrier{kPi / 2.0, kPi, 0}, calib, evolve_opts);
    double p = std::clamp(s.amplitudes.tail(block).squaredNorm(), 0.0, 1.0);
    if (options.shots) {
      RVector probs(2);
      probs << p, 1.0 - p;
      p = sample_frequencies(probs, *options.shots, options.seed, static_cast<std::uint64_t>(i))(0);
    }
    out.p_up(i) = p;
  });

  const HarmonicFit fit = fit_harmonic(out.phi_b, out.p_up, options.shots);
  const double c = fit.coef(1);
  const double s = fit.coef(2);
  out.amplitude = std::hypot(c, s);
  out.amplitude_sigma = amplitude_sigma(c, s, fit.cov);
  const bool resolved = options.shots ? out.amplitude > 3.0 * out.amplitude_sigma : out.amplitude > 1e-9;
  if (!resolved)
    throw NumericalError("calibrate_spin_phase: no clear minimum in P_up (amplitude " +
                         std::to_string(out.amplitude) + "); increase the push amplitude");
  out.phi_b_min = wrap_two_pi(std::atan2(s, c) + kPi);
  out.phi_b_sigma = angle_sigma(c, s, fit.cov);
  out.phi_s = 0.5 * out.phi_b_min;
  return out;
}

}  // namespace mmtomo
