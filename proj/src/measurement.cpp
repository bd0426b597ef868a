#include "mmtomo/measurement.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <random>

namespace mmtomo {

namespace {

int log2_exact(Eigen::Index n) {
  int d = 0;
  while ((Eigen::Index{1} << d) < n) ++d;
  if ((Eigen::Index{1} << d) != n) return -1;
  return d;
}

// Independent symmetric readout flips on every ion.
RVector apply_misassignment(const RVector& probs, int ions, double eps) {
  if (eps <= 0.0) return probs;
  RVector current = probs;
  for (int ion = 0; ion < ions; ++ion) {
    const SpinConfig bit = SpinConfig{1} << (ions - 1 - ion);
    RVector next(current.size());
    for (Eigen::Index s = 0; s < current.size(); ++s)
      next(s) = (1.0 - eps) * current(s) + eps * current(static_cast<SpinConfig>(s) ^ bit);
    current = next;
  }
  return current;
}

}  // namespace

std::string config_label(SpinConfig s, int num_ions) {
  std::string label(num_ions, 'd');
  for (int ion = 0; ion < num_ions; ++ion)
    if (s & (SpinConfig{1} << (num_ions - 1 - ion))) label[ion] = 'u';
  return label;
}

SpinConfig parse_config_label(const std::string& label) {
  SpinConfig s = 0;
  for (char c : label) {
    if (c != 'd' && c != 'u') throw ConfigError("invalid spin configuration label '" + label + "'");
    s = (s << 1) | (c == 'u' ? 1u : 0u);
  }
  return s;
}

int TimeScanData::num_modes() const { return log2_exact(populations.cols()); }

void TimeScanData::validate() const {
  if (times.empty()) throw ConfigError("TimeScanData: empty time grid");
  if (static_cast<Eigen::Index>(times.size()) != populations.rows())
    throw ConfigError("TimeScanData: time grid and population rows differ in length");
  const int d = num_modes();
  if (d < 1) throw ConfigError("TimeScanData: number of configurations must be 2^d");
  if (shots && *shots < 1) throw ConfigError("TimeScanData: shots must be positive");
  const double tol = shots ? 3.0 / std::sqrt(static_cast<double>(*shots)) : 1e-9;
  for (Eigen::Index i = 0; i < populations.rows(); ++i) {
    if (std::abs(populations.row(i).sum() - 1.0) > tol)
      throw ConfigError("TimeScanData: populations at t=" + std::to_string(times[i]) +
                        " do not sum to one");
  }
  if ((populations.array() < -1e-12).any() || (populations.array() > 1.0 + 1e-12).any())
    throw ConfigError("TimeScanData: population outside [0, 1]");
}

double sideband_factor(bool up, int k, double rabi, double t) {
  const double c = std::cos(std::sqrt(k + 1.0) * rabi * t);
  return up ? 1.0 - c * c : c * c;
}

TimeScanData analytic_scan(const FockDistribution& p, const RabiCalibration& calib,
                           const std::vector<double>& times) {
  const int d = p.num_modes();
  if ((p.values.array() < -1e-9).any())
    throw ConfigError("analytic_scan: negative Fock population");
  if (p.total() > 1.0 + 1e-9) throw ConfigError("analytic_scan: Fock populations exceed one");
  const std::vector<double> rates = calib.readout_rates(d);
  const int configs = 1 << d;

  TimeScanData scan;
  scan.times = times;
  scan.calibration = calib;
  scan.populations = RMatrix::Zero(static_cast<Eigen::Index>(times.size()), configs);
  scan.label = p.label;

  std::vector<std::array<double, 2>> factors(d);
  for (std::size_t i = 0; i < times.size(); ++i) {
    for (std::int64_t flat = 0; flat < p.box.size(); ++flat) {
      const double weight = p.values(flat);
      if (weight == 0.0) continue;
      const MultiIndex k = p.box.unflatten(flat);
      for (int j = 0; j < d; ++j) {
        factors[j][0] = sideband_factor(false, k[j], rates[j], times[i]);
        factors[j][1] = 1.0 - factors[j][0];
      }
      for (int s = 0; s < configs; ++s) {
        double term = weight;
        for (int j = 0; j < d; ++j) term *= factors[j][(s >> (d - 1 - j)) & 1];
        scan.populations(static_cast<Eigen::Index>(i), s) += term;
      }
    }
  }
  return scan;
}

RVector sample_frequencies(const RVector& probabilities, std::int64_t shots, std::uint64_t seed,
                           std::uint64_t counter) {
  std::mt19937_64 rng(splitmix64(seed ^ splitmix64(counter + 0x632BE59BD9B4E019ull)));
  RVector cumulative(probabilities.size());
  double acc = 0.0;
  for (Eigen::Index i = 0; i < probabilities.size(); ++i) {
    acc += std::max(0.0, probabilities(i));
    cumulative(i) = acc;
  }
  RVector counts = RVector::Zero(probabilities.size());
  for (std::int64_t shot = 0; shot < shots; ++shot) {
    const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53 * acc;
    const auto* begin = cumulative.data();
    const auto* end = begin + cumulative.size();
    Eigen::Index pick = std::upper_bound(begin, end, u) - begin;
    if (pick >= cumulative.size()) pick = cumulative.size() - 1;
    counts(pick) += 1.0;
  }
  return counts / static_cast<double>(shots);
}

TimeScanData sample_scan(const DensityMatrix& rho, const RabiCalibration& calib,
                         const std::vector<double>& times, const SampleOptions& options) {
  if (times.empty()) throw ConfigError("sample_scan: empty time grid");
  if (options.shots && *options.shots < 1) throw ConfigError("sample_scan: shots must be >= 1");
  const int d = rho.config.num_modes();
  const std::vector<double> rates = calib.readout_rates(d);
  const int configs = 1 << d;

  // One extra level so the sideband can lift the top populated level.
  std::vector<int> readout_cutoffs = rho.config.cutoffs;
  for (int& c : readout_cutoffs) c += 1;
  const DensityMatrix embedded = resize(rho, readout_cutoffs);

  Eigen::SelfAdjointEigenSolver<CMatrix> eig(embedded.matrix);
  if (eig.eigenvalues().minCoeff() < -1e-9)
    throw ConfigError("sample_scan: density matrix is not positive semidefinite");
  std::vector<std::pair<double, PureState>> components;
  for (Eigen::Index i = 0; i < eig.eigenvalues().size(); ++i) {
    const double w = eig.eigenvalues()(i);
    if (w <= 1e-14) continue;
    PureState motional{embedded.config, eig.eigenvectors().col(i)};
    components.emplace_back(w, with_spins_down(motional, d));
  }

  std::vector<PairPropagator> props;
  for (int j = 0; j < d; ++j)
    props.push_back(PairPropagator::blue_sideband(embedded.config.padded_levels(j), 0.0));

  TimeScanData scan;
  scan.times = times;
  scan.calibration = calib;
  scan.shots = options.shots;
  scan.seed = options.seed;
  scan.label = options.label;
  scan.populations = RMatrix::Zero(static_cast<Eigen::Index>(times.size()), configs);

  const std::int64_t block = embedded.config.mode_dimension();
  parallel_for(static_cast<std::int64_t>(times.size()), [&](std::int64_t i) {
    const double t = times[static_cast<std::size_t>(i)];
    std::vector<CMatrix> unitaries;
    for (int j = 0; j < d; ++j) unitaries.push_back(props[j].at(2.0 * rates[j] * t));
    RVector probs = RVector::Zero(configs);
    for (const auto& [weight, start] : components) {
      PureState state = start;
      for (int j = 0; j < d; ++j)
        apply_pair_unitary(state, j, j, unitaries[j], options.leak_tolerance, "sample_scan");
      for (int s = 0; s < configs; ++s)
        probs(s) += weight * state.amplitudes.segment(s * block, block).squaredNorm();
    }
    probs /= probs.sum();
    if (options.coherence_time) {
      const double decay = std::exp(-t / *options.coherence_time);
      probs = (probs.array() - 1.0 / configs) * decay + 1.0 / configs;
    }
    probs = apply_misassignment(probs, d, options.misassignment);
    if (options.shots)
      probs = sample_frequencies(probs, *options.shots, options.seed, static_cast<std::uint64_t>(i));
    scan.populations.row(i) = probs.transpose();
  });
  return scan;
}

TimeScanData sample_scan(const PureState& state, const RabiCalibration& calib,
                         const std::vector<double>& times, const SampleOptions& options) {
  return sample_scan(trace_out_spins(state), calib, times, options);
}

TimeScanData apply_decoherence(const TimeScanData& scan, double tau) {
  if (!(tau > 0.0)) throw ConfigError("apply_decoherence: tau must be positive");
  TimeScanData out = scan;
  if (std::isinf(tau)) return out;
  const double dephased = 1.0 / scan.num_configs();
  for (Eigen::Index i = 0; i < out.populations.rows(); ++i) {
    const double decay = std::exp(-scan.times[static_cast<std::size_t>(i)] / tau);
    out.populations.row(i) = ((scan.populations.row(i).array() - dephased) * decay + dephased).matrix();
  }
  return out;
}

std::vector<double> default_time_grid(const std::vector<double>& rates, int points,
                                      double span_periods) {
  if (rates.empty() || points < 2) throw ConfigError("default_time_grid: need rates and >= 2 points");
  const double slowest = *std::min_element(rates.begin(), rates.end());
  if (!(slowest > 0.0)) throw ConfigError("default_time_grid: rates must be positive");
  const double span = span_periods * 2.0 * kPi / slowest;
  std::vector<double> grid(points);
  for (int i = 0; i < points; ++i) grid[i] = span * i / (points - 1);
  return grid;
}

}  // namespace mmtomo
