#include "mmtomo/dynamics.hpp"

#include <cmath>
#include <sstream>

namespace mmtomo {

namespace {

constexpr Complex kI{0.0, 1.0};

// Pair basis: index = spin * levels + n, spin 0 = down, 1 = up.
CMatrix sigma_plus_kron(const CMatrix& mode_op) {
  const Eigen::Index l = mode_op.rows();
  CMatrix out = CMatrix::Zero(2 * l, 2 * l);
  out.block(l, 0, l, l) = mode_op;
  return out;
}

CMatrix spin_operator_kron(const Eigen::Matrix2cd& spin, const CMatrix& mode_op) {
  const Eigen::Index l = mode_op.rows();
  CMatrix out(2 * l, 2 * l);
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j) out.block(i * l, j * l, l, l) = spin(i, j) * mode_op;
  return out;
}

// i/2 (X - X^dag) for X = sigma_+ (x) op: Hermitian generator per unit angle.
CMatrix half_sideband_generator(const CMatrix& mode_op) {
  const CMatrix x = sigma_plus_kron(mode_op);
  return 0.5 * kI * (x - x.adjoint());
}

void check_angle(double angle, const char* what) {
  if (!(angle >= 0.0) || !std::isfinite(angle))
    throw ConfigError(std::string(what) + ": Rabi angle must be finite and non-negative");
}

void check_spin(const PureState& state, int spin) {
  if (spin < 0 || spin >= state.config.num_spins)
    throw ConfigError("pulse addresses spin " + std::to_string(spin) + " but the state has " +
                      std::to_string(state.config.num_spins));
}

void check_pair(const PureState& state, const RabiCalibration& calib, int spin, int mode) {
  check_spin(state, spin);
  if (mode < 0 || mode >= state.config.num_modes())
    throw ConfigError("pulse addresses mode " + std::to_string(mode) + " but the state has " +
                      std::to_string(state.config.num_modes()));
  if (calib.sideband.size() != 0 && calib.sideband_rabi(spin, mode) <= 0.0)
    throw ConfigError("ion " + std::to_string(spin) + " does not couple to mode " +
                      std::to_string(mode));
}

void apply_spin_unitary(PureState& state, int spin, const Eigen::Matrix2cd& u) {
  const std::int64_t stride =
      state.config.mode_dimension() * (std::int64_t{1} << (state.config.num_spins - 1 - spin));
  const std::int64_t dim = state.config.dimension();
  for (std::int64_t idx = 0; idx < dim; ++idx) {
    if ((idx / stride) % 2 != 0) continue;
    const Complex down = state.amplitudes(idx);
    const Complex up = state.amplitudes(idx + stride);
    state.amplitudes(idx) = u(0, 0) * down + u(0, 1) * up;
    state.amplitudes(idx + stride) = u(1, 0) * down + u(1, 1) * up;
  }
}

Eigen::Matrix2cd carrier_unitary(double angle, double phase) {
  // exp(i angle/2 (sigma_+ e^{i phi} + sigma_- e^{-i phi})), basis (down, up)
  const double c = std::cos(angle / 2), s = std::sin(angle / 2);
  Eigen::Matrix2cd u;
  u(0, 0) = c;
  u(1, 1) = c;
  u(1, 0) = kI * s * std::polar(1.0, phase);
  u(0, 1) = kI * s * std::polar(1.0, -phase);
  return u;
}

CMatrix spin_dependent_generator(int levels, Complex alpha, double spin_phase) {
  // H = i S (x) G with S = i(e^{i phi} sigma_+ - e^{-i phi} sigma_-), G = alpha a^dag - alpha^* a
  const CMatrix a = lowering_matrix(levels);
  const CMatrix g = alpha * a.adjoint() - std::conj(alpha) * a;
  Eigen::Matrix2cd s = Eigen::Matrix2cd::Zero();
  s(1, 0) = kI * std::polar(1.0, spin_phase);
  s(0, 1) = -kI * std::polar(1.0, -spin_phase);
  return kI * spin_operator_kron(s, g);
}

CMatrix two_tone_generator(int levels, Complex alpha, double spin_phase) {
  const double area = std::abs(alpha);  // Omega t
  const double motion_phase = std::arg(alpha) + kPi / 2;
  const double phi_b = spin_phase + motion_phase;
  const double phi_r = spin_phase - motion_phase;
  const CMatrix a = lowering_matrix(levels);
  const CMatrix x = sigma_plus_kron(a.adjoint() * std::polar(1.0, phi_b)) +
                    sigma_plus_kron(a * std::polar(1.0, phi_r));
  // H t = i Omega t (X - X^dag)
  return kI * area * (x - x.adjoint());
}

}  // namespace

// --- RabiCalibration ---------------------------------------------------------

RabiCalibration RabiCalibration::uniform(int num_spins, int num_modes, double sideband_rabi,
                                         double carrier_rabi) {
  RabiCalibration c;
  c.sideband = RMatrix::Constant(num_spins, num_modes, sideband_rabi);
  c.carrier = RVector::Constant(num_spins, carrier_rabi);
  return c;
}

RabiCalibration RabiCalibration::diagonal(const std::vector<double>& rates) {
  const int d = static_cast<int>(rates.size());
  RabiCalibration c;
  c.sideband = RMatrix::Zero(d, d);
  for (int j = 0; j < d; ++j) c.sideband(j, j) = rates[j];
  c.carrier = RVector::Zero(d);
  return c;
}

double RabiCalibration::sideband_rabi(int spin, int mode) const {
  if (spin < 0 || spin >= sideband.rows() || mode < 0 || mode >= sideband.cols())
    throw ConfigError("RabiCalibration: no entry for ion " + std::to_string(spin) + ", mode " +
                      std::to_string(mode));
  return sideband(spin, mode);
}

std::vector<double> RabiCalibration::readout_rates(int num_modes) const {
  std::vector<double> rates(num_modes);
  for (int j = 0; j < num_modes; ++j) {
    rates[j] = sideband_rabi(j, j);
    if (!(rates[j] > 0.0))
      throw ConfigError("RabiCalibration: readout ion " + std::to_string(j) +
                        " has no sideband coupling to mode " + std::to_string(j));
  }
  return rates;
}

// --- PairPropagator ----------------------------------------------------------

PairPropagator::PairPropagator(int padded_levels, const CMatrix& generator)
    : padded_levels_(padded_levels) {
  Eigen::SelfAdjointEigenSolver<CMatrix> eig(generator);
  vectors_ = eig.eigenvectors();
  values_ = eig.eigenvalues();
}

PairPropagator PairPropagator::blue_sideband(int padded_levels, double phase) {
  const CMatrix a = lowering_matrix(padded_levels);
  return PairPropagator(padded_levels,
                        half_sideband_generator(a.adjoint() * std::polar(1.0, phase)));
}

PairPropagator PairPropagator::red_sideband(int padded_levels, double phase) {
  const CMatrix a = lowering_matrix(padded_levels);
  return PairPropagator(padded_levels, half_sideband_generator(a * std::polar(1.0, phase)));
}

CMatrix PairPropagator::at(double angle) const {
  const CVector phases = values_.unaryExpr([angle](double v) { return std::polar(1.0, -v * angle); });
  return vectors_ * phases.asDiagonal() * vectors_.adjoint();
}

double apply_pair_unitary(PureState& state, int spin, int mode, const CMatrix& unitary,
                          double leak_tolerance, const char* where) {
  const HilbertConfig& cfg = state.config;
  const int levels = cfg.levels(mode);
  const Eigen::Index padded = unitary.rows() / 2;
  if (unitary.rows() != 2 * padded || padded < levels)
    throw DimensionMismatch(std::string(where) + ": pair unitary too small for the cutoff");

  const std::int64_t mode_stride = cfg.mode_box().stride(mode);
  const std::int64_t spin_stride =
      cfg.mode_dimension() * (std::int64_t{1} << (cfg.num_spins - 1 - spin));

  // Columns of U that can carry amplitude.
  CMatrix u_cols(2 * padded, 2 * levels);
  for (int s = 0; s < 2; ++s)
    u_cols.middleCols(s * levels, levels) = unitary.middleCols(s * padded, levels);

  double leaked = 0.0;
  CVector in(2 * levels);
  CVector out(2 * padded);
  const std::int64_t dim = cfg.dimension();
  for (std::int64_t base = 0; base < dim; ++base) {
    if ((base / spin_stride) % 2 != 0 || (base / mode_stride) % levels != 0) continue;
    for (int s = 0; s < 2; ++s)
      for (int n = 0; n < levels; ++n)
        in(s * levels + n) = state.amplitudes(base + s * spin_stride + n * mode_stride);
    out.noalias() = u_cols * in;
    for (int s = 0; s < 2; ++s) {
      for (int n = 0; n < levels; ++n)
        state.amplitudes(base + s * spin_stride + n * mode_stride) = out(s * padded + n);
      leaked += out.segment(s * padded + levels, padded - levels).squaredNorm();
    }
  }
  if (leaked > leak_tolerance) throw TruncationLeak(where, leaked, leak_tolerance);
  if (leaked > 0.0) state.normalize();
  return leaked;
}

// --- evolve ------------------------------------------------------------------

std::string describe(const PulseOp& op) {
  std::ostringstream os;
  std::visit(
      [&os](const auto& p) {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, Carrier>)
          os << "R_C(" << p.angle << ", " << p.phase << ") on ion " << p.spin;
        else if constexpr (std::is_same_v<T, BlueSideband>)
          os << "R_BSB,mode" << p.mode << "(" << p.angle << ", " << p.phase << ") on ion " << p.spin;
        else if constexpr (std::is_same_v<T, RedSideband>)
          os << "R_RSB,mode" << p.mode << "(" << p.angle << ", " << p.phase << ") on ion " << p.spin;
        else
          os << "D_mode" << p.mode << "(" << p.alpha << ", phi_s=" << p.spin_phase << ") on ion "
             << p.spin;
      },
      op);
  return os.str();
}

PureState evolve(const PureState& state, const PulseOp& op, const RabiCalibration& calib,
                 const EvolveOptions& options) {
  PureState out = state;
  std::visit(
      [&](const auto& p) {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, Carrier>) {
          check_angle(p.angle, "carrier");
          check_spin(out, p.spin);
          apply_spin_unitary(out, p.spin, carrier_unitary(p.angle, p.phase));
        } else if constexpr (std::is_same_v<T, BlueSideband> || std::is_same_v<T, RedSideband>) {
          check_angle(p.angle, "sideband");
          check_pair(out, calib, p.spin, p.mode);
          const int padded = out.config.padded_levels(p.mode);
          const PairPropagator prop = std::is_same_v<T, BlueSideband>
                                          ? PairPropagator::blue_sideband(padded, p.phase)
                                          : PairPropagator::red_sideband(padded, p.phase);
          apply_pair_unitary(out, p.spin, p.mode, prop.at(p.angle), options.leak_tolerance,
                             "sideband pulse");
        } else {
          check_pair(out, calib, p.spin, p.mode);
          const int padded = out.config.padded_levels(p.mode);
          const double phi_s = p.spin_phase - calib.spin_phase_offset;
          const CMatrix h = options.two_tone_integration
                                ? two_tone_generator(padded, p.alpha, phi_s)
                                : spin_dependent_generator(padded, p.alpha, phi_s);
          apply_pair_unitary(out, p.spin, p.mode, unitary_from_generator(h),
                             options.leak_tolerance, "spin-dependent push");
        }
      },
      op);
  return out;
}

PureState run_sequence(const PulseSequence& seq, const RabiCalibration& calib,
                       const EvolveOptions& options) {
  PureState state = seq.initial ? *seq.initial : PureState::vacuum(seq.config);
  state.check_normalized();
  for (const PulseOp& op : seq.ops) state = evolve(state, op, calib, options);
  return state;
}

// --- named states --------------------------------------------------------------

std::string state_name(const NamedState& state) {
  return std::visit(
      [](const auto& s) -> std::string {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, Bell00_11>) return "bell_00_11";
        if constexpr (std::is_same_v<T, Bell01_10>) return "bell_01_10";
        if constexpr (std::is_same_v<T, CoherentProduct>) return "coherent_product";
        return "w_state";
      },
      state);
}

double w_state_first_angle() { return 2.0 * std::asin(1.0 / std::sqrt(3.0)); }

namespace {

int coherent_cutoff(const std::vector<Complex>& alphas) {
  // Smallest cutoff whose Poisson tail is below 1e-13 for every mode.
  int cutoff = 1;
  for (const Complex& a : alphas) {
    const double mean = std::norm(a);
    double p = std::exp(-mean), cdf = p;
    int n = 0;
    while (1.0 - cdf > 1e-13 && n < 200) {
      ++n;
      p *= mean / n;
      cdf += p;
    }
    cutoff = std::max(cutoff, n + 1);
  }
  return cutoff;
}

}  // namespace

PulseSequence named_sequence(const NamedState& state, int cutoff) {
  PulseSequence seq;
  std::visit(
      [&](const auto& s) {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, Bell00_11>) {
          // RSB(pi, 0) maps |up,1,0> to -|down,1,1>; the extra pi on the first
          // pulse restores the + sign.
          seq.config = HilbertConfig::uniform(2, cutoff > 0 ? cutoff : 1, 1);
          seq.ops = {BlueSideband{0, kPi / 2, s.phi + kPi, 0}, RedSideband{1, kPi, 0.0, 0}};
        } else if constexpr (std::is_same_v<T, Bell01_10>) {
          seq.config = HilbertConfig::uniform(2, cutoff > 0 ? cutoff : 1, 1);
          seq.ops = {BlueSideband{0, kPi / 2, s.phi, 0}, BlueSideband{1, kPi, 0.0, 0},
                     Carrier{kPi, 0.0, 0}};
        } else if constexpr (std::is_same_v<T, CoherentProduct>) {
          if (s.alphas.empty()) throw ConfigError("coherent_product: no amplitudes given");
          const int modes = static_cast<int>(s.alphas.size());
          seq.config = HilbertConfig::uniform(modes, cutoff > 0 ? cutoff : coherent_cutoff(s.alphas), 1);
          seq.ops.push_back(Carrier{kPi / 2, 0.0, 0});
          for (int j = 0; j < modes; ++j) seq.ops.push_back(SpinDepDisplace{j, s.alphas[j], 0.0, 0});
          // R_C(-pi/2, 0) == R_C(pi/2, pi)
          seq.ops.push_back(Carrier{kPi / 2, kPi, 0});
        } else {
          seq.config = HilbertConfig::uniform(3, cutoff > 0 ? cutoff : 1, 1);
          seq.ops = {BlueSideband{0, w_state_first_angle(), s.phi1, 0},
                     BlueSideband{1, kPi / 2, s.phi2, 0}, BlueSideband{2, kPi, s.phi3, 0},
                     Carrier{kPi, 0.0, 0}};
        }
      },
      state);
  return seq;
}

PureState prepare_named_state(const NamedState& state, const RabiCalibration& calib, int cutoff,
                              const EvolveOptions& options) {
  return run_sequence(named_sequence(state, cutoff), calib, options);
}

PureState analytic_named_state(const NamedState& state, int cutoff) {
  const HilbertConfig cfg = named_sequence(state, cutoff).config.motional();
  PureState out{cfg, CVector::Zero(cfg.dimension())};
  const auto set = [&](const MultiIndex& fock, Complex amp) {
    out.amplitudes(cfg.mode_box().flatten(fock)) = amp;
  };
  const double r2 = 1.0 / std::sqrt(2.0), r3 = 1.0 / std::sqrt(3.0);
  std::visit(
      [&](const auto& s) {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, Bell00_11>) {
          set({0, 0}, r2);
          set({1, 1}, r2 * std::polar(1.0, s.phi));
        } else if constexpr (std::is_same_v<T, Bell01_10>) {
          set({0, 1}, r2);
          set({1, 0}, r2 * std::polar(1.0, s.phi));
        } else if constexpr (std::is_same_v<T, CoherentProduct>) {
          PureState prod = coherent_state(s.alphas[0], cfg.cutoffs[0]);
          for (std::size_t j = 1; j < s.alphas.size(); ++j)
            prod = tensor(prod, coherent_state(s.alphas[j], cfg.cutoffs[j]));
          out.amplitudes = prod.amplitudes;
        } else {
          set({1, 0, 0}, r3 * std::polar(1.0, s.phi1));
          set({0, 1, 0}, r3 * std::polar(1.0, s.phi2));
          set({0, 0, 1}, r3 * std::polar(1.0, s.phi3));
        }
      },
      state);
  return out;
}

}  // namespace mmtomo
