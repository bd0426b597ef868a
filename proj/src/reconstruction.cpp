#include "mmtomo/reconstruction.hpp"

#include <cmath>
#include <limits>
#include <sstream>

namespace mmtomo {

IndexBox DisplacementGrid::setting_box() const {
  return IndexBox(std::vector<int>(magnitudes.size(), 2 * N()));
}

std::vector<MultiIndex> DisplacementGrid::settings() const {
  std::vector<MultiIndex> out = setting_box().all();
  for (auto& p : out)
    for (int& v : p) v -= N();
  return out;
}

double DisplacementGrid::phase_offset(int mode) const {
  if (phase_offsets.empty()) return 0.0;
  return phase_offsets.at(static_cast<std::size_t>(mode));
}

std::vector<Complex> DisplacementGrid::alphas(const MultiIndex& p) const {
  if (p.size() != magnitudes.size())
    throw DimensionMismatch("DisplacementGrid: setting " + format_index(p) +
                            " has the wrong number of modes");
  std::vector<Complex> out;
  for (std::size_t j = 0; j < p.size(); ++j) {
    if (p[j] < -N() || p[j] >= N())
      throw ConfigError("DisplacementGrid: setting " + format_index(p) + " is off the grid");
    const double angle = kPi * p[j] / N() + phase_offset(static_cast<int>(j));
    out.push_back(std::polar(magnitudes[j], angle));
  }
  return out;
}

void DisplacementGrid::validate() const {
  if (magnitudes.empty()) throw ConfigError("DisplacementGrid: no modes");
  if (n_max < 0) throw ConfigError("DisplacementGrid: n_max must be >= 0");
  for (double m : magnitudes)
    if (!(m > 0.0) || !std::isfinite(m))
      throw ConfigError("DisplacementGrid: magnitudes must be > 0 for the inversion to be defined");
  if (!phase_offsets.empty() && phase_offsets.size() != magnitudes.size())
    throw DimensionMismatch("DisplacementGrid: one phase offset per mode required");
}

void QDataset::validate() const {
  grid.validate();
  if (k_max < grid.n_max)
    throw ConfigError("QDataset: k_max (" + std::to_string(k_max) + ") must be >= n_max (" +
                      std::to_string(grid.n_max) + ")");
  std::vector<std::string> missing;
  for (const auto& p : grid.settings())
    if (points.find(p) == points.end()) missing.push_back(format_index(p));
  if (!missing.empty()) {
    std::ostringstream os;
    os << "QDataset: incomplete grid, missing " << missing.size() << " setting(s):";
    for (const auto& m : missing) os << ' ' << m;
    throw ConfigError(os.str());
  }
  if (points.size() != static_cast<std::size_t>(grid.setting_box().size()))
    throw ConfigError("QDataset: settings outside the grid");
  const std::vector<int> extents(grid.magnitudes.size(), k_max + 1);
  for (const auto& [p, dist] : points) {
    if (dist.box.extents() != extents)
      throw DimensionMismatch("QDataset: Fock distribution at " + format_index(p) +
                              " does not span k_j in [0, " + std::to_string(k_max) + "]");
    if (dist.has_covariance() && dist.covariance.rows() != dist.box.size())
      throw DimensionMismatch("QDataset: covariance shape at " + format_index(p));
  }
}

QDataset exact_qdataset(const DensityMatrix& rho, const DisplacementGrid& grid, int k_max) {
  grid.validate();
  if (rho.config.num_modes() != grid.num_modes())
    throw DimensionMismatch("exact_qdataset: state and grid mode counts differ");
  const DensityMatrix embedded = resize(rho, std::vector<int>(grid.num_modes(), k_max));
  QDataset q;
  q.grid = grid;
  q.k_max = k_max;
  for (const auto& p : grid.settings()) {
    FockDistribution dist = FockDistribution::zeros(grid.num_modes(), k_max);
    dist.values = displaced_populations_with_leak(embedded, grid.alphas(p),
                                                  std::numeric_limits<double>::infinity())
                      .values;
    dist.label = "exact";
    q.points.emplace(p, std::move(dist));
  }
  return q;
}

double gamma_coefficient(int k, int n, int l, double magnitude) {
  if (k < 0 || n < 0 || n + l < 0)
    throw ConfigError("gamma_coefficient: need k, n >= 0 and n + l >= 0");
  if (!(magnitude > 0.0)) throw ConfigError("gamma_coefficient: |alpha| must be > 0");
  const double log_a = std::log(magnitude);
  const double log_pref = -magnitude * magnitude - std::lgamma(k + 1.0) +
                          0.5 * (std::lgamma(n + 1.0) + std::lgamma(n + l + 1.0));
  auto log_binom = [](int top, int bottom) {
    return std::lgamma(top + 1.0) - std::lgamma(bottom + 1.0) - std::lgamma(top - bottom + 1.0);
  };
  double sum = 0.0;
  for (int j = 0; j <= std::min(k, n + l); ++j) {
    for (int jp = 0; jp <= std::min(k, n); ++jp) {
      const int power = 2 * k + 2 * (n - j - jp) + l;
      const double log_term = log_pref + power * log_a + log_binom(k, j) + log_binom(k, jp) -
                              std::lgamma(n - jp + 1.0) - std::lgamma(n + l - j + 1.0);
      const double term = std::exp(log_term);
      sum += ((j + jp) % 2 == 0) ? term : -term;
    }
  }
  return sum;
}

std::vector<MultiIndex> all_l_tuples(int num_modes, int n_max) {
  std::vector<MultiIndex> out = IndexBox(std::vector<int>(num_modes, 2 * n_max + 1)).all();
  for (auto& l : out)
    for (int& v : l) v -= n_max;
  return out;
}

namespace {

double dft_angle(const MultiIndex& l, const MultiIndex& p, int N) {
  double s = 0.0;
  for (std::size_t j = 0; j < l.size(); ++j) s += static_cast<double>(l[j]) * p[j];
  return -kPi * s / N;
}

void check_l(const MultiIndex& l, const DisplacementGrid& grid) {
  if (static_cast<int>(l.size()) != grid.num_modes())
    throw DimensionMismatch("l-tuple " + format_index(l) + " has the wrong number of modes");
  for (int v : l)
    if (std::abs(v) > grid.n_max)
      throw ConfigError("l-tuple " + format_index(l) + " exceeds n_max");
}

}  // namespace

DftComponent dft_transform(const QDataset& q, const MultiIndex& l) {
  q.validate();
  check_l(l, q.grid);
  const int N = q.grid.N();
  const double norm = 1.0 / static_cast<double>(q.grid.setting_box().size());
  const Eigen::Index K = q.points.begin()->second.box.size();

  bool any_cov = false;
  for (const auto& [p, dist] : q.points) any_cov = any_cov || dist.has_covariance();

  DftComponent out;
  out.l = l;
  out.values = CVector::Zero(K);
  RMatrix rr, ri, ii;
  if (any_cov) {
    rr = RMatrix::Zero(K, K);
    ri = RMatrix::Zero(K, K);
    ii = RMatrix::Zero(K, K);
  }
  for (const auto& [p, dist] : q.points) {
    const double angle = dft_angle(l, p, N);
    const double c = std::cos(angle) * norm;
    const double s = std::sin(angle) * norm;
    out.values += Complex(c, s) * dist.values.cast<Complex>();
    if (dist.has_covariance()) {
      rr += c * c * dist.covariance;
      ri += c * s * dist.covariance;
      ii += s * s * dist.covariance;
    }
  }
  if (any_cov) {
    out.covariance.resize(2 * K, 2 * K);
    out.covariance << rr, ri, ri.transpose(), ii;
  }
  return out;
}

GammaSystem gamma_system(const DisplacementGrid& grid, const MultiIndex& l, int k_max) {
  grid.validate();
  check_l(l, grid);
  if (k_max < grid.n_max) throw ConfigError("gamma_system: k_max must be >= n_max");
  const int d = grid.num_modes();

  GammaSystem sys;
  sys.l = l;
  for (const auto& n : IndexBox(std::vector<int>(d, grid.n_max + 1)).all()) {
    bool ok = true;
    for (int j = 0; j < d; ++j) ok = ok && n[j] + l[j] >= 0 && n[j] + l[j] <= grid.n_max;
    if (ok) sys.unknowns.push_back(n);
  }
  const std::vector<MultiIndex> ks = IndexBox(std::vector<int>(d, k_max + 1)).all();
  sys.gamma.resize(static_cast<Eigen::Index>(ks.size()), static_cast<Eigen::Index>(sys.unknowns.size()));
  for (std::size_t r = 0; r < ks.size(); ++r)
    for (std::size_t c = 0; c < sys.unknowns.size(); ++c) {
      double v = 1.0;
      for (int j = 0; j < d; ++j)
        v *= gamma_coefficient(ks[r][j], sys.unknowns[c][j], l[j], grid.magnitudes[j]);
      sys.gamma(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = v;
    }

  Eigen::JacobiSVD<RMatrix> svd(sys.gamma, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const RVector& sv = svd.singularValues();
  const double smax = sv(0);
  const double smin = sv(sv.size() - 1);
  sys.condition = smin > 0.0 ? smax / smin : std::numeric_limits<double>::infinity();
  if (!(smin > 1e-10 * smax))
    throw RankDeficient("gamma_system: Gamma for l=" + format_index(l) +
                            " is rank deficient; use a larger |alpha| or k_max",
                        sys.condition);
  sys.pseudo_inverse = svd.matrixV() * sv.cwiseInverse().asDiagonal() * svd.matrixU().transpose();
  return sys;
}

namespace {

// Phase that maps the rotated-frame element rho'_{n, n+l} back to rho.
Complex offset_phase(const DisplacementGrid& grid, const MultiIndex& l) {
  double angle = 0.0;
  for (int j = 0; j < grid.num_modes(); ++j) angle -= grid.phase_offset(j) * l[j];
  return std::polar(1.0, angle);
}

MultiIndex shifted(const MultiIndex& n, const MultiIndex& l) {
  MultiIndex m = n;
  for (std::size_t j = 0; j < m.size(); ++j) m[j] += l[j];
  return m;
}

}  // namespace

RawReconstruction invert_gamma(const std::vector<DftComponent>& components,
                               const DisplacementGrid& grid, int k_max) {
  grid.validate();
  const int d = grid.num_modes();
  const IndexBox rho_box(std::vector<int>(d, grid.n_max + 1));
  const Eigen::Index D = rho_box.size();

  std::map<MultiIndex, const DftComponent*> by_l;
  for (const auto& c : components) by_l[c.l] = &c;

  RawReconstruction out;
  out.rho = CMatrix::Zero(D, D);
  out.sigma_real = RMatrix::Zero(D, D);
  out.sigma_imag = RMatrix::Zero(D, D);
  for (const auto& l : all_l_tuples(d, grid.n_max)) {
    const auto it = by_l.find(l);
    if (it == by_l.end()) throw ConfigError("invert_gamma: missing DFT component l=" + format_index(l));
    const DftComponent& comp = *it->second;
    const GammaSystem sys = gamma_system(grid, l, k_max);
    if (comp.values.size() != sys.gamma.rows())
      throw DimensionMismatch("invert_gamma: component l=" + format_index(l) + " has the wrong size");
    out.worst_condition = std::max(out.worst_condition, sys.condition);

    const Complex phase = offset_phase(grid, l);
    const CVector x = sys.pseudo_inverse.cast<Complex>() * comp.values;
    RMatrix vrr, vri, vii;
    const bool has_cov = comp.covariance.size() != 0;
    if (has_cov) {
      const Eigen::Index K = comp.values.size();
      const RMatrix& P = sys.pseudo_inverse;
      vrr = P * comp.covariance.topLeftCorner(K, K) * P.transpose();
      vri = P * comp.covariance.topRightCorner(K, K) * P.transpose();
      vii = P * comp.covariance.bottomRightCorner(K, K) * P.transpose();
    }
    for (std::size_t c = 0; c < sys.unknowns.size(); ++c) {
      const Eigen::Index row = rho_box.flatten(sys.unknowns[c]);
      const Eigen::Index col = rho_box.flatten(shifted(sys.unknowns[c], l));
      const auto i = static_cast<Eigen::Index>(c);
      out.rho(row, col) = phase * x(i);
      if (has_cov) {
        const double cr = phase.real();
        const double ci = phase.imag();
        // Re(phase x) = cr Re x - ci Im x, Im(phase x) = ci Re x + cr Im x.
        const double var_re = cr * cr * vrr(i, i) - 2.0 * cr * ci * vri(i, i) + ci * ci * vii(i, i);
        const double var_im = ci * ci * vrr(i, i) + 2.0 * cr * ci * vri(i, i) + cr * cr * vii(i, i);
        out.sigma_real(row, col) = std::sqrt(std::max(0.0, var_re));
        out.sigma_imag(row, col) = std::sqrt(std::max(0.0, var_im));
      }
    }
  }
  return out;
}

DensityMatrix project_psd(const DensityMatrix& rho) {
  return {rho.config, project_psd(rho.matrix)};
}

namespace {

// Linear map from the stacked Q data (setting-major, then k) to the
// hermitized rho_raw entries (row-major), as a dense complex matrix.
CMatrix pipeline_map(const QDataset& q) {
  const DisplacementGrid& grid = q.grid;
  const int d = grid.num_modes();
  const IndexBox rho_box(std::vector<int>(d, grid.n_max + 1));
  const Eigen::Index D = rho_box.size();
  const std::vector<MultiIndex> settings = grid.settings();
  const Eigen::Index K = IndexBox(std::vector<int>(d, q.k_max + 1)).size();
  const Eigen::Index data = static_cast<Eigen::Index>(settings.size()) * K;
  const double norm = 1.0 / static_cast<double>(settings.size());

  CMatrix L = CMatrix::Zero(D * D, data);
  for (const auto& l : all_l_tuples(d, grid.n_max)) {
    const GammaSystem sys = gamma_system(grid, l, q.k_max);
    const Complex phase = offset_phase(grid, l);
    for (std::size_t c = 0; c < sys.unknowns.size(); ++c) {
      const Eigen::Index entry =
          rho_box.flatten(sys.unknowns[c]) * D + rho_box.flatten(shifted(sys.unknowns[c], l));
      for (std::size_t s = 0; s < settings.size(); ++s) {
        const Complex w = phase * std::polar(norm, dft_angle(l, settings[s], grid.N()));
        L.row(entry).segment(static_cast<Eigen::Index>(s) * K, K) +=
            w * sys.pseudo_inverse.row(static_cast<Eigen::Index>(c)).cast<Complex>();
      }
    }
  }
  CMatrix H(D * D, data);
  for (Eigen::Index a = 0; a < D; ++a)
    for (Eigen::Index b = 0; b < D; ++b)
      H.row(a * D + b) = 0.5 * (L.row(a * D + b) + L.row(b * D + a).conjugate());
  return H;
}

}  // namespace

ReconstructedState reconstruct(const QDataset& q, const std::optional<PureState>& target) {
  q.validate();
  const DisplacementGrid& grid = q.grid;
  const int d = grid.num_modes();

  std::vector<DftComponent> comps;
  for (const auto& l : all_l_tuples(d, grid.n_max)) comps.push_back(dft_transform(q, l));
  const RawReconstruction raw = invert_gamma(comps, grid, q.k_max);

  ReconstructedState out;
  out.rho_raw = hermitize(raw.rho);
  out.gamma_condition = raw.worst_condition;
  const Eigen::Index D = out.rho_raw.rows();

  bool any_cov = false;
  for (const auto& [p, dist] : q.points) any_cov = any_cov || dist.has_covariance();
  out.sigma_real = RMatrix::Zero(D, D);
  out.sigma_imag = RMatrix::Zero(D, D);
  if (any_cov) {
    const CMatrix H = pipeline_map(q);
    RMatrix G(2 * D * D, H.cols());
    G << H.real(), H.imag();
    const Eigen::Index K = q.points.begin()->second.box.size();
    out.covariance = RMatrix::Zero(2 * D * D, 2 * D * D);
    Eigen::Index s = 0;
    for (const auto& p : grid.settings()) {
      const FockDistribution& dist = q.points.at(p);
      if (dist.has_covariance()) {
        const auto block = G.middleCols(s * K, K);
        out.covariance.noalias() += block * dist.covariance * block.transpose();
      }
      ++s;
    }
    for (Eigen::Index a = 0; a < D; ++a)
      for (Eigen::Index b = 0; b < D; ++b) {
        out.sigma_real(a, b) = std::sqrt(std::max(0.0, out.covariance(a * D + b, a * D + b)));
        const Eigen::Index im = D * D + a * D + b;
        out.sigma_imag(a, b) = std::sqrt(std::max(0.0, out.covariance(im, im)));
      }
  }

  const HilbertConfig cfg = HilbertConfig::uniform(d, grid.n_max);
  out.rho_psd = DensityMatrix{cfg, project_psd(out.rho_raw)};
  Eigen::SelfAdjointEigenSolver<CMatrix> eig(out.rho_raw, Eigen::EigenvaluesOnly);
  out.min_eigenvalue = eig.eigenvalues().minCoeff();
  out.trace = out.rho_raw.trace().real();
  out.trace_distance_raw_psd = trace_distance(out.rho_raw, out.rho_psd.matrix);

  if (target) {
    if (target->config.num_spins != 0)
      throw DimensionMismatch("reconstruct: target must be a motional state");
    if (target->config.num_modes() != d)
      throw DimensionMismatch("reconstruct: target has the wrong number of modes");
    const PureState psi = resize(*target, cfg.cutoffs, 1e-9);
    out.fidelity_raw = psi.amplitudes.dot(out.rho_raw * psi.amplitudes).real();
    out.fidelity_psd = fidelity(out.rho_psd, psi);
  }

  std::ostringstream os;
  if (out.min_eigenvalue < -1e-9) {
    os << "rho_raw is not positive semidefinite (min eigenvalue " << out.min_eigenvalue
       << "); rho_psd is the clipped projection";
    out.warnings.push_back(os.str());
    os.str("");
  }
  if (std::abs(out.trace - 1.0) > 0.05) {
    os << "rho_raw trace " << out.trace << " deviates from one";
    out.warnings.push_back(os.str());
    os.str("");
  }
  if (out.gamma_condition > 1e6) {
    os << "Gamma condition number " << out.gamma_condition
       << " is large; use a larger |alpha| or k_max";
    out.warnings.push_back(os.str());
  }
  return out;
}

}  // namespace mmtomo
