#include "mmtomo/fitting.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <set>
#include <sstream>

#include <boost/math/tools/minima.hpp>

namespace mmtomo {

namespace {

struct Design {
  RMatrix X;
  RVector y;
  std::vector<Eigen::Index> time_of_row;
  std::vector<int> configs;  // configs used per time point, in row order
};

Design build_design(const TimeScanData& scan, const std::vector<MultiIndex>& columns,
                    bool all_down_only, std::optional<double> coherence_time = std::nullopt) {
  scan.validate();
  const int d = scan.num_modes();
  const std::vector<double> rates = scan.calibration.readout_rates(d);
  const int configs = all_down_only ? 1 : (1 << d);
  const double dephased = 1.0 / static_cast<double>(1 << d);
  if (coherence_time && !(*coherence_time > 0.0))
    throw ConfigError("fit: coherence time must be positive");
  const Eigen::Index times = static_cast<Eigen::Index>(scan.times.size());

  int k_top = 0;
  for (const auto& k : columns)
    for (int v : k) k_top = std::max(k_top, v);

  // cos^2 factors per mode, level and time.
  std::vector<RMatrix> down(d, RMatrix(k_top + 1, times));
  for (int j = 0; j < d; ++j)
    for (int k = 0; k <= k_top; ++k)
      for (Eigen::Index i = 0; i < times; ++i)
        down[j](k, i) = sideband_factor(false, k, rates[j], scan.times[static_cast<std::size_t>(i)]);

  Design design;
  design.X.resize(times * configs, static_cast<Eigen::Index>(columns.size()));
  design.y.resize(times * configs);
  for (int s = 0; s < configs; ++s) design.configs.push_back(s);
  Eigen::Index row = 0;
  for (Eigen::Index i = 0; i < times; ++i) {
    const double decay =
        coherence_time ? std::exp(-scan.times[static_cast<std::size_t>(i)] / *coherence_time) : 1.0;
    for (int s = 0; s < configs; ++s, ++row) {
      design.y(row) = scan.populations(i, s);
      design.time_of_row.push_back(i);
      for (std::size_t c = 0; c < columns.size(); ++c) {
        double v = 1.0;
        for (int j = 0; j < d; ++j) {
          const double f = down[j](columns[c][j], i);
          v *= ((s >> (d - 1 - j)) & 1) ? 1.0 - f : f;
        }
        design.X(row, static_cast<Eigen::Index>(c)) = coherence_time ? dephased + (v - dephased) * decay : v;
      }
    }
  }
  return design;
}

double condition_of(const RMatrix& X) {
  Eigen::JacobiSVD<RMatrix> svd(X);
  const RVector& sv = svd.singularValues();
  if (sv.size() == 0) return std::numeric_limits<double>::infinity();
  const double smin = sv(sv.size() - 1);
  return smin > 0.0 ? sv(0) / smin : std::numeric_limits<double>::infinity();
}

RVector clipped_weights(const RVector& predicted, std::int64_t shots) {
  const double n = static_cast<double>(shots);
  const double lo = 0.5 / n;
  RVector w(predicted.size());
  for (Eigen::Index r = 0; r < predicted.size(); ++r) {
    const double p = std::clamp(predicted(r), lo, 1.0 - lo);
    w(r) = n / (p * (1.0 - p));
  }
  return w;
}

// Lawson-Hanson active-set non-negative least squares.
RVector nnls(const RMatrix& A, const RVector& b) {
  const Eigen::Index n = A.cols();
  RVector x = RVector::Zero(n);
  std::vector<bool> passive(static_cast<std::size_t>(n), false);
  const double tol = 10.0 * std::numeric_limits<double>::epsilon() * A.norm() *
                     static_cast<double>(std::max(A.rows(), n));
  RVector w = A.transpose() * (b - A * x);

  auto solve_passive = [&]() {
    std::vector<Eigen::Index> idx;
    for (Eigen::Index j = 0; j < n; ++j)
      if (passive[static_cast<std::size_t>(j)]) idx.push_back(j);
    RMatrix Ap(A.rows(), static_cast<Eigen::Index>(idx.size()));
    for (std::size_t c = 0; c < idx.size(); ++c) Ap.col(static_cast<Eigen::Index>(c)) = A.col(idx[c]);
    const RVector zp = Ap.colPivHouseholderQr().solve(b);
    RVector z = RVector::Zero(n);
    for (std::size_t c = 0; c < idx.size(); ++c) z(idx[c]) = zp(static_cast<Eigen::Index>(c));
    return z;
  };

  for (int outer = 0; outer < 3 * n + 10; ++outer) {
    Eigen::Index best = -1;
    double best_w = tol;
    for (Eigen::Index j = 0; j < n; ++j)
      if (!passive[static_cast<std::size_t>(j)] && w(j) > best_w) {
        best_w = w(j);
        best = j;
      }
    if (best < 0) break;
    passive[static_cast<std::size_t>(best)] = true;

    for (int inner = 0; inner < 3 * n + 10; ++inner) {
      const RVector z = solve_passive();
      bool feasible = true;
      double alpha = 1.0;
      for (Eigen::Index j = 0; j < n; ++j) {
        if (passive[static_cast<std::size_t>(j)] && z(j) <= 0.0) {
          feasible = false;
          alpha = std::min(alpha, x(j) / (x(j) - z(j)));
        }
      }
      if (feasible) {
        x = z;
        break;
      }
      x += alpha * (z - x);
      for (Eigen::Index j = 0; j < n; ++j)
        if (passive[static_cast<std::size_t>(j)] && x(j) <= tol) {
          passive[static_cast<std::size_t>(j)] = false;
          x(j) = 0.0;
        }
    }
    w = A.transpose() * (b - A * x);
  }
  return x;
}

struct Solution {
  RVector x;
  RMatrix bread;  // (A^T A)^{-1} for the whitened system
};

// Weighted solve for fixed weights, with the optional equality and
// non-negativity constraints.
Solution solve_weighted(const RMatrix& X, const RVector& y, const RVector& w, bool simplex,
                        bool nonnegative) {
  const RVector sw = w.array().sqrt();
  const RMatrix A = sw.asDiagonal() * X;
  const RVector b = sw.asDiagonal() * y;
  Eigen::BDCSVD<RMatrix> svd(A, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const RVector inv_s2 = svd.singularValues().array().square().inverse();
  Solution sol;
  sol.bread = svd.matrixV() * inv_s2.asDiagonal() * svd.matrixV().transpose();

  if (nonnegative) {
    if (simplex) {
      const double m = 1e3 * std::max(1.0, A.norm());
      RMatrix Aa(A.rows() + 1, A.cols());
      Aa << A, RMatrix::Constant(1, A.cols(), m);
      RVector ba(b.size() + 1);
      ba << b, m;
      sol.x = nnls(Aa, ba);
    } else {
      sol.x = nnls(A, b);
    }
    return sol;
  }

  sol.x = svd.solve(b);
  if (simplex) {
    const RVector c1 = sol.bread.rowwise().sum();
    const double denom = c1.sum();
    sol.x -= c1 * ((sol.x.sum() - 1.0) / denom);
    sol.bread -= c1 * c1.transpose() / denom;
  }
  return sol;
}

// Multinomial covariance of the pooled rows at each time point evaluated at
// the predicted probabilities, wrapped in the weighted-LS sandwich.
RMatrix sandwich_covariance(const Design& design, const RMatrix& bread, const RVector& w,
                            const RVector& predicted, std::int64_t shots) {
  const double n = static_cast<double>(shots);
  const double lo = 0.5 / n;
  const Eigen::Index per_time = static_cast<Eigen::Index>(design.configs.size());
  const RMatrix WX = w.asDiagonal() * design.X;
  RMatrix meat = RMatrix::Zero(design.X.cols(), design.X.cols());
  for (Eigen::Index start = 0; start < design.X.rows(); start += per_time) {
    const RVector p = predicted.segment(start, per_time).array().max(lo).min(1.0 - lo);
    RMatrix sigma = -p * p.transpose() / n;
    sigma.diagonal() = (p.array() * (1.0 - p.array()) / n).matrix();
    const auto block = WX.middleRows(start, per_time);
    meat.noalias() += block.transpose() * sigma * block;
  }
  return bread * meat * bread;
}

std::string format_condition(double cond) {
  std::ostringstream os;
  os.precision(4);
  os << cond;
  return os.str();
}

FockDistribution fit_columns(const TimeScanData& scan, const std::vector<MultiIndex>& columns,
                             int box_kmax, bool restricted, const FitOptions& options) {
  if (columns.empty()) throw ConfigError("fit: empty basis");
  const Design design = build_design(scan, columns, options.all_down_only, options.coherence_time);
  const Eigen::Index params = design.X.cols();
  if (static_cast<Eigen::Index>(scan.times.size()) < params)
    throw ConfigError("fit: " + std::to_string(scan.times.size()) + " time points for " +
                      std::to_string(params) + " parameters; extend the time grid or lower k_max");

  Eigen::JacobiSVD<RMatrix> svd(design.X);
  const RVector& sv = svd.singularValues();
  const double cond = sv(sv.size() - 1) > 0.0 ? sv(0) / sv(sv.size() - 1)
                                              : std::numeric_limits<double>::infinity();
  if (!(sv(sv.size() - 1) > options.rank_tolerance * sv(0)))
    throw RankDeficient("fit: design matrix is rank deficient; choose distinct Rabi frequencies "
                        "per mode or a longer time grid",
                        cond);

  const RVector unit = RVector::Ones(design.y.size());
  Solution sol = solve_weighted(design.X, design.y, unit, options.simplex, options.nonnegative);
  RVector weights = unit;
  if (scan.shots) {
    weights = clipped_weights(design.X * sol.x, *scan.shots);
    sol = solve_weighted(design.X, design.y, weights, options.simplex, options.nonnegative);
  }

  const RVector predicted = design.X * sol.x;
  const RVector residual = design.y - predicted;
  FitDiagnostics diag;
  diag.condition_number = cond;
  diag.chi2 = residual.dot(weights.asDiagonal() * residual);
  const Eigen::Index per_time = static_cast<Eigen::Index>(design.configs.size());
  const Eigen::Index independent =
      per_time > 1 ? design.X.rows() / per_time * (per_time - 1) : design.X.rows();
  diag.dof = static_cast<int>(independent - params + (options.simplex ? 1 : 0));
  diag.residual_rms = std::sqrt(residual.squaredNorm() / static_cast<double>(residual.size()));
  if (scan.shots)
    diag.poor_fit = diag.dof > 0 && diag.reduced_chi2() > options.poor_fit_chi2;
  else
    diag.poor_fit = diag.residual_rms > options.poor_fit_rms;
  if (cond > options.condition_warning)
    diag.warnings.push_back("design matrix condition number " + format_condition(cond) +
                            " exceeds " + format_condition(options.condition_warning) +
                            "; risk of overfitting, reduce k_max or extend the time grid");
  if (diag.poor_fit)
    diag.warnings.push_back("fit residual exceeds the noise model; the basis may exclude populated "
                            "Fock states");

  RMatrix cov;
  if (options.nonnegative) {
    cov = RMatrix::Zero(params, params);
    if (scan.shots && options.bootstrap_resamples > 1) {
      const int reps = options.bootstrap_resamples;
      RMatrix draws(reps, params);
      const std::uint64_t stream = options.seed ^ 0xB5AD4ECEDA1CE2A9ull;
      parallel_for(reps, [&](std::int64_t r) {
        TimeScanData resampled = scan;
        for (Eigen::Index i = 0; i < scan.populations.rows(); ++i) {
          const std::uint64_t counter =
              static_cast<std::uint64_t>(r) * static_cast<std::uint64_t>(scan.populations.rows()) +
              static_cast<std::uint64_t>(i);
          resampled.populations.row(i) =
              sample_frequencies(scan.populations.row(i).transpose(), *scan.shots, stream, counter)
                  .transpose();
        }
        RVector y(design.y.size());
        Eigen::Index row = 0;
        for (Eigen::Index i = 0; i < resampled.populations.rows(); ++i)
          for (int s : design.configs) y(row++) = resampled.populations(i, s);
        draws.row(r) =
            solve_weighted(design.X, y, weights, options.simplex, true).x.transpose();
      });
      const RVector mean = draws.colwise().mean().transpose();
      const RMatrix centred = draws.rowwise() - mean.transpose();
      cov = centred.transpose() * centred / static_cast<double>(reps - 1);
    }
  } else if (scan.shots) {
    cov = sandwich_covariance(design, sol.bread, weights, predicted, *scan.shots);
  } else {
    const double s2 = diag.dof > 0 ? residual.squaredNorm() / diag.dof : 0.0;
    cov = s2 * sol.bread;
  }

  FockDistribution out = FockDistribution::zeros(scan.num_modes(), box_kmax);
  out.covariance = RMatrix::Zero(out.box.size(), out.box.size());
  std::vector<std::int64_t> flat(columns.size());
  for (std::size_t c = 0; c < columns.size(); ++c) flat[c] = out.box.flatten(columns[c]);
  for (std::size_t a = 0; a < columns.size(); ++a) {
    out.values(flat[a]) = sol.x(static_cast<Eigen::Index>(a));
    for (std::size_t b = 0; b < columns.size(); ++b)
      out.covariance(flat[a], flat[b]) =
          cov(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b));
  }
  if (restricted) out.support = columns;
  out.label = scan.label;

  for (std::size_t c = 0; c < columns.size(); ++c) {
    const double v = out.values(flat[c]);
    const double s = out.sigma(columns[c]);
    if (v < -3.0 * s - 1e-9)
      diag.warnings.push_back("population at " + format_index(columns[c]) +
                              " is negative beyond 3 sigma");
  }
  const double ts = out.total_sigma();
  if (std::abs(out.total() - 1.0) > 3.0 * ts + 1e-9)
    diag.warnings.push_back("total population deviates from one beyond 3 sigma");
  out.diagnostics = std::move(diag);
  return out;
}

}  // namespace

FockDistribution fit_fock_distribution(const TimeScanData& scan, int k_max,
                                       const FitOptions& options) {
  if (k_max < 0) throw ConfigError("fit_fock_distribution: k_max must be >= 0");
  scan.validate();
  const IndexBox box(std::vector<int>(scan.num_modes(), k_max + 1));
  return fit_columns(scan, box.all(), k_max, false, options);
}

FockDistribution fit_fock_distribution_restricted(const TimeScanData& scan,
                                                  const std::vector<MultiIndex>& subset,
                                                  const FitOptions& options) {
  scan.validate();
  const int d = scan.num_modes();
  if (subset.empty()) throw ConfigError("fit_fock_distribution_restricted: empty subset");
  std::set<MultiIndex> seen;
  int k_max = 0;
  for (const auto& k : subset) {
    if (static_cast<int>(k.size()) != d)
      throw DimensionMismatch("fit_fock_distribution_restricted: index " + format_index(k) +
                              " has the wrong number of modes");
    for (int v : k) {
      if (v < 0) throw ConfigError("fit_fock_distribution_restricted: negative Fock index");
      k_max = std::max(k_max, v);
    }
    if (!seen.insert(k).second)
      throw ConfigError("fit_fock_distribution_restricted: duplicate index " + format_index(k));
  }
  return fit_columns(scan, subset, k_max, true, options);
}

std::vector<MultiIndex> neighborhood_subset(const std::vector<MultiIndex>& centres, int radius) {
  if (centres.empty()) return {};
  const int d = static_cast<int>(centres.front().size());
  int top = 0;
  for (const auto& c : centres) {
    if (static_cast<int>(c.size()) != d) throw DimensionMismatch("neighborhood_subset: ragged centres");
    for (int v : c) top = std::max(top, v);
  }
  const IndexBox box(std::vector<int>(d, top + radius + 1));
  std::vector<MultiIndex> out;
  for (const auto& k : box.all()) {
    for (const auto& c : centres) {
      int dist = 0;
      for (int j = 0; j < d; ++j) dist += std::abs(k[j] - c[j]);
      if (dist <= radius) {
        out.push_back(k);
        break;
      }
    }
  }
  return out;
}

double design_condition_number(const TimeScanData& scan, int k_max, bool all_down_only) {
  scan.validate();
  const IndexBox box(std::vector<int>(scan.num_modes(), k_max + 1));
  return condition_of(build_design(scan, box.all(), all_down_only).X);
}

namespace {

template <typename Weights>
std::vector<double> truncated_weights(Weights&& pn, double mean) {
  std::vector<double> out;
  for (int n = 0; n < 4000; ++n) {
    const double p = pn(n);
    out.push_back(p);
    if (p < 1e-6 && n >= mean) break;
  }
  return out;
}

template <typename Model>
ScalarFit scalar_fit(const TimeScanData& scan, double upper, Model&& model, const char* what) {
  scan.validate();
  if (scan.num_modes() != 1) throw ConfigError(std::string(what) + ": expects single-mode, single-ion data");
  const double rabi = scan.calibration.readout_rates(1)[0];
  const std::size_t T = scan.times.size();
  RVector data(static_cast<Eigen::Index>(T));
  for (std::size_t i = 0; i < T; ++i) data(static_cast<Eigen::Index>(i)) = scan.populations(static_cast<Eigen::Index>(i), 0);

  auto curve = [&](double theta) {
    const std::vector<double> p = model(theta);
    RVector m = RVector::Zero(static_cast<Eigen::Index>(T));
    for (std::size_t i = 0; i < T; ++i)
      for (std::size_t n = 0; n < p.size(); ++n)
        m(static_cast<Eigen::Index>(i)) += p[n] * sideband_factor(false, static_cast<int>(n), rabi, scan.times[i]);
    return m;
  };

  RVector w = RVector::Ones(static_cast<Eigen::Index>(T));
  auto chi2 = [&](double theta) {
    const RVector r = data - curve(theta);
    return r.dot(w.asDiagonal() * r);
  };

  auto minimise = [&]() {
    constexpr int grid = 200;
    double best = 0.0;
    double best_val = std::numeric_limits<double>::infinity();
    for (int g = 0; g <= grid; ++g) {
      const double theta = upper * g / grid;
      const double v = chi2(theta);
      if (v < best_val) {
        best_val = v;
        best = theta;
      }
    }
    const double step = upper / grid;
    std::uintmax_t iters = 200;
    const auto res = boost::math::tools::brent_find_minima(
        chi2, std::max(0.0, best - step), std::min(upper, best + step), 50, iters);
    if (iters >= 200 || !std::isfinite(res.second))
      throw NumericalError(std::string(what) + ": scalar minimisation did not converge");
    return res.first;
  };

  double theta = minimise();
  if (scan.shots) {
    w = clipped_weights(curve(theta), *scan.shots);
    theta = minimise();
  }

  const double h = 1e-6 * std::max(1.0, theta);
  const RVector deriv = theta - h >= 0.0 ? RVector((curve(theta + h) - curve(theta - h)) / (2.0 * h))
                                         : RVector((curve(theta + h) - curve(theta)) / h);
  ScalarFit fit;
  fit.value = theta;
  fit.chi2 = chi2(theta);
  fit.dof = static_cast<int>(T) - 1;
  const double info = deriv.dot(w.asDiagonal() * deriv);
  if (scan.shots) {
    fit.sigma = info > 0.0 ? 1.0 / std::sqrt(info) : std::numeric_limits<double>::infinity();
  } else {
    const double s2 = fit.dof > 0 ? fit.chi2 / fit.dof : 0.0;
    fit.sigma = info > 0.0 ? std::sqrt(s2 / info) : 0.0;
  }
  return fit;
}

}  // namespace

ScalarFit fit_thermal_nbar(const TimeScanData& scan, double max_nbar) {
  if (!(max_nbar > 0.0)) throw ConfigError("fit_thermal_nbar: max_nbar must be positive");
  return scalar_fit(
      scan, max_nbar,
      [](double nbar) { return truncated_weights([&](int n) { return thermal_probability(nbar, n); }, nbar); },
      "fit_thermal_nbar");
}

ScalarFit fit_coherent_alpha(const TimeScanData& scan, double max_alpha) {
  if (!(max_alpha > 0.0)) throw ConfigError("fit_coherent_alpha: max_alpha must be positive");
  return scalar_fit(
      scan, max_alpha,
      [](double a) {
        return truncated_weights([&](int n) { return poisson_probability(a, n); }, a * a);
      },
      "fit_coherent_alpha");
}

}  // namespace mmtomo
