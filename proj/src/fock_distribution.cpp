#include "mmtomo/fock_distribution.hpp"

#include <cmath>

namespace mmtomo {

double thermal_probability(double nbar, int n) {
  if (nbar <= 0.0) return n == 0 ? 1.0 : 0.0;
  return std::exp(n * std::log(nbar) - (n + 1) * std::log1p(nbar));
}

double poisson_probability(double magnitude, int n) {
  const double mean = magnitude * magnitude;
  if (mean == 0.0) return n == 0 ? 1.0 : 0.0;
  return std::exp(-mean + n * std::log(mean) - std::lgamma(n + 1.0));
}

FockDistribution FockDistribution::zeros(int num_modes, int k_max) {
  if (num_modes < 1 || k_max < 0) throw ConfigError("FockDistribution: invalid shape");
  FockDistribution p;
  p.box = IndexBox(std::vector<int>(num_modes, k_max + 1));
  p.values = RVector::Zero(p.box.size());
  return p;
}

FockDistribution FockDistribution::from_density(const DensityMatrix& rho) {
  FockDistribution p;
  p.box = rho.config.mode_box();
  p.values = rho.populations();
  p.label = "exact";
  return p;
}

namespace {

template <typename PerMode>
FockDistribution product_distribution(int modes, int k_max, PerMode&& per_mode) {
  FockDistribution p = FockDistribution::zeros(modes, k_max);
  for (std::int64_t i = 0; i < p.box.size(); ++i) {
    const MultiIndex k = p.box.unflatten(i);
    double v = 1.0;
    for (int j = 0; j < modes; ++j) v *= per_mode(j, k[j]);
    p.values(i) = v;
  }
  return p;
}

}  // namespace

FockDistribution FockDistribution::thermal(const std::vector<double>& nbar, int k_max) {
  FockDistribution p = product_distribution(static_cast<int>(nbar.size()), k_max,
                                            [&](int j, int n) { return thermal_probability(nbar[j], n); });
  p.label = "thermal";
  return p;
}

FockDistribution FockDistribution::poisson(const std::vector<double>& magnitudes, int k_max) {
  FockDistribution p =
      product_distribution(static_cast<int>(magnitudes.size()), k_max,
                           [&](int j, int n) { return poisson_probability(magnitudes[j], n); });
  p.label = "poisson";
  return p;
}

double FockDistribution::sigma(const MultiIndex& k) const {
  if (!has_covariance()) return 0.0;
  const std::int64_t i = box.flatten(k);
  return std::sqrt(std::max(0.0, covariance(i, i)));
}

double FockDistribution::total_sigma() const {
  if (!has_covariance()) return 0.0;
  return std::sqrt(std::max(0.0, covariance.sum()));
}

}  // namespace mmtomo
