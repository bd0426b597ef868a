#ifndef MMTOMO_TESTS_SUPPORT_HPP
#define MMTOMO_TESTS_SUPPORT_HPP

#include <random>

#include "mmtomo/fockspace.hpp"

namespace mmtomo::testing {

inline CMatrix random_complex(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng) {
  std::normal_distribution<double> g;
  CMatrix m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = Complex(g(rng), g(rng));
  return m;
}

/// Ginibre-distributed full-rank density matrix on a uniform cutoff.
inline DensityMatrix random_density(int modes, int cutoff, std::mt19937_64& rng) {
  const HilbertConfig cfg = HilbertConfig::uniform(modes, cutoff);
  const Eigen::Index n = cfg.mode_dimension();
  const CMatrix g = random_complex(n, n, rng);
  CMatrix rho = g * g.adjoint();
  rho /= rho.trace().real();
  return {cfg, rho};
}

inline PureState random_pure(int modes, int cutoff, std::mt19937_64& rng) {
  const HilbertConfig cfg = HilbertConfig::uniform(modes, cutoff);
  PureState s{cfg, random_complex(cfg.mode_dimension(), 1, rng)};
  s.normalize();
  return s;
}

}  // namespace mmtomo::testing

#endif  // MMTOMO_TESTS_SUPPORT_HPP
