#include <doctest.h>

#include <cmath>
#include <random>

#include "mmtomo/fockspace.hpp"
#include "support.hpp"

using namespace mmtomo;

namespace {

// <m| D(alpha) |n> from the associated Laguerre closed form.
Complex displacement_element(Complex alpha, int m, int n) {
  const double x = std::norm(alpha);
  if (m >= n) {
    const double pref = std::exp(0.5 * (std::lgamma(n + 1.0) - std::lgamma(m + 1.0)) - 0.5 * x);
    return pref * std::pow(alpha, m - n) * std::assoc_laguerre(static_cast<unsigned>(n), static_cast<unsigned>(m - n), x);
  }
  const double pref = std::exp(0.5 * (std::lgamma(m + 1.0) - std::lgamma(n + 1.0)) - 0.5 * x);
  return pref * std::pow(-std::conj(alpha), n - m) *
         std::assoc_laguerre(static_cast<unsigned>(m), static_cast<unsigned>(n - m), x);
}

}  // namespace

TEST_CASE("HilbertConfig dimensions and validation") {
  const HilbertConfig cfg = HilbertConfig::uniform(3, 2, 2);
  CHECK(cfg.mode_dimension() == 27);
  CHECK(cfg.dimension() == 108);
  CHECK(cfg.levels(1) == 3);
  CHECK(cfg.padded_levels(0) == 3 + kDefaultGuardLevels);
  CHECK(cfg.motional().num_spins == 0);
  CHECK_THROWS_AS(HilbertConfig::uniform(2, 0).validate(), ConfigError);
  CHECK_THROWS_AS(HilbertConfig::uniform(0, 2).validate(), ConfigError);
  CHECK_THROWS_AS(HilbertConfig::uniform(12, 7, 4).validate(), ConfigError);
  CHECK(cfg.same_space(HilbertConfig::uniform(3, 2, 2, 4)));
}

TEST_CASE("basis ordering: spins slowest with spin 0 most significant, then modes") {
  const HilbertConfig cfg = HilbertConfig::uniform(2, 1, 2);
  const PureState s = PureState::basis(cfg, 0b10, {1, 0});
  // spin word 2 (spin 0 up), modes (1, 0) -> 2 * 4 + 1 * 2 + 0
  CHECK(s.index(0b10, {1, 0}) == 10);
  CHECK(s.amplitudes(10) == Complex(1.0));
  CHECK(s.amplitudes.norm() == doctest::Approx(1.0));
  CHECK_THROWS_AS(s.index(4, {0, 0}), ConfigError);
  CHECK_THROWS_AS(s.index(0, {2, 0}), ConfigError);
}

TEST_CASE("ladder and number operators") {
  const CMatrix a = lowering_matrix(5);
  for (int n = 1; n < 5; ++n) CHECK(a(n - 1, n).real() == doctest::Approx(std::sqrt(n)));
  const HilbertConfig cfg = HilbertConfig::uniform(2, 2);
  const CMatrix num = build_operator(ModeOperator::number(1), cfg);
  for (const auto& k : cfg.mode_box().all()) {
    const auto i = cfg.mode_box().flatten(k);
    CHECK(num(i, i).real() == doctest::Approx(k[1]));
  }
  CHECK_THROWS_AS(build_operator(ModeOperator::lower(2), cfg), ConfigError);
  CHECK_THROWS_AS(build_operator(ModeOperator::lower(0), HilbertConfig::uniform(6, 4)), ConfigError);
}

TEST_CASE("displacement matrix matches the Laguerre closed form") {
  for (const Complex alpha : {Complex(0.52, 0.0), Complex(0.3, -0.4), Complex(-1.1, 0.7)}) {
    const CMatrix d = displacement_matrix(alpha, 8, kDefaultGuardLevels);
    for (int m = 0; m < 8; ++m)
      for (int n = 0; n < 8; ++n) CHECK(std::abs(d(m, n) - displacement_element(alpha, m, n)) < 1e-12);
  }
}

TEST_CASE("D(alpha)|0> is the coherent state and D(-alpha) inverts it on low levels") {
  const Complex alpha(0.4, 0.3);
  const CMatrix d = displacement_matrix(alpha, 20, kDefaultGuardLevels);
  const PureState coh = coherent_state(alpha, 19);
  CHECK((d.col(0) - coh.amplitudes).cwiseAbs().maxCoeff() < 1e-12);
  const CMatrix back = displacement_matrix(-alpha, 20, kDefaultGuardLevels) * d;
  CHECK((back.topLeftCorner(5, 5) - CMatrix::Identity(5, 5)).cwiseAbs().maxCoeff() < 1e-10);
  const CMatrix via_builder = build_operator(ModeOperator::displacement(0, alpha), HilbertConfig::uniform(1, 19));
  CHECK((via_builder - d).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("displaced populations: vacuum gives Poisson, leaks are detected") {
  const HilbertConfig cfg = HilbertConfig::uniform(2, 12);
  const DensityMatrix vac = DensityMatrix::from_pure(PureState::vacuum(cfg));
  const RVector q = displaced_populations(vac, {Complex(0.5, 0.0), Complex(0.0, 0.3)});
  const IndexBox box = cfg.mode_box();
  for (int k0 = 0; k0 < 4; ++k0)
    for (int k1 = 0; k1 < 4; ++k1) {
      const double expected = std::exp(-0.25) * std::pow(0.25, k0) / std::tgamma(k0 + 1.0) *
                              std::exp(-0.09) * std::pow(0.09, k1) / std::tgamma(k1 + 1.0);
      CHECK(q(box.flatten({k0, k1})) == doctest::Approx(expected).epsilon(1e-12));
    }
  const DensityMatrix small = DensityMatrix::from_pure(PureState::vacuum(HilbertConfig::uniform(1, 2)));
  CHECK_THROWS_AS(displaced_populations(small, {Complex(1.5, 0.0)}), TruncationLeak);
  const DisplacedPopulations loose = displaced_populations_with_leak(small, {Complex(1.5, 0.0)}, 1.0);
  CHECK(loose.leaked > 0.1);
  CHECK_THROWS_AS(displaced_populations(small, {Complex(0.1), Complex(0.1)}), DimensionMismatch);
}

TEST_CASE("fidelity and trace distance") {
  std::mt19937_64 rng(1);
  const PureState a = testing::random_pure(2, 1, rng);
  const PureState b = testing::random_pure(2, 1, rng);
  const DensityMatrix ra = DensityMatrix::from_pure(a);
  CHECK(fidelity(ra, a) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(fidelity(ra, b) == doctest::Approx(std::norm(a.amplitudes.dot(b.amplitudes))).epsilon(1e-12));

  const PureState e0 = PureState::basis(HilbertConfig::uniform(1, 1), 0, {0});
  const PureState e1 = PureState::basis(HilbertConfig::uniform(1, 1), 0, {1});
  CHECK(trace_distance(DensityMatrix::from_pure(e0), DensityMatrix::from_pure(e1)) == doctest::Approx(1.0));
  // Templated overload on single precision.
  const Eigen::MatrixXcf fa = ra.matrix.cast<std::complex<float>>();
  CHECK(trace_distance(fa, fa) == doctest::Approx(0.0f).scale(1.0f));
  CHECK_THROWS_AS(fidelity(ra, e0), DimensionMismatch);
}

TEST_CASE("spin helpers, resize and tensor products") {
  std::mt19937_64 rng(2);
  const PureState m = testing::random_pure(2, 2, rng);
  const PureState with = with_spins_down(m, 2);
  CHECK(with.config.num_spins == 2);
  CHECK((motional_part(with).amplitudes - m.amplitudes).norm() < 1e-15);
  const DensityMatrix traced = trace_out_spins(with);
  CHECK((traced.matrix - DensityMatrix::from_pure(m).matrix).cwiseAbs().maxCoeff() < 1e-15);

  PureState flipped = PureState::basis(HilbertConfig::uniform(1, 1, 1), 1, {0});
  CHECK_THROWS_AS(motional_part(flipped), ConfigError);

  const PureState bigger = resize(m, {4, 3});
  CHECK(bigger.amplitudes.norm() == doctest::Approx(1.0));
  CHECK(bigger.amplitudes(bigger.config.mode_box().flatten({2, 1})) ==
        m.amplitudes(m.config.mode_box().flatten({2, 1})));
  CHECK_THROWS_AS(resize(m, {1, 1}), TruncationLeak);
  const PureState vac = resize(PureState::vacuum(HilbertConfig::uniform(2, 3)), {1, 1});
  CHECK(vac.amplitudes(0) == Complex(1.0));

  const PureState a = coherent_state(Complex(0.2, 0.0), 3);
  const PureState b = coherent_state(Complex(0.0, 0.1), 2);
  const PureState ab = tensor(a, b);
  CHECK(ab.config.cutoffs == std::vector<int>{3, 2});
  CHECK(ab.amplitudes(ab.config.mode_box().flatten({1, 2})) == a.amplitudes(1) * b.amplitudes(2));
}

TEST_CASE("density matrix validation") {
  const HilbertConfig cfg = HilbertConfig::uniform(1, 1);
  CHECK_THROWS_AS(DensityMatrix::from_matrix(cfg, CMatrix::Identity(3, 3)), DimensionMismatch);
  CMatrix m = CMatrix::Identity(2, 2) / 2.0;
  m(0, 1) = Complex(0.0, 0.1);
  CHECK_THROWS_AS(DensityMatrix::from_matrix(cfg, m).check_physical(), ConfigError);
  m(1, 0) = Complex(0.0, -0.1);
  CHECK_NOTHROW(DensityMatrix::from_matrix(cfg, m).check_physical());
  CHECK_THROWS_AS(DensityMatrix::from_pure(with_spins_down(PureState::vacuum(cfg), 1)), ConfigError);
}
