#include <doctest.h>

#include <chrono>
#include <cmath>
#include <random>

#include "mmtomo/dynamics.hpp"
#include "mmtomo/reconstruction.hpp"
#include "support.hpp"

using namespace mmtomo;

namespace {

DisplacementGrid grid_for(std::vector<double> mags, int n_max, std::vector<double> offsets = {}) {
  DisplacementGrid g;
  g.magnitudes = std::move(mags);
  g.n_max = n_max;
  g.phase_offsets = std::move(offsets);
  return g;
}

double max_abs(const CMatrix& m) { return m.cwiseAbs().maxCoeff(); }

PureState bell_i() {
  PureState s{HilbertConfig::uniform(2, 1), CVector::Zero(4)};
  s.amplitudes(0) = 1.0 / std::sqrt(2.0);
  s.amplitudes(3) = Complex(0.0, 1.0 / std::sqrt(2.0));
  return s;
}

}  // namespace

TEST_CASE("gamma reduces to the Poisson weight for n = l = 0") {
  for (double a : {0.2, 0.52, 1.3})
    for (int k = 0; k < 10; ++k)
      CHECK(gamma_coefficient(k, 0, 0, a) ==
            doctest::Approx(std::exp(-a * a) * std::pow(a, 2 * k) / std::tgamma(k + 1.0)).epsilon(1e-12));
  CHECK(gamma_coefficient(0, 1, 0, 0.52) == doctest::Approx(0.2062).epsilon(1e-3));
}

TEST_CASE("gamma matches displacement matrix elements") {
  for (double a : {0.3, 0.52, 0.9}) {
    const CMatrix d = displacement_matrix(Complex(a, 0.0), 40, kDefaultGuardLevels);
    for (int k = 0; k <= 6; ++k)
      for (int n = 0; n <= 4; ++n)
        for (int l = -n; l <= 4; ++l) {
          const double brute = (std::conj(d(n, k)) * d(n + l, k)).real();
          CHECK(std::abs(gamma_coefficient(k, n, l, a) - brute) < 1e-10);
        }
  }
}

TEST_CASE("gamma stays finite and accurate beyond factorial-overflow-prone indices") {
  const double a = 0.5;
  const CMatrix d = displacement_matrix(Complex(a, 0.0), 60, kDefaultGuardLevels);
  for (int k : {21, 24})
    for (int n : {21, 23})
      for (int l : {-2, 0, 1}) {
        const double g = gamma_coefficient(k, n, l, a);
        const double brute = (std::conj(d(n, k)) * d(n + l, k)).real();
        CHECK(std::isfinite(g));
        CHECK(std::abs(g - brute) < 1e-10);
      }
  CHECK_THROWS_AS(gamma_coefficient(1, 0, -1, 0.5), ConfigError);
  CHECK_THROWS_AS(gamma_coefficient(1, 0, 0, 0.0), ConfigError);
}

TEST_CASE("gamma sum reproduces displaced populations of diagonal and general states") {
  std::mt19937_64 rng(7);
  for (int d = 1; d <= 2; ++d) {
    const int n_max = 2, k_max = 4;
    const DisplacementGrid grid = grid_for(std::vector<double>(d, 0.6), n_max);
    DensityMatrix rho = testing::random_density(d, n_max, rng);
    DensityMatrix diag = rho;
    diag.matrix = CMatrix(rho.matrix.diagonal().asDiagonal());
    for (const DensityMatrix* r : {&diag, &rho}) {
      const QDataset q = exact_qdataset(*r, grid, k_max);
      for (const auto& l : all_l_tuples(d, n_max)) {
        const GammaSystem sys = gamma_system(grid, l, k_max);
        const IndexBox rho_box(std::vector<int>(d, n_max + 1));
        CVector x(static_cast<Eigen::Index>(sys.unknowns.size()));
        for (std::size_t c = 0; c < sys.unknowns.size(); ++c) {
          MultiIndex m = sys.unknowns[c];
          for (int j = 0; j < d; ++j) m[j] += l[j];
          x(static_cast<Eigen::Index>(c)) = r->matrix(rho_box.flatten(sys.unknowns[c]), rho_box.flatten(m));
        }
        const CVector rhs = sys.gamma.cast<Complex>() * x;
        const DftComponent comp = dft_transform(q, l);
        CHECK((rhs - comp.values).cwiseAbs().maxCoeff() < 1e-10);
      }
    }
  }
}

TEST_CASE("zero-frequency DFT component is the grid mean; vacuum has no l != 0 component") {
  const DisplacementGrid grid = grid_for({0.5, 0.45}, 1);
  const DensityMatrix vac = DensityMatrix::from_pure(PureState::vacuum(HilbertConfig::uniform(2, 1)));
  const QDataset q = exact_qdataset(vac, grid, 3);
  RVector mean = RVector::Zero(16);
  for (const auto& [p, dist] : q.points) mean += dist.values;
  mean /= static_cast<double>(q.points.size());
  CHECK((dft_transform(q, {0, 0}).values.real() - mean).cwiseAbs().maxCoeff() < 1e-14);
  for (const auto& l : all_l_tuples(2, 1)) {
    if (l == MultiIndex{0, 0}) continue;
    CHECK(dft_transform(q, l).values.cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("Bell state with imaginary coherence: DFT component and inversion") {
  const DisplacementGrid grid = grid_for({0.52, 0.51}, 1);
  const DensityMatrix rho = DensityMatrix::from_pure(bell_i());
  const QDataset q = exact_qdataset(rho, grid, 3);

  const DftComponent comp = dft_transform(q, {1, 1});
  const IndexBox kbox({4, 4});
  for (const auto& k : kbox.all()) {
    const Complex expected = gamma_coefficient(k[0], 0, 1, 0.52) *
                             gamma_coefficient(k[1], 0, 1, 0.51) * rho.matrix(0, 3);
    CHECK(std::abs(comp.values(kbox.flatten(k)) - expected) < 1e-10);
  }

  const ReconstructedState out = reconstruct(q, bell_i());
  CHECK(std::abs(out.rho_raw(0, 3) - Complex(0.0, -0.5)) < 1e-8);
  CHECK(std::abs(out.rho_raw(3, 0) - Complex(0.0, 0.5)) < 1e-8);
  CHECK(std::abs(out.rho_raw(0, 0) - 0.5) < 1e-8);
  CHECK(std::abs(out.rho_raw(3, 3) - 0.5) < 1e-8);
  REQUIRE(out.fidelity_raw.has_value());
  CHECK(*out.fidelity_raw > 0.999);
  CHECK(*out.fidelity_psd > 0.999);
  CHECK(out.covariance.size() == 0);
}

TEST_CASE("vacuum reconstructs to the vacuum projector") {
  const DisplacementGrid grid = grid_for({0.5, 0.5}, 1);
  const DensityMatrix vac = DensityMatrix::from_pure(PureState::vacuum(HilbertConfig::uniform(2, 1)));
  const ReconstructedState out = reconstruct(exact_qdataset(vac, grid, 3));
  CMatrix expected = CMatrix::Zero(4, 4);
  expected(0, 0) = 1.0;
  CHECK(max_abs(out.rho_raw - expected) < 1e-9);
}

TEST_CASE("round trip on random states, with and without grid phase offsets") {
  std::mt19937_64 rng(2024);
  for (int d = 1; d <= 2; ++d)
    for (int n_max = 1; n_max <= 2; ++n_max)
      for (bool offset : {false, true}) {
        std::vector<double> offsets;
        if (offset)
          for (int j = 0; j < d; ++j) offsets.push_back(55.0 * kPi / 180.0 + 0.3 * j);
        const DisplacementGrid grid = grid_for(std::vector<double>(d, 0.55), n_max, offsets);
        for (int trial = 0; trial < 3; ++trial) {
          const DensityMatrix rho = testing::random_density(d, n_max, rng);
          const ReconstructedState out = reconstruct(exact_qdataset(rho, grid, n_max + 2));
          CHECK(max_abs(out.rho_raw - rho.matrix) < 1e-7);
        }
      }
}

TEST_CASE("reconstruction is linear in the state") {
  std::mt19937_64 rng(99);
  const DisplacementGrid grid = grid_for({0.5, 0.6}, 1);
  const DensityMatrix a = testing::random_density(2, 1, rng);
  const DensityMatrix b = testing::random_density(2, 1, rng);
  const double w = 0.3;
  DensityMatrix mix{a.config, w * a.matrix + (1.0 - w) * b.matrix};
  const CMatrix ra = reconstruct(exact_qdataset(a, grid, 3)).rho_raw;
  const CMatrix rb = reconstruct(exact_qdataset(b, grid, 3)).rho_raw;
  const CMatrix rm = reconstruct(exact_qdataset(mix, grid, 3)).rho_raw;
  CHECK(max_abs(rm - (w * ra + (1.0 - w) * rb)) < 1e-9);
}

TEST_CASE("hermitize") {
  std::mt19937_64 rng(3);
  const CMatrix m = testing::random_complex(5, 5, rng);
  const CMatrix h = hermitize(m);
  CHECK(max_abs(h - h.adjoint()) == 0.0);
  CHECK(max_abs(hermitize(h) - h) == 0.0);
  const CMatrix herm = (m + m.adjoint()) / 2.0;
  const CMatrix anti = (m - m.adjoint()) / 2.0;
  CHECK(max_abs(hermitize(herm + 0.1 * anti) - herm) < 1e-15);
  CHECK_THROWS_AS(hermitize(CMatrix::Zero(2, 3)), DimensionMismatch);
}

TEST_CASE("project_psd basic cases") {
  std::mt19937_64 rng(4);
  const DensityMatrix rho = testing::random_density(2, 1, rng);
  CHECK(max_abs(project_psd(rho.matrix) - rho.matrix) < 1e-12);

  CMatrix m = CMatrix::Zero(2, 2);
  m(0, 0) = 1.1;
  m(1, 1) = -0.1;
  CMatrix expected = CMatrix::Zero(2, 2);
  expected(0, 0) = 1.0;
  CHECK(max_abs(project_psd(m) - expected) < 1e-14);

  const CMatrix negative = -CMatrix::Identity(3, 3);
  CHECK(max_abs(project_psd(negative) - CMatrix::Identity(3, 3) / 3.0) < 1e-15);

  // Works for other scalar types too.
  const Eigen::MatrixXcf mf = m.cast<std::complex<float>>();
  CHECK(std::abs(project_psd(mf)(0, 0) - std::complex<float>(1.0f)) < 1e-6f);
}

TEST_CASE("clipping is the Frobenius-nearest PSD matrix before renormalization") {
  std::mt19937_64 rng(11);
  for (int n : {2, 4}) {
    for (int trial = 0; trial < 3; ++trial) {
      const CMatrix h = hermitize(testing::random_complex(n, n, rng)) / static_cast<double>(n);
      Eigen::SelfAdjointEigenSolver<CMatrix> eig(h);
      const double positive = eig.eigenvalues().cwiseMax(0.0).sum();
      const CMatrix clipped = project_psd(h) * positive;

      // Brute force: minimise |B B^dag - H|_F^2 over B by gradient descent.
      CMatrix b = testing::random_complex(n, n, rng) * 0.3;
      double step = 0.02;
      for (int it = 0; it < 40000; ++it) {
        const CMatrix r = b * b.adjoint() - h;
        b -= step * 4.0 * r * b;
      }
      const double brute = (b * b.adjoint() - h).norm();
      const double clip = (clipped - h).norm();
      CHECK(clip <= brute + 1e-9);
      CHECK(clip == doctest::Approx(brute).epsilon(1e-4));
    }
  }
}

TEST_CASE("grid validation and dataset completeness") {
  const DisplacementGrid zero = grid_for({0.0, 0.5}, 1);
  const DensityMatrix vac = DensityMatrix::from_pure(PureState::vacuum(HilbertConfig::uniform(2, 1)));
  CHECK_THROWS_AS(exact_qdataset(vac, zero, 3), ConfigError);

  const DisplacementGrid grid = grid_for({0.5, 0.5}, 1);
  CHECK(grid.settings().size() == 16);
  CHECK(grid.settings().front() == MultiIndex{-2, -2});
  CHECK(grid.settings().back() == MultiIndex{1, 1});

  QDataset q = exact_qdataset(vac, grid, 3);
  q.points.erase(MultiIndex{0, 1});
  try {
    reconstruct(q);
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("(0,1)") != std::string::npos);
  }
  QDataset low = exact_qdataset(vac, grid, 3);
  low.k_max = 0;
  CHECK_THROWS_AS(low.validate(), ConfigError);
}

TEST_CASE("covariance propagation matches empirical scatter") {
  const DisplacementGrid grid = grid_for({0.52, 0.51}, 1);
  const DensityMatrix rho = DensityMatrix::from_pure(bell_i());
  QDataset exact = exact_qdataset(rho, grid, 3);
  const double sigma = 0.01;
  for (auto& [p, dist] : exact.points) dist.covariance = RMatrix::Identity(16, 16) * sigma * sigma;

  const ReconstructedState ref = reconstruct(exact);
  REQUIRE(ref.covariance.rows() == 32);
  CHECK(max_abs(ref.rho_raw - rho.matrix) < 1e-8);

  // Standalone inversion reports the same element uncertainties.
  std::vector<DftComponent> comps;
  for (const auto& l : all_l_tuples(2, 1)) comps.push_back(dft_transform(exact, l));
  const RawReconstruction raw = invert_gamma(comps, grid, 3);
  CHECK((raw.sigma_real - ref.sigma_real).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((raw.sigma_imag - ref.sigma_imag).cwiseAbs().maxCoeff() < 1e-12);

  std::mt19937_64 rng(5);
  std::normal_distribution<double> noise(0.0, sigma);
  const int reps = 200;
  RMatrix sum = RMatrix::Zero(4, 8), sum2 = RMatrix::Zero(4, 8);
  for (int r = 0; r < reps; ++r) {
    QDataset noisy = exact;
    for (auto& [p, dist] : noisy.points)
      for (Eigen::Index i = 0; i < dist.values.size(); ++i) dist.values(i) += noise(rng);
    const CMatrix est = reconstruct(noisy).rho_raw - rho.matrix;
    RMatrix parts(4, 8);
    parts << est.real(), est.imag();
    sum += parts;
    sum2 += parts.cwiseAbs2();
  }
  RMatrix predicted(4, 8);
  predicted << ref.sigma_real, ref.sigma_imag;
  for (Eigen::Index a = 0; a < 4; ++a)
    for (Eigen::Index b = 0; b < 8; ++b) {
      if (predicted(a, b) < 1e-12) continue;  // imaginary parts of the diagonal
      const double mean = sum(a, b) / reps;
      const double emp = std::sqrt(sum2(a, b) / reps - mean * mean);
      CHECK(emp / predicted(a, b) == doctest::Approx(1.0).epsilon(0.25));
    }
}

TEST_CASE("poorly chosen grid reports conditioning") {
  // Gamma^(0) is exactly singular at |alpha|^2 = 1/2 for n_max = k_max = 1
  // and at |alpha| = 1/2 for n_max = k_max = 2.
  CHECK_THROWS_AS(gamma_system(grid_for({std::sqrt(0.5)}, 1), {0}, 1), RankDeficient);
  CHECK_THROWS_AS(gamma_system(grid_for({0.5}, 2), {0}, 2), RankDeficient);
  CHECK_NOTHROW(gamma_system(grid_for({0.5}, 2), {0}, 3));
  try {
    gamma_system(grid_for({0.5}, 2), {0}, 2);
  } catch (const RankDeficient& e) {
    CHECK(e.condition_number() > 1e10);
  }
}
