#ifndef MMTOMO_COMMON_HPP
#define MMTOMO_COMMON_HPP

#include <complex>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace mmtomo {

template <typename Scalar>
using CMatrixT = Eigen::Matrix<std::complex<Scalar>, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using CVectorT = Eigen::Matrix<std::complex<Scalar>, Eigen::Dynamic, 1>;

using Real = double;
using Complex = std::complex<Real>;
using CMatrix = CMatrixT<Real>;
using CVector = CVectorT<Real>;
using RMatrix = Eigen::MatrixXd;
using RVector = Eigen::VectorXd;

/// Multi-index over modes, mode 0 first.
using MultiIndex = std::vector<int>;

inline constexpr double kPi = 3.14159265358979323846;

// Error hierarchy. The CLI maps ConfigError to exit code 2 and
// NumericalError (and subclasses) to exit code 3.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class DimensionMismatch : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

class NumericalError : public Error {
 public:
  using Error::Error;
};

/// Population pushed outside the truncated Fock space exceeded tolerance.
class TruncationLeak : public NumericalError {
 public:
  TruncationLeak(const std::string& where, double leaked, double tolerance);
  double leaked() const { return leaked_; }

 private:
  double leaked_;
};

/// A linear system had no unique least-squares solution.
class RankDeficient : public NumericalError {
 public:
  RankDeficient(const std::string& what, double condition_number);
  double condition_number() const { return condition_; }

 private:
  double condition_;
};

/// Row-major (last index fastest) flattening over a box of extents.
class IndexBox {
 public:
  IndexBox() = default;
  explicit IndexBox(std::vector<int> extents);

  const std::vector<int>& extents() const { return extents_; }
  int rank() const { return static_cast<int>(extents_.size()); }
  std::int64_t size() const { return size_; }

  std::int64_t flatten(const MultiIndex& idx) const;
  MultiIndex unflatten(std::int64_t flat) const;
  bool contains(const MultiIndex& idx) const;
  /// Stride of axis `axis` in the flattened layout.
  std::int64_t stride(int axis) const { return strides_[axis]; }

  /// All multi-indices in flattened order.
  std::vector<MultiIndex> all() const;

 private:
  std::vector<int> extents_;
  std::vector<std::int64_t> strides_;
  std::int64_t size_ = 1;
};

std::string format_index(const MultiIndex& idx);

/// SplitMix64 finalizer, used to derive independent RNG streams.
std::uint64_t splitmix64(std::uint64_t x);

/// Seed of stream `stream` derived from a user seed.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

/// Thread count from MMTOMO_THREADS (0 or unset means hardware concurrency).
int worker_threads();

/// Runs fn(i) for i in [0, n) on worker_threads() threads. fn must only
/// touch per-index state.
template <typename Fn>
void parallel_for(std::int64_t n, Fn&& fn);

}  // namespace mmtomo

#include "mmtomo/detail/parallel.hpp"

#endif  // MMTOMO_COMMON_HPP
