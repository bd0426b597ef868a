#include "mmtomo/common.hpp"

#include <cstdlib>
#include <sstream>
#include <thread>

namespace mmtomo {

namespace {
std::string leak_message(const std::string& where, double leaked, double tolerance) {
  std::ostringstream os;
  os << where << ": population " << leaked << " left the truncated Fock space (tolerance "
     << tolerance << "); raise the cutoff";
  return os.str();
}

std::string rank_message(const std::string& what, double cond) {
  std::ostringstream os;
  os << what << " (condition number " << cond << ")";
  return os.str();
}
}  // namespace

TruncationLeak::TruncationLeak(const std::string& where, double leaked, double tolerance)
    : NumericalError(leak_message(where, leaked, tolerance)), leaked_(leaked) {}

RankDeficient::RankDeficient(const std::string& what, double condition_number)
    : NumericalError(rank_message(what, condition_number)), condition_(condition_number) {}

IndexBox::IndexBox(std::vector<int> extents) : extents_(std::move(extents)) {
  strides_.assign(extents_.size(), 1);
  size_ = 1;
  for (int axis = rank() - 1; axis >= 0; --axis) {
    if (extents_[axis] <= 0) throw ConfigError("IndexBox: extents must be positive");
    strides_[axis] = size_;
    size_ *= extents_[axis];
  }
}

std::int64_t IndexBox::flatten(const MultiIndex& idx) const {
  if (static_cast<int>(idx.size()) != rank())
    throw DimensionMismatch("IndexBox: index rank " + std::to_string(idx.size()) +
                            " does not match box rank " + std::to_string(rank()));
  std::int64_t flat = 0;
  for (int axis = 0; axis < rank(); ++axis) {
    if (idx[axis] < 0 || idx[axis] >= extents_[axis])
      throw ConfigError("IndexBox: index " + format_index(idx) + " out of range");
    flat += idx[axis] * strides_[axis];
  }
  return flat;
}

MultiIndex IndexBox::unflatten(std::int64_t flat) const {
  MultiIndex idx(extents_.size());
  for (int axis = 0; axis < rank(); ++axis) {
    idx[axis] = static_cast<int>(flat / strides_[axis]);
    flat %= strides_[axis];
  }
  return idx;
}

bool IndexBox::contains(const MultiIndex& idx) const {
  if (static_cast<int>(idx.size()) != rank()) return false;
  for (int axis = 0; axis < rank(); ++axis)
    if (idx[axis] < 0 || idx[axis] >= extents_[axis]) return false;
  return true;
}

std::vector<MultiIndex> IndexBox::all() const {
  std::vector<MultiIndex> out;
  out.reserve(static_cast<std::size_t>(size_));
  for (std::int64_t i = 0; i < size_; ++i) out.push_back(unflatten(i));
  return out;
}

std::string format_index(const MultiIndex& idx) {
  std::string s = "(";
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(idx[i]);
  }
  return s + ")";
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  return splitmix64(splitmix64(seed) ^ (stream * 0xD1B54A32D192ED03ull + 1));
}

int worker_threads() {
  if (const char* env = std::getenv("MMTOMO_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && v > 0) return static_cast<int>(v);
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

}  // namespace mmtomo
