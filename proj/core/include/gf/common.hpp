#ifndef GF_COMMON_HPP
#define GF_COMMON_HPP

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace gf {

using Real = double;

// Error hierarchy. The CLI maps ShapeError/ContractError/FormatError to
// exit code 2 and anything else to exit code 1.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Dimension/shape mismatch between tensors.
struct ShapeError : Error {
  using Error::Error;
};

// Violated precondition (bad argument, bad state).
struct ContractError : Error {
  using Error::Error;
};

// Malformed file content (magic, truncation, bad line).
struct FormatError : Error {
  using Error::Error;
};

// Filesystem-level failure, carries the path.
struct IoError : Error {
  using Error::Error;
};

// Rejection sampling could not satisfy the episode constraints.
struct GenerationError : ContractError {
  using ContractError::ContractError;
};

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t fnv1a64(const char* s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (; *s; ++s) {
    h ^= static_cast<unsigned char>(*s);
    h *= 0x100000001b3ULL;
  }
  return h;
}

// Seeded random source. Draws come straight from mt19937_64 output words,
// so identical seeds give identical streams on every platform; the standard
// distributions are avoided because their output is implementation-defined.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : eng_(seed) {}

  // Derives an independent stream from (seed, tag, indices...).
  static Rng stream(std::uint64_t seed, const char* tag,
                    std::initializer_list<std::uint64_t> path = {}) {
    std::uint64_t h = splitmix64(seed ^ fnv1a64(tag));
    for (std::uint64_t p : path) h = splitmix64(h ^ p);
    return Rng(h);
  }

  std::uint64_t next_u64() { return eng_(); }

  // Uniform in [0, 1).
  Real uniform() {
    return static_cast<Real>(next_u64() >> 11) * 0x1.0p-53;
  }

  Real uniform(Real lo, Real hi) { return lo + (hi - lo) * uniform(); }

  // Standard normal via Box-Muller (one value per call).
  Real normal() {
    Real u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    Real u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) *
           std::cos(2.0 * 3.14159265358979323846 * u2);
  }

  // Uniform index in [0, n).
  std::size_t index(std::size_t n) {
    return static_cast<std::size_t>(next_u64() % static_cast<std::uint64_t>(n));
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = index(i);
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::mt19937_64 eng_;
};

std::string shape_str(const std::vector<std::size_t>& shape);

}  // namespace gf

#endif
