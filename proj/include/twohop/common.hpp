#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace twohop {

struct error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline void require(bool ok, const std::string& msg) {
  if (!ok) throw error(msg);
}

// 64-bit FNV-1a, used for seed derivation and content hashes of inputs.
inline std::uint64_t fnv1a(std::string_view bytes, std::uint64_t h = 0xcbf29ce484222325ull) {
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

// Deterministic, platform-independent RNG. std::*_distribution is
// implementation-defined, so all sampling goes through this type.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() {
    // splitmix64
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  // uniform in [0, 1)
  double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // uniform integer in [0, n), rejection sampled
  std::uint64_t below(std::uint64_t n) {
    require(n > 0, "Rng::below: n must be positive");
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t v = next_u64();
    while (v >= limit) v = next_u64();
    return v % n;
  }

  // standard normal via Box-Muller
  double normal() {
    if (spare_) {
      double v = *spare_;
      spare_.reset();
      return v;
    }
    double u1 = next_double();
    while (u1 <= 0.0) u1 = next_double();
    double u2 = next_double();
    double r = std::sqrt(-2.0 * std::log(u1));
    double theta = 2.0 * 3.14159265358979323846 * u2;
    spare_ = r * std::sin(theta);
    return r * std::cos(theta);
  }

  // independent child stream derived from a label
  Rng fork(std::string_view label) const {
    return Rng(fnv1a(label, state_ ^ 0x6a09e667f3bcc908ull));
  }

  template <class T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::uint64_t state_;
  std::optional<double> spare_;
};

// Quantile with linear interpolation between order statistics
// (index q*(n-1), fractional part interpolated).
double quantile(std::vector<double> values, double q);

inline double median(std::vector<double> values) { return quantile(std::move(values), 0.5); }

struct Iqr {
  double q1 = 0.0;
  double q3 = 0.0;
};
Iqr interquartile(std::vector<double> values);

struct PearsonResult {
  double r = 0.0;
  double r2 = 0.0;
  bool defined = false;  // false when either series has zero variance
};
PearsonResult pearson(std::span<const double> a, std::span<const double> b);

double mean(std::span<const double> values);

// file helpers
std::string read_file(const std::string& path);
void write_file(const std::string& path, std::string_view contents);
std::string hex_u64(std::uint64_t v);

bool starts_with_digit(std::string_view s);
std::string trim(std::string_view s);

}  // namespace twohop
