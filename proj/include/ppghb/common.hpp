#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace ppghb {

// Error categories, mapped to distinct CLI exit codes.
struct io_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct format_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct config_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Missing-value marker for feature tables. NaN never compares equal to
// anything, so ordinary arithmetic propagates absence.
inline constexpr double missing_value = std::numeric_limits<double>::quiet_NaN();

inline bool is_missing(double x) { return std::isnan(x); }

enum class Sex { female, male };

inline std::string sex_code(Sex s) { return s == Sex::male ? "M" : "F"; }

// Model encoding: 0 = female, 1 = male.
inline double sex_encoded(Sex s) { return s == Sex::male ? 1.0 : 0.0; }

inline Sex parse_sex(const std::string& code) {
  if (code == "M" || code == "m" || code == "male") return Sex::male;
  if (code == "F" || code == "f" || code == "female") return Sex::female;
  throw format_error("unknown sex code '" + code + "' (expected M or F)");
}

inline double mean_of(const std::vector<double>& x) {
  if (x.empty()) return missing_value;
  double s = 0.0;
  for (double v : x) s += v;
  return s / static_cast<double>(x.size());
}

// Median by value; averages the two middle elements for even counts.
inline double median_of(std::vector<double> x) {
  if (x.empty()) return missing_value;
  const std::size_t n = x.size();
  std::sort(x.begin(), x.end());
  if (n % 2 == 1) return x[n / 2];
  return 0.5 * (x[n / 2 - 1] + x[n / 2]);
}

// Population variance (divisor N).
inline double population_variance(const std::vector<double>& x) {
  if (x.empty()) return missing_value;
  const double m = mean_of(x);
  double s = 0.0;
  for (double v : x) s += (v - m) * (v - m);
  return s / static_cast<double>(x.size());
}

// Sample variance (divisor N-1).
inline double sample_variance(const std::vector<double>& x) {
  if (x.size() < 2) return missing_value;
  const double m = mean_of(x);
  double s = 0.0;
  for (double v : x) s += (v - m) * (v - m);
  return s / static_cast<double>(x.size() - 1);
}

// Deterministic RNG with explicitly coded draw transforms. std::mt19937_64 has
// a standard-specified output sequence, but the <random> distributions do not;
// spelling the transforms out keeps every seeded artifact bit-reproducible
// across standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(splitmix64(seed)) {
    if (state_ == 0) state_ = 0x9e3779b97f4a7c15ULL;
  }

  // xorshift64* core.
  std::uint64_t next_u64() {
    std::uint64_t x = state_;
    x ^= x >> 12;
    x ^= x << 25;
    x ^= x >> 27;
    state_ = x;
    return x * 0x2545f4914f6cdd1dULL;
  }

  // Uniform in [0, 1) with 53-bit resolution.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n). Modulo bias is irrelevant here; determinism is
  // what matters.
  std::uint64_t uniform_int(std::uint64_t n) { return n == 0 ? 0 : next_u64() % n; }

  // Standard normal via Box-Muller.
  double normal() {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double two_pi = 6.283185307179586476925286766559;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(two_pi * u2);
  }

  double normal(double sd) { return sd * normal(); }

  // Derive an independent stream, e.g. one per subject.
  Rng fork(std::uint64_t index) const {
    return Rng(state_ ^ splitmix64(0x632be59bd9b4e019ULL + index));
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      const std::size_t j = static_cast<std::size_t>(uniform_int(i));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  static std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
  }

  std::uint64_t state_;
};

}  // namespace ppghb
