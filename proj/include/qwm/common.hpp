#pragma once

#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace qwm {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Deterministic RNG. splitmix64 core with manual uniform/normal transforms so
// that streams are bit-identical regardless of the standard library.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : state_(seed) {}

  // degenerate stream: every draw is zero. Pins categorical samples to a
  // fixed class so sampled losses become smooth functions for gradient checks.
  static Rng zeros() {
    Rng r;
    r.force_zero_ = true;
    return r;
  }

  std::uint64_t next_u64() {
    if (force_zero_) return 0;
    std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ull);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }

  // uniform in [0, 1)
  double uniform() { return double(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // uniform integer in [0, n)
  std::uint64_t uniform_int(std::uint64_t n) { return next_u64() % n; }

  double normal() {
    if (force_zero_) return 0.0;
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = 0.0;
    while (u1 <= 1e-300) u1 = uniform();
    double u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(a);
    has_spare_ = true;
    return r * std::cos(a);
  }

  // standard normal conditioned on |x| <= bound (rejection)
  double truncated_normal(double bound = 2.0) {
    for (;;) {
      double x = normal();
      if (std::abs(x) <= bound) return x;
    }
  }

  // derive an independent stream
  Rng fork() { return Rng(next_u64()); }

 private:
  std::uint64_t state_;
  bool has_spare_ = false;
  bool force_zero_ = false;
  double spare_ = 0.0;
};

inline bool parse_double(std::string_view s, double& out) {
  const char* b = s.data();
  const char* e = s.data() + s.size();
  auto res = std::from_chars(b, e, out);
  return res.ec == std::errc() && res.ptr == e;
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write file: " + path);
  out << content;
}

// full-precision formatting used by every CSV/text emitter
inline std::string fmt_double(double x) {
  char buf[40];
  auto res = std::to_chars(buf, buf + sizeof(buf), x,
                           std::chars_format::general, 17);
  return std::string(buf, res.ptr);
}

}  // namespace qwm
