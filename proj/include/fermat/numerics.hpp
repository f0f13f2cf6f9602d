#pragma once

// Log-space arithmetic, counter-based random streams and finite-difference
// gradients shared by every other module.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numbers>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace fermat {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Raised when a model or function produces a non-finite value; carries the
/// offending point.
class NonFiniteError : public Error {
public:
  NonFiniteError(const std::string &what, Vector point)
      : Error(what + " at " + format_point(point)), point_(std::move(point)) {}

  const Vector &point() const { return point_; }

  static std::string format_point(const Vector &x) {
    std::ostringstream os;
    os.precision(17);
    os << '(';
    for (Eigen::Index i = 0; i < x.size(); ++i)
      os << (i ? ", " : "") << x[i];
    os << ')';
    return os.str();
  }

private:
  Vector point_;
};

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

/// A positive magnitude stored as its natural logarithm. Negative infinity
/// represents exactly zero.
struct LogScalar {
  double value = kNegInf;

  static LogScalar from_linear(double x) { return {std::log(x)}; }
  double linear() const { return std::exp(value); }
  bool is_zero() const { return value == kNegInf; }

  friend bool operator==(LogScalar, LogScalar) = default;
  friend auto operator<=>(LogScalar a, LogScalar b) { return a.value <=> b.value; }
};

/// log(exp(a) + exp(b)).
inline double log_add(double a, double b) {
  if (a < b)
    std::swap(a, b);
  if (b == kNegInf)
    return a;
  return a + std::log1p(std::exp(b - a));
}

inline LogScalar operator+(LogScalar a, LogScalar b) { return {log_add(a.value, b.value)}; }

/// log(sum(exp(v))) with a max shift. Negative infinities are zero terms.
inline double log_sum_exp(std::span<const double> values) {
  if (values.empty())
    throw Error("log_sum_exp: empty reduction");
  const double m = *std::max_element(values.begin(), values.end());
  if (m == kNegInf)
    return kNegInf;
  if (std::isinf(m))
    return m;
  double sum = 0.0;
  for (double v : values)
    sum += std::exp(v - m);
  return m + std::log(sum);
}

inline double log_sum_exp(std::initializer_list<double> values) {
  return log_sum_exp(std::span<const double>(values.begin(), values.size()));
}

/// Streaming log-sum-exp. Rescales the running sum whenever a new maximum
/// arrives, so it never overflows.
class LogSumAccumulator {
public:
  void add(double v) {
    if (v == kNegInf)
      return;
    if (v <= max_) {
      sum_ += std::exp(v - max_);
    } else {
      sum_ = sum_ * std::exp(max_ - v) + 1.0;
      max_ = v;
    }
  }

  double value() const { return max_ == kNegInf ? kNegInf : max_ + std::log(sum_); }

private:
  double max_ = kNegInf;
  double sum_ = 0.0;
};

// ---------------------------------------------------------------------------
// Random streams

/// SplitMix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

/// Counter-based generator: output k is mix64(key + k * golden). The stream
/// depends only on (seed, counter), so it is identical on every platform and
/// child streams can be derived without touching the parent.
///
/// Satisfies UniformRandomBitGenerator, but library code samples through the
/// member functions below because std distributions are not portable.
class Rng {
public:
  using result_type = std::uint64_t;

  explicit Rng(std::uint64_t seed = 0) : seed_(seed), key_(mix64(seed ^ 0x6A09E667F3BCC909ULL)) {}

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  result_type operator()() { return mix64(key_ + (++counter_) * 0x9E3779B97F4A7C15ULL); }

  std::uint64_t seed() const { return seed_; }
  std::uint64_t counter() const { return counter_; }

  /// Independent stream for task `task_id`; does not advance this stream.
  Rng child(std::uint64_t task_id) const {
    return Rng(mix64(seed_ + 0xD1B54A32D192ED03ULL * (task_id + 1)) ^ mix64(task_id));
  }

  /// Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, bound). Lemire's multiply-shift with rejection.
  std::uint64_t below(std::uint64_t bound) {
    if (bound == 0)
      throw Error("Rng::below: zero bound");
    unsigned __int128 m = static_cast<unsigned __int128>((*this)()) * bound;
    auto low = static_cast<std::uint64_t>(m);
    if (low < bound) {
      const std::uint64_t threshold = (0 - bound) % bound;
      while (low < threshold) {
        m = static_cast<unsigned __int128>((*this)()) * bound;
        low = static_cast<std::uint64_t>(m);
      }
    }
    return static_cast<std::uint64_t>(m >> 64);
  }

  /// Standard normal via Box-Muller; the second variate is cached.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = 0.0;
    do {
      u1 = uniform();
    } while (u1 <= 0.0);
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double t = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(t);
    has_spare_ = true;
    return r * std::cos(t);
  }

  Vector normal_vector(Eigen::Index dim) {
    Vector v(dim);
    for (Eigen::Index i = 0; i < dim; ++i)
      v[i] = normal();
    return v;
  }

  /// Gamma(shape, 1) by Marsaglia-Tsang; shape < 1 uses the boost
  /// Gamma(shape + 1) * U^(1/shape).
  double gamma(double shape) {
    if (!(shape > 0.0))
      throw Error("Rng::gamma: shape must be positive");
    if (shape < 1.0) {
      const double g = gamma(shape + 1.0);
      double u = 0.0;
      do {
        u = uniform();
      } while (u <= 0.0);
      return g * std::pow(u, 1.0 / shape);
    }
    const double d = shape - 1.0 / 3.0;
    const double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
      double x = 0.0, v = 0.0;
      do {
        x = normal();
        v = 1.0 + c * x;
      } while (v <= 0.0);
      v = v * v * v;
      const double u = uniform();
      if (u < 1.0 - 0.0331 * x * x * x * x)
        return d * v;
      if (u > 0.0 && std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v)))
        return d * v;
    }
  }

private:
  std::uint64_t seed_;
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

/// Fisher-Yates shuffle driven by `rng`.
template <typename T>
void shuffle(std::span<T> items, Rng &rng) {
  for (std::size_t i = items.size(); i > 1; --i) {
    const auto j = static_cast<std::size_t>(rng.below(i));
    std::swap(items[i - 1], items[j]);
  }
}

template <typename T>
std::vector<T> shuffled(std::vector<T> items, Rng &rng) {
  shuffle(std::span<T>(items), rng);
  return items;
}

// ---------------------------------------------------------------------------
// Finite differences

inline constexpr double kDefaultFiniteDiffStep = 1e-4;

/// Central-difference gradient of a scalar field.
template <typename ScalarField>
Vector finite_diff_gradient(ScalarField &&f, const Vector &x, double h = kDefaultFiniteDiffStep) {
  if (!(h > 0.0))
    throw Error("finite_diff_gradient: step must be positive");
  Vector grad(x.size());
  Vector probe = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    probe[i] = x[i] + h;
    const double fp = f(probe);
    if (!std::isfinite(fp))
      throw NonFiniteError("finite_diff_gradient: non-finite value", probe);
    probe[i] = x[i] - h;
    const double fm = f(probe);
    if (!std::isfinite(fm))
      throw NonFiniteError("finite_diff_gradient: non-finite value", probe);
    probe[i] = x[i];
    grad[i] = (fp - fm) / (2.0 * h);
  }
  return grad;
}

inline bool all_finite(const Eigen::Ref<const Matrix> &m) { return m.allFinite(); }

} // namespace fermat
