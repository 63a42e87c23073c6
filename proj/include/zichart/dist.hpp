#pragma once

// Zero-inflated Poisson (ZIP) and zero-inflated binomial (ZIB) laws.
//
// Both are two-component mixtures: with probability phi the count is a
// structural zero, otherwise it comes from the base Poisson(lambda) or
// Binomial(n, p) law. Base probabilities are evaluated in log space so
// that large lambda or n do not overflow; cumulative sums stop once the
// remaining tail is below 1e-15 of the running total.

#include <algorithm>
#include <array>
#include <cmath>
#include <concepts>
#include <cstdint>
#include <limits>
#include <random>
#include <span>
#include <sstream>
#include <stdexcept>
#include <type_traits>
#include <vector>

namespace zichart {

inline constexpr double kCdfTailTolerance = 1e-15;

class ZipParams {
 public:
  ZipParams(double phi, double lambda) : phi_(phi), lambda_(lambda) {
    if (!(phi >= 0.0 && phi <= 1.0)) {
      std::ostringstream os;
      os << "ZipParams: phi must lie in [0, 1], got " << phi;
      throw std::invalid_argument(os.str());
    }
    if (!(lambda > 0.0) || !std::isfinite(lambda)) {
      std::ostringstream os;
      os << "ZipParams: lambda must be positive and finite, got " << lambda;
      throw std::invalid_argument(os.str());
    }
  }

  double phi() const noexcept { return phi_; }
  double lambda() const noexcept { return lambda_; }

  friend bool operator==(const ZipParams&, const ZipParams&) = default;

 private:
  double phi_;
  double lambda_;
};

class ZibParams {
 public:
  ZibParams(double phi, std::int64_t n, double p) : phi_(phi), n_(n), p_(p) {
    if (!(phi >= 0.0 && phi <= 1.0)) {
      std::ostringstream os;
      os << "ZibParams: phi must lie in [0, 1], got " << phi;
      throw std::invalid_argument(os.str());
    }
    if (n < 1) {
      std::ostringstream os;
      os << "ZibParams: n must be a positive integer, got " << n;
      throw std::invalid_argument(os.str());
    }
    if (!(p > 0.0 && p < 1.0)) {
      std::ostringstream os;
      os << "ZibParams: p must lie in (0, 1), got " << p;
      throw std::invalid_argument(os.str());
    }
  }

  double phi() const noexcept { return phi_; }
  std::int64_t n() const noexcept { return n_; }
  double p() const noexcept { return p_; }

  friend bool operator==(const ZibParams&, const ZibParams&) = default;

 private:
  double phi_;
  std::int64_t n_;
  double p_;
};

template <class P>
concept ZeroInflatedParams = std::same_as<P, ZipParams> || std::same_as<P, ZibParams>;

struct MeanVar {
  double mean;
  double variance;
};

namespace detail {

inline double log_factorial(std::int64_t k) {
  constexpr std::int64_t kTableSize = 2048;
  static const auto table = [] {
    std::array<double, kTableSize> t{};
    for (std::int64_t i = 0; i < kTableSize; ++i) t[i] = std::lgamma(static_cast<double>(i) + 1.0);
    return t;
  }();
  if (k < kTableSize) return table[static_cast<std::size_t>(k)];
  return std::lgamma(static_cast<double>(k) + 1.0);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Base laws

inline double poisson_log_pmf(std::int64_t x, double lambda) {
  return static_cast<double>(x) * std::log(lambda) - lambda - detail::log_factorial(x);
}

inline double poisson_pmf(std::int64_t x, double lambda) {
  if (x < 0) return 0.0;
  return std::exp(poisson_log_pmf(x, lambda));
}

inline double poisson_cdf(std::int64_t x, double lambda) {
  if (x < 0) return 0.0;
  const double log_lambda = std::log(lambda);
  double sum = 0.0;
  for (std::int64_t k = 0; k <= x; ++k) {
    const double term =
        std::exp(static_cast<double>(k) * log_lambda - lambda - detail::log_factorial(k));
    sum += term;
    // Past the mode the terms shrink at least geometrically with ratio r.
    const double r = lambda / static_cast<double>(k + 1);
    if (r < 1.0 && term * r / (1.0 - r) < kCdfTailTolerance * sum) break;
  }
  return std::min(sum, 1.0);
}

inline double binomial_log_pmf(std::int64_t x, std::int64_t n, double p) {
  return detail::log_factorial(n) - detail::log_factorial(x) - detail::log_factorial(n - x) +
         static_cast<double>(x) * std::log(p) + static_cast<double>(n - x) * std::log1p(-p);
}

inline double binomial_pmf(std::int64_t x, std::int64_t n, double p) {
  if (x < 0 || x > n) return 0.0;
  return std::exp(binomial_log_pmf(x, n, p));
}

inline double binomial_cdf(std::int64_t x, std::int64_t n, double p) {
  if (x < 0) return 0.0;
  if (x >= n) return 1.0;
  const double odds = p / (1.0 - p);
  double sum = 0.0;
  for (std::int64_t k = 0; k <= x; ++k) {
    const double term = std::exp(binomial_log_pmf(k, n, p));
    sum += term;
    const double r = odds * static_cast<double>(n - k) / static_cast<double>(k + 1);
    if (r < 1.0 && term * r / (1.0 - r) < kCdfTailTolerance * sum) break;
  }
  return std::min(sum, 1.0);
}

/// P(X > x). Past the mode the tail is summed directly so that tiny
/// probabilities keep their relative precision.
inline double poisson_sf(std::int64_t x, double lambda) {
  if (x < 0) return 1.0;
  if (static_cast<double>(x) < lambda) return std::max(0.0, 1.0 - poisson_cdf(x, lambda));
  double sum = 0.0;
  for (std::int64_t k = x + 1;; ++k) {
    const double term = poisson_pmf(k, lambda);
    sum += term;
    const double r = lambda / static_cast<double>(k + 1);
    if (term == 0.0 || term * r / (1.0 - r) < kCdfTailTolerance * sum) break;
  }
  return sum;
}

inline double binomial_sf(std::int64_t x, std::int64_t n, double p) {
  if (x < 0) return 1.0;
  if (x >= n) return 0.0;
  if (static_cast<double>(x) < static_cast<double>(n) * p) return std::max(0.0, 1.0 - binomial_cdf(x, n, p));
  const double odds = p / (1.0 - p);
  double sum = 0.0;
  for (std::int64_t k = x + 1; k <= n; ++k) {
    const double term = binomial_pmf(k, n, p);
    sum += term;
    const double r = odds * static_cast<double>(n - k) / static_cast<double>(k + 1);
    if (term == 0.0 || (r < 1.0 && term * r / (1.0 - r) < kCdfTailTolerance * sum)) break;
  }
  return sum;
}

// ---------------------------------------------------------------------------
// Zero-inflated laws

inline double pmf(const ZipParams& d, std::int64_t x) {
  if (x < 0) return 0.0;
  const double base = (1.0 - d.phi()) * poisson_pmf(x, d.lambda());
  return x == 0 ? d.phi() + base : base;
}

/// F(x) for any integer x; F(x) = 0 below the support.
inline double cdf(const ZipParams& d, std::int64_t x) {
  if (x < 0) return 0.0;
  return d.phi() + (1.0 - d.phi()) * poisson_cdf(x, d.lambda());
}

/// P(Y > x).
inline double sf(const ZipParams& d, std::int64_t x) {
  if (x < 0) return 1.0;
  return (1.0 - d.phi()) * poisson_sf(x, d.lambda());
}

inline MeanVar mean_var(const ZipParams& d) {
  const double phi = d.phi();
  const double lambda = d.lambda();
  return {lambda * (1.0 - phi), lambda * (1.0 + lambda * phi) * (1.0 - phi)};
}

/// Returns 0 outside 0..n.
inline double pmf(const ZibParams& d, std::int64_t x) {
  if (x < 0 || x > d.n()) return 0.0;
  const double base = (1.0 - d.phi()) * binomial_pmf(x, d.n(), d.p());
  return x == 0 ? d.phi() + base : base;
}

inline double cdf(const ZibParams& d, std::int64_t x) {
  if (x < 0) return 0.0;
  if (x >= d.n()) return 1.0;
  return d.phi() + (1.0 - d.phi()) * binomial_cdf(x, d.n(), d.p());
}

inline double sf(const ZibParams& d, std::int64_t x) {
  if (x < 0) return 1.0;
  return (1.0 - d.phi()) * binomial_sf(x, d.n(), d.p());
}

inline MeanVar mean_var(const ZibParams& d) {
  const double phi = d.phi();
  const double np = static_cast<double>(d.n()) * d.p();
  return {np * (1.0 - phi), np * (1.0 - d.p() + np * phi) * (1.0 - phi)};
}

// ---------------------------------------------------------------------------
// Sampling: a Bernoulli(phi) gate, then the base law by inversion of its
// cdf. Only the raw engine bits are used, so draws do not depend on the
// standard library's distribution algorithms.

namespace detail {

/// Uniform on [0, 1).
template <std::uniform_random_bit_generator Rng>
double unit_uniform(Rng& rng) {
  if constexpr (requires { { rng.uniform() } -> std::same_as<double>; }) {
    return rng.uniform();
  } else {
    const double u = std::generate_canonical<double, 53>(rng);
    return u < 1.0 ? u : std::nextafter(1.0, 0.0);
  }
}

}  // namespace detail

/// Reusable draw functor. Builds the base cdf once; operator() is const and
/// may be shared between threads.
template <ZeroInflatedParams P>
class Sampler {
 public:
  explicit Sampler(const P& d) : phi_(d.phi()) {
    double mode = 0.0;
    std::int64_t last = std::numeric_limits<std::int64_t>::max();
    if constexpr (std::same_as<P, ZibParams>) {
      mode = static_cast<double>(d.n()) * d.p();
      last = d.n();
    } else {
      mode = d.lambda();
    }
    double sum = 0.0;
    for (std::int64_t k = 0; k <= last; ++k) {
      double term = 0.0;
      double r = 0.0;
      if constexpr (std::same_as<P, ZibParams>) {
        term = binomial_pmf(k, d.n(), d.p());
        r = d.p() / (1.0 - d.p()) * static_cast<double>(d.n() - k) / static_cast<double>(k + 1);
      } else {
        term = poisson_pmf(k, d.lambda());
        r = d.lambda() / static_cast<double>(k + 1);
      }
      sum += term;
      cdf_.push_back(sum);
      if (static_cast<double>(k) > mode && r < 1.0 && term * r / (1.0 - r) < 1e-17 * sum) break;
    }
    cdf_.back() = 1.0;  // the neglected tail is below double resolution
  }

  template <std::uniform_random_bit_generator Rng>
  std::int64_t operator()(Rng& rng) const {
    if (detail::unit_uniform(rng) < phi_) return 0;
    const double u = detail::unit_uniform(rng);
    return std::upper_bound(cdf_.begin(), cdf_.end(), u) - cdf_.begin();
  }

  template <std::uniform_random_bit_generator Rng>
  void fill(std::span<std::int64_t> out, Rng& rng) const {
    for (auto& x : out) x = (*this)(rng);
  }

 private:
  double phi_;
  std::vector<double> cdf_;
};

template <ZeroInflatedParams P, std::uniform_random_bit_generator Rng>
std::int64_t draw(const P& d, Rng& rng) {
  return Sampler<P>(d)(rng);
}

template <ZeroInflatedParams P, std::uniform_random_bit_generator Rng>
void sample_into(const P& d, std::span<std::int64_t> out, Rng& rng) {
  Sampler<P>(d).fill(out, rng);
}

template <ZeroInflatedParams P, std::uniform_random_bit_generator Rng>
std::vector<std::int64_t> sample(const P& d, std::size_t count, Rng& rng) {
  if (count == 0) throw std::invalid_argument("sample: count must be positive");
  std::vector<std::int64_t> out(count);
  sample_into(d, std::span<std::int64_t>(out), rng);
  return out;
}

}  // namespace zichart
