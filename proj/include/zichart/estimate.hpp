#pragma once

// Phase-I parameter estimation for ZIP and ZIB processes.
//
// Method of moments has closed forms. The likelihood equations reduce
// to one monotone equation in lambda (resp. p):
//
//   ZIP:  lambda / (1 - exp(-lambda))   = mean of positive counts
//   ZIB:  n p / (1 - (1 - p)^n)         = mean of positive counts
//
// Both left-hand sides increase strictly from 1 (at 0) so bisection
// always converges. Estimates that leave the parameter space are
// clamped and flagged rather than discarded.

#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>

#include "zichart/dist.hpp"

namespace zichart {

inline constexpr double kParamEpsilon = 1e-6;
inline constexpr double kPhiMax = 1.0 - 1e-6;

/// All-zero sample, or a sample carrying no information about dispersion.
class DegenerateSample : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Method { MoM, MLE };

inline const char* to_string(Method m) { return m == Method::MoM ? "mom" : "mle"; }

struct SampleMoments {
  std::int64_t m = 0;
  double mean = 0.0;
  double raw2 = 0.0;                 // (1/m) * sum x^2
  std::optional<double> pos_mean;    // mean of strictly positive counts
  std::int64_t zero_count = 0;
};

inline SampleMoments moments(std::span<const std::int64_t> sample) {
  if (sample.empty()) throw std::invalid_argument("moments: empty sample");
  std::int64_t sum = 0;
  std::int64_t sum_sq = 0;
  std::int64_t zeros = 0;
  for (const std::int64_t x : sample) {
    if (x < 0) throw std::invalid_argument("moments: negative count in sample");
    sum += x;
    sum_sq += x * x;
    zeros += (x == 0);
  }
  SampleMoments sm;
  sm.m = static_cast<std::int64_t>(sample.size());
  sm.mean = static_cast<double>(sum) / static_cast<double>(sm.m);
  sm.raw2 = static_cast<double>(sum_sq) / static_cast<double>(sm.m);
  sm.zero_count = zeros;
  if (zeros < sm.m) sm.pos_mean = static_cast<double>(sum) / static_cast<double>(sm.m - zeros);
  return sm;
}

struct ClampFlags {
  bool phi = false;
  bool rate = false;  // lambda (ZIP) or p (ZIB)

  bool any() const noexcept { return phi || rate; }
};

template <ZeroInflatedParams P>
struct EstimateResult {
  P params;
  Method method;
  ClampFlags clamped;
  bool boundary = false;        // MLE has no interior root; rate sits at a bound
  int solver_iterations = 0;    // MLE only
  double residual = 0.0;        // MLE only, |fixed-point residual|
};

namespace detail {

inline double clamp_phi(double phi, ClampFlags& flags) {
  if (phi < 0.0 || std::isnan(phi)) {
    flags.phi = true;
    return 0.0;
  }
  if (phi > kPhiMax) {
    flags.phi = true;
    return kPhiMax;
  }
  return phi;
}

// Bisection for the root of a strictly increasing f on [lo, hi] with
// f(lo) < 0 < f(hi). Runs until the bracket stops shrinking.
template <class F>
double bisect_increasing(F&& f, double lo, double hi, int& iterations) {
  iterations = 0;
  for (; iterations < 2000; ++iterations) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    if (f(mid) < 0.0) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return std::abs(f(lo)) <= std::abs(f(hi)) ? lo : hi;
}

inline void require_nonzero(const SampleMoments& sm, const char* who) {
  if (sm.zero_count >= sm.m || sm.mean <= 0.0) {
    throw DegenerateSample(std::string(who) + ": all-zero Phase-I sample");
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// ZIP

inline EstimateResult<ZipParams> zip_mom(const SampleMoments& sm) {
  detail::require_nonzero(sm, "zip_mom");
  if (sm.raw2 <= sm.mean) {
    throw DegenerateSample("zip_mom: all observations in {0, 1}, lambda estimate is not positive");
  }
  ClampFlags flags;
  double lambda = sm.raw2 / sm.mean - 1.0;
  if (lambda < kParamEpsilon) {
    lambda = kParamEpsilon;
    flags.rate = true;
  }
  const double phi = detail::clamp_phi(1.0 - sm.mean / lambda, flags);
  return {ZipParams(phi, lambda), Method::MoM, flags};
}

/// lambda / (1 - exp(-lambda)), continuous at 0 with value 1.
inline double zip_positive_mean(double lambda) {
  if (lambda == 0.0) return 1.0;
  return lambda / -std::expm1(-lambda);
}

inline EstimateResult<ZipParams> zip_mle(const SampleMoments& sm) {
  detail::require_nonzero(sm, "zip_mle");
  const double target = *sm.pos_mean;
  EstimateResult<ZipParams> out{ZipParams(0.0, 1.0), Method::MLE, {}};

  double lambda = kParamEpsilon;
  if (target <= 1.0) {
    out.boundary = true;
    out.clamped.rate = true;
  } else {
    // g(lambda) >= lambda, so the root lies below the target.
    lambda = detail::bisect_increasing(
        [target](double l) { return zip_positive_mean(l) - target; }, 0.0, target,
        out.solver_iterations);
    if (lambda < kParamEpsilon) {
      lambda = kParamEpsilon;
      out.clamped.rate = true;
    }
  }
  out.residual = std::abs(lambda - target * -std::expm1(-lambda));
  const double phi = detail::clamp_phi(1.0 - sm.mean / lambda, out.clamped);
  out.params = ZipParams(phi, lambda);
  return out;
}

// ---------------------------------------------------------------------------
// ZIB

inline EstimateResult<ZibParams> zib_mom(const SampleMoments& sm, std::int64_t n) {
  if (n < 2) throw std::invalid_argument("zib_mom: n must be at least 2");
  detail::require_nonzero(sm, "zib_mom");
  const double excess = sm.raw2 - sm.mean;
  if (excess <= 0.0) {
    throw DegenerateSample("zib_mom: all observations in {0, 1}, p estimate is not positive");
  }
  ClampFlags flags;
  const auto n1 = static_cast<double>(n - 1);
  double p = excess / (n1 * sm.mean);
  if (p < kParamEpsilon) {
    p = kParamEpsilon;
    flags.rate = true;
  } else if (p > 1.0 - kParamEpsilon) {
    p = 1.0 - kParamEpsilon;
    flags.rate = true;
  }
  const double phi =
      detail::clamp_phi(1.0 - n1 * sm.mean * sm.mean / (static_cast<double>(n) * excess), flags);
  return {ZibParams(phi, n, p), Method::MoM, flags};
}

/// n p / (1 - (1 - p)^n), continuous at 0 with value 1.
inline double zib_positive_mean(double p, std::int64_t n) {
  if (p == 0.0) return 1.0;
  const auto nd = static_cast<double>(n);
  return nd * p / -std::expm1(nd * std::log1p(-p));
}

inline EstimateResult<ZibParams> zib_mle(const SampleMoments& sm, std::int64_t n) {
  if (n < 1) throw std::invalid_argument("zib_mle: n must be positive");
  detail::require_nonzero(sm, "zib_mle");
  const double target = *sm.pos_mean;
  const auto nd = static_cast<double>(n);
  EstimateResult<ZibParams> out{ZibParams(0.0, n, 0.5), Method::MLE, {}};

  double p = 0.0;
  if (target <= 1.0) {
    out.boundary = true;
    out.clamped.rate = true;
    p = kParamEpsilon;
  } else if (target >= nd) {
    out.boundary = true;
    out.clamped.rate = true;
    p = 1.0 - kParamEpsilon;
  } else {
    p = detail::bisect_increasing([target, n](double q) { return zib_positive_mean(q, n) - target; },
                                  0.0, 1.0, out.solver_iterations);
    if (p < kParamEpsilon) {
      p = kParamEpsilon;
      out.clamped.rate = true;
    } else if (p > 1.0 - kParamEpsilon) {
      p = 1.0 - kParamEpsilon;
      out.clamped.rate = true;
    }
  }
  out.residual = std::abs(nd * p - target * -std::expm1(nd * std::log1p(-p)));
  const double phi = detail::clamp_phi(1.0 - sm.mean / (nd * p), out.clamped);
  out.params = ZibParams(phi, n, p);
  return out;
}

// ---------------------------------------------------------------------------
// Dispatch on parameter type; `shape` supplies n for ZIB.

inline EstimateResult<ZipParams> estimate(const SampleMoments& sm, Method method,
                                          const ZipParams& /*shape*/) {
  return method == Method::MoM ? zip_mom(sm) : zip_mle(sm);
}

inline EstimateResult<ZibParams> estimate(const SampleMoments& sm, Method method,
                                          const ZibParams& shape) {
  return method == Method::MoM ? zib_mom(sm, shape.n()) : zib_mle(sm, shape.n());
}

}  // namespace zichart
