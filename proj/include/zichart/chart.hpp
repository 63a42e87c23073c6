#pragma once

// Shewhart-type (L-sigma) charts for zero-inflated counts and their
// known-parameter run-length properties.

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstdint>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <vector>

#include "zichart/dist.hpp"

namespace zichart {

/// In-interval probability is 1, so the run length is infinite.
class BetaOne : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

class InvalidShift : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Integer limits [lcl, ucl]. A very narrow band can fall between two
/// integers, in which case lcl == ucl + 1 and nothing plots inside.
struct ControlLimits {
  std::int64_t lcl = 0;
  std::int64_t ucl = 0;

  bool empty() const noexcept { return lcl > ucl; }
  friend bool operator==(const ControlLimits&, const ControlLimits&) = default;
};

struct RunLengthSummary {
  double beta = 0.0;
  double arl = 1.0;
  double sdrl = 0.0;
  double mu2 = 1.0;  // E[N^2]
};

struct ShiftSpec {
  double tau = 1.0;    // multiplies phi0
  double delta = 1.0;  // multiplies lambda0 or p0
};

/// floor(mu + L sigma) and max(0, ceil(mu - L sigma)) from a mean and
/// standard deviation.
inline ControlLimits shewhart_limits(double mean, double sd, double L) {
  if (!(L > 0.0)) throw std::invalid_argument("control limits: L must be positive");
  const double upper = std::floor(mean + L * sd);
  const double lower = std::max(0.0, std::ceil(mean - L * sd));
  return {static_cast<std::int64_t>(lower), static_cast<std::int64_t>(upper)};
}

template <ZeroInflatedParams P>
ControlLimits limits(const P& params0, double L) {
  const MeanVar mv = mean_var(params0);
  return shewhart_limits(mv.mean, std::sqrt(mv.variance), L);
}

/// P(lcl <= Y <= ucl) = F(ucl) - F(lcl - 1).
template <ZeroInflatedParams P>
double beta(const ControlLimits& lim, const P& params1) {
  if (lim.empty()) return 0.0;
  const double b = cdf(params1, lim.ucl) - cdf(params1, lim.lcl - 1);
  return std::clamp(b, 0.0, 1.0);
}

/// Memoised cdf for a fixed parameter vector. Values are bit-identical to
/// cdf(params, x); the table stops once the cdf has saturated.
///
/// Also keeps upper-tail probabilities P(Y > x), summed from the far end of
/// the support inward, so that signal() stays accurate when 1 - beta is far
/// below double resolution (run lengths of 1e16 and beyond).
template <ZeroInflatedParams P>
class CdfTable {
 public:
  explicit CdfTable(const P& params) : params_(params) {
    build_cdf();
    build_tail();
  }

  double operator()(std::int64_t x) const {
    if (x < 0) return 0.0;
    if (x < static_cast<std::int64_t>(table_.size())) return table_[static_cast<std::size_t>(x)];
    if constexpr (std::same_as<P, ZibParams>) {
      // the base cdf snaps to exactly 1 at x = n, past any plateau
      if (x >= params_.n()) return cdf(params_, x);
    }
    return saturated_ ? table_.back() : cdf(params_, x);
  }

  /// P(Y > x).
  double upper_tail(std::int64_t x) const {
    if (x < 0) return 1.0;
    if (x < static_cast<std::int64_t>(tail_.size())) return tail_[static_cast<std::size_t>(x)];
    return sf(params_, x);
  }

  double beta(const ControlLimits& lim) const {
    if (lim.empty()) return 0.0;
    return std::clamp((*this)(lim.ucl) - (*this)(lim.lcl - 1), 0.0, 1.0);
  }

  /// 1 - beta, computed from the two tails.
  double signal(const ControlLimits& lim) const {
    if (lim.empty()) return 1.0;
    return std::clamp((*this)(lim.lcl - 1) + upper_tail(lim.ucl), 0.0, 1.0);
  }

  const P& params() const noexcept { return params_; }

 private:
  static constexpr std::int64_t kMaxEntries = std::int64_t{1} << 20;

  void build_cdf() {
    const double mode = mean_var(params_).mean;
    for (std::int64_t x = 0; x < (std::int64_t{1} << 16); ++x) {
      const double f = cdf(params_, x);
      table_.push_back(f);
      if (f >= 1.0) {
        saturated_ = true;
        break;
      }
      if (x > 0 && static_cast<double>(x) > mode && f == table_[x - 1]) {
        saturated_ = true;
        break;
      }
    }
  }

  void build_tail() {
    // last point with nonzero mass (in double precision)
    std::int64_t top = 0;
    if constexpr (std::same_as<P, ZibParams>) {
      top = params_.n();
    } else {
      top = static_cast<std::int64_t>(std::ceil(params_.lambda()));
      while (top < kMaxEntries && poisson_pmf(top + 1, params_.lambda()) > 0.0) ++top;
    }
    if (top >= kMaxEntries) return;  // huge support: fall back to sf()
    tail_.assign(static_cast<std::size_t>(top + 1), 0.0);
    double acc = 0.0;
    for (std::int64_t x = top; x >= 0; --x) {
      tail_[static_cast<std::size_t>(x)] = acc;
      acc += pmf(params_, x);
    }
  }

  P params_;
  std::vector<double> tail_;
  std::vector<double> table_;
  bool saturated_ = false;
};

/// Geometric run length with signal probability 1 - beta.
inline RunLengthSummary run_length(double beta) {
  if (!(beta >= 0.0)) throw std::invalid_argument("run_length: beta must be non-negative");
  if (beta >= 1.0) throw BetaOne("run_length: beta = 1, the chart never signals");
  const double q = 1.0 - beta;
  return {beta, 1.0 / q, std::sqrt(beta) / q, (1.0 + beta) / (q * q)};
}

/// Same as run_length(1 - q) without the cancellation in 1 - beta.
inline RunLengthSummary run_length_from_signal(double q) {
  if (!(q <= 1.0)) throw std::invalid_argument("run_length: signal probability must not exceed 1");
  if (!(q > 0.0)) throw BetaOne("run_length: beta = 1, the chart never signals");
  const double b = 1.0 - q;
  return {b, 1.0 / q, std::sqrt(b) / q, (2.0 - q) / (q * q)};
}

/// k-th point of an L grid with the given step; 0.01 steps land on the
/// nearest double to k/100 rather than accumulating rounding error.
inline double grid_value(std::int64_t k, double step) {
  const double inv = 1.0 / step;
  const double inv_rounded = std::round(inv);
  if (std::abs(inv - inv_rounded) < 1e-9 * inv_rounded) return static_cast<double>(k) / inv_rounded;
  return static_cast<double>(k) * step;
}

inline std::int64_t grid_points(double step, double l_max) {
  if (!(step > 0.0) || !(l_max >= step)) throw std::invalid_argument("L grid: need 0 < step <= l_max");
  return static_cast<std::int64_t>(std::floor(l_max / step + 1e-9));
}

template <ZeroInflatedParams P>
struct CaseKDesign {
  double L = 0.0;
  ControlLimits limits;
  RunLengthSummary summary;
};

/// Scans L = step, 2 step, ..., l_max and picks the L whose known-parameter
/// IC ARL is closest to arl_target. The IC ARL is a nondecreasing step
/// function of L, so the closest value sits on one side of the first L
/// reaching the target; among equal ARLs we take the grid point adjacent
/// to that crossing.
template <ZeroInflatedParams P>
CaseKDesign<P> case_k_design(const P& params0, double arl_target, double step = 0.01,
                             double l_max = 10.0) {
  if (!(arl_target >= 1.0)) throw std::invalid_argument("case_k_design: ARL target must be >= 1");
  const CdfTable<P> table(params0);
  const std::int64_t count = grid_points(step, l_max);

  auto evaluate = [&](std::int64_t k) {
    const double L = grid_value(k, step);
    const ControlLimits lim = limits(params0, L);
    const double q = table.signal(lim);
    RunLengthSummary s{1.0, std::numeric_limits<double>::infinity(),
                       std::numeric_limits<double>::infinity(),
                       std::numeric_limits<double>::infinity()};
    if (q > 0.0) s = run_length_from_signal(q);
    return CaseKDesign<P>{L, lim, s};
  };

  CaseKDesign<P> previous = evaluate(1);
  if (previous.summary.arl >= arl_target) return previous;
  for (std::int64_t k = 2; k <= count; ++k) {
    CaseKDesign<P> current = evaluate(k);
    if (current.summary.arl >= arl_target) {
      const double below = arl_target - previous.summary.arl;
      const double above = current.summary.arl - arl_target;
      return above < below ? current : previous;
    }
    previous = current;
  }
  return previous;
}

inline void validate(const ShiftSpec& s) {
  if (!(s.tau >= 0.0) || !std::isfinite(s.tau)) {
    throw InvalidShift("shift: tau must be non-negative");
  }
  if (!(s.delta > 0.0) || !std::isfinite(s.delta)) {
    throw InvalidShift("shift: delta must be positive");
  }
}

inline ZipParams apply_shift(const ZipParams& p0, const ShiftSpec& s) {
  validate(s);
  const double phi1 = s.tau * p0.phi();
  if (phi1 > 1.0) {
    std::ostringstream os;
    os << "shift: tau * phi0 = " << phi1 << " exceeds 1";
    throw InvalidShift(os.str());
  }
  return {phi1, s.delta * p0.lambda()};
}

inline ZibParams apply_shift(const ZibParams& p0, const ShiftSpec& s) {
  validate(s);
  const double phi1 = s.tau * p0.phi();
  if (phi1 > 1.0) {
    std::ostringstream os;
    os << "shift: tau * phi0 = " << phi1 << " exceeds 1";
    throw InvalidShift(os.str());
  }
  const double p1 = s.delta * p0.p();
  if (p1 >= 1.0) {
    std::ostringstream os;
    os << "shift: delta * p0 = " << p1 << " is not below 1";
    throw InvalidShift(os.str());
  }
  return {phi1, p0.n(), p1};
}

}  // namespace zichart
