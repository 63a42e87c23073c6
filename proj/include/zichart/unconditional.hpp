#pragma once

// Unconditional (marginal) run-length performance of a chart whose limits
// are built from estimated parameters.
//
// Each replication t draws a Phase-I sample of size m on its own random
// stream t, estimates the parameters, builds the limits and records the
// conditional ARL 1/q and second moment (2-q)/q^2, where q = 1 - b is the
// signal probability under the evaluation parameters (taken from the tails
// directly, so huge conditional ARLs are not rounded to infinity). The reported
// ARL and mu2 are averages over replications; SDRL = sqrt(mu2 - ARL^2).
//
// The work is split into two stages. draw_phase_one() does everything
// that does not depend on L or on the evaluation parameters (sampling and
// estimation); summarize() turns those draws into a report for one L.
// Reusing one set of draws across many L values gives common random
// numbers for calibration, and evaluate() is just the composition of the
// two, so both paths produce bit-identical numbers.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <exception>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "zichart/chart.hpp"
#include "zichart/dist.hpp"
#include "zichart/estimate.hpp"
#include "zichart/rng.hpp"

namespace zichart {

/// No replication produced a usable estimate.
class AllDegenerate : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class DegeneratePolicy {
  Exclude,  // count the replication and leave it out of the averages
  Redraw,   // draw a fresh Phase-I sample on the same stream
};

inline constexpr int kMaxRedraws = 1000;

template <ZeroInflatedParams P>
struct CaseUConfig {
  P true_params0;
  std::int64_t m = 100;
  Method method = Method::MLE;
  double L = 3.0;
  std::int64_t replications = 50000;
  std::optional<ShiftSpec> shift;  // absent: in-control
  std::uint64_t master_seed = 0;
  DegeneratePolicy degenerate_policy = DegeneratePolicy::Exclude;
  unsigned threads = 0;  // 0: one per hardware thread
};

/// replications_used + degenerate_count == T. Replications whose
/// estimated limits cover the whole support (b == 1) stay in
/// replications_used but are counted in beta_one_count and left out of
/// the averages.
struct CaseUReport {
  double arl = 0.0;
  double sdrl = 0.0;
  double mu2 = 0.0;
  std::int64_t replications_used = 0;
  std::int64_t degenerate_count = 0;
  std::int64_t clamped_count = 0;
  std::int64_t beta_one_count = 0;
  std::int64_t redraw_count = 0;

  friend bool operator==(const CaseUReport&, const CaseUReport&) = default;
};

template <ZeroInflatedParams P>
struct Replicate {
  std::optional<P> estimate;  // empty when degenerate
  bool clamped = false;
  int redraws = 0;
  double mean = 0.0;  // of the estimated law
  double sd = 0.0;
};

template <ZeroInflatedParams P>
struct PhaseOneDraws {
  std::vector<Replicate<P>> replicates;
  std::int64_t degenerate_count = 0;
  std::int64_t clamped_count = 0;
  std::int64_t redraw_count = 0;
};

/// Order-independent running sum (Neumaier's variant of Kahan summation).
class CompensatedSum {
 public:
  void add(double x) noexcept {
    const double t = sum_ + x;
    if (std::abs(sum_) >= std::abs(x)) {
      comp_ += (sum_ - t) + x;
    } else {
      comp_ += (x - t) + sum_;
    }
    sum_ = t;
  }
  double value() const noexcept { return sum_ + comp_; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

inline unsigned resolve_threads(unsigned requested) {
  if (requested > 0) return requested;
  return std::max(1u, std::thread::hardware_concurrency());
}

/// Runs body(begin, end) over contiguous chunks of [0, count).
template <class Body>
void parallel_for(std::int64_t count, unsigned threads, Body&& body) {
  const auto workers = static_cast<std::int64_t>(std::min<std::int64_t>(resolve_threads(threads), count));
  if (workers <= 1) {
    body(std::int64_t{0}, count);
    return;
  }
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(workers));
  {
    std::vector<std::jthread> pool;
    pool.reserve(static_cast<std::size_t>(workers));
    const std::int64_t chunk = (count + workers - 1) / workers;
    for (std::int64_t w = 0; w < workers; ++w) {
      const std::int64_t begin = w * chunk;
      const std::int64_t end = std::min(count, begin + chunk);
      if (begin >= end) break;
      pool.emplace_back([&body, &errors, w, begin, end] {
        try {
          body(begin, end);
        } catch (...) {
          errors[static_cast<std::size_t>(w)] = std::current_exception();
        }
      });
    }
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

template <ZeroInflatedParams P>
void validate(const CaseUConfig<P>& config) {
  if (config.m < 1) throw std::invalid_argument("CaseUConfig: m must be positive");
  if (config.replications < 1) throw std::invalid_argument("CaseUConfig: replication count must be positive");
  if (!(config.L > 0.0)) throw std::invalid_argument("CaseUConfig: L must be positive");
  if (config.method == Method::MoM) {
    if constexpr (std::same_as<P, ZibParams>) {
      if (config.true_params0.n() < 2) throw std::invalid_argument("CaseUConfig: ZIB moments need n >= 2");
    }
  }
  if (config.shift) (void)apply_shift(config.true_params0, *config.shift);
}

/// Sampling and estimation for every replication (steps that do not depend
/// on L or on the evaluation parameters).
template <ZeroInflatedParams P>
PhaseOneDraws<P> draw_phase_one(const CaseUConfig<P>& config) {
  if (config.m < 1) throw std::invalid_argument("CaseUConfig: m must be positive");
  if (config.replications < 1) throw std::invalid_argument("CaseUConfig: replication count must be positive");

  PhaseOneDraws<P> out;
  out.replicates.resize(static_cast<std::size_t>(config.replications));
  const StreamFactory streams(config.master_seed);
  const Sampler<P> sampler(config.true_params0);

  parallel_for(config.replications, config.threads, [&](std::int64_t begin, std::int64_t end) {
    std::vector<std::int64_t> buffer(static_cast<std::size_t>(config.m));
    for (std::int64_t t = begin; t < end; ++t) {
      auto rng = streams.stream(static_cast<std::uint64_t>(t));
      Replicate<P>& rep = out.replicates[static_cast<std::size_t>(t)];
      const int attempts = config.degenerate_policy == DegeneratePolicy::Redraw ? kMaxRedraws + 1 : 1;
      for (int attempt = 0; attempt < attempts; ++attempt) {
        sampler.fill(std::span<std::int64_t>(buffer), rng);
        try {
          const auto est = estimate(moments(buffer), config.method, config.true_params0);
          const MeanVar mv = mean_var(est.params);
          rep.estimate = est.params;
          rep.clamped = est.clamped.any() || est.boundary;
          rep.mean = mv.mean;
          rep.sd = std::sqrt(mv.variance);
          break;
        } catch (const DegenerateSample&) {
          if (attempt + 1 < attempts) ++rep.redraws;
        }
      }
    }
  });

  for (const auto& rep : out.replicates) {
    out.degenerate_count += !rep.estimate.has_value();
    out.clamped_count += rep.clamped;
    out.redraw_count += rep.redraws;
  }
  return out;
}

/// Unconditional run-length moments at design constant L against the
/// evaluation cdf. Summation runs in replication order.
template <ZeroInflatedParams P>
CaseUReport summarize(const PhaseOneDraws<P>& draws, double L, const CdfTable<P>& evaluation) {
  CaseUReport report;
  report.degenerate_count = draws.degenerate_count;
  report.clamped_count = draws.clamped_count;
  report.redraw_count = draws.redraw_count;
  report.replications_used = static_cast<std::int64_t>(draws.replicates.size()) - draws.degenerate_count;

  CompensatedSum arl_sum;
  CompensatedSum mu2_sum;
  std::int64_t counted = 0;
  for (const auto& rep : draws.replicates) {
    if (!rep.estimate) continue;
    const double q = evaluation.signal(shewhart_limits(rep.mean, rep.sd, L));
    if (!(q > 0.0)) {
      ++report.beta_one_count;
      continue;
    }
    arl_sum.add(1.0 / q);
    mu2_sum.add((2.0 - q) / (q * q));
    ++counted;
  }
  if (counted == 0) {
    throw AllDegenerate("unconditional evaluation: no replication produced finite run-length moments (" +
                        std::to_string(report.degenerate_count) + " degenerate, " +
                        std::to_string(report.beta_one_count) + " with b = 1)");
  }
  report.arl = arl_sum.value() / static_cast<double>(counted);
  report.mu2 = mu2_sum.value() / static_cast<double>(counted);
  report.sdrl = std::sqrt(std::max(0.0, report.mu2 - report.arl * report.arl));
  return report;
}

template <ZeroInflatedParams P>
P evaluation_params(const CaseUConfig<P>& config) {
  return config.shift ? apply_shift(config.true_params0, *config.shift) : config.true_params0;
}

template <ZeroInflatedParams P>
CaseUReport evaluate(const CaseUConfig<P>& config) {
  validate(config);
  const CdfTable<P> evaluation(evaluation_params(config));
  const PhaseOneDraws<P> draws = draw_phase_one(config);
  if (draws.degenerate_count == config.replications) {
    throw AllDegenerate("unconditional evaluation: every Phase-I sample was degenerate");
  }
  return summarize(draws, config.L, evaluation);
}

struct CellOutcome {
  std::optional<CaseUReport> report;
  std::string error;

  bool ok() const noexcept { return report.has_value(); }
};

/// Element-wise evaluate(); failures are recorded per cell.
template <ZeroInflatedParams P>
std::vector<CellOutcome> grid_evaluate(std::span<const CaseUConfig<P>> configs) {
  if (configs.empty()) throw std::invalid_argument("grid_evaluate: empty grid");
  std::vector<CellOutcome> out;
  out.reserve(configs.size());
  for (const auto& config : configs) {
    try {
      out.push_back({evaluate(config), {}});
    } catch (const std::exception& e) {
      out.push_back({std::nullopt, e.what()});
    }
  }
  return out;
}

}  // namespace zichart
