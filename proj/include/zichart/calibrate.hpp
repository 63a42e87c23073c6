#pragma once

// Adjusted design constant L*: the grid value of L whose unconditional IC
// ARL matches a nominal ARL0 for a given Phase-I size m.
//
// The Phase-I replications are drawn once and reused for every candidate L
// (common random numbers). Each replication's in-interval probability can
// only grow as the band widens, so the scanned ARL is nondecreasing in L
// and the scan can stop as soon as it reaches ARL0.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "zichart/chart.hpp"
#include "zichart/unconditional.hpp"

namespace zichart {

enum class Selection {
  // Stop at the first L reaching ARL0 and keep whichever of it and the
  // previous grid point is closer to ARL0.
  Closest,
  // Stop at the first L whose relative gap is within the tolerance.
  FirstWithinTolerance,
};

struct CalibrationOptions {
  double tolerance = 0.05;
  double step = 0.01;
  double l_max = 10.0;
  Selection selection = Selection::Closest;
};

struct ScanPoint {
  double L;
  double arl;
};

struct CalibrationResult {
  double l_star = 0.0;
  double achieved_arl = 0.0;
  double achieved_sdrl = 0.0;
  double relative_gap = 0.0;
  std::int64_t evaluations = 0;
  bool best_effort = false;  // no grid point met the tolerance
  CaseUReport report;        // full report at l_star
  std::vector<ScanPoint> trace;
};

/// `base.L` is ignored and `base.shift` must be empty. Feeding l_star back
/// into evaluate() with the same base config reproduces `report` exactly.
template <ZeroInflatedParams P>
CalibrationResult calibrate(const CaseUConfig<P>& base, double arl0, const CalibrationOptions& options = {}) {
  if (!(arl0 > 1.0)) throw std::invalid_argument("calibrate: ARL0 must exceed 1");
  if (!(options.tolerance >= 0.0)) throw std::invalid_argument("calibrate: tolerance must be non-negative");
  if (base.shift) throw std::invalid_argument("calibrate: calibration is in-control; remove the shift");
  const std::int64_t count = grid_points(options.step, options.l_max);

  CaseUConfig<P> config = base;
  config.L = grid_value(1, options.step);
  validate(config);

  const CdfTable<P> evaluation(config.true_params0);
  const PhaseOneDraws<P> draws = draw_phase_one(config);
  if (draws.degenerate_count == config.replications) {
    throw AllDegenerate("calibrate: every Phase-I sample was degenerate");
  }

  CalibrationResult best;
  best.relative_gap = std::numeric_limits<double>::infinity();
  // Keeps the closer of the incumbent and (L, report); ties keep the incumbent.
  auto consider = [&](double L, const CaseUReport& report) {
    const double gap = std::abs(report.arl - arl0) / arl0;
    if (gap < best.relative_gap) {
      best.l_star = L;
      best.achieved_arl = report.arl;
      best.achieved_sdrl = report.sdrl;
      best.relative_gap = gap;
      best.report = report;
    }
    return gap;
  };

  std::vector<ScanPoint> trace;
  trace.reserve(static_cast<std::size_t>(count));
  for (std::int64_t k = 1; k <= count; ++k) {
    const double L = grid_value(k, options.step);
    const CaseUReport report = summarize(draws, L, evaluation);
    trace.push_back({L, report.arl});
    best.evaluations = k;
    if (options.selection == Selection::FirstWithinTolerance) {
      if (consider(L, report) <= options.tolerance) break;
      continue;
    }
    if (report.arl >= arl0) {
      consider(L, report);  // incumbent is the previous grid point
      break;
    }
    best.relative_gap = std::numeric_limits<double>::infinity();
    consider(L, report);
  }
  best.best_effort = !(best.relative_gap <= options.tolerance);
  best.trace = std::move(trace);
  return best;
}

template <ZeroInflatedParams P>
struct CalibrationCell {
  P params0;
  std::int64_t m;
  double arl0;
  std::optional<CalibrationResult> result;
  std::string error;
};

/// Cartesian grid params0 x m; targets[i] is ARL0 for params0_list[i].
/// Rows are ordered by parameter vector, then by m.
template <ZeroInflatedParams P>
std::vector<CalibrationCell<P>> calibration_table(std::span<const P> params0_list,
                                                  std::span<const std::int64_t> m_list,
                                                  std::span<const double> targets,
                                                  const CaseUConfig<P>& base,
                                                  const CalibrationOptions& options = {}) {
  if (params0_list.empty()) throw std::invalid_argument("calibration_table: empty parameter list");
  if (m_list.empty()) throw std::invalid_argument("calibration_table: empty m list");
  if (targets.size() != params0_list.size()) {
    throw std::invalid_argument("calibration_table: need one ARL0 target per parameter vector");
  }
  std::vector<CalibrationCell<P>> cells;
  for (std::size_t i = 0; i < params0_list.size(); ++i) {
    for (const std::int64_t m : m_list) {
      CaseUConfig<P> config = base;
      config.true_params0 = params0_list[i];
      config.m = m;
      CalibrationCell<P> cell{params0_list[i], m, targets[i], std::nullopt, {}};
      try {
        cell.result = calibrate(config, targets[i], options);
      } catch (const std::exception& e) {
        cell.error = e.what();
      }
      cells.push_back(std::move(cell));
    }
  }
  return cells;
}

}  // namespace zichart
