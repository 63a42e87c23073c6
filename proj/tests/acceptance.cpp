// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// nonzero if any fails.
//
// Monte Carlo criteria run the fixed seed at T = 50000 and estimate the
// standard error of that single run from 10 further independent seeds.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "zichart/calibrate.hpp"
#include "zichart/chart.hpp"
#include "zichart/dist.hpp"
#include "zichart/estimate.hpp"
#include "zichart/rng.hpp"
#include "zichart/unconditional.hpp"

using namespace zichart;

namespace {

constexpr std::int64_t kT = 50000;
constexpr std::uint64_t kSeed = 1;
constexpr int kSeSeeds = 10;

int failures = 0;

void report(int id, const std::string& name, bool pass, const std::string& detail) {
  std::printf("%s  criterion %2d  %s :: %s\n", pass ? "PASS" : "FAIL", id, name.c_str(), detail.c_str());
  std::fflush(stdout);
  failures += !pass;
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

bool near(double got, double want, double tol) { return std::abs(got - want) <= tol; }

double sample_sd(const std::vector<double>& xs) {
  double mean = 0.0;
  for (const double x : xs) mean += x;
  mean /= static_cast<double>(xs.size());
  double ss = 0.0;
  for (const double x : xs) ss += (x - mean) * (x - mean);
  return std::sqrt(ss / static_cast<double>(xs.size() - 1));
}

template <ZeroInflatedParams P>
CaseUConfig<P> config(const P& p0, std::int64_t m, double L, std::uint64_t seed) {
  CaseUConfig<P> c{.true_params0 = p0, .shift = std::nullopt};
  c.m = m;
  c.L = L;
  c.replications = kT;
  c.master_seed = seed;
  return c;
}

// ---------------------------------------------------------------------------

void criterion_1() {
  const ZibParams p0(0.8, 100, 0.01);
  const auto lim = limits(p0, 6.35);
  const double far = 1.0 - beta(lim, p0);
  const double arl = run_length(beta(lim, p0)).arl;
  const bool ok = lim.ucl == 3 && lim.lcl == 0 && near(far, 0.0036748, 1e-7) && near(arl, 272.12, 0.01);
  report(1, "ZIB worked example", ok,
         fmt("UCL=%lld LCL=%lld FAR=%.9f ARL=%.4f", static_cast<long long>(lim.ucl),
             static_cast<long long>(lim.lcl), far, arl));
}

void criterion_2() {
  const ZipParams a(0.8, 4.0), b(0.9, 1.0);
  const ZibParams c(0.9, 250, 0.01);
  const auto sa = run_length(beta(limits(a, 4.47), a));
  const auto sb = run_length(beta(limits(b, 6.66), b));
  const auto sc = run_length(beta(limits(c, 6.38), c));
  const bool ok = near(sa.arl, 234.04, 0.01) && near(sa.sdrl, 233.54, 0.01) && near(sb.arl, 526.64, 0.01) &&
                  near(sc.arl, 242.82, 0.01);
  report(2, "Case-K run length", ok,
         fmt("ZIP(0.8,4) %.4f/%.4f; ZIP(0.9,1) %.4f; ZIB(0.9,250,0.01) %.4f", sa.arl, sa.sdrl, sb.arl, sc.arl));
}

void criterion_3() {
  const auto zip = run_length(beta(limits(ZipParams(0.8, 2.0), 5.49), ZipParams(0.48, 3.0)));
  const auto zib = run_length(beta(limits(ZibParams(0.9, 250, 0.03), 5.09), ZibParams(0.54, 250, 0.045)));
  const bool ok = near(zip.arl, 22.92, 0.01) && near(zip.sdrl, 22.41, 0.01) && near(zib.arl, 6.45, 0.01) &&
                  near(zib.sdrl, 5.93, 0.01);
  report(3, "OOC Case-K", ok,
         fmt("ZIP %.4f/%.4f; ZIB %.4f/%.4f", zip.arl, zip.sdrl, zib.arl, zib.sdrl));
}

void criterion_4() {
  std::mt19937_64 gen(20240601);
  std::uniform_real_distribution<double> phi(0.0, 0.99);
  std::uniform_real_distribution<double> lam(0.05, 50.0);
  std::uniform_int_distribution<std::int64_t> nn(1, 500);
  std::uniform_real_distribution<double> pr(0.001, 0.999);
  std::uniform_real_distribution<double> Ls(0.1, 10.0);
  double worst = 0.0;
  for (int i = 0; i < 200; ++i) {
    auto check = [&](const auto& d) {
      const auto lim = limits(d, Ls(gen));
      double brute = 0.0;
      for (std::int64_t x = lim.lcl; x <= lim.ucl; ++x) brute += pmf(d, x);
      worst = std::max(worst, std::abs(beta(lim, d) - std::min(brute, 1.0)));
    };
    if (i % 2 == 0) {
      check(ZipParams(phi(gen), lam(gen)));
    } else {
      check(ZibParams(phi(gen), nn(gen), pr(gen)));
    }
  }
  report(4, "beta oracle equivalence", worst <= 1e-12, fmt("200 configs, max |diff| = %.3g", worst));
}

// Criteria 5 and 7 share Phase-I draws for ZIP(0.7, 1), m = 500.
struct McCell {
  const char* label;
  double reference;
  std::function<double(std::uint64_t)> run;  // seed -> ARL
};

void check_mc(int id, const std::string& name, const std::vector<McCell>& cells,
              const std::vector<std::string>& extra, bool extra_ok) {
  bool ok = extra_ok;
  std::string detail;
  for (const auto& cell : cells) {
    const double fixed = cell.run(kSeed);
    std::vector<double> reps;
    for (int s = 0; s < kSeSeeds; ++s) reps.push_back(cell.run(1000 + static_cast<std::uint64_t>(s)));
    const double se = sample_sd(reps);
    const double diff = std::abs(fixed - cell.reference);
    const bool cell_ok = diff <= 3.0 * se && diff <= 0.05 * cell.reference;
    ok = ok && cell_ok;
    detail += fmt("%s%s %.2f vs %.2f (|d|=%.2f, 3SE=%.2f)", detail.empty() ? "" : "; ", cell.label, fixed,
                  cell.reference, diff, 3.0 * se);
  }
  for (const auto& e : extra) detail += "; " + e;
  report(id, name, ok, detail);
}

void criterion_5() {
  const std::vector<McCell> cells{
      {"ZIP(0.8,4) m=1000 L=4.47", 424.31,
       [](std::uint64_t s) { return evaluate(config(ZipParams(0.8, 4.0), 1000, 4.47, s)).arl; }},
      {"ZIP(0.7,1) m=500 L=5.18", 535.49,
       [](std::uint64_t s) { return evaluate(config(ZipParams(0.7, 1.0), 500, 5.18, s)).arl; }},
      {"ZIB(0.9,250,0.01) m=500 L=6.38", 551.49,
       [](std::uint64_t s) { return evaluate(config(ZibParams(0.9, 250, 0.01), 500, 6.38, s)).arl; }},
  };
  // heavy-tailed cell: order of magnitude only
  const auto heavy = evaluate(config(ZipParams(0.9, 8.0), 100, 5.15, kSeed));
  const double arl_ratio = std::abs(std::log10(heavy.arl / 3201.76));
  const double sdrl_ratio = std::abs(std::log10(heavy.sdrl / 45373.05));
  const bool heavy_ok = arl_ratio < 1.0 && sdrl_ratio < 1.0;
  check_mc(5, "Case-U IC ARL, stable cells", cells,
           {fmt("ZIP(0.9,8) m=100 order of magnitude: ARL %.2f vs 3201.76, SDRL %.2f vs 45373.05 (%s)", heavy.arl,
                heavy.sdrl, heavy_ok ? "ok" : "off")},
           heavy_ok);
}

void criterion_6() {
  auto zip = config(ZipParams(0.8, 4.0), 200, 0.0, kSeed);
  const auto rz = calibrate(zip, 234.04);
  auto zib = config(ZibParams(0.9, 250, 0.01), 500, 0.0, kSeed);
  const auto rb = calibrate(zib, 242.82);
  const bool ok = near(rz.l_star, 4.02, 0.03 + 1e-9) && std::abs(rz.achieved_arl - 234.04) <= 0.05 * 234.04 &&
                  near(rb.l_star, 5.62, 0.03 + 1e-9);
  report(6, "calibration L*", ok,
         fmt("ZIP L*=%.2f (ARL %.2f); ZIB L*=%.2f (ARL %.2f)", rz.l_star, rz.achieved_arl, rb.l_star,
             rb.achieved_arl));
}

void criterion_7() {
  auto run = [](std::uint64_t s) {
    auto c = config(ZipParams(0.7, 1.0), 500, 4.36, s);
    c.shift = ShiftSpec{0.6, 1.5};
    return evaluate(c);
  };
  const auto fixed = run(kSeed);
  const bool sdrl_ok = std::abs(fixed.sdrl - 27.24) <= 0.05 * 27.24;
  check_mc(7, "OOC Case-U with L*", {{"ZIP(0.7,1) m=500 L*=4.36 tau=0.6 delta=1.5", 25.93,
                                      [&](std::uint64_t s) { return s == kSeed ? fixed.arl : run(s).arl; }}},
           {fmt("SDRL %.2f vs 27.24 (%s)", fixed.sdrl, sdrl_ok ? "within 5%" : "off")}, sdrl_ok);
}

void criterion_8() {
  bool ok = true;
  auto zip = config(ZipParams(0.8, 4.0), 200, 4.47, 7);
  auto zib = config(ZibParams(0.9, 250, 0.01), 200, 6.38, 7);
  zib.replications = 20000;
  CaseUReport base_zip, base_zib;
  for (const unsigned w : {1u, 4u, 16u}) {
    zip.threads = w;
    zib.threads = w;
    const auto a = evaluate(zip);
    const auto b = evaluate(zib);
    if (w == 1) {
      base_zip = a;
      base_zib = b;
    }
    ok = ok && a == base_zip && b == base_zib;
  }
  report(8, "determinism across workers", ok,
         fmt("1/4/16 workers; ZIP ARL %.17g, ZIB ARL %.17g", base_zip.arl, base_zib.arl));
}

void criterion_9() {
  const ZipParams truth(0.8, 4.0);
  constexpr int kReps = 1000;
  bool ok = true;
  std::string detail;
  for (const Method method : {Method::MLE, Method::MoM}) {
    std::vector<double> err[2][2];  // [size][phi, lambda]
    const std::int64_t sizes[2] = {500, 8000};
    for (int k = 0; k < 2; ++k) {
      const StreamFactory streams(900 + static_cast<std::uint64_t>(k));
      std::vector<std::int64_t> buf(static_cast<std::size_t>(sizes[k]));
      for (int r = 0; r < kReps; ++r) {
        auto rng = streams.stream(static_cast<std::uint64_t>(r));
        sample_into(truth, std::span<std::int64_t>(buf), rng);
        const auto e = estimate(moments(buf), method, truth);
        err[k][0].push_back(std::abs(e.params.phi() - truth.phi()));
        err[k][1].push_back(std::abs(e.params.lambda() - truth.lambda()));
      }
    }
    for (int j = 0; j < 2; ++j) {
      auto mean = [](const std::vector<double>& v) {
        double s = 0;
        for (const double x : v) s += x;
        return s / static_cast<double>(v.size());
      };
      const double a = mean(err[0][j]);
      const double b = mean(err[1][j]);
      const double se = std::sqrt(std::pow(sample_sd(err[0][j]), 2) / kReps + std::pow(sample_sd(err[1][j]), 2) / kReps);
      const bool improves = b < a - 2.0 * se;
      ok = ok && improves;
      detail += fmt("%s%s %s MAE %.4f -> %.4f (2SE %.4f)", detail.empty() ? "" : "; ", to_string(method),
                    j == 0 ? "phi" : "lambda", a, b, 2.0 * se);
    }
  }
  report(9, "estimator consistency", ok, detail);
}

void criterion_10() {
  bool ok = true;
  std::int64_t scans = 0;
  std::int64_t points = 0;
  auto scan = [&](const auto& p0, std::int64_t m) {
    auto c = config(p0, m, 1.0, 31);
    c.replications = 5000;
    const auto draws = draw_phase_one(c);
    const CdfTable<std::decay_t<decltype(p0)>> table(p0);
    double prev = 0.0;
    for (std::int64_t k = 1; k <= 1000; ++k) {
      double arl = 0.0;
      try {
        arl = summarize(draws, grid_value(k, 0.01), table).arl;
      } catch (const AllDegenerate&) {
        break;  // every band covers the support from here on
      }
      ok = ok && arl >= prev;
      prev = arl;
      ++points;
    }
    ++scans;
  };
  scan(ZipParams(0.8, 4.0), 200);
  scan(ZipParams(0.9, 1.0), 100);
  scan(ZipParams(0.7, 8.0), 500);
  scan(ZibParams(0.9, 250, 0.01), 500);
  scan(ZibParams(0.7, 100, 0.03), 200);
  // and the traces of real calibrations
  for (const double target : {150.0, 370.4}) {
    const auto r = calibrate(config(ZipParams(0.8, 2.0), 300, 0.0, 5), target);
    for (std::size_t i = 1; i < r.trace.size(); ++i) ok = ok && r.trace[i].arl >= r.trace[i - 1].arl;
    ++scans;
    points += static_cast<std::int64_t>(r.trace.size());
  }
  report(10, "calibration monotonicity", ok,
         fmt("%lld scans, %lld grid points, nondecreasing", static_cast<long long>(scans),
             static_cast<long long>(points)));
}

void criterion_11() {
  struct Case {
    const char* label;
    std::function<std::int64_t(Philox4x32&)> run_once;
    double beta;
  };
  auto make = [](const char* label, const auto& p0, double L, const auto& p1) {
    const auto lim = limits(p0, L);
    const double b = beta(lim, p1);
    return Case{label,
                [lim, p1](Philox4x32& rng) {
                  Sampler<std::decay_t<decltype(p1)>> draw(p1);
                  std::int64_t n = 0;
                  for (;;) {
                    ++n;
                    const std::int64_t x = draw(rng);
                    if (x < lim.lcl || x > lim.ucl) return n;
                  }
                },
                b};
  };
  const std::vector<Case> cases{
      make("ZIP(0.8,4) L=4.47 IC", ZipParams(0.8, 4.0), 4.47, ZipParams(0.8, 4.0)),
      make("ZIP(0.8,2)->(0.48,3) L=5.49", ZipParams(0.8, 2.0), 5.49, ZipParams(0.48, 3.0)),
      make("ZIP(0.5,3) L=2", ZipParams(0.5, 3.0), 2.0, ZipParams(0.5, 3.0)),
      make("ZIB(0.9,250,0.03)->(0.54,0.045) L=5.09", ZibParams(0.9, 250, 0.03), 5.09,
           ZibParams(0.54, 250, 0.045)),
      make("ZIB(0.6,20,0.3) L=2.5", ZibParams(0.6, 20, 0.3), 2.5, ZibParams(0.6, 20, 0.3)),
  };
  constexpr std::int64_t kRuns = 100000;
  bool ok = true;
  std::string detail;
  const StreamFactory streams(77);
  for (std::size_t i = 0; i < cases.size(); ++i) {
    auto rng = streams.stream(i);
    double sum = 0.0, sum_sq = 0.0;
    for (std::int64_t r = 0; r < kRuns; ++r) {
      const auto n = static_cast<double>(cases[i].run_once(rng));
      sum += n;
      sum_sq += n * n;
    }
    const double mean = sum / kRuns;
    const double se = std::sqrt((sum_sq / kRuns - mean * mean) / kRuns);
    const double exact = run_length(cases[i].beta).arl;
    const bool case_ok = std::abs(mean - exact) <= 3.0 * se;
    ok = ok && case_ok;
    detail += fmt("%s%s %.3f vs %.3f (3SE %.3f)", detail.empty() ? "" : "; ", cases[i].label, mean, exact,
                  3.0 * se);
  }
  report(11, "geometric run-length simulation", ok, detail);
}

}  // namespace

int main() {
  const auto start = std::chrono::steady_clock::now();
  const std::vector<void (*)()> criteria{criterion_1, criterion_2, criterion_3, criterion_4,
                                         criterion_5, criterion_6, criterion_7, criterion_8,
                                         criterion_9, criterion_10, criterion_11};
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    try {
      criteria[i]();
    } catch (const std::exception& e) {
      report(static_cast<int>(i + 1), "exception", false, e.what());
    }
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  std::printf("%d of %zu criteria failed (%.1f s)\n", failures, criteria.size(), secs);
  return failures == 0 ? 0 : 1;
}
