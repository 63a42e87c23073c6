#pragma once

// Table-producing studies driven by a JSON config file.
//
// Config schema (all keys optional unless stated; scalars are accepted
// wherever a list is expected):
//
//   chart              "zip" | "zib"                           (required)
//   mode               "design" | "evaluate" | "calibrate" | "ooc"
//                      (the CLI subcommand takes precedence)
//   phi0               [double]  in [0, 1]                     (required)
//   lambda0            [double]  > 0                           (zip)
//   n                  [int]     >= 1                          (zib)
//   p0                 [double]  in (0, 1)                     (zib)
//   m                  [int]     Phase-I sizes                 (not design)
//   L                  [double]  design constants; omitted => the Case-K
//                      design for arl_target, per parameter vector
//   tau, delta         [double]  shift multipliers             (ooc)
//   method             "mle" | "mom"                 default "mle"
//   arl_target         double    Case-K design target,  default 370.4
//   arl0               double    calibration target; omitted => Case-K ARL
//   replications       int       default 50000
//   seed               uint64    default 1
//   tolerance          double    default 0.05
//   step               double    default 0.01
//   l_max              double    default 10
//   selection          "closest" | "first_within_tolerance"
//   degenerate_policy  "exclude" | "redraw"
//   format             "csv" | "json"
//   out                path, "-" for stdout
//   threads            int, 0 => all hardware threads
//   full_precision     bool, CSV statistics at full precision

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <optional>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "json.hpp"
#include "zichart/calibrate.hpp"
#include "zichart/chart.hpp"
#include "zichart/dist.hpp"
#include "zichart/estimate.hpp"
#include "zichart/unconditional.hpp"

namespace zichart::study {

enum class ChartKind { Zip, Zib };
enum class Mode { Design, Evaluate, Calibrate, Ooc };
enum class Format { Csv, Json };

inline const char* to_string(ChartKind c) { return c == ChartKind::Zip ? "zip" : "zib"; }

inline const char* to_string(Mode m) {
  switch (m) {
    case Mode::Design: return "design";
    case Mode::Evaluate: return "evaluate";
    case Mode::Calibrate: return "calibrate";
    case Mode::Ooc: return "ooc";
  }
  return "?";
}

struct StudySpec {
  std::optional<ChartKind> chart;
  std::optional<Mode> mode;
  std::vector<double> phi0;
  std::vector<double> lambda0;
  std::vector<std::int64_t> n;
  std::vector<double> p0;
  std::vector<std::int64_t> m;
  std::vector<double> L;
  std::vector<double> tau;
  std::vector<double> delta;
  Method method = Method::MLE;
  double arl_target = 370.4;
  std::optional<double> arl0;
  std::int64_t replications = 50000;
  std::uint64_t seed = 1;
  double tolerance = 0.05;
  double step = 0.01;
  double l_max = 10.0;
  Selection selection = Selection::Closest;
  DegeneratePolicy degenerate_policy = DegeneratePolicy::Exclude;
  Format format = Format::Csv;
  std::string out = "-";
  unsigned threads = 0;
  bool full_precision = false;
};

struct Diagnostic {
  std::string field;
  std::string message;
};

inline std::string to_string(const Diagnostic& d) { return d.field + ": " + d.message; }

/// Malformed config text; message carries line and column.
class SpecParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Parsing

namespace detail {

using nlohmann::json;

inline std::pair<std::size_t, std::size_t> line_column(const std::string& text, std::size_t byte) {
  std::size_t line = 1;
  std::size_t column = 1;
  for (std::size_t i = 0; i < byte && i < text.size(); ++i) {
    if (text[i] == '\n') {
      ++line;
      column = 1;
    } else {
      ++column;
    }
  }
  return {line, column};
}

template <class T>
bool read_number(const json& j, T& out) {
  if constexpr (std::is_floating_point_v<T>) {
    if (!j.is_number()) return false;
    out = j.get<T>();
    return true;
  } else if constexpr (std::is_unsigned_v<T>) {
    if (!j.is_number_unsigned()) return false;
    out = j.get<T>();
    return true;
  } else {
    if (!j.is_number_integer()) return false;
    out = j.get<T>();
    return true;
  }
}

template <class T>
void read_list(const json& doc, const char* key, std::vector<T>& out, std::vector<Diagnostic>& diags) {
  if (!doc.contains(key)) return;
  const json& v = doc.at(key);
  out.clear();
  if (!v.is_array()) {
    T x{};
    if (read_number(v, x)) {
      out.push_back(x);
    } else {
      diags.push_back({key, std::string("expected a number or a list of numbers, got ") + v.type_name()});
    }
    return;
  }
  for (std::size_t i = 0; i < v.size(); ++i) {
    T x{};
    if (read_number(v[i], x)) {
      out.push_back(x);
    } else {
      diags.push_back({std::string(key) + "[" + std::to_string(i) + "]",
                       std::string("expected ") + (std::is_floating_point_v<T> ? "a number" : "an integer") +
                           ", got " + v[i].dump()});
    }
  }
}

template <class T>
void read_scalar(const json& doc, const char* key, T& out, std::vector<Diagnostic>& diags) {
  if (!doc.contains(key)) return;
  if (!read_number(doc.at(key), out)) {
    diags.push_back({key, std::string("expected ") + (std::is_floating_point_v<T> ? "a number" : "an integer") +
                              ", got " + doc.at(key).dump()});
  }
}

template <class E>
void read_enum(const json& doc, const char* key, std::initializer_list<std::pair<const char*, E>> names,
               E& out, std::vector<Diagnostic>& diags) {
  if (!doc.contains(key)) return;
  const json& v = doc.at(key);
  std::string allowed;
  for (const auto& [name, value] : names) {
    if (v.is_string() && v.get<std::string>() == name) {
      out = value;
      return;
    }
    allowed += allowed.empty() ? "" : " | ";
    allowed += name;
  }
  diags.push_back({key, "expected one of " + allowed + ", got " + v.dump()});
}

inline constexpr std::pair<const char*, Mode> kModeNames[] = {
    {"design", Mode::Design}, {"evaluate", Mode::Evaluate}, {"calibrate", Mode::Calibrate}, {"ooc", Mode::Ooc}};

}  // namespace detail

inline std::optional<Mode> parse_mode(const std::string& name) {
  for (const auto& [key, value] : detail::kModeNames) {
    if (name == key) return value;
  }
  return std::nullopt;
}

struct ParsedSpec {
  StudySpec spec;
  std::vector<Diagnostic> diagnostics;  // field-level type errors
};

/// Throws SpecParseError on malformed JSON; field-level problems are
/// collected in ParsedSpec::diagnostics.
inline ParsedSpec parse_spec(const std::string& text) {
  using detail::json;
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    const auto [line, column] = detail::line_column(text, e.byte == 0 ? 0 : e.byte - 1);
    std::ostringstream os;
    os << "line " << line << ", column " << column << ": malformed config ("
       << e.what() << ")";
    throw SpecParseError(os.str());
  }
  if (!doc.is_object()) throw SpecParseError("line 1, column 1: config must be a JSON object");

  ParsedSpec parsed;
  StudySpec& s = parsed.spec;
  auto& diags = parsed.diagnostics;

  static const char* const kKnown[] = {
      "chart", "mode", "phi0", "lambda0", "n", "p0", "m", "L", "tau", "delta", "method", "arl_target",
      "arl0", "replications", "seed", "tolerance", "step", "l_max", "selection", "degenerate_policy",
      "format", "out", "threads", "full_precision"};
  for (const auto& item : doc.items()) {
    bool known = false;
    for (const char* k : kKnown) known = known || item.key() == k;
    if (!known) diags.push_back({item.key(), "unknown field"});
  }

  ChartKind chart{};
  if (doc.contains("chart")) {
    const std::size_t before = diags.size();
    detail::read_enum(doc, "chart", {{"zip", ChartKind::Zip}, {"zib", ChartKind::Zib}}, chart, diags);
    if (diags.size() == before) s.chart = chart;
  }
  if (doc.contains("mode")) {
    Mode mode{};
    const std::size_t before = diags.size();
    detail::read_enum(doc, "mode",
                      {{"design", Mode::Design}, {"evaluate", Mode::Evaluate},
                       {"calibrate", Mode::Calibrate}, {"ooc", Mode::Ooc}},
                      mode, diags);
    if (diags.size() == before) s.mode = mode;
  }
  detail::read_list(doc, "phi0", s.phi0, diags);
  detail::read_list(doc, "lambda0", s.lambda0, diags);
  detail::read_list(doc, "n", s.n, diags);
  detail::read_list(doc, "p0", s.p0, diags);
  detail::read_list(doc, "m", s.m, diags);
  detail::read_list(doc, "L", s.L, diags);
  detail::read_list(doc, "tau", s.tau, diags);
  detail::read_list(doc, "delta", s.delta, diags);
  detail::read_enum(doc, "method", {{"mle", Method::MLE}, {"mom", Method::MoM}}, s.method, diags);
  detail::read_scalar(doc, "arl_target", s.arl_target, diags);
  if (doc.contains("arl0")) {
    double v = 0.0;
    const std::size_t before = diags.size();
    detail::read_scalar(doc, "arl0", v, diags);
    if (diags.size() == before) s.arl0 = v;
  }
  detail::read_scalar(doc, "replications", s.replications, diags);
  detail::read_scalar(doc, "seed", s.seed, diags);
  detail::read_scalar(doc, "tolerance", s.tolerance, diags);
  detail::read_scalar(doc, "step", s.step, diags);
  detail::read_scalar(doc, "l_max", s.l_max, diags);
  detail::read_enum(doc, "selection",
                    {{"closest", Selection::Closest}, {"first_within_tolerance", Selection::FirstWithinTolerance}},
                    s.selection, diags);
  detail::read_enum(doc, "degenerate_policy",
                    {{"exclude", DegeneratePolicy::Exclude}, {"redraw", DegeneratePolicy::Redraw}},
                    s.degenerate_policy, diags);
  detail::read_enum(doc, "format", {{"csv", Format::Csv}, {"json", Format::Json}}, s.format, diags);
  if (doc.contains("out")) {
    if (doc["out"].is_string()) {
      s.out = doc["out"].get<std::string>();
    } else {
      diags.push_back({"out", "expected a path string"});
    }
  }
  detail::read_scalar(doc, "threads", s.threads, diags);
  if (doc.contains("full_precision")) {
    if (doc["full_precision"].is_boolean()) {
      s.full_precision = doc["full_precision"].get<bool>();
    } else {
      diags.push_back({"full_precision", "expected true or false"});
    }
  }
  return parsed;
}

inline ParsedSpec load_spec(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read config file '" + path + "'");
  std::ostringstream text;
  text << in.rdbuf();
  return parse_spec(text.str());
}

// ---------------------------------------------------------------------------
// Validation

/// Every violation in the spec. A missing mode is not reported here (the
/// CLI subcommand usually supplies it); run() insists on one.
inline std::vector<Diagnostic> validate(const StudySpec& s) {
  std::vector<Diagnostic> d;
  auto num = [](double v) {
    std::ostringstream os;
    os << v;
    return os.str();
  };
  auto indexed = [](const char* key, std::size_t i) { return std::string(key) + "[" + std::to_string(i) + "]"; };

  if (!s.chart) d.push_back({"chart", "required: \"zip\" or \"zib\""});
  const Mode mode = s.mode.value_or(Mode::Evaluate);

  if (s.phi0.empty()) d.push_back({"phi0", "grid must not be empty"});
  for (std::size_t i = 0; i < s.phi0.size(); ++i) {
    if (!(s.phi0[i] >= 0.0 && s.phi0[i] <= 1.0)) {
      d.push_back({indexed("phi0", i), "must lie in [0, 1], got " + num(s.phi0[i])});
    }
  }
  if (s.chart == ChartKind::Zip) {
    if (s.lambda0.empty()) d.push_back({"lambda0", "grid must not be empty for a zip chart"});
    for (std::size_t i = 0; i < s.lambda0.size(); ++i) {
      if (!(s.lambda0[i] > 0.0) || !std::isfinite(s.lambda0[i])) {
        d.push_back({indexed("lambda0", i), "must be positive, got " + num(s.lambda0[i])});
      }
    }
    if (!s.n.empty() || !s.p0.empty()) d.push_back({"n/p0", "only used by zib charts"});
  }
  if (s.chart == ChartKind::Zib) {
    if (s.n.empty()) d.push_back({"n", "grid must not be empty for a zib chart"});
    if (s.p0.empty()) d.push_back({"p0", "grid must not be empty for a zib chart"});
    const std::int64_t min_n = s.method == Method::MoM && mode != Mode::Design ? 2 : 1;
    for (std::size_t i = 0; i < s.n.size(); ++i) {
      if (s.n[i] < min_n) {
        d.push_back({indexed("n", i), "must be at least " + std::to_string(min_n) + ", got " + std::to_string(s.n[i])});
      }
    }
    for (std::size_t i = 0; i < s.p0.size(); ++i) {
      if (!(s.p0[i] > 0.0 && s.p0[i] < 1.0)) {
        d.push_back({indexed("p0", i), "must lie in (0, 1), got " + num(s.p0[i])});
      }
    }
    if (!s.lambda0.empty()) d.push_back({"lambda0", "only used by zip charts"});
  }

  if (mode != Mode::Design) {
    if (s.m.empty()) d.push_back({"m", "grid must not be empty"});
    for (std::size_t i = 0; i < s.m.size(); ++i) {
      if (s.m[i] < 1) d.push_back({indexed("m", i), "must be positive, got " + std::to_string(s.m[i])});
    }
  }
  for (std::size_t i = 0; i < s.L.size(); ++i) {
    if (!(s.L[i] > 0.0)) d.push_back({indexed("L", i), "must be positive, got " + num(s.L[i])});
  }

  if (mode == Mode::Ooc) {
    if (s.tau.empty()) d.push_back({"tau", "grid must not be empty in ooc mode"});
    if (s.delta.empty()) d.push_back({"delta", "grid must not be empty in ooc mode"});
    for (std::size_t i = 0; i < s.tau.size(); ++i) {
      if (!(s.tau[i] >= 0.0)) d.push_back({indexed("tau", i), "must be non-negative, got " + num(s.tau[i])});
      for (std::size_t j = 0; j < s.phi0.size(); ++j) {
        if (s.tau[i] * s.phi0[j] > 1.0) {
          d.push_back({indexed("tau", i), "InvalidShift: tau * phi0 = " + num(s.tau[i]) + " * " + num(s.phi0[j]) +
                                              " = " + num(s.tau[i] * s.phi0[j]) + " exceeds 1"});
        }
      }
    }
    for (std::size_t i = 0; i < s.delta.size(); ++i) {
      if (!(s.delta[i] > 0.0)) d.push_back({indexed("delta", i), "must be positive, got " + num(s.delta[i])});
      if (s.chart == ChartKind::Zib) {
        for (std::size_t j = 0; j < s.p0.size(); ++j) {
          if (s.delta[i] * s.p0[j] >= 1.0) {
            d.push_back({indexed("delta", i), "InvalidShift: delta * p0 = " + num(s.delta[i]) + " * " +
                                                  num(s.p0[j]) + " = " + num(s.delta[i] * s.p0[j]) +
                                                  " is not below 1"});
          }
        }
      }
    }
  } else if (!s.tau.empty() || !s.delta.empty()) {
    d.push_back({"tau/delta", "only used in ooc mode"});
  }

  if (s.replications < 1) d.push_back({"replications", "must be positive, got " + std::to_string(s.replications)});
  if (!(s.arl_target >= 1.0)) d.push_back({"arl_target", "must be at least 1, got " + num(s.arl_target)});
  if (s.arl0 && !(*s.arl0 > 1.0)) d.push_back({"arl0", "must exceed 1, got " + num(*s.arl0)});
  if (!(s.tolerance >= 0.0)) d.push_back({"tolerance", "must be non-negative, got " + num(s.tolerance)});
  if (!(s.step > 0.0)) d.push_back({"step", "must be positive, got " + num(s.step)});
  if (!(s.l_max >= s.step)) d.push_back({"l_max", "must be at least step, got " + num(s.l_max)});
  return d;
}

// ---------------------------------------------------------------------------
// Tables

/// A plotted statistic (ARL, SDRL, mu2): two decimals in CSV by default.
struct Stat {
  double value;
};
struct NotAvailable {};
using Value = std::variant<NotAvailable, std::monostate, std::int64_t, double, Stat, bool, std::string>;

struct Table {
  std::vector<std::string> columns;
  std::vector<std::vector<Value>> rows;
  std::int64_t failed_cells = 0;
  std::vector<std::string> errors;
};

/// Locale-independent. `decimals` gives fixed notation; otherwise the
/// shortest round-trip form, or `significant` digits when set.
inline std::string format_double(double v, std::optional<int> decimals, std::optional<int> significant = {}) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  std::to_chars_result res{};
  if (decimals) {
    res = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::fixed, *decimals);
  } else if (significant) {
    res = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, *significant);
  } else {
    res = std::to_chars(buf, buf + sizeof buf, v);
  }
  return std::string(buf, res.ptr);
}

inline std::string format_csv_value(const Value& v, bool full_precision) {
  struct Visitor {
    bool full;
    std::string operator()(NotAvailable) const { return "NA"; }
    std::string operator()(std::monostate) const { return ""; }
    std::string operator()(std::int64_t x) const { return std::to_string(x); }
    // 12 digits hide representation noise such as 0.8 * 0.7 = 0.5599999999999999
    std::string operator()(double x) const {
      return format_double(x, std::nullopt, full ? std::nullopt : std::optional<int>(12));
    }
    std::string operator()(Stat s) const { return format_double(s.value, full ? std::nullopt : std::optional<int>(2)); }
    std::string operator()(bool b) const { return b ? "true" : "false"; }
    std::string operator()(const std::string& s) const { return s; }
  };
  return std::visit(Visitor{full_precision}, v);
}

inline void write_csv(std::ostream& os, const Table& t, bool full_precision) {
  for (std::size_t i = 0; i < t.columns.size(); ++i) os << (i ? "," : "") << t.columns[i];
  os << '\n';
  for (const auto& row : t.rows) {
    for (std::size_t i = 0; i < row.size(); ++i) os << (i ? "," : "") << format_csv_value(row[i], full_precision);
    os << '\n';
  }
}

inline nlohmann::json to_json(const Value& v) {
  struct Visitor {
    nlohmann::json operator()(NotAvailable) const { return "NA"; }
    nlohmann::json operator()(std::monostate) const { return nullptr; }
    nlohmann::json operator()(std::int64_t x) const { return x; }
    nlohmann::json operator()(double x) const { return std::isfinite(x) ? nlohmann::json(x) : nlohmann::json(format_double(x, {})); }
    nlohmann::json operator()(Stat s) const { return (*this)(s.value); }
    nlohmann::json operator()(bool b) const { return b; }
    nlohmann::json operator()(const std::string& s) const { return s; }
  };
  return std::visit(Visitor{}, v);
}

inline void write_json(std::ostream& os, const Table& t) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& row : t.rows) {
    nlohmann::json obj = nlohmann::json::object();
    for (std::size_t i = 0; i < row.size(); ++i) obj[t.columns[i]] = to_json(row[i]);
    rows.push_back(std::move(obj));
  }
  os << rows.dump(2) << '\n';
}

inline nlohmann::json to_json(const StudySpec& s) {
  nlohmann::json j;
  if (s.chart) j["chart"] = to_string(*s.chart);
  if (s.mode) j["mode"] = to_string(*s.mode);
  j["phi0"] = s.phi0;
  if (s.chart == ChartKind::Zip) {
    j["lambda0"] = s.lambda0;
  } else {
    j["n"] = s.n;
    j["p0"] = s.p0;
  }
  j["m"] = s.m;
  if (!s.L.empty()) j["L"] = s.L;
  if (!s.tau.empty()) j["tau"] = s.tau;
  if (!s.delta.empty()) j["delta"] = s.delta;
  j["method"] = to_string(s.method);
  j["arl_target"] = s.arl_target;
  if (s.arl0) j["arl0"] = *s.arl0;
  j["replications"] = s.replications;
  j["seed"] = s.seed;
  j["tolerance"] = s.tolerance;
  j["step"] = s.step;
  j["l_max"] = s.l_max;
  j["selection"] = s.selection == Selection::Closest ? "closest" : "first_within_tolerance";
  j["degenerate_policy"] = s.degenerate_policy == DegeneratePolicy::Exclude ? "exclude" : "redraw";
  j["format"] = s.format == Format::Csv ? "csv" : "json";
  j["full_precision"] = s.full_precision;
  return j;
}

// ---------------------------------------------------------------------------
// Running

namespace detail {

struct ParamCell {
  ChartKind chart;
  double phi0;
  double rate;          // lambda0 or p0
  std::int64_t n = 0;   // zib only
};

inline std::vector<ParamCell> param_grid(const StudySpec& s) {
  std::vector<ParamCell> cells;
  for (const double phi : s.phi0) {
    if (s.chart == ChartKind::Zip) {
      for (const double lambda : s.lambda0) cells.push_back({ChartKind::Zip, phi, lambda});
    } else {
      for (const std::int64_t n : s.n) {
        for (const double p : s.p0) cells.push_back({ChartKind::Zib, phi, p, n});
      }
    }
  }
  return cells;
}

inline std::vector<Value> key_columns(const ParamCell& c) {
  return {std::string(to_string(c.chart)), c.phi0, c.rate,
          c.chart == ChartKind::Zib ? Value(c.n) : Value(std::monostate{})};
}

template <ZeroInflatedParams P>
P make_params(const ParamCell& c) {
  if constexpr (std::same_as<P, ZipParams>) {
    return ZipParams(c.phi0, c.rate);
  } else {
    return ZibParams(c.phi0, c.n, c.rate);
  }
}

inline double shifted_rate(const ZipParams& p) { return p.lambda(); }
inline double shifted_rate(const ZibParams& p) { return p.p(); }

template <ZeroInflatedParams P>
CaseUConfig<P> base_config(const StudySpec& s, const P& params0, std::int64_t m) {
  CaseUConfig<P> c{.true_params0 = params0, .shift = std::nullopt};
  c.m = m;
  c.method = s.method;
  c.replications = s.replications;
  c.master_seed = s.seed;
  c.degenerate_policy = s.degenerate_policy;
  c.threads = s.threads;
  return c;
}

template <ZeroInflatedParams P>
std::vector<double> design_constants(const StudySpec& s, const P& params0) {
  if (!s.L.empty()) return s.L;
  return {case_k_design(params0, s.arl_target, s.step, s.l_max).L};
}

inline void append(std::vector<Value>& row, std::initializer_list<Value> more) {
  row.insert(row.end(), more.begin(), more.end());
}

inline void append_report(std::vector<Value>& row, const CaseUReport& r) {
  append(row, {Stat{r.arl}, Stat{r.sdrl}, Stat{r.mu2}, r.replications_used, r.degenerate_count, r.clamped_count,
               r.beta_one_count});
}

inline void append_na(std::vector<Value>& row, std::size_t count) {
  for (std::size_t i = 0; i < count; ++i) row.emplace_back(NotAvailable{});
}

template <ZeroInflatedParams P>
void run_cell(const StudySpec& s, Mode mode, const ParamCell& cell, Table& table) {
  const P params0 = make_params<P>(cell);
  // Pads the row with NA up to the table width.
  const auto record_failure = [&](std::vector<Value> row, const std::string& what) {
    append_na(row, table.columns.size() - std::min(row.size(), table.columns.size()));
    table.rows.push_back(std::move(row));
    ++table.failed_cells;
    table.errors.push_back(what);
  };

  if (mode == Mode::Design) {
    const auto design = case_k_design(params0, s.arl_target, s.step, s.l_max);
    auto row = key_columns(cell);
    append(row, {design.L, design.limits.lcl, design.limits.ucl, Stat{design.summary.arl},
                 Stat{design.summary.sdrl}});
    table.rows.push_back(std::move(row));
    return;
  }

  const std::vector<double> Ls = design_constants(s, params0);

  if (mode == Mode::Calibrate) {
    const double L0 = Ls.front();
    double target = 0.0;
    if (s.arl0) {
      target = *s.arl0;
    } else {
      target = run_length_from_signal(CdfTable<P>(params0).signal(limits(params0, L0))).arl;
    }
    for (const std::int64_t m : s.m) {
      auto row = key_columns(cell);
      append(row, {m, std::string(to_string(s.method)), L0, target});
      try {
        const auto r = calibrate(base_config(s, params0, m), target,
                                 CalibrationOptions{s.tolerance, s.step, s.l_max, s.selection});
        append(row, {r.l_star, Stat{r.achieved_arl}, Stat{r.achieved_sdrl}, r.relative_gap, r.evaluations,
                     r.best_effort});
        table.rows.push_back(std::move(row));
      } catch (const std::exception& e) {
        record_failure(std::move(row), e.what());
      }
    }
    return;
  }

  for (const std::int64_t m : s.m) {
    const CaseUConfig<P> config = base_config(s, params0, m);
    std::optional<PhaseOneDraws<P>> draws;
    std::string draw_error;
    try {
      CaseUConfig<P> check = config;
      check.L = Ls.front();
      validate(check);
      draws = draw_phase_one(config);
      if (draws->degenerate_count == config.replications) {
        draw_error = "every Phase-I sample was degenerate";
        draws.reset();
      }
    } catch (const std::exception& e) {
      draw_error = e.what();
    }

    if (mode == Mode::Evaluate) {
      const CdfTable<P> evaluation(params0);
      for (const double L : Ls) {
        auto row = key_columns(cell);
        append(row, {m, std::string(to_string(s.method)), L});
        if (!draws) {
          record_failure(std::move(row), draw_error);
          continue;
        }
        try {
          append_report(row, summarize(*draws, L, evaluation));
          table.rows.push_back(std::move(row));
        } catch (const std::exception& e) {
          record_failure(std::move(row), e.what());
        }
      }
      continue;
    }

    // ooc
    for (const double L : Ls) {
      const ControlLimits known = limits(params0, L);
      for (const double tau : s.tau) {
        for (const double delta : s.delta) {
          auto row = key_columns(cell);
          append(row, {m, std::string(to_string(s.method)), L, tau, delta});
          try {
            const P params1 = apply_shift(params0, ShiftSpec{tau, delta});
            const CdfTable<P> evaluation(params1);
            append(row, {params1.phi(), shifted_rate(params1)});
            try {
              const RunLengthSummary k = run_length_from_signal(evaluation.signal(known));
              append(row, {Stat{k.arl}, Stat{k.sdrl}});
            } catch (const BetaOne&) {
              append_na(row, 2);
            }
            if (!draws) {
              record_failure(std::move(row), draw_error);
              continue;
            }
            append_report(row, summarize(*draws, L, evaluation));
            table.rows.push_back(std::move(row));
          } catch (const std::exception& e) {
            record_failure(std::move(row), e.what());
          }
        }
      }
    }
  }
}

inline std::vector<std::string> columns_for(Mode mode) {
  const std::vector<std::string> key{"chart", "phi0", "lambda0_or_p0", "n"};
  std::vector<std::string> tail;
  switch (mode) {
    case Mode::Design:
      tail = {"L", "lcl", "ucl", "arl", "sdrl"};
      break;
    case Mode::Evaluate:
      tail = {"m", "method", "L", "arl", "sdrl", "mu2", "replications_used", "degenerate_count", "clamped_count",
              "beta_one_count"};
      break;
    case Mode::Calibrate:
      tail = {"m", "method", "L", "arl0", "l_star", "arl", "sdrl", "relative_gap", "evaluations", "best_effort"};
      break;
    case Mode::Ooc:
      tail = {"m", "method", "L", "tau", "delta", "phi1", "lambda1_or_p1", "case_k_arl", "case_k_sdrl", "arl",
              "sdrl", "mu2", "replications_used", "degenerate_count", "clamped_count", "beta_one_count"};
      break;
  }
  std::vector<std::string> all = key;
  all.insert(all.end(), tail.begin(), tail.end());
  return all;
}

}  // namespace detail

/// Builds the table for a validated spec. Cells whose simulation fails are
/// filled with NA and counted in Table::failed_cells.
inline Table run(const StudySpec& spec) {
  if (const auto diags = validate(spec); !diags.empty()) {
    throw std::invalid_argument("invalid study spec: " + to_string(diags.front()));
  }
  if (!spec.mode) throw std::invalid_argument("invalid study spec: mode: required");
  const Mode mode = *spec.mode;
  Table table;
  table.columns = detail::columns_for(mode);
  for (const auto& cell : detail::param_grid(spec)) {
    if (cell.chart == ChartKind::Zip) {
      detail::run_cell<ZipParams>(spec, mode, cell, table);
    } else {
      detail::run_cell<ZibParams>(spec, mode, cell, table);
    }
  }
  return table;
}

inline void write_table(std::ostream& os, const Table& table, const StudySpec& spec) {
  if (spec.format == Format::Csv) {
    write_csv(os, table, spec.full_precision);
  } else {
    write_json(os, table);
  }
}

inline nlohmann::json manifest(const StudySpec& spec, const Table& table, double wall_seconds) {
  nlohmann::json j;
  j["tool"] = "zichart";
  j["seed"] = spec.seed;
  j["replications"] = spec.replications;
  j["threads"] = resolve_threads(spec.threads);
  j["spec"] = to_json(spec);
  j["rows"] = table.rows.size();
  j["failed_cells"] = table.failed_cells;
  j["errors"] = table.errors;
  j["wall_time_seconds"] = wall_seconds;
  return j;
}

}  // namespace zichart::study
