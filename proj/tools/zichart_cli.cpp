// zichart: run-length tables for ZIP/ZIB Shewhart charts.
//
//   zichart design    --config study.json
//   zichart evaluate  --config study.json --seed 7 --out table.csv
//   zichart calibrate --config study.json --threads 8
//   zichart ooc       --config study.json --format json
//   zichart validate  study.json
//
// Exit status: 0 ok, 1 invalid spec, 2 unreadable or malformed config,
// 3 some cells failed (written as NA), 4 output not writable.

#include <chrono>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "zichart/study.hpp"

namespace {

namespace st = zichart::study;

enum Exit : int { kOk = 0, kInvalid = 1, kBadConfig = 2, kFailedCells = 3, kOutput = 4 };

struct Overrides {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::int64_t> replications;
  std::optional<std::string> format;
  std::optional<std::string> out;
  std::optional<unsigned> threads;
  bool full_precision = false;
};

void add_common(CLI::App* cmd, Overrides& o) {
  cmd->add_option("--config,config", o.config, "study config (JSON)")->required()->check(CLI::ExistingFile);
  cmd->add_option("--seed", o.seed, "master seed");
  cmd->add_option("--replications", o.replications, "Monte Carlo replications T");
  cmd->add_option("--format", o.format, "csv or json")->check(CLI::IsMember({"csv", "json"}));
  cmd->add_option("--out", o.out, "output path, - for stdout");
  cmd->add_option("--threads", o.threads, "worker threads, 0 = all cores");
  cmd->add_flag("--full-precision", o.full_precision, "print statistics at full precision in CSV");
}

void apply(const Overrides& o, st::StudySpec& s) {
  if (o.seed) s.seed = *o.seed;
  if (o.replications) s.replications = *o.replications;
  if (o.format) s.format = *o.format == "json" ? st::Format::Json : st::Format::Csv;
  if (o.out) s.out = *o.out;
  if (o.threads) s.threads = *o.threads;
  if (o.full_precision) s.full_precision = true;
}

void print_diagnostics(const std::vector<st::Diagnostic>& diags) {
  for (const auto& d : diags) std::cerr << "error: " << st::to_string(d) << '\n';
}

int run_mode(const Overrides& o, std::optional<st::Mode> mode) {
  st::ParsedSpec parsed;
  try {
    parsed = st::load_spec(o.config);
  } catch (const std::exception& e) {
    std::cerr << o.config << ": " << e.what() << '\n';
    return kBadConfig;
  }
  st::StudySpec& spec = parsed.spec;
  if (mode) spec.mode = mode;
  apply(o, spec);

  auto diags = parsed.diagnostics;
  const auto more = st::validate(spec);
  diags.insert(diags.end(), more.begin(), more.end());

  if (!mode) {  // validate subcommand
    if (diags.empty()) {
      std::cout << "ok\n";
      return kOk;
    }
    print_diagnostics(diags);
    return kInvalid;
  }
  if (!diags.empty()) {
    print_diagnostics(diags);
    return kInvalid;
  }

  std::ofstream file;
  const bool to_stdout = spec.out.empty() || spec.out == "-";
  if (!to_stdout) {
    file.open(spec.out, std::ios::binary | std::ios::trunc);
    if (!file) {
      std::cerr << "error: cannot write output file '" << spec.out << "'\n";
      return kOutput;
    }
  }

  const auto started = std::chrono::steady_clock::now();
  st::Table table;
  try {
    table = st::run(spec);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kInvalid;
  }
  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();

  std::ostream& os = to_stdout ? std::cout : file;
  st::write_table(os, table, spec);
  os.flush();
  if (!os) {
    std::cerr << "error: failed writing output\n";
    return kOutput;
  }

  if (!to_stdout) {
    const std::string manifest_path = spec.out + ".manifest.json";
    std::ofstream manifest(manifest_path, std::ios::binary | std::ios::trunc);
    manifest << st::manifest(spec, table, wall).dump(2) << '\n';
    if (!manifest) {
      std::cerr << "error: cannot write manifest '" << manifest_path << "'\n";
      return kOutput;
    }
  }

  for (const auto& e : table.errors) std::cerr << "warning: cell written as NA: " << e << '\n';
  return table.failed_cells > 0 ? kFailedCells : kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Run-length tables for zero-inflated Poisson and binomial Shewhart charts"};
  app.require_subcommand(1);

  struct Sub {
    const char* name;
    const char* help;
    std::optional<st::Mode> mode;
  };
  const Sub subs[] = {
      {"design", "known-parameter design constants and run lengths", st::Mode::Design},
      {"evaluate", "unconditional run lengths with estimated parameters", st::Mode::Evaluate},
      {"calibrate", "adjusted design constants L*", st::Mode::Calibrate},
      {"ooc", "out-of-control run lengths", st::Mode::Ooc},
      {"validate", "check a config without running it", std::nullopt},
  };

  Overrides overrides[std::size(subs)];
  std::optional<int> status;
  for (std::size_t i = 0; i < std::size(subs); ++i) {
    CLI::App* cmd = app.add_subcommand(subs[i].name, subs[i].help);
    add_common(cmd, overrides[i]);
    cmd->callback([&, i] { status = run_mode(overrides[i], subs[i].mode); });
  }

  CLI11_PARSE(app, argc, argv);
  return status.value_or(kOk);
}
