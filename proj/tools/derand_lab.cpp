// derand-lab: run DNS derandomisation scenarios and write reports.

#include <CLI11.hpp>
#include <filesystem>
#include <fmt/format.h>
#include <fstream>
#include <iostream>

#include "derand/experiments.hpp"

namespace {

derand::Scenario resolve_scenario(const std::string& ref) {
  if (std::filesystem::exists(ref)) {
    return derand::load_scenario_file(ref);
  }
  const auto names = derand::preset_names();
  if (std::find(names.begin(), names.end(), ref) != names.end()) {
    return derand::preset(ref);
  }
  throw derand::ConfigError(fmt::format("{}: no such file or preset", ref));
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"Deterministic DNS derandomisation attack lab"};
  app.require_subcommand(1);

  std::string config;
  std::optional<std::size_t> trials;
  std::optional<std::uint64_t> seed;
  std::string out_path;
  std::string format_name = "csv";
  std::string trace_path;
  auto* run = app.add_subcommand("run", "Run a scenario (config file or preset name) and report");
  run->add_option("config", config, "YAML scenario file or preset name")->required();
  run->add_option("--trials", trials, "Override the number of trials");
  run->add_option("--seed", seed, "Override the master seed");
  run->add_option("--out", out_path, "Report file (default: stdout)");
  run->add_option("--format", format_name, "Report format")->check(CLI::IsMember({"csv", "jsonl"}));
  run->add_option("--trace", trace_path, "Write the packet trace of trial 0 here");

  auto* list = app.add_subcommand("list-presets", "List built-in scenarios");

  std::string explain_name;
  auto* explain = app.add_subcommand("explain", "Print the search-space factor breakdown");
  explain->add_option("preset", explain_name, "Preset name or scenario file")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*list) {
      for (const auto& name : derand::preset_names()) {
        std::cout << fmt::format("{:<26} {}\n", name, derand::preset_summary(name));
      }
      return 0;
    }
    if (*explain) {
      std::cout << derand::explain(resolve_scenario(explain_name));
      return 0;
    }

    derand::Scenario s = resolve_scenario(config);
    if (trials) {
      s.trials = *trials;
    }
    if (seed) {
      s.seed = *seed;
    }
    s.validate();

    derand::RunOptions opts;
    std::ofstream trace;
    if (!trace_path.empty()) {
      trace.open(trace_path, std::ios::binary | std::ios::trunc);
      if (!trace) {
        throw std::runtime_error(fmt::format("cannot open {} for writing", trace_path));
      }
      opts.trace = &trace;
    }
    const derand::Metrics m = derand::run_scenario(s, opts);
    const auto format = *derand::parse_report_format(format_name);
    const std::vector<derand::Metrics> rows{m};
    if (out_path.empty()) {
      derand::write_report(rows, format, std::cout);
    } else {
      derand::write_report(rows, format, out_path);
    }
    if (trace.is_open()) {
      trace.flush();
      if (!trace) {
        throw std::runtime_error(fmt::format("write to {} failed", trace_path));
      }
    }
    return 0;
  } catch (const derand::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
