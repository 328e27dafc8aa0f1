#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "derand/attacker.hpp"
#include "derand/resolver.hpp"
#include "derand/testbed.hpp"

namespace derand {

/// Everything one experiment needs; mirrors the config file layout.
struct Scenario {
  std::string name = "custom";
  PatchConfig resolver;
  TopologyConfig network;
  DomainName zone_apex;
  std::size_t ns_count = 1;
  Capabilities attacker;
  AttackPlan plan;
  std::size_t trials = 1;
  std::uint64_t seed = 1;

  /// Throws ConfigError naming the offending field.
  void validate() const;
};

class ConfigError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

class InsufficientSamples : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

struct Metrics {
  std::string scenario;
  SearchSpace space;
  std::size_t trials = 0;
  std::size_t successes = 0;
  double success_rate = 0.0;
  double stderr_rate = 0.0;
  double analytic = 0.0;
  /// Means over successful trials only.
  std::optional<double> rounds_mean;
  std::optional<double> packets_mean;
  /// Needs at least 1000 observed resolver ports.
  std::optional<double> port_minentropy_bits;
  std::size_t port_samples = 0;
  std::size_t prefix_skipped = 0;
  std::size_t trap_infeasible = 0;
  std::size_t off_path_violations = 0;
  std::size_t nat_crossing_violations = 0;
};

/// Probability that at least one of `rounds` rounds succeeds when each round
/// sends `w` guesses into a space of `n` equally likely identifiers.
///
///   distinct:     1 - (1 - c*w/n)^rounds
///   independent:  1 - (1 - c/n)^(w*rounds)
///
/// `confidence` c is the chance the attacker's port knowledge is right in a
/// round (1 unless a prediction can be spoiled by cross traffic). Throws
/// std::domain_error when rounds < 1, n < 1, w < 0, or w > n for distinct.
double analytic_success(double n, double w, std::size_t rounds, bool distinct, double confidence = 1.0);

inline constexpr std::size_t kMinEntropySamples = 1000;

/// -log2 of the largest empirical frequency. Throws InsufficientSamples
/// below 1000 samples.
double min_entropy_estimate(std::span<const Port> samples);

/// The search space and per-round hit confidence the scenario's attacker
/// ends up facing, from the configuration alone.
struct PlannedAttack {
  SearchSpace space;
  double confidence = 1.0;
  bool trap_infeasible = false;
  /// The resolver's max-length guard refuses every trigger query.
  bool refused = false;
  DomainName example_trigger;
  std::size_t guesses_per_round = 0;
};

PlannedAttack plan_attack(const Scenario& s);

/// Analytic success of the planned attack; 0 when it cannot start.
double planned_success(const Scenario& s, const PlannedAttack& p);

struct RunOptions {
  /// Trace of trial 0 is written here, one line per delivered packet.
  std::ostream* trace = nullptr;
  /// Record traces and audit off-path / NAT crossing invariants.
  bool audit = false;
};

/// Runs every trial with its own seed derived from (seed, trial index) and
/// aggregates the outcome together with the analytic baseline.
Metrics run_scenario(const Scenario& s, const RunOptions& opts = {});

enum class ReportFormat : std::uint8_t { Csv, Jsonl };

inline constexpr std::string_view kCsvHeader =
    "scenario,N,success_rate,stderr,analytic,rounds_mean,packets_mean,port_minentropy_bits,prefix_skipped";

void write_report(std::span<const Metrics> rows, ReportFormat format, std::ostream& out);
/// Throws std::runtime_error (IoError) when the file cannot be written.
void write_report(std::span<const Metrics> rows, ReportFormat format, const std::string& path);

std::optional<ReportFormat> parse_report_format(std::string_view s);

// Presets and configuration files.

std::vector<std::string> preset_names();
std::string preset_summary(std::string_view name);
/// Throws ConfigError for an unknown name.
Scenario preset(std::string_view name);

/// YAML scenario text. A `preset:` key starts from that preset; every other
/// key overrides one field. Unknown keys are errors.
Scenario load_scenario_text(std::string_view yaml);
Scenario load_scenario_file(const std::string& path);

/// Human-readable factor breakdown of a scenario's search space.
std::string explain(const Scenario& s);

} // namespace derand
