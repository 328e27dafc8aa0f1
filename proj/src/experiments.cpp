#include "derand/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <fmt/format.h>
#include <map>
#include <ostream>

namespace derand {

void Scenario::validate() const {
  auto fail = [](std::string_view path, std::string_view msg) { throw ConfigError(fmt::format("{}: {}", path, msg)); };
  if (trials < 1) {
    fail("trials", "must be at least 1");
  }
  try {
    resolver.validate();
  } catch (const std::invalid_argument& e) {
    fail("resolver", e.what());
  }
  try {
    MappingTable probe(network.pool, network.policy, network.nat_timeout);
  } catch (const std::invalid_argument& e) {
    fail("nat", e.what());
  }
  if (!(network.loss >= 0.0 && network.loss <= 1.0)) {
    fail("network.loss", "must lie in [0, 1]");
  }
  if (network.cross_traffic_rate < 0.0) {
    fail("network.cross_traffic_rate", "must be non-negative");
  }
  if (ns_count < 1) {
    fail("zone.ns_count", "must be at least 1");
  }
  if (!plan.target_zone.equals_ignore_case(zone_apex)) {
    fail("attacker.target_zone", "must be the configured zone apex");
  }
  try {
    plan.validate();
  } catch (const std::invalid_argument& e) {
    fail("attacker.rounds", e.what());
  }
  if (!attacker.zombie_present) {
    fail("attacker.zombie_present", "the simulated attack triggers queries through a zombie");
  }
  if (plan.trigger == TriggerStrategy::MaxNumeric && zone_apex.wire_length() > kMaxWireLength - 2) {
    fail("attacker.trigger", "zone apex too long for a numeric query");
  }
}

double analytic_success(double n, double w, std::size_t rounds, bool distinct, double confidence) {
  if (rounds < 1) {
    throw std::domain_error("rounds must be at least 1");
  }
  if (!(n >= 1.0)) {
    throw std::domain_error("search space must be at least 1");
  }
  if (!(w >= 0.0)) {
    throw std::domain_error("guess count must be non-negative");
  }
  if (!(confidence >= 0.0 && confidence <= 1.0)) {
    throw std::domain_error("confidence must lie in [0, 1]");
  }
  if (w == 0.0) {
    return 0.0;
  }
  const auto r = static_cast<double>(rounds);
  if (distinct) {
    if (w > n) {
      throw std::domain_error("distinct guesses cannot exceed the search space");
    }
    const double per_round = confidence * w / n;
    if (per_round >= 1.0) {
      return 1.0;
    }
    return -std::expm1(r * std::log1p(-per_round));
  }
  if (n == 1.0) {
    return confidence > 0.0 ? 1.0 - std::pow(1.0 - confidence, r) : 0.0;
  }
  // Each round hits with probability c * (1 - (1 - 1/n)^w).
  const double miss_all = std::exp(w * std::log1p(-1.0 / n));
  const double per_round = confidence * (1.0 - miss_all);
  return -std::expm1(r * std::log1p(-per_round));
}

double min_entropy_estimate(std::span<const Port> samples) {
  if (samples.size() < kMinEntropySamples) {
    throw InsufficientSamples(
        fmt::format("{} samples; at least {} needed", samples.size(), kMinEntropySamples));
  }
  std::vector<std::uint32_t> counts(65536, 0);
  std::uint32_t top = 0;
  for (const Port p : samples) {
    top = std::max(top, ++counts[p]);
  }
  return std::log2(static_cast<double>(samples.size()) / static_cast<double>(top));
}

namespace {

SimTime probe_window(const Scenario& s) {
  // Zombie probe crosses the NAT at +inside; the resolver's query at
  // +gap + zombie->resolver + inside.
  return std::chrono::milliseconds{1} + 2 * s.network.inside_latency;
}

ZoneConfig planned_zone(const Scenario& s) {
  ZoneConfig z{s.zone_apex, {}};
  for (std::size_t i = 0; i < s.ns_count; ++i) {
    z.ns_ips.push_back(hosts::name_server(i));
  }
  return z;
}

} // namespace

PlannedAttack plan_attack(const Scenario& s) {
  PlannedAttack p;
  Rng rng(s.seed);
  p.example_trigger = make_trigger(s.plan.trigger, s.zone_apex, rng);

  NatOutcome nat{PortUnknown{}, s.network.policy, s.network.pool};
  const auto kind = s.network.policy.kind;
  switch (s.plan.port_strategy) {
  case PortStrategy::None:
    break;
  case PortStrategy::Trap:
    if (kind == PolicyKind::DefendedRestrictedRandom) {
      p.trap_infeasible = true;
    } else {
      nat.knowledge = Trapped{};
    }
    break;
  case PortStrategy::Predict:
    if (s.attacker.knows_nat_policy && kind == PolicyKind::Sequential) {
      const double window = std::chrono::duration<double>(probe_window(s)).count();
      p.confidence = std::exp(-s.network.cross_traffic_rate * window);
      nat.knowledge = Predicted{0, p.confidence};
    } else if (s.attacker.knows_nat_policy && kind == PolicyKind::Preserving && !s.resolver.randomize_port) {
      nat.knowledge = Predicted{s.resolver.fixed_port, 1.0};
    }
    break;
  }
  p.refused = s.resolver.prefix_len > 0 && s.resolver.restrict_max_length_queries &&
              !prefix_applies(s.resolver, p.example_trigger);
  p.space = effective_search_space(s.resolver, nat, planned_zone(s), p.example_trigger, s.attacker.ns_ip_derandomized);

  const auto& sp = p.space;
  const double joint = static_cast<double>(sp.txid_factor) * static_cast<double>(sp.port_factor) *
                       static_cast<double>(sp.ip_factor) * static_cast<double>(sp.case_factor);
  const double budget = static_cast<double>(s.attacker.spoof_budget_per_round);
  p.guesses_per_round = static_cast<std::size_t>(s.attacker.distinct_guesses ? std::min(budget, joint) : budget);
  return p;
}

double planned_success(const Scenario& s, const PlannedAttack& p) {
  if (p.trap_infeasible || p.refused) {
    return 0.0;
  }
  return analytic_success(p.space.n, static_cast<double>(p.guesses_per_round), s.plan.rounds,
                          s.attacker.distinct_guesses, p.confidence);
}

Metrics run_scenario(const Scenario& s, const RunOptions& opts) {
  s.validate();
  const PlannedAttack planned = plan_attack(s);

  Metrics m;
  m.scenario = s.name;
  m.space = planned.space;
  m.trials = s.trials;
  m.trap_infeasible = 0;
  m.analytic = planned_success(s, planned);

  const SimTime spacing = std::max(s.plan.round_interval, s.network.nat_timeout + std::chrono::seconds{1});
  const SimTime horizon = spacing * static_cast<std::int64_t>(s.plan.rounds + 2);

  std::vector<Port> ports;
  double rounds_sum = 0.0;
  double packets_sum = 0.0;
  for (std::size_t i = 0; i < s.trials; ++i) {
    const std::uint64_t trial_seed = derive_seed(s.seed, i);
    Testbed bed(s.network, s.resolver, s.zone_apex, s.ns_count, trial_seed);
    const bool trace_this = (opts.trace && i == 0) || opts.audit;
    bed.net().enable_trace(trace_this);
    bed.start_cross_traffic(horizon);

    Rng rng(derive_seed(trial_seed, Stream::Attacker));
    const AttackResult r = kaminsky_attack(s.plan, s.attacker, bed, rng);

    if (r.success) {
      ++m.successes;
      rounds_sum += static_cast<double>(r.rounds_used);
      packets_sum += static_cast<double>(r.packets_sent);
    }
    m.trap_infeasible += r.trap_infeasible ? 1 : 0;
    m.prefix_skipped += bed.resolver().stats().prefix_skipped;
    const auto& observed = bed.resolver_external_ports();
    ports.insert(ports.end(), observed.begin(), observed.end());

    if (opts.audit) {
      m.off_path_violations += bed.off_path_violations();
      m.nat_crossing_violations += bed.nat_crossing_violations();
    }
    if (opts.trace && i == 0) {
      for (const auto& rec : bed.net().trace()) {
        *opts.trace << format_trace_line(rec) << '\n';
      }
    }
  }

  const auto trials = static_cast<double>(s.trials);
  m.success_rate = static_cast<double>(m.successes) / trials;
  m.stderr_rate = std::sqrt(m.success_rate * (1.0 - m.success_rate) / trials);
  if (m.successes > 0) {
    m.rounds_mean = rounds_sum / static_cast<double>(m.successes);
    m.packets_mean = packets_sum / static_cast<double>(m.successes);
  }
  m.port_samples = ports.size();
  if (ports.size() >= kMinEntropySamples) {
    m.port_minentropy_bits = min_entropy_estimate(ports);
  }
  return m;
}

std::string explain(const Scenario& s) {
  const PlannedAttack p = plan_attack(s);
  const auto& sp = p.space;
  std::string port_note = "unknown";
  switch (s.plan.port_strategy) {
  case PortStrategy::None:
    break;
  case PortStrategy::Trap:
    port_note = p.trap_infeasible ? "trap infeasible, table capped" : "trapped";
    break;
  case PortStrategy::Predict:
    port_note = sp.port_factor == 1 ? fmt::format("predicted, confidence {:.4f}", p.confidence) : "unpredictable";
    break;
  }
  if (s.plan.port_strategy == PortStrategy::None && sp.port_factor == 1) {
    port_note = "fixed";
  }
  const bool prefix_on = s.resolver.prefix_len > 0;
  const std::string prefix_note =
      !prefix_on ? "disabled" : (sp.prefix_factor > 1.0 ? fmt::format("36^{}", s.resolver.prefix_len) : "skipped, query at maximal size");

  std::string out;
  out += fmt::format("scenario        {}\n", s.name);
  out += fmt::format("target zone     {}\n", s.zone_apex.to_string());
  out += fmt::format("nat policy      {} (pool {}-{})\n", to_string(s.network.policy.kind), s.network.pool.lo,
                     s.network.pool.hi);
  out += fmt::format("trigger         {} e.g. {} ({} wire bytes)\n", to_string(s.plan.trigger),
                     p.example_trigger.to_string(), p.example_trigger.wire_length());
  out += fmt::format("txid factor     {}\n", sp.txid_factor);
  out += fmt::format("port factor     {} ({})\n", sp.port_factor, port_note);
  out += fmt::format("ip factor       {}{}\n", sp.ip_factor, s.attacker.ns_ip_derandomized ? " (server pinned)" : "");
  out += fmt::format("case factor     {}\n", sp.case_factor);
  out += fmt::format("prefix factor   {:.6g} ({})\n", sp.prefix_factor, prefix_note);
  out += fmt::format("N               {:.6g} ({:.2f} bits)\n", sp.n, sp.bits());
  out += fmt::format("guesses/round   {} x {} rounds ({})\n", p.guesses_per_round, s.plan.rounds,
                     s.attacker.distinct_guesses ? "distinct" : "independent");
  if (p.refused) {
    out += "note            resolver refuses maximal-size queries; the trigger never leaves\n";
  }
  out += fmt::format("analytic        {:.6f}\n", planned_success(s, p));
  return out;
}

} // namespace derand
