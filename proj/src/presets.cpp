#include <functional>
#include <string>

#include "derand/experiments.hpp"

namespace derand {

namespace {

struct PresetEntry {
  std::string_view name;
  std::string_view summary;
  std::function<Scenario()> build;
};

Scenario unpatched_baseline() {
  Scenario s;
  s.name = "unpatched-baseline";
  s.resolver = PatchConfig::unpatched();
  s.resolver.randomize_txid = true;
  s.network.policy = AllocationPolicy::preserving();
  s.zone_apex = DomainName::parse("com");
  s.ns_count = 1;
  s.attacker.spoof_budget_per_round = 512;
  s.plan = AttackPlan{s.zone_apex, TriggerStrategy::RandomLabel, PortStrategy::None, 100};
  s.trials = 2000;
  s.seed = 20080701;
  return s;
}

/// Rung `step` of the ladder against the root zone: 0 all patches, then
/// trap the port, pin the server, numeric trigger, maximal-size trigger.
Scenario ladder(int step) {
  static constexpr std::string_view names[] = {"ladder-0-all-patches", "ladder-1-trap", "ladder-2-ip-pin",
                                               "ladder-3-numeric-trigger", "ladder-4-prefix-block"};
  Scenario s;
  s.name = std::string(names[step]);
  s.resolver = PatchConfig::all_patches(12);
  s.network.policy = AllocationPolicy::random_unrestricted();
  s.zone_apex = DomainName{};
  s.ns_count = 2;
  s.attacker.spoof_budget_per_round = 16384;
  s.attacker.ns_ip_derandomized = step >= 2;
  const TriggerStrategy trigger =
      step >= 4 ? TriggerStrategy::MaxNumeric : (step >= 3 ? TriggerStrategy::Numeric : TriggerStrategy::RandomLabel);
  s.plan = AttackPlan{s.zone_apex, trigger, step >= 1 ? PortStrategy::Trap : PortStrategy::None, 2};
  s.trials = step >= 4 ? 300 : 10;
  s.seed = 20080702 + static_cast<std::uint64_t>(step);
  return s;
}

Scenario com_prefix_block() {
  Scenario s = ladder(4);
  s.name = "com-prefix-block";
  s.zone_apex = DomainName::parse("com");
  s.plan.target_zone = s.zone_apex;
  s.trials = 50;
  return s;
}

Scenario trap_vs_defended() {
  Scenario s = ladder(1);
  s.name = "trap-vs-defended";
  s.network.policy = AllocationPolicy::defended();
  s.trials = 20;
  s.seed = 20080710;
  return s;
}

Scenario predict_sequential() {
  Scenario s;
  s.name = "predict-sequential";
  s.resolver = PatchConfig::all_patches(0);
  s.network.policy = AllocationPolicy::sequential(1);
  s.zone_apex = DomainName::parse("com");
  s.ns_count = 1;
  s.attacker.spoof_budget_per_round = 4096;
  s.plan = AttackPlan{s.zone_apex, TriggerStrategy::Numeric, PortStrategy::Predict, 20};
  s.trials = 200;
  s.seed = 20080711;
  return s;
}

const std::vector<PresetEntry>& table() {
  static const std::vector<PresetEntry> entries = {
      {"unpatched-baseline", "random txid only: fixed port, one server, no 0x20 (N = 2^16)", unpatched_baseline},
      {"ladder-0-all-patches", "every patch on, random NAT, no attacker tricks", [] { return ladder(0); }},
      {"ladder-1-trap", "+ trap the resolver's external port", [] { return ladder(1); }},
      {"ladder-2-ip-pin", "+ resolver pinned to one name server", [] { return ladder(2); }},
      {"ladder-3-numeric-trigger", "+ all-digit trigger name (no 0x20 entropy)", [] { return ladder(3); }},
      {"ladder-4-prefix-block", "+ maximal-size trigger so no random prefix fits", [] { return ladder(4); }},
      {"com-prefix-block", "final ladder rung aimed at com (3 letters of 0x20 remain)", com_prefix_block},
      {"trap-vs-defended", "trap attempt against a half-capacity random NAT", trap_vs_defended},
      {"predict-sequential", "predict the next port of a sequential NAT", predict_sequential},
  };
  return entries;
}

const PresetEntry& find(std::string_view name) {
  for (const auto& e : table()) {
    if (e.name == name) {
      return e;
    }
  }
  throw ConfigError("preset: unknown preset '" + std::string(name) + "'");
}

} // namespace

std::vector<std::string> preset_names() {
  std::vector<std::string> out;
  for (const auto& e : table()) {
    out.emplace_back(e.name);
  }
  return out;
}

std::string preset_summary(std::string_view name) { return std::string(find(name).summary); }

Scenario preset(std::string_view name) { return find(name).build(); }

} // namespace derand
