#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>

#include "derand/dns.hpp"
#include "derand/nat.hpp"
#include "derand/resolver.hpp"
#include "derand/rng.hpp"

namespace derand {

class Testbed;

struct Capabilities {
  std::size_t spoof_budget_per_round = 512;
  bool zombie_present = true;
  bool knows_nat_policy = true;
  /// The resolver has been forced to query one specific name server. The
  /// mechanism (fragmented responses) is not simulated; only its effect is.
  bool ns_ip_derandomized = false;
  /// Forged guesses within a round never repeat.
  bool distinct_guesses = true;
};

/// How each round's trigger name is built.
enum class TriggerStrategy : std::uint8_t {
  /// Fresh random 8-letter label under the target zone.
  RandomLabel,
  /// Fresh all-digit label under the target zone.
  Numeric,
  /// Maximal-size all-digit name: no room left for a random prefix.
  MaxNumeric,
};

enum class PortStrategy : std::uint8_t { None, Trap, Predict };

struct PortUnknown {
  friend bool operator==(const PortUnknown&, const PortUnknown&) = default;
};
struct Trapped {
  Port port = 0;
  friend bool operator==(const Trapped&, const Trapped&) = default;
};
struct Predicted {
  Port port = 0;
  double confidence = 1.0;
  friend bool operator==(const Predicted&, const Predicted&) = default;
};
struct Infeasible {
  std::string why;
};

using PortKnowledge = std::variant<PortUnknown, Trapped, Predicted>;
using TrapOutcome = std::variant<Trapped, Predicted, Infeasible>;

struct AttackPlan {
  DomainName target_zone;
  TriggerStrategy trigger = TriggerStrategy::RandomLabel;
  PortStrategy port_strategy = PortStrategy::None;
  std::size_t rounds = 1;
  /// Spacing of rounds that do not wait for a trapped binding to lapse.
  SimTime round_interval = std::chrono::milliseconds{200};

  void validate() const;
};

/// Size of the identifier space a blind forger has to cover.
struct SearchSpace {
  std::uint64_t txid_factor = 1;
  std::uint64_t port_factor = 1;
  std::uint64_t ip_factor = 1;
  std::uint64_t case_factor = 1;
  /// 36^prefix_len while a random prefix is applied, else 1.
  double prefix_factor = 1.0;
  /// Product of all factors.
  double n = 1.0;

  double bits() const;
};

/// What the attacker knows about the resolver's external port.
struct NatOutcome {
  PortKnowledge knowledge = PortUnknown{};
  /// nullopt: the resolver is not behind a NAT.
  std::optional<AllocationPolicy> policy;
  PortPool pool;
};

/// External ports a forger must cover for one query.
std::uint64_t candidate_ports(const PatchConfig& patches, const NatOutcome& nat);

/// Whether a prefix of the configured length still fits on `trigger`.
bool prefix_applies(const PatchConfig& patches, const DomainName& trigger);

SearchSpace effective_search_space(const PatchConfig& patches, const NatOutcome& nat, const ZoneConfig& zone,
                                   const DomainName& trigger, bool ns_ip_derandomized);

struct TrapRequest {
  HostId zombie{};
  /// Ports the fill must leave unbound; empty means "any single port".
  std::set<Port> leave_free;
  /// For a port-preserving NAT: the resolver's known source port. The zombie
  /// then occupies only that port and predicts the fallback.
  std::optional<Port> resolver_port;
  bool knows_nat_policy = true;
};

/// Zombie fills the mapping table so that the resolver's next flow can only
/// land on one port. Works against any table that lets one host take the
/// whole pool; a capped table leaves too many ports open and the plan
/// reports Infeasible. The zombie learns only the ports of its own flows.
TrapOutcome plan_trap(MappingTable& table, const TrapRequest& request, SimTime now, Rng& rng);

class UnpredictablePolicy : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

struct PredictRequest {
  Port observed_external_port = 0;
  AllocationPolicy policy;
  PortPool pool;
  /// Other inside flows per second that may consume the next port.
  double cross_traffic_rate = 0.0;
  /// Time between the observed flow and the resolver's flow.
  SimTime window = std::chrono::milliseconds{1};
  std::optional<Port> resolver_internal_port;
  bool knows_nat_policy = true;
};

/// Next external port after one observed binding. Throws UnpredictablePolicy
/// for randomising NATs or when the policy is unknown.
Predicted plan_predict(const PredictRequest& request);

/// Trigger with the fewest letters under `goal_zone`: one fresh random
/// all-digit label on top of the apex.
DomainName choose_target_name(const DomainName& goal_zone, Rng& rng);

/// Fresh random lowercase label (Kaminsky-style nonexistent name).
DomainName random_label_name(const DomainName& goal_zone, Rng& rng, std::size_t length = 8);

/// max_numeric_query(goal_tld) with its digits randomised, same label sizes.
DomainName fresh_max_numeric_query(const DomainName& goal_tld, Rng& rng);

DomainName make_trigger(TriggerStrategy s, const DomainName& zone, Rng& rng);

/// The zombie's query for max_numeric_query(goal_tld), addressed to the
/// resolver.
DnsMessage block_prefix(const DomainName& goal_tld, HostId zombie, HostId resolver);

struct AttackResult {
  bool success = false;
  std::size_t rounds_used = 0;
  std::size_t packets_sent = 0;
  bool trap_infeasible = false;
  PortKnowledge knowledge = PortUnknown{};
};

/// Runs Kaminsky-style rounds against the testbed's resolver.
///
/// Each round the zombie triggers a query for a fresh name in the target
/// zone and the attacker bursts spoof_budget_per_round forged responses
/// carrying an NS record and glue for the zone. Success means the
/// resolver's server list for the zone now points at the attacker.
AttackResult kaminsky_attack(const AttackPlan& plan, const Capabilities& caps, Testbed& bed, Rng& rng);

std::string_view to_string(TriggerStrategy s);
std::string_view to_string(PortStrategy s);

} // namespace derand
