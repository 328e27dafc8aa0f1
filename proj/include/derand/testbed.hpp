#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <vector>

#include "derand/nat.hpp"
#include "derand/resolver.hpp"
#include "derand/simnet.hpp"

namespace derand {

/// Fixed addresses of the standard topology.
namespace hosts {
inline constexpr HostId kResolver = host(1);
inline constexpr HostId kZombie = host(2);
inline constexpr HostId kCrossTraffic = host(3);
inline constexpr HostId kNat = host(10);
inline constexpr std::uint32_t kFirstNameServer = 20;
inline constexpr HostId kAttacker = host(100);
inline constexpr HostId kEcho = host(101);
inline constexpr HostId kInternet = host(102);
/// Address the attacker's forged glue points at.
inline constexpr HostId kAttackerNameServer = host(103);

constexpr HostId name_server(std::size_t i) { return host(kFirstNameServer + static_cast<std::uint32_t>(i)); }
} // namespace hosts

inline constexpr Port kEchoPort = 7;
inline constexpr Port kDiscardPort = 9;
inline constexpr Port kDnsPort = 53;

struct TopologyConfig {
  PortPool pool;
  AllocationPolicy policy;
  SimTime nat_timeout = kDefaultBindingTimeout;
  /// Inside host to gateway, one way.
  SimTime inside_latency = std::chrono::microseconds{100};
  /// Gateway to each name server, one way.
  SimTime ns_latency = std::chrono::milliseconds{50};
  /// Gateway to the attacker and its echo host, one way.
  SimTime attacker_latency = std::chrono::milliseconds{5};
  double loss = 0.0;
  /// Independent inside flows per simulated second (Poisson).
  double cross_traffic_rate = 0.0;
  /// Authentic servers lower-case the question name in answers.
  bool servers_fold_case = false;
};

/// The standard resolver-behind-NAT scene: resolver, zombie and a
/// cross-traffic host inside; name servers, attacker, echo host and a
/// generic internet sink outside.
///
/// Authentic servers answer every query with a negative answer, since the
/// attack's trigger names never exist. The attacker learns nothing except
/// what reaches its own hosts: echo replies to zombie probes.
class Testbed {
public:
  Testbed(const TopologyConfig& topo, const PatchConfig& patches, const DomainName& zone_apex,
          std::size_t ns_count, std::uint64_t trial_seed);

  Testbed(const Testbed&) = delete;
  Testbed& operator=(const Testbed&) = delete;

  Network& net() { return *net_; }
  Resolver& resolver() { return *resolver_; }
  const ZoneConfig& original_zone() const { return zone_; }

  /// Zombie asks the resolver for `name` (inside traffic, no NAT).
  void zombie_query(const DomainName& name);
  /// Zombie opens or refreshes the flow from `internal_port` towards the echo
  /// host; with `want_echo` the echo host reports the mapped port.
  void zombie_probe(Port internal_port, bool want_echo);
  /// Attacker emits a packet; it may carry any source address.
  void attacker_send(DnsMessage packet);

  /// Called with (zombie internal port, external port seen by echo host).
  void on_echo(std::function<void(Port, Port)> fn) { echo_listener_ = std::move(fn); }

  /// Cross traffic runs from now until `until`.
  void start_cross_traffic(SimTime until);

  /// External ports the NAT assigned to the resolver's outbound queries.
  const std::vector<Port>& resolver_external_ports() const { return resolver_ports_; }

  /// Trace audit: packets from the resolver or an authentic server that
  /// reached an attacker-controlled host.
  std::size_t off_path_violations() const;
  /// Trace audit: deliveries whose NAT crossing count does not match the
  /// sides of origin and receiver.
  std::size_t nat_crossing_violations() const;

private:
  void on_resolver_packet(const DnsMessage& m);
  void on_server_packet(HostId self, const DnsMessage& m);
  void on_echo_packet(const DnsMessage& m);
  void schedule_cross(SimTime until);
  bool attacker_controlled(HostId h) const;

  TopologyConfig topo_;
  ZoneConfig zone_;
  std::unique_ptr<Network> net_;
  std::unique_ptr<Resolver> resolver_;
  Rng resolver_rng_;
  Rng cross_rng_;
  Port cross_next_port_ = 1024;
  std::vector<Port> resolver_ports_;
  std::function<void(Port, Port)> echo_listener_;
};

} // namespace derand
