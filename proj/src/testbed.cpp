#include "derand/testbed.hpp"

#include <algorithm>
#include <fmt/format.h>

namespace derand {

Testbed::Testbed(const TopologyConfig& topo, const PatchConfig& patches, const DomainName& zone_apex,
                 std::size_t ns_count, std::uint64_t trial_seed)
    : topo_(topo), resolver_rng_(derive_seed(trial_seed, Stream::Resolver)),
      cross_rng_(derive_seed(trial_seed, Stream::CrossTraffic)) {
  if (ns_count == 0) {
    throw std::invalid_argument("zone needs at least one name server");
  }
  zone_.apex = zone_apex;
  for (std::size_t i = 0; i < ns_count; ++i) {
    zone_.ns_ips.push_back(hosts::name_server(i));
  }

  net_ = std::make_unique<Network>(hosts::kNat, MappingTable(topo.pool, topo.policy, topo.nat_timeout), trial_seed,
                                   topo.loss);
  resolver_ = std::make_unique<Resolver>(hosts::kResolver, patches, std::vector<ZoneConfig>{zone_});

  auto& n = *net_;
  n.add_host(hosts::kResolver, Side::Inside, "resolver", topo.inside_latency);
  n.add_host(hosts::kZombie, Side::Inside, "zombie", topo.inside_latency);
  n.add_host(hosts::kCrossTraffic, Side::Inside, "cross", topo.inside_latency);
  for (std::size_t i = 0; i < ns_count; ++i) {
    n.add_host(hosts::name_server(i), Side::Outside, fmt::format("ns{}", i), topo.ns_latency);
  }
  n.add_host(hosts::kAttacker, Side::Outside, "attacker", topo.attacker_latency, /*may_spoof=*/true);
  n.add_host(hosts::kEcho, Side::Outside, "echo", topo.attacker_latency);
  n.add_host(hosts::kInternet, Side::Outside, "internet", topo.ns_latency);

  n.set_handler(hosts::kResolver, [this](const DnsMessage& m) { on_resolver_packet(m); });
  for (std::size_t i = 0; i < ns_count; ++i) {
    const HostId self = hosts::name_server(i);
    n.set_handler(self, [this, self](const DnsMessage& m) { on_server_packet(self, m); });
  }
  n.set_handler(hosts::kEcho, [this](const DnsMessage& m) { on_echo_packet(m); });
  n.set_handler(hosts::kZombie, [this](const DnsMessage& m) {
    if (m.kind == MessageKind::Probe && m.echoed_port && echo_listener_) {
      echo_listener_(m.dst_port, *m.echoed_port);
    }
  });

  n.on_nat_outbound([this](HostId origin, const DnsMessage& m) {
    if (origin == hosts::kResolver && m.kind == MessageKind::Query) {
      resolver_ports_.push_back(m.src_port);
    }
  });
}

void Testbed::on_resolver_packet(const DnsMessage& m) {
  auto& net = *net_;
  const SimTime now = net.now();
  if (m.kind == MessageKind::Query) {
    if (resolver_->negatively_cached(m.qname, now) || resolver_->lookup(m.qname, m.qtype, now)) {
      return;
    }
    auto result = resolver_->issue_query(m.qname, m.qtype, now, resolver_rng_);
    if (auto* issued = std::get_if<Issued>(&result)) {
      const SimTime deadline = issued->pending.deadline;
      net.send(hosts::kResolver, std::move(issued->query));
      net.schedule(deadline, [this] { resolver_->handle_timeout(net_->now()); });
    }
  } else if (m.kind == MessageKind::Response) {
    resolver_->accept_response(m, now);
  }
}

void Testbed::on_server_packet(HostId self, const DnsMessage& m) {
  if (m.kind != MessageKind::Query) {
    return;
  }
  DnsMessage r = DnsMessage::response_to(m);
  r.src_ip = self;
  r.nxdomain = true;
  r.authentic = true;
  if (topo_.servers_fold_case) {
    r.qname = r.qname.folded();
  }
  net_->send(self, std::move(r));
}

void Testbed::on_echo_packet(const DnsMessage& m) {
  if (m.kind != MessageKind::Probe || m.dst_port != kEchoPort) {
    return;
  }
  DnsMessage reply = DnsMessage::probe(hosts::kEcho, kEchoPort, m.src_ip, m.src_port);
  reply.echoed_port = m.src_port;
  net_->send(hosts::kEcho, std::move(reply));
}

void Testbed::zombie_query(const DomainName& name) {
  net_->send(hosts::kZombie,
             DnsMessage::query(hosts::kZombie, 40000, hosts::kResolver, kDnsPort, 0, name, RecordType::A));
}

void Testbed::zombie_probe(Port internal_port, bool want_echo) {
  net_->send(hosts::kZombie,
             DnsMessage::probe(hosts::kZombie, internal_port, hosts::kEcho, want_echo ? kEchoPort : kDiscardPort));
}

void Testbed::attacker_send(DnsMessage packet) { net_->send(hosts::kAttacker, std::move(packet)); }

void Testbed::start_cross_traffic(SimTime until) {
  if (topo_.cross_traffic_rate > 0.0) {
    schedule_cross(until);
  }
}

void Testbed::schedule_cross(SimTime until) {
  const double gap_s = cross_rng_.exponential(topo_.cross_traffic_rate);
  const auto at = net_->now() + SimTime{static_cast<std::int64_t>(gap_s * 1e6) + 1};
  if (at > until) {
    return;
  }
  net_->schedule(at, [this, until] {
    const Port port = cross_next_port_;
    cross_next_port_ = cross_next_port_ == 65535 ? 1024 : static_cast<Port>(cross_next_port_ + 1);
    net_->send(hosts::kCrossTraffic, DnsMessage::probe(hosts::kCrossTraffic, port, hosts::kInternet, kDiscardPort));
    schedule_cross(until);
  });
}

bool Testbed::attacker_controlled(HostId h) const {
  return h == hosts::kAttacker || h == hosts::kEcho;
}

std::size_t Testbed::off_path_violations() const {
  std::size_t bad = 0;
  for (const auto& r : net_->trace()) {
    const bool from_victim_side =
        r.origin == hosts::kResolver ||
        std::find(zone_.ns_ips.begin(), zone_.ns_ips.end(), r.origin) != zone_.ns_ips.end();
    if (from_victim_side && attacker_controlled(r.receiver)) {
      ++bad;
    }
  }
  return bad;
}

std::size_t Testbed::nat_crossing_violations() const {
  std::size_t bad = 0;
  for (const auto& r : net_->trace()) {
    const auto from = net_->side_of(r.origin);
    const auto to = net_->side_of(r.receiver);
    const unsigned expected = (from && to && *from != *to) ? 1u : 0u;
    if (r.nat_crossings != expected) {
      ++bad;
    }
  }
  return bad;
}

} // namespace derand
