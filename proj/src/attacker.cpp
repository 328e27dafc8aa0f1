#include "derand/attacker.hpp"

#include <algorithm>
#include <cmath>
#include <fmt/format.h>
#include <vector>

namespace derand {

void AttackPlan::validate() const {
  if (rounds < 1) {
    throw std::invalid_argument("attack needs at least one round");
  }
  if (round_interval <= SimTime::zero()) {
    throw std::invalid_argument("round interval must be positive");
  }
}

double SearchSpace::bits() const { return std::log2(n); }

std::uint64_t candidate_ports(const PatchConfig& patches, const NatOutcome& nat) {
  if (!std::holds_alternative<PortUnknown>(nat.knowledge)) {
    return 1;
  }
  const std::uint64_t resolver_ports = patches.randomize_port ? patches.ephemeral_size() : 1;
  if (!nat.policy || nat.policy->kind == PolicyKind::Preserving) {
    return resolver_ports;
  }
  return nat.pool.size();
}

bool prefix_applies(const PatchConfig& patches, const DomainName& trigger) {
  return patches.prefix_len > 0 && trigger.wire_length() + patches.prefix_len + 1 <= kMaxWireLength;
}

SearchSpace effective_search_space(const PatchConfig& patches, const NatOutcome& nat, const ZoneConfig& zone,
                                   const DomainName& trigger, bool ns_ip_derandomized) {
  SearchSpace s;
  s.txid_factor = patches.randomize_txid ? (1u << 16) : 1;
  s.port_factor = candidate_ports(patches, nat);
  s.ip_factor = (patches.randomize_ns_ip && !ns_ip_derandomized) ? zone.ns_ips.size() : 1;
  s.case_factor = patches.use_0x20 ? case_entropy_factor(trigger) : 1;
  // The attacker's best single guess at a prefix character is one specific
  // digit (probability 1/36), whatever the 0x20 coin does to letters.
  s.prefix_factor = prefix_applies(patches, trigger) ? std::pow(36.0, static_cast<double>(patches.prefix_len)) : 1.0;
  s.n = static_cast<double>(s.txid_factor) * static_cast<double>(s.port_factor) *
        static_cast<double>(s.ip_factor) * static_cast<double>(s.case_factor) * s.prefix_factor;
  return s;
}

TrapOutcome plan_trap(MappingTable& table, const TrapRequest& request, SimTime now, Rng& rng) {
  const PortPool& pool = table.pool();
  table.release_expired(now);

  if (request.resolver_port) {
    // Port-preserving NAT: occupy the resolver's port and let it fall back.
    const Port preferred = *request.resolver_port;
    Port got = 0;
    try {
      got = table.allocate(request.zombie, preferred, now, rng);
    } catch (const AllocationFailure& e) {
      return Infeasible{fmt::format("zombie flow refused: {}", e.what())};
    }
    if (got != preferred) {
      return Infeasible{"gateway does not preserve ports"};
    }
    if (!request.knows_nat_policy || table.policy().fallback != PreservingFallback::SequentialScan) {
      return Infeasible{"fallback allocation is not predictable"};
    }
    // Next port upward that the zombie does not hold itself.
    for (std::size_t step = 1; step < pool.size(); ++step) {
      const Port p = pool.at((pool.offset_of(got) + step) % pool.size());
      const auto b = table.find_external(p);
      if (!b || b->internal_host != request.zombie) {
        return Predicted{p, 1.0};
      }
    }
    return Infeasible{"no port left for the resolver"};
  }

  if (request.leave_free.size() > 1) {
    return Infeasible{"a trap leaves exactly one port"};
  }

  // Internal ports follow the pool order, skipping the port to leave free,
  // so that a preserving gateway maps them one to one.
  std::vector<Port> internal;
  internal.reserve(pool.size());
  for (std::size_t off = 0; off < pool.size(); ++off) {
    const Port p = pool.at(off);
    if (!request.leave_free.contains(p)) {
      internal.push_back(p);
    }
  }
  for (const Port p : request.leave_free) {
    internal.push_back(p);
  }

  std::vector<bool> held(pool.size(), false);
  std::size_t held_count = 0;
  std::vector<Port> zombie_ports;
  const std::size_t target = request.leave_free.empty() ? pool.size() - 1 : pool.size();
  for (std::size_t i = 0; i < internal.size() && held_count < target; ++i) {
    if (table.find_flow(request.zombie, internal[i])) {
      continue;
    }
    Port ext = 0;
    try {
      ext = table.allocate(request.zombie, internal[i], now, rng);
    } catch (const AllocationFailure&) {
      break;
    }
    zombie_ports.push_back(ext);
    held[pool.offset_of(ext)] = true;
    ++held_count;
  }

  // Let the flows on the ports to leave free lapse.
  for (const Port p : request.leave_free) {
    if (pool.contains(p) && held[pool.offset_of(p)]) {
      table.release(p);
      held[pool.offset_of(p)] = false;
      --held_count;
    }
  }

  const std::size_t open = pool.size() - held_count;
  if (open != 1) {
    return Infeasible{fmt::format("{} ports remain open after the fill ({} held)", open, held_count)};
  }
  for (std::size_t off = 0; off < pool.size(); ++off) {
    if (!held[off]) {
      return Trapped{pool.at(off)};
    }
  }
  return Infeasible{"no open port"};
}

Predicted plan_predict(const PredictRequest& r) {
  if (!r.knows_nat_policy) {
    throw UnpredictablePolicy("gateway policy unknown");
  }
  switch (r.policy.kind) {
  case PolicyKind::Sequential: {
    if (!r.pool.contains(r.observed_external_port)) {
      throw std::invalid_argument("observed port outside pool");
    }
    const auto next = (r.pool.offset_of(r.observed_external_port) + r.policy.increment) % r.pool.size();
    const double seconds = std::chrono::duration<double>(r.window).count();
    return Predicted{r.pool.at(next), std::exp(-r.cross_traffic_rate * seconds)};
  }
  case PolicyKind::Preserving:
    if (!r.resolver_internal_port) {
      throw UnpredictablePolicy("resolver source port unknown");
    }
    return Predicted{*r.resolver_internal_port, 1.0};
  case PolicyKind::RandomUnrestricted:
  case PolicyKind::DefendedRestrictedRandom:
    break;
  }
  throw UnpredictablePolicy(fmt::format("{} allocation cannot be predicted", to_string(r.policy.kind)));
}

DomainName choose_target_name(const DomainName& goal_zone, Rng& rng) {
  std::string label(7, '0');
  label[0] = static_cast<char>('1' + rng.uniform(9));
  for (std::size_t i = 1; i < label.size(); ++i) {
    label[i] = static_cast<char>('0' + rng.uniform(10));
  }
  return goal_zone.prepend(std::move(label));
}

DomainName random_label_name(const DomainName& goal_zone, Rng& rng, std::size_t length) {
  std::string label(length, 'a');
  for (auto& c : label) {
    c = static_cast<char>('a' + rng.uniform(26));
  }
  return goal_zone.prepend(std::move(label));
}

DomainName fresh_max_numeric_query(const DomainName& goal_tld, Rng& rng) {
  const DomainName shape = max_numeric_query(goal_tld);
  std::vector<std::string> labels = shape.labels();
  const auto numeric = labels.size() - goal_tld.labels().size();
  for (std::size_t i = 0; i < numeric; ++i) {
    for (auto& c : labels[i]) {
      c = static_cast<char>('0' + rng.uniform(10));
    }
  }
  return DomainName(std::move(labels));
}

DomainName make_trigger(TriggerStrategy s, const DomainName& zone, Rng& rng) {
  switch (s) {
  case TriggerStrategy::RandomLabel:
    return random_label_name(zone, rng);
  case TriggerStrategy::Numeric:
    return choose_target_name(zone, rng);
  case TriggerStrategy::MaxNumeric:
    return fresh_max_numeric_query(zone, rng);
  }
  return zone;
}

DnsMessage block_prefix(const DomainName& goal_tld, HostId zombie, HostId resolver) {
  return DnsMessage::query(zombie, 40000, resolver, 53, 0, max_numeric_query(goal_tld), RecordType::A);
}

std::string_view to_string(TriggerStrategy s) {
  switch (s) {
  case TriggerStrategy::RandomLabel:
    return "random-label";
  case TriggerStrategy::Numeric:
    return "numeric";
  case TriggerStrategy::MaxNumeric:
    return "max-numeric";
  }
  return "?";
}

std::string_view to_string(PortStrategy s) {
  switch (s) {
  case PortStrategy::None:
    return "none";
  case PortStrategy::Trap:
    return "trap";
  case PortStrategy::Predict:
    return "predict";
  }
  return "?";
}

} // namespace derand
